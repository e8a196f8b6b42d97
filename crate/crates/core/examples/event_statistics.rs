//! The test statistics on small hand-checkable inputs.

use evstud::stats::{adj_bmp, adj_patell, sar_variance, unadjusted_t};

fn main() -> evstud::Result<()> {
    let scaled = [2.0, 1.0, 0.0, 1.0];
    for r_bar in [0.0, 0.05, 0.2] {
        let v = sar_variance(&scaled, r_bar)?;
        println!(
            "r_bar {r_bar:.2}: s2 {:.5}, s_A2 {:.5}, ADJ-BMP {:.5}",
            v.s2,
            v.sa2,
            adj_bmp(&scaled, r_bar)?
        );
    }
    // Patell scaling with 103 regression days and 3 factors.
    let unit = [1.0; 4];
    println!("ADJ-PATELL (m 103, p 3): {:.5}", adj_patell(&unit, 0.0, 103, 3)?);
    println!("ADJ-PATELL with r_bar 0.05: {:.5}", adj_patell(&unit, 0.05, 103, 3)?);

    let cars = [-0.021, 0.004, -0.013, -0.008, 0.002, -0.017];
    println!("unadjusted t of {cars:?}: {:.4}", unadjusted_t(&cars)?);
    Ok(())
}
