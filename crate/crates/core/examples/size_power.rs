//! Rejection rates of the four statistics under the null and with an
//! injected effect.
//!
//!     cargo run --release --example size_power -- [reps]

use evstud::sim::{run_size_power, write_size_power_tsv, SimConfig};
use evstud::stats::LeverageRule;

fn main() -> evstud::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let null = SimConfig {
        n_reps: reps,
        leverage: LeverageRule::Forecast,
        ..SimConfig::default()
    };
    let scenarios = [
        ("null, independent", null.clone()),
        ("null, clustered, rho 0.05", SimConfig { rho: 0.05, events_clustered: true, event_var_multiplier: 1.5, ..null.clone() }),
        ("injected -0.8%", SimConfig { rho: 0.012, event_var_multiplier: 1.5, injected_car: -0.008, ..null.clone() }),
    ];
    let mut out = std::io::stdout().lock();
    for (name, config) in scenarios {
        println!("# {name} ({reps} reps)");
        write_size_power_tsv(&mut out, &run_size_power(&config)?)?;
    }
    Ok(())
}
