//! Average and cumulative average abnormal returns over the eleven days
//! around the events, for OLS and SUR.

use evstud::fixture::{study_fixture, FixtureConfig};
use evstud::pipeline::{curves, Dataset, Estimator, RunConfig};

fn main() -> evstud::Result<()> {
    let fx = study_fixture(&FixtureConfig::default())?;
    let data = Dataset {
        panel: fx.panel,
        factors: fx.factors,
        events: fx.events,
        characteristics: None,
    };
    let config = RunConfig::default();
    let ols = curves(&data, &config, Estimator::Ols)?;
    let sur = curves(&data, &config, Estimator::Sur)?;
    println!("offset\taar_ols\tcaar_ols\taar_sur\tcaar_sur");
    for k in 0..ols.offsets.len() {
        println!(
            "{:+}\t{:.5}\t{:.5}\t{:.5}\t{:.5}",
            ols.offsets[k],
            100.0 * ols.aar[k],
            100.0 * ols.caar[k],
            100.0 * sur.aar[k],
            100.0 * sur.caar[k]
        );
    }
    println!("({} OLS events, {} SUR events; values in percent)", ols.n_events, sur.n_events);
    Ok(())
}
