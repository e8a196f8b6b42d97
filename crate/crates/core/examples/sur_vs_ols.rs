//! OLS and SUR fits on the balanced limited sample.

use evstud::fixture::{study_fixture, FixtureConfig};
use evstud::pipeline::{fit, Dataset, Estimator, RunConfig};
use evstud::sur::{assemble_system, fit_sur, SurOptions};
use evstud::benchmark::DesignConfig;
use evstud::window::build_car_table;

fn main() -> evstud::Result<()> {
    let fx = study_fixture(&FixtureConfig::default())?;
    let data = Dataset {
        panel: fx.panel,
        factors: fx.factors,
        events: fx.events,
        characteristics: None,
    };
    let config = RunConfig::default();
    let ols = fit(&data, &config, Estimator::OlsLimited, config.window)?;
    let sample = &ols.sample;

    let system = assemble_system(&sample.panel, &sample.factors, &sample.events, config.window, config.benchmark, &DesignConfig::default())?;
    println!("{} equations, {} days each", system.designs.len(), system.returns[0].len());
    println!("mean residual correlation in Sigma: {:.4}", system.mean_offdiag_correlation());

    let one = fit_sur(&system, &SurOptions::default())?;
    let iterated = fit_sur(&system, &SurOptions { iterate: true, ..SurOptions::default() })?;
    println!("iterated FGLS: {} iterations, converged {}", iterated.iterations, iterated.converged);

    let ols_cars = build_car_table(&ols.estimates, &sample.events, config.window)?;
    let sur_cars = build_car_table(&one.estimates, &sample.events, config.window)?;
    let mean = |t: &evstud::window::CarTable| 100.0 * t.rows.iter().map(|r| r.car).sum::<f64>() / t.len() as f64;
    println!("mean CAR: OLS {:.4}%, SUR {:.4}%", mean(&ols_cars), mean(&sur_cars));

    println!("firm\tse_mkt_ols\tse_mkt_sur");
    for (i, est) in system.ols.iter().enumerate().take(8) {
        let ols_var = system.sigma_hat[(i, i)] * est.xtx_inverse[(1, 1)];
        let sur_var = one.equation_covariance(i)[(1, 1)];
        println!("{}\t{:.5}\t{:.5}", est.firm_id, ols_var.sqrt(), sur_var.sqrt());
    }
    Ok(())
}
