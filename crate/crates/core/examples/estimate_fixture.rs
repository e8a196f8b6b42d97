//! Average CARs and test statistics for each estimator and benchmark on the
//! synthetic fixture, printed as Table-1 rows.

use evstud::fixture::{study_fixture, FixtureConfig};
use evstud::pipeline::{benchmark_label, estimate, Dataset, Estimator, RunConfig};
use evstud::benchmark::BenchmarkModel;
use evstud::stats::write_table1_row;

fn main() -> evstud::Result<()> {
    let fx = study_fixture(&FixtureConfig::default())?;
    let data = Dataset {
        panel: fx.panel,
        factors: fx.factors,
        events: fx.events,
        characteristics: Some(fx.characteristics),
    };
    let mut out = std::io::stdout().lock();
    println!("model\tbenchmark\tmean_car_pct\tt_unadj\tt_adj_patell\tt_adj_bmp\tn_incidents\tn_days");
    for benchmark in [BenchmarkModel::Zero, BenchmarkModel::Ff3] {
        let config = RunConfig { benchmark, ..RunConfig::default() };
        for estimator in [Estimator::Ols, Estimator::OlsLimited, Estimator::Sur] {
            let est = estimate(&data, &config, estimator)?;
            write_table1_row(&mut out, estimator.label(), benchmark_label(benchmark), &est.output.report)?;
        }
    }
    Ok(())
}
