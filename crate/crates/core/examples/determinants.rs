//! Cross-sectional regressions of the fixture CARs on year, incident type and
//! sector, firm characteristics and news source.

use evstud::fixture::{study_fixture, FixtureConfig};
use evstud::panel::write_panel_table_tsv;
use evstud::pipeline::{determinants, estimate, Dataset, DeterminantTable, Estimator, ModelChoice, RunConfig};

fn main() -> evstud::Result<()> {
    let fx = study_fixture(&FixtureConfig::default())?;
    let data = Dataset {
        panel: fx.panel,
        factors: fx.factors,
        events: fx.events,
        characteristics: Some(fx.characteristics),
    };
    let config = RunConfig::default();
    let cars = vec![
        (Estimator::Ols, estimate(&data, &config, Estimator::Ols)?.cars),
        (Estimator::Sur, estimate(&data, &config, Estimator::Sur)?.cars),
    ];
    let mut out = std::io::stdout().lock();
    for table in [
        DeterminantTable::Years,
        DeterminantTable::TypeSector,
        DeterminantTable::Characteristics,
        DeterminantTable::Source,
    ] {
        let columns = determinants(&data, &config, table, ModelChoice::Both, &cars)?;
        write_panel_table_tsv(&mut out, table.title(), &columns)?;
        println!();
    }
    Ok(())
}
