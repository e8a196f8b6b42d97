//! Writes the synthetic fixture as CSV files, loads it back and prints the
//! sample that survives the filters.
//!
//!     cargo run --example load_data -- [dir]

use std::path::PathBuf;

use evstud::data::{apply_sample_filters, build_limited_sample, limited_sample_range, FilterConfig};
use evstud::fixture::{study_fixture, FixtureConfig};
use evstud::pipeline::{Dataset, InputPaths};

fn main() -> evstud::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("evstud-fixture"));
    study_fixture(&FixtureConfig::default())?.write(&dir)?;
    let data = Dataset::load(&InputPaths::in_dir(&dir))?;

    let panel = &data.panel;
    println!("{} firms x {} days, {} missing cells", panel.n_firms(), panel.n_days(), panel.missing_cells());
    let filtered = apply_sample_filters(&data.events, panel, &FilterConfig::default());
    println!("{} events kept, {} dropped", filtered.kept.len(), filtered.dropped.len());
    for (event, reason) in &filtered.dropped {
        println!("  {} dropped: {}", event.event_id, reason.key());
    }
    let (limited, events) = build_limited_sample(panel, &filtered.kept, limited_sample_range())?;
    println!("limited sample: {} firms x {} days, {} events", limited.n_firms(), limited.n_days(), events.len());
    println!("written to {}", dir.display());
    Ok(())
}
