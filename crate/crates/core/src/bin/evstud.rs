use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use evstud::benchmark::{BenchmarkModel, CorrelationMode};
use evstud::data::{apply_sample_filters, build_limited_sample, limited_sample_range, EventWindow, FilterConfig};
use evstud::fixture::{study_fixture, Fixture, FixtureConfig};
use evstud::pipeline::{
    cmd_curves, cmd_determinants, cmd_estimate, cmd_report, Dataset, DeterminantTable, Estimator, InputPaths,
    ModelChoice, RunConfig,
};
use evstud::sim::{run_size_power, simulate_panel, write_size_power_tsv, CriticalValues, SimConfig};
use evstud::stats::{LeverageRule, RBarMethod};
use evstud::{Error, Result};

#[derive(Parser)]
#[command(name = "evstud", version, about = "Event-study abnormal returns, adjusted tests and CAR determinants")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "EVSTUD_THREADS")]
    threads: Option<usize>,
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate the input files and print a sample summary.
    IngestCheck(DataArgs),
    /// CAR table, test statistics and the Table-1 row of one estimator.
    Estimate(RunArgs),
    /// AAR and CAAR over the curve window.
    Curves(RunArgs),
    /// Cross-sectional regressions of CARs on determinants.
    Determinants(DeterminantArgs),
    /// Monte Carlo size and power of the test statistics.
    Simulate(SimArgs),
    /// All tables, curves and losses for one run.
    Report(RunArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Directory holding returns.csv, factors.csv, events.csv and optionally characteristics.csv.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    returns: Option<PathBuf>,
    #[arg(long)]
    factors: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    characteristics: Option<PathBuf>,
}

impl DataArgs {
    fn paths(&self) -> Result<InputPaths> {
        let base = self.data_dir.as_deref().map(InputPaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, name: &str, from_dir: Option<PathBuf>| {
            explicit
                .clone()
                .or(from_dir)
                .ok_or_else(|| Error::Config(format!("no {name} file given (use --{name} or --data-dir)")))
        };
        Ok(InputPaths {
            returns: pick(&self.returns, "returns", base.as_ref().map(|b| b.returns.clone()))?,
            factors: pick(&self.factors, "factors", base.as_ref().map(|b| b.factors.clone()))?,
            events: pick(&self.events, "events", base.as_ref().map(|b| b.events.clone()))?,
            characteristics: self
                .characteristics
                .clone()
                .or_else(|| base.and_then(|b| b.characteristics)),
        })
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum BenchmarkArg {
    Ff3,
    Zero,
}

#[derive(ValueEnum, Clone, Copy)]
enum EstimatorArg {
    Ols,
    OlsLimited,
    Sur,
}

#[derive(ValueEnum, Clone, Copy)]
enum RBarArg {
    /// Event pairs aligned in event time.
    EventAligned,
    /// Firm residual correlations over pairwise common days.
    FirmCalendar,
    /// Firm residual correlations over days common to all firms.
    FirmCalendarBalanced,
    /// The value of --r-bar-value.
    Fixed,
}

#[derive(ValueEnum, Clone, Copy)]
enum LeverageArg {
    FullDesign,
    Forecast,
}

#[derive(Args, Clone)]
struct StatArgs {
    #[arg(long, value_enum, default_value = "event-aligned")]
    r_bar: RBarArg,
    #[arg(long, default_value_t = 0.0)]
    r_bar_value: f64,
    /// Minimum overlapping days for a correlation to count.
    #[arg(long, default_value_t = 60)]
    min_overlap: usize,
    #[arg(long, value_enum, default_value = "full-design")]
    leverage: LeverageArg,
}

impl StatArgs {
    fn method(&self) -> RBarMethod {
        match self.r_bar {
            RBarArg::EventAligned => RBarMethod::EventAligned {
                min_overlap: self.min_overlap,
            },
            RBarArg::FirmCalendar => RBarMethod::FirmCalendar {
                mode: CorrelationMode::Pairwise,
                min_overlap: self.min_overlap,
            },
            RBarArg::FirmCalendarBalanced => RBarMethod::FirmCalendar {
                mode: CorrelationMode::Balanced,
                min_overlap: self.min_overlap,
            },
            RBarArg::Fixed => RBarMethod::Fixed { value: self.r_bar_value },
        }
    }

    fn leverage(&self) -> LeverageRule {
        match self.leverage {
            LeverageArg::FullDesign => LeverageRule::FullDesign,
            LeverageArg::Forecast => LeverageRule::Forecast,
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "ff3")]
    benchmark: BenchmarkArg,
    #[arg(long, value_enum, default_value = "ols")]
    estimator: EstimatorArg,
    /// Trading days before and after day 0 in the CAR window.
    #[arg(long, default_value_t = 1)]
    pre: usize,
    #[arg(long, default_value_t = 1)]
    post: usize,
    /// Half-width of the AAR/CAAR window.
    #[arg(long, default_value_t = 5)]
    curve_half_width: usize,
    #[arg(long, default_value_t = 3.0e8)]
    cap_floor_usd: f64,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// HC1 standard errors in the determinant regressions.
    #[arg(long)]
    robust_se: bool,
    /// Iterate feasible GLS to convergence.
    #[arg(long)]
    sur_iterate: bool,
    #[command(flatten)]
    stats: StatArgs,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let date_range = match (self.start, self.end) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(Error::Config("--start and --end must be given together".into())),
        };
        Ok(RunConfig {
            benchmark: match self.benchmark {
                BenchmarkArg::Ff3 => BenchmarkModel::Ff3,
                BenchmarkArg::Zero => BenchmarkModel::Zero,
            },
            estimator: match self.estimator {
                EstimatorArg::Ols => Estimator::Ols,
                EstimatorArg::OlsLimited => Estimator::OlsLimited,
                EstimatorArg::Sur => Estimator::Sur,
            },
            window: EventWindow::new(self.pre, self.post)?,
            curve_window: EventWindow::new(self.curve_half_width, self.curve_half_width)?,
            cap_floor_usd: self.cap_floor_usd,
            date_range,
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            robust_se: self.robust_se,
            r_bar: self.stats.method(),
            leverage: self.stats.leverage(),
            sur_iterate: self.sur_iterate,
        })
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum TableArg {
    Years,
    TypeSector,
    Characteristics,
    Source,
}

#[derive(ValueEnum, Clone, Copy)]
enum ModelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args, Clone)]
struct DeterminantArgs {
    #[arg(long, value_enum)]
    table: TableArg,
    /// Table-3 model.
    #[arg(long, value_enum, default_value = "both")]
    model: ModelArg,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 48)]
    n_firms: usize,
    #[arg(long, default_value_t = 2219)]
    n_days: usize,
    #[arg(long, default_value_t = 126)]
    n_events: usize,
    /// Events of a round share one day across firms.
    #[arg(long)]
    clustered: bool,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    event_var_multiplier: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    injected_car: f64,
    #[arg(long, default_value_t = 1)]
    pre: usize,
    #[arg(long, default_value_t = 1)]
    post: usize,
    /// Master seed [default: 20231, or 7 with --write-fixture].
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, value_enum, default_value = "ff3")]
    benchmark: BenchmarkArg,
    /// Also fit SUR in each replication.
    #[arg(long)]
    sur: bool,
    /// Student-t critical values instead of normal ones.
    #[arg(long)]
    student_t: bool,
    #[command(flatten)]
    stats: StatArgs,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Write the panel of this replication as CSV files instead of simulating.
    #[arg(long)]
    dump_rep: Option<u64>,
    /// Write the study-shaped fixture (seeded by --seed) as CSV files.
    #[arg(long)]
    write_fixture: bool,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let config = SimConfig {
            n_firms: self.n_firms,
            n_days: self.n_days,
            n_events: self.n_events,
            events_clustered: self.clustered,
            rho: self.rho,
            event_var_multiplier: self.event_var_multiplier,
            injected_car: self.injected_car,
            window: EventWindow::new(self.pre, self.post)?,
            seed: self.seed.unwrap_or(SimConfig::default().seed),
            n_reps: self.reps,
            benchmark: match self.benchmark {
                BenchmarkArg::Ff3 => BenchmarkModel::Ff3,
                BenchmarkArg::Zero => BenchmarkModel::Zero,
            },
            r_bar: self.stats.method(),
            leverage: self.stats.leverage(),
            fit_sur: self.sur,
            critical: if self.student_t { CriticalValues::StudentT } else { CriticalValues::Normal },
        };
        config.validate()?;
        Ok(config)
    }
}

fn ingest_check(args: &DataArgs) -> Result<()> {
    let data = Dataset::load(&args.paths()?)?;
    let outcome = apply_sample_filters(&data.events, &data.panel, &FilterConfig::default());
    let mut dropped = std::collections::BTreeMap::<&str, usize>::new();
    for (_, r) in &outcome.dropped {
        *dropped.entry(r.key()).or_default() += 1;
    }
    let limited = build_limited_sample(&data.panel, &outcome.kept, limited_sample_range())
        .map(|(p, e)| json!({"firms": p.n_firms(), "days": p.n_days(), "events": e.len()}))
        .unwrap_or_else(|e| json!({"error": e.to_string()}));
    let summary = json!({
        "firms": data.panel.n_firms(),
        "days": data.panel.n_days(),
        "first_day": data.panel.calendar().first(),
        "last_day": data.panel.calendar().last(),
        "missing_cells": data.panel.missing_cells(),
        "events": data.events.len(),
        "events_kept": outcome.kept.len(),
        "events_dropped": dropped,
        "characteristics_rows": data.characteristics.as_ref().map(Vec::len),
        "limited_sample": limited,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn write_fixture(fixture: &Fixture, dir: &Path) -> Result<()> {
    fixture.write(dir)?;
    log::info!("fixture written to {}", dir.display());
    Ok(())
}

fn simulate(args: &SimArgs) -> Result<()> {
    if args.write_fixture {
        let defaults = FixtureConfig::default();
        let fixture = study_fixture(&FixtureConfig {
            seed: args.seed.unwrap_or(defaults.seed),
            ..defaults
        })?;
        return write_fixture(&fixture, &args.output_dir);
    }
    let config = args.config()?;
    if let Some(rep) = args.dump_rep {
        let sim = simulate_panel(&config, rep)?;
        let fixture = Fixture {
            panel: sim.panel,
            factors: sim.factors,
            events: sim.events,
            characteristics: Vec::new(),
        };
        return write_fixture(&fixture, &args.output_dir);
    }
    let report = run_size_power(&config)?;
    std::fs::create_dir_all(&args.output_dir)?;
    std::fs::write(
        args.output_dir.join("size_power.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let mut tsv = Vec::new();
    write_size_power_tsv(&mut tsv, &report)?;
    std::fs::write(args.output_dir.join("size_power.tsv"), tsv)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::IngestCheck(args) => ingest_check(args),
        Command::Estimate(args) => {
            let data = Dataset::load(&args.data.paths()?)?;
            cmd_estimate(&data, &args.config()?).map(|_| ())
        }
        Command::Curves(args) => {
            let data = Dataset::load(&args.data.paths()?)?;
            cmd_curves(&data, &args.config()?).map(|_| ())
        }
        Command::Determinants(args) => {
            let data = Dataset::load(&args.run.data.paths()?)?;
            let table = match args.table {
                TableArg::Years => DeterminantTable::Years,
                TableArg::TypeSector => DeterminantTable::TypeSector,
                TableArg::Characteristics => DeterminantTable::Characteristics,
                TableArg::Source => DeterminantTable::Source,
            };
            let model = match args.model {
                ModelArg::One => ModelChoice::One,
                ModelArg::Two => ModelChoice::Two,
                ModelArg::Both => ModelChoice::Both,
            };
            cmd_determinants(&data, &args.run.config()?, table, model).map(|_| ())
        }
        Command::Simulate(args) => simulate(args),
        Command::Report(args) => {
            let data = Dataset::load(&args.data.paths()?)?;
            cmd_report(&data, &args.config()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let diag = json!({"code": "usage", "message": e.to_string().trim_end(), "context": {}});
            eprintln!("{diag}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
