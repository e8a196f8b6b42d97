//! End-to-end runs: load, filter, estimate, test and write the output files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::benchmark::{estimate_firms, write_diagnostics_tsv, ArEstimate, BenchmarkModel, DesignConfig};
use crate::data::{
    apply_sample_filters, build_limited_sample, limited_sample_range, load_characteristics, load_events,
    load_panel, EventRecord, EventWindow, FactorSeries, FilterConfig, FirmCharacteristics, ReturnPanel,
};
use crate::error::{Error, Result};
use crate::panel::{
    build_spec_table2, build_spec_table3, build_spec_table4, build_spec_table5, run_panel, write_panel_table_tsv,
    PanelOptions, PanelResult, TypeSectorModel,
};
use crate::stats::{compute_r_bar, stat_report, write_table1_row, LeverageRule, RBarMethod, StatOptions, StatReport, TABLE1_HEADER};
use crate::sur::{assemble_system, fit_sur, write_sur_diagnostics_tsv, SurOptions};
use crate::window::{aar_caar, build_car_table, loss_summary, write_aar_curve_tsv, write_car_table_tsv, AarCurve, CarTable, LossSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Per-firm OLS on all available days.
    Ols,
    /// Per-firm OLS on the balanced limited sample.
    OlsLimited,
    /// SUR on the balanced limited sample.
    Sur,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Ols, Estimator::OlsLimited, Estimator::Sur];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Ols => "OLS",
            Estimator::OlsLimited => "OLS limited",
            Estimator::Sur => "SUR",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::OlsLimited => "ols_limited",
            Estimator::Sur => "sur",
        }
    }

    fn limited(self) -> bool {
        self != Estimator::Ols
    }
}

pub fn benchmark_label(model: BenchmarkModel) -> &'static str {
    match model {
        BenchmarkModel::Ff3 => "FF3",
        BenchmarkModel::Zero => "Zero",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub benchmark: BenchmarkModel,
    pub estimator: Estimator,
    pub window: EventWindow,
    pub curve_window: EventWindow,
    pub cap_floor_usd: f64,
    /// Event-date restriction for OLS; the balanced period for the limited
    /// estimators (defaults to the limited period).
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub robust_se: bool,
    pub r_bar: RBarMethod,
    pub leverage: LeverageRule,
    pub sur_iterate: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkModel::Ff3,
            estimator: Estimator::Ols,
            window: EventWindow::car_default(),
            curve_window: EventWindow::curve_default(),
            cap_floor_usd: 3.0e8,
            date_range: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            robust_se: false,
            r_bar: RBarMethod::default(),
            leverage: LeverageRule::default(),
            sur_iterate: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.curve_window.contains(&self.window) {
            return Err(Error::Config(format!(
                "CAR window {} must lie inside the curve window {}",
                self.window, self.curve_window
            )));
        }
        if !(self.cap_floor_usd >= 0.0) {
            return Err(Error::Config("cap floor must be non-negative".into()));
        }
        if let Some((a, b)) = self.date_range {
            if a > b {
                return Err(Error::Config(format!("date range {a}..{b} is reversed")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InputPaths {
    pub returns: PathBuf,
    pub factors: PathBuf,
    pub events: PathBuf,
    pub characteristics: Option<PathBuf>,
}

impl InputPaths {
    /// The standard file names inside `dir`; characteristics only if present.
    pub fn in_dir(dir: &Path) -> Self {
        let c = dir.join("characteristics.csv");
        Self {
            returns: dir.join("returns.csv"),
            factors: dir.join("factors.csv"),
            events: dir.join("events.csv"),
            characteristics: c.exists().then_some(c),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub panel: ReturnPanel,
    pub factors: FactorSeries,
    pub events: Vec<EventRecord>,
    pub characteristics: Option<Vec<FirmCharacteristics>>,
}

impl Dataset {
    pub fn load(paths: &InputPaths) -> Result<Self> {
        for p in [&paths.returns, &paths.factors, &paths.events] {
            if !p.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("input file {} does not exist", p.display()),
                )));
            }
        }
        let (panel, factors) = load_panel(&paths.returns, &paths.factors)?;
        let events = load_events(&paths.events)?;
        let characteristics = paths.characteristics.as_deref().map(load_characteristics).transpose()?;
        Ok(Self {
            panel,
            factors,
            events,
            characteristics,
        })
    }
}

/// Sample used by one estimator: panel, matching factors and kept events.
#[derive(Debug, Clone)]
pub struct Sample {
    pub panel: ReturnPanel,
    pub factors: FactorSeries,
    pub events: Vec<EventRecord>,
    pub dropped: BTreeMap<String, usize>,
}

/// Filters the events for `estimator` with a dummy span of `span`.
pub fn prepare_sample(data: &Dataset, config: &RunConfig, estimator: Estimator, span: EventWindow) -> Result<Sample> {
    let range = if estimator.limited() {
        Some(config.date_range.unwrap_or_else(limited_sample_range))
    } else {
        config.date_range
    };
    let filter = FilterConfig {
        cap_floor_usd: config.cap_floor_usd,
        date_range: range,
        car_window: config.window,
        dummy_span: span,
        ..FilterConfig::default()
    };
    let outcome = apply_sample_filters(&data.events, &data.panel, &filter);
    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    for (_, reason) in &outcome.dropped {
        *dropped.entry(reason.key().to_string()).or_default() += 1;
    }
    if outcome.kept.is_empty() {
        return Err(Error::EmptySelection("every event was removed by the sample filters".into()));
    }
    if !estimator.limited() {
        return Ok(Sample {
            panel: data.panel.clone(),
            factors: data.factors.clone(),
            events: outcome.kept,
            dropped,
        });
    }
    let range = range.expect("limited estimators have a range");
    let (panel, events) = build_limited_sample(&data.panel, &outcome.kept, range)?;
    let outside = outcome.kept.len() - events.len();
    if outside > 0 {
        dropped.insert("incomplete_firm".into(), outside);
    }
    let factors = data.factors.restrict_to(panel.calendar())?;
    Ok(Sample {
        panel,
        factors,
        events,
        dropped,
    })
}

/// Abnormal-return estimates of one estimator and diagnostics text.
pub struct Fitted {
    pub estimator: Estimator,
    pub sample: Sample,
    pub estimates: Vec<ArEstimate>,
    pub diagnostics: String,
}

pub fn fit(data: &Dataset, config: &RunConfig, estimator: Estimator, span: EventWindow) -> Result<Fitted> {
    let sample = prepare_sample(data, config, estimator, span)?;
    let design = DesignConfig::default();
    let mut diagnostics = Vec::new();
    let estimates = match estimator {
        Estimator::Ols | Estimator::OlsLimited => {
            let est = estimate_firms(&sample.panel, &sample.factors, &sample.events, span, config.benchmark, &design)?;
            write_diagnostics_tsv(&mut diagnostics, &est)?;
            est
        }
        Estimator::Sur => {
            let system = assemble_system(&sample.panel, &sample.factors, &sample.events, span, config.benchmark, &design)?;
            let options = SurOptions {
                iterate: config.sur_iterate,
                ..SurOptions::default()
            };
            let sur = fit_sur(&system, &options)?;
            write_sur_diagnostics_tsv(&mut diagnostics, &sur)?;
            sur.estimates
        }
    };
    Ok(Fitted {
        estimator,
        sample,
        estimates,
        diagnostics: String::from_utf8(diagnostics).expect("diagnostics are UTF-8"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub estimator: Estimator,
    pub benchmark: BenchmarkModel,
    pub window: EventWindow,
    pub r_bar_method: RBarMethod,
    pub leverage: LeverageRule,
    pub dropped_events: BTreeMap<String, usize>,
    pub report: StatReport,
    pub loss: Option<LossSummary>,
}

pub struct Estimated {
    pub output: EstimateOutput,
    pub cars: CarTable,
    pub diagnostics: String,
}

/// CAR table and Table-1 statistics of one estimator.
pub fn estimate(data: &Dataset, config: &RunConfig, estimator: Estimator) -> Result<Estimated> {
    let fitted = fit(data, config, estimator, config.window)?;
    let events = &fitted.sample.events;
    let cars = build_car_table(&fitted.estimates, events, config.window)?;
    let r_bar = compute_r_bar(&fitted.estimates, events, config.r_bar)?;
    let options = StatOptions {
        car_window: config.window,
        leverage: config.leverage,
    };
    let report = stat_report(&fitted.estimates, events, r_bar, &options)?;
    let loss = loss_summary(&cars, |_| true).ok();
    Ok(Estimated {
        output: EstimateOutput {
            estimator,
            benchmark: config.benchmark,
            window: config.window,
            r_bar_method: config.r_bar,
            leverage: config.leverage,
            dropped_events: fitted.sample.dropped,
            report,
            loss,
        },
        cars,
        diagnostics: fitted.diagnostics,
    })
}

/// AAR/CAAR over the curve window, with dummies on every curve day.
pub fn curves(data: &Dataset, config: &RunConfig, estimator: Estimator) -> Result<AarCurve> {
    let fitted = fit(data, config, estimator, config.curve_window)?;
    aar_caar(&fitted.estimates, &fitted.sample.events, config.curve_window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeterminantTable {
    Years,
    TypeSector,
    Characteristics,
    Source,
}

impl DeterminantTable {
    pub const ALL: [DeterminantTable; 4] = [
        DeterminantTable::Years,
        DeterminantTable::TypeSector,
        DeterminantTable::Characteristics,
        DeterminantTable::Source,
    ];

    pub fn number(self) -> usize {
        match self {
            DeterminantTable::Years => 2,
            DeterminantTable::TypeSector => 3,
            DeterminantTable::Characteristics => 4,
            DeterminantTable::Source => 5,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            DeterminantTable::Years => "Determinants of CARs: incident year",
            DeterminantTable::TypeSector => "Determinants of CARs: incident type and sector",
            DeterminantTable::Characteristics => "Determinants of CARs: firm characteristics",
            DeterminantTable::Source => "Determinants of CARs: news source",
        }
    }
}

/// Which Table-3 models to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    One,
    Two,
    #[default]
    Both,
}

/// Labelled panel results of one determinant table for OLS and SUR CARs.
pub fn determinants(
    data: &Dataset,
    config: &RunConfig,
    table: DeterminantTable,
    models: ModelChoice,
    car_tables: &[(Estimator, CarTable)],
) -> Result<Vec<(String, PanelResult)>> {
    let options = PanelOptions {
        robust_hc1: config.robust_se,
        ..PanelOptions::default()
    };
    let mut out = Vec::new();
    for (estimator, cars) in car_tables {
        let label = estimator.label();
        match table {
            DeterminantTable::Years => out.push((label.to_string(), run_panel(cars, &build_spec_table2(cars)?, &options)?)),
            DeterminantTable::TypeSector => {
                let chosen: &[(TypeSectorModel, &str)] = match models {
                    ModelChoice::One => &[(TypeSectorModel::Model1, "Model 1")],
                    ModelChoice::Two => &[(TypeSectorModel::Model2, "Model 2")],
                    ModelChoice::Both => &[(TypeSectorModel::Model1, "Model 1"), (TypeSectorModel::Model2, "Model 2")],
                };
                for (m, name) in chosen {
                    let spec = build_spec_table3(cars, *m)?;
                    out.push((format!("{label} {name}"), run_panel(cars, &spec, &options)?));
                }
            }
            DeterminantTable::Characteristics => {
                let chars = data.characteristics.as_deref().ok_or_else(|| {
                    Error::Config("the characteristics table needs a characteristics file".into())
                })?;
                let spec = build_spec_table4(cars, chars, true)?;
                out.push((label.to_string(), run_panel(cars, &spec, &options)?));
            }
            DeterminantTable::Source => out.push((label.to_string(), run_panel(cars, &build_spec_table5(cars)?, &options)?)),
        }
    }
    Ok(out)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Writes `car_table.tsv`, `stat_report.json`, `table1.tsv` and
/// `diagnostics.tsv` for the configured estimator.
pub fn cmd_estimate(data: &Dataset, config: &RunConfig) -> Result<EstimateOutput> {
    config.validate()?;
    let est = estimate(data, config, config.estimator)?;
    let dir = &config.output_dir;
    let mut w = create(dir, "car_table.tsv")?;
    write_car_table_tsv(&mut w, &est.cars)?;
    w.flush()?;
    write_json(dir, "stat_report.json", &est.output)?;
    let mut w = create(dir, "table1.tsv")?;
    writeln!(w, "{TABLE1_HEADER}")?;
    write_table1_row(&mut w, config.estimator.label(), benchmark_label(config.benchmark), &est.output.report)?;
    w.flush()?;
    write_text(dir, "diagnostics.tsv", &est.diagnostics)?;
    Ok(est.output)
}

/// Writes `aar_curve.tsv` for the configured estimator.
pub fn cmd_curves(data: &Dataset, config: &RunConfig) -> Result<AarCurve> {
    config.validate()?;
    let curve = curves(data, config, config.estimator)?;
    let mut w = create(&config.output_dir, "aar_curve.tsv")?;
    write_aar_curve_tsv(&mut w, &curve)?;
    w.flush()?;
    Ok(curve)
}

fn write_determinant_table(dir: &Path, table: DeterminantTable, results: &[(String, PanelResult)]) -> Result<()> {
    let n = table.number();
    let mut w = create(dir, &format!("table{n}.tsv"))?;
    write_panel_table_tsv(&mut w, table.title(), results)?;
    w.flush()?;
    let map: Vec<_> = results.iter().map(|(l, r)| serde_json::json!({"column": l, "result": r})).collect();
    write_json(dir, &format!("table{n}.json"), &map)
}

fn ols_and_sur_cars(data: &Dataset, config: &RunConfig) -> Result<Vec<(Estimator, CarTable)>> {
    [Estimator::Ols, Estimator::Sur]
        .into_iter()
        .map(|e| Ok((e, estimate(data, config, e)?.cars)))
        .collect()
}

/// Writes `tableN.tsv` and `tableN.json` from OLS and SUR CARs.
pub fn cmd_determinants(data: &Dataset, config: &RunConfig, table: DeterminantTable, models: ModelChoice) -> Result<Vec<(String, PanelResult)>> {
    config.validate()?;
    let cars = ols_and_sur_cars(data, config)?;
    let results = determinants(data, config, table, models, &cars)?;
    write_determinant_table(&config.output_dir, table, &results)?;
    Ok(results)
}

/// Every output of a run: Table 1 for both benchmarks and all estimators,
/// curves per estimator, Tables 2-5 and dollar losses.
pub fn cmd_report(data: &Dataset, config: &RunConfig) -> Result<()> {
    config.validate()?;
    let dir = &config.output_dir;
    let mut table1 = Vec::new();
    writeln!(table1, "{TABLE1_HEADER}")?;
    let mut reports = Vec::new();
    let mut cars_for_panels = Vec::new();
    for benchmark in [BenchmarkModel::Zero, BenchmarkModel::Ff3] {
        let cfg = RunConfig {
            benchmark,
            ..config.clone()
        };
        for estimator in Estimator::ALL {
            let est = estimate(data, &cfg, estimator)?;
            write_table1_row(&mut table1, estimator.label(), benchmark_label(benchmark), &est.output.report)?;
            let mut w = create(dir, &format!("car_table_{}_{}.tsv", benchmark.key(), estimator.key()))?;
            write_car_table_tsv(&mut w, &est.cars)?;
            w.flush()?;
            if benchmark == config.benchmark && estimator != Estimator::OlsLimited {
                cars_for_panels.push((estimator, est.cars));
            }
            reports.push(est.output);
        }
    }
    write_text(dir, "table1.tsv", &String::from_utf8(table1).expect("UTF-8"))?;
    write_json(dir, "stat_report.json", &reports)?;

    for estimator in Estimator::ALL {
        let curve = curves(data, config, estimator)?;
        let mut w = create(dir, &format!("aar_curve_{}.tsv", estimator.key()))?;
        write_aar_curve_tsv(&mut w, &curve)?;
        w.flush()?;
    }
    for table in DeterminantTable::ALL {
        if table == DeterminantTable::Characteristics && data.characteristics.is_none() {
            log::warn!("no characteristics file; table 4 skipped");
            continue;
        }
        let results = determinants(data, config, table, ModelChoice::Both, &cars_for_panels)?;
        write_determinant_table(dir, table, &results)?;
    }
    let losses: Vec<_> = cars_for_panels
        .iter()
        .map(|(e, c)| serde_json::json!({"estimator": e, "loss": loss_summary(c, |_| true).ok()}))
        .collect();
    write_json(dir, "losses.json", &losses)
}
