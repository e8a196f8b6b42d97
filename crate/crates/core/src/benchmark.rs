//! Per-firm dummy-variable benchmark regressions.
//!
//! Each firm's excess return is regressed on a constant, optionally the three
//! Fama-French factors, and one indicator column per (event, window offset).
//! The indicator coefficients are the abnormal returns; rows they cover fit
//! exactly, so the remaining residuals are those of the benchmark model
//! estimated without the event days.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    validate_no_overlap, EventId, EventRecord, EventWindow, FactorSeries, FirmId, ReturnPanel,
};
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::linalg::{self, least_squares, MAX_CONDITION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkModel {
    /// Constant plus market, size and value factors.
    Ff3,
    /// Constant only.
    Zero,
}

impl BenchmarkModel {
    /// Number of explanatory variables besides the constant and the dummies.
    pub fn factor_count(self) -> usize {
        match self {
            BenchmarkModel::Ff3 => 3,
            BenchmarkModel::Zero => 0,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            BenchmarkModel::Ff3 => "ff3",
            BenchmarkModel::Zero => "zero",
        }
    }
}

/// Whether rows with a missing return are dropped or forbidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Full,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    Constant,
    MktExcess,
    Smb,
    Hml,
    Dummy { event_id: EventId, offset: i32 },
}

impl Regressor {
    pub fn name(&self) -> String {
        match self {
            Regressor::Constant => "const".into(),
            Regressor::MktExcess => "mkt_rf".into(),
            Regressor::Smb => "smb".into(),
            Regressor::Hml => "hml".into(),
            Regressor::Dummy { event_id, offset } => format!("{event_id}[{offset:+}]"),
        }
    }

    pub fn is_dummy(&self) -> bool {
        matches!(self, Regressor::Dummy { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignConfig {
    pub min_obs: usize,
    pub max_condition: f64,
    pub sampling: Sampling,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            min_obs: 100,
            max_condition: MAX_CONDITION,
            sampling: Sampling::Full,
        }
    }
}

impl DesignConfig {
    pub fn balanced() -> Self {
        Self {
            sampling: Sampling::Balanced,
            ..Self::default()
        }
    }
}

/// Regression design for one firm. Row `r` is calendar day `rows[r]`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub firm_id: FirmId,
    pub firm_index: usize,
    pub model: BenchmarkModel,
    pub rows: Vec<usize>,
    pub columns: Vec<Regressor>,
    pub values: DMatrix<f64>,
    pub n_calendar_days: usize,
    pub max_condition: f64,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Number of leading non-dummy columns.
    pub fn n_base(&self) -> usize {
        self.columns.iter().take_while(|c| !c.is_dummy()).count()
    }

    /// Position of each dummy column's single non-zero row.
    pub fn dummy_rows(&self) -> Vec<usize> {
        let base = self.n_base();
        (base..self.n_columns())
            .map(|j| {
                (0..self.n_rows())
                    .find(|&r| self.values[(r, j)] != 0.0)
                    .expect("dummy column has one non-zero entry")
            })
            .collect()
    }

    /// Returns on the design rows, in row order.
    pub fn response(&self, panel: &ReturnPanel) -> Result<DVector<f64>> {
        let series = panel.firm_returns(self.firm_index);
        self.rows
            .iter()
            .map(|&t| {
                series[t].ok_or_else(|| {
                    Error::Contract(format!("firm {} has no return on row day {t}", self.firm_id))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(DVector::from_vec)
    }
}

fn factor_row(model: BenchmarkModel, factors: &FactorSeries, t: usize) -> Vec<f64> {
    match model {
        BenchmarkModel::Ff3 => vec![1.0, factors.mkt_excess[t], factors.smb[t], factors.hml[t]],
        BenchmarkModel::Zero => vec![1.0],
    }
}

fn base_columns(model: BenchmarkModel) -> Vec<Regressor> {
    match model {
        BenchmarkModel::Ff3 => vec![
            Regressor::Constant,
            Regressor::MktExcess,
            Regressor::Smb,
            Regressor::Hml,
        ],
        BenchmarkModel::Zero => vec![Regressor::Constant],
    }
}

/// Events of `firm` with their resolved calendar day, sorted by day.
fn firm_event_days<'a>(
    firm: &FirmId,
    panel: &ReturnPanel,
    events: &'a [EventRecord],
) -> Result<Vec<(usize, &'a EventRecord)>> {
    let mut out = Vec::new();
    for e in events.iter().filter(|e| &e.firm_id == firm) {
        out.push((panel.calendar().resolve(e.event_date)?.index, e));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.event_id.cmp(&b.1.event_id)));
    Ok(out)
}

/// Builds the dummy-variable design for one firm.
///
/// `events` may contain other firms' events; only `firm_id`'s are used.
/// One dummy column is added per event and per offset of `window`.
pub fn build_design(
    firm_id: &FirmId,
    panel: &ReturnPanel,
    factors: &FactorSeries,
    events: &[EventRecord],
    window: EventWindow,
    model: BenchmarkModel,
    config: &DesignConfig,
) -> Result<DesignMatrix> {
    let firm_index = panel
        .firm_index(firm_id)
        .ok_or_else(|| Error::Contract(format!("firm {firm_id} not in panel")))?;
    if factors.calendar != *panel.calendar() {
        return Err(Error::Contract("factor and panel calendars differ".into()));
    }
    let series = panel.firm_returns(firm_index);
    let obs = series.iter().filter(|r| r.is_some()).count();
    if obs < config.min_obs {
        return Err(Error::InsufficientData(format!(
            "firm {firm_id} has {obs} returns, fewer than {}",
            config.min_obs
        )));
    }
    let rows: Vec<usize> = match config.sampling {
        Sampling::Full => (0..series.len()).filter(|&t| series[t].is_some()).collect(),
        Sampling::Balanced => {
            if obs != series.len() {
                return Err(Error::Contract(format!(
                    "firm {firm_id} has missing returns in a balanced design"
                )));
            }
            (0..series.len()).collect()
        }
    };
    let firm_events: Vec<EventRecord> = events.iter().filter(|e| &e.firm_id == firm_id).cloned().collect();
    validate_no_overlap(&firm_events, panel.calendar(), window)?;
    let event_days = firm_event_days(firm_id, panel, events)?;

    let mut columns = base_columns(model);
    let n_base = columns.len();
    let mut dummy_rows = Vec::new();
    for (day, e) in &event_days {
        for offset in window.offsets() {
            let t = *day as i64 + offset as i64;
            let pos = (t >= 0)
                .then(|| rows.binary_search(&(t as usize)).ok())
                .flatten()
                .ok_or_else(|| {
                    Error::Contract(format!(
                        "event {} of firm {firm_id} has no return at offset {offset:+}",
                        e.event_id
                    ))
                })?;
            columns.push(Regressor::Dummy {
                event_id: e.event_id.clone(),
                offset,
            });
            dummy_rows.push(pos);
        }
    }

    let mut values = DMatrix::zeros(rows.len(), columns.len());
    for (r, &t) in rows.iter().enumerate() {
        for (j, v) in factor_row(model, factors, t).into_iter().enumerate() {
            values[(r, j)] = v;
        }
    }
    for (k, &pos) in dummy_rows.iter().enumerate() {
        values[(pos, n_base + k)] = 1.0;
    }

    Ok(DesignMatrix {
        firm_id: firm_id.clone(),
        firm_index,
        model,
        rows,
        columns,
        values,
        n_calendar_days: panel.n_days(),
        max_condition: config.max_condition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorBetas {
    pub mkt: f64,
    pub smb: f64,
    pub hml: f64,
}

/// Abnormal return of one event day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDayAr {
    pub event_id: EventId,
    pub offset: i32,
    /// Calendar day index of the dummy row.
    pub day: usize,
    pub ar: f64,
    /// Diagonal of the full-design hat matrix on the dummy row.
    pub leverage: f64,
    /// `x_t'(X_0'X_0)^{-1}x_t` of the benchmark regressors alone, i.e. the
    /// forecast leverage of a regression estimated without the event days.
    pub forecast_leverage: f64,
}

#[derive(Debug, Clone)]
pub struct ArEstimate {
    pub firm_id: FirmId,
    pub model: BenchmarkModel,
    pub alpha: f64,
    pub betas: Option<FactorBetas>,
    pub event_days: Vec<EventDayAr>,
    /// Residuals on non-dummy rows, paired with `residual_days`.
    pub residuals: Vec<f64>,
    pub residual_days: Vec<usize>,
    pub s_i: f64,
    pub dof: usize,
    pub n_rows: usize,
    pub n_calendar_days: usize,
    pub columns: Vec<Regressor>,
    pub coefficients: Vec<f64>,
    pub xtx_inverse: DMatrix<f64>,
}

impl ArEstimate {
    pub fn ar(&self, event_id: &EventId, offset: i32) -> Option<f64> {
        self.event_day(event_id, offset).map(|d| d.ar)
    }

    pub fn event_day(&self, event_id: &EventId, offset: i32) -> Option<&EventDayAr> {
        self.event_days
            .iter()
            .find(|d| &d.event_id == event_id && d.offset == offset)
    }

    pub fn events(&self) -> Vec<&EventId> {
        let mut ids: Vec<&EventId> = self.event_days.iter().map(|d| &d.event_id).collect();
        ids.dedup();
        ids
    }

    pub fn has_event(&self, event_id: &EventId) -> bool {
        self.event_days.iter().any(|d| &d.event_id == event_id)
    }

    /// Residuals laid out on the calendar; dummy and missing days are `None`.
    pub fn residual_series(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n_calendar_days];
        for (&t, &e) in self.residual_days.iter().zip(&self.residuals) {
            out[t] = Some(e);
        }
        out
    }

    /// Sets the per-equation quantities from a coefficient vector fitted on
    /// `design` (used by both the OLS and SUR paths).
    pub(crate) fn from_coefficients(
        design: &DesignMatrix,
        y: &DVector<f64>,
        coefficients: &DVector<f64>,
        xtx_inverse: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, k) = design.values.shape();
        let dof = n
            .checked_sub(k)
            .filter(|d| *d > 0)
            .ok_or_else(|| Error::InsufficientData(format!("firm {} has no residual dof", design.firm_id)))?;
        let fitted = &design.values * coefficients;
        let n_base = design.n_base();
        let dummy_rows = design.dummy_rows();

        let mut is_dummy_row = vec![false; n];
        for &r in &dummy_rows {
            is_dummy_row[r] = true;
        }
        let mut residuals = Vec::with_capacity(n - dummy_rows.len());
        let mut residual_days = Vec::with_capacity(n - dummy_rows.len());
        let mut ssr = 0.0;
        for r in 0..n {
            if is_dummy_row[r] {
                continue;
            }
            let e = y[r] - fitted[r];
            ssr += e * e;
            residuals.push(e);
            residual_days.push(design.rows[r]);
        }
        let s_i = (ssr / dof as f64).sqrt();

        let mut event_days = Vec::with_capacity(k - n_base);
        for (j, &r) in (n_base..k).zip(&dummy_rows) {
            let Regressor::Dummy { event_id, offset } = &design.columns[j] else {
                unreachable!("columns after the base block are dummies");
            };
            event_days.push(EventDayAr {
                event_id: event_id.clone(),
                offset: *offset,
                day: design.rows[r],
                ar: coefficients[j],
                // The dummy isolates its row, so the hat value is exactly one.
                leverage: 1.0,
                forecast_leverage: xtx_inverse[(j, j)] - 1.0,
            });
        }

        let betas = match design.model {
            BenchmarkModel::Ff3 => Some(FactorBetas {
                mkt: coefficients[1],
                smb: coefficients[2],
                hml: coefficients[3],
            }),
            BenchmarkModel::Zero => None,
        };
        Ok(ArEstimate {
            firm_id: design.firm_id.clone(),
            model: design.model,
            alpha: coefficients[0],
            betas,
            event_days,
            residuals,
            residual_days,
            s_i,
            dof,
            n_rows: n,
            n_calendar_days: design.n_calendar_days,
            columns: design.columns.clone(),
            coefficients: coefficients.iter().cloned().collect(),
            xtx_inverse,
        })
    }
}

/// OLS fit of a dummy design; dummy coefficients are the abnormal returns.
pub fn fit_ols(design: &DesignMatrix, returns: &DVector<f64>) -> Result<ArEstimate> {
    let ls = least_squares(&design.values, returns, design.max_condition).map_err(|e| match e {
        Error::SingularDesign { message, condition } => Error::SingularDesign {
            message: format!("firm {}: {message}", design.firm_id),
            condition,
        },
        other => other,
    })?;
    ArEstimate::from_coefficients(design, returns, &ls.coefficients, ls.xtx_inverse)
}

/// Two-step abnormal returns: fit the benchmark on every row outside the
/// event windows, then take realized minus predicted on the window rows.
///
/// Solved through the normal equations so that it shares no code path with
/// [`fit_ols`]; intended as a test oracle.
pub fn prediction_error_oracle(
    firm_id: &FirmId,
    panel: &ReturnPanel,
    factors: &FactorSeries,
    events: &[EventRecord],
    window: EventWindow,
    model: BenchmarkModel,
    config: &DesignConfig,
) -> Result<BTreeMap<(EventId, i32), f64>> {
    let firm = panel
        .firm_index(firm_id)
        .ok_or_else(|| Error::Contract(format!("firm {firm_id} not in panel")))?;
    let series = panel.firm_returns(firm);
    if panel.observations(firm) < config.min_obs {
        return Err(Error::InsufficientData(format!(
            "firm {firm_id} has fewer than {} returns",
            config.min_obs
        )));
    }
    let event_days = firm_event_days(firm_id, panel, events)?;
    let mut in_window = vec![false; series.len()];
    for (day, _) in &event_days {
        for off in window.offsets() {
            let t = *day as i64 + off as i64;
            if t >= 0 && (t as usize) < series.len() {
                in_window[t as usize] = true;
            }
        }
    }
    let est_rows: Vec<usize> = (0..series.len())
        .filter(|&t| series[t].is_some() && !in_window[t])
        .collect();
    let k = model.factor_count() + 1;
    if est_rows.len() <= k {
        return Err(Error::InsufficientData(format!(
            "firm {firm_id}: {} estimation rows",
            est_rows.len()
        )));
    }
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for &t in &est_rows {
        let x = factor_row(model, factors, t);
        let y = series[t].expect("estimation rows are non-missing");
        for i in 0..k {
            xty[i] += x[i] * y;
            for j in 0..k {
                xtx[(i, j)] += x[i] * x[j];
            }
        }
    }
    let chol = xtx.cholesky().ok_or_else(|| Error::SingularDesign {
        message: format!("firm {firm_id}: benchmark normal equations not positive definite"),
        condition: f64::INFINITY,
    })?;
    let b = chol.solve(&xty);

    let mut out = BTreeMap::new();
    for (day, e) in &event_days {
        for off in window.offsets() {
            let t = (*day as i64 + off as i64) as usize;
            let y = series.get(t).copied().flatten().ok_or_else(|| {
                Error::Contract(format!("event {} has no return at offset {off:+}", e.event_id))
            })?;
            let x = factor_row(model, factors, t);
            let pred: f64 = x.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
            out.insert((e.event_id.clone(), off), y - pred);
        }
    }
    Ok(out)
}

/// Fits every firm of `panel` that has at least one event, in firm-id order.
/// Firms are fitted in parallel; the output order does not depend on scheduling.
pub fn estimate_firms(
    panel: &ReturnPanel,
    factors: &FactorSeries,
    events: &[EventRecord],
    window: EventWindow,
    model: BenchmarkModel,
    config: &DesignConfig,
) -> Result<Vec<ArEstimate>> {
    let mut firms: Vec<&FirmId> = panel
        .firm_ids()
        .iter()
        .filter(|f| events.iter().any(|e| &e.firm_id == *f))
        .collect();
    firms.sort();
    firms
        .par_iter()
        .map(|firm| {
            let design = build_design(firm, panel, factors, events, window, model, config)?;
            let y = design.response(panel)?;
            fit_ols(&design, &y)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Each pair over the days where both firms have a residual.
    Pairwise,
    /// Every pair over the days where all firms have a residual.
    Balanced,
}

#[derive(Debug, Clone)]
pub struct ResidualCorrelation {
    pub firm_ids: Vec<FirmId>,
    pub matrix: DMatrix<f64>,
    /// Average of the strictly-upper-triangle entries.
    pub mean_offdiag: f64,
}

/// Cross-firm correlation matrix of benchmark residuals.
pub fn residual_correlation(
    estimates: &[ArEstimate],
    mode: CorrelationMode,
    min_overlap: usize,
) -> Result<ResidualCorrelation> {
    let n = estimates.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "residual correlation needs at least 2 firms, got {n}"
        )));
    }
    let n_days = estimates[0].n_calendar_days;
    if estimates.iter().any(|e| e.n_calendar_days != n_days) {
        return Err(Error::Contract("estimates come from different calendars".into()));
    }
    let series: Vec<Vec<Option<f64>>> = estimates.iter().map(|e| e.residual_series()).collect();

    let common: Vec<usize> = match mode {
        CorrelationMode::Balanced => {
            let days: Vec<usize> = (0..n_days)
                .filter(|&t| series.iter().all(|s| s[t].is_some()))
                .collect();
            if days.len() < min_overlap {
                return Err(Error::Coverage(format!(
                    "only {} days common to all {n} firms (need {min_overlap})",
                    days.len()
                )));
            }
            days
        }
        CorrelationMode::Pairwise => Vec::new(),
    };

    let mut matrix = DMatrix::identity(n, n);
    let mut a = Vec::with_capacity(n_days);
    let mut b = Vec::with_capacity(n_days);
    for i in 0..n {
        for j in (i + 1)..n {
            a.clear();
            b.clear();
            match mode {
                CorrelationMode::Balanced => {
                    for &t in &common {
                        a.push(series[i][t].unwrap());
                        b.push(series[j][t].unwrap());
                    }
                }
                CorrelationMode::Pairwise => {
                    for (x, y) in series[i].iter().zip(&series[j]) {
                        if let (Some(x), Some(y)) = (*x, *y) {
                            a.push(x);
                            b.push(y);
                        }
                    }
                    if a.len() < min_overlap {
                        return Err(Error::Coverage(format!(
                            "firms {} and {} share {} residual days (need {min_overlap})",
                            estimates[i].firm_id,
                            estimates[j].firm_id,
                            a.len()
                        )));
                    }
                }
            }
            let r = linalg::correlation(&a, &b);
            matrix[(i, j)] = r;
            matrix[(j, i)] = r;
        }
    }
    let pairs = n * (n - 1) / 2;
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += matrix[(i, j)];
        }
    }
    Ok(ResidualCorrelation {
        firm_ids: estimates.iter().map(|e| e.firm_id.clone()).collect(),
        matrix,
        mean_offdiag: sum / pairs as f64,
    })
}

pub const DIAGNOSTICS_HEADER: &str = "firm_id\tmodel\talpha\tbeta_mkt\tbeta_smb\tbeta_hml\ts_i\tdof";

pub fn write_diagnostics_tsv(mut w: impl Write, estimates: &[ArEstimate]) -> Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for e in estimates {
        let beta = |f: fn(&FactorBetas) -> f64| e.betas.as_ref().map(f).map(sig6).unwrap_or_else(|| "-".into());
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.firm_id,
            e.model.key(),
            sig6(e.alpha),
            beta(|b| b.mkt),
            beta(|b| b.smb),
            beta(|b| b.hml),
            sig6(e.s_i),
            e.dof
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{IncidentType, NewsSource, Sector, TradingCalendar};
    use chrono::NaiveDate;

    fn calendar(n: usize) -> TradingCalendar {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        TradingCalendar::new((0..n).map(|k| start + chrono::Duration::days(k as i64)).collect()).unwrap()
    }

    fn event(id: &str, firm: &str, date: NaiveDate) -> EventRecord {
        EventRecord {
            event_id: id.into(),
            firm_id: firm.into(),
            event_date: date,
            incident_type: IncidentType::DataBreach,
            sector: Sector::Technology,
            news_source: NewsSource::Reuters,
            market_cap_usd: None,
        }
    }

    fn six_day_fixture() -> (ReturnPanel, FactorSeries, Vec<EventRecord>) {
        let cal = calendar(6);
        let rets = [0.01, 0.02, 0.03, 0.04, 0.05, 0.10];
        let panel = ReturnPanel::new(vec!["F".into()], cal.clone(), rets.iter().map(|r| Some(*r)).collect()).unwrap();
        let zeros = vec![0.0; 6];
        let factors = FactorSeries::new(cal.clone(), zeros.clone(), zeros.clone(), zeros.clone(), zeros).unwrap();
        let events = vec![event("e", "F", cal.date(5))];
        (panel, factors, events)
    }

    fn tiny_config() -> DesignConfig {
        DesignConfig {
            min_obs: 1,
            ..DesignConfig::default()
        }
    }

    #[test]
    fn zero_model_six_day_example() {
        let (panel, factors, events) = six_day_fixture();
        let w = EventWindow::new(0, 0).unwrap();
        let d = build_design(&"F".into(), &panel, &factors, &events, w, BenchmarkModel::Zero, &tiny_config()).unwrap();
        assert_eq!(d.n_columns(), 2);
        let y = d.response(&panel).unwrap();
        let est = fit_ols(&d, &y).unwrap();
        assert!((est.alpha - 0.03).abs() < 1e-15);
        let ar = est.ar(&"e".into(), 0).unwrap();
        assert!((ar - 0.07).abs() < 1e-15);
        assert_eq!(est.dof, 4);
        // residuals {-2,-1,0,1,2} percent
        assert!((est.s_i - (0.001f64 / 4.0).sqrt()).abs() < 1e-15);
        let day = est.event_day(&"e".into(), 0).unwrap();
        assert!((day.leverage - 1.0).abs() < 1e-12);
        assert!((day.forecast_leverage - 0.2).abs() < 1e-12);

        let oracle = prediction_error_oracle(&"F".into(), &panel, &factors, &events, w, BenchmarkModel::Zero, &tiny_config()).unwrap();
        assert!((oracle[&("e".into(), 0)] - 0.07).abs() < 1e-15);
    }

    #[test]
    fn column_counts() {
        let n = 300;
        let cal = calendar(n);
        let panel = ReturnPanel::new(vec!["F".into()], cal.clone(), (0..n).map(|t| Some((t as f64 * 0.37).sin() * 0.01)).collect()).unwrap();
        let f = |k: f64| (0..n).map(|t| ((t as f64) * k).cos() * 0.01).collect::<Vec<_>>();
        let factors = FactorSeries::new(cal.clone(), f(0.11), f(0.23), f(0.71), vec![0.0; n]).unwrap();
        let events = vec![event("e", "F", cal.date(150))];
        let d = build_design(&"F".into(), &panel, &factors, &events, EventWindow::car_default(), BenchmarkModel::Ff3, &DesignConfig::default()).unwrap();
        assert_eq!(d.n_columns(), 7);
        assert_eq!(d.dummy_rows(), vec![149, 150, 151]);

        let overlapping = vec![event("a", "F", cal.date(100)), event("b", "F", cal.date(101))];
        let err = build_design(&"F".into(), &panel, &factors, &overlapping, EventWindow::car_default(), BenchmarkModel::Ff3, &DesignConfig::default());
        assert!(matches!(err, Err(Error::Validation(_))));

        let dup = FactorSeries::new(cal.clone(), f(0.11), f(0.11), f(0.71), vec![0.0; n]).unwrap();
        let d = build_design(&"F".into(), &panel, &dup, &events, EventWindow::car_default(), BenchmarkModel::Ff3, &DesignConfig::default()).unwrap();
        let y = d.response(&panel).unwrap();
        assert!(matches!(fit_ols(&d, &y), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn too_few_observations() {
        let (panel, factors, events) = six_day_fixture();
        let err = build_design(&"F".into(), &panel, &factors, &events, EventWindow::new(0, 0).unwrap(), BenchmarkModel::Zero, &DesignConfig::default());
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn correlation_identical_and_orthogonal() {
        let (panel, factors, events) = six_day_fixture();
        let w = EventWindow::new(0, 0).unwrap();
        let d = build_design(&"F".into(), &panel, &factors, &events, w, BenchmarkModel::Zero, &tiny_config()).unwrap();
        let y = d.response(&panel).unwrap();
        let a = fit_ols(&d, &y).unwrap();
        let mut b = a.clone();
        b.firm_id = "G".into();
        let rc = residual_correlation(&[a.clone(), b.clone()], CorrelationMode::Pairwise, 3).unwrap();
        assert!((rc.mean_offdiag - 1.0).abs() < 1e-15);

        // {-2,-1,0,1,2} is orthogonal to {2,-1,-2,-1,2} and both are centred.
        b.residuals = vec![2.0, -1.0, -2.0, -1.0, 2.0];
        let rc = residual_correlation(&[a.clone(), b.clone()], CorrelationMode::Balanced, 3).unwrap();
        assert!(rc.mean_offdiag.abs() < 1e-12);

        assert!(matches!(
            residual_correlation(&[a.clone(), b], CorrelationMode::Pairwise, 60),
            Err(Error::Coverage(_))
        ));
        assert!(residual_correlation(&[a], CorrelationMode::Pairwise, 1).is_err());
    }
}
