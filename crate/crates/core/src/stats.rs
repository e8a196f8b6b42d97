//! Scaled abnormal returns and the cross-sectional test statistics: the
//! unadjusted t, and the cross-correlation adjusted Patell and BMP t.
//!
//! `A = AR / (s_i * sqrt(1 + h))` is the scaled abnormal return. For a
//! multi-day window the summed AR is divided by `s_i * sqrt(sum(1 + h_t))`.
//! With `r` the average residual cross-correlation and `n` events,
//!
//! ```text
//! s_A^2 = s^2 / (1 - r)
//! t_BMP = mean(A) sqrt(n) / (s_A sqrt(1 + (n-1) r))
//! t_PAT = mean(A) sqrt(n) / (sqrt((m-p-1)/(m-p-3)) sqrt(1 + (n-1) r))
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::benchmark::{residual_correlation, ArEstimate, CorrelationMode};
use crate::data::{EventId, EventRecord, EventWindow, FirmId};
use crate::error::{Error, Result};
use crate::format::{sig6, sig6_opt};
use crate::linalg;

/// Which leverage enters the scaled-AR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeverageRule {
    /// Hat-matrix diagonal of the full dummy design (1 on every dummy row).
    #[default]
    FullDesign,
    /// Forecast leverage of the benchmark regressors without the event days.
    Forecast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledAr {
    pub event_id: EventId,
    pub firm_id: FirmId,
    pub window_offsets: Vec<i32>,
    pub a_values: Vec<f64>,
    pub a_window: f64,
    /// Sum of the window ARs.
    pub car: f64,
}

/// Scaled abnormal returns of one event over `car_window`.
pub fn scale_ar(
    estimate: &ArEstimate,
    event_id: &EventId,
    car_window: EventWindow,
    rule: LeverageRule,
) -> Result<ScaledAr> {
    if !(estimate.s_i > 0.0) {
        return Err(Error::Degenerate(format!(
            "firm {} has zero residual standard deviation",
            estimate.firm_id
        )));
    }
    let mut offsets = Vec::with_capacity(car_window.len());
    let mut a_values = Vec::with_capacity(car_window.len());
    let mut car = 0.0;
    let mut var_units = 0.0;
    for offset in car_window.offsets() {
        let day = estimate.event_day(event_id, offset).ok_or_else(|| {
            Error::Contract(format!(
                "event {event_id} has no abnormal return at offset {offset:+} in firm {}",
                estimate.firm_id
            ))
        })?;
        let h = match rule {
            LeverageRule::FullDesign => day.leverage,
            LeverageRule::Forecast => day.forecast_leverage,
        };
        offsets.push(offset);
        a_values.push(day.ar / (estimate.s_i * (1.0 + h).sqrt()));
        car += day.ar;
        var_units += 1.0 + h;
    }
    Ok(ScaledAr {
        event_id: event_id.clone(),
        firm_id: estimate.firm_id.clone(),
        window_offsets: offsets,
        a_values,
        a_window: car / (estimate.s_i * var_units.sqrt()),
        car,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SarVariance {
    pub s2: f64,
    pub sa2: f64,
    /// True when every scaled AR is identical (`s2 == 0`).
    pub degenerate: bool,
}

pub fn sar_variance(values: &[f64], r_bar: f64) -> Result<SarVariance> {
    if !(r_bar < 1.0) {
        return Err(Error::InvalidCorrelation(format!("r_bar = {r_bar} must be below 1")));
    }
    let s2 = linalg::sample_variance(values).ok_or_else(|| {
        Error::InsufficientData(format!("{} scaled ARs, need at least 2", values.len()))
    })?;
    Ok(SarVariance {
        s2,
        sa2: s2 / (1.0 - r_bar),
        degenerate: s2 == 0.0,
    })
}

fn correlation_factor(n: usize, r_bar: f64) -> Result<f64> {
    let f = 1.0 + (n as f64 - 1.0) * r_bar;
    if !(f > 0.0) {
        return Err(Error::InvalidCorrelation(format!(
            "1 + (n-1) r_bar = {f} is not positive (n = {n}, r_bar = {r_bar})"
        )));
    }
    Ok(f)
}

/// Cross-correlation and event-variance adjusted BMP statistic.
pub fn adj_bmp(values: &[f64], r_bar: f64) -> Result<f64> {
    let v = sar_variance(values, r_bar)?;
    if v.degenerate {
        return Err(Error::Degenerate("scaled ARs have zero cross-sectional variance".into()));
    }
    let n = values.len();
    let factor = correlation_factor(n, r_bar)?;
    let mean = linalg::mean(values).expect("n >= 2");
    Ok(mean * (n as f64).sqrt() / (v.sa2.sqrt() * factor.sqrt()))
}

/// Cross-correlation adjusted Patell statistic; `m` days in the regression,
/// `p` explanatory variables besides the constant.
pub fn adj_patell(values: &[f64], r_bar: f64, m: usize, p: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no scaled ARs".into()));
    }
    if m <= p + 3 {
        return Err(Error::InsufficientData(format!(
            "m = {m} days must exceed p + 3 = {}",
            p + 3
        )));
    }
    let n = values.len();
    let factor = correlation_factor(n, r_bar)?;
    let dof = ((m - p - 1) as f64 / (m - p - 3) as f64).sqrt();
    let mean = linalg::mean(values).expect("non-empty");
    Ok(mean * (n as f64).sqrt() / (dof * factor.sqrt()))
}

/// Cross-sectional t of raw CARs: `mean * sqrt(n) / sd`.
pub fn unadjusted_t(cars: &[f64]) -> Result<f64> {
    let var = linalg::sample_variance(cars)
        .ok_or_else(|| Error::InsufficientData(format!("{} CARs, need at least 2", cars.len())))?;
    if var == 0.0 {
        return Err(Error::Degenerate("CARs have zero cross-sectional variance".into()));
    }
    let mean = linalg::mean(cars).expect("n >= 2");
    Ok(mean * (cars.len() as f64).sqrt() / var.sqrt())
}

/// How the average residual cross-correlation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum RBarMethod {
    /// Mean off-diagonal of the firm-by-firm residual correlation matrix on
    /// calendar days.
    FirmCalendar { mode: CorrelationMode, min_overlap: usize },
    /// Mean correlation over event pairs of residuals aligned in event time
    /// (day `d_a + k` of one firm against day `d_b + k` of the other).
    EventAligned { min_overlap: usize },
    /// A fixed value supplied by the caller.
    Fixed { value: f64 },
}

impl Default for RBarMethod {
    fn default() -> Self {
        RBarMethod::EventAligned { min_overlap: 60 }
    }
}

fn locate<'a>(estimates: &'a [ArEstimate], event_id: &EventId) -> Result<&'a ArEstimate> {
    estimates
        .iter()
        .find(|e| e.has_event(event_id))
        .ok_or_else(|| Error::Contract(format!("event {event_id} was not estimated")))
}

/// Average event-time-aligned residual correlation across event pairs.
pub fn event_aligned_r_bar(
    estimates: &[ArEstimate],
    events: &[EventRecord],
    min_overlap: usize,
) -> Result<f64> {
    let mut series = Vec::with_capacity(events.len());
    let mut cache: Vec<(FirmId, Vec<f64>)> = Vec::new();
    for e in events {
        let est = locate(estimates, &e.event_id)?;
        let day0 = est
            .event_day(&e.event_id, 0)
            .ok_or_else(|| Error::Contract(format!("event {} has no day-0 dummy", e.event_id)))?
            .day;
        let idx = match cache.iter().position(|(f, _)| f == &est.firm_id) {
            Some(i) => i,
            None => {
                let dense = est.residual_series().into_iter().map(|r| r.unwrap_or(f64::NAN)).collect();
                cache.push((est.firm_id.clone(), dense));
                cache.len() - 1
            }
        };
        series.push((idx, day0));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..series.len() {
        for j in (i + 1)..series.len() {
            let (fi, di) = series[i];
            let (fj, dj) = series[j];
            let (si, sj) = (&cache[fi].1, &cache[fj].1);
            // Shift both series so that day 0 of each event lines up.
            let before = di.min(dj);
            let after = (si.len() - di).min(sj.len() - dj);
            let a = &si[di - before..di + after];
            let b = &sj[dj - before..dj + after];
            if let Some(r) = aligned_correlation(a, b, min_overlap) {
                sum += r;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::InsufficientData(format!(
            "no event pair shares {min_overlap} aligned residual days"
        )));
    }
    Ok(sum / pairs as f64)
}

/// Correlation over the positions where neither series is NaN, or `None`
/// when fewer than `min_overlap` positions remain.
fn aligned_correlation(a: &[f64], b: &[f64], min_overlap: usize) -> Option<f64> {
    let (mut n, mut sa, mut sb) = (0usize, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        if !x.is_nan() && !y.is_nan() {
            n += 1;
            sa += x;
            sb += y;
        }
    }
    if n < min_overlap.max(2) {
        return None;
    }
    let (ma, mb) = (sa / n as f64, sb / n as f64);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        if !x.is_nan() && !y.is_nan() {
            let (dx, dy) = (x - ma, y - mb);
            sab += dx * dy;
            saa += dx * dx;
            sbb += dy * dy;
        }
    }
    if saa == 0.0 || sbb == 0.0 {
        return Some(0.0);
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// r-bar for an estimator run, computed once and passed to [`stat_report`].
pub fn compute_r_bar(estimates: &[ArEstimate], events: &[EventRecord], method: RBarMethod) -> Result<f64> {
    match method {
        RBarMethod::FirmCalendar { mode, min_overlap } => {
            Ok(residual_correlation(estimates, mode, min_overlap)?.mean_offdiag)
        }
        RBarMethod::EventAligned { min_overlap } => event_aligned_r_bar(estimates, events, min_overlap),
        RBarMethod::Fixed { value } => Ok(value),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatOptions {
    pub car_window: EventWindow,
    pub leverage: LeverageRule,
}

impl Default for StatOptions {
    fn default() -> Self {
        Self {
            car_window: EventWindow::car_default(),
            leverage: LeverageRule::default(),
        }
    }
}

/// Average CAR and the three test statistics over a set of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub mean_car: f64,
    pub n: usize,
    pub r_bar: f64,
    pub s2: f64,
    pub sa2: f64,
    pub t_unadjusted: f64,
    /// Absent when firms use different numbers of regression days.
    pub t_adj_patell: Option<f64>,
    pub t_adj_bmp: f64,
    /// BMP statistic without the cross-correlation adjustment.
    pub t_bmp: f64,
    /// Days in the regression, when common to all firms.
    pub m: Option<usize>,
    pub p: usize,
}

pub fn stat_report(
    estimates: &[ArEstimate],
    events: &[EventRecord],
    r_bar: f64,
    options: &StatOptions,
) -> Result<StatReport> {
    if events.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "cross-sectional statistics need at least 2 events, got {}",
            events.len()
        )));
    }
    let mut cars = Vec::with_capacity(events.len());
    let mut scaled = Vec::with_capacity(events.len());
    for e in events {
        let est = locate(estimates, &e.event_id)?;
        let s = scale_ar(est, &e.event_id, options.car_window, options.leverage)?;
        cars.push(s.car);
        scaled.push(s.a_window);
    }
    let p = estimates
        .first()
        .map(|e| e.model.factor_count())
        .unwrap_or_default();
    let m = estimates
        .first()
        .map(|e| e.n_rows)
        .filter(|m| estimates.iter().all(|e| e.n_rows == *m));
    let var = sar_variance(&scaled, r_bar)?;
    Ok(StatReport {
        mean_car: linalg::mean(&cars).expect("n >= 2"),
        n: events.len(),
        r_bar,
        s2: var.s2,
        sa2: var.sa2,
        t_unadjusted: unadjusted_t(&cars)?,
        t_adj_patell: m.map(|m| adj_patell(&scaled, r_bar, m, p)).transpose()?,
        t_adj_bmp: adj_bmp(&scaled, r_bar)?,
        t_bmp: adj_bmp(&scaled, 0.0)?,
        m,
        p,
    })
}

pub const TABLE1_HEADER: &str =
    "model\tbenchmark\tmean_car_pct\tt_unadj\tt_adj_patell\tt_adj_bmp\tn_incidents\tn_days";

/// One Table-1 line: estimator label, benchmark label and the report.
pub fn write_table1_row(mut w: impl Write, model: &str, benchmark: &str, r: &StatReport) -> Result<()> {
    writeln!(
        w,
        "{model}\t{benchmark}\t{}\t{}\t{}\t{}\t{}\t{}",
        sig6(r.mean_car * 100.0),
        sig6(r.t_unadjusted),
        sig6_opt(r.t_adj_patell),
        sig6(r.t_adj_bmp),
        r.n,
        r.m.map(|m| m.to_string()).unwrap_or_else(|| "-".into())
    )?;
    Ok(())
}
