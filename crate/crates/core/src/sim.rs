//! Seeded factor-model panels with equicorrelated residuals and
//! event-induced variance, and empirical size/power of the test statistics.

use std::io::Write;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::benchmark::{estimate_firms, BenchmarkModel, DesignConfig};
use crate::data::{
    EventId, EventRecord, EventWindow, FactorSeries, FirmId, IncidentType, NewsSource, ReturnPanel, Sector,
    TradingCalendar,
};
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::stats::{compute_r_bar, stat_report, LeverageRule, RBarMethod, StatOptions, StatReport};
use crate::sur::{assemble_system, fit_sur, SurOptions};

pub const MKT_VOL: f64 = 0.01;
pub const SMB_VOL: f64 = 0.005;
pub const HML_VOL: f64 = 0.005;
pub const MKT_DRIFT: f64 = 0.0003;
pub const RESIDUAL_VOL: f64 = 0.02;
pub const RISK_FREE: f64 = 0.0001;
/// Uniform ranges for the per-firm factor loadings.
pub const BETA_MKT_RANGE: (f64, f64) = (0.5, 1.5);
pub const BETA_SMB_RANGE: (f64, f64) = (-0.5, 1.0);
pub const BETA_HML_RANGE: (f64, f64) = (-0.5, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalValues {
    #[default]
    Normal,
    /// Student t with `n - 1` degrees of freedom.
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_firms: usize,
    pub n_days: usize,
    pub n_events: usize,
    pub events_clustered: bool,
    pub rho: f64,
    pub event_var_multiplier: f64,
    /// Total abnormal return spread evenly over the window days.
    pub injected_car: f64,
    pub window: EventWindow,
    pub seed: u64,
    pub n_reps: usize,
    #[serde(default = "default_benchmark")]
    pub benchmark: BenchmarkModel,
    #[serde(default)]
    pub r_bar: RBarMethod,
    #[serde(default)]
    pub leverage: LeverageRule,
    #[serde(default)]
    pub fit_sur: bool,
    #[serde(default)]
    pub critical: CriticalValues,
}

fn default_benchmark() -> BenchmarkModel {
    BenchmarkModel::Ff3
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_firms: 48,
            n_days: 2219,
            n_events: 126,
            events_clustered: false,
            rho: 0.0,
            event_var_multiplier: 1.0,
            injected_car: 0.0,
            window: EventWindow::car_default(),
            seed: 20231,
            n_reps: 100,
            benchmark: BenchmarkModel::Ff3,
            r_bar: RBarMethod::default(),
            leverage: LeverageRule::default(),
            fit_sur: false,
            critical: CriticalValues::Normal,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.9).contains(&self.rho) {
            return Err(Error::Config(format!("rho = {} must lie in [0, 0.9]", self.rho)));
        }
        if !(self.event_var_multiplier >= 1.0) || !self.event_var_multiplier.is_finite() {
            return Err(Error::Config(format!(
                "event_var_multiplier = {} must be at least 1",
                self.event_var_multiplier
            )));
        }
        if !self.injected_car.is_finite() {
            return Err(Error::Config("injected_car must be finite".into()));
        }
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be at least 1".into()));
        }
        if self.n_firms == 0 {
            return Err(Error::Config("n_firms must be at least 1".into()));
        }
        if self.n_events < 2 {
            return Err(Error::Config("n_events must be at least 2".into()));
        }
        let per_firm = self.n_events.div_ceil(self.n_firms);
        let slots = self.n_days / self.slot_len();
        let needed = if self.events_clustered { per_firm } else { 2 * per_firm };
        if self.n_days < 100 + self.window.len() || slots < needed {
            return Err(Error::Config(format!(
                "{} days cannot hold {per_firm} non-overlapping events per firm",
                self.n_days
            )));
        }
        Ok(())
    }

    fn slot_len(&self) -> usize {
        2 * self.window.len() + 1
    }

    fn statistic_options(&self) -> StatOptions {
        StatOptions {
            car_window: self.window,
            leverage: self.leverage,
        }
    }
}

/// Weekdays starting on 2000-01-03.
pub fn weekday_calendar(n_days: usize) -> TradingCalendar {
    let mut days = Vec::with_capacity(n_days);
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    while days.len() < n_days {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            days.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    TradingCalendar::new(days).expect("weekdays are increasing")
}

#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: ReturnPanel,
    pub factors: FactorSeries,
    pub events: Vec<EventRecord>,
    /// Day-0 calendar index of each event.
    pub event_days: Vec<usize>,
}

/// Random generator for one replication: the seed picks the key, the
/// replication index the stream.
pub fn rep_rng(seed: u64, rep_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep_index);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws `count` day-0 indices that keep every pair at least `gap` apart
/// and leave room for the window.
fn spaced_days(rng: &mut ChaCha8Rng, count: usize, n_days: usize, window: EventWindow, gap: usize) -> Result<Vec<usize>> {
    let lo = window.pre_days;
    let hi = n_days - 1 - window.post_days;
    let mut days: Vec<usize> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..10_000 {
            let d = rng.random_range(lo..=hi);
            if days.iter().all(|&x| x.abs_diff(d) >= gap) {
                days.push(d);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!("could not place {count} spaced events in {n_days} days")));
        }
    }
    Ok(days)
}

fn event_record(k: usize, firm: &FirmId, date: NaiveDate) -> EventRecord {
    EventRecord {
        event_id: EventId(format!("E{k:04}")),
        firm_id: firm.clone(),
        event_date: date,
        incident_type: IncidentType::ALL[k % 3],
        sector: Sector::ALL[k % Sector::ALL.len()],
        news_source: NewsSource::ALL[k % NewsSource::ALL.len()],
        market_cap_usd: Some(1.0e9),
    }
}

/// One replication of the simulated market. Event `k` belongs to firm
/// `k mod n_firms`. Clustered events of the same round share a day;
/// scattered events get independent days per firm.
pub fn simulate_panel(config: &SimConfig, rep_index: u64) -> Result<SimulatedPanel> {
    config.validate()?;
    let mut rng = rep_rng(config.seed, rep_index);
    let (n, t_len) = (config.n_firms, config.n_days);
    let calendar = weekday_calendar(t_len);

    let mut mkt = Vec::with_capacity(t_len);
    let mut smb = Vec::with_capacity(t_len);
    let mut hml = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        mkt.push(MKT_DRIFT + MKT_VOL * normal(&mut rng));
        smb.push(SMB_VOL * normal(&mut rng));
        hml.push(HML_VOL * normal(&mut rng));
    }
    let betas: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                uniform(&mut rng, BETA_MKT_RANGE),
                uniform(&mut rng, BETA_SMB_RANGE),
                uniform(&mut rng, BETA_HML_RANGE),
            ]
        })
        .collect();

    let gap = config.slot_len();
    let event_days: Vec<usize> = if config.events_clustered {
        let rounds = config.n_events.div_ceil(n);
        let round_days = spaced_days(&mut rng, rounds, t_len, config.window, gap)?;
        (0..config.n_events).map(|k| round_days[k / n]).collect()
    } else {
        let mut per_firm: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (f, days) in per_firm.iter_mut().enumerate() {
            let count = (config.n_events + n - 1 - f) / n;
            *days = spaced_days(&mut rng, count, t_len, config.window, gap)?;
        }
        (0..config.n_events).map(|k| per_firm[k % n][k / n]).collect()
    };

    let firm_ids: Vec<FirmId> = (0..n).map(|i| FirmId(format!("F{i:03}"))).collect();
    let (a, b) = (config.rho.sqrt(), (1.0 - config.rho).sqrt());
    let mut cells = vec![0.0; n * t_len];
    for t in 0..t_len {
        let common = normal(&mut rng);
        for (i, beta) in betas.iter().enumerate() {
            let e = RESIDUAL_VOL * (a * common + b * normal(&mut rng));
            cells[i * t_len + t] = beta[0] * mkt[t] + beta[1] * smb[t] + beta[2] * hml[t] + e;
        }
    }
    // Residuals are re-scaled in place: the factor part is unchanged.
    let scale = config.event_var_multiplier.sqrt();
    let shift = config.injected_car / config.window.len() as f64;
    let mut touched = vec![false; n * t_len];
    for (k, &d) in event_days.iter().enumerate() {
        let i = k % n;
        for off in config.window.offsets() {
            let t = (d as i64 + off as i64) as usize;
            let cell = i * t_len + t;
            if !touched[cell] {
                let beta = &betas[i];
                let systematic = beta[0] * mkt[t] + beta[1] * smb[t] + beta[2] * hml[t];
                cells[cell] = systematic + scale * (cells[cell] - systematic);
                touched[cell] = true;
            }
            cells[cell] += shift;
        }
    }

    let events = event_days
        .iter()
        .enumerate()
        .map(|(k, &d)| event_record(k, &firm_ids[k % n], calendar.date(d)))
        .collect();
    let factors = FactorSeries::new(calendar.clone(), mkt, smb, hml, vec![RISK_FREE; t_len])?;
    let panel = ReturnPanel::new(firm_ids, calendar, cells.into_iter().map(Some).collect())?;
    Ok(SimulatedPanel {
        panel,
        factors,
        events,
        event_days,
    })
}

/// Fraction of replications rejecting at each two-sided nominal level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionRates {
    pub p10: f64,
    pub p05: f64,
    pub p01: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticRates {
    pub unadjusted_t: RejectionRates,
    pub bmp: RejectionRates,
    pub adj_patell: RejectionRates,
    pub adj_bmp: RejectionRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub rates: StatisticRates,
    pub mean_r_bar: f64,
    pub mean_car: f64,
    pub n_reps: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePowerReport {
    pub config: SimConfig,
    pub ols: EstimatorSummary,
    pub sur: Option<EstimatorSummary>,
}

#[derive(Debug, Clone, Copy)]
struct RepStats {
    t_unadjusted: f64,
    t_bmp: f64,
    t_adj_patell: f64,
    t_adj_bmp: f64,
    r_bar: f64,
    mean_car: f64,
}

impl From<&StatReport> for RepStats {
    fn from(r: &StatReport) -> Self {
        Self {
            t_unadjusted: r.t_unadjusted,
            t_bmp: r.t_bmp,
            t_adj_patell: r.t_adj_patell.unwrap_or(f64::NAN),
            t_adj_bmp: r.t_adj_bmp,
            r_bar: r.r_bar,
            mean_car: r.mean_car,
        }
    }
}

/// OLS (and optionally SUR) statistics of one simulated replication.
pub fn replicate(config: &SimConfig, rep_index: u64) -> Result<(StatReport, Option<StatReport>)> {
    let sim = simulate_panel(config, rep_index)?;
    let design = DesignConfig::default();
    let options = config.statistic_options();
    let ols = estimate_firms(&sim.panel, &sim.factors, &sim.events, config.window, config.benchmark, &design)?;
    let r_bar = compute_r_bar(&ols, &sim.events, config.r_bar)?;
    let ols_report = stat_report(&ols, &sim.events, r_bar, &options)?;
    let sur_report = if config.fit_sur {
        let system = assemble_system(&sim.panel, &sim.factors, &sim.events, config.window, config.benchmark, &design)?;
        let sur = fit_sur(&system, &SurOptions::default())?;
        let r_bar = compute_r_bar(&sur.estimates, &sim.events, config.r_bar)?;
        Some(stat_report(&sur.estimates, &sim.events, r_bar, &options)?)
    } else {
        None
    };
    Ok((ols_report, sur_report))
}

fn critical_values(kind: CriticalValues, n_events: usize) -> [f64; 3] {
    let q = [0.95, 0.975, 0.995];
    match kind {
        CriticalValues::Normal => {
            let d = Normal::standard();
            q.map(|p| d.inverse_cdf(p))
        }
        CriticalValues::StudentT => {
            let d = StudentsT::new(0.0, 1.0, (n_events - 1) as f64).expect("positive dof");
            q.map(|p| d.inverse_cdf(p))
        }
    }
}

fn rates(ts: &[f64], crit: &[f64; 3]) -> RejectionRates {
    let n = ts.len() as f64;
    let frac = |c: f64| ts.iter().filter(|t| t.abs() > c).count() as f64 / n;
    RejectionRates {
        p10: frac(crit[0]),
        p05: frac(crit[1]),
        p01: frac(crit[2]),
    }
}

/// Failed replications are tolerated up to 1% of the total.
fn summarize(outcomes: &[Option<RepStats>], crit: &[f64; 3], label: &str) -> Result<EstimatorSummary> {
    let ok: Vec<RepStats> = outcomes.iter().flatten().copied().collect();
    let n_failed = outcomes.len() - ok.len();
    if ok.is_empty() || n_failed * 100 > outcomes.len() {
        return Err(Error::Numerical(format!(
            "{n_failed} of {} {label} replications failed",
            outcomes.len()
        )));
    }
    let pick = |f: fn(&RepStats) -> f64| ok.iter().map(f).collect::<Vec<_>>();
    let n = ok.len() as f64;
    Ok(EstimatorSummary {
        rates: StatisticRates {
            unadjusted_t: rates(&pick(|r| r.t_unadjusted), crit),
            bmp: rates(&pick(|r| r.t_bmp), crit),
            adj_patell: rates(&pick(|r| r.t_adj_patell), crit),
            adj_bmp: rates(&pick(|r| r.t_adj_bmp), crit),
        },
        mean_r_bar: ok.iter().map(|r| r.r_bar).sum::<f64>() / n,
        mean_car: ok.iter().map(|r| r.mean_car).sum::<f64>() / n,
        n_reps: ok.len(),
        n_failed,
    })
}

/// Runs every replication (in parallel, collected in replication order) and
/// tallies rejections.
pub fn run_size_power(config: &SimConfig) -> Result<SizePowerReport> {
    config.validate()?;
    let outcomes: Vec<(Option<RepStats>, Option<RepStats>)> = (0..config.n_reps as u64)
        .into_par_iter()
        .map(|rep| match replicate(config, rep) {
            Ok((ols, sur)) => (Some(RepStats::from(&ols)), sur.as_ref().map(RepStats::from)),
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                (None, None)
            }
        })
        .collect();
    let crit = critical_values(config.critical, config.n_events);
    let ols: Vec<Option<RepStats>> = outcomes.iter().map(|o| o.0).collect();
    let sur = if config.fit_sur {
        let s: Vec<Option<RepStats>> = outcomes.iter().map(|o| o.1).collect();
        Some(summarize(&s, &crit, "SUR")?)
    } else {
        None
    };
    Ok(SizePowerReport {
        config: config.clone(),
        ols: summarize(&ols, &crit, "OLS")?,
        sur,
    })
}

pub const SIZE_POWER_HEADER: &str = "estimator\tstatistic\treject_10\treject_05\treject_01\tmean_r_bar\tmean_car\tn_reps\tn_failed";

pub fn write_size_power_tsv(mut w: impl Write, report: &SizePowerReport) -> Result<()> {
    writeln!(w, "{SIZE_POWER_HEADER}")?;
    let mut blocks = vec![("ols", &report.ols)];
    if let Some(s) = &report.sur {
        blocks.push(("sur", s));
    }
    for (label, s) in blocks {
        let r = &s.rates;
        for (name, rr) in [
            ("unadjusted_t", r.unadjusted_t),
            ("bmp", r.bmp),
            ("adj_patell", r.adj_patell),
            ("adj_bmp", r.adj_bmp),
        ] {
            writeln!(
                w,
                "{label}\t{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                sig6(rr.p10),
                sig6(rr.p05),
                sig6(rr.p01),
                sig6(s.mean_r_bar),
                sig6(s.mean_car),
                s.n_reps,
                s.n_failed
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            n_firms: 6,
            n_days: 300,
            n_events: 12,
            n_reps: 4,
            ..SimConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(small().validate().is_ok());
        assert!(SimConfig { rho: 1.5, ..small() }.validate().is_err());
        assert!(SimConfig { event_var_multiplier: 0.5, ..small() }.validate().is_err());
        assert!(SimConfig { n_reps: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn deterministic_per_rep() {
        let c = small();
        let a = simulate_panel(&c, 3).unwrap();
        let b = simulate_panel(&c, 3).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.events, b.events);
        let other = simulate_panel(&c, 4).unwrap();
        assert_ne!(a.panel, other.panel);
    }

    #[test]
    fn clustered_rounds_share_days() {
        let c = SimConfig { events_clustered: true, ..small() };
        let s = simulate_panel(&c, 0).unwrap();
        assert_eq!(s.event_days[0], s.event_days[5]);
        assert_ne!(s.event_days[0], s.event_days[6]);
        assert_eq!(s.event_days[6], s.event_days[11]);
    }

    #[test]
    fn injected_shift_lands_on_window() {
        let base = SimConfig { rho: 0.3, ..small() };
        let shifted = SimConfig { injected_car: -0.03, ..base.clone() };
        let a = simulate_panel(&base, 0).unwrap();
        let b = simulate_panel(&shifted, 0).unwrap();
        let firm = 0;
        let d = a.event_days[0];
        for t in d - 1..=d + 1 {
            let diff = b.panel.get(firm, t).unwrap() - a.panel.get(firm, t).unwrap();
            assert!((diff + 0.01).abs() < 1e-15);
        }
        assert_eq!(a.panel.get(firm, d + 5), b.panel.get(firm, d + 5));
    }

    #[test]
    fn report_is_in_unit_interval() {
        let r = run_size_power(&small()).unwrap();
        for x in [r.ols.rates.adj_bmp.p05, r.ols.rates.unadjusted_t.p10] {
            assert!((0.0..=1.0).contains(&x));
        }
        assert_eq!(r.ols.n_reps, 4);
    }
}
