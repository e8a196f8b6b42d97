#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use evstud::benchmark::{build_design, BenchmarkModel, DesignConfig, DesignMatrix, Sampling};
use evstud::data::{
    EventId, EventRecord, EventWindow, FactorSeries, FirmId, IncidentType, NewsSource, ReturnPanel, Sector,
    TradingCalendar,
};
use evstud::sur::SurSystem;

pub struct RandomFixture {
    pub panel: ReturnPanel,
    pub factors: FactorSeries,
    pub events: Vec<EventRecord>,
    pub window: EventWindow,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Consecutive calendar days from 2015-01-01 (weekends included; the
/// estimators do not care).
pub fn daily_calendar(n: usize) -> TradingCalendar {
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    TradingCalendar::new((0..n).map(|k| start + Duration::days(k as i64)).collect()).unwrap()
}

pub struct Shape {
    pub firms: (usize, usize),
    pub days: (usize, usize),
    pub events_per_firm: (usize, usize),
    /// Probability that a day outside every event window is missing.
    pub missing: f64,
}

/// Random factor panel with noisy returns, spaced events and, optionally,
/// missing days away from the event windows.
pub fn random_fixture(rng: &mut ChaCha8Rng, shape: &Shape, window: EventWindow) -> RandomFixture {
    let n_firms = rng.random_range(shape.firms.0..=shape.firms.1);
    let n_days = rng.random_range(shape.days.0..=shape.days.1);
    let cal = daily_calendar(n_days);
    let g = |rng: &mut ChaCha8Rng, s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let mkt: Vec<f64> = (0..n_days).map(|_| g(rng, 0.01)).collect();
    let smb: Vec<f64> = (0..n_days).map(|_| g(rng, 0.005)).collect();
    let hml: Vec<f64> = (0..n_days).map(|_| g(rng, 0.005)).collect();
    let factors = FactorSeries::new(cal.clone(), mkt.clone(), smb.clone(), hml.clone(), vec![0.0; n_days]).unwrap();

    let gap = 2 * window.len() + 1;
    let mut events = Vec::new();
    let mut cells = Vec::with_capacity(n_firms * n_days);
    let mut firm_ids = Vec::new();
    for f in 0..n_firms {
        let firm = FirmId(format!("F{f:03}"));
        let k = rng.random_range(shape.events_per_firm.0..=shape.events_per_firm.1);
        let mut days: Vec<usize> = Vec::new();
        while days.len() < k {
            let d = rng.random_range(window.pre_days..n_days - window.post_days);
            if days.iter().all(|&x| x.abs_diff(d) >= gap) {
                days.push(d);
            }
        }
        days.sort();
        let mut protected = vec![false; n_days];
        for &d in &days {
            protected[d - window.pre_days..=d + window.post_days].fill(true);
        }
        let b = [rng.random_range(0.5..1.5), rng.random_range(-0.5..1.0), rng.random_range(-0.5..0.5)];
        let alpha = g(rng, 0.0005);
        for t in 0..n_days {
            let e = g(rng, 0.02);
            let r = alpha + b[0] * mkt[t] + b[1] * smb[t] + b[2] * hml[t] + e;
            let missing = !protected[t] && rng.random::<f64>() < shape.missing;
            cells.push((!missing).then_some(r));
        }
        for (j, &d) in days.iter().enumerate() {
            events.push(EventRecord {
                event_id: EventId(format!("F{f:03}E{j}")),
                firm_id: firm.clone(),
                event_date: cal.date(d),
                incident_type: IncidentType::DataBreach,
                sector: Sector::Technology,
                news_source: NewsSource::Reuters,
                market_cap_usd: Some(1e9),
            });
        }
        firm_ids.push(firm);
    }
    RandomFixture {
        panel: ReturnPanel::new(firm_ids, cal, cells).unwrap(),
        factors,
        events,
        window,
    }
}

pub fn loose_config() -> DesignConfig {
    DesignConfig {
        min_obs: 20,
        ..DesignConfig::default()
    }
}

/// Balanced SUR system with cross-correlated errors.
pub fn random_system(rng: &mut ChaCha8Rng, n_firms: usize, n_days: usize, rho: f64, window: EventWindow, model: BenchmarkModel) -> SurSystem {
    let shape = Shape {
        firms: (n_firms, n_firms),
        days: (n_days, n_days),
        events_per_firm: (1, 2),
        missing: 0.0,
    };
    let mut fx = random_fixture(rng, &shape, window);
    // Add a common shock so Sigma has real off-diagonal mass.
    let common: Vec<f64> = (0..n_days).map(|_| 0.02 * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut cells = Vec::new();
    for f in 0..fx.panel.n_firms() {
        for t in 0..n_days {
            cells.push(fx.panel.get(f, t).map(|r| r + rho.sqrt() * common[t]));
        }
    }
    fx.panel = ReturnPanel::new(fx.panel.firm_ids().to_vec(), fx.panel.calendar().clone(), cells).unwrap();
    system_from(&fx, model, &fx.events)
}

pub fn system_from(fx: &RandomFixture, model: BenchmarkModel, events: &[EventRecord]) -> SurSystem {
    let cfg = DesignConfig {
        sampling: Sampling::Balanced,
        ..loose_config()
    };
    let (designs, returns): (Vec<DesignMatrix>, Vec<DVector<f64>>) = fx
        .panel
        .firm_ids()
        .iter()
        .map(|f| {
            let d = build_design(f, &fx.panel, &fx.factors, events, fx.window, model, &cfg).unwrap();
            let y = d.response(&fx.panel).unwrap();
            (d, y)
        })
        .unzip();
    SurSystem::from_designs(designs, returns).unwrap()
}

/// Brute-force GLS on the explicitly stacked system with weight
/// `Sigma^{-1} (x) I_T`.
pub fn dense_gls(system: &SurSystem, sigma: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = system.designs.len();
    let t = system.designs[0].values.nrows();
    let ks: Vec<usize> = system.designs.iter().map(|d| d.values.ncols()).collect();
    let k_total: usize = ks.iter().sum();
    let mut z = DMatrix::<f64>::zeros(n * t, k_total);
    let mut y = DVector::<f64>::zeros(n * t);
    let mut col = 0;
    for (i, d) in system.designs.iter().enumerate() {
        z.view_mut((i * t, col), (t, ks[i])).copy_from(&d.values);
        y.rows_mut(i * t, t).copy_from(&system.returns[i]);
        col += ks[i];
    }
    let sigma_inv = sigma.clone().try_inverse().unwrap();
    let omega_inv = sigma_inv.kronecker(&DMatrix::<f64>::identity(t, t));
    let zt_w = z.transpose() * omega_inv;
    let lhs = &zt_w * &z;
    let rhs = &zt_w * &y;
    let beta = lhs.lu().solve(&rhs).unwrap();
    let mut out = Vec::new();
    let mut col = 0;
    for k in ks {
        out.push(beta.rows(col, k).into_owned());
        col += k;
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest difference relative to the largest coefficient magnitude.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return max_abs_diff(a, b);
    }
    max_abs_diff(a, b) / scale
}
