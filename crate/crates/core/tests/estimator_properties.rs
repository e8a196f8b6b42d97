mod common;

use chrono::NaiveDate;
use nalgebra::DVector;
use proptest::prelude::*;

use common::{daily_calendar, loose_config, random_fixture, rng, Shape};
use evstud::benchmark::{
    build_design, estimate_firms, fit_ols, prediction_error_oracle, residual_correlation, BenchmarkModel,
    CorrelationMode, DesignConfig,
};
use evstud::data::{
    apply_sample_filters, validate_no_overlap, EventId, EventRecord, EventWindow, FactorSeries, FilterConfig, FirmId,
    IncidentType, NewsSource, ReturnPanel, Sector,
};
use evstud::Error;

fn event(id: &str, firm: &str, date: NaiveDate) -> EventRecord {
    EventRecord {
        event_id: EventId(id.into()),
        firm_id: FirmId(firm.into()),
        event_date: date,
        incident_type: IncidentType::DataBreach,
        sector: Sector::Technology,
        news_source: NewsSource::Reuters,
        market_cap_usd: Some(1e9),
    }
}

fn small_shape() -> Shape {
    Shape {
        firms: (2, 6),
        days: (120, 300),
        events_per_firm: (1, 4),
        missing: 0.05,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dummy_coefficients_equal_prediction_errors(seed in any::<u64>(), pre in 0usize..3, post in 0usize..3, zero in any::<bool>()) {
        let window = EventWindow::new(pre, post).unwrap();
        let fx = random_fixture(&mut rng(seed), &small_shape(), window);
        let model = if zero { BenchmarkModel::Zero } else { BenchmarkModel::Ff3 };
        let cfg = loose_config();
        for firm in fx.panel.firm_ids() {
            let d = build_design(firm, &fx.panel, &fx.factors, &fx.events, window, model, &cfg).unwrap();
            let y = d.response(&fx.panel).unwrap();
            let est = fit_ols(&d, &y).unwrap();
            let oracle = prediction_error_oracle(firm, &fx.panel, &fx.factors, &fx.events, window, model, &cfg).unwrap();
            prop_assert_eq!(oracle.len(), est.event_days.len());
            for day in &est.event_days {
                let o = oracle[&(day.event_id.clone(), day.offset)];
                prop_assert!((o - day.ar).abs() < 1e-10, "{} vs {}", o, day.ar);
            }
            // Normal-equation orthogonality on every row (dummy rows included).
            let b = DVector::from_column_slice(&est.coefficients);
            let e = &y - &d.values * &b;
            let xte = d.values.transpose() * &e;
            prop_assert!(xte.amax() <= 1e-10 * d.values.norm());
            for &r in &d.dummy_rows() {
                prop_assert!(e[r].abs() < 1e-12);
            }
            prop_assert_eq!(est.dof, d.n_rows() - d.n_columns());
        }
    }

    #[test]
    fn overlapping_windows_are_rejected(gap in 1i64..8, pre in 0usize..3, post in 0usize..3) {
        let cal = daily_calendar(40);
        let window = EventWindow::new(pre, post).unwrap();
        let d0 = cal.date(10);
        let events = vec![event("a", "F", d0), event("b", "F", d0 + chrono::Duration::days(gap))];
        let result = validate_no_overlap(&events, &cal, window);
        if gap as usize > pre + post {
            prop_assert!(result.is_ok());
        } else {
            prop_assert!(matches!(result, Err(Error::Validation(_))));
        }
    }

    #[test]
    fn filters_partition_the_events(seed in any::<u64>(), floor in 0.0f64..2e9) {
        let mut fx = random_fixture(&mut rng(seed), &small_shape(), EventWindow::car_default());
        for (k, e) in fx.events.iter_mut().enumerate() {
            e.market_cap_usd = if k % 5 == 0 { None } else { Some(1e8 * (k % 23) as f64) };
        }
        let cfg = FilterConfig { cap_floor_usd: floor, min_obs: 50, ..FilterConfig::default() };
        let out = apply_sample_filters(&fx.events, &fx.panel, &cfg);
        prop_assert_eq!(out.kept.len() + out.dropped.len(), fx.events.len());
        let mut seen: Vec<&EventId> = out.kept.iter().map(|e| &e.event_id).chain(out.dropped.iter().map(|(e, _)| &e.event_id)).collect();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), fx.events.len());
        for e in &out.kept {
            prop_assert!(e.market_cap_usd.is_none_or(|c| c >= floor));
        }
    }
}

#[test]
fn scaling_returns_and_factors_scales_ars() {
    let fx = random_fixture(&mut rng(11), &small_shape(), EventWindow::car_default());
    let c = 3.5;
    let cal = fx.panel.calendar().clone();
    let f = &fx.factors;
    let scale = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
    let factors = FactorSeries::new(cal.clone(), scale(&f.mkt_excess), scale(&f.smb), scale(&f.hml), f.rf.clone()).unwrap();
    let cells: Vec<Option<f64>> = (0..fx.panel.n_firms())
        .flat_map(|i| fx.panel.firm_returns(i).iter().map(|r| r.map(|x| x * c)).collect::<Vec<_>>())
        .collect();
    let panel = ReturnPanel::new(fx.panel.firm_ids().to_vec(), cal, cells).unwrap();
    let w = EventWindow::car_default();
    let a = estimate_firms(&fx.panel, &fx.factors, &fx.events, w, BenchmarkModel::Ff3, &loose_config()).unwrap();
    let b = estimate_firms(&panel, &factors, &fx.events, w, BenchmarkModel::Ff3, &loose_config()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((y.s_i - c * x.s_i).abs() <= 1e-12 * y.s_i);
        for (dx, dy) in x.event_days.iter().zip(&y.event_days) {
            assert!((dy.ar - c * dx.ar).abs() <= 1e-12 * c * (dx.ar.abs() + x.s_i));
        }
    }
}

#[test]
fn noiseless_returns_give_the_injected_ar() {
    let n = 250;
    let cal = daily_calendar(n);
    let r = |k: usize, a: f64| ((k as f64 * a).sin()) * 0.01;
    let mkt: Vec<f64> = (0..n).map(|k| r(k, 0.7)).collect();
    let smb: Vec<f64> = (0..n).map(|k| r(k, 1.3)).collect();
    let hml: Vec<f64> = (0..n).map(|k| r(k, 2.9)).collect();
    let factors = FactorSeries::new(cal.clone(), mkt.clone(), smb.clone(), hml.clone(), vec![0.0; n]).unwrap();
    let delta = -0.0123;
    let day = 140;
    let cells: Vec<Option<f64>> = (0..n)
        .map(|t| Some(0.0004 + 1.1 * mkt[t] + 0.3 * smb[t] - 0.2 * hml[t] + if t == day { delta } else { 0.0 }))
        .collect();
    let panel = ReturnPanel::new(vec![FirmId("F".into())], cal.clone(), cells).unwrap();
    let events = vec![event("e", "F", cal.date(day))];
    let w = EventWindow::new(0, 0).unwrap();
    let cfg = DesignConfig::default();
    let d = build_design(&FirmId("F".into()), &panel, &factors, &events, w, BenchmarkModel::Ff3, &cfg).unwrap();
    assert_eq!(d.n_columns(), 5);
    let est = fit_ols(&d, &d.response(&panel).unwrap()).unwrap();
    assert!((est.event_days[0].ar - delta).abs() < 1e-12);
    let oracle = prediction_error_oracle(&FirmId("F".into()), &panel, &factors, &events, w, BenchmarkModel::Ff3, &cfg).unwrap();
    assert!((oracle[&(EventId("e".into()), 0)] - delta).abs() < 1e-12);
}

#[test]
fn equicorrelated_residuals_have_the_expected_mean_correlation() {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let n = 10_000;
    let rho: f64 = 0.2;
    let mut g = rng(99);
    let cal = daily_calendar(n);
    let factors = FactorSeries::new(cal.clone(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]).unwrap();
    let common: Vec<f64> = (0..n).map(|_| g.sample(StandardNormal)).collect();
    let mut cells = Vec::new();
    for _ in 0..3 {
        for c in &common {
            let z: f64 = g.sample(StandardNormal);
            cells.push(Some(0.01 * (rho.sqrt() * c + (1.0 - rho).sqrt() * z)));
        }
    }
    let ids: Vec<FirmId> = (0..3).map(|i| FirmId(format!("F{i}"))).collect();
    let panel = ReturnPanel::new(ids, cal.clone(), cells).unwrap();
    let events: Vec<EventRecord> = (0..3).map(|i| event(&format!("e{i}"), &format!("F{i}"), cal.date(500 + 100 * i))).collect();
    let est = estimate_firms(&panel, &factors, &events, EventWindow::car_default(), BenchmarkModel::Zero, &DesignConfig::default()).unwrap();
    let corr = residual_correlation(&est, CorrelationMode::Pairwise, 60).unwrap();
    assert!((0.17..=0.23).contains(&corr.mean_offdiag), "{}", corr.mean_offdiag);
    for i in 0..3 {
        assert_eq!(corr.matrix[(i, i)], 1.0);
    }
    let balanced = residual_correlation(&est, CorrelationMode::Balanced, 60).unwrap();
    assert!((balanced.mean_offdiag - corr.mean_offdiag).abs() < 0.01);
}

#[test]
fn short_overlap_names_the_pair() {
    let fx = random_fixture(&mut rng(5), &Shape { firms: (2, 2), days: (150, 150), events_per_firm: (1, 1), missing: 0.0 }, EventWindow::car_default());
    let est = estimate_firms(&fx.panel, &fx.factors, &fx.events, EventWindow::car_default(), BenchmarkModel::Ff3, &loose_config()).unwrap();
    match residual_correlation(&est, CorrelationMode::Pairwise, 1000) {
        Err(Error::Coverage(msg)) => assert!(msg.contains("F000") && msg.contains("F001")),
        other => panic!("expected coverage error, got {other:?}"),
    }
}
