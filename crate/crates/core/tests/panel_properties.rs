use std::collections::BTreeMap;

use chrono::NaiveDate;
use proptest::prelude::*;

use evstud::data::{EventId, EventWindow, FirmId, IncidentType, NewsSource, Sector};
use evstud::fixture::{study_fixture, FixtureConfig};
use evstud::panel::{
    build_spec_table2, build_spec_table3, build_spec_table4, build_spec_table5, run_panel, PanelOptions, PanelSpec,
    TypeSectorModel,
};
use evstud::pipeline::{estimate, Dataset, Estimator, RunConfig};
use evstud::window::{CarRow, CarTable};

fn row(k: usize, car: f64, year: i32, t: usize, s: usize, src: usize) -> CarRow {
    CarRow {
        event_id: EventId(format!("e{k}")),
        firm_id: FirmId(format!("f{}", k % 7)),
        date: NaiveDate::from_ymd_opt(year, 1 + (k % 12) as u32, 10).unwrap(),
        car,
        window: EventWindow::car_default(),
        per_offset_ar: vec![],
        market_cap_usd: Some(1e9),
        loss_usd: Some(car * 1e9),
        incident_type: IncidentType::ALL[t],
        sector: Sector::ALL[s],
        news_source: NewsSource::ALL[src],
    }
}

fn table_strategy() -> impl Strategy<Value = CarTable> {
    prop::collection::vec((-0.2f64..0.2, 2014i32..2023, 0usize..4, 0usize..6, 0usize..3), 12..80).prop_map(|rows| CarTable {
        rows: rows
            .into_iter()
            .enumerate()
            .map(|(k, (c, y, t, s, src))| row(k, c, y, t, s, src))
            .collect(),
    })
}

fn group_means<K: Ord>(t: &CarTable, key: impl Fn(&CarRow) -> K) -> BTreeMap<K, f64> {
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for r in &t.rows {
        let e = acc.entry(key(r)).or_default();
        e.0 += r.car * 100.0;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn assert_group_means(t: &CarTable, spec: &PanelSpec, means: Vec<(String, f64)>) {
    let r = run_panel(t, spec, &PanelOptions::default()).unwrap();
    assert_eq!(r.coefficients.len(), means.len());
    for (name, m) in means {
        let c = r.coefficient(&name).unwrap();
        assert!((c.estimate - m).abs() < 1e-12, "{name}: {} vs {m}", c.estimate);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exhaustive_dummies_reproduce_group_means(t in table_strategy()) {
        let years = group_means(&t, |r| r.year());
        assert_group_means(&t, &build_spec_table2(&t).unwrap(), years.into_iter().map(|(y, m)| (y.to_string(), m)).collect());
        let types = group_means(&t, |r| r.incident_type);
        assert_group_means(&t, &build_spec_table3(&t, TypeSectorModel::Model1).unwrap(), types.into_iter().map(|(k, m)| (k.label().to_string(), m)).collect());
        let sources = group_means(&t, |r| r.news_source);
        assert_group_means(&t, &build_spec_table5(&t).unwrap(), sources.into_iter().map(|(k, m)| (k.label().to_string(), m)).collect());
    }

    #[test]
    fn row_order_does_not_matter(t in table_strategy(), seed in any::<u64>()) {
        let spec = build_spec_table5(&t).unwrap();
        let a = run_panel(&t, &spec, &PanelOptions::default()).unwrap();
        let mut shuffled = t.clone();
        let n = shuffled.rows.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
            shuffled.rows.swap(i, j);
        }
        let b = run_panel(&shuffled, &spec, &PanelOptions::default()).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((x.estimate - y.estimate).abs() < 1e-10);
            prop_assert!((x.t_stat - y.t_stat).abs() < 1e-8);
        }
        prop_assert!((a.r_squared - b.r_squared).abs() < 1e-10);
    }

    #[test]
    fn adding_a_regressor_never_lowers_r_squared(t in table_strategy()) {
        let full = build_spec_table2(&t).unwrap();
        prop_assume!(full.regressors.len() >= 2);
        let mut smaller = PanelSpec::new(full.regressors[1..].to_vec(), true);
        let base = run_panel(&t, &PanelSpec::new(vec![], true), &PanelOptions::default()).unwrap();
        prop_assert!(base.r_squared.abs() < 1e-12);
        let mut prev = base.r_squared;
        while !smaller.regressors.is_empty() {
            let r = run_panel(&t, &smaller, &PanelOptions::default()).unwrap();
            prop_assert!(r.r_squared >= -1e-12 && r.r_squared <= 1.0 + 1e-12);
            smaller.regressors.pop();
            let fewer = run_panel(&t, &smaller, &PanelOptions::default()).unwrap();
            prop_assert!(r.r_squared + 1e-12 >= fewer.r_squared);
            prev = prev.max(r.r_squared);
        }
    }
}

fn fixture_data() -> Dataset {
    let fx = study_fixture(&FixtureConfig::default()).unwrap();
    Dataset {
        panel: fx.panel,
        factors: fx.factors,
        events: fx.events,
        characteristics: Some(fx.characteristics),
    }
}

#[test]
fn fixture_tables_have_the_expected_shapes() {
    let data = fixture_data();
    let config = RunConfig::default();
    let ols = estimate(&data, &config, Estimator::Ols).unwrap().cars;
    assert_eq!(ols.len(), 167);

    let chars = data.characteristics.as_deref().unwrap();
    let spec4 = build_spec_table4(&ols, chars, true).unwrap();
    let r4 = run_panel(&ols, &spec4, &PanelOptions::default()).unwrap();
    assert_eq!(r4.coefficients.len(), 5);
    assert_eq!(r4.n_obs, 150);
    assert_eq!(r4.dropped_rows, 17);
    assert!(r4.centered_r_squared);

    let spec3 = build_spec_table3(&ols, TypeSectorModel::Model2).unwrap();
    let r3 = run_panel(&ols, &spec3, &PanelOptions::default()).unwrap();
    assert!(r3.coefficient("Data breach * Healthcare").is_some());
    assert!(r3.coefficient("Other").is_some());

    let types = group_means(&ols, |r| r.incident_type);
    let spec = build_spec_table3(&ols, TypeSectorModel::Model1).unwrap();
    assert_eq!(spec.regressors.len(), types.len());
    assert_group_means(&ols, &spec, types.into_iter().map(|(k, m)| (k.label().to_string(), m)).collect());
}

#[test]
fn characteristics_need_ten_rows() {
    let data = fixture_data();
    let ols = estimate(&data, &RunConfig::default(), Estimator::Ols).unwrap().cars;
    let few = CarTable { rows: ols.rows[..8].to_vec() };
    assert!(build_spec_table4(&few, data.characteristics.as_deref().unwrap(), true).is_err());
}
