//! Cross-sectional regressions of CARs (in percent) on event and firm
//! determinants: incident year, incident type and sector, firm
//! characteristics, and news source.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{EventId, FirmCharacteristics, IncidentType, NewsSource, Sector};
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::linalg::{collinearity, least_squares, MAX_CONDITION};
use crate::window::{CarRow, CarTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Characteristic {
    LnSize,
    LnAge,
    BookToMarket,
    PriceToEarnings,
}

impl Characteristic {
    pub const ALL: [Characteristic; 4] = [
        Characteristic::LnSize,
        Characteristic::LnAge,
        Characteristic::BookToMarket,
        Characteristic::PriceToEarnings,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Characteristic::LnSize => "ln(Size)",
            Characteristic::LnAge => "ln(Age)",
            Characteristic::BookToMarket => "B/M",
            Characteristic::PriceToEarnings => "P/E",
        }
    }

    fn get(self, c: &FirmCharacteristics) -> Option<f64> {
        match self {
            Characteristic::LnSize => c.ln_size,
            Characteristic::LnAge => c.ln_age,
            Characteristic::BookToMarket => c.book_to_market,
            Characteristic::PriceToEarnings => c.price_to_earnings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Year(i32),
    Incident(IncidentType),
    /// Every incident type except the given one.
    NotIncident(IncidentType),
    Sector(Sector),
    Source(NewsSource),
    /// Looked up in [`PanelSpec::characteristics`] by event id.
    Characteristic(Characteristic),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub kind: TermKind,
}

impl Term {
    fn new(name: impl Into<String>, kind: TermKind) -> Self {
        Self { name: name.into(), kind }
    }

    fn value(&self, row: &CarRow, chars: &BTreeMap<EventId, BTreeMap<Characteristic, f64>>) -> Option<f64> {
        let ind = |b: bool| Some(if b { 1.0 } else { 0.0 });
        match &self.kind {
            TermKind::Year(y) => ind(row.year() == *y),
            TermKind::Incident(t) => ind(row.incident_type == *t),
            TermKind::NotIncident(t) => ind(row.incident_type != *t),
            TermKind::Sector(s) => ind(row.sector == *s),
            TermKind::Source(s) => ind(row.news_source == *s),
            TermKind::Characteristic(c) => chars.get(&row.event_id).and_then(|m| m.get(c).copied()),
        }
    }
}

/// Regression specification. The dependent variable is always the CAR
/// multiplied by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub regressors: Vec<Term>,
    pub include_constant: bool,
    /// Products of two declared regressors, named `"A * B"`.
    pub interactions: Vec<(String, String)>,
    /// Characteristic values joined to each event.
    pub characteristics: BTreeMap<EventId, BTreeMap<Characteristic, f64>>,
    pub warnings: Vec<String>,
}

impl PanelSpec {
    pub fn new(regressors: Vec<Term>, include_constant: bool) -> Self {
        Self {
            regressors,
            include_constant,
            interactions: Vec::new(),
            characteristics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.include_constant {
            names.push("Constant".to_string());
        }
        names.extend(self.regressors.iter().map(|t| t.name.clone()));
        names.extend(self.interactions.iter().map(|(a, b)| format!("{a} * {b}")));
        names
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for t in &self.regressors {
            if !seen.insert(t.name.as_str()) || t.name == "Constant" {
                return Err(Error::Config(format!("regressor name {:?} is not unique", t.name)));
            }
        }
        for (a, b) in &self.interactions {
            for x in [a, b] {
                if !seen.contains(x.as_str()) {
                    return Err(Error::Config(format!("interaction references undeclared column {x:?}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelResult {
    pub coefficients: Vec<Coefficient>,
    pub n_obs: usize,
    pub r_squared: f64,
    pub centered_r_squared: bool,
    pub dropped_rows: usize,
    /// Count of dropped rows per reason.
    pub dropped_reasons: BTreeMap<String, usize>,
    pub robust: bool,
    pub warnings: Vec<String>,
}

impl PanelResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelOptions {
    /// HC1 heteroskedasticity-robust standard errors instead of the
    /// conventional homoskedastic ones.
    pub robust_hc1: bool,
    pub max_condition: f64,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            robust_hc1: false,
            max_condition: MAX_CONDITION,
        }
    }
}

/// OLS of `100 * CAR` on the columns of `spec`. Rows with a missing covariate
/// are dropped and counted.
pub fn run_panel(table: &CarTable, spec: &PanelSpec, options: &PanelOptions) -> Result<PanelResult> {
    spec.validate()?;
    let names = spec.column_names();
    let k = names.len();
    if k == 0 {
        return Err(Error::Config("panel specification has no columns".into()));
    }
    let index: BTreeMap<&str, usize> = spec
        .regressors
        .iter()
        .enumerate()
        .map(|(i, t)| (t.name.as_str(), i))
        .collect();

    let mut x_rows: Vec<Vec<f64>> = Vec::with_capacity(table.len());
    let mut y = Vec::with_capacity(table.len());
    let mut dropped_reasons: BTreeMap<String, usize> = BTreeMap::new();
    'rows: for row in &table.rows {
        let mut vals = Vec::with_capacity(spec.regressors.len());
        for t in &spec.regressors {
            match t.value(row, &spec.characteristics) {
                Some(v) => vals.push(v),
                None => {
                    *dropped_reasons.entry(format!("missing {}", t.name)).or_default() += 1;
                    continue 'rows;
                }
            }
        }
        let mut x = Vec::with_capacity(k);
        if spec.include_constant {
            x.push(1.0);
        }
        x.extend_from_slice(&vals);
        for (a, b) in &spec.interactions {
            x.push(vals[index[a.as_str()]] * vals[index[b.as_str()]]);
        }
        x_rows.push(x);
        y.push(row.car * 100.0);
    }
    let n = y.len();
    if n <= k {
        return Err(Error::InsufficientData(format!(
            "{n} usable rows for {k} columns"
        )));
    }
    let x = DMatrix::from_fn(n, k, |i, j| x_rows[i][j]);
    let y = DVector::from_vec(y);

    let (condition, involved) = collinearity(&x);
    if !(condition <= options.max_condition) {
        return Err(Error::Collinear {
            columns: involved.into_iter().map(|j| names[j].clone()).collect(),
        });
    }
    let ls = least_squares(&x, &y, options.max_condition)?;
    let ssr = ls.residuals.norm_squared();
    let dof = (n - k) as f64;
    let cov = if options.robust_hc1 {
        let mut meat = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let e2 = ls.residuals[i].powi(2);
            for a in 0..k {
                for b in 0..k {
                    meat[(a, b)] += e2 * x[(i, a)] * x[(i, b)];
                }
            }
        }
        (&ls.xtx_inverse * meat * &ls.xtx_inverse) * (n as f64 / dof)
    } else {
        &ls.xtx_inverse * (ssr / dof)
    };
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            Coefficient {
                name: name.clone(),
                estimate: ls.coefficients[j],
                std_error: se,
                t_stat: ls.coefficients[j] / se,
            }
        })
        .collect();
    let tss = if spec.include_constant {
        let m = y.mean();
        y.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    let dropped_rows = dropped_reasons.values().sum();
    Ok(PanelResult {
        coefficients,
        n_obs: n,
        r_squared: if tss > 0.0 { 1.0 - ssr / tss } else { 0.0 },
        centered_r_squared: spec.include_constant,
        dropped_rows,
        dropped_reasons,
        robust: options.robust_hc1,
        warnings: spec.warnings.clone(),
    })
}

/// Year dummies for every year with at least one event, no constant.
pub fn build_spec_table2(table: &CarTable) -> Result<PanelSpec> {
    if table.is_empty() {
        return Err(Error::EmptySelection("CAR table is empty".into()));
    }
    let years: BTreeSet<i32> = table.rows.iter().map(|r| r.year()).collect();
    let (lo, hi) = (*years.first().unwrap(), *years.last().unwrap());
    let mut spec = PanelSpec::new(
        years.iter().map(|y| Term::new(y.to_string(), TermKind::Year(*y))).collect(),
        false,
    );
    for y in lo..=hi {
        if !years.contains(&y) {
            let msg = format!("no events in {y}; year dummy omitted");
            log::warn!("{msg}");
            spec.warnings.push(msg);
        }
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeSectorModel {
    /// One dummy per incident type present.
    Model1,
    /// Data-breach dummy, all-other-types dummy, named-sector dummies and
    /// data-breach x sector interactions.
    Model2,
}

const NAMED_SECTORS: [Sector; 5] = [
    Sector::Technology,
    Sector::ConsumerProducts,
    Sector::Financials,
    Sector::Healthcare,
    Sector::Industrials,
];

/// Incident type (and sector) dummies, no constant.
///
/// In Model 2 the `Other`-sector events form the sector baseline: they load
/// only on the two type dummies. Sector dummies or interactions that would be
/// identically zero are left out with a warning.
pub fn build_spec_table3(table: &CarTable, model: TypeSectorModel) -> Result<PanelSpec> {
    if table.is_empty() {
        return Err(Error::EmptySelection("CAR table is empty".into()));
    }
    let types: BTreeSet<IncidentType> = table.rows.iter().map(|r| r.incident_type).collect();
    match model {
        TypeSectorModel::Model1 => Ok(PanelSpec::new(
            IncidentType::ALL
                .into_iter()
                .filter(|t| types.contains(t))
                .map(|t| Term::new(t.label(), TermKind::Incident(t)))
                .collect(),
            false,
        )),
        TypeSectorModel::Model2 => {
            let breach = IncidentType::DataBreach;
            let mut warnings = Vec::new();
            let mut terms = vec![
                Term::new(breach.label(), TermKind::Incident(breach)),
                Term::new("Other", TermKind::NotIncident(breach)),
            ];
            let mut interactions = Vec::new();
            for s in NAMED_SECTORS {
                let in_sector = table.rows.iter().filter(|r| r.sector == s);
                let (count, breaches) = in_sector.fold((0, 0), |(c, b), r| {
                    (c + 1, b + usize::from(r.incident_type == breach))
                });
                if count == 0 {
                    warnings.push(format!("no events in sector {}; dummy omitted", s.label()));
                    continue;
                }
                terms.push(Term::new(s.label(), TermKind::Sector(s)));
                if breaches == 0 {
                    warnings.push(format!("no data breaches in sector {}; interaction omitted", s.label()));
                } else {
                    interactions.push((breach.label().to_string(), s.label().to_string()));
                }
            }
            for w in &warnings {
                log::warn!("{w}");
            }
            let mut spec = PanelSpec::new(terms, false);
            spec.interactions = interactions;
            spec.warnings = warnings;
            Ok(spec)
        }
    }
}

/// Minimum usable rows for the characteristics regression.
pub const MIN_CHARACTERISTIC_ROWS: usize = 10;

/// Constant plus size, age, book-to-market and P/E. Each event takes the
/// latest characteristics row of its firm dated on or before the event.
///
/// A characteristic missing for every event is dropped (with a warning)
/// when `drop_empty_columns` is set; otherwise the regression fails for lack
/// of usable rows.
pub fn build_spec_table4(
    table: &CarTable,
    characteristics: &[FirmCharacteristics],
    drop_empty_columns: bool,
) -> Result<PanelSpec> {
    if table.is_empty() {
        return Err(Error::EmptySelection("CAR table is empty".into()));
    }
    let mut joined: BTreeMap<EventId, BTreeMap<Characteristic, f64>> = BTreeMap::new();
    for row in &table.rows {
        let latest = characteristics
            .iter()
            .filter(|c| c.firm_id == row.firm_id && c.asof_date <= row.date)
            .max_by_key(|c| c.asof_date);
        let mut vals = BTreeMap::new();
        if let Some(c) = latest {
            for ch in Characteristic::ALL {
                if let Some(v) = ch.get(c) {
                    vals.insert(ch, v);
                }
            }
        }
        joined.insert(row.event_id.clone(), vals);
    }

    let mut warnings = Vec::new();
    let mut included = Vec::new();
    for ch in Characteristic::ALL {
        let present = joined.values().filter(|m| m.contains_key(&ch)).count();
        if present == 0 && drop_empty_columns {
            warnings.push(format!("{} missing for every event; column dropped", ch.label()));
            continue;
        }
        included.push(ch);
    }
    let usable = joined
        .values()
        .filter(|m| included.iter().all(|c| m.contains_key(c)))
        .count();
    if usable < MIN_CHARACTERISTIC_ROWS {
        return Err(Error::InsufficientData(format!(
            "{usable} events with complete characteristics, need {MIN_CHARACTERISTIC_ROWS}"
        )));
    }
    let mut spec = PanelSpec::new(
        included
            .into_iter()
            .map(|c| Term::new(c.label(), TermKind::Characteristic(c)))
            .collect(),
        true,
    );
    spec.characteristics = joined;
    spec.warnings = warnings;
    Ok(spec)
}

/// News-source dummies, no constant.
pub fn build_spec_table5(table: &CarTable) -> Result<PanelSpec> {
    if table.is_empty() {
        return Err(Error::EmptySelection("CAR table is empty".into()));
    }
    let sources: BTreeSet<NewsSource> = table.rows.iter().map(|r| r.news_source).collect();
    let mut spec = PanelSpec::new(
        NewsSource::ALL
            .into_iter()
            .filter(|s| sources.contains(s))
            .map(|s| Term::new(s.label(), TermKind::Source(s)))
            .collect(),
        false,
    );
    if sources.len() == 1 {
        let msg = format!("only one news source present ({})", spec.regressors[0].name);
        log::warn!("{msg}");
        spec.warnings.push(msg);
    }
    Ok(spec)
}

fn stars(t: f64) -> &'static str {
    let a = t.abs();
    if a >= 2.576 {
        "***"
    } else if a >= 1.960 {
        "**"
    } else if a >= 1.645 {
        "*"
    } else {
        ""
    }
}

/// Publication-style table: coefficient rows with bracketed t-statistics below,
/// then observations, R-squared and dropped-row footers. One column per
/// labelled result.
pub fn write_panel_table_tsv(mut w: impl Write, title: &str, columns: &[(String, PanelResult)]) -> Result<()> {
    writeln!(w, "# {title}")?;
    writeln!(w, "# dependent variable: CAR x 100")?;
    let labels: Vec<&str> = columns.iter().map(|(l, _)| l.as_str()).collect();
    writeln!(w, "\t{}", labels.join("\t"))?;
    let mut names: Vec<&str> = Vec::new();
    for (_, r) in columns {
        for c in &r.coefficients {
            if !names.contains(&c.name.as_str()) {
                names.push(&c.name);
            }
        }
    }
    for name in names {
        let (mut est, mut ts) = (Vec::new(), Vec::new());
        for (_, r) in columns {
            match r.coefficient(name) {
                Some(c) => {
                    est.push(format!("{}{}", sig6(c.estimate), stars(c.t_stat)));
                    ts.push(format!("[{}]", sig6(c.t_stat)));
                }
                None => {
                    est.push(String::new());
                    ts.push(String::new());
                }
            }
        }
        writeln!(w, "{name}\t{}", est.join("\t"))?;
        writeln!(w, "\t{}", ts.join("\t"))?;
    }
    let footer = |f: &dyn Fn(&PanelResult) -> String| columns.iter().map(|(_, r)| f(r)).collect::<Vec<_>>().join("\t");
    writeln!(w, "Observations\t{}", footer(&|r| r.n_obs.to_string()))?;
    writeln!(w, "R-squared\t{}", footer(&|r| sig6(r.r_squared)))?;
    writeln!(w, "Dropped (missing data)\t{}", footer(&|r| r.dropped_rows.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EventWindow, FirmId};
    use chrono::NaiveDate;

    fn row(id: usize, car: f64, year: i32, t: IncidentType, s: Sector, src: NewsSource) -> CarRow {
        CarRow {
            event_id: EventId(format!("e{id}")),
            firm_id: FirmId(format!("f{}", id % 4)),
            date: NaiveDate::from_ymd_opt(year, 6, 1).unwrap(),
            car,
            window: EventWindow::car_default(),
            per_offset_ar: vec![],
            market_cap_usd: None,
            loss_usd: None,
            incident_type: t,
            sector: s,
            news_source: src,
        }
    }

    fn six_rows() -> CarTable {
        use IncidentType::*;
        let spec = [
            (-0.01, 2015, DataBreach, NewsSource::Reuters),
            (-0.03, 2015, DataBreach, NewsSource::Twitter),
            (0.02, 2016, Ransomware, NewsSource::Reuters),
            (-0.02, 2016, DataBreach, NewsSource::Twitter),
            (0.01, 2017, Ransomware, NewsSource::Other),
            (0.005, 2017, Ransomware, NewsSource::Other),
        ];
        CarTable {
            rows: spec
                .iter()
                .enumerate()
                .map(|(i, (c, y, t, s))| row(i, *c, *y, *t, Sector::Technology, *s))
                .collect(),
        }
    }

    #[test]
    fn constant_only_is_mean() {
        let t = six_rows();
        let r = run_panel(&t, &PanelSpec::new(vec![], true), &PanelOptions::default()).unwrap();
        let mean = t.cars().iter().sum::<f64>() / 6.0 * 100.0;
        assert!((r.coefficients[0].estimate - mean).abs() < 1e-13);
        assert_eq!(r.n_obs, 6);
    }

    #[test]
    fn group_dummies_are_group_means() {
        let t = six_rows();
        let spec = build_spec_table3(&t, TypeSectorModel::Model1).unwrap();
        assert_eq!(spec.regressors.len(), 2);
        let r = run_panel(&t, &spec, &PanelOptions::default()).unwrap();
        assert!((r.coefficient("Data breach").unwrap().estimate - (-2.0)).abs() < 1e-12);
        assert!((r.coefficient("Ransomware").unwrap().estimate - (3.5 / 3.0)).abs() < 1e-12);
        assert!(!r.centered_r_squared);
    }

    #[test]
    fn dummy_trap_names_columns() {
        let t = six_rows();
        let mut spec = build_spec_table2(&t).unwrap();
        assert_eq!(spec.regressors.len(), 3);
        spec.include_constant = true;
        match run_panel(&t, &spec, &PanelOptions::default()) {
            Err(Error::Collinear { columns }) => {
                assert_eq!(columns, vec!["Constant", "2015", "2016", "2017"]);
            }
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn year_gaps_warn() {
        let mut t = six_rows();
        t.rows[4].date = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let spec = build_spec_table2(&t).unwrap();
        assert_eq!(spec.regressors.len(), 4);
        assert!(spec.warnings.iter().any(|w| w.contains("2018")));
        assert!(build_spec_table2(&CarTable::default()).is_err());
    }

    #[test]
    fn source_dummies() {
        let t = six_rows();
        let spec = build_spec_table5(&t).unwrap();
        assert_eq!(spec.regressors.len(), 3);
        let r = run_panel(&t, &spec, &PanelOptions::default()).unwrap();
        assert!((r.coefficient("Other").unwrap().estimate - 0.75).abs() < 1e-12);

        let mut only = t.clone();
        for r in &mut only.rows {
            r.news_source = NewsSource::Reuters;
        }
        let spec = build_spec_table5(&only).unwrap();
        assert_eq!(spec.regressors.len(), 1);
        assert_eq!(spec.warnings.len(), 1);
    }

    #[test]
    fn interactions_must_reference_declared_columns() {
        let t = six_rows();
        let mut spec = build_spec_table5(&t).unwrap();
        spec.interactions.push(("Reuters".into(), "Nope".into()));
        assert!(matches!(run_panel(&t, &spec, &PanelOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn hc1_differs_from_conventional() {
        let t = six_rows();
        let spec = build_spec_table3(&t, TypeSectorModel::Model1).unwrap();
        let a = run_panel(&t, &spec, &PanelOptions::default()).unwrap();
        let b = run_panel(&t, &spec, &PanelOptions { robust_hc1: true, ..Default::default() }).unwrap();
        assert_eq!(a.coefficients[0].estimate, b.coefficients[0].estimate);
        assert_ne!(a.coefficients[0].std_error, b.coefficients[0].std_error);
        assert!(b.robust);
    }
}
