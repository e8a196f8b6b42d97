//! Domain types, trading-calendar alignment, CSV ingestion and sample filters.
//!
//! Returns are stored as decimal fractions throughout. A return panel cell is
//! `None` when the firm has no price on that trading day.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FirmId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub String);

impl fmt::Display for FirmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FirmId {
    fn from(s: &str) -> Self {
        FirmId(s.to_string())
    }
}

impl From<&str> for EventId {
    fn from(s: &str) -> Self {
        EventId(s.to_string())
    }
}

/// Ordered, duplicate-free list of trading days.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendar {
    days: Vec<NaiveDate>,
}

/// Position of an event date on a calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedDay {
    pub index: usize,
    /// True when the date was not a trading day and was moved forward.
    pub shifted: bool,
    /// Calendar days between the requested date and the resolved trading day.
    pub shift_days: i64,
}

impl TradingCalendar {
    pub fn new(days: Vec<NaiveDate>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::Validation("trading calendar is empty".into()));
        }
        if let Some(w) = days.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "trading calendar not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { days })
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn first(&self) -> NaiveDate {
        self.days[0]
    }

    pub fn last(&self) -> NaiveDate {
        self.days[self.days.len() - 1]
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.days[index]
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.days.binary_search(&date).ok()
    }

    /// Index of `date`, or of the next trading day when `date` is not one.
    pub fn resolve(&self, date: NaiveDate) -> Result<ResolvedDay> {
        match self.days.binary_search(&date) {
            Ok(index) => Ok(ResolvedDay {
                index,
                shifted: false,
                shift_days: 0,
            }),
            Err(index) if index < self.days.len() => Ok(ResolvedDay {
                index,
                shifted: true,
                shift_days: (self.days[index] - date).num_days(),
            }),
            Err(_) => Err(Error::OutOfRange {
                date: date.to_string(),
                first: self.first().to_string(),
                last: self.last().to_string(),
            }),
        }
    }

    /// Sub-calendar of days within `[start, end]`, with the offset of its first day.
    pub fn restrict(&self, start: NaiveDate, end: NaiveDate) -> Result<(TradingCalendar, usize)> {
        let lo = self.days.partition_point(|d| *d < start);
        let hi = self.days.partition_point(|d| *d <= end);
        if lo >= hi {
            return Err(Error::Config(format!(
                "date range {start}..{end} contains no trading days"
            )));
        }
        Ok((TradingCalendar::new(self.days[lo..hi].to_vec())?, lo))
    }
}

pub fn resolve_event_day(event_date: NaiveDate, calendar: &TradingCalendar) -> Result<ResolvedDay> {
    calendar.resolve(event_date)
}

/// Per-firm daily excess returns on a shared calendar (firm-major storage).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    firm_ids: Vec<FirmId>,
    calendar: TradingCalendar,
    excess_returns: Vec<Option<f64>>,
}

impl ReturnPanel {
    pub fn new(
        firm_ids: Vec<FirmId>,
        calendar: TradingCalendar,
        excess_returns: Vec<Option<f64>>,
    ) -> Result<Self> {
        if excess_returns.len() != firm_ids.len() * calendar.len() {
            return Err(Error::Validation(format!(
                "panel has {} cells, expected {} firms x {} days",
                excess_returns.len(),
                firm_ids.len(),
                calendar.len()
            )));
        }
        let unique: BTreeSet<&FirmId> = firm_ids.iter().collect();
        if unique.len() != firm_ids.len() {
            return Err(Error::Validation("duplicate firm ids in panel".into()));
        }
        if let Some(bad) = excess_returns.iter().flatten().find(|r| !r.is_finite()) {
            return Err(Error::Validation(format!("non-finite return {bad} in panel")));
        }
        Ok(Self {
            firm_ids,
            calendar,
            excess_returns,
        })
    }

    pub fn firm_ids(&self) -> &[FirmId] {
        &self.firm_ids
    }

    pub fn calendar(&self) -> &TradingCalendar {
        &self.calendar
    }

    pub fn n_firms(&self) -> usize {
        self.firm_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    pub fn firm_index(&self, firm: &FirmId) -> Option<usize> {
        self.firm_ids.iter().position(|f| f == firm)
    }

    pub fn firm_returns(&self, firm: usize) -> &[Option<f64>] {
        let n = self.calendar.len();
        &self.excess_returns[firm * n..(firm + 1) * n]
    }

    pub fn get(&self, firm: usize, day: usize) -> Option<f64> {
        self.excess_returns[firm * self.calendar.len() + day]
    }

    pub fn observations(&self, firm: usize) -> usize {
        self.firm_returns(firm).iter().filter(|r| r.is_some()).count()
    }

    pub fn missing_cells(&self) -> usize {
        self.excess_returns.iter().filter(|r| r.is_none()).count()
    }

    pub fn is_balanced(&self) -> bool {
        self.missing_cells() == 0
    }
}

/// Daily factor returns and risk-free rate, complete over the calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSeries {
    pub calendar: TradingCalendar,
    pub mkt_excess: Vec<f64>,
    pub smb: Vec<f64>,
    pub hml: Vec<f64>,
    pub rf: Vec<f64>,
}

impl FactorSeries {
    pub fn new(
        calendar: TradingCalendar,
        mkt_excess: Vec<f64>,
        smb: Vec<f64>,
        hml: Vec<f64>,
        rf: Vec<f64>,
    ) -> Result<Self> {
        let n = calendar.len();
        for (name, s) in [("mkt_rf", &mkt_excess), ("smb", &smb), ("hml", &hml), ("rf", &rf)] {
            if s.len() != n {
                return Err(Error::Validation(format!(
                    "factor series {name} has {} values for {n} days",
                    s.len()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("factor series {name} has missing values")));
            }
        }
        Ok(Self {
            calendar,
            mkt_excess,
            smb,
            hml,
            rf,
        })
    }

    /// Factor values on exactly the days of `calendar`.
    pub fn restrict_to(&self, calendar: &TradingCalendar) -> Result<FactorSeries> {
        let mut idx = Vec::with_capacity(calendar.len());
        for d in calendar.days() {
            match self.calendar.index_of(*d) {
                Some(i) => idx.push(i),
                None => return Err(Error::Coverage(format!("no factor data on {d}"))),
            }
        }
        let pick = |s: &[f64]| idx.iter().map(|&i| s[i]).collect::<Vec<_>>();
        FactorSeries::new(
            calendar.clone(),
            pick(&self.mkt_excess),
            pick(&self.smb),
            pick(&self.hml),
            pick(&self.rf),
        )
    }
}

fn normalize_label(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentType {
    DataBreach,
    SoftwareBreach,
    CyberBreach,
    SocialBreach,
    Ransomware,
    Shutdown,
    TwitterBreach,
    FacebookBreach,
    StolenFunds,
    Mitigation,
    Other,
}

impl IncidentType {
    pub const ALL: [IncidentType; 11] = [
        IncidentType::DataBreach,
        IncidentType::SoftwareBreach,
        IncidentType::CyberBreach,
        IncidentType::SocialBreach,
        IncidentType::Ransomware,
        IncidentType::Shutdown,
        IncidentType::TwitterBreach,
        IncidentType::FacebookBreach,
        IncidentType::StolenFunds,
        IncidentType::Mitigation,
        IncidentType::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IncidentType::DataBreach => "Data breach",
            IncidentType::SoftwareBreach => "Software breach",
            IncidentType::CyberBreach => "Cyber breach",
            IncidentType::SocialBreach => "Social breach",
            IncidentType::Ransomware => "Ransomware",
            IncidentType::Shutdown => "Shutdown",
            IncidentType::TwitterBreach => "Twitter breach",
            IncidentType::FacebookBreach => "Facebook breach",
            IncidentType::StolenFunds => "Stolen funds",
            IncidentType::Mitigation => "Mitigation",
            IncidentType::Other => "Other",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            IncidentType::DataBreach => "data_breach",
            IncidentType::SoftwareBreach => "software_breach",
            IncidentType::CyberBreach => "cyber_breach",
            IncidentType::SocialBreach => "social_breach",
            IncidentType::Ransomware => "ransomware",
            IncidentType::Shutdown => "shutdown",
            IncidentType::TwitterBreach => "twitter_breach",
            IncidentType::FacebookBreach => "facebook_breach",
            IncidentType::StolenFunds => "stolen_funds",
            IncidentType::Mitigation => "mitigation",
            IncidentType::Other => "other",
        }
    }
}

impl FromStr for IncidentType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = normalize_label(s);
        IncidentType::ALL
            .into_iter()
            .find(|t| normalize_label(t.key()) == norm)
            .ok_or_else(|| format!("unknown incident type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Technology,
    ConsumerProducts,
    Financials,
    Healthcare,
    Industrials,
    Other,
}

impl Sector {
    pub const ALL: [Sector; 6] = [
        Sector::Technology,
        Sector::ConsumerProducts,
        Sector::Financials,
        Sector::Healthcare,
        Sector::Industrials,
        Sector::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Sector::Technology => "Technology",
            Sector::ConsumerProducts => "Consumer products",
            Sector::Financials => "Financials",
            Sector::Healthcare => "Healthcare",
            Sector::Industrials => "Industrials",
            Sector::Other => "Other",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Sector::Technology => "technology",
            Sector::ConsumerProducts => "consumer_products",
            Sector::Financials => "financials",
            Sector::Healthcare => "healthcare",
            Sector::Industrials => "industrials",
            Sector::Other => "other",
        }
    }

    /// Lenient parse: consumer cyclical/non-cyclical merge into consumer
    /// products, anything unrecognised becomes `Other` (with a warning).
    pub fn parse_lenient(s: &str) -> Sector {
        let norm = normalize_label(s);
        match norm.as_str() {
            "technology" | "tech" => Sector::Technology,
            "consumerproducts" | "consumercyclical" | "consumernoncyclical" | "consumercyclicals"
            | "consumernoncyclicals" => Sector::ConsumerProducts,
            "financials" | "financial" => Sector::Financials,
            "healthcare" => Sector::Healthcare,
            "industrials" | "industrial" => Sector::Industrials,
            "other" => Sector::Other,
            _ => {
                log::warn!("unknown sector {s:?} mapped to Other");
                Sector::Other
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewsSource {
    Reuters,
    Twitter,
    Other,
}

impl NewsSource {
    pub const ALL: [NewsSource; 3] = [NewsSource::Reuters, NewsSource::Twitter, NewsSource::Other];

    pub fn label(self) -> &'static str {
        match self {
            NewsSource::Reuters => "Reuters",
            NewsSource::Twitter => "Twitter",
            NewsSource::Other => "Other",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            NewsSource::Reuters => "reuters",
            NewsSource::Twitter => "twitter",
            NewsSource::Other => "other",
        }
    }
}

impl FromStr for NewsSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = normalize_label(s);
        NewsSource::ALL
            .into_iter()
            .find(|t| t.key() == norm)
            .ok_or_else(|| format!("unknown news source {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: EventId,
    pub firm_id: FirmId,
    pub event_date: NaiveDate,
    pub incident_type: IncidentType,
    pub sector: Sector,
    pub news_source: NewsSource,
    pub market_cap_usd: Option<f64>,
}

/// Accounting characteristics of a firm as of a date. Missing fields are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmCharacteristics {
    pub firm_id: FirmId,
    pub asof_date: NaiveDate,
    pub ln_size: Option<f64>,
    pub ln_age: Option<f64>,
    pub book_to_market: Option<f64>,
    pub price_to_earnings: Option<f64>,
}

impl FirmCharacteristics {
    pub fn is_complete(&self) -> bool {
        self.ln_size.is_some()
            && self.ln_age.is_some()
            && self.book_to_market.is_some()
            && self.price_to_earnings.is_some()
    }
}

/// Trading days before and after day 0 covered by an event window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventWindow {
    pub pre_days: usize,
    pub post_days: usize,
}

impl EventWindow {
    pub const MAX_LEN: usize = 11;

    pub fn new(pre_days: usize, post_days: usize) -> Result<Self> {
        Self::with_max(pre_days, post_days, Self::MAX_LEN)
    }

    pub fn with_max(pre_days: usize, post_days: usize, max_len: usize) -> Result<Self> {
        if pre_days + post_days + 1 > max_len {
            return Err(Error::Config(format!(
                "event window ({pre_days},{post_days}) longer than {max_len} days"
            )));
        }
        Ok(Self {
            pre_days,
            post_days,
        })
    }

    /// The three-day window centred on the event.
    pub fn car_default() -> Self {
        Self {
            pre_days: 1,
            post_days: 1,
        }
    }

    /// Eleven days, -5..=+5.
    pub fn curve_default() -> Self {
        Self {
            pre_days: 5,
            post_days: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.pre_days + self.post_days + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn offsets(&self) -> impl Iterator<Item = i32> + Clone {
        -(self.pre_days as i32)..=(self.post_days as i32)
    }

    pub fn contains(&self, other: &EventWindow) -> bool {
        other.pre_days <= self.pre_days && other.post_days <= self.post_days
    }

    pub fn contains_offset(&self, offset: i32) -> bool {
        offset >= -(self.pre_days as i32) && offset <= self.post_days as i32
    }

    /// Calendar index range `[lo, hi]` covered around `day`, if it fits in `n_days`.
    pub fn span(&self, day: usize, n_days: usize) -> Option<(usize, usize)> {
        let lo = day.checked_sub(self.pre_days)?;
        let hi = day + self.post_days;
        (hi < n_days).then_some((lo, hi))
    }
}

impl fmt::Display for EventWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.pre_days, self.post_days)
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let got: Vec<&str> = headers.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("expected header {}, found {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

struct RowCtx<'a> {
    path: &'a Path,
    line: u64,
}

impl RowCtx<'_> {
    fn err(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.display().to_string(),
            line: self.line,
            message,
        }
    }

    fn date(&self, s: &str) -> Result<NaiveDate> {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| self.err(format!("bad date {s:?}: {e}")))
    }

    fn number(&self, name: &str, s: &str) -> Result<f64> {
        let v: f64 = s
            .parse()
            .map_err(|_| self.err(format!("bad number for {name}: {s:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite value for {name}: {s:?}")));
        }
        Ok(v)
    }

    fn optional(&self, name: &str, s: &str) -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            self.number(name, s).map(Some)
        }
    }
}

fn for_each_record(
    path: &Path,
    header: &[&str],
    mut f: impl FnMut(&RowCtx, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut rdr = open_csv(path)?;
    check_header(&mut rdr, path, header)?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let ctx = RowCtx { path, line };
        if rec.len() != header.len() {
            return Err(ctx.err(format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        f(&ctx, &rec)?;
    }
    Ok(())
}

pub const RETURNS_HEADER: [&str; 3] = ["date", "firm_id", "ret"];
pub const FACTORS_HEADER: [&str; 5] = ["date", "mkt_rf", "smb", "hml", "rf"];
pub const EVENTS_HEADER: [&str; 7] = [
    "event_id",
    "firm_id",
    "date",
    "incident_type",
    "sector",
    "news_source",
    "market_cap_usd",
];
pub const CHARACTERISTICS_HEADER: [&str; 6] = ["firm_id", "asof_date", "ln_size", "ln_age", "btm", "pe"];

/// Reads `returns.csv` and `factors.csv` into an excess-return panel.
///
/// The panel calendar is the set of dates carrying at least one return; every
/// such date must exist in the factor file. A firm without a row (or with an
/// empty `ret`) on a calendar day gets a missing cell.
pub fn load_panel(returns_csv: &Path, factors_csv: &Path) -> Result<(ReturnPanel, FactorSeries)> {
    let factors = load_factors(factors_csv)?;

    let mut raw: BTreeMap<FirmId, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut dates = BTreeSet::new();
    for_each_record(returns_csv, &RETURNS_HEADER, |ctx, rec| {
        let date = ctx.date(&rec[0])?;
        let firm = FirmId(rec[1].to_string());
        if firm.0.is_empty() {
            return Err(ctx.err("empty firm_id".into()));
        }
        let entry = raw.entry(firm.clone()).or_default();
        let Some(ret) = ctx.optional("ret", &rec[2])? else {
            return Ok(());
        };
        if ret <= -1.0 {
            return Err(ctx.err(format!("return {ret} is not above -1")));
        }
        if entry.insert(date, ret).is_some() {
            return Err(ctx.err(format!("duplicate return for firm {firm} on {date}")));
        }
        dates.insert(date);
        Ok(())
    })?;

    if dates.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no returns",
            returns_csv.display()
        )));
    }
    let calendar = TradingCalendar::new(dates.into_iter().collect())?;
    let factors = factors.restrict_to(&calendar).map_err(|e| match e {
        Error::Coverage(msg) => Error::Coverage(format!(
            "{} does not cover the return dates: {msg}",
            factors_csv.display()
        )),
        other => other,
    })?;

    let n = calendar.len();
    let firm_ids: Vec<FirmId> = raw.keys().cloned().collect();
    let mut cells = Vec::with_capacity(firm_ids.len() * n);
    for firm in &firm_ids {
        let series = &raw[firm];
        for (t, d) in calendar.days().iter().enumerate() {
            cells.push(series.get(d).map(|r| r - factors.rf[t]));
        }
    }
    let panel = ReturnPanel::new(firm_ids, calendar, cells)?;
    Ok((panel, factors))
}

pub fn load_factors(factors_csv: &Path) -> Result<FactorSeries> {
    let mut rows: Vec<(NaiveDate, [f64; 4])> = Vec::new();
    for_each_record(factors_csv, &FACTORS_HEADER, |ctx, rec| {
        let date = ctx.date(&rec[0])?;
        let mut vals = [0.0; 4];
        for (k, name) in FACTORS_HEADER[1..].iter().enumerate() {
            vals[k] = ctx.number(name, &rec[k + 1])?;
        }
        rows.push((date, vals));
        Ok(())
    })?;
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Validation(format!(
            "{}: duplicate factor date {}",
            factors_csv.display(),
            w[0].0
        )));
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!("{}: no factor rows", factors_csv.display())));
    }
    let calendar = TradingCalendar::new(rows.iter().map(|r| r.0).collect())?;
    let col = |k: usize| rows.iter().map(|r| r.1[k]).collect::<Vec<_>>();
    FactorSeries::new(calendar, col(0), col(1), col(2), col(3))
}

pub fn load_events(events_csv: &Path) -> Result<Vec<EventRecord>> {
    let mut events = Vec::new();
    let mut seen = BTreeSet::new();
    for_each_record(events_csv, &EVENTS_HEADER, |ctx, rec| {
        let event_id = EventId(rec[0].to_string());
        if !seen.insert(event_id.clone()) {
            return Err(ctx.err(format!("duplicate event_id {event_id}")));
        }
        let incident_type = rec[3].parse().map_err(|e: String| ctx.err(e))?;
        let news_source = rec[5].parse().map_err(|e: String| ctx.err(e))?;
        let market_cap_usd = ctx.optional("market_cap_usd", &rec[6])?;
        if market_cap_usd.is_some_and(|c| c < 0.0) {
            return Err(ctx.err("negative market_cap_usd".into()));
        }
        events.push(EventRecord {
            event_id,
            firm_id: FirmId(rec[1].to_string()),
            event_date: ctx.date(&rec[2])?,
            incident_type,
            sector: Sector::parse_lenient(&rec[4]),
            news_source,
            market_cap_usd,
        });
        Ok(())
    })?;
    Ok(events)
}

pub fn load_characteristics(path: &Path) -> Result<Vec<FirmCharacteristics>> {
    let mut out = Vec::new();
    for_each_record(path, &CHARACTERISTICS_HEADER, |ctx, rec| {
        out.push(FirmCharacteristics {
            firm_id: FirmId(rec[0].to_string()),
            asof_date: ctx.date(&rec[1])?,
            ln_size: ctx.optional("ln_size", &rec[2])?,
            ln_age: ctx.optional("ln_age", &rec[3])?,
            book_to_market: ctx.optional("btm", &rec[4])?,
            price_to_earnings: ctx.optional("pe", &rec[5])?,
        });
        Ok(())
    })?;
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes raw (not excess) returns: the risk-free rate is added back.
pub fn write_returns_csv(path: &Path, panel: &ReturnPanel, factors: &FactorSeries) -> Result<()> {
    if factors.calendar != *panel.calendar() {
        return Err(Error::Contract("factor calendar differs from panel calendar".into()));
    }
    let mut w = create(path)?;
    writeln!(w, "{}", RETURNS_HEADER.join(","))?;
    for (t, d) in panel.calendar().days().iter().enumerate() {
        for (i, firm) in panel.firm_ids().iter().enumerate() {
            if let Some(r) = panel.get(i, t) {
                writeln!(w, "{d},{firm},{:?}", r + factors.rf[t])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_factors_csv(path: &Path, factors: &FactorSeries) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", FACTORS_HEADER.join(","))?;
    for (t, d) in factors.calendar.days().iter().enumerate() {
        writeln!(
            w,
            "{d},{:?},{:?},{:?},{:?}",
            factors.mkt_excess[t], factors.smb[t], factors.hml[t], factors.rf[t]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv(path: &Path, events: &[EventRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", EVENTS_HEADER.join(","))?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.event_id,
            e.firm_id,
            e.event_date,
            e.incident_type.key(),
            e.sector.key(),
            e.news_source.key(),
            opt_num(e.market_cap_usd)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_characteristics_csv(path: &Path, rows: &[FirmCharacteristics]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", CHARACTERISTICS_HEADER.join(","))?;
    for c in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            c.firm_id,
            c.asof_date,
            opt_num(c.ln_size),
            opt_num(c.ln_age),
            opt_num(c.book_to_market),
            opt_num(c.price_to_earnings)
        )?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Sample filters

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Market capitalisation below the floor.
    CapFloor,
    /// Event date outside the configured date range.
    DateRange,
    /// Event date after the last trading day.
    OutsideCalendar,
    /// Date moved forward by more than `max_shift_days`.
    ShiftTooFar,
    /// Firm has no return on the resolved event day (or is not in the panel).
    NotListed,
    /// A day of the dummy span is missing or falls outside the calendar.
    IncompleteWindow,
    /// CAR window spans more calendar days than allowed.
    WindowTooLong,
    /// Firm has fewer than `min_obs` return observations.
    InsufficientHistory,
}

impl DropReason {
    pub fn key(self) -> &'static str {
        match self {
            DropReason::CapFloor => "cap_floor",
            DropReason::DateRange => "date_range",
            DropReason::OutsideCalendar => "outside_calendar",
            DropReason::ShiftTooFar => "shift_too_far",
            DropReason::NotListed => "not_listed",
            DropReason::IncompleteWindow => "incomplete_window",
            DropReason::WindowTooLong => "window_too_long",
            DropReason::InsufficientHistory => "insufficient_history",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub cap_floor_usd: f64,
    pub date_range: Option<(NaiveDate, NaiveDate)>,
    /// CAR window; its calendar span is checked against `max_window_days`.
    pub car_window: EventWindow,
    /// Dummy span used for estimation; every day in it must carry a return.
    pub dummy_span: EventWindow,
    pub max_window_days: i64,
    pub max_shift_days: i64,
    pub min_obs: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            cap_floor_usd: 3.0e8,
            date_range: None,
            car_window: EventWindow::car_default(),
            dummy_span: EventWindow::car_default(),
            max_window_days: 5,
            max_shift_days: 2,
            min_obs: 100,
        }
    }
}

/// The balanced "limited" sample period.
pub fn limited_sample_range() -> (NaiveDate, NaiveDate) {
    (
        NaiveDate::from_ymd_opt(2013, 12, 19).expect("valid date"),
        NaiveDate::from_ymd_opt(2022, 10, 13).expect("valid date"),
    )
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<EventRecord>,
    pub dropped: Vec<(EventRecord, DropReason)>,
}

fn drop_reason(event: &EventRecord, panel: &ReturnPanel, cfg: &FilterConfig) -> Option<DropReason> {
    if let Some((start, end)) = cfg.date_range {
        if event.event_date < start || event.event_date > end {
            return Some(DropReason::DateRange);
        }
    }
    if event.market_cap_usd.is_some_and(|c| c < cfg.cap_floor_usd) {
        return Some(DropReason::CapFloor);
    }
    let cal = panel.calendar();
    let Ok(resolved) = cal.resolve(event.event_date) else {
        return Some(DropReason::OutsideCalendar);
    };
    if resolved.shift_days > cfg.max_shift_days {
        return Some(DropReason::ShiftTooFar);
    }
    let Some(firm) = panel.firm_index(&event.firm_id) else {
        return Some(DropReason::NotListed);
    };
    let day = resolved.index;
    if panel.get(firm, day).is_none() {
        return Some(DropReason::NotListed);
    }
    let Some((lo, hi)) = cfg.dummy_span.span(day, cal.len()) else {
        return Some(DropReason::IncompleteWindow);
    };
    if (lo..=hi).any(|t| panel.get(firm, t).is_none()) {
        return Some(DropReason::IncompleteWindow);
    }
    match cfg.car_window.span(day, cal.len()) {
        Some((a, b)) if (cal.date(b) - cal.date(a)).num_days() + 1 > cfg.max_window_days => {
            return Some(DropReason::WindowTooLong)
        }
        None => return Some(DropReason::IncompleteWindow),
        _ => {}
    }
    if panel.observations(firm) < cfg.min_obs {
        return Some(DropReason::InsufficientHistory);
    }
    None
}

/// Partitions events into kept and dropped (with the first failing reason).
pub fn apply_sample_filters(
    events: &[EventRecord],
    panel: &ReturnPanel,
    config: &FilterConfig,
) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for e in events {
        match drop_reason(e, panel, config) {
            Some(reason) => out.dropped.push((e.clone(), reason)),
            None => out.kept.push(e.clone()),
        }
    }
    out
}

/// Balanced sub-panel over `date_range` plus the in-range events of the
/// retained firms. A firm is retained when it has a return on every trading
/// day of the range and at least one event inside it.
pub fn build_limited_sample(
    panel: &ReturnPanel,
    events: &[EventRecord],
    date_range: (NaiveDate, NaiveDate),
) -> Result<(ReturnPanel, Vec<EventRecord>)> {
    let (start, end) = date_range;
    if start > end {
        return Err(Error::Config(format!("date range {start}..{end} is reversed")));
    }
    let cal = panel.calendar();
    if start < cal.first() || end > cal.last() {
        return Err(Error::Config(format!(
            "date range {start}..{end} not within calendar {}..{}",
            cal.first(),
            cal.last()
        )));
    }
    let (sub_cal, offset) = cal.restrict(start, end)?;
    let in_range: Vec<&EventRecord> = events
        .iter()
        .filter(|e| e.event_date >= start && e.event_date <= end)
        .filter(|e| sub_cal.resolve(e.event_date).is_ok())
        .collect();
    if in_range.is_empty() {
        return Err(Error::Config(format!("no events inside {start}..{end}")));
    }

    let n = sub_cal.len();
    let mut firm_ids = Vec::new();
    let mut cells = Vec::new();
    for (i, firm) in panel.firm_ids().iter().enumerate() {
        if !in_range.iter().any(|e| &e.firm_id == firm) {
            continue;
        }
        let slice = &panel.firm_returns(i)[offset..offset + n];
        if slice.iter().all(|r| r.is_some()) {
            firm_ids.push(firm.clone());
            cells.extend_from_slice(slice);
        }
    }
    if firm_ids.is_empty() {
        return Err(Error::Config(format!(
            "no firm with events has complete returns over {start}..{end}"
        )));
    }
    let kept: Vec<EventRecord> = in_range
        .into_iter()
        .filter(|e| firm_ids.contains(&e.firm_id))
        .cloned()
        .collect();
    Ok((ReturnPanel::new(firm_ids, sub_cal, cells)?, kept))
}

/// Rejects same-firm events whose spans overlap on `calendar`.
pub fn validate_no_overlap(
    events: &[EventRecord],
    calendar: &TradingCalendar,
    span: EventWindow,
) -> Result<()> {
    let mut by_firm: BTreeMap<&FirmId, Vec<(usize, &EventId)>> = BTreeMap::new();
    for e in events {
        let day = calendar.resolve(e.event_date)?.index;
        by_firm.entry(&e.firm_id).or_default().push((day, &e.event_id));
    }
    for (firm, mut days) in by_firm {
        days.sort();
        for w in days.windows(2) {
            let (d0, e0) = w[0];
            let (d1, e1) = w[1];
            if d0 + span.post_days >= d1.saturating_sub(span.pre_days) {
                return Err(Error::Validation(format!(
                    "events {e0} and {e1} of firm {firm} have overlapping windows {span}"
                )));
            }
        }
    }
    Ok(())
}
