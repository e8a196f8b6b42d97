//! Synthetic dataset with the dimensions of the study sample: 167 events
//! on 54 firms over 2013-2022, of which 126 events on 48 firms fall in the
//! balanced limited period (2219 trading days).

use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{
    limited_sample_range, write_characteristics_csv, write_events_csv, write_factors_csv, write_returns_csv,
    EventId, EventRecord, EventWindow, FactorSeries, FirmCharacteristics, FirmId, IncidentType, NewsSource, ReturnPanel, Sector,
    TradingCalendar,
};
use crate::error::Result;
use crate::sim::{rep_rng, BETA_HML_RANGE, BETA_MKT_RANGE, BETA_SMB_RANGE, HML_VOL, MKT_DRIFT, MKT_VOL, RESIDUAL_VOL, SMB_VOL};

pub const COMPLETE_FIRMS: usize = 48;
pub const INCOMPLETE_FIRMS: usize = 6;
pub const LIMITED_EVENTS: usize = 126;
pub const OUTSIDE_EVENTS_COMPLETE: usize = 25;
pub const OUTSIDE_EVENTS_INCOMPLETE: usize = 16;
pub const TOTAL_EVENTS: usize = LIMITED_EVENTS + OUTSIDE_EVENTS_COMPLETE + OUTSIDE_EVENTS_INCOMPLETE;
pub const MISSING_PE_EVENTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub rho: f64,
    pub event_var_multiplier: f64,
    /// Total abnormal return over days -1..+1.
    pub injected_car: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            rho: 0.012,
            event_var_multiplier: 1.5,
            injected_car: -0.008,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub panel: ReturnPanel,
    pub factors: FactorSeries,
    pub events: Vec<EventRecord>,
    pub characteristics: Vec<FirmCharacteristics>,
}

impl Fixture {
    /// Writes `returns.csv`, `factors.csv`, `events.csv` and
    /// `characteristics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_returns_csv(&dir.join("returns.csv"), &self.panel, &self.factors)?;
        write_factors_csv(&dir.join("factors.csv"), &self.factors)?;
        write_events_csv(&dir.join("events.csv"), &self.events)?;
        write_characteristics_csv(&dir.join("characteristics.csv"), &self.characteristics)?;
        Ok(())
    }
}

fn easter_sunday(year: i32) -> NaiveDate {
    let a = year % 19;
    let b = year / 100;
    let c = year % 100;
    let d = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - d - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    NaiveDate::from_ymd_opt(year, month as u32, day as u32).expect("valid Easter date")
}

fn nth_weekday(year: i32, month: u32, wd: Weekday, n: u8) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(year, month, wd, n).expect("valid weekday")
}

fn last_weekday(year: i32, month: u32, wd: Weekday) -> NaiveDate {
    let mut d = NaiveDate::from_ymd_opt(year, month + 1, 1).expect("valid date") - Duration::days(1);
    while d.weekday() != wd {
        d -= Duration::days(1);
    }
    d
}

fn observed(d: NaiveDate) -> NaiveDate {
    match d.weekday() {
        Weekday::Sat => d - Duration::days(1),
        Weekday::Sun => d + Duration::days(1),
        _ => d,
    }
}

/// US exchange holidays of `year`, plus one-off closures.
fn holidays(year: i32) -> Vec<NaiveDate> {
    let ymd = |m, d| NaiveDate::from_ymd_opt(year, m, d).expect("valid date");
    let mut out = vec![
        nth_weekday(year, 1, Weekday::Mon, 3),
        nth_weekday(year, 2, Weekday::Mon, 3),
        easter_sunday(year) - Duration::days(2),
        last_weekday(year, 5, Weekday::Mon),
        observed(ymd(7, 4)),
        nth_weekday(year, 9, Weekday::Mon, 1),
        nth_weekday(year, 11, Weekday::Thu, 4),
        observed(ymd(12, 25)),
    ];
    // New Year's Day on a Saturday is not observed on the prior Friday.
    if ymd(1, 1).weekday() != Weekday::Sat {
        out.push(observed(ymd(1, 1)));
    }
    if year >= 2022 {
        out.push(observed(ymd(6, 19)));
    }
    match year {
        2013 => out.push(ymd(12, 24)),
        2018 => out.push(ymd(12, 5)),
        _ => {}
    }
    out
}

/// Trading days between two dates (inclusive).
pub fn fixture_calendar(start: NaiveDate, end: NaiveDate) -> TradingCalendar {
    let mut days = Vec::new();
    let mut closed = Vec::new();
    for y in start.year()..=end.year() {
        closed.extend(holidays(y));
    }
    let mut d = start;
    while d <= end {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) && !closed.contains(&d) {
            days.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    TradingCalendar::new(days).expect("increasing days")
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Event day indices for one firm inside `[lo, hi]`, at least `gap` days
/// apart, and whose three-day window spans at most five calendar days.
fn place_events(
    rng: &mut ChaCha8Rng,
    cal: &TradingCalendar,
    taken: &[usize],
    count: usize,
    (lo, hi): (usize, usize),
    gap: usize,
) -> Vec<usize> {
    let mut days: Vec<usize> = Vec::new();
    while days.len() < count {
        let d = rng.random_range(lo..=hi);
        let short = (cal.date(d + 1) - cal.date(d - 1)).num_days() <= 4;
        if short && taken.iter().chain(&days).all(|&x| x.abs_diff(d) >= gap) {
            days.push(d);
        }
    }
    days
}

const INCIDENT_MIX: [IncidentType; 10] = [
    IncidentType::DataBreach,
    IncidentType::DataBreach,
    IncidentType::DataBreach,
    IncidentType::DataBreach,
    IncidentType::Ransomware,
    IncidentType::CyberBreach,
    IncidentType::DataBreach,
    IncidentType::SoftwareBreach,
    IncidentType::Ransomware,
    IncidentType::DataBreach,
];

const SOURCE_MIX: [NewsSource; 5] = [
    NewsSource::Reuters,
    NewsSource::Reuters,
    NewsSource::Twitter,
    NewsSource::Reuters,
    NewsSource::Other,
];

/// Builds the fixture from `config.seed`.
pub fn study_fixture(config: &FixtureConfig) -> Result<Fixture> {
    let mut rng = rep_rng(config.seed, 0);
    let cal = fixture_calendar(
        NaiveDate::from_ymd_opt(2013, 1, 2).expect("valid date"),
        NaiveDate::from_ymd_opt(2022, 12, 30).expect("valid date"),
    );
    let (range_start, range_end) = limited_sample_range();
    let first_in = cal.index_of(range_start).expect("range start is a trading day");
    let last_in = cal.index_of(range_end).expect("range end is a trading day");
    let t_len = cal.len();
    let n_firms = COMPLETE_FIRMS + INCOMPLETE_FIRMS;
    let margin = 8;
    let gap = 30;

    // (firm, day) per event: the in-range block first, then the others.
    let mut placed: Vec<Vec<usize>> = vec![Vec::new(); n_firms];
    let mut events: Vec<(usize, usize)> = Vec::with_capacity(TOTAL_EVENTS);
    for k in 0..LIMITED_EVENTS {
        let f = k % COMPLETE_FIRMS;
        let d = place_events(&mut rng, &cal, &placed[f], 1, (first_in + margin, last_in - margin), gap)[0];
        placed[f].push(d);
        events.push((f, d));
    }
    for k in 0..OUTSIDE_EVENTS_COMPLETE {
        let f = (k * 7) % COMPLETE_FIRMS;
        let span = if k % 2 == 0 { (margin, first_in - 1) } else { (last_in + 1, t_len - 1 - margin) };
        let d = place_events(&mut rng, &cal, &placed[f], 1, span, gap)[0];
        placed[f].push(d);
        events.push((f, d));
    }
    // Spaced so that even the curve windows do not overlap.
    let short_gap = EventWindow::curve_default().len();
    for k in 0..OUTSIDE_EVENTS_INCOMPLETE {
        let f = COMPLETE_FIRMS + k % INCOMPLETE_FIRMS;
        let d = place_events(&mut rng, &cal, &placed[f], 1, (last_in + 1, t_len - 1 - margin), short_gap)[0];
        placed[f].push(d);
        events.push((f, d));
    }

    let mut mkt = Vec::with_capacity(t_len);
    let mut smb = Vec::with_capacity(t_len);
    let mut hml = Vec::with_capacity(t_len);
    let mut rf = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        mkt.push(MKT_DRIFT + MKT_VOL * rng.sample::<f64, _>(StandardNormal));
        smb.push(SMB_VOL * rng.sample::<f64, _>(StandardNormal));
        hml.push(HML_VOL * rng.sample::<f64, _>(StandardNormal));
        rf.push(0.00005);
    }

    // Incomplete firms list partway through the limited period.
    let listing: Vec<usize> = (0..n_firms)
        .map(|f| if f < COMPLETE_FIRMS { 0 } else { first_in + 300 * (1 + f - COMPLETE_FIRMS) })
        .collect();
    let (a, b) = (config.rho.sqrt(), (1.0 - config.rho).sqrt());
    let betas: Vec<[f64; 3]> = (0..n_firms)
        .map(|_| {
            [
                uniform(&mut rng, BETA_MKT_RANGE),
                uniform(&mut rng, BETA_SMB_RANGE),
                uniform(&mut rng, BETA_HML_RANGE),
            ]
        })
        .collect();
    let mut resid = vec![0.0; n_firms * t_len];
    for t in 0..t_len {
        let common: f64 = rng.sample(StandardNormal);
        for f in 0..n_firms {
            let z: f64 = rng.sample(StandardNormal);
            resid[f * t_len + t] = RESIDUAL_VOL * (a * common + b * z);
        }
    }
    let scale = config.event_var_multiplier.sqrt();
    let shift = config.injected_car / 3.0;
    for &(f, d) in &events {
        for t in d - 1..=d + 1 {
            resid[f * t_len + t] = scale * resid[f * t_len + t] + shift;
        }
    }
    let mut cells = Vec::with_capacity(n_firms * t_len);
    for f in 0..n_firms {
        let beta = &betas[f];
        for t in 0..t_len {
            let r = beta[0] * mkt[t] + beta[1] * smb[t] + beta[2] * hml[t] + resid[f * t_len + t];
            cells.push((t >= listing[f]).then_some(r));
        }
    }
    let firm_ids: Vec<FirmId> = (0..n_firms).map(|f| FirmId(format!("FIRM{:03}", f + 1))).collect();
    let panel = ReturnPanel::new(firm_ids.clone(), cal.clone(), cells)?;
    let factors = FactorSeries::new(cal.clone(), mkt, smb, hml, rf)?;

    let caps: Vec<f64> = (0..n_firms).map(|_| (uniform(&mut rng, (20.0, 26.0))).exp()).collect();
    let ages: Vec<f64> = (0..n_firms).map(|_| uniform(&mut rng, (1.0, 4.5))).collect();
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&k| (events[k].1, events[k].0));

    let mut records = Vec::with_capacity(TOTAL_EVENTS);
    let mut characteristics = Vec::with_capacity(TOTAL_EVENTS);
    for (rank, &k) in order.iter().enumerate() {
        let (f, d) = events[k];
        let date = cal.date(d);
        let cap = caps[f] * uniform(&mut rng, (0.8, 1.25));
        records.push(EventRecord {
            event_id: EventId(format!("EV{:04}", rank + 1)),
            firm_id: firm_ids[f].clone(),
            event_date: date,
            incident_type: INCIDENT_MIX[k % INCIDENT_MIX.len()],
            sector: Sector::ALL[f % Sector::ALL.len()],
            news_source: SOURCE_MIX[k % SOURCE_MIX.len()],
            market_cap_usd: Some(cap),
        });
        // Characteristics dated on the event, so each event joins its own row.
        characteristics.push(FirmCharacteristics {
            firm_id: firm_ids[f].clone(),
            asof_date: date,
            ln_size: Some(cap.ln()),
            ln_age: Some(ages[f] + (date.year() - 2013) as f64 * 0.05),
            book_to_market: Some(uniform(&mut rng, (0.1, 1.5))),
            price_to_earnings: (rank % 10 != 3 || rank / 10 >= MISSING_PE_EVENTS)
                .then(|| uniform(&mut rng, (5.0, 60.0))),
        });
    }
    characteristics.sort_by(|x, y| (&x.firm_id, x.asof_date).cmp(&(&y.firm_id, y.asof_date)));
    Ok(Fixture {
        panel,
        factors,
        events: records,
        characteristics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn easter_dates() {
        assert_eq!(easter_sunday(2019), NaiveDate::from_ymd_opt(2019, 4, 21).unwrap());
        assert_eq!(easter_sunday(2022), NaiveDate::from_ymd_opt(2022, 4, 17).unwrap());
    }

    #[test]
    fn limited_period_length() {
        let (a, b) = limited_sample_range();
        assert_eq!(fixture_calendar(a, b).len(), 2219);
    }
}
