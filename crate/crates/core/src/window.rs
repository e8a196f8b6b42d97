//! Per-event CARs, cross-event AAR/CAAR curves and dollar-loss aggregation.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::benchmark::ArEstimate;
use crate::data::{EventId, EventRecord, EventWindow, FirmId, IncidentType, NewsSource, Sector};
use crate::error::{Error, Result};
use crate::format::{sig6, sig6_opt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarRow {
    pub event_id: EventId,
    pub firm_id: FirmId,
    pub date: NaiveDate,
    pub car: f64,
    pub window: EventWindow,
    /// (offset, AR) over the CAR window, in offset order.
    pub per_offset_ar: Vec<(i32, f64)>,
    pub market_cap_usd: Option<f64>,
    pub loss_usd: Option<f64>,
    pub incident_type: IncidentType,
    pub sector: Sector,
    pub news_source: NewsSource,
}

impl CarRow {
    pub fn year(&self) -> i32 {
        self.date.year()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CarTable {
    pub rows: Vec<CarRow>,
}

impl CarTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn cars(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.car).collect()
    }
}

fn estimate_for<'a>(estimates: &'a [ArEstimate], id: &EventId) -> Result<&'a ArEstimate> {
    estimates
        .iter()
        .find(|e| e.has_event(id))
        .ok_or_else(|| Error::Contract(format!("event {id} was not estimated")))
}

fn window_ars(est: &ArEstimate, id: &EventId, window: EventWindow) -> Result<Vec<(i32, f64)>> {
    window
        .offsets()
        .map(|k| {
            est.ar(id, k).map(|ar| (k, ar)).ok_or_else(|| {
                Error::Contract(format!("event {id} lacks an abnormal return at offset {k:+}"))
            })
        })
        .collect()
}

/// CAR per event as the sum of its window-day abnormal returns.
pub fn build_car_table(estimates: &[ArEstimate], events: &[EventRecord], window: EventWindow) -> Result<CarTable> {
    let mut rows = Vec::with_capacity(events.len());
    for e in events {
        let est = estimate_for(estimates, &e.event_id)?;
        let per_offset_ar = window_ars(est, &e.event_id, window)?;
        let car: f64 = per_offset_ar.iter().map(|(_, ar)| ar).sum();
        rows.push(CarRow {
            event_id: e.event_id.clone(),
            firm_id: e.firm_id.clone(),
            date: e.event_date,
            car,
            window,
            per_offset_ar,
            market_cap_usd: e.market_cap_usd,
            loss_usd: e.market_cap_usd.map(|cap| car * cap),
            incident_type: e.incident_type,
            sector: e.sector,
            news_source: e.news_source,
        });
    }
    Ok(CarTable { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AarCurve {
    pub offsets: Vec<i32>,
    pub aar: Vec<f64>,
    pub caar: Vec<f64>,
    pub n_events: usize,
}

/// Mean AR per offset across events, and its running sum.
pub fn aar_caar(estimates: &[ArEstimate], events: &[EventRecord], curve_window: EventWindow) -> Result<AarCurve> {
    if events.is_empty() {
        return Err(Error::EmptySelection("no events for the AAR curve".into()));
    }
    let offsets: Vec<i32> = curve_window.offsets().collect();
    let mut sums = vec![0.0; offsets.len()];
    for e in events {
        let est = estimate_for(estimates, &e.event_id)?;
        for (k, (_, ar)) in window_ars(est, &e.event_id, curve_window)?.into_iter().enumerate() {
            sums[k] += ar;
        }
    }
    let n = events.len() as f64;
    let aar: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let caar = aar
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a;
            Some(*acc)
        })
        .collect();
    Ok(AarCurve {
        offsets,
        aar,
        caar,
        n_events: events.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub total_usd: f64,
    pub mean_usd: f64,
    pub median_usd: f64,
    pub count: usize,
}

/// Total, mean and median dollar loss over rows passing `filter` that have a
/// market capitalisation. Even counts average the two middle values.
pub fn loss_summary(table: &CarTable, filter: impl Fn(&CarRow) -> bool) -> Result<LossSummary> {
    let mut losses: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| filter(r))
        .filter_map(|r| r.loss_usd)
        .collect();
    if losses.is_empty() {
        return Err(Error::EmptySelection("no rows with a dollar loss pass the filter".into()));
    }
    losses.sort_by(f64::total_cmp);
    let n = losses.len();
    let total: f64 = losses.iter().sum();
    let median = if n % 2 == 1 {
        losses[n / 2]
    } else {
        (losses[n / 2 - 1] + losses[n / 2]) / 2.0
    };
    Ok(LossSummary {
        total_usd: total,
        mean_usd: total / n as f64,
        median_usd: median,
        count: n,
    })
}

pub const CAR_TABLE_HEADER: &str = "event_id\tfirm_id\tdate\tcar\tloss_usd\tincident_type\tsector\tnews_source\tyear";

pub fn write_car_table_tsv(mut w: impl Write, table: &CarTable) -> Result<()> {
    writeln!(w, "{CAR_TABLE_HEADER}")?;
    for r in &table.rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.event_id,
            r.firm_id,
            r.date,
            sig6(r.car),
            sig6_opt(r.loss_usd),
            r.incident_type.key(),
            r.sector.key(),
            r.news_source.key(),
            r.year()
        )?;
    }
    Ok(())
}

pub fn write_aar_curve_tsv(mut w: impl Write, curve: &AarCurve) -> Result<()> {
    writeln!(w, "offset\taar\tcaar")?;
    for ((o, a), c) in curve.offsets.iter().zip(&curve.aar).zip(&curve.caar) {
        writeln!(w, "{o}\t{}\t{}", sig6(*a), sig6(*c))?;
    }
    Ok(())
}
