//! Scheduled departures and missing-trip detection.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use serde::Deserialize;
use thiserror::Error;

use crate::model::{parse_date, parse_time_of_day, TripSummary};

pub const DEFAULT_TOLERANCE_MIN: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScheduleEntry {
    pub route_name: String,
    pub date: NaiveDate,
    pub departure: NaiveTime,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("schedule: {0}")]
    Csv(#[from] csv::Error),
    #[error("schedule line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("schedule line {line}: duplicate departure {route} {date} {time}")]
    Duplicate {
        line: u64,
        route: String,
        date: NaiveDate,
        time: NaiveTime,
    },
}

#[derive(Deserialize)]
struct Row {
    route_name: String,
    date: String,
    departure_time: String,
}

/// Reads CSV with header `route_name,date,departure_time` (times `HH:MM`).
pub fn read_schedule<R: Read>(input: R) -> Result<Vec<ScheduleEntry>, ScheduleError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i as u64 + 2;
        let row = row?;
        let date = parse_date(&row.date).ok_or_else(|| ScheduleError::Row {
            line,
            reason: format!("bad date {:?}", row.date),
        })?;
        let departure = parse_time_of_day(&row.departure_time).ok_or_else(|| ScheduleError::Row {
            line,
            reason: format!("bad departure_time {:?}", row.departure_time),
        })?;
        let entry = ScheduleEntry {
            route_name: row.route_name,
            date,
            departure,
        };
        if !seen.insert(entry.clone()) {
            return Err(ScheduleError::Duplicate {
                line,
                route: entry.route_name,
                date,
                time: departure,
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn load_schedule(path: &Path) -> Result<Vec<ScheduleEntry>, ScheduleError> {
    let file = std::fs::File::open(path).map_err(csv::Error::from)?;
    read_schedule(file)
}

/// Scheduled departures with no trip summary on the same date starting within
/// `tolerance_min` minutes. Candidate pairs are taken closest first, and each
/// summary and each entry is used at most once. Result is sorted by date and time.
pub fn detect_missing_trips(summaries: &[TripSummary], schedule: &[ScheduleEntry], tolerance_min: u32) -> Vec<ScheduleEntry> {
    let tolerance = i64::from(tolerance_min) * 60;
    let mut order: Vec<usize> = (0..schedule.len()).collect();
    order.sort_by(|&a, &b| schedule[a].cmp(&schedule[b]));

    let mut pairs = Vec::new();
    for (rank, &e) in order.iter().enumerate() {
        let entry = &schedule[e];
        for (s, summary) in summaries.iter().enumerate() {
            if summary.date != entry.date {
                continue;
            }
            let gap = (summary.start_time - entry.departure).num_seconds().abs();
            if gap <= tolerance {
                pairs.push((gap, rank, summary.start_time, s));
            }
        }
    }
    pairs.sort();

    let mut entry_used = vec![false; order.len()];
    let mut summary_used = vec![false; summaries.len()];
    for (_, rank, _, s) in pairs {
        if !entry_used[rank] && !summary_used[s] {
            entry_used[rank] = true;
            summary_used[s] = true;
        }
    }
    order
        .iter()
        .zip(entry_used)
        .filter(|(_, used)| !used)
        .map(|(&e, _)| schedule[e].clone())
        .collect()
}
