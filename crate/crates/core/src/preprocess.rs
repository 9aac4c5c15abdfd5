//! Repair of raw telemetry before it reaches the analytics.
//!
//! A trip's records go through, in order: removal of non-schema columns,
//! value standardization, N/A filling (or dropping tuples that lack a critical
//! field), a timestamp sort, duplicate removal and finally the cadence-slot
//! count that decides whether the whole trip is too sparse to keep.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avl_csv::RawRecord;
use crate::model::{parse_date, parse_time_of_day, AvlTuple, Column, Field, GeoPoint, NOT_AVAILABLE};

/// Default expected spacing between fixes, in seconds.
pub const DEFAULT_CADENCE_S: i64 = 5;
/// A trip with this many empty cadence slots or more is discarded.
pub const DEFAULT_MISSING_SLOT_DROP_THRESHOLD: u64 = 100;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("cannot count cadence slots of an empty trip")]
    EmptyTrip,
    #[error("tuples are not sorted by timestamp")]
    Unsorted,
    #[error("alias table: {0}")]
    AliasTable(String),
    #[error("alias table: {0}")]
    Csv(#[from] csv::Error),
    #[error("alias table: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-trip accounting of what cleaning did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub trip_id: String,
    pub expected_slots: u64,
    pub observed_tuples: u64,
    pub missing_slots: u64,
    pub duplicates_removed: u64,
    pub tuples_dropped_missing_critical: u64,
    /// Tuples rejected by standardization (illegal coordinates, unparsable critical values).
    pub tuples_dropped_invalid: u64,
    pub fields_filled_na: u64,
    pub redundant_fields_removed: u64,
    pub values_standardized: u64,
    pub trip_dropped: bool,
}

impl CleaningReport {
    pub fn counters_are_zero(&self) -> bool {
        self.missing_slots == 0
            && self.duplicates_removed == 0
            && self.tuples_dropped_missing_critical == 0
            && self.tuples_dropped_invalid == 0
            && self.fields_filled_na == 0
            && self.redundant_fields_removed == 0
            && self.values_standardized == 0
            && !self.trip_dropped
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleaningParams {
    pub cadence_s: i64,
    pub drop_threshold: u64,
}

impl Default for CleaningParams {
    fn default() -> Self {
        Self {
            cadence_s: DEFAULT_CADENCE_S,
            drop_threshold: DEFAULT_MISSING_SLOT_DROP_THRESHOLD,
        }
    }
}

/// Operator-supplied canonical spellings, keyed by column and case-folded raw text.
#[derive(Debug, Clone, Default)]
pub struct AliasTable {
    entries: HashMap<(Column, String), String>,
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

fn aliasable(col: Column) -> bool {
    matches!(
        col,
        Column::RouteName
            | Column::TripId
            | Column::VehicleId
            | Column::DriverId
            | Column::NextStopId
            | Column::DoorStatus
            | Column::ScheduleAdherence
    )
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, column: Column, raw: &str, canonical: &str) {
        self.entries.insert((column, fold(raw)), canonical.trim().to_string());
    }

    pub fn lookup(&self, column: Column, raw: &str) -> Option<&str> {
        self.entries.get(&(column, fold(raw))).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a `field,raw,canonical` CSV.
    pub fn from_reader<R: Read>(input: R) -> Result<Self, PreprocessError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers != ["field", "raw", "canonical"] {
            return Err(PreprocessError::AliasTable(format!(
                "expected header field,raw,canonical, got {}",
                headers.join(",")
            )));
        }
        let mut table = AliasTable::new();
        for row in reader.records() {
            let row = row?;
            let field = row.get(0).unwrap_or("").trim();
            let column = Column::from_name(field)
                .filter(|c| aliasable(*c))
                .ok_or_else(|| PreprocessError::AliasTable(format!("field {field:?} takes no aliases")))?;
            table.insert(column, row.get(1).unwrap_or(""), row.get(2).unwrap_or(""));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        Self::from_reader(std::fs::File::open(path)?)
    }
}

/// A record restricted to the canonical schema. `None` marks an absent cell.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CanonicalRecord {
    cells: [Option<String>; Column::COUNT],
}

impl CanonicalRecord {
    pub fn get(&self, col: Column) -> Option<&str> {
        self.cells[col.index()].as_deref()
    }

    pub fn set(&mut self, col: Column, value: Option<String>) {
        self.cells[col.index()] = value;
    }

    /// Number of canonical columns present, counting latitude and longitude separately.
    pub fn present_columns(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Keeps only the 18 canonical columns. Returns the record and the number of
/// fields removed. A repeated canonical column counts as redundant.
pub fn strip_redundant_fields(raw: &RawRecord) -> (CanonicalRecord, u64) {
    let mut record = CanonicalRecord::default();
    let mut seen = [false; Column::COUNT];
    let mut removed = 0;
    for (name, value) in raw.fields() {
        match Column::from_name(name) {
            Some(col) if !seen[col.index()] => {
                seen[col.index()] = true;
                if !value.is_empty() {
                    record.set(col, Some(value.to_string()));
                }
            }
            _ => removed += 1,
        }
    }
    (record, removed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    MissingCritical(Column),
    InvalidCritical(Column),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Standardized {
    Kept { record: CanonicalRecord, changed: u64 },
    Dropped(DropReason),
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
}

fn parse_coordinate(s: &str, limit: f64) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| (-limit..=limit).contains(v))
}

fn parse_non_negative(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)
}

fn parse_heading(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| (0.0..360.0).contains(v))
}

fn is_na(s: &str) -> bool {
    s.eq_ignore_ascii_case(NOT_AVAILABLE)
}

/// Canonical text for a present, non-N/A cell, or `None` if the value is illegal.
fn standardize_cell(col: Column, value: &str, aliases: &AliasTable) -> Option<String> {
    let fmt_time = |t: NaiveTime| t.format("%H:%M:%S").to_string();
    match col {
        Column::Timestamp => {
            parse_timestamp(value).map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        }
        Column::Latitude => parse_coordinate(value, 90.0).map(|_| value.to_string()),
        Column::Longitude => parse_coordinate(value, 180.0).map(|_| value.to_string()),
        Column::TripDate => parse_date(value).map(|d| d.format("%Y-%m-%d").to_string()),
        Column::TripStartTime | Column::TripFinishTime => parse_time_of_day(value).map(fmt_time),
        Column::Heading => parse_heading(value).map(|_| value.to_string()),
        Column::Speed | Column::Odometer => parse_non_negative(value).map(|_| value.to_string()),
        Column::Occupancy => value.parse::<u32>().ok().map(|_| value.to_string()),
        Column::DelaySeconds => value.parse::<i64>().ok().map(|_| value.to_string()),
        Column::DoorStatus => {
            let v = aliases.lookup(col, value).map_or_else(|| fold(value), fold);
            v.parse::<crate::model::DoorStatus>().ok().map(|_| v)
        }
        Column::ScheduleAdherence => {
            let v = aliases.lookup(col, value).map_or_else(|| fold(value), fold);
            v.parse::<crate::model::ScheduleAdherence>().ok().map(|_| v)
        }
        Column::RouteName | Column::TripId | Column::VehicleId | Column::DriverId | Column::NextStopId => {
            Some(aliases.lookup(col, value).unwrap_or(value).to_string())
        }
    }
}

/// Trims text, maps aliases, normalizes dates and times and rejects illegal
/// values. An illegal critical value drops the tuple; an illegal non-critical
/// value becomes `N/A`. `changed` counts cells whose text was altered.
pub fn standardize_values(mut record: CanonicalRecord, aliases: &AliasTable) -> Standardized {
    let mut changed = 0;
    for col in Column::ALL {
        let Some(original) = record.get(col) else { continue };
        let trimmed = original.trim();
        let next = if trimmed.is_empty() {
            // whitespace-only is an absent cell
            None
        } else if is_na(trimmed) {
            // a critical N/A is as good as absent; fill_or_drop deals with it
            (!col.is_critical()).then(|| NOT_AVAILABLE.to_string())
        } else {
            match standardize_cell(col, trimmed, aliases) {
                Some(v) => Some(v),
                None if col.is_critical() => {
                    return Standardized::Dropped(DropReason::InvalidCritical(col))
                }
                None => Some(NOT_AVAILABLE.to_string()),
            }
        };
        let altered = match &next {
            Some(v) => v != original,
            None => !trimmed.is_empty() && !is_na(trimmed),
        };
        if altered {
            changed += 1;
        }
        record.set(col, next);
    }
    Standardized::Kept { record, changed }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Filled {
    Complete { tuple: AvlTuple, filled: u64 },
    Dropped(DropReason),
}

fn non_critical<T>(
    record: &CanonicalRecord,
    col: Column,
    filled: &mut u64,
    parse: impl FnOnce(&str) -> Option<T>,
) -> Field<T> {
    match record.get(col) {
        Some(v) if is_na(v) => Field::NotAvailable,
        Some(v) => match parse(v) {
            Some(value) => Field::Value(value),
            None => {
                *filled += 1;
                Field::NotAvailable
            }
        },
        None => {
            *filled += 1;
            Field::NotAvailable
        }
    }
}

/// Drops the tuple if a critical field is absent, otherwise fills every absent
/// non-critical field with `N/A`. `filled` counts the filled fields.
pub fn fill_or_drop_missing_fields(record: &CanonicalRecord) -> Filled {
    fn critical<T>(
        record: &CanonicalRecord,
        col: Column,
        parse: impl FnOnce(&str) -> Option<T>,
    ) -> Result<T, DropReason> {
        let raw = record
            .get(col)
            .filter(|v| !is_na(v))
            .ok_or(DropReason::MissingCritical(col))?;
        parse(raw).ok_or(DropReason::InvalidCritical(col))
    }

    // report absence before invalidity so the counters attribute drops consistently
    if let Some(col) = Column::ALL
        .iter()
        .copied()
        .filter(|c| c.is_critical())
        .find(|c| record.get(*c).is_none_or(is_na))
    {
        return Filled::Dropped(DropReason::MissingCritical(col));
    }

    let parts = (|| {
        let timestamp = critical(record, Column::Timestamp, parse_timestamp)?;
        let lat = critical(record, Column::Latitude, |v| parse_coordinate(v, 90.0))?;
        let lon = critical(record, Column::Longitude, |v| parse_coordinate(v, 180.0))?;
        let position = GeoPoint::new(lat, lon).map_err(|_| DropReason::InvalidCritical(Column::Latitude))?;
        let route_name = critical(record, Column::RouteName, |v| Some(v.to_string()))?;
        let trip_id = critical(record, Column::TripId, |v| Some(v.to_string()))?;
        let trip_date: NaiveDate = critical(record, Column::TripDate, parse_date)?;
        let trip_start_time = critical(record, Column::TripStartTime, parse_time_of_day)?;
        Ok::<_, DropReason>((timestamp, position, route_name, trip_id, trip_date, trip_start_time))
    })();
    let (timestamp, position, route_name, trip_id, trip_date, trip_start_time) = match parts {
        Ok(p) => p,
        Err(reason) => return Filled::Dropped(reason),
    };

    let mut filled = 0;
    let text = |v: &str| Some(v.to_string());
    let tuple = AvlTuple {
        timestamp,
        position,
        route_name,
        trip_id,
        trip_date,
        trip_start_time,
        trip_finish_time: non_critical(record, Column::TripFinishTime, &mut filled, parse_time_of_day),
        vehicle_id: non_critical(record, Column::VehicleId, &mut filled, text),
        driver_id: non_critical(record, Column::DriverId, &mut filled, text),
        heading: non_critical(record, Column::Heading, &mut filled, parse_heading),
        speed: non_critical(record, Column::Speed, &mut filled, parse_non_negative),
        odometer: non_critical(record, Column::Odometer, &mut filled, parse_non_negative),
        door_status: non_critical(record, Column::DoorStatus, &mut filled, |v| v.parse().ok()),
        occupancy: non_critical(record, Column::Occupancy, &mut filled, |v| v.parse().ok()),
        delay_seconds: non_critical(record, Column::DelaySeconds, &mut filled, |v| v.parse().ok()),
        next_stop_id: non_critical(record, Column::NextStopId, &mut filled, text),
        schedule_adherence: non_critical(record, Column::ScheduleAdherence, &mut filled, |v| {
            v.parse().ok()
        }),
    };
    Filled::Complete { tuple, filled }
}

/// What happened to one raw record on its way to becoming a tuple.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordOutcome {
    Clean {
        tuple: AvlTuple,
        counts: RecordCounts,
    },
    DroppedMissingCritical {
        trip_id: Option<String>,
        counts: RecordCounts,
    },
    DroppedInvalid {
        trip_id: Option<String>,
        counts: RecordCounts,
    },
}

/// Field-level counters for a single record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecordCounts {
    pub redundant_fields_removed: u64,
    pub values_standardized: u64,
    pub fields_filled_na: u64,
}

/// Runs the per-record steps (strip, standardize, fill-or-drop) on one record.
pub fn clean_record(raw: &RawRecord, aliases: &AliasTable) -> RecordOutcome {
    let (record, redundant) = strip_redundant_fields(raw);
    let mut counts = RecordCounts {
        redundant_fields_removed: redundant,
        ..Default::default()
    };
    let trip_id = || raw.get(Column::TripId.name()).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    let record = match standardize_values(record, aliases) {
        Standardized::Kept { record, changed } => {
            counts.values_standardized = changed;
            record
        }
        Standardized::Dropped(_) => {
            return RecordOutcome::DroppedInvalid {
                trip_id: trip_id(),
                counts,
            }
        }
    };
    match fill_or_drop_missing_fields(&record) {
        Filled::Complete { tuple, filled } => {
            counts.fields_filled_na = filled;
            RecordOutcome::Clean { tuple, counts }
        }
        Filled::Dropped(DropReason::MissingCritical(_)) => RecordOutcome::DroppedMissingCritical {
            trip_id: trip_id(),
            counts,
        },
        Filled::Dropped(DropReason::InvalidCritical(_)) => RecordOutcome::DroppedInvalid {
            trip_id: trip_id(),
            counts,
        },
    }
}

/// Keeps the first tuple of every `(trip_id, timestamp)` pair. Order is preserved.
pub fn dedupe(tuples: Vec<AvlTuple>) -> (Vec<AvlTuple>, u64) {
    let before = tuples.len();
    let mut seen = HashSet::with_capacity(before);
    let kept: Vec<AvlTuple> = tuples
        .into_iter()
        .filter(|t| seen.insert((t.trip_id.clone(), t.timestamp)))
        .collect();
    let removed = (before - kept.len()) as u64;
    (kept, removed)
}

/// Incremental cadence-slot accounting for a trip whose timestamps arrive in
/// non-decreasing order. Each timestamp occupies the nearest slot of the grid
/// anchored at the first timestamp.
#[derive(Debug, Clone)]
pub struct SlotTracker {
    cadence_s: i64,
    first: Option<i64>,
    last_slot: i64,
    occupied: u64,
}

impl SlotTracker {
    pub fn new(cadence_s: i64) -> Self {
        assert!(cadence_s > 0, "cadence must be positive");
        Self {
            cadence_s,
            first: None,
            last_slot: -1,
            occupied: 0,
        }
    }

    fn slot_of(&self, offset: i64) -> i64 {
        // round half up in integer arithmetic
        (2 * offset + self.cadence_s).div_euclid(2 * self.cadence_s)
    }

    /// Records a timestamp (Unix seconds). Returns `false` and ignores it if it
    /// precedes the previous one.
    pub fn observe(&mut self, ts: i64) -> bool {
        let first = *self.first.get_or_insert(ts);
        let slot = self.slot_of(ts - first);
        if slot < self.last_slot || ts < first {
            return false;
        }
        if slot > self.last_slot {
            self.occupied += 1;
            self.last_slot = slot;
        }
        true
    }

    pub fn expected_slots(&self) -> u64 {
        if self.first.is_none() {
            0
        } else {
            (self.last_slot + 1) as u64
        }
    }

    pub fn missing_slots(&self) -> u64 {
        self.expected_slots() - self.occupied
    }
}

/// Number of empty slots on the cadence grid spanning the first to the last tuple.
pub fn count_missing_slots(tuples: &[AvlTuple]) -> Result<u64, PreprocessError> {
    count_missing_slots_with(tuples, DEFAULT_CADENCE_S)
}

pub fn count_missing_slots_with(tuples: &[AvlTuple], cadence_s: i64) -> Result<u64, PreprocessError> {
    if tuples.is_empty() {
        return Err(PreprocessError::EmptyTrip);
    }
    let mut tracker = SlotTracker::new(cadence_s);
    for t in tuples {
        if !tracker.observe(t.timestamp.timestamp()) {
            return Err(PreprocessError::Unsorted);
        }
    }
    Ok(tracker.missing_slots())
}

pub fn should_drop_trip(report: &CleaningReport) -> bool {
    should_drop(report.missing_slots, DEFAULT_MISSING_SLOT_DROP_THRESHOLD)
}

pub fn should_drop(missing_slots: u64, threshold: u64) -> bool {
    missing_slots >= threshold
}

/// Cleans one trip's raw records with default cadence and drop threshold.
pub fn clean_trip<I>(records: I, aliases: &AliasTable) -> (Vec<AvlTuple>, CleaningReport)
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<RawRecord>,
{
    clean_trip_with(records, aliases, CleaningParams::default())
}

pub fn clean_trip_with<I>(records: I, aliases: &AliasTable, params: CleaningParams) -> (Vec<AvlTuple>, CleaningReport)
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<RawRecord>,
{
    use std::borrow::Borrow;

    let mut report = CleaningReport::default();
    let mut tuples = Vec::new();
    for raw in records {
        let outcome = clean_record(raw.borrow(), aliases);
        let counts = match &outcome {
            RecordOutcome::Clean { counts, .. }
            | RecordOutcome::DroppedMissingCritical { counts, .. }
            | RecordOutcome::DroppedInvalid { counts, .. } => *counts,
        };
        report.redundant_fields_removed += counts.redundant_fields_removed;
        report.values_standardized += counts.values_standardized;
        report.fields_filled_na += counts.fields_filled_na;
        match outcome {
            RecordOutcome::Clean { tuple, .. } => {
                if report.trip_id.is_empty() {
                    report.trip_id = tuple.trip_id.clone();
                }
                tuples.push(tuple);
            }
            RecordOutcome::DroppedMissingCritical { trip_id, .. } => {
                report.tuples_dropped_missing_critical += 1;
                if report.trip_id.is_empty() {
                    report.trip_id = trip_id.unwrap_or_default();
                }
            }
            RecordOutcome::DroppedInvalid { trip_id, .. } => {
                report.tuples_dropped_invalid += 1;
                if report.trip_id.is_empty() {
                    report.trip_id = trip_id.unwrap_or_default();
                }
            }
        }
    }

    // stable: among equal timestamps the first arrival stays first
    tuples.sort_by_key(|t| t.timestamp);
    let (tuples, removed) = dedupe(tuples);
    report.duplicates_removed = removed;
    report.observed_tuples = tuples.len() as u64;

    if tuples.is_empty() {
        return (tuples, report);
    }
    let mut slots = SlotTracker::new(params.cadence_s);
    for t in &tuples {
        slots.observe(t.timestamp.timestamp());
    }
    report.expected_slots = slots.expected_slots();
    report.missing_slots = slots.missing_slots();
    report.trip_dropped = should_drop(report.missing_slots, params.drop_threshold);
    if report.trip_dropped {
        return (Vec::new(), report);
    }
    (tuples, report)
}
