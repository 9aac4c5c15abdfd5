//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveTime, Timelike, Utc};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Placeholder written into non-critical fields that arrived empty or unusable.
pub const NOT_AVAILABLE: &str = "N/A";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
}

/// A WGS84 position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    latitude: f64,
    longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Result<Self, ModelError> {
        // NaN fails both range checks
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(ModelError::Latitude(latitude));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(ModelError::Longitude(longitude));
        }
        Ok(Self {
            latitude,
            longitude,
        })
    }

    pub fn latitude(&self) -> f64 {
        self.latitude
    }

    pub fn longitude(&self) -> f64 {
        self.longitude
    }
}

/// The 18 columns of the canonical AVL row. Latitude and longitude together
/// form the single `position` field, so the row carries 17 logical fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    Timestamp,
    Latitude,
    Longitude,
    RouteName,
    TripId,
    TripDate,
    TripStartTime,
    TripFinishTime,
    VehicleId,
    DriverId,
    Heading,
    Speed,
    Odometer,
    DoorStatus,
    Occupancy,
    DelaySeconds,
    NextStopId,
    ScheduleAdherence,
}

impl Column {
    pub const COUNT: usize = 18;

    pub const ALL: [Column; Column::COUNT] = [
        Column::Timestamp,
        Column::Latitude,
        Column::Longitude,
        Column::RouteName,
        Column::TripId,
        Column::TripDate,
        Column::TripStartTime,
        Column::TripFinishTime,
        Column::VehicleId,
        Column::DriverId,
        Column::Heading,
        Column::Speed,
        Column::Odometer,
        Column::DoorStatus,
        Column::Occupancy,
        Column::DelaySeconds,
        Column::NextStopId,
        Column::ScheduleAdherence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Timestamp => "timestamp",
            Column::Latitude => "latitude",
            Column::Longitude => "longitude",
            Column::RouteName => "route_name",
            Column::TripId => "trip_id",
            Column::TripDate => "trip_date",
            Column::TripStartTime => "trip_start_time",
            Column::TripFinishTime => "trip_finish_time",
            Column::VehicleId => "vehicle_id",
            Column::DriverId => "driver_id",
            Column::Heading => "heading",
            Column::Speed => "speed",
            Column::Odometer => "odometer",
            Column::DoorStatus => "door_status",
            Column::Occupancy => "occupancy",
            Column::DelaySeconds => "delay_seconds",
            Column::NextStopId => "next_stop_id",
            Column::ScheduleAdherence => "schedule_adherence",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Columns the analytics cannot do without. A tuple missing any of them
    /// is discarded instead of being padded with `N/A`.
    pub fn is_critical(self) -> bool {
        matches!(
            self,
            Column::Timestamp
                | Column::Latitude
                | Column::Longitude
                | Column::RouteName
                | Column::TripId
                | Column::TripDate
                | Column::TripStartTime
        )
    }
}

/// Value of a non-critical field after cleaning.
#[derive(Debug, Clone, PartialEq)]
pub enum Field<T> {
    Value(T),
    NotAvailable,
}

impl<T> Field<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Field::Value(v) => Some(v),
            Field::NotAvailable => None,
        }
    }

    pub fn is_available(&self) -> bool {
        matches!(self, Field::Value(_))
    }
}

impl<T: fmt::Display> fmt::Display for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Value(v) => v.fmt(f),
            Field::NotAvailable => f.write_str(NOT_AVAILABLE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoorStatus {
    Open,
    Closed,
}

impl DoorStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DoorStatus::Open => "open",
            DoorStatus::Closed => "closed",
        }
    }
}

impl FromStr for DoorStatus {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "open" => Ok(DoorStatus::Open),
            "closed" => Ok(DoorStatus::Closed),
            _ => Err(()),
        }
    }
}

impl fmt::Display for DoorStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAdherence {
    Early,
    OnTime,
    Late,
}

impl ScheduleAdherence {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleAdherence::Early => "early",
            ScheduleAdherence::OnTime => "on_time",
            ScheduleAdherence::Late => "late",
        }
    }
}

impl FromStr for ScheduleAdherence {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "early" => Ok(ScheduleAdherence::Early),
            "on_time" => Ok(ScheduleAdherence::OnTime),
            "late" => Ok(ScheduleAdherence::Late),
            _ => Err(()),
        }
    }
}

impl fmt::Display for ScheduleAdherence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One fully cleaned telemetry record. The seven critical columns are always
/// present; every other field is either a parsed value or `N/A`.
#[derive(Debug, Clone, PartialEq)]
pub struct AvlTuple {
    pub timestamp: DateTime<Utc>,
    pub position: GeoPoint,
    pub route_name: String,
    pub trip_id: String,
    pub trip_date: NaiveDate,
    pub trip_start_time: NaiveTime,
    pub trip_finish_time: Field<NaiveTime>,
    pub vehicle_id: Field<String>,
    pub driver_id: Field<String>,
    pub heading: Field<f64>,
    pub speed: Field<f64>,
    pub odometer: Field<f64>,
    pub door_status: Field<DoorStatus>,
    pub occupancy: Field<u32>,
    pub delay_seconds: Field<i64>,
    pub next_stop_id: Field<String>,
    pub schedule_adherence: Field<ScheduleAdherence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotionLabel {
    Move,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotionAnnotation {
    pub tuple_timestamp: DateTime<Utc>,
    pub label: MotionLabel,
}

/// End-of-trip aggregate shipped to the hub.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripSummary {
    pub trip_id: String,
    pub date: NaiveDate,
    #[serde(with = "hms")]
    pub start_time: NaiveTime,
    pub total_move: u64,
    pub total_stop: u64,
    pub total_time_length: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Daypart {
    Morning,
    Afternoon,
    Evening,
}

impl Daypart {
    pub const ALL: [Daypart; 3] = [Daypart::Morning, Daypart::Afternoon, Daypart::Evening];

    pub fn as_str(self) -> &'static str {
        match self {
            Daypart::Morning => "morning",
            Daypart::Afternoon => "afternoon",
            Daypart::Evening => "evening",
        }
    }

    /// Start hours are bucketed into inclusive hour labels 5-12, 13-18 and
    /// 19-23; 0-4 belongs to no daypart.
    pub fn of(start_time: NaiveTime) -> Option<Daypart> {
        match start_time.hour() {
            5..=12 => Some(Daypart::Morning),
            13..=18 => Some(Daypart::Afternoon),
            19..=23 => Some(Daypart::Evening),
            _ => None,
        }
    }
}

impl fmt::Display for Daypart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Averages of one daypart. The three averages are `None` exactly when no
/// trip started in the daypart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaypartSummary {
    #[serde(serialize_with = "round1_opt")]
    pub avg_time_length: Option<f64>,
    #[serde(serialize_with = "round1_opt")]
    pub avg_moves: Option<f64>,
    #[serde(serialize_with = "round1_opt")]
    pub avg_stops: Option<f64>,
    pub trip_count: u64,
}

impl DaypartSummary {
    pub const EMPTY: DaypartSummary = DaypartSummary {
        avg_time_length: None,
        avg_moves: None,
        avg_stops: None,
        trip_count: 0,
    };

    /// Averages from per-daypart sums.
    pub fn from_sums(sum_time_length: u64, sum_moves: u64, sum_stops: u64, trip_count: u64) -> Self {
        if trip_count == 0 {
            return Self::EMPTY;
        }
        let n = trip_count as f64;
        DaypartSummary {
            avg_time_length: Some(sum_time_length as f64 / n),
            avg_moves: Some(sum_moves as f64 / n),
            avg_stops: Some(sum_stops as f64 / n),
            trip_count,
        }
    }
}

/// End-of-day aggregate: three averages for each of three dayparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySummary {
    pub date: NaiveDate,
    pub morning: DaypartSummary,
    pub afternoon: DaypartSummary,
    pub evening: DaypartSummary,
}

impl DailySummary {
    pub fn daypart(&self, part: Daypart) -> &DaypartSummary {
        match part {
            Daypart::Morning => &self.morning,
            Daypart::Afternoon => &self.afternoon,
            Daypart::Evening => &self.evening,
        }
    }
}

/// Rounds to one decimal, the precision averages are shipped and reported at.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round1_opt<S: Serializer>(value: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => s.serialize_f64(round1(*v)),
        None => s.serialize_none(),
    }
}

/// `HH:MM:SS` time-of-day encoding.
pub mod hms {
    use chrono::NaiveTime;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&t.format("%H:%M:%S"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveTime, D::Error> {
        let raw = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        super::parse_time_of_day(&raw).ok_or_else(|| D::Error::custom(format!("bad time {raw:?}")))
    }
}

/// Accepts `HH:MM:SS` or `HH:MM`.
pub fn parse_time_of_day(s: &str) -> Option<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .ok()
        .filter(|t| t.nanosecond() == 0)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}
