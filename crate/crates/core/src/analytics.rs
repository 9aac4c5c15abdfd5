//! Streaming move/stop annotation and the end-of-trip and end-of-day folds.

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use thiserror::Error;

use crate::geo::{classify_motion_with, STOP_MOVE_THRESHOLD_M};
use crate::model::{
    AvlTuple, DailySummary, Daypart, DaypartSummary, GeoPoint, MotionAnnotation, MotionLabel,
    TripSummary,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("tuple for trip {got} fed to state of trip {expected}")]
    WrongTrip { expected: String, got: String },
    #[error("tuple at {got} does not follow previous tuple at {last}")]
    OutOfOrder {
        last: DateTime<Utc>,
        got: DateTime<Utc>,
    },
    #[error("trip {0} has no annotated tuples")]
    EmptyTrip(String),
    #[error("trip dated {trip} folded into day {day}")]
    DateMismatch { day: NaiveDate, trip: NaiveDate },
}

/// Running state of one trip.
#[derive(Debug, Clone, PartialEq)]
pub struct TripState {
    trip_id: String,
    date: NaiveDate,
    start_time: NaiveTime,
    threshold_m: f64,
    first_timestamp: Option<DateTime<Utc>>,
    last_timestamp: Option<DateTime<Utc>>,
    previous_point: Option<GeoPoint>,
    move_count: u64,
    stop_count: u64,
}

impl TripState {
    pub fn new(trip_id: impl Into<String>, date: NaiveDate, start_time: NaiveTime) -> Self {
        Self::with_threshold(trip_id, date, start_time, STOP_MOVE_THRESHOLD_M)
    }

    pub fn with_threshold(
        trip_id: impl Into<String>,
        date: NaiveDate,
        start_time: NaiveTime,
        threshold_m: f64,
    ) -> Self {
        Self {
            trip_id: trip_id.into(),
            date,
            start_time,
            threshold_m,
            first_timestamp: None,
            last_timestamp: None,
            previous_point: None,
            move_count: 0,
            stop_count: 0,
        }
    }

    /// State for the trip `tuple` belongs to, before `tuple` is annotated.
    pub fn for_tuple(tuple: &AvlTuple, threshold_m: f64) -> Self {
        Self::with_threshold(tuple.trip_id.clone(), tuple.trip_date, tuple.trip_start_time, threshold_m)
    }

    pub fn trip_id(&self) -> &str {
        &self.trip_id
    }

    pub fn last_timestamp(&self) -> Option<DateTime<Utc>> {
        self.last_timestamp
    }

    pub fn annotated(&self) -> u64 {
        self.move_count + self.stop_count
    }

    /// Labels `tuple` against the previous point. The first tuple of a trip has
    /// no predecessor and is a stop.
    pub fn annotate(&mut self, tuple: &AvlTuple) -> Result<MotionAnnotation, AnalyticsError> {
        if tuple.trip_id != self.trip_id {
            return Err(AnalyticsError::WrongTrip {
                expected: self.trip_id.clone(),
                got: tuple.trip_id.clone(),
            });
        }
        if let Some(last) = self.last_timestamp {
            if tuple.timestamp <= last {
                return Err(AnalyticsError::OutOfOrder {
                    last,
                    got: tuple.timestamp,
                });
            }
        }
        let label = match self.previous_point {
            None => MotionLabel::Stop,
            Some(prev) => classify_motion_with(prev, tuple.position, self.threshold_m),
        };
        match label {
            MotionLabel::Move => self.move_count += 1,
            MotionLabel::Stop => self.stop_count += 1,
        }
        self.first_timestamp.get_or_insert(tuple.timestamp);
        self.last_timestamp = Some(tuple.timestamp);
        self.previous_point = Some(tuple.position);
        Ok(MotionAnnotation {
            tuple_timestamp: tuple.timestamp,
            label,
        })
    }

    pub fn finalize(&self) -> Result<TripSummary, AnalyticsError> {
        let (Some(first), Some(last)) = (self.first_timestamp, self.last_timestamp) else {
            return Err(AnalyticsError::EmptyTrip(self.trip_id.clone()));
        };
        Ok(TripSummary {
            trip_id: self.trip_id.clone(),
            date: self.date,
            start_time: self.start_time,
            total_move: self.move_count,
            total_stop: self.stop_count,
            total_time_length: (last - first).num_seconds() as u64,
        })
    }
}

pub fn daypart_of(start_time: NaiveTime) -> Option<Daypart> {
    Daypart::of(start_time)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DaypartSums {
    pub sum_time_length: u64,
    pub sum_moves: u64,
    pub sum_stops: u64,
    pub trip_count: u64,
}

/// Running sums of one service day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayState {
    date: NaiveDate,
    parts: [DaypartSums; 3],
    /// Trips starting outside every daypart (00:00 to 04:59).
    unassigned_trips: u64,
}

impl DayState {
    pub fn new(date: NaiveDate) -> Self {
        Self {
            date,
            parts: [DaypartSums::default(); 3],
            unassigned_trips: 0,
        }
    }

    pub fn date(&self) -> NaiveDate {
        self.date
    }

    pub fn sums(&self, part: Daypart) -> DaypartSums {
        self.parts[part as usize]
    }

    pub fn trip_count(&self) -> u64 {
        self.parts.iter().map(|p| p.trip_count).sum::<u64>() + self.unassigned_trips
    }

    /// Adds a trip to the daypart its start time falls in. Returns that daypart.
    pub fn fold_trip(&mut self, summary: &TripSummary) -> Result<Option<Daypart>, AnalyticsError> {
        if summary.date != self.date {
            return Err(AnalyticsError::DateMismatch {
                day: self.date,
                trip: summary.date,
            });
        }
        let Some(part) = daypart_of(summary.start_time) else {
            self.unassigned_trips += 1;
            return Ok(None);
        };
        let sums = &mut self.parts[part as usize];
        sums.sum_time_length += summary.total_time_length;
        sums.sum_moves += summary.total_move;
        sums.sum_stops += summary.total_stop;
        sums.trip_count += 1;
        Ok(Some(part))
    }

    pub fn finalize(&self) -> DailySummary {
        let avg = |part: Daypart| {
            let s = self.sums(part);
            DaypartSummary::from_sums(s.sum_time_length, s.sum_moves, s.sum_stops, s.trip_count)
        };
        DailySummary {
            date: self.date,
            morning: avg(Daypart::Morning),
            afternoon: avg(Daypart::Afternoon),
            evening: avg(Daypart::Evening),
        }
    }
}

/// Annotates a whole clean trip in one go.
pub fn summarize_trip(tuples: &[AvlTuple], threshold_m: f64) -> Result<(TripSummary, Vec<MotionAnnotation>), AnalyticsError> {
    let first = tuples.first().ok_or_else(|| AnalyticsError::EmptyTrip(String::new()))?;
    let mut state = TripState::for_tuple(first, threshold_m);
    let annotations = tuples
        .iter()
        .map(|t| state.annotate(t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((state.finalize()?, annotations))
}
