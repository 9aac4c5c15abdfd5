//! End-of-trip and end-of-day predicates.

use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use chrono_tz::Tz;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripBoundary {
    Continue,
    EndOfTrip,
}

/// What the edge knows about the trip it is currently folding.
#[derive(Debug, Clone)]
pub struct TripSession {
    pub trip_id: String,
    /// Event time of the newest tuple of the trip.
    pub last_event: DateTime<Utc>,
    /// Wall-clock arrival of the newest tuple of the trip.
    pub last_arrival: Instant,
}

#[derive(Debug, Clone, Copy)]
pub enum SessionEvent<'a> {
    Tuple {
        trip_id: &'a str,
        timestamp: DateTime<Utc>,
    },
    Tick {
        now: Instant,
    },
}

/// A trip ends when a tuple of another trip shows up, or when nothing has
/// been heard from it for longer than `idle_timeout`, measured in event time
/// for tuples and in wall-clock time for ticks.
pub fn detect_trip_boundary(session: &TripSession, event: SessionEvent<'_>, idle_timeout: Duration) -> TripBoundary {
    let idle = match event {
        SessionEvent::Tuple { trip_id, timestamp } => {
            if trip_id != session.trip_id {
                return TripBoundary::EndOfTrip;
            }
            (timestamp - session.last_event).to_std().unwrap_or_default()
        }
        SessionEvent::Tick { now } => now.saturating_duration_since(session.last_arrival),
    };
    if idle > idle_timeout {
        TripBoundary::EndOfTrip
    } else {
        TripBoundary::Continue
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DayBoundary {
    Continue,
    /// Service days that finished, oldest first.
    EndOfDay(Vec<NaiveDate>),
}

/// Tracks the local service day. A day runs from `rollover` local time to the
/// next `rollover`, and is named after the calendar date it starts on.
#[derive(Debug, Clone)]
pub struct DayClock {
    timezone: Tz,
    rollover: NaiveTime,
    current: Option<NaiveDate>,
}

impl DayClock {
    pub fn new(timezone: Tz, rollover: NaiveTime) -> Self {
        Self {
            timezone,
            rollover,
            current: None,
        }
    }

    pub fn current(&self) -> Option<NaiveDate> {
        self.current
    }

    pub fn service_day(&self, instant: DateTime<Utc>) -> NaiveDate {
        let local = instant.with_timezone(&self.timezone).naive_local();
        let since_midnight = self.rollover - NaiveTime::MIN;
        (local - since_midnight).date()
    }

    /// Advances the clock. Each crossed rollover is reported exactly once; a
    /// clock that moves backwards is ignored.
    pub fn observe(&mut self, instant: DateTime<Utc>) -> DayBoundary {
        let day = self.service_day(instant);
        let Some(current) = self.current else {
            self.current = Some(day);
            return DayBoundary::Continue;
        };
        if day <= current {
            return DayBoundary::Continue;
        }
        let ended = current.iter_days().take_while(|d| *d < day).collect();
        self.current = Some(day);
        DayBoundary::EndOfDay(ended)
    }
}

/// Convenience wrapper with the signature the pipeline uses.
pub fn detect_day_boundary(clock: DateTime<Utc>, state: &mut DayClock) -> DayBoundary {
    state.observe(clock)
}
