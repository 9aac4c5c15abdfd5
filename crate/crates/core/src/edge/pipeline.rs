use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use log::{debug, info, warn};

use crate::analytics::{DayState, TripState};
use crate::avl_csv::RawRecord;
use crate::edge::boundary::{detect_day_boundary, detect_trip_boundary, DayBoundary, DayClock, SessionEvent, TripBoundary, TripSession};
use crate::edge::config::EdgeConfig;
use crate::edge::reorder::ReorderBuffer;
use crate::edge::uplink::Uplink;
use crate::model::AvlTuple;
use crate::preprocess::{clean_record, should_drop, AliasTable, CleaningReport, RecordOutcome, SlotTracker};
use crate::wire::{Payload, WireMessage};

/// Where finished summaries go.
pub trait MessageSink {
    fn deliver(&mut self, msg: WireMessage);
}

impl MessageSink for Vec<WireMessage> {
    fn deliver(&mut self, msg: WireMessage) {
        self.push(msg);
    }
}

impl MessageSink for &Uplink {
    fn deliver(&mut self, msg: WireMessage) {
        self.send(msg);
    }
}

impl MessageSink for Uplink {
    fn deliver(&mut self, msg: WireMessage) {
        self.send(msg);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineMetrics {
    pub tuples_in: u64,
    pub tuples_clean: u64,
    pub dropped_missing_critical: u64,
    pub dropped_invalid: u64,
    pub duplicates: u64,
    /// Tuples that arrived after the reorder window had already moved past them.
    pub late: u64,
    pub redundant_fields_removed: u64,
    pub values_standardized: u64,
    pub fields_filled_na: u64,
    pub trips_summarized: u64,
    pub trips_dropped: u64,
    /// Trip summaries whose date is not the service day they closed in.
    pub trips_unfolded: u64,
    pub daily_summaries: u64,
    pub messages: u64,
}

struct OpenTrip {
    state: TripState,
    slots: SlotTracker,
    report: CleaningReport,
    session: TripSession,
}

/// The single-writer processing fold of one edge node. Feed it raw records in
/// arrival order; it returns the messages each step produced.
pub struct EdgeProcessor {
    config: EdgeConfig,
    aliases: AliasTable,
    reorder: ReorderBuffer<(AvlTuple, Instant)>,
    clock: DayClock,
    day: Option<DayState>,
    trip: Option<OpenTrip>,
    last_arrival: Option<Instant>,
    reports: Vec<CleaningReport>,
    metrics: PipelineMetrics,
}

impl EdgeProcessor {
    pub fn new(config: EdgeConfig, aliases: AliasTable) -> Self {
        Self {
            reorder: ReorderBuffer::new(config.reorder_window_s),
            clock: DayClock::new(config.timezone, config.day_rollover),
            config,
            aliases,
            day: None,
            trip: None,
            last_arrival: None,
            reports: Vec::new(),
            metrics: PipelineMetrics::default(),
        }
    }

    pub fn metrics(&self) -> PipelineMetrics {
        self.metrics
    }

    /// Cleaning reports of the trips closed so far, in closing order.
    pub fn take_reports(&mut self) -> Vec<CleaningReport> {
        std::mem::take(&mut self.reports)
    }

    pub fn push_record(&mut self, raw: &RawRecord, arrival: Instant) -> Vec<WireMessage> {
        let mut out = Vec::new();
        self.metrics.tuples_in += 1;
        self.last_arrival = Some(arrival);
        let tuple = match clean_record(raw, &self.aliases) {
            RecordOutcome::Clean { tuple, counts } => {
                self.count_fields(counts);
                tuple
            }
            RecordOutcome::DroppedMissingCritical { counts, .. } => {
                self.count_fields(counts);
                self.metrics.dropped_missing_critical += 1;
                return out;
            }
            RecordOutcome::DroppedInvalid { counts, .. } => {
                self.count_fields(counts);
                self.metrics.dropped_invalid += 1;
                return out;
            }
        };
        if self.reorder.push(tuple.timestamp.timestamp(), (tuple, arrival)).is_err() {
            self.metrics.late += 1;
            return out;
        }
        while let Some((tuple, arrival)) = self.reorder.pop_ready() {
            self.release(tuple, arrival, &mut out);
        }
        out
    }

    /// Periodic wall-clock check. A trip silent for longer than the idle
    /// timeout is closed along with everything still held for reordering.
    /// `wall` advances the service day when running on a live feed.
    pub fn tick(&mut self, now: Instant, wall: Option<DateTime<Utc>>) -> Vec<WireMessage> {
        let mut out = Vec::new();
        let idle = Duration::from_secs(self.config.trip_idle_timeout_s as u64);
        let quiet = self.last_arrival.is_some_and(|a| now.saturating_duration_since(a) > idle);
        if quiet && !self.reorder.is_empty() {
            while let Some((tuple, arrival)) = self.reorder.pop() {
                self.release(tuple, arrival, &mut out);
            }
        }
        if let Some(trip) = &self.trip {
            if detect_trip_boundary(&trip.session, SessionEvent::Tick { now }, idle) == TripBoundary::EndOfTrip {
                self.close_trip(&mut out);
            }
        }
        if let Some(wall) = wall {
            self.advance_day(wall, &mut out);
        }
        out
    }

    /// Source exhausted: release everything, close the open trip and the open day.
    pub fn finish(&mut self) -> Vec<WireMessage> {
        let mut out = Vec::new();
        while let Some((tuple, arrival)) = self.reorder.pop() {
            self.release(tuple, arrival, &mut out);
        }
        self.close_trip(&mut out);
        if let Some(day) = self.day.take() {
            self.emit(Payload::DailySummary(day.finalize()), &mut out);
            self.metrics.daily_summaries += 1;
        }
        out
    }

    fn count_fields(&mut self, counts: crate::preprocess::RecordCounts) {
        self.metrics.redundant_fields_removed += counts.redundant_fields_removed;
        self.metrics.values_standardized += counts.values_standardized;
        self.metrics.fields_filled_na += counts.fields_filled_na;
    }

    fn emit(&mut self, payload: Payload, out: &mut Vec<WireMessage>) {
        self.metrics.messages += 1;
        out.push(WireMessage::new(payload));
    }

    /// A tuple leaving the reorder buffer, in timestamp order.
    fn release(&mut self, tuple: AvlTuple, arrival: Instant, out: &mut Vec<WireMessage>) {
        self.advance_day(tuple.timestamp, out);

        if let Some(trip) = &mut self.trip {
            if trip.state.trip_id() == tuple.trip_id && trip.state.last_timestamp() == Some(tuple.timestamp) {
                trip.report.duplicates_removed += 1;
                self.metrics.duplicates += 1;
                return;
            }
            let event = SessionEvent::Tuple {
                trip_id: &tuple.trip_id,
                timestamp: tuple.timestamp,
            };
            let idle = Duration::from_secs(self.config.trip_idle_timeout_s as u64);
            if detect_trip_boundary(&trip.session, event, idle) == TripBoundary::EndOfTrip {
                self.close_trip(out);
            }
        }

        let trip = self.trip.get_or_insert_with(|| OpenTrip {
            state: TripState::for_tuple(&tuple, self.config.stop_move_threshold_m),
            slots: SlotTracker::new(self.config.cadence_s),
            report: CleaningReport {
                trip_id: tuple.trip_id.clone(),
                ..Default::default()
            },
            session: TripSession {
                trip_id: tuple.trip_id.clone(),
                last_event: tuple.timestamp,
                last_arrival: arrival,
            },
        });
        match trip.state.annotate(&tuple) {
            Ok(_) => {
                trip.slots.observe(tuple.timestamp.timestamp());
                trip.report.observed_tuples += 1;
                trip.session.last_event = tuple.timestamp;
                trip.session.last_arrival = arrival;
                self.metrics.tuples_clean += 1;
            }
            Err(e) => {
                // the reorder buffer releases in order, so only a timestamp
                // older than the trip's newest can land here
                debug!("tuple refused by trip {}: {e}", tuple.trip_id);
                self.metrics.late += 1;
            }
        }
    }

    fn advance_day(&mut self, instant: DateTime<Utc>, out: &mut Vec<WireMessage>) {
        match detect_day_boundary(instant, &mut self.clock) {
            DayBoundary::Continue => {}
            DayBoundary::EndOfDay(days) => {
                self.close_trip(out);
                for date in days {
                    let summary = match self.day.take() {
                        Some(day) if day.date() == date => day.finalize(),
                        other => {
                            self.day = other;
                            DayState::new(date).finalize()
                        }
                    };
                    self.emit(Payload::DailySummary(summary), out);
                    self.metrics.daily_summaries += 1;
                }
                if let Some(day) = self.day.take() {
                    warn!("discarding day state for {} after rollover", day.date());
                }
            }
        }
        if self.day.is_none() {
            self.day = self.clock.current().map(DayState::new);
        }
    }

    fn close_trip(&mut self, out: &mut Vec<WireMessage>) {
        let Some(mut trip) = self.trip.take() else {
            return;
        };
        trip.report.expected_slots = trip.slots.expected_slots();
        trip.report.missing_slots = trip.slots.missing_slots();
        trip.report.trip_dropped = should_drop(trip.report.missing_slots, self.config.missing_slot_drop_threshold);
        if trip.report.trip_dropped {
            info!(
                "dropping trip {}: {} of {} slots empty",
                trip.report.trip_id, trip.report.missing_slots, trip.report.expected_slots
            );
            self.metrics.trips_dropped += 1;
            self.reports.push(trip.report);
            return;
        }
        self.reports.push(trip.report);
        let summary = match trip.state.finalize() {
            Ok(s) => s,
            Err(e) => {
                warn!("cannot summarize trip: {e}");
                return;
            }
        };
        match self.day.as_mut().map(|d| d.fold_trip(&summary)) {
            Some(Ok(_)) => {}
            _ => {
                debug!("trip {} dated {} not folded into the current day", summary.trip_id, summary.date);
                self.metrics.trips_unfolded += 1;
            }
        }
        self.metrics.trips_summarized += 1;
        self.emit(Payload::TripSummary(summary), out);
    }
}

/// Runs ingest on its own thread and folds its records on this one, handing
/// every message to `sink`. Returns once the source is exhausted and flushed.
/// With `live` set, wall-clock time also rolls the service day.
pub fn run_pipeline<I, S>(config: &EdgeConfig, aliases: AliasTable, source: I, sink: &mut S, live: bool) -> PipelineMetrics
where
    I: IntoIterator<Item = RawRecord> + Send + 'static,
    S: MessageSink + ?Sized,
{
    let (tx, rx) = mpsc::sync_channel::<(RawRecord, Instant)>(4096);
    let ingest = thread::Builder::new()
        .name("ingest".into())
        .spawn(move || {
            for record in source {
                if tx.send((record, Instant::now())).is_err() {
                    break;
                }
            }
        })
        .expect("spawn ingest thread");

    let tick_every = Duration::from_secs(1);
    let mut processor = EdgeProcessor::new(config.clone(), aliases);
    let mut next_tick = Instant::now() + tick_every;
    loop {
        let wait = next_tick.saturating_duration_since(Instant::now());
        let produced = match rx.recv_timeout(wait) {
            Ok((record, arrival)) => processor.push_record(&record, arrival),
            Err(RecvTimeoutError::Timeout) => Vec::new(),
            Err(RecvTimeoutError::Disconnected) => break,
        };
        for msg in produced {
            sink.deliver(msg);
        }
        let now = Instant::now();
        if now >= next_tick {
            next_tick = now + tick_every;
            for msg in processor.tick(now, live.then(Utc::now)) {
                sink.deliver(msg);
            }
        }
    }
    let _ = ingest.join();
    for msg in processor.finish() {
        sink.deliver(msg);
    }
    processor.metrics()
}
