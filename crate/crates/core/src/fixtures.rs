//! Deterministic synthetic AVL feeds with ground truth, and a fault injector.
//!
//! A fixture is one bus running one route for a number of days. The
//! generator writes the replayable CSV, the schedule it ran, and the exact
//! trip and daily summaries a correct edge must produce for it. The ground
//! truth is computed here by a plain batch pass over the generated points.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::avl_csv::write_tuples;
use crate::config::{ConfigError, KeyValues};
use crate::geo::{great_circle_distance, STOP_MOVE_THRESHOLD_M};
use crate::hub::ScheduleEntry;
use crate::model::{
    parse_date, parse_time_of_day, AvlTuple, Column, DailySummary, DaypartSummary, DoorStatus, Field, GeoPoint,
    ScheduleAdherence, TripSummary,
};
use crate::wire::Payload;

pub const CADENCE_S: i64 = 5;
/// Minimum quiet time between the end of one trip and the next departure.
pub const TURNAROUND_S: i64 = 120;

pub const AVL_FILE: &str = "avl.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.ndjson";
pub const SCHEDULE_FILE: &str = "schedule.csv";

/// Rates are per row probabilities in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaultPlan {
    pub duplicate_rate: f64,
    pub drop_rate: f64,
    pub reorder_rate: f64,
    /// Largest arrival delay given to a reordered row.
    pub reorder_max_s: i64,
    pub malformed_rate: f64,
    pub blank_rate: f64,
}

impl FaultPlan {
    pub fn is_clean(&self) -> bool {
        self.duplicate_rate == 0.0
            && self.drop_rate == 0.0
            && (self.reorder_rate == 0.0 || self.reorder_max_s == 0)
            && self.malformed_rate == 0.0
            && self.blank_rate == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub days: u32,
    pub start_date: NaiveDate,
    pub trips_morning: u32,
    pub trips_afternoon: u32,
    pub trips_evening: u32,
    /// Explicit local departure times; replaces the per-daypart counts.
    pub departures: Option<Vec<NaiveTime>>,
    pub trip_duration_mean_s: i64,
    pub trip_duration_jitter_s: i64,
    /// Cruising speed in m/s; each trip scales it by a factor in `1 ± speed_jitter`.
    pub speed_m_s: f64,
    pub speed_jitter: f64,
    pub route: Vec<GeoPoint>,
    /// `(offset_s, dwell_s)` pairs: the bus stands still for `dwell_s` seconds
    /// starting `offset_s` seconds into every trip.
    pub dwell: Vec<(i64, i64)>,
    pub faults: FaultPlan,
    pub timezone: Tz,
    pub route_name: String,
    pub vehicle_id: String,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let p = |lat, lon| GeoPoint::new(lat, lon).expect("valid default route");
        Self {
            seed: 51,
            days: 1,
            start_date: NaiveDate::from_ymd_opt(2017, 2, 13).expect("valid date"),
            trips_morning: 8,
            trips_afternoon: 6,
            trips_evening: 3,
            departures: None,
            trip_duration_mean_s: 2700,
            trip_duration_jitter_s: 300,
            speed_m_s: 6.0,
            speed_jitter: 0.3,
            route: vec![
                p(46.0878, -64.7782),
                p(46.0940, -64.7700),
                p(46.1000, -64.7900),
                p(46.1120, -64.8000),
                p(46.1050, -64.8250),
                p(46.0900, -64.8150),
            ],
            dwell: vec![(120, 30), (420, 45), (900, 30), (1500, 60), (2100, 30), (2700, 45)],
            faults: FaultPlan::default(),
            timezone: Tz::UTC,
            route_name: "51".into(),
            vehicle_id: "V51".into(),
        }
    }
}

fn parse_list<T>(text: &str, sep: char, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, String> {
    text.split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| item(s).ok_or_else(|| format!("bad item {s:?}")))
        .collect()
}

impl FixtureSpec {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "days",
        "start_date",
        "trips_morning",
        "trips_afternoon",
        "trips_evening",
        "departures",
        "trip_duration_mean_s",
        "trip_duration_jitter_s",
        "speed_m_s",
        "speed_jitter",
        "route",
        "dwell",
        "duplicate_rate",
        "drop_rate",
        "reorder_rate",
        "reorder_max_s",
        "malformed_rate",
        "blank_rate",
        "timezone",
        "route_name",
        "vehicle_id",
    ];

    /// Reads a spec from the same key-value format the edge config uses.
    /// `route` is `lat lon | lat lon | ...`, `dwell` is `offset:seconds, ...`
    /// and `departures` is `HH:MM, HH:MM, ...`.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ConfigError> {
        kv.reject_unknown(Self::KEYS)?;
        let d = Self::default();
        let route = kv
            .parse_with("route", |v| {
                parse_list(v, '|', |p| {
                    let mut it = p.split_whitespace().map(str::parse::<f64>);
                    match (it.next(), it.next(), it.next()) {
                        (Some(Ok(lat)), Some(Ok(lon)), None) => GeoPoint::new(lat, lon).ok(),
                        _ => None,
                    }
                })
            })?
            .unwrap_or(d.route);
        let dwell = kv
            .parse_with("dwell", |v| {
                parse_list(v, ',', |p| {
                    let (a, b) = p.split_once(':')?;
                    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
                })
            })?
            .unwrap_or(d.dwell);
        let departures = kv.parse_with("departures", |v| parse_list(v, ',', parse_time_of_day))?;
        let spec = Self {
            seed: kv.typed_or("seed", d.seed)?,
            days: kv.typed_or("days", d.days)?,
            start_date: kv
                .parse_with("start_date", |v| parse_date(v).ok_or_else(|| "expected YYYY-MM-DD".to_string()))?
                .unwrap_or(d.start_date),
            trips_morning: kv.typed_or("trips_morning", d.trips_morning)?,
            trips_afternoon: kv.typed_or("trips_afternoon", d.trips_afternoon)?,
            trips_evening: kv.typed_or("trips_evening", d.trips_evening)?,
            departures,
            trip_duration_mean_s: kv.typed_or("trip_duration_mean_s", d.trip_duration_mean_s)?,
            trip_duration_jitter_s: kv.typed_or("trip_duration_jitter_s", d.trip_duration_jitter_s)?,
            speed_m_s: kv.typed_or("speed_m_s", d.speed_m_s)?,
            speed_jitter: kv.typed_or("speed_jitter", d.speed_jitter)?,
            route,
            dwell,
            faults: FaultPlan {
                duplicate_rate: kv.typed_or("duplicate_rate", 0.0)?,
                drop_rate: kv.typed_or("drop_rate", 0.0)?,
                reorder_rate: kv.typed_or("reorder_rate", 0.0)?,
                reorder_max_s: kv.typed_or("reorder_max_s", 0)?,
                malformed_rate: kv.typed_or("malformed_rate", 0.0)?,
                blank_rate: kv.typed_or("blank_rate", 0.0)?,
            },
            timezone: kv.typed_or("timezone", d.timezone)?,
            route_name: kv.get("route_name").map_or(d.route_name, str::to_string),
            vehicle_id: kv.get("vehicle_id").map_or(d.vehicle_id, str::to_string),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.route.is_empty() {
            return invalid("route needs at least one point");
        }
        if self.trip_duration_mean_s < 0 || self.trip_duration_jitter_s < 0 {
            return invalid("trip durations must not be negative");
        }
        if !(self.speed_m_s >= 0.0) || !(0.0..1.0).contains(&self.speed_jitter) {
            return invalid("speed_m_s must be >= 0 and speed_jitter in [0, 1)");
        }
        let f = &self.faults;
        for rate in [f.duplicate_rate, f.drop_rate, f.reorder_rate, f.malformed_rate, f.blank_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return invalid("fault rates must lie in [0, 1]");
            }
        }
        if f.reorder_max_s < 0 {
            return invalid("reorder_max_s must not be negative");
        }
        Ok(())
    }

    /// Local departure times of one service day, ascending.
    pub fn day_departures(&self) -> Vec<NaiveTime> {
        if let Some(explicit) = &self.departures {
            let mut v = explicit.clone();
            v.sort();
            v.dedup();
            return v;
        }
        let mut out = Vec::new();
        for (start_h, end_h, n) in [
            (5, 13, self.trips_morning),
            (13, 19, self.trips_afternoon),
            (19, 24, self.trips_evening),
        ] {
            let window = (end_h - start_h) * 3600;
            for i in 0..n {
                let offset = window * i / n;
                let secs = start_h * 3600 + offset / 60 * 60;
                out.push(NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).expect("inside the day"));
            }
        }
        out
    }
}

/// One generated trip, before any fault injection.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrip {
    pub summary: TripSummary,
    pub tuples: Vec<AvlTuple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub trips: Vec<GeneratedTrip>,
    pub daily: Vec<DailySummary>,
    pub schedule: Vec<ScheduleEntry>,
}

impl Fixture {
    pub fn tuple_count(&self) -> usize {
        self.trips.iter().map(|t| t.tuples.len()).sum()
    }

    pub fn csv(&self) -> String {
        let mut out = Vec::new();
        write_tuples(&mut out, self.trips.iter().flat_map(|t| &t.tuples)).expect("writing to memory");
        String::from_utf8(out).expect("rows are UTF-8")
    }

    /// The messages a correct edge emits, in emission order, each as
    /// `{"type":..,"payload":..}`.
    pub fn ground_truth(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut trips = self.trips.iter().peekable();
        for day in &self.daily {
            while let Some(t) = trips.next_if(|t| t.summary.date == day.date) {
                out.push(Payload::TripSummary(t.summary.clone()).canonical_line());
            }
            out.push(Payload::DailySummary(day.clone()).canonical_line());
        }
        out
    }

    pub fn schedule_csv(&self) -> String {
        let mut out = String::from("route_name,date,departure_time\n");
        for e in &self.schedule {
            out.push_str(&format!("{},{},{}\n", e.route_name, e.date, e.departure.format("%H:%M")));
        }
        out
    }

    /// Writes the CSV feed, the ground truth and the schedule into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(AVL_FILE), self.csv())?;
        let mut truth = self.ground_truth().join("\n");
        truth.push('\n');
        fs::write(dir.join(GROUND_TRUTH_FILE), truth)?;
        fs::write(dir.join(SCHEDULE_FILE), self.schedule_csv())?;
        Ok(())
    }
}

/// Walks a polyline back and forth at constant ground speed.
struct Route {
    points: Vec<GeoPoint>,
    cumulative: Vec<f64>,
}

impl Route {
    fn new(points: &[GeoPoint]) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().expect("non-empty");
            cumulative.push(last + great_circle_distance(w[0], w[1]));
        }
        Self {
            points: points.to_vec(),
            cumulative,
        }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    fn at(&self, distance: f64) -> (f64, f64) {
        let len = self.length();
        let first = self.points[0];
        if len <= 0.0 {
            return (first.latitude(), first.longitude());
        }
        let mut s = distance.rem_euclid(2.0 * len);
        if s > len {
            s = 2.0 * len - s;
        }
        let i = self.cumulative.partition_point(|c| *c <= s).clamp(1, self.points.len() - 1);
        let (a, b) = (self.points[i - 1], self.points[i]);
        let seg = self.cumulative[i] - self.cumulative[i - 1];
        let f = if seg > 0.0 { (s - self.cumulative[i - 1]) / seg } else { 0.0 };
        (
            a.latitude() + f * (b.latitude() - a.latitude()),
            a.longitude() + f * (b.longitude() - a.longitude()),
        )
    }
}

/// Seven decimals, as a receiver would see them after a text round trip.
fn round7(x: f64) -> f64 {
    format!("{x:.7}").parse().expect("formatted float parses")
}

/// Seconds of standing still within the first `t` seconds of a trip.
fn dwelled(dwell: &[(i64, i64)], t: i64) -> i64 {
    dwell.iter().map(|&(start, len)| (t - start).clamp(0, len.max(0))).sum()
}

fn local_to_utc(tz: Tz, date: NaiveDate, time: NaiveTime) -> DateTime<Utc> {
    tz.from_local_datetime(&date.and_time(time))
        .earliest()
        // a departure inside a spring-forward gap runs an hour later
        .unwrap_or_else(|| {
            tz.from_local_datetime(&(date.and_time(time) + Duration::hours(1)))
                .earliest()
                .expect("an hour past a gap exists")
        })
        .with_timezone(&Utc)
}

/// Batch recount of one trip: first point stops, then the 15 m rule.
fn oracle_summary(trip_id: &str, date: NaiveDate, start: NaiveTime, tuples: &[AvlTuple]) -> TripSummary {
    let mut moves = 0;
    let mut stops = 0;
    for (i, t) in tuples.iter().enumerate() {
        let is_move = i > 0 && great_circle_distance(tuples[i - 1].position, t.position) >= STOP_MOVE_THRESHOLD_M;
        if is_move {
            moves += 1;
        } else {
            stops += 1;
        }
    }
    let span = match (tuples.first(), tuples.last()) {
        (Some(a), Some(b)) => (b.timestamp - a.timestamp).num_seconds() as u64,
        _ => 0,
    };
    TripSummary {
        trip_id: trip_id.to_string(),
        date,
        start_time: start,
        total_move: moves,
        total_stop: stops,
        total_time_length: span,
    }
}

fn oracle_part(trips: &[&TripSummary]) -> DaypartSummary {
    if trips.is_empty() {
        return DaypartSummary::EMPTY;
    }
    let n = trips.len() as f64;
    let sum = |f: fn(&TripSummary) -> u64| trips.iter().map(|t| f(t)).sum::<u64>() as f64;
    DaypartSummary {
        avg_time_length: Some(sum(|t| t.total_time_length) / n),
        avg_moves: Some(sum(|t| t.total_move) / n),
        avg_stops: Some(sum(|t| t.total_stop) / n),
        trip_count: trips.len() as u64,
    }
}

pub fn generate(spec: &FixtureSpec) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let route = Route::new(&spec.route);
    let departures = spec.day_departures();
    let mut trips = Vec::new();
    let mut daily = Vec::new();
    let mut schedule = Vec::new();

    for date in spec.start_date.iter_days().take(spec.days as usize) {
        let mut day_trips = Vec::new();
        for (k, &dep) in departures.iter().enumerate() {
            schedule.push(ScheduleEntry {
                route_name: spec.route_name.clone(),
                date,
                departure: dep,
            });
            let next = departures
                .get(k + 1)
                .map_or(24 * 3600, |n| i64::from(n.num_seconds_from_midnight()));
            let room = next - i64::from(dep.num_seconds_from_midnight()) - TURNAROUND_S;
            let jitter = spec.trip_duration_jitter_s;
            let drawn = spec.trip_duration_mean_s + if jitter > 0 { rng.random_range(-jitter..=jitter) } else { 0 };
            let duration = drawn.clamp(0, room.max(0));
            let speed = spec.speed_m_s
                * if spec.speed_jitter > 0.0 {
                    rng.random_range(1.0 - spec.speed_jitter..=1.0 + spec.speed_jitter)
                } else {
                    1.0
                };
            let trip_id = format!("{}-{}-{}", spec.route_name, date.format("%Y%m%d"), dep.format("%H%M"));
            let start = local_to_utc(spec.timezone, date, dep);
            let delay: i64 = rng.random_range(-120..=300);
            let adherence = match delay {
                d if d < -60 => ScheduleAdherence::Early,
                d if d > 120 => ScheduleAdherence::Late,
                _ => ScheduleAdherence::OnTime,
            };
            let finish = dep + Duration::seconds(duration);
            let driver = format!("D{}", rng.random_range(100..200));
            let route_offset = rng.random_range(0.0..route.length().max(1.0));

            let mut offsets: Vec<i64> = (0..=duration / CADENCE_S).map(|i| i * CADENCE_S).collect();
            if duration % CADENCE_S != 0 {
                offsets.push(duration);
            }
            let tuples: Vec<AvlTuple> = offsets
                .iter()
                .map(|&t| {
                    let moving = t - dwelled(&spec.dwell, t);
                    let standing = spec.dwell.iter().any(|&(s, len)| t >= s && t < s + len);
                    let travelled = moving as f64 * speed;
                    let (lat, lon) = route.at(route_offset + travelled);
                    AvlTuple {
                        timestamp: start + Duration::seconds(t),
                        position: GeoPoint::new(round7(lat), round7(lon)).expect("route points are valid"),
                        route_name: spec.route_name.clone(),
                        trip_id: trip_id.clone(),
                        trip_date: date,
                        trip_start_time: dep,
                        trip_finish_time: Field::Value(finish),
                        vehicle_id: Field::Value(spec.vehicle_id.clone()),
                        driver_id: Field::Value(driver.clone()),
                        heading: Field::Value(((t * 7) % 360) as f64),
                        speed: Field::Value(if standing { 0.0 } else { (speed * 10.0).round() / 10.0 }),
                        odometer: Field::Value(travelled.round()),
                        door_status: Field::Value(if standing { DoorStatus::Open } else { DoorStatus::Closed }),
                        occupancy: Field::Value(rng.random_range(0..60)),
                        delay_seconds: Field::Value(delay),
                        next_stop_id: Field::Value(format!("S{}", 1 + (t / 300))),
                        schedule_adherence: Field::Value(adherence),
                    }
                })
                .collect();
            let summary = oracle_summary(&trip_id, date, dep, &tuples);
            day_trips.push(GeneratedTrip { summary, tuples });
        }
        let in_part = |lo: u32, hi: u32| -> Vec<&TripSummary> {
            day_trips
                .iter()
                .map(|t| &t.summary)
                .filter(|s| (lo..=hi).contains(&s.start_time.hour()))
                .collect()
        };
        daily.push(DailySummary {
            date,
            morning: oracle_part(&in_part(5, 12)),
            afternoon: oracle_part(&in_part(13, 18)),
            evening: oracle_part(&in_part(19, 23)),
        });
        trips.extend(day_trips);
    }

    // an edge never hears about days before the first tuple or after the last
    let first = trips.first().map(|t| t.summary.date);
    let last = trips.last().map(|t| t.summary.date);
    daily.retain(|d| first.is_some_and(|f| d.date >= f) && last.is_some_and(|l| d.date <= l));

    Fixture {
        spec: spec.clone(),
        trips,
        daily,
        schedule,
    }
}

/// What [`corrupt`] did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub rows_in: u64,
    pub rows_out: u64,
    pub duplicates: u64,
    pub dropped: u64,
    pub reordered: u64,
    pub malformed: u64,
    pub blanked: u64,
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rows {} -> {}: {} duplicated, {} dropped, {} delayed, {} malformed inserted, {} cells blanked",
            self.rows_in, self.rows_out, self.duplicates, self.dropped, self.reordered, self.malformed, self.blanked
        )
    }
}

const NON_CRITICAL: [Column; 11] = [
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

/// Injects faults into a headered AVL CSV. Rows are re-emitted in arrival
/// order: each row arrives at its own timestamp plus its delay, so a delay
/// of at most `reorder_max_s` bounds how far a row moves back in time.
pub fn corrupt(csv_text: &str, plan: &FaultPlan, seed: u64) -> (String, Manifest) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f417);
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(csv_text.as_bytes());
    let header = reader.headers().expect("header row").clone();
    let ts_col = header.iter().position(|h| h == Column::Timestamp.name());
    let non_critical: Vec<usize> = NON_CRITICAL
        .iter()
        .filter_map(|c| header.iter().position(|h| h == c.name()))
        .collect();

    let mut manifest = Manifest::default();
    // (arrival key in ms, sequence, cells)
    let mut rows: Vec<(i64, usize, Vec<String>)> = Vec::new();
    let mut seq = 0usize;
    for record in reader.records() {
        let Ok(record) = record else { continue };
        manifest.rows_in += 1;
        let base = ts_col
            .and_then(|i| record.get(i))
            .and_then(|t| DateTime::parse_from_rfc3339(t).ok())
            .map_or(seq as i64, |t| t.timestamp_millis());
        if plan.drop_rate > 0.0 && rng.random_bool(plan.drop_rate) {
            manifest.dropped += 1;
            continue;
        }
        let mut cells: Vec<String> = record.iter().map(str::to_string).collect();
        if plan.blank_rate > 0.0 && !non_critical.is_empty() && rng.random_bool(plan.blank_rate) {
            let col = non_critical[rng.random_range(0..non_critical.len())];
            cells[col].clear();
            manifest.blanked += 1;
        }
        let copies = if plan.duplicate_rate > 0.0 && rng.random_bool(plan.duplicate_rate) {
            manifest.duplicates += 1;
            2
        } else {
            1
        };
        for _ in 0..copies {
            let delay_s = if plan.reorder_max_s > 0 && plan.reorder_rate > 0.0 && rng.random_bool(plan.reorder_rate) {
                manifest.reordered += 1;
                rng.random_range(1..=plan.reorder_max_s)
            } else {
                0
            };
            rows.push((base + delay_s * 1000, seq, cells.clone()));
            seq += 1;
        }
        if plan.malformed_rate > 0.0 && rng.random_bool(plan.malformed_rate) {
            manifest.malformed += 1;
            let junk = vec!["#corrupt".to_string(), rng.random::<u32>().to_string()];
            rows.push((base, seq, junk));
            seq += 1;
        }
    }
    rows.sort_by_key(|(arrival, seq, _)| (*arrival, *seq));
    manifest.rows_out = rows.len() as u64;

    let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    writer.write_record(&header).expect("writing to memory");
    for (_, _, cells) in &rows {
        writer.write_record(cells).expect("writing to memory");
    }
    let bytes = writer.into_inner().expect("writing to memory");
    (String::from_utf8(bytes).expect("input was UTF-8"), manifest)
}

/// Removes `k` interior rows of `trip_id`, never two adjacent ones, so a
/// trip on a perfect cadence ends up with exactly `k` empty slots.
/// Returns `None` if the trip has fewer than `2k + 1` rows.
pub fn drop_trip_slots(csv_text: &str, trip_id: &str, k: usize) -> Option<String> {
    let mut lines = csv_text.lines();
    let header = lines.next()?;
    let trip_col = header.split(',').position(|h| h == Column::TripId.name())?;
    let rows: Vec<&str> = lines.collect();
    let of_trip: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split(',').nth(trip_col) == Some(trip_id))
        .map(|(i, _)| i)
        .collect();
    if of_trip.len() < 2 * k + 1 {
        return None;
    }
    let victims: std::collections::HashSet<usize> = (0..k).map(|j| of_trip[2 * j + 1]).collect();
    let mut out = String::from(header);
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        if !victims.contains(&i) {
            out.push_str(r);
            out.push('\n');
        }
    }
    Some(out)
}
