//! Hub-side reports over a date range and their CSV and SVG renderings.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime};

use crate::analytics::DayState;
use crate::hub::boxplot::{boxplot, BoxplotStats};
use crate::hub::schedule::{detect_missing_trips, ScheduleEntry};
use crate::model::{DailySummary, Daypart, DaypartSummary, TripSummary};
use crate::wire::{Payload, WireMessage};

#[derive(Debug, Clone, PartialEq)]
pub struct DailyReport {
    pub date: NaiveDate,
    pub trip_count: u64,
    pub avg_total_time: Option<f64>,
    /// Daypart averages recomputed from the stored trip summaries.
    pub dayparts: DailySummary,
    /// What the edge sent for this date, if anything.
    pub edge: Option<DailySummary>,
}

impl DailyReport {
    /// Whether the recomputed averages equal the edge's at wire precision.
    /// `None` when the edge sent no daily summary for the date.
    pub fn edge_agrees(&self) -> Option<bool> {
        self.edge.as_ref().map(|e| {
            serde_json::to_string(e).ok() == serde_json::to_string(&self.dayparts).ok()
        })
    }
}

/// Count, mean trip time and daypart averages for one date.
pub fn daily_report(date: NaiveDate, summaries: &[&TripSummary], edge: Option<&DailySummary>) -> DailyReport {
    let mut day = DayState::new(date);
    let mut total = 0u64;
    for s in summaries {
        debug_assert_eq!(s.date, date);
        let _ = day.fold_trip(s);
        total += s.total_time_length;
    }
    let n = summaries.len() as u64;
    DailyReport {
        date,
        trip_count: n,
        avg_total_time: (n > 0).then(|| total as f64 / n as f64),
        dayparts: day.finalize(),
        edge: edge.cloned(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSet {
    pub from: NaiveDate,
    pub to: NaiveDate,
    /// One per date in the range, ascending.
    pub daily: Vec<DailyReport>,
    /// Every stored trip, sorted by date, start time and id.
    pub trips: Vec<TripSummary>,
    pub missing: Vec<ScheduleEntry>,
    /// Per daypart: the daily average trip times across the range.
    pub boxplots: Vec<BoxplotStats>,
    /// Dayparts with no trips in the range.
    pub skipped_groups: Vec<String>,
}

impl ReportSet {
    pub fn build(messages: &[WireMessage], from: NaiveDate, to: NaiveDate, schedule: &[ScheduleEntry], tolerance_min: u32) -> Self {
        let mut trips = Vec::new();
        let mut edge_days: Vec<&DailySummary> = Vec::new();
        for m in messages {
            match &m.payload {
                Payload::TripSummary(s) if s.date >= from && s.date <= to => trips.push(s.clone()),
                Payload::DailySummary(s) if s.date >= from && s.date <= to => edge_days.push(s),
                _ => {}
            }
        }
        trips.sort_by(|a, b| (a.date, a.start_time, &a.trip_id).cmp(&(b.date, b.start_time, &b.trip_id)));

        let daily: Vec<DailyReport> = from
            .iter_days()
            .take_while(|d| *d <= to)
            .map(|date| {
                let of_day: Vec<&TripSummary> = trips.iter().filter(|t| t.date == date).collect();
                let edge = edge_days.iter().copied().find(|d| d.date == date);
                daily_report(date, &of_day, edge)
            })
            .collect();

        let groups: Vec<(&str, Vec<f64>)> = Daypart::ALL
            .iter()
            .map(|p| {
                let values = daily
                    .iter()
                    .filter_map(|r| r.dayparts.daypart(*p).avg_time_length)
                    .collect();
                (p.as_str(), values)
            })
            .collect();
        let (boxplots, skipped_groups) = boxplot(groups.iter().map(|(l, v)| (*l, v.as_slice())));

        let scheduled: Vec<ScheduleEntry> = schedule
            .iter()
            .filter(|e| e.date >= from && e.date <= to)
            .cloned()
            .collect();
        let missing = detect_missing_trips(&trips, &scheduled, tolerance_min);

        Self {
            from,
            to,
            daily,
            trips,
            missing,
            boxplots,
            skipped_groups,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format {other:?}, expected csv or svg")),
        }
    }
}

fn opt1(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.1}")).unwrap_or_default()
}

fn hhmm(t: NaiveTime) -> String {
    t.format("%H:%M").to_string()
}

pub fn daily_report_csv(set: &ReportSet) -> String {
    let mut out = String::from("date,trip_count,avg_total_time");
    for p in Daypart::ALL {
        for f in ["avg_time_length", "avg_moves", "avg_stops", "trip_count"] {
            let _ = write!(out, ",{p}_{f}");
        }
    }
    out.push_str(",edge_agrees\n");
    for r in &set.daily {
        let _ = write!(out, "{},{},{}", r.date, r.trip_count, opt1(r.avg_total_time));
        for p in Daypart::ALL {
            let d: &DaypartSummary = r.dayparts.daypart(p);
            let _ = write!(
                out,
                ",{},{},{},{}",
                opt1(d.avg_time_length),
                opt1(d.avg_moves),
                opt1(d.avg_stops),
                d.trip_count
            );
        }
        let agrees = match r.edge_agrees() {
            Some(true) => "yes",
            Some(false) => "no",
            None => "",
        };
        let _ = writeln!(out, ",{agrees}");
    }
    out
}

pub fn trip_times_csv(set: &ReportSet) -> String {
    let mut out = String::from("date,trip_id,start_time,daypart,total_time_length,total_move,total_stop\n");
    for t in &set.trips {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.date,
            t.trip_id,
            t.start_time.format("%H:%M:%S"),
            Daypart::of(t.start_time).map_or("none", Daypart::as_str),
            t.total_time_length,
            t.total_move,
            t.total_stop
        );
    }
    out
}

pub fn missing_trips_csv(set: &ReportSet) -> String {
    let mut out = String::from("route_name,date,departure_time\n");
    for e in &set.missing {
        let _ = writeln!(out, "{},{},{}", e.route_name, e.date, hhmm(e.departure));
    }
    out
}

pub fn boxplot_csv(set: &ReportSet) -> String {
    let mut out = String::from("group,n,min,q1,median,q3,max,outliers\n");
    for b in &set.boxplots {
        let outliers: Vec<String> = b.outliers.iter().map(|o| format!("{o:.1}")).collect();
        let _ = writeln!(
            out,
            "{},{},{:.1},{:.1},{:.1},{:.1},{:.1},{}",
            b.label,
            b.n,
            b.min,
            b.q1,
            b.median,
            b.q3,
            b.max,
            outliers.join(" ")
        );
    }
    for g in &set.skipped_groups {
        let _ = writeln!(out, "{g},0,,,,,,");
    }
    out
}

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W:.1}\" height=\"{H:.1}\" viewBox=\"0 0 {W:.1} {H:.1}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24.0\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{PAD:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD
    )
}

fn bars(title: &str, labelled: &[(String, f64)]) -> String {
    let mut svg = svg_open(title);
    let top = labelled.iter().map(|(_, v)| *v).fold(0.0, f64::max).max(1.0);
    let slot = (W - 2.0 * PAD) / labelled.len().max(1) as f64;
    for (i, (label, v)) in labelled.iter().enumerate() {
        let h = v / top * (H - 2.0 * PAD - 16.0);
        let x = PAD + i as f64 * slot + slot * 0.15;
        let y = H - PAD - h;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"steelblue\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{v:.1}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{label}</text>",
            slot * 0.7,
            x + slot * 0.35,
            y - 4.0,
            x + slot * 0.35,
            H - PAD + 14.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn daily_report_svg(set: &ReportSet) -> String {
    let data: Vec<(String, f64)> = set
        .daily
        .iter()
        .map(|r| (r.date.format("%m-%d").to_string(), r.trip_count as f64))
        .collect();
    bars("Trips per day", &data)
}

pub fn trip_times_svg(set: &ReportSet) -> String {
    let data: Vec<(String, f64)> = set
        .daily
        .iter()
        .map(|r| (r.date.format("%m-%d").to_string(), r.avg_total_time.unwrap_or(0.0)))
        .collect();
    bars("Average trip time per day (s)", &data)
}

pub fn missing_trips_svg(set: &ReportSet) -> String {
    let mut per_hour = [0u32; 24];
    for e in &set.missing {
        per_hour[chrono::Timelike::hour(&e.departure) as usize] += 1;
    }
    let data: Vec<(String, f64)> = per_hour
        .iter()
        .enumerate()
        .map(|(h, n)| (format!("{h}h"), f64::from(*n)))
        .collect();
    bars("Missing departures by hour", &data)
}

pub fn boxplot_svg(set: &ReportSet) -> String {
    let mut svg = svg_open("Daily average trip time by daypart (s)");
    let all = set
        .boxplots
        .iter()
        .flat_map(|b| b.outliers.iter().copied().chain([b.min, b.max]));
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi.max(lo + 1.0)) } else { (0.0, 1.0) };
    let y = |v: f64| H - PAD - (v - lo) / (hi - lo) * (H - 2.0 * PAD - 16.0);
    let slot = (W - 2.0 * PAD) / set.boxplots.len().max(1) as f64;
    for (i, b) in set.boxplots.iter().enumerate() {
        let cx = PAD + (i as f64 + 0.5) * slot;
        let half = slot * 0.2;
        let _ = writeln!(
            svg,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
             <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"lightsteelblue\" stroke=\"black\"/>\n\
             <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>\n\
             <text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            y(b.min),
            y(b.max),
            cx - half,
            y(b.q3),
            2.0 * half,
            y(b.q1) - y(b.q3),
            cx - half,
            y(b.median),
            cx + half,
            y(b.median),
            H - PAD + 14.0,
            b.label
        );
        for o in &b.outliers {
            let _ = writeln!(svg, "<circle cx=\"{cx:.1}\" cy=\"{:.1}\" r=\"3.0\" fill=\"none\" stroke=\"black\"/>", y(*o));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes the four report files for `format` into `out_dir`. Every file is
/// staged in a temporary file in the same directory and renamed only once
/// all of them were written.
pub fn export(set: &ReportSet, format: Format, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    type Render = fn(&ReportSet) -> String;
    let (ext, renders): (&str, [(&str, Render); 4]) = match format {
        Format::Csv => (
            "csv",
            [
                ("daily_report", daily_report_csv),
                ("trip_times", trip_times_csv),
                ("missing_trips", missing_trips_csv),
                ("boxplot", boxplot_csv),
            ],
        ),
        Format::Svg => (
            "svg",
            [
                ("daily_report", daily_report_svg),
                ("trip_times", trip_times_svg),
                ("missing_trips", missing_trips_svg),
                ("boxplot", boxplot_svg),
            ],
        ),
    };
    let mut staged = Vec::new();
    for (name, render) in renders {
        let mut tmp = tempfile::NamedTempFile::new_in(out_dir)?;
        tmp.write_all(render(set).as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, out_dir.join(format!("{name}.{ext}"))));
    }
    let mut written = Vec::new();
    for (tmp, path) in staged {
        tmp.persist(&path).map_err(|e| e.error)?;
        written.push(path);
    }
    Ok(written)
}
