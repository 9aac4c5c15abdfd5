//! The AVL CSV row format used by file replay, socket ingest and fixtures.
//!
//! Files carry a header naming each column. Socket lines carry no header and
//! must list the 18 canonical columns in schema order. An empty cell means the
//! field is absent.

use std::io::{Read, Write};

use crate::model::{AvlTuple, Column, Field, NOT_AVAILABLE};

/// A record as it arrived: arbitrary column names, raw text values.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawRecord {
    fields: Vec<(String, String)>,
}

impl RawRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.fields.push((name.into(), value.into()));
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.push(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// Drops the first field called `name`; returns whether one existed.
    pub fn remove(&mut self, name: &str) -> bool {
        match self.fields.iter().position(|(n, _)| n == name) {
            Some(i) => {
                self.fields.remove(i);
                true
            }
            None => false,
        }
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        match self.fields.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => *v = value.into(),
            None => self.push(name, value),
        }
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &str)> {
        self.fields.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn from_tuple(tuple: &AvlTuple) -> Self {
        let row = tuple_to_row(tuple);
        let mut record = RawRecord::new();
        for (col, value) in Column::ALL.iter().zip(row) {
            record.push(col.name(), value);
        }
        record
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed row at line {line}: {reason}")]
pub struct MalformedRow {
    pub line: u64,
    pub reason: String,
}

pub fn header() -> String {
    Column::ALL
        .iter()
        .map(|c| c.name())
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical text for every column, `N/A` for unavailable fields.
pub fn tuple_to_row(t: &AvlTuple) -> [String; Column::COUNT] {
    [
        t.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        t.position.latitude().to_string(),
        t.position.longitude().to_string(),
        t.route_name.clone(),
        t.trip_id.clone(),
        t.trip_date.format("%Y-%m-%d").to_string(),
        t.trip_start_time.format("%H:%M:%S").to_string(),
        match &t.trip_finish_time {
            Field::Value(v) => v.format("%H:%M:%S").to_string(),
            Field::NotAvailable => NOT_AVAILABLE.to_string(),
        },
        field_text(&t.vehicle_id),
        field_text(&t.driver_id),
        field_text(&t.heading),
        field_text(&t.speed),
        field_text(&t.odometer),
        field_text(&t.door_status),
        field_text(&t.occupancy),
        field_text(&t.delay_seconds),
        field_text(&t.next_stop_id),
        field_text(&t.schedule_adherence),
    ]
}

fn field_text<T: std::fmt::Display>(f: &Field<T>) -> String {
    f.to_string()
}

/// Writes a header and one row per tuple.
pub fn write_tuples<'a, W: Write>(
    out: W,
    tuples: impl IntoIterator<Item = &'a AvlTuple>,
) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(Column::ALL.iter().map(|c| c.name()))?;
    for t in tuples {
        writer.write_record(tuple_to_row(t))?;
    }
    writer.flush()?;
    Ok(())
}

/// Streams records out of a headered AVL CSV. Rows whose cell count differs
/// from the header are reported as [`MalformedRow`] and do not end the stream.
pub struct AvlCsvReader<R: Read> {
    inner: csv::Reader<R>,
    header: Vec<String>,
    record: csv::StringRecord,
}

impl<R: Read> AvlCsvReader<R> {
    pub fn new(input: R) -> csv::Result<Self> {
        let mut inner = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(input);
        let header = inner.headers()?.iter().map(|h| h.trim().to_string()).collect();
        Ok(Self {
            inner,
            header,
            record: csv::StringRecord::new(),
        })
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }
}

impl<R: Read> Iterator for AvlCsvReader<R> {
    type Item = Result<RawRecord, MalformedRow>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.inner.read_record(&mut self.record) {
            Ok(false) => None,
            Ok(true) => {
                let line = self.record.position().map_or(0, |p| p.line());
                if self.record.len() != self.header.len() {
                    return Some(Err(MalformedRow {
                        line,
                        reason: format!(
                            "expected {} cells, found {}",
                            self.header.len(),
                            self.record.len()
                        ),
                    }));
                }
                let mut raw = RawRecord::new();
                for (name, value) in self.header.iter().zip(self.record.iter()) {
                    raw.push(name.clone(), value);
                }
                Some(Ok(raw))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                // invalid UTF-8 and similar; the reader resynchronises on the next line
                Some(Err(MalformedRow {
                    line,
                    reason: e.to_string(),
                }))
            }
        }
    }
}

/// Parses one header-less socket line in canonical column order.
pub fn parse_line(line: &str) -> Result<RawRecord, MalformedRow> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    let mut record = csv::StringRecord::new();
    let malformed = |reason: String| MalformedRow { line: 1, reason };
    match reader.read_record(&mut record) {
        Ok(true) => {}
        Ok(false) => return Err(malformed("empty line".into())),
        Err(e) => return Err(malformed(e.to_string())),
    }
    if record.len() != Column::COUNT {
        return Err(malformed(format!(
            "expected {} cells, found {}",
            Column::COUNT,
            record.len()
        )));
    }
    let mut raw = RawRecord::new();
    for (col, value) in Column::ALL.iter().zip(record.iter()) {
        raw.push(col.name(), value);
    }
    Ok(raw)
}
