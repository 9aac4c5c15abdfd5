//! Record sources: paced file replay and a line-oriented TCP listener.

use std::fs::File;
use std::io::{BufRead, BufReader, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::DateTime;
use log::{debug, warn};
use thiserror::Error;

use crate::avl_csv::{parse_line, AvlCsvReader, RawRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot read header of {path}: {source}")]
    Header { path: String, source: csv::Error },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("replay speed must be finite and not negative, got {0}")]
    Speed(f64),
}

/// Counters shared between a source and whoever is watching it.
#[derive(Debug, Default)]
pub struct IngestStats {
    pub records: AtomicU64,
    pub malformed: AtomicU64,
    pub partial_lines: AtomicU64,
    pub connections: AtomicU64,
}

impl IngestStats {
    pub fn records(&self) -> u64 {
        self.records.load(Ordering::Relaxed)
    }

    pub fn malformed(&self) -> u64 {
        self.malformed.load(Ordering::Relaxed)
    }

    pub fn partial_lines(&self) -> u64 {
        self.partial_lines.load(Ordering::Relaxed)
    }
}

/// Replays an AVL CSV file, sleeping between rows for the recorded gap
/// divided by `speed`. A speed of 0 replays as fast as possible.
pub struct ReplaySource {
    rows: AvlCsvReader<BufReader<File>>,
    speed: f64,
    started: Option<(Instant, i64)>,
    stats: Arc<IngestStats>,
}

impl ReplaySource {
    pub fn open(path: &Path, speed: f64) -> Result<Self, IngestError> {
        if !speed.is_finite() || speed < 0.0 {
            return Err(IngestError::Speed(speed));
        }
        let file = File::open(path).map_err(|source| IngestError::Open {
            path: path.display().to_string(),
            source,
        })?;
        let rows = AvlCsvReader::new(BufReader::new(file)).map_err(|source| IngestError::Header {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self {
            rows,
            speed,
            started: None,
            stats: Arc::default(),
        })
    }

    pub fn stats(&self) -> Arc<IngestStats> {
        self.stats.clone()
    }

    fn pace(&mut self, record: &RawRecord) {
        if self.speed == 0.0 {
            return;
        }
        let Some(ts) = record
            .get("timestamp")
            .and_then(|t| DateTime::parse_from_rfc3339(t.trim()).ok())
            .map(|t| t.timestamp_millis())
        else {
            return;
        };
        let (start, first_ts) = *self.started.get_or_insert((Instant::now(), ts));
        let offset_ms = (ts - first_ts).max(0) as f64 / self.speed;
        let due = start + Duration::from_secs_f64(offset_ms / 1000.0);
        let now = Instant::now();
        if due > now {
            thread::sleep(due - now);
        }
    }
}

impl Iterator for ReplaySource {
    type Item = RawRecord;

    fn next(&mut self) -> Option<RawRecord> {
        loop {
            match self.rows.next()? {
                Ok(record) => {
                    self.pace(&record);
                    self.stats.records.fetch_add(1, Ordering::Relaxed);
                    return Some(record);
                }
                Err(bad) => {
                    debug!("skipping {bad}");
                    self.stats.malformed.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
}

/// Accepts any number of TCP peers, each sending header-less CSV lines.
/// Records from all peers are merged into one stream; order within a peer is kept.
pub struct SocketIngest {
    local_addr: SocketAddr,
    records: Receiver<RawRecord>,
    stats: Arc<IngestStats>,
    stop: Arc<AtomicBool>,
}

const POLL: Duration = Duration::from_millis(100);

impl SocketIngest {
    pub fn bind(addr: impl ToSocketAddrs + std::fmt::Display) -> Result<Self, IngestError> {
        let listener = TcpListener::bind(&addr).map_err(|source| IngestError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let local_addr = listener.local_addr().map_err(|source| IngestError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        listener.set_nonblocking(true).map_err(|source| IngestError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let (tx, records) = mpsc::sync_channel(4096);
        let stats: Arc<IngestStats> = Arc::default();
        let stop = Arc::new(AtomicBool::new(false));
        {
            let stats = stats.clone();
            let stop = stop.clone();
            thread::Builder::new()
                .name("ingest-accept".into())
                .spawn(move || accept_loop(listener, tx, stats, stop))
                .expect("spawn accept thread");
        }
        Ok(Self {
            local_addr,
            records,
            stats,
            stop,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> Arc<IngestStats> {
        self.stats.clone()
    }

    /// Handle that ends the stream once every open connection has closed.
    pub fn stopper(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }
}

impl Iterator for SocketIngest {
    type Item = RawRecord;

    fn next(&mut self) -> Option<RawRecord> {
        self.records.recv().ok()
    }
}

fn accept_loop(listener: TcpListener, tx: SyncSender<RawRecord>, stats: Arc<IngestStats>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                stats.connections.fetch_add(1, Ordering::Relaxed);
                debug!("ingest peer {peer} connected");
                let tx = tx.clone();
                let stats = stats.clone();
                let stop = stop.clone();
                thread::spawn(move || read_peer(stream, tx, stats, stop));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn read_peer(stream: TcpStream, tx: SyncSender<RawRecord>, stats: Arc<IngestStats>, stop: Arc<AtomicBool>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_read_timeout(Some(POLL));
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => {
                if !line.is_empty() {
                    stats.partial_lines.fetch_add(1, Ordering::Relaxed);
                }
                return;
            }
            Ok(_) if line.ends_with(b"\n") => {
                let text = String::from_utf8_lossy(&line);
                let text = text.trim_end_matches(['\n', '\r']);
                if !text.trim().is_empty() {
                    match parse_line(text) {
                        Ok(record) => {
                            stats.records.fetch_add(1, Ordering::Relaxed);
                            if tx.send(record).is_err() {
                                return;
                            }
                        }
                        Err(_) => {
                            stats.malformed.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
                line.clear();
            }
            // bytes without a newline and then EOF on the next call
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if stop.load(Ordering::Relaxed) {
                    return;
                }
            }
            Err(_) => {
                if !line.is_empty() {
                    stats.partial_lines.fetch_add(1, Ordering::Relaxed);
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HEADER: &str = "timestamp,latitude,longitude,route_name,trip_id,trip_date,trip_start_time,trip_finish_time,vehicle_id,driver_id,heading,speed,odometer,door_status,occupancy,delay_seconds,next_stop_id,schedule_adherence";

    fn row(sec: u32) -> String {
        format!("2017-02-14T13:00:{sec:02}Z,46.0878,-64.7782,51,T1,2017-02-14,08:00:00,,V7,D9,90,8.5,1200,closed,12,-30,S4,on_time")
    }

    fn write_file(rows: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "{HEADER}").unwrap();
        for r in rows {
            writeln!(f, "{r}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn replay_fast_keeps_order() {
        let f = write_file(&[row(0), row(5), row(10)]);
        let recs: Vec<_> = ReplaySource::open(f.path(), 0.0).unwrap().collect();
        let ts: Vec<_> = recs.iter().map(|r| r.get("timestamp").unwrap().to_string()).collect();
        assert_eq!(ts, ["2017-02-14T13:00:00Z", "2017-02-14T13:00:05Z", "2017-02-14T13:00:10Z"]);
    }

    #[test]
    fn replay_paces_by_speed() {
        let f = write_file(&[row(0), row(5), row(10)]);
        let started = Instant::now();
        let n = ReplaySource::open(f.path(), 100.0).unwrap().count();
        let elapsed = started.elapsed();
        assert_eq!(n, 3);
        // 10 s of feed at 100x is 100 ms
        assert!(elapsed >= Duration::from_millis(95), "{elapsed:?}");
        assert!(elapsed < Duration::from_millis(1000), "{elapsed:?}");
    }

    #[test]
    fn replay_skips_malformed_rows() {
        let mut rows: Vec<String> = (0..10).map(|i| row(i * 5)).collect();
        rows[4] = "garbage,row".into();
        let f = write_file(&rows);
        let source = ReplaySource::open(f.path(), 0.0).unwrap();
        let stats = source.stats();
        assert_eq!(source.count(), 9);
        assert_eq!(stats.malformed(), 1);
    }

    #[test]
    fn replay_missing_file_is_startup_error() {
        assert!(matches!(
            ReplaySource::open(Path::new("/nonexistent/avl.csv"), 0.0),
            Err(IngestError::Open { .. })
        ));
        let f = write_file(&[]);
        assert!(matches!(ReplaySource::open(f.path(), -1.0), Err(IngestError::Speed(_))));
    }

    fn collect(ingest: &mut SocketIngest, n: usize) -> Vec<RawRecord> {
        (0..n).map(|_| ingest.records.recv_timeout(Duration::from_secs(5)).unwrap()).collect()
    }

    #[test]
    fn socket_single_peer() {
        let mut ingest = SocketIngest::bind("127.0.0.1:0").unwrap();
        let mut peer = TcpStream::connect(ingest.local_addr()).unwrap();
        for i in 0..5 {
            writeln!(peer, "{}", row(i * 5)).unwrap();
        }
        assert_eq!(collect(&mut ingest, 5).len(), 5);
        ingest.stopper().store(true, Ordering::Relaxed);
    }

    #[test]
    fn socket_two_peers_keep_per_peer_order() {
        let mut ingest = SocketIngest::bind("127.0.0.1:0").unwrap();
        let mut a = TcpStream::connect(ingest.local_addr()).unwrap();
        let mut b = TcpStream::connect(ingest.local_addr()).unwrap();
        for i in 0..10 {
            writeln!(a, "{}", row(i)).unwrap();
            writeln!(b, "{}", row(i).replace(",T1,", ",T2,")).unwrap();
        }
        let recs = collect(&mut ingest, 20);
        for trip in ["T1", "T2"] {
            let ts: Vec<_> = recs
                .iter()
                .filter(|r| r.get("trip_id") == Some(trip))
                .map(|r| r.get("timestamp").unwrap().to_string())
                .collect();
            assert_eq!(ts.len(), 10);
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
        }
        ingest.stopper().store(true, Ordering::Relaxed);
    }

    #[test]
    fn socket_partial_line_is_discarded() {
        let mut ingest = SocketIngest::bind("127.0.0.1:0").unwrap();
        let stats = ingest.stats();
        {
            let mut peer = TcpStream::connect(ingest.local_addr()).unwrap();
            writeln!(peer, "{}", row(0)).unwrap();
            writeln!(peer, "not,a,record").unwrap();
            write!(peer, "{}", &row(5)[..40]).unwrap();
        }
        assert_eq!(collect(&mut ingest, 1).len(), 1);
        let deadline = Instant::now() + Duration::from_secs(5);
        while stats.partial_lines() == 0 && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(10));
        }
        assert_eq!(stats.partial_lines(), 1);
        assert_eq!(stats.malformed(), 1);
        // a new peer is still served
        let mut peer = TcpStream::connect(ingest.local_addr()).unwrap();
        writeln!(peer, "{}", row(10)).unwrap();
        assert_eq!(collect(&mut ingest, 1)[0].get("timestamp"), Some("2017-02-14T13:00:10Z"));
        ingest.stopper().store(true, Ordering::Relaxed);
    }
}
