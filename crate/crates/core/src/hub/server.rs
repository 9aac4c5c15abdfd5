//! TCP front end of the hub. Any number of edge connections; every append
//! goes through one writer thread that owns the log.

use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, error, info, warn};

use crate::hub::store::{Appended, MessageLog};
use crate::wire::{Reply, WireMessage};

const POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Default)]
struct Counters {
    stored: AtomicU64,
    duplicates: AtomicU64,
    malformed: AtomicU64,
    rejected: AtomicU64,
    connections: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HubStats {
    pub stored: u64,
    /// Messages acknowledged without being appended again.
    pub duplicates: u64,
    /// Lines that were not a message at all; skipped without a reply.
    pub malformed: u64,
    /// Messages answered with an error reply.
    pub rejected: u64,
    pub connections: u64,
}

type AppendRequest = (WireMessage, Sender<io::Result<Appended>>);

pub struct HubServer {
    local_addr: SocketAddr,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    writer: Option<JoinHandle<()>>,
}

impl HubServer {
    pub fn start(listen: impl ToSocketAddrs, data_dir: &Path) -> io::Result<Self> {
        let log = MessageLog::open(data_dir)?;
        let listener = TcpListener::bind(listen)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        info!("hub listening on {local_addr}, data in {}", data_dir.display());

        let counters: Arc<Counters> = Arc::default();
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel::<AppendRequest>();
        let writer = thread::Builder::new()
            .name("hub-writer".into())
            .spawn(move || write_loop(log, rx))?;
        let acceptor = {
            let counters = counters.clone();
            let stop = stop.clone();
            thread::Builder::new()
                .name("hub-accept".into())
                .spawn(move || accept_loop(listener, tx, counters, stop))?
        };
        Ok(Self {
            local_addr,
            counters,
            stop,
            acceptor: Some(acceptor),
            writer: Some(writer),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> HubStats {
        let c = &self.counters;
        HubStats {
            stored: c.stored.load(Ordering::Relaxed),
            duplicates: c.duplicates.load(Ordering::Relaxed),
            malformed: c.malformed.load(Ordering::Relaxed),
            rejected: c.rejected.load(Ordering::Relaxed),
            connections: c.connections.load(Ordering::Relaxed),
        }
    }

    /// Stops accepting, lets open connections notice within one poll
    /// interval, and waits for the writer to flush.
    pub fn shutdown(mut self) -> HubStats {
        self.stop_threads();
        self.stats()
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        if let Some(w) = self.writer.take() {
            let _ = w.join();
        }
    }
}

impl Drop for HubServer {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn write_loop(mut log: MessageLog, rx: Receiver<AppendRequest>) {
    for (msg, reply) in rx {
        let result = log.append(&msg);
        if let Err(e) = &result {
            error!("append of {} failed: {e}", msg.message_id);
        }
        let _ = reply.send(result);
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<AppendRequest>, counters: Arc<Counters>, stop: Arc<AtomicBool>) {
    let mut peers = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                debug!("edge {peer} connected");
                counters.connections.fetch_add(1, Ordering::Relaxed);
                let tx = tx.clone();
                let counters = counters.clone();
                let stop = stop.clone();
                peers.push(thread::spawn(move || {
                    if let Err(e) = serve(stream, tx, &counters, &stop) {
                        debug!("edge {peer}: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
        peers.retain(|p: &JoinHandle<()>| !p.is_finished());
    }
    for p in peers {
        let _ = p.join();
    }
}

fn serve(stream: TcpStream, tx: Sender<AppendRequest>, counters: &Counters, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => return Ok(()),
            Ok(_) if line.ends_with(b"\n") => {}
            Ok(_) => continue,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                if stop.load(Ordering::Relaxed) {
                    return Ok(());
                }
                continue;
            }
            Err(e) => return Err(e),
        }
        let text = String::from_utf8_lossy(&line).into_owned();
        line.clear();
        if text.trim().is_empty() {
            continue;
        }
        let reply = match WireMessage::parse(&text) {
            Ok(msg) => {
                let id = msg.message_id.clone();
                let (done_tx, done_rx) = mpsc::channel();
                if tx.send((msg, done_tx)).is_err() {
                    return Ok(());
                }
                match done_rx.recv() {
                    Ok(Ok(Appended::Stored)) => {
                        counters.stored.fetch_add(1, Ordering::Relaxed);
                        Reply::Ack(id)
                    }
                    Ok(Ok(Appended::Duplicate)) => {
                        counters.duplicates.fetch_add(1, Ordering::Relaxed);
                        Reply::Ack(id)
                    }
                    // not persisted: stay silent so the edge retries
                    _ => return Ok(()),
                }
            }
            Err(e) => match e.message_id() {
                Some(id) => {
                    warn!("rejecting {id}: {e}");
                    counters.rejected.fetch_add(1, Ordering::Relaxed);
                    Reply::Err(id.to_string())
                }
                None => {
                    warn!("skipping line: {e}");
                    counters.malformed.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
            },
        };
        writer.write_all(format!("{}\n", reply.to_line()).as_bytes())?;
    }
}
