//! Store-and-forward delivery of summaries to the hub.
//!
//! Messages queue in a bounded FIFO owned by one worker thread. The worker
//! sends the head of the queue, waits for its acknowledgment and only then
//! removes it, so every message is delivered at least once. Connection
//! failures back off exponentially. When the queue is full the oldest
//! message is evicted.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use crate::wire::{Reply, WireMessage};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const REPLY_TIMEOUT: Duration = Duration::from_secs(10);

/// Doubling delay between `base` and `cap`.
#[derive(Debug, Clone)]
pub struct Backoff {
    base: Duration,
    cap: Duration,
    next: Duration,
}

impl Backoff {
    pub fn new(base: Duration, cap: Duration) -> Self {
        Self { base, cap, next: base }
    }

    pub fn next_delay(&mut self) -> Duration {
        let delay = self.next;
        self.next = (self.next * 2).min(self.cap);
        delay
    }

    pub fn reset(&mut self) {
        self.next = self.base;
    }
}

/// FIFO that keeps at most `capacity` messages, evicting the oldest.
#[derive(Debug)]
pub struct OutboundBuffer {
    queue: VecDeque<WireMessage>,
    capacity: usize,
    evicted: u64,
}

impl OutboundBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            queue: VecDeque::new(),
            capacity,
            evicted: 0,
        }
    }

    /// Appends `msg`, returning the message evicted to make room, if any.
    pub fn push(&mut self, msg: WireMessage) -> Option<WireMessage> {
        let evicted = if self.queue.len() == self.capacity {
            self.evicted += 1;
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(msg);
        evicted
    }

    pub fn front(&self) -> Option<&WireMessage> {
        self.queue.front()
    }

    /// Removes the head only if it is still the message with `id`; it may
    /// have been evicted while in flight.
    pub fn pop_front_if(&mut self, id: &str) -> bool {
        if self.queue.front().is_some_and(|m| m.message_id == id) {
            self.queue.pop_front();
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UplinkStats {
    /// Messages acknowledged by the hub.
    pub sent: u64,
    /// Messages the hub answered with an error; these are not retried.
    pub rejected: u64,
    /// Sends of a message that had already been sent once without an ack.
    pub retransmissions: u64,
    pub connect_failures: u64,
    pub evicted: u64,
    /// Still queued.
    pub pending: u64,
}

struct State {
    buffer: OutboundBuffer,
    closing: Option<Instant>,
    stats: UplinkStats,
    last_attempt: Option<String>,
}

struct Shared {
    state: Mutex<State>,
    changed: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct Uplink {
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl Uplink {
    pub fn start(endpoint: impl Into<String>, capacity: usize, base: Duration, cap: Duration) -> Self {
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                buffer: OutboundBuffer::new(capacity),
                closing: None,
                stats: UplinkStats::default(),
                last_attempt: None,
            }),
            changed: Condvar::new(),
        });
        let endpoint = endpoint.into();
        let worker = {
            let shared = shared.clone();
            thread::Builder::new()
                .name("uplink".into())
                .spawn(move || Worker::new(endpoint, shared, Backoff::new(base, cap)).run())
                .expect("spawn uplink thread")
        };
        Self {
            shared,
            worker: Some(worker),
        }
    }

    pub fn send(&self, msg: WireMessage) {
        let mut state = self.shared.lock();
        if let Some(old) = state.buffer.push(msg) {
            warn!("uplink buffer full, evicted {} {}", old.kind(), old.message_id);
        }
        drop(state);
        self.shared.changed.notify_all();
    }

    pub fn stats(&self) -> UplinkStats {
        let state = self.shared.lock();
        snapshot(&state)
    }

    /// Blocks until the queue is empty or `timeout` passes. Returns whether it emptied.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let state = self.shared.lock();
        let (state, _) = self
            .shared
            .changed
            .wait_timeout_while(state, timeout, |s| !s.buffer.is_empty())
            .unwrap_or_else(|e| e.into_inner());
        state.buffer.is_empty()
    }

    /// Keeps delivering for at most `drain_timeout`, then stops the worker.
    pub fn shutdown(mut self, drain_timeout: Duration) -> UplinkStats {
        self.stop(drain_timeout);
        self.stats()
    }

    fn stop(&mut self, drain_timeout: Duration) {
        {
            let mut state = self.shared.lock();
            state.closing.get_or_insert(Instant::now() + drain_timeout);
        }
        self.shared.changed.notify_all();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for Uplink {
    fn drop(&mut self) {
        self.stop(Duration::ZERO);
    }
}

fn snapshot(state: &State) -> UplinkStats {
    UplinkStats {
        evicted: state.buffer.evicted(),
        pending: state.buffer.len() as u64,
        ..state.stats
    }
}

struct Connection {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

enum Outcome {
    Acked,
    Rejected,
    Failed,
}

struct Worker {
    endpoint: String,
    shared: Arc<Shared>,
    backoff: Backoff,
    conn: Option<Connection>,
}

impl Worker {
    fn new(endpoint: String, shared: Arc<Shared>, backoff: Backoff) -> Self {
        Self {
            endpoint,
            shared,
            backoff,
            conn: None,
        }
    }

    fn run(mut self) {
        while let Some(msg) = self.next_message() {
            if self.conn.is_none() {
                match self.connect() {
                    Ok(conn) => {
                        info!("uplink connected to {}", self.endpoint);
                        self.conn = Some(conn);
                    }
                    Err(e) => {
                        debug!("uplink connect to {} failed: {e}", self.endpoint);
                        self.shared.lock().stats.connect_failures += 1;
                        self.pause();
                        continue;
                    }
                }
            }
            let outcome = self.deliver(&msg);
            let mut state = self.shared.lock();
            match outcome {
                Outcome::Acked => {
                    state.buffer.pop_front_if(&msg.message_id);
                    state.stats.sent += 1;
                    self.backoff.reset();
                }
                Outcome::Rejected => {
                    warn!("hub rejected {} {}", msg.kind(), msg.message_id);
                    state.buffer.pop_front_if(&msg.message_id);
                    state.stats.rejected += 1;
                }
                Outcome::Failed => {
                    drop(state);
                    self.conn = None;
                    self.pause();
                    continue;
                }
            }
            drop(state);
            self.shared.changed.notify_all();
        }
    }

    /// Head of the queue, or `None` once closing and drained or past the deadline.
    fn next_message(&self) -> Option<WireMessage> {
        let mut state = self.shared.lock();
        loop {
            if let Some(deadline) = state.closing {
                if state.buffer.is_empty() || Instant::now() >= deadline {
                    return None;
                }
            }
            if let Some(front) = state.buffer.front().cloned() {
                if state.last_attempt.as_deref() == Some(front.message_id.as_str()) {
                    state.stats.retransmissions += 1;
                }
                state.last_attempt = Some(front.message_id.clone());
                return Some(front);
            }
            state = self.shared.changed.wait(state).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Sleeps for the next backoff delay, waking early only for the shutdown deadline.
    fn pause(&mut self) {
        let until = Instant::now() + self.backoff.next_delay();
        let mut state = self.shared.lock();
        loop {
            let now = Instant::now();
            let wake = state.closing.map_or(until, |d| d.min(until));
            if now >= wake {
                return;
            }
            state = self
                .shared
                .changed
                .wait_timeout(state, wake - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    fn connect(&self) -> std::io::Result<Connection> {
        let mut last_err = None;
        for addr in self.endpoint.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
                Ok(stream) => {
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(REPLY_TIMEOUT))?;
                    let reader = BufReader::new(stream.try_clone()?);
                    return Ok(Connection { writer: stream, reader });
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.unwrap_or_else(|| std::io::Error::other("endpoint resolved to no address")))
    }

    fn deliver(&mut self, msg: &WireMessage) -> Outcome {
        let Some(conn) = self.conn.as_mut() else {
            return Outcome::Failed;
        };
        let mut line = msg.to_line();
        line.push('\n');
        if let Err(e) = conn.writer.write_all(line.as_bytes()) {
            debug!("uplink write failed: {e}");
            return Outcome::Failed;
        }
        let mut reply = String::new();
        match conn.reader.read_line(&mut reply) {
            Ok(0) => {
                debug!("hub closed the connection");
                Outcome::Failed
            }
            Ok(_) => match Reply::parse(&reply) {
                Some(Reply::Ack(id)) if id == msg.message_id => Outcome::Acked,
                Some(Reply::Err(id)) if id == msg.message_id => Outcome::Rejected,
                other => {
                    debug!("unexpected reply {other:?} for {}", msg.message_id);
                    Outcome::Failed
                }
            },
            Err(e) => {
                debug!("uplink read failed: {e}");
                Outcome::Failed
            }
        }
    }
}
