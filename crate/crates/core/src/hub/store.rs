//! Append-only message log: one NDJSON file per payload date plus an
//! in-memory index of the message ids already stored.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};

use crate::wire::WireMessage;

const PREFIX: &str = "messages-";
const SUFFIX: &str = ".ndjson";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Appended {
    Stored,
    Duplicate,
}

pub fn log_file_name(date: NaiveDate) -> String {
    format!("{PREFIX}{}{SUFFIX}", date.format("%Y-%m-%d"))
}

fn date_of_file(path: &Path) -> Option<NaiveDate> {
    let name = path.file_name()?.to_str()?;
    let date = name.strip_prefix(PREFIX)?.strip_suffix(SUFFIX)?;
    NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()
}

fn log_files(dir: &Path) -> io::Result<Vec<(NaiveDate, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if let Some(date) = date_of_file(&path) {
            files.push((date, path));
        }
    }
    files.sort();
    Ok(files)
}

pub struct MessageLog {
    dir: PathBuf,
    index: HashSet<String>,
    files: HashMap<NaiveDate, File>,
}

impl MessageLog {
    /// Opens or creates the log under `dir`, rebuilding the id index by
    /// scanning every file. A torn final line left by a crash is cut off.
    pub fn open(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut index = HashSet::new();
        for (_, path) in log_files(dir)? {
            let mut bytes = Vec::new();
            File::open(&path)?.read_to_end(&mut bytes)?;
            let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            if complete < bytes.len() {
                warn!("{}: truncating {} bytes of torn record", path.display(), bytes.len() - complete);
                OpenOptions::new().write(true).open(&path)?.set_len(complete as u64)?;
            }
            for line in bytes[..complete].split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
                match std::str::from_utf8(line).ok().map(WireMessage::parse) {
                    Some(Ok(msg)) => {
                        index.insert(msg.message_id);
                    }
                    _ => warn!("{}: unreadable record skipped", path.display()),
                }
            }
        }
        info!("message log {} holds {} messages", dir.display(), index.len());
        Ok(Self {
            dir: dir.to_path_buf(),
            index,
            files: HashMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, message_id: &str) -> bool {
        self.index.contains(message_id)
    }

    pub fn append(&mut self, msg: &WireMessage) -> io::Result<Appended> {
        if self.index.contains(&msg.message_id) {
            return Ok(Appended::Duplicate);
        }
        let date = msg.payload.date();
        let file = match self.files.entry(date) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(self.dir.join(log_file_name(date)))?,
            ),
        };
        let mut line = msg.to_line();
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.flush()?;
        self.index.insert(msg.message_id.clone());
        Ok(Appended::Stored)
    }
}

/// Messages whose payload date lies in `from..=to`, in file order. Each file
/// is read only up to its length at the time it is opened, and only whole lines.
pub fn read_messages(dir: &Path, from: NaiveDate, to: NaiveDate) -> io::Result<Vec<WireMessage>> {
    let mut out = Vec::new();
    for (date, path) in log_files(dir)? {
        if date < from || date > to {
            continue;
        }
        let mut file = File::open(&path)?;
        let len = file.seek(SeekFrom::End(0))?;
        file.seek(SeekFrom::Start(0))?;
        let mut reader = BufReader::new(file.take(len));
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 || !line.ends_with('\n') {
                break;
            }
            match WireMessage::parse(&line) {
                Ok(msg) => out.push(msg),
                Err(e) => warn!("{}: {e}", path.display()),
            }
        }
    }
    Ok(out)
}
