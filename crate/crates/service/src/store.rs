//! Append-only reading log with an in-memory dedup and station index.
//!
//! The log holds one JSON record per line. On open the whole file is
//! replayed to rebuild the index; a final line without its terminating
//! newline is a torn write and is cut off, anything else that fails to
//! parse is corruption.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use aquasonde_core::sample::{summarize_all, timestamp, Reading, ReadingError};
use aquasonde_core::{DedupKey, Season, StationSummary};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::broadcast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Live,
    Replay,
}

/// A reading as persisted: the reading plus server-side receipt metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRecord {
    #[serde(flatten)]
    pub reading: Reading,
    #[serde(with = "timestamp")]
    pub received_at: DateTime<Utc>,
    pub source: Source,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("LogCorrupt: line {line}: {msg}")]
    LogCorrupt { line: usize, msg: String },
}

/// Durable byte sink behind the log.
pub trait LogSink: Send {
    /// Appends `data` and makes it durable, or leaves the sink unchanged.
    fn append_durable(&mut self, data: &[u8]) -> io::Result<()>;
}

pub struct FileSink {
    file: File,
    len: u64,
}

impl LogSink for FileSink {
    fn append_durable(&mut self, data: &[u8]) -> io::Result<()> {
        let res = self
            .file
            .seek(SeekFrom::Start(self.len))
            .and_then(|_| self.file.write_all(data))
            .and_then(|_| self.file.sync_data());
        match res {
            Ok(()) => {
                self.len += data.len() as u64;
                Ok(())
            }
            Err(e) => {
                // Best effort: drop whatever part of the batch reached the file.
                let _ = self.file.set_len(self.len);
                Err(e)
            }
        }
    }
}

/// What replay found.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    pub records: usize,
    /// Bytes of a torn final line that were discarded.
    pub torn_bytes: usize,
}

#[derive(Debug, Default)]
struct Index {
    records: Vec<Arc<IngestRecord>>,
    by_key: HashMap<DedupKey, usize>,
    by_station: BTreeMap<String, Vec<usize>>,
}

impl Index {
    fn insert(&mut self, rec: IngestRecord) -> bool {
        let key = rec.reading.dedup_key();
        if self.by_key.contains_key(&key) {
            return false;
        }
        let idx = self.records.len();
        if let Some(label) = &rec.reading.station {
            self.by_station.entry(label.clone()).or_default().push(idx);
        }
        self.by_key.insert(key, idx);
        self.records.push(Arc::new(rec));
        true
    }
}

/// Outcome of one batch append.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutcome {
    pub accepted: usize,
    pub duplicates: usize,
    pub rejected: Vec<(usize, String)>,
}

/// An item of an incoming batch: either a parsed reading or why it could not be parsed.
pub type BatchItem = Result<Reading, String>;

pub const EVENT_BUFFER: usize = 256;

/// Shared store: one logical writer, concurrent readers.
pub struct Store {
    writer: Mutex<Box<dyn LogSink>>,
    index: RwLock<Index>,
    events: broadcast::Sender<Arc<Reading>>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("path", &self.path).finish_non_exhaustive()
    }
}

fn replay(bytes: &[u8]) -> Result<(Index, usize, usize), StoreError> {
    let mut index = Index::default();
    let complete = match bytes.iter().rposition(|b| *b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    for (i, line) in bytes[..complete].split(|b| *b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let rec: IngestRecord = serde_json::from_slice(line).map_err(|e| StoreError::LogCorrupt {
            line: i + 1,
            msg: e.to_string(),
        })?;
        rec.reading
            .validate(rec.received_at)
            .map_err(|e: ReadingError| StoreError::LogCorrupt {
                line: i + 1,
                msg: e.to_string(),
            })?;
        index.insert(rec);
    }
    Ok((index, complete, bytes.len() - complete))
}

impl Store {
    /// Opens or creates the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Recovery), StoreError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (index, good_len, torn) = replay(&bytes)?;
        if torn > 0 {
            log::warn!(
                "{}: discarding torn final record ({torn} bytes)",
                path.display()
            );
            file.set_len(good_len as u64)?;
            file.sync_data()?;
        }
        let recovery = Recovery {
            records: index.records.len(),
            torn_bytes: torn,
        };
        let sink = FileSink {
            file,
            len: good_len as u64,
        };
        let mut store = Self::with_sink(Box::new(sink));
        store.index = RwLock::new(index);
        store.path = Some(path.to_path_buf());
        Ok((store, recovery))
    }

    /// An empty store over an arbitrary sink.
    pub fn with_sink(sink: Box<dyn LogSink>) -> Self {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        Store {
            writer: Mutex::new(sink),
            index: RwLock::new(Index::default()),
            events,
            path: None,
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Reading>> {
        self.events.subscribe()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("index lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Validates, dedups and durably appends a batch. Nothing from the
    /// batch is indexed or announced unless the whole write succeeds.
    pub fn append_batch(
        &self,
        items: Vec<BatchItem>,
        source: Source,
        now: DateTime<Utc>,
    ) -> Result<BatchOutcome, StoreError> {
        let mut writer = self.writer.lock().expect("writer lock");
        let mut out = BatchOutcome::default();
        let mut fresh: Vec<IngestRecord> = Vec::new();
        {
            let index = self.index.read().expect("index lock");
            let mut seen = std::collections::HashSet::new();
            for (i, item) in items.into_iter().enumerate() {
                let reading = match item {
                    Ok(r) => r,
                    Err(reason) => {
                        out.rejected.push((i, reason));
                        continue;
                    }
                };
                if let Err(e) = reading.validate(now) {
                    out.rejected.push((i, e.to_string()));
                    continue;
                }
                let key = reading.dedup_key();
                if index.by_key.contains_key(&key) || !seen.insert(key) {
                    out.duplicates += 1;
                    continue;
                }
                fresh.push(IngestRecord {
                    reading,
                    received_at: now,
                    source,
                });
            }
        }
        if !fresh.is_empty() {
            let mut buf = Vec::new();
            for rec in &fresh {
                serde_json::to_writer(&mut buf, rec).expect("record serializes");
                buf.push(b'\n');
            }
            writer.append_durable(&buf)?;
            let mut index = self.index.write().expect("index lock");
            for rec in fresh {
                let reading = rec.reading.clone();
                if index.insert(rec) {
                    out.accepted += 1;
                    // No subscribers is fine.
                    let _ = self.events.send(Arc::new(reading));
                }
            }
        }
        Ok(out)
    }

    /// All readings, ordered by timestamp then dedup key.
    pub fn readings(&self) -> Vec<Reading> {
        let index = self.index.read().expect("index lock");
        let mut out: Vec<Reading> = index.records.iter().map(|r| r.reading.clone()).collect();
        sort_readings(&mut out);
        out
    }

    pub fn records(&self) -> Vec<Arc<IngestRecord>> {
        self.index.read().expect("index lock").records.clone()
    }

    pub fn has_station(&self, label: &str) -> bool {
        self.index
            .read()
            .expect("index lock")
            .by_station
            .contains_key(label)
    }

    /// Readings of one station within `[from, to]`, ascending. `None` if the label is unknown.
    pub fn station_readings(
        &self,
        label: &str,
        from: Option<DateTime<Utc>>,
        to: Option<DateTime<Utc>>,
    ) -> Option<Vec<Reading>> {
        let index = self.index.read().expect("index lock");
        let idxs = index.by_station.get(label)?;
        let mut out: Vec<Reading> = idxs
            .iter()
            .map(|i| &index.records[*i].reading)
            .filter(|r| from.is_none_or(|f| r.timestamp >= f) && to.is_none_or(|t| r.timestamp <= t))
            .cloned()
            .collect();
        sort_readings(&mut out);
        Some(out)
    }

    pub fn summaries(&self, season: Season) -> Vec<StationSummary> {
        let index = self.index.read().expect("index lock");
        summarize_all(index.records.iter().map(|r| &r.reading), season)
    }
}

pub fn sort_readings(readings: &mut [Reading]) {
    readings.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.dedup_key().cmp(&b.dedup_key()))
    });
}
