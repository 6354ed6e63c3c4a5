//! Append-only local time-series store.
//!
//! Records are kept in memory, indexed per greenhouse by timestamp, and
//! optionally mirrored to a JSON-lines file on the edge node's disk.
//! Reopening the file replays it. Writes are buffered and flushed every
//! `flush_every` records and on [`TimeSeriesStore::flush`].

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::ops::Bound;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::ControlMode;
use crate::domain::{GreenhouseId, MoistureBand, MoistureSample, SimTime, ValveCommand};

pub const DEFAULT_FLUSH_EVERY: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum StoredRecord {
    Sample(MoistureSample),
    Command {
        greenhouse: GreenhouseId,
        command: ValveCommand,
    },
    BandChange {
        greenhouse: GreenhouseId,
        at: SimTime,
        band: MoistureBand,
        operator: String,
    },
    ModeChange {
        greenhouse: GreenhouseId,
        at: SimTime,
        mode: ControlMode,
        operator: String,
    },
    /// Sample from a mote the scenario does not know.
    Quarantined(MoistureSample),
}

impl StoredRecord {
    pub fn timestamp(&self) -> SimTime {
        match self {
            StoredRecord::Sample(s) | StoredRecord::Quarantined(s) => s.sampled_at,
            StoredRecord::Command { command, .. } => command.issued_at,
            StoredRecord::BandChange { at, .. } | StoredRecord::ModeChange { at, .. } => *at,
        }
    }

    /// Owning greenhouse; `None` for quarantined samples.
    pub fn greenhouse(&self) -> Option<GreenhouseId> {
        match self {
            StoredRecord::Sample(s) => Some(s.greenhouse),
            StoredRecord::Command { greenhouse, .. }
            | StoredRecord::BandChange { greenhouse, .. }
            | StoredRecord::ModeChange { greenhouse, .. } => Some(*greenhouse),
            StoredRecord::Quarantined(_) => None,
        }
    }
}

type SeriesKey = (SimTime, u64);

pub struct TimeSeriesStore {
    series: BTreeMap<GreenhouseId, BTreeMap<SeriesKey, StoredRecord>>,
    quarantine: Vec<MoistureSample>,
    seq: u64,
    file: Option<(PathBuf, BufWriter<File>)>,
    unflushed: usize,
    flush_every: usize,
}

impl std::fmt::Debug for TimeSeriesStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeSeriesStore")
            .field("records", &self.seq)
            .field("path", &self.path())
            .finish()
    }
}

impl Default for TimeSeriesStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TimeSeriesStore {
    pub fn in_memory() -> Self {
        TimeSeriesStore {
            series: BTreeMap::new(),
            quarantine: Vec::new(),
            seq: 0,
            file: None,
            unflushed: 0,
            flush_every: DEFAULT_FLUSH_EVERY,
        }
    }

    /// Opens (creating if needed) a store file and replays its records.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut store = Self::in_memory();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: StoredRecord = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1))
                })?;
                store.index(rec);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        store.file = Some((path, BufWriter::new(file)));
        Ok(store)
    }

    pub fn with_flush_every(mut self, n: usize) -> Self {
        self.flush_every = n.max(1);
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn append(&mut self, record: StoredRecord) -> io::Result<()> {
        if let Some((_, out)) = self.file.as_mut() {
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")?;
            self.unflushed += 1;
            if self.unflushed >= self.flush_every {
                out.flush()?;
                self.unflushed = 0;
            }
        }
        self.index(record);
        Ok(())
    }

    fn index(&mut self, record: StoredRecord) {
        self.seq += 1;
        match record.greenhouse() {
            Some(gh) => {
                self.series.entry(gh).or_default().insert((record.timestamp(), self.seq), record);
            }
            None => {
                if let StoredRecord::Quarantined(s) = record {
                    self.quarantine.push(s);
                }
            }
        }
    }

    pub fn flush(&mut self) -> io::Result<()> {
        if let Some((_, out)) = self.file.as_mut() {
            out.flush()?;
            out.get_ref().sync_data()?;
        }
        self.unflushed = 0;
        Ok(())
    }

    /// Records of `greenhouse` with timestamps in `[from, to]`, in
    /// timestamp order (insertion order among equal timestamps).
    pub fn range(&self, greenhouse: GreenhouseId, from: SimTime, to: SimTime) -> impl Iterator<Item = &StoredRecord> {
        self.series.get(&greenhouse).into_iter().flat_map(move |s| {
            s.range((Bound::Included((from, 0)), Bound::Included((to, u64::MAX))))
                .map(|(_, r)| r)
        })
    }

    pub fn all(&self, greenhouse: GreenhouseId) -> impl Iterator<Item = &StoredRecord> {
        self.series.get(&greenhouse).into_iter().flat_map(|s| s.values())
    }

    pub fn quarantined(&self) -> &[MoistureSample] {
        &self.quarantine
    }

    pub fn len(&self) -> u64 {
        self.seq
    }

    pub fn is_empty(&self) -> bool {
        self.seq == 0
    }
}

impl Drop for TimeSeriesStore {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
