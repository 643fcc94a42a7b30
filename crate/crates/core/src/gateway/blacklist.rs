//! Request blacklist: a Bloom filter answers "definitely not" cheaply and an
//! exact store confirms the rest.
//!
//! The filter is rebuilt from the exact store (a new epoch) once more keys
//! went in than it was sized for, which is also when removals take effect
//! on the filter side.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloomset::{BloomError, BloomSet};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("blacklist store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("blacklist store {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("blacklist state lock poisoned")]
    Poisoned,
    #[error("blacklist filter rotation failed: {0}")]
    Rotation(String),
}

#[derive(Debug, Error)]
pub enum BlacklistError {
    #[error(transparent)]
    Bloom(#[from] BloomError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub trait ExactStore: Send {
    fn contains(&mut self, key: &str) -> Result<bool, StoreError>;
    /// False when the key was already present.
    fn insert(&mut self, key: &str) -> Result<bool, StoreError>;
    /// Removes every key matching `pred` and returns them.
    fn remove_where(&mut self, pred: &dyn Fn(&str) -> bool) -> Result<Vec<String>, StoreError>;
    fn keys(&mut self) -> Result<Vec<String>, StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore(BTreeSet<String>);

impl ExactStore for MemoryStore {
    fn contains(&mut self, key: &str) -> Result<bool, StoreError> {
        Ok(self.0.contains(key))
    }

    fn insert(&mut self, key: &str) -> Result<bool, StoreError> {
        Ok(self.0.insert(key.to_string()))
    }

    fn remove_where(&mut self, pred: &dyn Fn(&str) -> bool) -> Result<Vec<String>, StoreError> {
        let gone: Vec<String> = self.0.iter().filter(|k| pred(k)).cloned().collect();
        for k in &gone {
            self.0.remove(k);
        }
        Ok(gone)
    }

    fn keys(&mut self) -> Result<Vec<String>, StoreError> {
        Ok(self.0.iter().cloned().collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
struct StoreLine {
    op: StoreOp,
    key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StoreOp {
    Mark,
    Unmark,
}

/// Append-only JSONL journal of marks and unmarks, folded into a set.
/// Other processes may append (the review command does); the file is
/// re-read whenever its length changes.
#[derive(Debug)]
pub struct FileStore {
    path: PathBuf,
    keys: BTreeSet<String>,
    seen_len: u64,
}

impl FileStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut s = Self {
            path: path.to_path_buf(),
            keys: BTreeSet::new(),
            seen_len: 0,
        };
        if !path.exists() {
            s.append(&[])?;
        }
        s.reload()?;
        Ok(s)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.clone(),
            source,
        }
    }

    fn reload(&mut self) -> Result<(), StoreError> {
        let text = std::fs::read_to_string(&self.path).map_err(|e| self.io(e))?;
        let mut keys = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoreLine = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: self.path.clone(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            match rec.op {
                StoreOp::Mark => keys.insert(rec.key),
                StoreOp::Unmark => keys.remove(&rec.key),
            };
        }
        self.keys = keys;
        self.seen_len = text.len() as u64;
        Ok(())
    }

    fn refresh(&mut self) -> Result<(), StoreError> {
        let len = std::fs::metadata(&self.path).map_err(|e| self.io(e))?.len();
        if len != self.seen_len {
            self.reload()?;
        }
        Ok(())
    }

    fn append(&mut self, recs: &[StoreLine]) -> Result<(), StoreError> {
        let mut f: File = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        f.lock().map_err(|e| self.io(e))?;
        let mut buf = String::new();
        for r in recs {
            buf.push_str(&serde_json::to_string(r).expect("store line serializes"));
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).and_then(|_| f.sync_data()).map_err(|e| self.io(e))?;
        Ok(())
    }
}

impl ExactStore for FileStore {
    fn contains(&mut self, key: &str) -> Result<bool, StoreError> {
        self.refresh()?;
        Ok(self.keys.contains(key))
    }

    fn insert(&mut self, key: &str) -> Result<bool, StoreError> {
        self.refresh()?;
        if self.keys.contains(key) {
            return Ok(false);
        }
        self.append(&[StoreLine {
            op: StoreOp::Mark,
            key: key.to_string(),
        }])?;
        self.reload()?;
        Ok(true)
    }

    fn remove_where(&mut self, pred: &dyn Fn(&str) -> bool) -> Result<Vec<String>, StoreError> {
        self.refresh()?;
        let gone: Vec<String> = self.keys.iter().filter(|k| pred(k)).cloned().collect();
        if !gone.is_empty() {
            let recs: Vec<StoreLine> = gone
                .iter()
                .map(|k| StoreLine {
                    op: StoreOp::Unmark,
                    key: k.clone(),
                })
                .collect();
            self.append(&recs)?;
            self.reload()?;
        }
        Ok(gone)
    }

    fn keys(&mut self) -> Result<Vec<String>, StoreError> {
        self.refresh()?;
        Ok(self.keys.iter().cloned().collect())
    }
}

pub struct Blacklist {
    bloom: RwLock<BloomSet>,
    exact: Mutex<Box<dyn ExactStore>>,
    n_expected: u64,
    p_target: f64,
    exact_lookups: AtomicU64,
    tombstones: AtomicU64,
    epoch: AtomicU64,
}

impl std::fmt::Debug for Blacklist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Blacklist")
            .field("n_expected", &self.n_expected)
            .field("epoch", &self.epoch())
            .finish_non_exhaustive()
    }
}

impl Blacklist {
    /// Loads whatever the store already holds into a fresh filter.
    pub fn new(mut store: Box<dyn ExactStore>, n_expected: u64, p_target: f64) -> Result<Self, BlacklistError> {
        let keys = store.keys()?;
        let bloom = Self::fresh(&keys, n_expected, p_target)?;
        Ok(Self {
            bloom: RwLock::new(bloom),
            exact: Mutex::new(store),
            n_expected,
            p_target,
            exact_lookups: AtomicU64::new(0),
            tombstones: AtomicU64::new(0),
            epoch: AtomicU64::new(0),
        })
    }

    pub fn in_memory(n_expected: u64, p_target: f64) -> Result<Self, BlacklistError> {
        Self::new(Box::<MemoryStore>::default(), n_expected, p_target)
    }

    fn fresh(keys: &[String], n_expected: u64, p_target: f64) -> Result<BloomSet, BloomError> {
        let bloom = BloomSet::create(n_expected.max(2 * keys.len() as u64), p_target)?;
        for k in keys {
            bloom.insert(k.as_bytes());
        }
        Ok(bloom)
    }

    fn store(&self) -> Result<std::sync::MutexGuard<'_, Box<dyn ExactStore>>, StoreError> {
        self.exact.lock().map_err(|_| StoreError::Poisoned)
    }

    pub fn mark(&self, key: &str) -> Result<(), StoreError> {
        let mut store = self.store()?;
        store.insert(key)?;
        let full = {
            let bloom = self.bloom.read().map_err(|_| StoreError::Poisoned)?;
            bloom.insert(key.as_bytes());
            bloom.n_inserted() > self.n_expected
        };
        if full {
            let keys = store.keys()?;
            let next = Self::fresh(&keys, self.n_expected, self.p_target)
                .map_err(|e| StoreError::Rotation(e.to_string()))?;
            *self.bloom.write().map_err(|_| StoreError::Poisoned)? = next;
            self.tombstones.store(0, Ordering::Relaxed);
            let epoch = self.epoch.fetch_add(1, Ordering::Relaxed) + 1;
            log::info!("blacklist filter rotated to epoch {epoch} with {} keys", keys.len());
        }
        Ok(())
    }

    /// Bloom-negative keys never touch the exact store.
    pub fn hit(&self, key: &str) -> Result<bool, StoreError> {
        if !self.bloom.read().map_err(|_| StoreError::Poisoned)?.contains(key.as_bytes()) {
            return Ok(false);
        }
        self.exact_lookups.fetch_add(1, Ordering::Relaxed);
        self.store()?.contains(key)
    }

    /// Drops every key recorded for `ip`. The filter keeps the bits until
    /// the next epoch; the exact store already says no.
    pub fn unblock_ip(&self, ip: std::net::IpAddr) -> Result<Vec<String>, StoreError> {
        let prefix = format!("{ip}|");
        let gone = self.store()?.remove_where(&|k| k.starts_with(&prefix))?;
        self.tombstones.fetch_add(gone.len() as u64, Ordering::Relaxed);
        Ok(gone)
    }

    pub fn keys(&self) -> Result<Vec<String>, StoreError> {
        self.store()?.keys()
    }

    pub fn exact_lookups(&self) -> u64 {
        self.exact_lookups.load(Ordering::Relaxed)
    }

    pub fn tombstones(&self) -> u64 {
        self.tombstones.load(Ordering::Relaxed)
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Relaxed)
    }

    pub fn bloom_contains(&self, key: &str) -> bool {
        self.bloom
            .read()
            .map(|b| b.contains(key.as_bytes()))
            .unwrap_or(true)
    }
}
