//! Content-addressed quarantine store with an append-only JSONL ledger.
//!
//! Layout under the store directory:
//!
//! - `blobs/<sha256>`: the quarantined bytes.
//! - `ledger.jsonl`: one `quarantined` record per entry, then `status`
//!   records for every later transition (`held` to `restored` or `purged`).
//! - `.lock`: advisory lock; mutations hold it exclusively.
//!
//! Quarantine writes the blob first, then the ledger record, then atomically
//! renames an inert placeholder over the original. A crash at any point
//! leaves the original bytes recoverable.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{mode_bits, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarantineReason {
    IntegrityMismatch,
    SignatureHit,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuarantineStatus {
    Held,
    Restored,
    Purged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub entry_id: u64,
    pub original_path: PathBuf,
    /// Relative to the store directory.
    pub stored_blob: PathBuf,
    pub reason: QuarantineReason,
    /// Free text; always ends with `sha256=<digest>`.
    pub detail: String,
    pub digest: String,
    pub mode: u32,
    pub size: u64,
    #[serde(with = "crate::timefmt::rfc3339_ms")]
    pub created_at: DateTime<Utc>,
    pub status: QuarantineStatus,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LedgerRecord {
    Quarantined {
        entry: QuarantineEntry,
    },
    Status {
        entry_id: u64,
        status: QuarantineStatus,
        #[serde(with = "crate::timefmt::rfc3339_ms")]
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Error)]
pub enum QuarantineError {
    #[error("{0} does not exist")]
    NotFound(PathBuf),
    #[error("{0} is not a regular file")]
    NotRegularFile(PathBuf),
    #[error("{path} is already quarantined as entry {entry_id}")]
    AlreadyQuarantined { path: PathBuf, entry_id: u64 },
    #[error("quarantine store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("unknown quarantine entry {0}")]
    UnknownEntry(u64),
    #[error("entry {entry_id} is {status:?}, not held")]
    NotHeld { entry_id: u64, status: QuarantineStatus },
    #[error("a different file now occupies {0}")]
    TargetOccupied(PathBuf),
    #[error("ledger line {line} is corrupt: {reason}")]
    CorruptLedger { line: usize, reason: String },
    #[error("blob for entry {0} is missing or does not match its digest")]
    BlobMismatch(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct QuarantineStore {
    dir: PathBuf,
}

fn unavailable(e: impl std::fmt::Display) -> QuarantineError {
    QuarantineError::StoreUnavailable(e.to_string())
}

pub fn placeholder_text(entry_id: u64) -> String {
    format!("# quarantined by hostguard as entry {entry_id}; original held for review\n")
}

/// Parses ledger text into entries with their current status.
pub fn fold_ledger(text: &str) -> Result<Vec<QuarantineEntry>, QuarantineError> {
    let mut entries: Vec<QuarantineEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| QuarantineError::CorruptLedger {
            line: i + 1,
            reason,
        };
        let rec: LedgerRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        match rec {
            LedgerRecord::Quarantined { entry } => {
                if entries.iter().any(|e| e.entry_id == entry.entry_id) {
                    return Err(corrupt(format!("duplicate entry id {}", entry.entry_id)));
                }
                entries.push(entry);
            }
            LedgerRecord::Status { entry_id, status, .. } => {
                let e = entries
                    .iter_mut()
                    .find(|e| e.entry_id == entry_id)
                    .ok_or_else(|| corrupt(format!("status for unknown entry {entry_id}")))?;
                if e.status != QuarantineStatus::Held || status == QuarantineStatus::Held {
                    return Err(corrupt(format!(
                        "illegal transition {:?} -> {:?} for entry {entry_id}",
                        e.status, status
                    )));
                }
                e.status = status;
            }
        }
    }
    Ok(entries)
}

impl QuarantineStore {
    pub fn open(dir: &Path) -> Result<Self, QuarantineError> {
        fs::create_dir_all(dir.join("blobs")).map_err(unavailable)?;
        let store = Self {
            dir: dir.to_path_buf(),
        };
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(store.ledger_path())
            .map_err(unavailable)?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.dir.join("ledger.jsonl")
    }

    fn lock(&self, exclusive: bool) -> Result<File, QuarantineError> {
        let f = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.dir.join(".lock"))
            .map_err(unavailable)?;
        if exclusive {
            f.lock().map_err(unavailable)?;
        } else {
            f.lock_shared().map_err(unavailable)?;
        }
        Ok(f)
    }

    pub fn entries(&self) -> Result<Vec<QuarantineEntry>, QuarantineError> {
        let _guard = self.lock(false)?;
        self.read_entries()
    }

    fn read_entries(&self) -> Result<Vec<QuarantineEntry>, QuarantineError> {
        let text = fs::read_to_string(self.ledger_path()).map_err(unavailable)?;
        fold_ledger(&text)
    }

    pub fn get(&self, entry_id: u64) -> Result<QuarantineEntry, QuarantineError> {
        self.entries()?
            .into_iter()
            .find(|e| e.entry_id == entry_id)
            .ok_or(QuarantineError::UnknownEntry(entry_id))
    }

    fn append(&self, rec: &LedgerRecord) -> Result<(), QuarantineError> {
        let mut line = serde_json::to_string(rec).expect("ledger record serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .append(true)
            .open(self.ledger_path())
            .map_err(unavailable)?;
        f.write_all(line.as_bytes()).map_err(unavailable)?;
        f.sync_data().map_err(unavailable)
    }

    /// Moves `path` into the store and leaves a mode-000 placeholder.
    pub fn quarantine_file(
        &self,
        path: &Path,
        reason: QuarantineReason,
        note: &str,
    ) -> Result<QuarantineEntry, QuarantineError> {
        let md = match fs::symlink_metadata(path) {
            Ok(md) => md,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(QuarantineError::NotFound(path.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        };
        if !md.is_file() {
            return Err(QuarantineError::NotRegularFile(path.to_path_buf()));
        }
        let original = fs::canonicalize(path)?;
        let _guard = self.lock(true)?;
        let entries = self.read_entries()?;
        if let Some(e) = entries
            .iter()
            .find(|e| e.status == QuarantineStatus::Held && e.original_path == original)
        {
            return Err(QuarantineError::AlreadyQuarantined {
                path: original,
                entry_id: e.entry_id,
            });
        }
        let content = fs::read(&original)?;
        let digest = sha256_hex(&content);
        let stored_blob = PathBuf::from("blobs").join(&digest);
        let blob_path = self.dir.join(&stored_blob);
        if !blob_path.exists() {
            let tmp = self.dir.join("blobs").join(format!(".{digest}.tmp"));
            write_synced(&tmp, &content).map_err(unavailable)?;
            fs::rename(&tmp, &blob_path).map_err(unavailable)?;
        }
        let entry_id = entries.iter().map(|e| e.entry_id).max().unwrap_or(0) + 1;
        let detail = if note.is_empty() {
            format!("sha256={digest}")
        } else {
            format!("{note}; sha256={digest}")
        };
        let entry = QuarantineEntry {
            entry_id,
            original_path: original.clone(),
            stored_blob,
            reason,
            detail,
            digest,
            mode: mode_bits(&md),
            size: content.len() as u64,
            created_at: Utc::now(),
            status: QuarantineStatus::Held,
        };
        self.append(&LedgerRecord::Quarantined {
            entry: entry.clone(),
        })?;
        replace_atomically(&original, placeholder_text(entry_id).as_bytes(), 0o000)?;
        Ok(entry)
    }

    /// Copies the blob back with its original mode; the blob is kept.
    pub fn restore_file(&self, entry_id: u64) -> Result<PathBuf, QuarantineError> {
        let _guard = self.lock(true)?;
        let entry = self.held(entry_id)?;
        let target = &entry.original_path;
        match fs::read(target) {
            Ok(current) if current != placeholder_text(entry_id).as_bytes() => {
                return Err(QuarantineError::TargetOccupied(target.clone()))
            }
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                if fs::symlink_metadata(target).is_ok() {
                    return Err(QuarantineError::TargetOccupied(target.clone()));
                }
            }
            Err(e) => return Err(e.into()),
        }
        let content = fs::read(self.dir.join(&entry.stored_blob))
            .map_err(|_| QuarantineError::BlobMismatch(entry_id))?;
        if sha256_hex(&content) != entry.digest {
            return Err(QuarantineError::BlobMismatch(entry_id));
        }
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        replace_atomically(target, &content, entry.mode)?;
        self.append(&LedgerRecord::Status {
            entry_id,
            status: QuarantineStatus::Restored,
            at: Utc::now(),
        })?;
        Ok(target.clone())
    }

    /// Drops the placeholder and the evidence blob once no other held or
    /// restored entry references it.
    pub fn purge(&self, entry_id: u64) -> Result<QuarantineEntry, QuarantineError> {
        let _guard = self.lock(true)?;
        let entry = self.held(entry_id)?;
        if fs::read(&entry.original_path).is_ok_and(|c| c == placeholder_text(entry_id).as_bytes()) {
            fs::remove_file(&entry.original_path)?;
        }
        self.append(&LedgerRecord::Status {
            entry_id,
            status: QuarantineStatus::Purged,
            at: Utc::now(),
        })?;
        let shared = self
            .read_entries()?
            .iter()
            .any(|e| e.digest == entry.digest && e.status != QuarantineStatus::Purged);
        if !shared {
            let _ = fs::remove_file(self.dir.join(&entry.stored_blob));
        }
        Ok(QuarantineEntry {
            status: QuarantineStatus::Purged,
            ..entry
        })
    }

    fn held(&self, entry_id: u64) -> Result<QuarantineEntry, QuarantineError> {
        let entry = self
            .read_entries()?
            .into_iter()
            .find(|e| e.entry_id == entry_id)
            .ok_or(QuarantineError::UnknownEntry(entry_id))?;
        if entry.status != QuarantineStatus::Held {
            return Err(QuarantineError::NotHeld {
                entry_id,
                status: entry.status,
            });
        }
        Ok(entry)
    }
}

fn write_synced(path: &Path, content: &[u8]) -> std::io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(content)?;
    f.sync_all()
}

#[cfg(unix)]
fn set_mode(path: &Path, mode: u32) -> std::io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    fs::set_permissions(path, fs::Permissions::from_mode(mode))
}

#[cfg(not(unix))]
fn set_mode(path: &Path, mode: u32) -> std::io::Result<()> {
    let mut p = fs::metadata(path)?.permissions();
    p.set_readonly(mode & 0o222 == 0);
    fs::set_permissions(path, p)
}

fn replace_atomically(target: &Path, content: &[u8], mode: u32) -> std::io::Result<()> {
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = target.with_file_name(format!(".{name}.hostguard-tmp"));
    write_synced(&tmp, content)?;
    set_mode(&tmp, mode)?;
    fs::rename(&tmp, target)
}
