use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::net::IpAddr;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use clap::Subcommand;
use hostguard::gateway::{Blacklist, BlockLogRecord, Decision, FileStore};
use hostguard::integrity::{QuarantineEntry, QuarantineStatus, QuarantineStore};
use hostguard::monitor::Alert;
use serde::Serialize;

use crate::config::Config;
use crate::{confirm, failed, CliError, CmdResult, Status};

#[derive(Debug, Subcommand)]
pub enum Action {
    /// Held quarantine entries, block-log records and alerts.
    List,
    /// Full record for one item id (q-N, b-<request id>, a-<alert id>).
    Show { id: String },
    /// Put a quarantined file back.
    Release { id: String },
    /// Delete a quarantined file's evidence copy for good.
    Purge { id: String },
    /// Drop every blacklist key for an address.
    Unblock { ip: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Quarantine,
    BlockedRequest,
    Alert,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Quarantine => "quarantine",
            Source::BlockedRequest => "blocked_request",
            Source::Alert => "alert",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReviewItem {
    pub source: Source,
    pub id: String,
    pub summary: String,
    pub created_at: DateTime<Utc>,
    pub status: String,
    #[serde(skip)]
    pub record: serde_json::Value,
}

fn status_str(s: QuarantineStatus) -> &'static str {
    match s {
        QuarantineStatus::Held => "held",
        QuarantineStatus::Restored => "restored",
        QuarantineStatus::Purged => "purged",
    }
}

fn quarantine_item(e: &QuarantineEntry) -> ReviewItem {
    ReviewItem {
        source: Source::Quarantine,
        id: format!("q-{}", e.entry_id),
        summary: format!("{} ({:?}: {})", e.original_path.display(), e.reason, e.detail),
        created_at: e.created_at,
        status: status_str(e.status).into(),
        record: serde_json::to_value(e).expect("entry serializes"),
    }
}

/// Parses each JSON line of `path`, skipping ones that do not parse.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::io(format!("opening {}", path.display()))(e)),
    };
    let mut out = Vec::new();
    let mut bad = 0;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(CliError::io(format!("reading {}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(_) => bad += 1,
        }
    }
    if bad > 0 {
        eprintln!("skipped {bad} unparseable lines in {}", path.display());
    }
    Ok(out)
}

fn quarantine_store(cfg: &Config) -> Result<Option<QuarantineStore>, CliError> {
    if !cfg.quarantine_dir.exists() {
        return Ok(None);
    }
    QuarantineStore::open(&cfg.quarantine_dir).map(Some).map_err(failed)
}

/// Every quarantine entry (any status), block-log record and alert.
pub fn all_items(cfg: &Config) -> Result<Vec<ReviewItem>, CliError> {
    let mut items = Vec::new();
    if let Some(store) = quarantine_store(cfg)? {
        items.extend(store.entries().map_err(failed)?.iter().map(quarantine_item));
    }
    // Replays reuse request ids, so repeats get a numeric suffix.
    let mut seen: HashMap<String, usize> = HashMap::new();
    for r in read_jsonl::<BlockLogRecord>(&cfg.logs.block_log)? {
        let mut id = format!("b-{}", serde_json::to_value(r.request_id).expect("id serializes").as_str().unwrap_or_default());
        let n = seen.entry(id.clone()).or_default();
        *n += 1;
        if *n > 1 {
            id = format!("{id}.{n}");
        }
        items.push(ReviewItem {
            source: Source::BlockedRequest,
            id,
            summary: format!("{} {} {} {} {}", r.reason_code, r.source_ip, r.method, r.path, r.evidence.join(" ")),
            created_at: r.at,
            status: match r.decision {
                Decision::Block => "blocked",
                Decision::Challenge => "challenged",
                Decision::Allow => "allowed",
            }
            .into(),
            record: serde_json::to_value(&r).expect("record serializes"),
        });
    }
    for a in read_jsonl::<Alert>(&cfg.logs.alert_log)? {
        items.push(ReviewItem {
            source: Source::Alert,
            id: format!("a-{}", a.alert_id),
            summary: format!("{} {}: {}", a.category, a.severity, a.detail),
            created_at: Utc.timestamp_millis_opt(a.window_start).single().unwrap_or_default(),
            status: "open".into(),
            record: serde_json::to_value(&a).expect("alert serializes"),
        });
    }
    items.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    Ok(items)
}

/// Items awaiting a decision: held quarantine entries, blocks and alerts.
pub fn open_items(cfg: &Config) -> Result<Vec<ReviewItem>, CliError> {
    Ok(all_items(cfg)?
        .into_iter()
        .filter(|i| i.source != Source::Quarantine || i.status == "held")
        .collect())
}

fn entry_id(id: &str) -> Result<u64, CliError> {
    id.strip_prefix("q-")
        .unwrap_or(id)
        .parse()
        .map_err(|_| failed(format!("{id:?} is not a quarantine id (q-N)")))
}

pub fn run(cfg: &Config, yes: bool, action: Action) -> CmdResult {
    match action {
        Action::List => {
            let items = open_items(cfg)?;
            println!("{:<36} {:<16} {:<24} {:<10} SUMMARY", "ID", "SOURCE", "CREATED", "STATUS");
            for i in &items {
                println!(
                    "{:<36} {:<16} {:<24} {:<10} {}",
                    i.id,
                    i.source.as_str(),
                    i.created_at.format("%Y-%m-%dT%H:%M:%S%.3fZ"),
                    i.status,
                    i.summary
                );
            }
            println!("{} items", items.len());
            Ok(Status::Clean)
        }
        Action::Show { id } => {
            let Some(item) = all_items(cfg)?.into_iter().find(|i| i.id == id) else {
                println!("not found: {id}");
                return Ok(Status::Findings);
            };
            println!("{}", serde_json::to_string_pretty(&item.record).expect("record serializes"));
            Ok(Status::Clean)
        }
        Action::Release { id } => {
            let n = entry_id(&id)?;
            let store = quarantine_store(cfg)?.ok_or_else(|| failed(format!("unknown quarantine entry {n}")))?;
            let path = store.restore_file(n).map_err(failed)?;
            println!("restored {}", path.display());
            Ok(Status::Clean)
        }
        Action::Purge { id } => {
            let n = entry_id(&id)?;
            let store = quarantine_store(cfg)?.ok_or_else(|| failed(format!("unknown quarantine entry {n}")))?;
            let entry = store.get(n).map_err(failed)?;
            if !yes {
                let q = format!("Permanently delete the held copy of {}?", entry.original_path.display());
                if !confirm(&q).map_err(CliError::io("reading confirmation"))? {
                    return Err(failed("aborted; pass --yes to skip the prompt"));
                }
            }
            let entry = store.purge(n).map_err(failed)?;
            println!("purged q-{} ({})", entry.entry_id, entry.original_path.display());
            Ok(Status::Clean)
        }
        Action::Unblock { ip } => {
            let addr: IpAddr = ip.trim().parse().map_err(|_| failed(format!("{ip:?} is not an IP address")))?;
            if !cfg.blacklist_store.exists() {
                println!("not found: {addr}");
                return Ok(Status::Findings);
            }
            let store = FileStore::open(&cfg.blacklist_store).map_err(failed)?;
            let bl = Blacklist::new(Box::new(store), cfg.gateway.bloom_expected, cfg.gateway.bloom_fp_rate).map_err(failed)?;
            let removed = bl.unblock_ip(addr).map_err(failed)?;
            if removed.is_empty() {
                println!("not found: {addr}");
                return Ok(Status::Findings);
            }
            for k in &removed {
                println!("unblocked {k}");
            }
            Ok(Status::Clean)
        }
    }
}
