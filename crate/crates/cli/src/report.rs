use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use hostguard::gateway::{BlockLogRecord, Decision, Stage};
use hostguard::monitor::{Alert, AlertCategory};
use serde::Serialize;

use crate::config::Config;
use crate::review::read_jsonl;
use crate::{failed, CliError, CmdResult, Status};

pub const TOP_OFFENDERS: usize = 10;
pub const SUMMARY_FILE: &str = "summary.json";
pub const CSV_FILE: &str = "per-minute.csv";

const RE_REVIEW_CHECKLIST: [&str; 4] = [
    "confirm a fresh scan is clean and the baseline verifies",
    "ask each search engine that flagged the site to re-review it from its webmaster console",
    "ask the anti-phishing and malware lists that carried the site for delisting",
    "check the hosting provider's abuse queue and reply to open tickets",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRow {
    pub stage: &'static str,
    pub blocked: usize,
    pub challenged: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Offender {
    pub ip: IpAddr,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryRow {
    pub category: &'static str,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub generated_at: DateTime<Utc>,
    pub since: Option<DateTime<Utc>>,
    pub blocks_by_stage: Vec<StageRow>,
    pub top_offenders: Vec<Offender>,
    pub alerts_by_category: Vec<CategoryRow>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MinuteRow {
    pub minute: String,
    pub blocked: usize,
    pub challenged: usize,
    pub alerts: usize,
}

fn minute_of(ms: i64) -> i64 {
    ms.div_euclid(60_000)
}

pub fn summarize(
    blocks: &[BlockLogRecord],
    alerts: &[Alert],
    since: Option<DateTime<Utc>>,
    now: DateTime<Utc>,
) -> (Summary, Vec<MinuteRow>) {
    let cutoff = since.map_or(i64::MIN, |s| s.timestamp_millis());
    let blocks: Vec<&BlockLogRecord> = blocks.iter().filter(|r| r.at.timestamp_millis() >= cutoff).collect();
    let alerts: Vec<&Alert> = alerts.iter().filter(|a| a.window_start >= cutoff).collect();

    let blocks_by_stage = Stage::ALL
        .iter()
        .filter(|s| **s != Stage::Clean)
        .map(|s| StageRow {
            stage: s.as_str(),
            blocked: blocks.iter().filter(|r| r.stage == *s && r.decision == Decision::Block).count(),
            challenged: blocks.iter().filter(|r| r.stage == *s && r.decision == Decision::Challenge).count(),
        })
        .collect();

    let mut per_ip: HashMap<IpAddr, usize> = HashMap::new();
    for r in &blocks {
        *per_ip.entry(r.source_ip).or_default() += 1;
    }
    let mut top_offenders: Vec<Offender> = per_ip.into_iter().map(|(ip, count)| Offender { ip, count }).collect();
    top_offenders.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.ip.cmp(&b.ip)));
    top_offenders.truncate(TOP_OFFENDERS);

    let alerts_by_category = AlertCategory::ALL
        .iter()
        .map(|c| CategoryRow {
            category: c.as_str(),
            count: alerts.iter().filter(|a| a.category == *c).count(),
        })
        .collect();

    let mut minutes: BTreeMap<i64, MinuteRow> = BTreeMap::new();
    for r in &blocks {
        let row = minutes.entry(minute_of(r.at.timestamp_millis())).or_default();
        match r.decision {
            Decision::Block => row.blocked += 1,
            Decision::Challenge => row.challenged += 1,
            Decision::Allow => {}
        }
    }
    for a in &alerts {
        minutes.entry(minute_of(a.window_start)).or_default().alerts += 1;
    }
    let mut rows = Vec::new();
    if let (Some(first), Some(last)) = (minutes.keys().next().copied(), minutes.keys().next_back().copied()) {
        for m in first..=last {
            let mut row = minutes.remove(&m).unwrap_or_default();
            row.minute = Utc
                .timestamp_opt(m * 60, 0)
                .single()
                .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
                .unwrap_or_default();
            rows.push(row);
        }
    }

    let summary = Summary {
        generated_at: now,
        since,
        blocks_by_stage,
        top_offenders,
        alerts_by_category,
    };
    (summary, rows)
}

fn ensure_parent(p: &Path) -> Result<(), CliError> {
    match p.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display()))),
        None => Ok(()),
    }
}

pub fn write_csv(path: &Path, rows: &[MinuteRow]) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
    // Headers come from the first record, so write them by hand for empty logs.
    w.write_record(["minute", "blocked", "challenged", "alerts"]).map_err(failed)?;
    for r in rows {
        w.write_record([r.minute.clone(), r.blocked.to_string(), r.challenged.to_string(), r.alerts.to_string()])
            .map_err(failed)?;
    }
    w.flush().map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn run(cfg: &Config, since: Option<Duration>, csv_path: Option<PathBuf>, summary_path: Option<PathBuf>) -> CmdResult {
    let now = Utc::now();
    let since = match since {
        Some(d) => Some(now - chrono::Duration::from_std(d).map_err(|_| failed("--since is too large"))?),
        None => None,
    };
    let blocks = read_jsonl::<BlockLogRecord>(&cfg.logs.block_log)?;
    let alerts = read_jsonl::<Alert>(&cfg.logs.alert_log)?;
    let (summary, rows) = summarize(&blocks, &alerts, since, now);

    println!("BLOCKS BY STAGE");
    println!("  {:<12} {:>8} {:>11}", "stage", "blocked", "challenged");
    for r in &summary.blocks_by_stage {
        println!("  {:<12} {:>8} {:>11}", r.stage, r.blocked, r.challenged);
    }
    println!();
    println!("TOP OFFENDER IPS");
    for o in &summary.top_offenders {
        println!("  {:<40} {:>8}", o.ip, o.count);
    }
    if summary.top_offenders.is_empty() {
        println!("  (none)");
    }
    println!();
    println!("ALERTS BY CATEGORY");
    for c in &summary.alerts_by_category {
        println!("  {:<16} {:>8}", c.category, c.count);
    }

    let summary_path = summary_path.unwrap_or_else(|| cfg.logs.report_dir.join(SUMMARY_FILE));
    ensure_parent(&summary_path)?;
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    fs::write(&summary_path, json).map_err(CliError::io(format!("writing {}", summary_path.display())))?;
    let csv_path = csv_path.unwrap_or_else(|| cfg.logs.report_dir.join(CSV_FILE));
    write_csv(&csv_path, &rows)?;
    println!();
    println!("summary: {}", summary_path.display());
    println!("per-minute counts: {}", csv_path.display());
    println!();
    println!("AFTER A CLEANUP");
    for item in RE_REVIEW_CHECKLIST {
        println!("  [ ] {item}");
    }
    Ok(Status::Clean)
}
