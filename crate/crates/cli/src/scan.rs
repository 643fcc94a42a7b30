use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hostguard::integrity::{verify_tree, BaselineManifest, IntegrityReport, QuarantineReason, QuarantineStore};
use hostguard::signatures::{load_signatures, scan_files, ScanLimits, ScanReport, Severity, SignatureSet};
use serde::Serialize;

use crate::config::Config;
use crate::{failed, CliError, CmdResult, Status};

pub fn load_sigs(cfg: &Config) -> Result<SignatureSet, CliError> {
    match &cfg.signature_path {
        Some(p) => load_signatures(p).map_err(failed),
        None => Ok(SignatureSet::seed()),
    }
}

#[derive(Serialize)]
#[serde(tag = "record", rename = "integrity")]
struct IntegrityLine<'a> {
    #[serde(flatten)]
    report: &'a IntegrityReport,
}

fn write_report(path: &Path, integrity: &IntegrityReport, scan: &ScanReport) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    }
    let mut text = serde_json::to_string(&IntegrityLine { report: integrity }).expect("report serializes");
    text.push('\n');
    text.push_str(&scan.to_jsonl());
    fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn run(cfg: &Config, quarantine: bool, report_path: Option<PathBuf>) -> CmdResult {
    let root = cfg.web_root()?;
    let manifest = BaselineManifest::load(&cfg.manifest_path).map_err(|e| failed(format!("{}: {e}", cfg.manifest_path.display())))?;
    let sigs = load_sigs(cfg)?;
    let integrity = verify_tree(root, &manifest).map_err(failed)?;
    let suspects = integrity.suspects();
    let scan = scan_files(root, &suspects, &sigs, &ScanLimits::default()).map_err(failed)?;

    for p in &integrity.modified {
        println!("modified  {p}");
    }
    for p in &integrity.added {
        println!("added     {p}");
    }
    for p in &integrity.removed {
        println!("removed   {p}");
    }
    for d in &integrity.permissions_drift {
        println!("mode      {} {:o} -> {:o}", d.rel_path, d.expected_mode, d.found_mode);
    }
    for h in &scan.hits {
        println!(
            "hit       {}:{} {} {} {} {:?}",
            h.file_path, h.byte_offset, h.signature_id, h.threat_class, h.severity, h.matched_excerpt
        );
    }
    for s in &scan.files_skipped {
        eprintln!("skipped {}: {:?}", s.path, s.reason);
    }

    let report_path = report_path.unwrap_or_else(|| cfg.logs.scan_report.clone());
    write_report(&report_path, &integrity, &scan)?;

    if quarantine {
        let mut critical: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for h in scan.hits.iter().filter(|h| h.severity == Severity::Critical) {
            let ids = critical.entry(h.file_path.as_str()).or_default();
            if !ids.contains(&h.signature_id.as_str()) {
                ids.push(&h.signature_id);
            }
        }
        if !critical.is_empty() {
            let store = QuarantineStore::open(&cfg.quarantine_dir).map_err(failed)?;
            for (rel, ids) in critical {
                let note = format!("signatures={}", ids.join(","));
                let entry = store
                    .quarantine_file(&root.join(rel), QuarantineReason::SignatureHit, &note)
                    .map_err(|e| failed(format!("quarantining {rel}: {e}")))?;
                println!("quarantined {rel} as q-{}", entry.entry_id);
            }
        }
    }

    println!(
        "{} changed, {} unhashed, {} files scanned, {} hits; report {}",
        integrity.modified.len() + integrity.added.len() + integrity.removed.len() + integrity.permissions_drift.len(),
        integrity.unknown_unhashed.len(),
        scan.files_scanned,
        scan.hits.len(),
        report_path.display()
    );
    Ok(if integrity.is_clean() && scan.is_clean() {
        Status::Clean
    } else {
        Status::Findings
    })
}
