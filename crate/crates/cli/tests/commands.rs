mod common;

use std::fs;
use std::path::Path;

use common::*;
use hostguard_testkit::hardening::{COMPLIANT_PHP_INI, NONCONFORMING_PHP_INI, WEAK_CREDENTIALS};
use hostguard_testkit::tree::{benign_tree, plant_samples};
use sha2::{Digest, Sha256};

fn site(dir: &Path, seed: u64) -> Vec<String> {
    benign_tree(&dir.join("site"), seed).unwrap()
}

#[test]
fn baseline_prints_a_digest_that_rehashes() {
    let dir = tempfile::tempdir().unwrap();
    site(dir.path(), 1);
    let cfg = write_config(dir.path(), "[site]\nweb_root = site\ncms_name = wordpress\ncms_version = 6.4.3\n");

    let o = run(&cfg, &["baseline"]);
    assert_eq!(code(&o), 2, "no --yes and no answer must abort");
    assert!(!dir.path().join("state/manifest.hgm").exists());

    let o = run(&cfg, &["baseline", "--yes"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let printed = out.lines().find_map(|l| l.strip_prefix("digest: ")).unwrap();
    let raw = fs::read(dir.path().join("state/manifest.hgm")).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let trailer = text.rfind("DIGEST ").unwrap();
    assert_eq!(hex(&Sha256::digest(&text.as_bytes()[..trailer])), printed);
    assert_eq!(text[trailer + 7..].trim_end(), printed);
    assert!(out.contains("entries: 500"), "{out}");
}

fn hex(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

#[test]
fn baseline_of_empty_tree_and_unreadable_root() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("site")).unwrap();
    let cfg = write_config(dir.path(), "[site]\nweb_root = site\n");
    let o = run(&cfg, &["--yes", "baseline"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("entries: 0"));

    let cfg = write_config(dir.path(), "[site]\nweb_root = missing\n");
    let o = run(&cfg, &["--yes", "baseline"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing"), "{}", stderr(&o));
}

#[test]
fn scan_quarantine_review_release_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let benign = site(dir.path(), 2);
    let cfg = write_config(dir.path(), "[site]\nweb_root = site\n");

    let o = run(&cfg, &["scan"]);
    assert_eq!(code(&o), 2, "scan without a baseline is an error");

    assert_eq!(code(&run(&cfg, &["--yes", "baseline"])), 0);
    let o = run(&cfg, &["scan"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));

    let planted = plant_samples(&dir.path().join("site"), &benign, 2).unwrap();
    let o = run(&cfg, &["scan"]);
    assert_eq!(code(&o), 1);
    let report = fs::read_to_string(dir.path().join("state/logs/scan.jsonl")).unwrap();
    for p in &planted {
        assert!(report.contains(&format!("\"file_path\":\"{}\"", p.rel_path)), "{} missing from report", p.rel_path);
    }

    let o = run(&cfg, &["scan", "--quarantine"]);
    assert_eq!(code(&o), 1);
    let held: Vec<String> = stdout(&o)
        .lines()
        .filter_map(|l| l.strip_prefix("quarantined "))
        .map(String::from)
        .collect();
    assert!(!held.is_empty(), "{}", stdout(&o));

    let o = run(&cfg, &["review", "list"]);
    assert_eq!(code(&o), 0);
    let held_rows = stdout(&o).lines().filter(|l| l.starts_with("q-") && l.contains(" held ")).count();
    assert_eq!(held_rows, held.len());

    // Release the first one; a later scan finds it again.
    let (rel, id) = held[0].split_once(" as ").unwrap();
    let o = run(&cfg, &["review", "release", id]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("site").join(rel).exists());
    let o = run(&cfg, &["scan"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains(&format!("hit       {rel}:")), "{}", stdout(&o));

    // Purge another and check conservation: held + restored + purged = total.
    if held.len() > 1 {
        let id = held[1].split_once(" as ").unwrap().1;
        assert_eq!(code(&run(&cfg, &["--yes", "review", "purge", id])), 0);
    }
    let ledger = fs::read_to_string(dir.path().join("state/quarantine/ledger.jsonl")).unwrap_or_default();
    let quarantined = ledger.lines().filter(|l| l.contains("\"quarantined\"")).count();
    assert_eq!(quarantined, held.len());
    let o = run(&cfg, &["review", "list"]);
    let still_held = stdout(&o).lines().filter(|l| l.starts_with("q-")).count();
    assert_eq!(still_held, held.len() - 1 - usize::from(held.len() > 1));
}

#[test]
fn audit_exit_codes_and_bundle() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("good.ini"), COMPLIANT_PHP_INI).unwrap();
    fs::write(dir.path().join("bad.ini"), NONCONFORMING_PHP_INI).unwrap();
    fs::write(dir.path().join("broken.ini"), "[PHP\nx = 1\n").unwrap();
    fs::write(dir.path().join("creds.jsonl"), WEAK_CREDENTIALS).unwrap();

    let cfg = write_config(dir.path(), "[hardening]\nphp_ini = good.ini\n");
    let o = run(&cfg, &["audit"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));

    let cfg = write_config(dir.path(), "[hardening]\nphp_ini = bad.ini\ncredentials = creds.jsonl\n");
    let bundle = dir.path().join("bundle");
    let o = run(&cfg, &["audit", "--emit-remediation", bundle.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("credentials"), "{}", stdout(&o));
    let overrides = fs::read_to_string(bundle.join("php-overrides.ini")).unwrap();
    assert!(overrides.lines().any(|l| l.starts_with("disable_functions") && l.contains("shell_exec")), "{overrides}");
    let manual = fs::read_to_string(bundle.join("manual-steps.txt")).unwrap();
    assert!(manual.contains("Hosting checklist:"));

    let cfg = write_config(dir.path(), "[hardening]\nphp_ini = broken.ini\n");
    assert_eq!(code(&run(&cfg, &["audit"])), 2);
    let cfg = write_config(dir.path(), "[hardening]\nphp_inii = good.ini\n");
    let o = run(&cfg, &["audit"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("php_inii"));
}

fn event(ts: i64, body: &str) -> String {
    format!("{{\"timestamp\":{ts},{body}}}\n")
}

#[test]
fn monitor_once_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[monitor]\nevent_log = events.jsonl\nwindow_secs = 60\n");
    let o = run(&cfg, &["monitor", "--once"]);
    assert_eq!(code(&o), 2, "missing log");

    let t0 = 1_709_287_200_000i64;
    let mut benign = String::new();
    for i in 0..50 {
        benign.push_str(&event(
            t0 + i * 1000,
            r#""kind":"script_exec","script_path":"index.php","duration_ms":120,"cpu_pct":5.0"#,
        ));
    }
    benign.push_str(&event(t0 + 3000, r#""kind":"outbound_msg","protocol":"smtp","dest":"owner@example.org","script_path":"wp-cron.php""#));
    fs::write(dir.path().join("events.jsonl"), &benign).unwrap();
    let o = run(&cfg, &["monitor", "--once"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(!dir.path().join("state/logs/alerts.jsonl").exists());

    let mut storm = benign.clone();
    for i in 0..400 {
        storm.push_str(&event(
            t0 + 120_000 + i * 50,
            &format!(r#""kind":"outbound_msg","protocol":"smtp","dest":"victim{i}@example.net","script_path":"wp-content/uploads/cache.php""#),
        ));
    }
    fs::write(dir.path().join("events.jsonl"), &storm).unwrap();
    let o = run(&cfg, &["monitor", "--once"]);
    assert_eq!(code(&o), 1, "{}{}", stdout(&o), stderr(&o));
    let alerts = fs::read_to_string(dir.path().join("state/logs/alerts.jsonl")).unwrap();
    assert_eq!(alerts.lines().count(), 1);
    assert!(alerts.contains("\"category\":\"mail_storm\""), "{alerts}");

    // A second pass reports it again but does not duplicate the record.
    assert_eq!(code(&run(&cfg, &["monitor", "--once"])), 1);
    let alerts = fs::read_to_string(dir.path().join("state/logs/alerts.jsonl")).unwrap();
    assert_eq!(alerts.lines().count(), 1);
    let o = run(&cfg, &["review", "list"]);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("a-")).count(), 1);
}

#[test]
fn monitor_rejects_tree_reading_past_the_feature_vector() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("events.jsonl"), "").unwrap();
    fs::write(
        dir.path().join("tree.json"),
        r#"{"nodes":[{"node":"split","feature_index":8,"threshold":1.0,"left":1,"right":2},{"node":"leaf","label":"benign","class_counts":{"benign":1}},{"node":"leaf","label":"mail_storm","class_counts":{"mail_storm":1}}],"max_depth":1,"min_leaf":1}"#,
    )
    .unwrap();
    let cfg = write_config(dir.path(), "[monitor]\nevent_log = events.jsonl\ntree = tree.json\n");
    let o = run(&cfg, &["monitor", "--once"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("feature 8"), "{}", stderr(&o));
}

#[test]
fn monitor_reports_sitemap_drift_and_core_touches() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("site");
    fs::create_dir_all(root.join("wp-includes")).unwrap();
    fs::write(root.join("wp-includes/load.php"), "<?php // core\n").unwrap();
    let urls = hostguard_testkit::sitemap::site_urls(3, "https://shop.example", 50);
    fs::write(dir.path().join("sitemap.xml"), hostguard_testkit::sitemap::sitemap_doc(&urls)).unwrap();
    let cfg = write_config(
        dir.path(),
        "[site]\nweb_root = site\nsitemap = sitemap.xml\n[monitor]\nevent_log = events.jsonl\n",
    );
    assert_eq!(code(&run(&cfg, &["--yes", "baseline"])), 0);
    fs::write(dir.path().join("events.jsonl"), "").unwrap();
    assert_eq!(code(&run(&cfg, &["monitor", "--once"])), 0);

    let mut grown = urls.clone();
    grown.extend(hostguard_testkit::sitemap::injected_links(3, 30));
    fs::write(dir.path().join("sitemap.xml"), hostguard_testkit::sitemap::sitemap_doc(&grown)).unwrap();
    fs::write(
        dir.path().join("events.jsonl"),
        event(1_709_287_200_000, r#""kind":"file_touch","script_path":"wp-content/uploads/x.php","touched_path":"wp-includes/load.php""#),
    )
    .unwrap();
    let o = run(&cfg, &["monitor", "--once"]);
    assert_eq!(code(&o), 1);
    let alerts = fs::read_to_string(dir.path().join("state/logs/alerts.jsonl")).unwrap();
    assert!(alerts.contains("\"sitemap_drift\"") && alerts.contains("gained 30 URLs"), "{alerts}");
    assert!(alerts.contains("\"core_tamper\""), "{alerts}");
}

#[test]
fn monitor_follow_picks_up_appended_events() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[monitor]\nevent_log = events.jsonl\nwindow_secs = 60\npoll_ms = 50\n");
    let log = dir.path().join("events.jsonl");
    fs::write(&log, "").unwrap();
    let mut child = hostguard(&cfg)
        .args(["monitor", "--follow"])
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let t0 = 1_709_287_200_000i64;
    let mut f = fs::OpenOptions::new().append(true).open(&log).unwrap();
    for i in 0..150 {
        f.write_all(
            event(t0 + i * 10, &format!(r#""kind":"outbound_msg","protocol":"smtp","dest":"v{i}@example.net","script_path":"spam.php""#))
                .as_bytes(),
        )
        .unwrap();
    }
    // The window closes when a later one starts.
    f.write_all(event(t0 + 61_000, r#""kind":"script_exec","script_path":"index.php","duration_ms":10,"cpu_pct":1.0"#).as_bytes())
        .unwrap();
    drop(f);
    let alerts = dir.path().join("state/logs/alerts.jsonl");
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(20);
    while !alerts.exists() && std::time::Instant::now() < deadline {
        std::thread::sleep(std::time::Duration::from_millis(50));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let text = fs::read_to_string(&alerts).unwrap();
    assert!(text.contains("mail_storm") && text.contains("spam.php"), "{text}");
}

#[test]
fn unblock_removes_known_keys_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(&cfg, &["review", "unblock", "198.51.100.9"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("not found"));
    assert_eq!(code(&run(&cfg, &["review", "unblock", "not-an-ip"])), 2);

    fs::create_dir_all(dir.path().join("state")).unwrap();
    fs::write(
        dir.path().join("state/blacklist.jsonl"),
        "{\"op\":\"mark\",\"key\":\"198.51.100.9|GET|/index.php\"}\n{\"op\":\"mark\",\"key\":\"198.51.100.90|GET|/\"}\n",
    )
    .unwrap();
    let o = run(&cfg, &["review", "unblock", "198.51.100.9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("198.51.100.9|GET|/index.php"));
    assert!(!stdout(&o).contains("198.51.100.90"));
    assert_eq!(code(&run(&cfg, &["review", "unblock", "198.51.100.9"])), 1);
}

#[test]
fn report_tables_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(&cfg, &["report"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("(none)"));
    let csv = fs::read_to_string(dir.path().join("state/reports/per-minute.csv")).unwrap();
    assert_eq!(csv, "minute,blocked,challenged,alerts\n");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("state/reports/summary.json")).unwrap()).unwrap();
    assert!(summary["blocks_by_stage"].as_array().unwrap().iter().all(|r| r["blocked"] == 0 && r["challenged"] == 0));

    // Replay the attack trace into the block log; the offender table must
    // agree with a direct recount.
    let geo = fixtures().join("geo.csv");
    let cfg = write_config(
        dir.path(),
        &format!(
            "geo_table = {}\n[gateway]\nblocked_countries = XA\ncrawler_allowlist = 203.0.113.192/26\n",
            geo.display()
        ),
    );
    let block_log = dir.path().join("state/logs/blocks.jsonl");
    let o = run(
        &cfg,
        &["replay", fixtures().join("trace.jsonl").to_str().unwrap(), "--out", "/dev/null", "--block-log", block_log.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut counts = std::collections::HashMap::<String, usize>::new();
    for l in fs::read_to_string(&block_log).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        *counts.entry(v["source_ip"].as_str().unwrap().to_string()).or_default() += 1;
    }
    let (top_ip, top_n) = counts.iter().max_by_key(|(ip, n)| (**n, std::cmp::Reverse((*ip).clone()))).unwrap();
    let trace = hostguard_testkit::trace::mixed_trace(TRACE_SEED);
    assert_eq!(top_ip, &trace.dominant_offender.to_string());

    let o = run(&cfg, &["report"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let first = out.lines().skip_while(|l| *l != "TOP OFFENDER IPS").nth(1).unwrap();
    let cols: Vec<&str> = first.split_whitespace().collect();
    assert_eq!(cols, [top_ip.as_str(), &top_n.to_string()]);

    // Those records are from 2024, so a one-hour window drops them.
    let o = run(&cfg, &["report", "--since", "1h"]);
    assert!(stdout(&o).contains("(none)"), "{}", stdout(&o));
}
