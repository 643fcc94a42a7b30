use std::collections::BTreeSet;
use std::time::Instant;

use hostguard::signatures::{scan_tree, ScanLimits, Severity, SignatureSet, ThreatClass};
use hostguard_testkit::tree::{benign_tree, plant_samples, BENIGN_FILES};

#[test]
fn benign_tree_is_clean_and_planted_samples_are_found() {
    let dir = tempfile::tempdir().unwrap();
    let benign = benign_tree(dir.path(), 11).unwrap();
    assert_eq!(benign.len(), BENIGN_FILES);
    let set = SignatureSet::seed();

    let clean = scan_tree(dir.path(), &set, &ScanLimits::default()).unwrap();
    assert!(clean.is_clean(), "{:#?}", clean.hits.iter().take(5).collect::<Vec<_>>());
    assert!(clean.hits.iter().all(|h| h.severity < Severity::Critical));

    let planted = plant_samples(dir.path(), &benign, 11).unwrap();
    assert_eq!(planted.len(), 20);
    for class in [ThreatClass::Webshell, ThreatClass::Miner, ThreatClass::PhishingRedirect, ThreatClass::SpamMailer] {
        assert_eq!(planted.iter().filter(|p| p.class == class).count(), 5, "{class:?}");
    }
    for name in ["functions.php", "libraries.php", "jquery.min.js"] {
        assert!(planted.iter().any(|p| p.rel_path.ends_with(name)), "{name}");
    }
    let started = Instant::now();
    let report = scan_tree(dir.path(), &set, &ScanLimits::default()).unwrap();
    let elapsed = started.elapsed();
    let hit: BTreeSet<&str> = report.hit_paths().into_iter().collect();
    let want: BTreeSet<&str> = planted.iter().map(|p| p.rel_path.as_str()).collect();
    assert_eq!(hit, want);
    assert!(elapsed.as_secs_f64() < 5.0, "{elapsed:?}");
}

#[test]
fn benign_trees_differ_by_seed_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(benign_tree(a.path(), 3).unwrap(), benign_tree(b.path(), 3).unwrap());
    for seed in [1, 2, 99] {
        let d = tempfile::tempdir().unwrap();
        benign_tree(d.path(), seed).unwrap();
        let r = scan_tree(d.path(), &SignatureSet::seed(), &ScanLimits::default()).unwrap();
        assert!(r.is_clean(), "seed {seed}: {:?}", r.hit_paths());
    }
}
