mod common;

use std::fs;

use common::*;
use hostguard::gateway::Verdict;
use hostguard_testkit::trace::{mixed_trace, GEO_TABLE};

#[test]
fn bundled_fixtures_match_their_generators() {
    let trace = mixed_trace(TRACE_SEED).to_jsonl();
    let path = fixtures().join("trace.jsonl");
    if bless() {
        fs::write(&path, &trace).unwrap();
    }
    assert_eq!(fs::read_to_string(&path).unwrap(), trace, "run with HOSTGUARD_BLESS=1 to regenerate");
    assert_eq!(fs::read_to_string(fixtures().join("geo.csv")).unwrap(), GEO_TABLE);
}

#[test]
fn bundled_trace_matches_golden() {
    let cfg = fixtures().join("replay.ini");
    let trace = fixtures().join("trace.jsonl");
    let golden = fixtures().join("golden.jsonl");
    if bless() {
        let o = run(&cfg, &["replay", trace.to_str().unwrap(), "--out", golden.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = run(&cfg, &["replay", trace.to_str().unwrap(), "--golden", golden.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));

    // The golden file is audited against the trace's labelled cases.
    let t = mixed_trace(TRACE_SEED);
    let verdicts: Vec<Verdict> = fs::read_to_string(&golden)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(verdicts.len(), t.requests.len());
    for c in &t.cases {
        let v = &verdicts[c.index];
        assert_eq!((v.decision, v.stage, v.reason_code.as_str()), (c.decision, c.stage, c.reason), "{}", c.name);
    }
}

#[test]
fn replay_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("replay.ini");
    let trace = fixtures().join("trace.jsonl");
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("v{i}.jsonl"));
            let o = run(&cfg, &["replay", trace.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn tampered_golden_reports_first_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let golden = fs::read_to_string(fixtures().join("golden.jsonl")).unwrap();
    let mut lines: Vec<String> = golden.lines().map(String::from).collect();
    lines[41] = lines[41].replacen("\"allow\"", "\"block\"", 1);
    let tampered = dir.path().join("tampered.jsonl");
    fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let cfg = fixtures().join("replay.ini");
    let trace = fixtures().join("trace.jsonl");
    let o = run(&cfg, &["replay", trace.to_str().unwrap(), "--golden", tampered.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("at line 42"), "{}", stdout(&o));
}

#[test]
fn empty_trace_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = run(&fixtures().join("replay.ini"), &["replay", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json\n").unwrap();
    let o = run(&fixtures().join("replay.ini"), &["replay", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}
