use std::io::Write;
use std::net::Ipv4Addr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeDelta, Utc};
use hostguard::gateway::dnsbl::stub::{StubAnswer, StubDns};
use hostguard::gateway::{
    Decision, Gateway, GatewayPolicy, GeoTable, HttpRequestRecord, LoginOutcome, Method, Mode, RequestIds, Stage,
    UploadPart, Verdict,
};
use hostguard::signatures::SignatureSet;

const FIREFOX: &str = "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:125.0) Gecko/20100101 Firefox/125.0";

fn t0() -> DateTime<Utc> {
    hostguard::timefmt::parse("2024-03-01T10:00:00.000Z").unwrap()
}

fn get(ip: &str, target: &str, ms: i64) -> HttpRequestRecord {
    HttpRequestRecord::new(ip.parse().unwrap(), Method::Get, target, t0() + TimeDelta::milliseconds(ms))
        .with_header("User-Agent", FIREFOX)
}

fn gateway(policy: GatewayPolicy) -> Gateway {
    Gateway::new(policy, SignatureSet::seed(), Mode::Production)
        .unwrap()
        .with_request_ids(RequestIds::sequence(1))
}

fn expect(v: &Verdict, decision: Decision, stage: Stage, code: &str) {
    assert_eq!((v.decision, v.stage, v.reason_code.as_str()), (decision, stage, code), "{v:?}");
}

#[test]
fn documented_examples() {
    let gw = gateway(GatewayPolicy::default());
    expect(
        &gw.evaluate(&get("203.0.113.7", "/index.php?controller=../../../etc/passwd", 0)),
        Decision::Block,
        Stage::Inclusion,
        "LFI",
    );
    expect(
        &gw.evaluate(&get("203.0.113.8", "/index.php?controller=http://www.virus.com/exploit.txt", 10)),
        Decision::Block,
        Stage::Inclusion,
        "RFI",
    );
    let ok = gw.evaluate(&get("198.51.100.20", "/index.php", 20));
    expect(&ok, Decision::Allow, Stage::Clean, "");
    assert!(ok.evidence.is_empty());

    let mut post = get("198.51.100.21", "/contact.php", 30);
    post.method = Method::Post;
    post.body_params.push(("msg".into(), "eval(base64_decode('ZWNobyAxOw=='));".into()));
    let v = gw.evaluate(&post);
    expect(&v, Decision::Block, Stage::Payload, "PAYLOAD_SIGNATURE");
    assert!(v.evidence.contains(&"signature=php.eval.b64".to_string()), "{v:?}");

    let curl = HttpRequestRecord::new("192.0.2.9".parse().unwrap(), Method::Get, "/", t0()).with_header("User-Agent", "curl/7.68.0");
    expect(&gw.evaluate(&curl), Decision::Block, Stage::Agent, "AGENT_BLOCKED");

    let mut up = get("192.0.2.10", "/upload.php", 40);
    up.method = Method::Post;
    up.upload_parts.push(UploadPart {
        field: "file".into(),
        filename: "shell.php".into(),
        size: 10,
        first_bytes: b"GIF89a....".to_vec(),
    });
    expect(&gw.evaluate(&up), Decision::Block, Stage::Upload, "UPLOAD_EXTENSION");
}

#[test]
fn blocked_requests_are_remembered() {
    let gw = gateway(GatewayPolicy::default());
    let attack = get("203.0.113.7", "/index.php?controller=../../../etc/passwd", 0);
    expect(&gw.evaluate(&attack), Decision::Block, Stage::Inclusion, "LFI");
    // same ip, method and path template, now harmless
    expect(&gw.evaluate(&get("203.0.113.7", "/index.php?page=home", 5)), Decision::Block, Stage::Blacklist, "BLACKLISTED");
    expect(&gw.evaluate(&get("203.0.113.7", "/about.php", 6)), Decision::Allow, Stage::Clean, "");
    gw.blacklist().unblock_ip("203.0.113.7".parse().unwrap()).unwrap();
    expect(&gw.evaluate(&get("203.0.113.7", "/index.php?page=home", 7)), Decision::Allow, Stage::Clean, "");
}

#[test]
fn earliest_failing_stage_wins() {
    let mut p = GatewayPolicy::default();
    p.set("blocked_countries", "XA").unwrap();
    p.set("maintenance_token", "letmein").unwrap();
    let geo = GeoTable::parse("203.0.113.0/24,XA\n").unwrap();

    // every stage from geo on fails for this request
    let composite = |ms: i64| {
        let mut r = HttpRequestRecord::new(
            "203.0.113.50".parse().unwrap(),
            Method::Post,
            "/wp-login.php?f=../../etc/passwd&c=eval(base64_decode($x))",
            t0() + TimeDelta::milliseconds(ms),
        )
        .with_header("User-Agent", "curl/8.0");
        r.upload_parts.push(UploadPart {
            field: "f".into(),
            filename: "x.php".into(),
            size: 5,
            first_bytes: b"<?php".to_vec(),
        });
        r
    };

    let maint = Gateway::new(p.clone(), SignatureSet::seed(), Mode::Maintenance).unwrap().with_geo(geo.clone());
    expect(&maint.evaluate(&composite(0)), Decision::Block, Stage::Maintenance, "MAINTENANCE");

    let gw = gateway(p.clone()).with_geo(geo.clone());
    expect(&gw.evaluate(&composite(0)), Decision::Block, Stage::Geo, "GEO_BLOCKED");

    // peel stages off one at a time
    let gw = gateway(GatewayPolicy::default());
    expect(&gw.evaluate(&composite(0)), Decision::Block, Stage::Agent, "AGENT_BLOCKED");
    let mut r = composite(1).with_header("User-Agent", FIREFOX);
    r.headers.remove(0);
    r.source_ip = "203.0.113.51".parse().unwrap();
    expect(&gw.evaluate(&r), Decision::Block, Stage::Inclusion, "LFI");
    r.source_ip = "203.0.113.52".parse().unwrap();
    r.query_params.remove(0);
    expect(&gw.evaluate(&r), Decision::Block, Stage::Payload, "PAYLOAD_SIGNATURE");
    r.source_ip = "203.0.113.53".parse().unwrap();
    r.query_params.clear();
    expect(&gw.evaluate(&r), Decision::Block, Stage::Upload, "UPLOAD_EXTENSION");
}

#[test]
fn fourth_login_attempt_is_challenged() {
    let gw = gateway(GatewayPolicy::default());
    let login = |ms: i64| {
        let mut r = get("192.0.2.77", "/wp-login.php", ms);
        r.method = Method::Post;
        r.login_outcome = Some(LoginOutcome::Failure);
        r
    };
    for i in 0..3 {
        expect(&gw.evaluate(&login(i * 1000)), Decision::Allow, Stage::Clean, "");
    }
    let v = gw.evaluate(&login(3000));
    expect(&v, Decision::Challenge, Stage::LoginRate, "FAILED_LOGINS");
    let id = v.challenge_id().expect("challenge id").to_string();

    // answering the challenge lets exactly one attempt through
    let answered = login(4000).with_header("X-Hostguard-Challenge", &format!("{id}:{id}"));
    expect(&gw.evaluate(&answered), Decision::Allow, Stage::Clean, "");
    expect(&gw.evaluate(&login(5000)), Decision::Challenge, Stage::LoginRate, "FAILED_LOGINS");
    let v2 = gw.evaluate(&login(6000));
    assert_ne!(v2.challenge_id(), Some(id.as_str()));
}

#[test]
fn rate_threshold_boundary() {
    let gw = gateway(GatewayPolicy::default());
    let verdicts: Vec<Verdict> = (0..201)
        .map(|i| gw.evaluate(&get(&format!("10.0.{}.{}", i / 250, i % 250 + 1), "/", i * 4)))
        .collect();
    assert!(verdicts[..200].iter().all(|v| v.decision == Decision::Allow));
    expect(&verdicts[200], Decision::Challenge, Stage::RequestRate, "RATE_LIMIT");
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(b);
        Ok(b.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[test]
fn non_allow_verdicts_reach_the_block_log() {
    let buf = SharedBuf::default();
    let gw = gateway(GatewayPolicy::default()).with_block_log(Box::new(buf.clone()));
    gw.evaluate(&get("198.51.100.1", "/", 0));
    gw.evaluate(&get("198.51.100.2", "/?x=../../a", 1));
    let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1);
    let rec: hostguard::gateway::BlockLogRecord = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(rec.reason_code, "LFI");
    assert_eq!(rec.source_ip.to_string(), "198.51.100.2");
}

fn dnsbl_policy(stub: &StubDns, fail_open: bool, timeout_ms: u64) -> GatewayPolicy {
    let mut p = GatewayPolicy::default();
    p.set("dnsbl_zones", "bl.test").unwrap();
    p.set("dnsbl_resolver", &stub.addr().to_string()).unwrap();
    p.set("dnsbl_fail_open", if fail_open { "on" } else { "off" }).unwrap();
    p.set("dnsbl_timeout_ms", &timeout_ms.to_string()).unwrap();
    p
}

#[test]
fn reputation_stage() {
    let stub = StubDns::start(StubAnswer::NxDomain).unwrap();
    stub.set("7.113.0.203.bl.test", StubAnswer::A(Ipv4Addr::new(127, 0, 0, 2)));
    let gw = gateway(dnsbl_policy(&stub, true, 1000));
    let v = gw.evaluate(&get("203.0.113.7", "/", 0));
    expect(&v, Decision::Block, Stage::Reputation, "DNSBL_LISTED");
    assert!(v.evidence.contains(&"response=127.0.0.2".to_string()));
    expect(&gw.evaluate(&get("203.0.113.8", "/", 0)), Decision::Allow, Stage::Clean, "");
    // cached: no new query inside the ttl
    let before = stub.queries();
    gw.evaluate(&get("203.0.113.8", "/", 10));
    assert_eq!(stub.queries(), before);
}

#[test]
fn black_holed_resolver_fails_open_quickly() {
    let stub = StubDns::start(StubAnswer::BlackHole).unwrap();
    let gw = gateway(dnsbl_policy(&stub, true, 200));
    let started = Instant::now();
    let v = gw.evaluate(&get("192.0.2.1", "/", 0));
    assert!(started.elapsed() < Duration::from_millis(500), "{:?}", started.elapsed());
    expect(&v, Decision::Allow, Stage::Clean, "");

    let closed = gateway(dnsbl_policy(&stub, false, 200));
    expect(&closed.evaluate(&get("192.0.2.1", "/", 0)), Decision::Challenge, Stage::Reputation, "REPUTATION_UNAVAILABLE");
}

#[test]
fn unreachable_state_store_challenges() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bl.jsonl");
    let store = hostguard::gateway::FileStore::open(&path).unwrap();
    let bl = hostguard::gateway::Blacklist::new(Box::new(store), 1000, 0.01).unwrap();
    let gw = gateway(GatewayPolicy::default()).with_blacklist(bl);
    expect(&gw.evaluate(&get("192.0.2.1", "/?x=../../../a", 0)), Decision::Block, Stage::Inclusion, "LFI");
    std::fs::remove_file(&path).unwrap();
    expect(&gw.evaluate(&get("192.0.2.1", "/", 1)), Decision::Challenge, Stage::Blacklist, "STATE_UNAVAILABLE");
}
