//! DNS blacklist lookups over UDP, plus a fixture-backed resolver standing in
//! for HTTP reputation services.
//!
//! An IPv4 address `a.b.c.d` is looked up as the A record
//! `d.c.b.a.<zone>`; IPv6 addresses use the 32 reversed nibbles. Any answer
//! inside 127.0.0.0/8 means listed, NXDOMAIN or an empty answer means not
//! listed, and timeouts or server errors mean the lookup failed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationResult {
    pub ip: IpAddr,
    pub zone: String,
    pub listed: bool,
    pub response_code: Option<Ipv4Addr>,
    pub latency_ms: u64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryOutcome {
    Listed(Ipv4Addr),
    NotListed,
    /// The zone does not cover this address family.
    Unsupported,
    Failed(String),
}

pub trait ReputationResolver: Send + Sync {
    fn zone(&self) -> &str;
    fn query(&self, ip: IpAddr, timeout: Duration) -> QueryOutcome;
}

/// Runs one lookup and applies the fail-open policy. A failed lookup under
/// fail-closed reports `listed = true` with no response code.
pub fn dnsbl_lookup(
    ip: IpAddr,
    resolver: &dyn ReputationResolver,
    timeout: Duration,
    fail_open: bool,
) -> ReputationResult {
    let started = Instant::now();
    let outcome = resolver.query(ip, timeout);
    let latency_ms = started.elapsed().as_millis() as u64;
    let (listed, response_code, failed) = match outcome {
        QueryOutcome::Listed(code) => (true, Some(code), false),
        QueryOutcome::NotListed | QueryOutcome::Unsupported => (false, None, false),
        QueryOutcome::Failed(reason) => {
            log::warn!(
                "reputation lookup of {ip} in {} failed after {latency_ms} ms: {reason}; failing {}",
                resolver.zone(),
                if fail_open { "open" } else { "closed" }
            );
            (!fail_open, None, true)
        }
    };
    ReputationResult {
        ip,
        zone: resolver.zone().to_string(),
        listed,
        response_code,
        latency_ms,
        failed,
    }
}

pub fn reverse_name(ip: IpAddr, zone: &str) -> String {
    let zone = zone.trim_end_matches('.');
    match ip {
        IpAddr::V4(v4) => {
            let o = v4.octets();
            format!("{}.{}.{}.{}.{zone}", o[3], o[2], o[1], o[0])
        }
        IpAddr::V6(v6) => {
            let mut s = String::with_capacity(64 + zone.len());
            for b in v6.octets().iter().rev() {
                let _ = write!(s, "{:x}.{:x}.", b & 0x0f, b >> 4);
            }
            s.push_str(zone);
            s
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DnsWireError {
    #[error("message truncated")]
    Truncated,
    #[error("name is not encodable: {0}")]
    BadName(String),
    #[error("compression pointer loop")]
    PointerLoop,
    #[error("id mismatch")]
    IdMismatch,
    #[error("not a response")]
    NotResponse,
    #[error("response truncated (TC set)")]
    TruncatedFlag,
}

pub fn build_query(id: u16, name: &str) -> Result<Vec<u8>, DnsWireError> {
    let mut out = Vec::with_capacity(18 + name.len());
    out.extend_from_slice(&id.to_be_bytes());
    out.extend_from_slice(&[0x01, 0x00, 0, 1, 0, 0, 0, 0, 0, 0]);
    let name = name.trim_end_matches('.');
    if name.len() > 253 {
        return Err(DnsWireError::BadName(name.to_string()));
    }
    for label in name.split('.') {
        if label.is_empty() || label.len() > 63 || !label.is_ascii() {
            return Err(DnsWireError::BadName(name.to_string()));
        }
        out.push(label.len() as u8);
        out.extend_from_slice(label.as_bytes());
    }
    out.extend_from_slice(&[0, 0, 1, 0, 1]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnsResponse {
    pub id: u16,
    pub rcode: u8,
    pub answers_a: Vec<Ipv4Addr>,
}

/// Advances past a (possibly compressed) name starting at `pos`.
fn skip_name(msg: &[u8], mut pos: usize) -> Result<usize, DnsWireError> {
    for _ in 0..128 {
        let len = *msg.get(pos).ok_or(DnsWireError::Truncated)?;
        match len {
            0 => return Ok(pos + 1),
            l if l & 0xc0 == 0xc0 => {
                msg.get(pos + 1).ok_or(DnsWireError::Truncated)?;
                return Ok(pos + 2);
            }
            l if l & 0xc0 != 0 => return Err(DnsWireError::BadName("reserved label type".into())),
            l => {
                pos += 1 + l as usize;
                if pos > msg.len() {
                    return Err(DnsWireError::Truncated);
                }
            }
        }
    }
    Err(DnsWireError::PointerLoop)
}

fn be16(msg: &[u8], pos: usize) -> Result<u16, DnsWireError> {
    msg.get(pos..pos + 2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .ok_or(DnsWireError::Truncated)
}

pub fn parse_response(msg: &[u8]) -> Result<DnsResponse, DnsWireError> {
    if msg.len() < 12 {
        return Err(DnsWireError::Truncated);
    }
    let id = be16(msg, 0)?;
    let flags = be16(msg, 2)?;
    if flags & 0x8000 == 0 {
        return Err(DnsWireError::NotResponse);
    }
    if flags & 0x0200 != 0 {
        return Err(DnsWireError::TruncatedFlag);
    }
    let rcode = (flags & 0x000f) as u8;
    let qd = be16(msg, 4)?;
    let an = be16(msg, 6)?;
    let mut pos = 12;
    for _ in 0..qd {
        pos = skip_name(msg, pos)? + 4;
        if pos > msg.len() {
            return Err(DnsWireError::Truncated);
        }
    }
    let mut answers_a = Vec::new();
    for _ in 0..an {
        pos = skip_name(msg, pos)?;
        let rtype = be16(msg, pos)?;
        let class = be16(msg, pos + 2)?;
        let rdlen = be16(msg, pos + 8)? as usize;
        let start = pos + 10;
        let rdata = msg.get(start..start + rdlen).ok_or(DnsWireError::Truncated)?;
        if rtype == 1 && class == 1 && rdlen == 4 {
            answers_a.push(Ipv4Addr::new(rdata[0], rdata[1], rdata[2], rdata[3]));
        }
        pos = start + rdlen;
    }
    Ok(DnsResponse { id, rcode, answers_a })
}

/// Classifies a response for a DNSBL query.
pub fn interpret(resp: &DnsResponse) -> QueryOutcome {
    match resp.rcode {
        0 => resp
            .answers_a
            .iter()
            .find(|a| a.octets()[0] == 127)
            .map_or(QueryOutcome::NotListed, |a| QueryOutcome::Listed(*a)),
        3 => QueryOutcome::NotListed,
        2 => QueryOutcome::Failed("SERVFAIL".into()),
        5 => QueryOutcome::Failed("REFUSED".into()),
        other => QueryOutcome::Failed(format!("rcode {other}")),
    }
}

/// One DNSBL zone queried through a recursive resolver.
#[derive(Debug, Clone)]
pub struct DnsblResolver {
    pub zone: String,
    pub server: SocketAddr,
    pub ipv6: bool,
}

impl ReputationResolver for DnsblResolver {
    fn zone(&self) -> &str {
        &self.zone
    }

    fn query(&self, ip: IpAddr, timeout: Duration) -> QueryOutcome {
        if ip.is_ipv6() && !self.ipv6 {
            return QueryOutcome::Unsupported;
        }
        match udp_query(self.server, &reverse_name(ip, &self.zone), timeout) {
            Ok(resp) => interpret(&resp),
            Err(e) => QueryOutcome::Failed(e),
        }
    }
}

/// Sends one A query and waits at most `timeout` in total for the matching
/// answer; unrelated datagrams are ignored.
pub fn udp_query(server: SocketAddr, name: &str, timeout: Duration) -> Result<DnsResponse, String> {
    let deadline = Instant::now() + timeout;
    let id: u16 = rand::random();
    let query = build_query(id, name).map_err(|e| e.to_string())?;
    let bind: SocketAddr = if server.is_ipv4() {
        (Ipv4Addr::UNSPECIFIED, 0).into()
    } else {
        (std::net::Ipv6Addr::UNSPECIFIED, 0).into()
    };
    let sock = UdpSocket::bind(bind).map_err(|e| e.to_string())?;
    sock.connect(server).map_err(|e| e.to_string())?;
    sock.send(&query).map_err(|e| e.to_string())?;
    let mut buf = [0u8; 1500];
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(format!("timeout after {} ms", timeout.as_millis()));
        }
        sock.set_read_timeout(Some(left)).map_err(|e| e.to_string())?;
        match sock.recv(&mut buf) {
            Ok(n) => match parse_response(&buf[..n]) {
                Ok(r) if r.id == id => return Ok(r),
                Ok(_) | Err(_) => continue,
            },
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                return Err(format!("timeout after {} ms", timeout.as_millis()))
            }
            Err(e) => return Err(e.to_string()),
        }
    }
}

/// Recorded verdicts of an HTTP reputation service, keyed by address.
///
/// Fixture format, one JSON object per line:
/// `{"ip":"198.51.100.9","threat":"SOCIAL_ENGINEERING"}`.
#[derive(Debug, Clone, Default)]
pub struct FixtureResolver {
    pub zone: String,
    pub listed: BTreeMap<IpAddr, String>,
}

#[derive(Deserialize)]
struct FixtureLine {
    ip: IpAddr,
    threat: String,
}

impl FixtureResolver {
    pub fn parse(zone: &str, text: &str) -> Result<Self, String> {
        let mut listed = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let l: FixtureLine = serde_json::from_str(t).map_err(|e| format!("line {}: {e}", i + 1))?;
            listed.insert(l.ip, l.threat);
        }
        Ok(Self {
            zone: zone.to_string(),
            listed,
        })
    }
}

impl ReputationResolver for FixtureResolver {
    fn zone(&self) -> &str {
        &self.zone
    }

    fn query(&self, ip: IpAddr, _timeout: Duration) -> QueryOutcome {
        if self.listed.contains_key(&ip) {
            QueryOutcome::Listed(Ipv4Addr::new(127, 0, 0, 2))
        } else {
            QueryOutcome::NotListed
        }
    }
}

pub mod stub {
    //! Scriptable in-process DNS server for tests and demos.

    use std::collections::HashMap;
    use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;
    use std::time::Duration;

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub enum StubAnswer {
        A(Ipv4Addr),
        NxDomain,
        ServFail,
        /// Never answer.
        BlackHole,
    }

    pub struct StubDns {
        addr: SocketAddr,
        answers: Arc<Mutex<HashMap<String, StubAnswer>>>,
        queries: Arc<AtomicUsize>,
        stop: Arc<AtomicBool>,
        handle: Option<JoinHandle<()>>,
    }

    impl StubDns {
        /// Unknown names get `default`.
        pub fn start(default: StubAnswer) -> std::io::Result<Self> {
            let sock = UdpSocket::bind("127.0.0.1:0")?;
            sock.set_read_timeout(Some(Duration::from_millis(25)))?;
            let addr = sock.local_addr()?;
            let answers: Arc<Mutex<HashMap<String, StubAnswer>>> = Arc::default();
            let queries = Arc::new(AtomicUsize::new(0));
            let stop = Arc::new(AtomicBool::new(false));
            let (a, q, s) = (answers.clone(), queries.clone(), stop.clone());
            let handle = std::thread::spawn(move || {
                let mut buf = [0u8; 512];
                while !s.load(Ordering::Relaxed) {
                    let Ok((n, peer)) = sock.recv_from(&mut buf) else { continue };
                    q.fetch_add(1, Ordering::Relaxed);
                    let Some((id, name, qend)) = parse_question(&buf[..n]) else { continue };
                    let answer = a
                        .lock()
                        .expect("stub map")
                        .get(&name.to_ascii_lowercase())
                        .cloned()
                        .unwrap_or_else(|| default.clone());
                    if let Some(resp) = respond(id, &buf[12..qend], &answer) {
                        let _ = sock.send_to(&resp, peer);
                    }
                }
            });
            Ok(Self {
                addr,
                answers,
                queries,
                stop,
                handle: Some(handle),
            })
        }

        pub fn addr(&self) -> SocketAddr {
            self.addr
        }

        pub fn set(&self, name: &str, answer: StubAnswer) {
            self.answers
                .lock()
                .expect("stub map")
                .insert(name.trim_end_matches('.').to_ascii_lowercase(), answer);
        }

        pub fn queries(&self) -> usize {
            self.queries.load(Ordering::Relaxed)
        }
    }

    impl Drop for StubDns {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::Relaxed);
            if let Some(h) = self.handle.take() {
                let _ = h.join();
            }
        }
    }

    fn parse_question(msg: &[u8]) -> Option<(u16, String, usize)> {
        if msg.len() < 12 || u16::from_be_bytes([msg[4], msg[5]]) != 1 {
            return None;
        }
        let id = u16::from_be_bytes([msg[0], msg[1]]);
        let mut pos = 12;
        let mut labels = Vec::new();
        loop {
            let len = *msg.get(pos)? as usize;
            if len == 0 {
                pos += 1;
                break;
            }
            if len > 63 {
                return None;
            }
            labels.push(String::from_utf8_lossy(msg.get(pos + 1..pos + 1 + len)?).into_owned());
            pos += 1 + len;
        }
        msg.get(pos..pos + 4)?;
        Some((id, labels.join("."), pos + 4))
    }

    fn respond(id: u16, question: &[u8], answer: &StubAnswer) -> Option<Vec<u8>> {
        let (rcode, addr) = match answer {
            StubAnswer::A(a) => (0u8, Some(*a)),
            StubAnswer::NxDomain => (3, None),
            StubAnswer::ServFail => (2, None),
            StubAnswer::BlackHole => return None,
        };
        let mut out = Vec::new();
        out.extend_from_slice(&id.to_be_bytes());
        out.extend_from_slice(&[0x81, 0x80 | rcode, 0, 1, 0, u8::from(addr.is_some()), 0, 0, 0, 0]);
        out.extend_from_slice(question);
        if let Some(a) = addr {
            out.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 0, 60, 0, 4]);
            out.extend_from_slice(&a.octets());
        }
        Some(out)
    }
}
