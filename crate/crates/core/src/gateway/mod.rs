//! Layered request filtering.
//!
//! Stages run in a fixed order and the first one that objects decides the
//! verdict:
//!
//! maintenance, blacklist, reputation, geo, agent, inclusion, payload,
//! upload, login throttling, request rate.
//!
//! Requests blocked at inclusion, payload or upload are remembered in the
//! blacklist under their canonical key, so repeats stop at the second stage
//! without being re-inspected.

pub mod access;
pub mod agent;
pub mod blacklist;
pub mod challenge;
pub mod dnsbl;
pub mod geo;
pub mod inclusion;
pub mod login;
pub mod maintenance;
pub mod multipart;
pub mod policy;
pub mod rate;
pub mod replay;
pub mod request;
pub mod upload;
pub mod verdict;
pub mod warning;

use std::collections::HashMap;
use std::io::Write;
use std::net::IpAddr;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signatures::{scan_content, SignatureSet};

pub use access::{parse_access_rules, AccessParseError, AccessRules};
pub use agent::agent_allowed;
pub use blacklist::{Blacklist, BlacklistError, ExactStore, FileStore, MemoryStore, StoreError};
pub use challenge::{ChallengeDecision, ChallengeKind, ChallengeProvider, ChallengeTrigger, EchoChallenge};
pub use dnsbl::{dnsbl_lookup, DnsblResolver, FixtureResolver, QueryOutcome, ReputationResolver, ReputationResult};
pub use geo::{geo_allow, GeoTable, GeoTableError};
pub use inclusion::inclusion_check;
pub use login::LoginTracker;
pub use maintenance::{maintenance_gate, MaintenanceTokenUnset, Mode};
pub use policy::{GatewayPolicy, GatewayPolicyError, RateScope};
pub use rate::RateTracker;
pub use replay::{replay, ReplayError, ReplayStats};
pub use request::{HttpRequestRecord, LoginOutcome, Method, UploadPart};
pub use upload::upload_check;
pub use verdict::{Decision, RequestId, RequestIds, Stage, Verdict};
pub use warning::render_warning;

/// Why a stage stopped a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flag {
    pub decision: Decision,
    pub reason_code: &'static str,
    pub evidence: Vec<String>,
}

impl Flag {
    pub fn block(reason_code: &'static str, evidence: Vec<String>) -> Self {
        Self {
            decision: Decision::Block,
            reason_code,
            evidence,
        }
    }

    pub fn challenge(reason_code: &'static str, evidence: Vec<String>) -> Self {
        Self {
            decision: Decision::Challenge,
            reason_code,
            evidence,
        }
    }
}

pub type StageResult = Result<(), Flag>;

const CLIP_CHARS: usize = 120;

/// Bounds attacker-controlled text before it lands in evidence.
pub(crate) fn clip(s: &str) -> String {
    match s.char_indices().nth(CLIP_CHARS) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    MaintenanceTokenUnset(#[from] MaintenanceTokenUnset),
    #[error("dnsbl_zones is set but dnsbl_resolver is not")]
    NoResolver,
    #[error(transparent)]
    Blacklist(#[from] BlacklistError),
}

/// One line of the block log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLogRecord {
    #[serde(with = "crate::timefmt::rfc3339_ms")]
    pub at: DateTime<Utc>,
    pub request_id: RequestId,
    pub source_ip: IpAddr,
    pub method: Method,
    pub path: String,
    pub decision: Decision,
    pub stage: Stage,
    pub reason_code: String,
    pub evidence: Vec<String>,
}

const CACHE_SWEEP_AT: usize = 10_000;

type ReputationCache = HashMap<(IpAddr, usize), (ReputationResult, i64)>;

pub struct Gateway {
    policy: GatewayPolicy,
    sigs: SignatureSet,
    mode: Mode,
    geo: GeoTable,
    resolvers: Vec<Box<dyn ReputationResolver>>,
    challenges: Box<dyn ChallengeProvider>,
    ids: Mutex<RequestIds>,
    block_log: Option<Mutex<Box<dyn Write + Send>>>,
    blacklist: Blacklist,
    login: LoginTracker,
    rate: RateTracker,
    reputation_cache: Mutex<ReputationCache>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("resolvers", &self.resolvers.len())
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// In-memory blacklist, echo challenges and random request ids; DNSBL
    /// zones from the policy go through `dnsbl_resolver`.
    pub fn new(policy: GatewayPolicy, sigs: SignatureSet, mode: Mode) -> Result<Self, GatewayError> {
        if mode == Mode::Maintenance && policy.maintenance_token.is_none() {
            return Err(MaintenanceTokenUnset.into());
        }
        let mut resolvers: Vec<Box<dyn ReputationResolver>> = Vec::new();
        if !policy.dnsbl_zones.is_empty() {
            let server = policy.dnsbl_resolver.ok_or(GatewayError::NoResolver)?;
            for z in &policy.dnsbl_zones {
                resolvers.push(Box::new(DnsblResolver {
                    zone: z.clone(),
                    server,
                    ipv6: policy.dnsbl_ipv6_zones.contains(z),
                }));
            }
        }
        let blacklist = Blacklist::in_memory(policy.bloom_expected, policy.bloom_fp_rate)?;
        Ok(Self {
            policy,
            sigs,
            mode,
            geo: GeoTable::default(),
            resolvers,
            challenges: Box::new(EchoChallenge::new()),
            ids: Mutex::new(RequestIds::Random),
            block_log: None,
            blacklist,
            login: LoginTracker::new(),
            rate: RateTracker::new(),
            reputation_cache: Mutex::default(),
        })
    }

    pub fn with_geo(mut self, geo: GeoTable) -> Self {
        self.geo = geo;
        self
    }

    pub fn with_resolver(mut self, r: Box<dyn ReputationResolver>) -> Self {
        self.resolvers.push(r);
        self
    }

    pub fn with_challenges(mut self, c: Box<dyn ChallengeProvider>) -> Self {
        self.challenges = c;
        self
    }

    pub fn with_request_ids(mut self, ids: RequestIds) -> Self {
        self.ids = Mutex::new(ids);
        self
    }

    pub fn with_block_log(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.block_log = Some(Mutex::new(sink));
        self
    }

    pub fn with_blacklist(mut self, b: Blacklist) -> Self {
        self.blacklist = b;
        self
    }

    pub fn policy(&self) -> &GatewayPolicy {
        &self.policy
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn blacklist(&self) -> &Blacklist {
        &self.blacklist
    }

    pub fn challenges(&self) -> &dyn ChallengeProvider {
        self.challenges.as_ref()
    }

    pub fn is_login_request(&self, req: &HttpRequestRecord) -> bool {
        req.method == Method::Post && self.policy.login_paths.iter().any(|p| *p == req.path)
    }

    /// For outcomes known only after the upstream answered.
    pub fn record_login_outcome(&self, ip: IpAddr, outcome: LoginOutcome, at: DateTime<Utc>) {
        self.login
            .record(ip, outcome, at.timestamp_millis(), self.login_window_ms());
    }

    fn login_window_ms(&self) -> i64 {
        i64::try_from(self.policy.login_window.as_millis()).unwrap_or(i64::MAX)
    }

    fn next_id(&self) -> RequestId {
        self.ids.lock().unwrap_or_else(|e| e.into_inner()).next_id()
    }

    pub fn evaluate(&self, req: &HttpRequestRecord) -> Verdict {
        let request_id = self.next_id();
        let verdict = match self.run(req) {
            Ok(()) => Verdict {
                request_id,
                decision: Decision::Allow,
                stage: Stage::Clean,
                reason_code: String::new(),
                evidence: Vec::new(),
            },
            Err((stage, flag)) => Verdict {
                request_id,
                decision: flag.decision,
                stage,
                reason_code: flag.reason_code.to_string(),
                evidence: flag.evidence,
            },
        };
        if verdict.decision != Decision::Allow {
            self.log_block(req, &verdict);
        }
        verdict
    }

    fn log_block(&self, req: &HttpRequestRecord, v: &Verdict) {
        let Some(sink) = &self.block_log else { return };
        let rec = BlockLogRecord {
            at: req.received_at,
            request_id: v.request_id,
            source_ip: req.source_ip,
            method: req.method,
            path: clip(&req.path),
            decision: v.decision,
            stage: v.stage,
            reason_code: v.reason_code.clone(),
            evidence: v.evidence.clone(),
        };
        let mut line = serde_json::to_string(&rec).expect("block record serializes");
        line.push('\n');
        let mut w = sink.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = w.write_all(line.as_bytes()).and_then(|_| w.flush()) {
            log::error!("block log write failed: {e}");
        }
    }

    fn run(&self, req: &HttpRequestRecord) -> Result<(), (Stage, Flag)> {
        let at = |stage: Stage| move |f: Flag| (stage, f);
        let p = &self.policy;

        maintenance_gate(req, self.mode, p)
            .unwrap_or_else(|_| Err(Flag::block("MAINTENANCE", vec!["maintenance_token=unset".into()])))
            .map_err(at(Stage::Maintenance))?;

        let key = req.canonical_key();
        match self.blacklist.hit(&key) {
            Ok(false) => {}
            Ok(true) => return Err((Stage::Blacklist, Flag::block("BLACKLISTED", vec![format!("key={}", clip(&key))]))),
            Err(e) => {
                log::error!("blacklist lookup failed: {e}");
                return Err((
                    Stage::Blacklist,
                    Flag::challenge("STATE_UNAVAILABLE", vec![format!("error={}", clip(&e.to_string()))]),
                ));
            }
        }

        self.reputation(req).map_err(at(Stage::Reputation))?;
        geo_allow(req.source_ip, &self.geo, p).map_err(at(Stage::Geo))?;
        agent_allowed(req.user_agent(), p).map_err(at(Stage::Agent))?;
        inclusion_check(req.all_params()).map_err(|f| self.remember(req, Stage::Inclusion, f))?;
        self.payload(req).map_err(|f| self.remember(req, Stage::Payload, f))?;
        upload_check(&req.upload_parts, p).map_err(|f| self.remember(req, Stage::Upload, f))?;
        self.throttle(req)
    }

    fn remember(&self, req: &HttpRequestRecord, stage: Stage, mut flag: Flag) -> (Stage, Flag) {
        if let Err(e) = self.blacklist.mark(&req.canonical_key()) {
            log::error!("could not blacklist {}: {e}", req.canonical_key());
            flag.evidence.push("blacklist_mark=failed".into());
        }
        (stage, flag)
    }

    fn reputation(&self, req: &HttpRequestRecord) -> StageResult {
        if self.resolvers.is_empty() {
            return Ok(());
        }
        let ip = req.source_ip;
        let now = req.received_at.timestamp_millis();
        let mut results: Vec<Option<ReputationResult>> = {
            let cache = self.reputation_cache.lock().unwrap_or_else(|e| e.into_inner());
            (0..self.resolvers.len())
                .map(|i| cache.get(&(ip, i)).filter(|(_, exp)| *exp > now).map(|(r, _)| r.clone()))
                .collect()
        };
        let missing: Vec<usize> = (0..results.len()).filter(|i| results[*i].is_none()).collect();
        let (timeout, fail_open) = (self.policy.dnsbl_timeout, self.policy.dnsbl_fail_open);
        let fresh: Vec<(usize, ReputationResult)> = match missing.as_slice() {
            [] => Vec::new(),
            [i] => vec![(*i, dnsbl_lookup(ip, self.resolvers[*i].as_ref(), timeout, fail_open))],
            many => std::thread::scope(|s| {
                let handles: Vec<_> = many
                    .iter()
                    .map(|&i| {
                        let r = self.resolvers[i].as_ref();
                        (i, s.spawn(move || dnsbl_lookup(ip, r, timeout, fail_open)))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|(i, h)| {
                        let res = h.join().unwrap_or_else(|_| ReputationResult {
                            ip,
                            zone: self.resolvers[i].zone().to_string(),
                            listed: !fail_open,
                            response_code: None,
                            latency_ms: 0,
                            failed: true,
                        });
                        (i, res)
                    })
                    .collect()
            }),
        };
        if !fresh.is_empty() {
            let ttl = i64::try_from(self.policy.dnsbl_cache_ttl.as_millis()).unwrap_or(i64::MAX);
            let mut cache = self.reputation_cache.lock().unwrap_or_else(|e| e.into_inner());
            if cache.len() > CACHE_SWEEP_AT {
                cache.retain(|_, (_, exp)| *exp > now);
            }
            for (i, r) in fresh {
                if !r.failed && ttl > 0 {
                    cache.insert((ip, i), (r.clone(), now.saturating_add(ttl)));
                }
                results[i] = Some(r);
            }
        }
        let results: Vec<ReputationResult> = results.into_iter().flatten().collect();
        if let Some(r) = results.iter().find(|r| r.listed && !r.failed) {
            let code = r.response_code.map(|c| c.to_string()).unwrap_or_default();
            return Err(Flag::block(
                "DNSBL_LISTED",
                vec![format!("zone={}", r.zone), format!("response={code}")],
            ));
        }
        if let Some(r) = results.iter().find(|r| r.listed && r.failed) {
            return Err(Flag::challenge(
                "REPUTATION_UNAVAILABLE",
                vec![format!("zone={}", r.zone), "lookup=failed".into()],
            ));
        }
        Ok(())
    }

    fn payload(&self, req: &HttpRequestRecord) -> StageResult {
        for (origin, name, value) in req.all_params() {
            let tag = format!("{origin}:{}", clip(name));
            for form in inclusion::decoded_forms(value) {
                let hit = scan_content(form.as_bytes(), &self.sigs, &tag)
                    .into_iter()
                    .find(|h| h.severity >= self.policy.payload_min_severity);
                if let Some(h) = hit {
                    return Err(Flag::block(
                        "PAYLOAD_SIGNATURE",
                        vec![
                            format!("param={tag}"),
                            format!("signature={}", h.signature_id),
                            format!("match={}", clip(&h.matched_excerpt)),
                        ],
                    ));
                }
            }
        }
        Ok(())
    }

    /// A solved challenge presented in [`challenge::ANSWER_HEADER`].
    fn solved_challenge(&self, req: &HttpRequestRecord) -> bool {
        req.header(challenge::ANSWER_HEADER)
            .and_then(|v| v.trim().rsplit_once(':'))
            .is_some_and(|(id, answer)| self.challenges.verify(id, answer))
    }

    fn throttle(&self, req: &HttpRequestRecord) -> Result<(), (Stage, Flag)> {
        let p = &self.policy;
        let now = req.received_at.timestamp_millis();
        let key = match p.rate_scope {
            RateScope::SiteWide => None,
            RateScope::PerIp => Some(req.source_ip),
        };
        let over_rate = self.rate.note_rate(key, now, p.rate_threshold);
        let solved = (over_rate || self.is_login_request(req)) && self.solved_challenge(req);

        if self.is_login_request(req) {
            let window = self.login_window_ms();
            let required = if solved {
                if let Some(o) = req.login_outcome {
                    self.login.record(req.source_ip, o, now, window);
                }
                false
            } else {
                self.login
                    .note_login(req.source_ip, req.login_outcome, now, window, p.failed_login_threshold)
            };
            if required {
                let failures = self.login.failures(req.source_ip, now, window);
                return Err((Stage::LoginRate, self.challenge(ChallengeTrigger::FailedLogins, format!("failures={failures}"))));
            }
        }
        if over_rate && !solved {
            let count = self.rate.current(key, now);
            return Err((Stage::RequestRate, self.challenge(ChallengeTrigger::Rate, format!("window_count={count}"))));
        }
        Ok(())
    }

    fn challenge(&self, trigger: ChallengeTrigger, detail: String) -> Flag {
        let decision = ChallengeDecision {
            required: true,
            kind: ChallengeKind::Captcha,
            challenge_id: Some(self.challenges.issue(trigger)),
            trigger,
        };
        let code = match trigger {
            ChallengeTrigger::FailedLogins => "FAILED_LOGINS",
            ChallengeTrigger::Rate => "RATE_LIMIT",
        };
        Flag::challenge(
            code,
            vec![
                format!("challenge_id={}", decision.challenge_id.unwrap_or_default()),
                format!("trigger={}", trigger.as_str()),
                detail,
            ],
        )
    }
}
