use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::time::Duration;

use ipnet::IpNet;
use regex::{Regex, RegexBuilder};
use thiserror::Error;

use crate::ini::{split_list, truthy};
use crate::signatures::Severity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateScope {
    SiteWide,
    PerIp,
}

#[derive(Debug, Clone)]
pub struct GatewayPolicy {
    pub failed_login_threshold: u32,
    /// Requests per second.
    pub rate_threshold: u32,
    pub rate_scope: RateScope,
    pub blocked_agent_patterns: Vec<Regex>,
    pub banned_upload_extensions: BTreeSet<String>,
    /// ISO 3166 alpha-2, uppercase.
    pub blocked_countries: BTreeSet<String>,
    pub crawler_allowlist: Vec<IpNet>,
    pub dnsbl_zones: Vec<String>,
    /// Zones that publish IPv6 listings; IPv6 clients skip the others.
    pub dnsbl_ipv6_zones: BTreeSet<String>,
    pub dnsbl_fail_open: bool,
    pub dnsbl_resolver: Option<SocketAddr>,
    pub dnsbl_timeout: Duration,
    /// How long a reputation answer is reused for the same address.
    pub dnsbl_cache_ttl: Duration,
    pub maintenance_token: Option<String>,
    pub login_window: Duration,
    /// Paths whose POSTs count as login attempts.
    pub login_paths: Vec<String>,
    /// Signature hits below this severity do not block request parameters.
    pub payload_min_severity: Severity,
    pub bloom_expected: u64,
    pub bloom_fp_rate: f64,
}

pub const DEFAULT_AGENT_PATTERNS: [&str; 4] = [r"\bcurl\b", r"\bwget\b", r"python-requests", r"libwww"];

pub fn agent_regex(p: &str) -> Result<Regex, regex::Error> {
    RegexBuilder::new(p).case_insensitive(true).size_limit(1 << 20).build()
}

impl Default for GatewayPolicy {
    fn default() -> Self {
        Self {
            failed_login_threshold: 3,
            rate_threshold: 200,
            rate_scope: RateScope::SiteWide,
            blocked_agent_patterns: DEFAULT_AGENT_PATTERNS
                .iter()
                .map(|p| agent_regex(p).expect("default pattern compiles"))
                .collect(),
            banned_upload_extensions: ["php", "php3", "php4", "php5", "phtml", "exe", "sh", "pl", "cgi"]
                .map(String::from)
                .into(),
            blocked_countries: BTreeSet::new(),
            crawler_allowlist: Vec::new(),
            dnsbl_zones: Vec::new(),
            dnsbl_ipv6_zones: BTreeSet::new(),
            dnsbl_fail_open: true,
            dnsbl_resolver: None,
            dnsbl_timeout: Duration::from_millis(1000),
            dnsbl_cache_ttl: Duration::from_secs(600),
            maintenance_token: None,
            login_window: Duration::from_secs(900),
            login_paths: ["/wp-login.php", "/administrator/index.php", "/user/login"]
                .map(String::from)
                .to_vec(),
            payload_min_severity: Severity::High,
            bloom_expected: 100_000,
            bloom_fp_rate: 0.001,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GatewayPolicyError {
    #[error("unknown gateway key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
}

/// A syntactically valid DNS name: labels of 1..=63 letters, digits and
/// inner hyphens, 253 characters at most.
pub fn valid_zone(z: &str) -> bool {
    let z = z.strip_suffix('.').unwrap_or(z);
    !z.is_empty()
        && z.len() <= 253
        && z.split('.').all(|l| {
            !l.is_empty()
                && l.len() <= 63
                && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
                && !l.starts_with('-')
                && !l.ends_with('-')
        })
}

impl GatewayPolicy {
    pub const KEYS: [&'static str; 19] = [
        "failed_login_threshold",
        "rate_threshold",
        "rate_scope",
        "blocked_agent_patterns",
        "banned_upload_extensions",
        "blocked_countries",
        "crawler_allowlist",
        "dnsbl_zones",
        "dnsbl_ipv6_zones",
        "dnsbl_fail_open",
        "dnsbl_resolver",
        "dnsbl_timeout_ms",
        "dnsbl_cache_secs",
        "maintenance_token",
        "login_window",
        "login_paths",
        "payload_min_severity",
        "bloom_expected",
        "bloom_fp_rate",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), GatewayPolicyError> {
        let invalid = |reason: String| GatewayPolicyError::InvalidValue {
            key: key.to_string(),
            reason,
        };
        let positive = |v: &str| -> Result<u64, GatewayPolicyError> {
            v.trim()
                .parse::<u64>()
                .ok()
                .filter(|n| *n >= 1)
                .ok_or_else(|| invalid(format!("expected a positive integer, got {v:?}")))
        };
        let v = value.trim();
        match key {
            "failed_login_threshold" => {
                self.failed_login_threshold = u32::try_from(positive(v)?).map_err(|e| invalid(e.to_string()))?
            }
            "rate_threshold" => self.rate_threshold = u32::try_from(positive(v)?).map_err(|e| invalid(e.to_string()))?,
            "rate_scope" => {
                self.rate_scope = match v {
                    "site_wide" => RateScope::SiteWide,
                    "per_ip" => RateScope::PerIp,
                    _ => return Err(invalid("expected site_wide or per_ip".into())),
                }
            }
            "blocked_agent_patterns" => {
                let mut pats = Vec::new();
                for p in split_list(v) {
                    pats.push(agent_regex(&p).map_err(|e| invalid(format!("{p:?}: {e}")))?);
                }
                self.blocked_agent_patterns = pats;
            }
            "banned_upload_extensions" => {
                self.banned_upload_extensions = split_list(v)
                    .into_iter()
                    .map(|e| e.trim_start_matches('.').to_ascii_lowercase())
                    .collect()
            }
            "blocked_countries" => {
                let mut set = BTreeSet::new();
                for c in split_list(v) {
                    if c.len() != 2 || !c.bytes().all(|b| b.is_ascii_alphabetic()) {
                        return Err(invalid(format!("{c:?} is not an ISO 3166 alpha-2 code")));
                    }
                    set.insert(c.to_ascii_uppercase());
                }
                self.blocked_countries = set;
            }
            "crawler_allowlist" => {
                let mut nets = Vec::new();
                for c in split_list(v) {
                    nets.push(
                        c.parse::<IpNet>()
                            .map_err(|e| invalid(format!("{c:?}: {e}")))?
                            .trunc(),
                    );
                }
                self.crawler_allowlist = nets;
            }
            "dnsbl_zones" => {
                let zones = split_list(v);
                if let Some(bad) = zones.iter().find(|z| !valid_zone(z)) {
                    return Err(invalid(format!("{bad:?} is not a DNS name")));
                }
                self.dnsbl_zones = zones
                    .into_iter()
                    .map(|z| z.trim_end_matches('.').to_ascii_lowercase())
                    .collect();
            }
            "dnsbl_ipv6_zones" => {
                self.dnsbl_ipv6_zones = split_list(v)
                    .into_iter()
                    .map(|z| z.trim_end_matches('.').to_ascii_lowercase())
                    .collect()
            }
            "dnsbl_fail_open" => self.dnsbl_fail_open = truthy(v),
            "dnsbl_resolver" => {
                self.dnsbl_resolver = if v.is_empty() {
                    None
                } else {
                    Some(v.parse().map_err(|_| invalid(format!("{v:?} is not ip:port")))?)
                }
            }
            "dnsbl_timeout_ms" => self.dnsbl_timeout = Duration::from_millis(positive(v)?),
            "dnsbl_cache_secs" => {
                self.dnsbl_cache_ttl = Duration::from_secs(
                    v.parse().map_err(|_| invalid(format!("expected seconds, got {v:?}")))?,
                )
            }
            "maintenance_token" => {
                self.maintenance_token = if v.is_empty() { None } else { Some(v.to_string()) }
            }
            "login_window" => self.login_window = Duration::from_secs(positive(v)?),
            "login_paths" => self.login_paths = split_list(v),
            "payload_min_severity" => {
                self.payload_min_severity = v
                    .parse()
                    .map_err(|_| invalid("expected low, medium, high or critical".into()))?
            }
            "bloom_expected" => self.bloom_expected = positive(v)?,
            "bloom_fp_rate" => {
                self.bloom_fp_rate = v
                    .parse::<f64>()
                    .ok()
                    .filter(|p| *p > 0.0 && *p < 1.0)
                    .ok_or_else(|| invalid("expected a probability in (0, 1)".into()))?
            }
            other => return Err(GatewayPolicyError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let p = GatewayPolicy::default();
        assert_eq!(p.failed_login_threshold, 3);
        assert_eq!(p.rate_threshold, 200);
        assert_eq!(p.rate_scope, RateScope::SiteWide);
        assert!(p.dnsbl_fail_open);
        assert_eq!(p.login_window, Duration::from_secs(900));
        assert_eq!(p.banned_upload_extensions.len(), 9);
    }

    #[test]
    fn setters_validate() {
        let mut p = GatewayPolicy::default();
        assert!(p.set("rate_threshold", "0").is_err());
        assert!(p.set("crawler_allowlist", "66.249.64.0/19, nonsense").is_err());
        p.set("crawler_allowlist", "66.249.64.0/19, 2001:4860:4801::/48").unwrap();
        assert_eq!(p.crawler_allowlist.len(), 2);
        assert!(p.set("dnsbl_zones", "zen.spamhaus.org, bad_zone").is_err());
        p.set("dnsbl_zones", "zen.spamhaus.org., dnsbl.tornevall.org").unwrap();
        assert_eq!(p.dnsbl_zones, vec!["zen.spamhaus.org", "dnsbl.tornevall.org"]);
        assert!(p.set("blocked_countries", "XX1").is_err());
        p.set("blocked_countries", "cn, ru").unwrap();
        assert!(p.blocked_countries.contains("CN"));
        assert_eq!(p.set("rate_scop", "x"), Err(GatewayPolicyError::UnknownKey("rate_scop".into())));
    }
}
