//! Country lookup over a range table of `cidr,iso2` lines.

use std::net::IpAddr;

use ipnet::IpNet;
use thiserror::Error;

use super::policy::GatewayPolicy;
use super::{Flag, StageResult};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeoTableError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {cidr} overlaps an earlier range")]
    Overlap { line: usize, cidr: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GeoTable {
    v4: Vec<(u32, u32, [u8; 2])>,
    v6: Vec<(u128, u128, [u8; 2])>,
}

struct Pending<T> {
    start: T,
    end: T,
    code: [u8; 2],
    line: usize,
    cidr: String,
}

fn finish<T: Ord + Copy>(mut p: Vec<Pending<T>>) -> Result<Vec<(T, T, [u8; 2])>, GeoTableError> {
    p.sort_by_key(|r| (r.start, r.line));
    if let Some(w) = p.windows(2).find(|w| w[1].start <= w[0].end) {
        let later = if w[0].line > w[1].line { &w[0] } else { &w[1] };
        return Err(GeoTableError::Overlap {
            line: later.line,
            cidr: later.cidr.clone(),
        });
    }
    Ok(p.into_iter().map(|r| (r.start, r.end, r.code)).collect())
}

impl GeoTable {
    /// Blank lines and `#` comments are skipped. Input need not be sorted,
    /// but ranges may not overlap.
    pub fn parse(text: &str) -> Result<Self, GeoTableError> {
        let mut v4 = Vec::new();
        let mut v6 = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let err = |reason: String| GeoTableError::Parse { line, reason };
            let (cidr, cc) = l.split_once(',').ok_or_else(|| err("expected cidr,iso2".into()))?;
            let cidr = cidr.trim().to_string();
            let net: IpNet = cidr.parse().map_err(|e| err(format!("{cidr:?}: {e}")))?;
            let cc = cc.trim().as_bytes();
            if cc.len() != 2 || !cc.iter().all(u8::is_ascii_alphabetic) {
                return Err(err(format!("{:?} is not an alpha-2 country code", String::from_utf8_lossy(cc))));
            }
            let code = [cc[0].to_ascii_uppercase(), cc[1].to_ascii_uppercase()];
            match net.trunc() {
                IpNet::V4(n) => v4.push(Pending {
                    start: u32::from(n.network()),
                    end: u32::from(n.broadcast()),
                    code,
                    line,
                    cidr,
                }),
                IpNet::V6(n) => v6.push(Pending {
                    start: u128::from(n.network()),
                    end: u128::from(n.broadcast()),
                    code,
                    line,
                    cidr,
                }),
            }
        }
        Ok(GeoTable {
            v4: finish(v4)?,
            v6: finish(v6)?,
        })
    }

    pub fn len(&self) -> usize {
        self.v4.len() + self.v6.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn country(&self, ip: IpAddr) -> Option<&str> {
        fn find<T: Ord + Copy>(ranges: &[(T, T, [u8; 2])], x: T) -> Option<&[u8; 2]> {
            let i = ranges.partition_point(|r| r.0 <= x);
            let r = ranges.get(i.checked_sub(1)?)?;
            (x <= r.1).then_some(&r.2)
        }
        let code = match ip {
            IpAddr::V4(a) => find(&self.v4, u32::from(a)),
            IpAddr::V6(a) => match a.to_ipv4_mapped() {
                Some(v4) => find(&self.v4, u32::from(v4)),
                None => find(&self.v6, u128::from(a)),
            },
        }?;
        std::str::from_utf8(code).ok()
    }
}

/// Crawler allowlist first, then the country ban. Unmapped addresses pass.
pub fn geo_allow(ip: IpAddr, geodb: &GeoTable, policy: &GatewayPolicy) -> StageResult {
    if policy.blocked_countries.is_empty() || policy.crawler_allowlist.iter().any(|n| n.contains(&ip)) {
        return Ok(());
    }
    match geodb.country(ip) {
        Some(cc) if policy.blocked_countries.contains(cc) => {
            Err(Flag::block("GEO_BLOCKED", vec![format!("country={cc}")]))
        }
        _ => Ok(()),
    }
}
