use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Challenge,
    Block,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Allow => "allow",
            Decision::Challenge => "challenge",
            Decision::Block => "block",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pipeline stages in evaluation order; `Clean` means every stage passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Maintenance,
    Blacklist,
    Reputation,
    Geo,
    Agent,
    Inclusion,
    Payload,
    Upload,
    LoginRate,
    RequestRate,
    Clean,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Maintenance,
        Stage::Blacklist,
        Stage::Reputation,
        Stage::Geo,
        Stage::Agent,
        Stage::Inclusion,
        Stage::Payload,
        Stage::Upload,
        Stage::LoginRate,
        Stage::RequestRate,
        Stage::Clean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Maintenance => "maintenance",
            Stage::Blacklist => "blacklist",
            Stage::Reputation => "reputation",
            Stage::Geo => "geo",
            Stage::Agent => "agent",
            Stage::Inclusion => "inclusion",
            Stage::Payload => "payload",
            Stage::Upload => "upload",
            Stage::LoginRate => "login_rate",
            Stage::RequestRate => "request_rate",
            Stage::Clean => "clean",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 128-bit request identifier, shown as 32 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestId(pub u128);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl Serialize for RequestId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RequestId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 32 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(serde::de::Error::custom("request id must be 32 lowercase hex digits"));
        }
        u128::from_str_radix(&s, 16).map(RequestId).map_err(serde::de::Error::custom)
    }
}

/// Where request ids come from: random for live traffic, a keyed counter for
/// replays so output is reproducible.
#[derive(Debug)]
pub enum RequestIds {
    Random,
    Sequence { key: u64, next: u64 },
}

impl RequestIds {
    pub fn sequence(key: u64) -> Self {
        RequestIds::Sequence { key, next: 0 }
    }

    pub fn next_id(&mut self) -> RequestId {
        match self {
            RequestIds::Random => RequestId(rand::random()),
            RequestIds::Sequence { key, next } => {
                let mut h = Sha256::new();
                h.update(b"hostguard request id\0");
                h.update(key.to_le_bytes());
                h.update(next.to_le_bytes());
                *next += 1;
                let d = h.finalize();
                RequestId(u128::from_be_bytes(d[..16].try_into().expect("16 bytes")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub request_id: RequestId,
    pub decision: Decision,
    pub stage: Stage,
    /// Empty for allow verdicts.
    pub reason_code: String,
    pub evidence: Vec<String>,
}

impl Verdict {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }

    /// The `challenge_id=` evidence entry, if any.
    pub fn challenge_id(&self) -> Option<&str> {
        self.evidence.iter().find_map(|e| e.strip_prefix("challenge_id="))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_ids_are_reproducible_and_distinct() {
        let mut a = RequestIds::sequence(7);
        let mut b = RequestIds::sequence(7);
        let xs: Vec<RequestId> = (0..100).map(|_| a.next_id()).collect();
        let ys: Vec<RequestId> = (0..100).map(|_| b.next_id()).collect();
        assert_eq!(xs, ys);
        let uniq: std::collections::BTreeSet<_> = xs.iter().collect();
        assert_eq!(uniq.len(), 100);
        assert_ne!(RequestIds::sequence(8).next_id(), xs[0]);
    }

    #[test]
    fn id_text_round_trip() {
        let id = RequestId(0x0123_4567_89ab_cdef_0000_0000_0000_0001);
        let j = serde_json::to_string(&id).unwrap();
        assert_eq!(j, "\"0123456789abcdef0000000000000001\"");
        assert_eq!(serde_json::from_str::<RequestId>(&j).unwrap(), id);
        assert!(serde_json::from_str::<RequestId>("\"ABC\"").is_err());
    }
}
