//! Challenge issuing. The pipeline only needs ids and a verify hook; what
//! the visitor is actually shown is up to the provider.

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengeKind {
    Captcha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChallengeTrigger {
    FailedLogins,
    Rate,
}

impl ChallengeTrigger {
    pub fn as_str(self) -> &'static str {
        match self {
            ChallengeTrigger::FailedLogins => "failed_logins",
            ChallengeTrigger::Rate => "rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeDecision {
    pub required: bool,
    pub kind: ChallengeKind,
    pub challenge_id: Option<String>,
    pub trigger: ChallengeTrigger,
}

/// Header a client uses to present a solved challenge: `<id>:<answer>`.
pub const ANSWER_HEADER: &str = "x-hostguard-challenge";

pub trait ChallengeProvider: Send + Sync {
    /// Returns a fresh id, never handed out before.
    fn issue(&self, trigger: ChallengeTrigger) -> String;
    /// Consumes the challenge on success.
    fn verify(&self, challenge_id: &str, answer: &str) -> bool;
}

/// Deterministic provider whose answer is the id itself. Meant for tests,
/// replays and sites fronted by some other human check.
#[derive(Debug, Default)]
pub struct EchoChallenge {
    next: AtomicU64,
    open: Mutex<HashSet<String>>,
}

impl EchoChallenge {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ChallengeProvider for EchoChallenge {
    fn issue(&self, trigger: ChallengeTrigger) -> String {
        let n = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let id = format!("echo-{}-{n:06}", trigger.as_str());
        self.open.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone());
        id
    }

    fn verify(&self, challenge_id: &str, answer: &str) -> bool {
        challenge_id == answer && self.open.lock().unwrap_or_else(|e| e.into_inner()).remove(challenge_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_ids_and_single_use() {
        let c = EchoChallenge::new();
        let a = c.issue(ChallengeTrigger::Rate);
        let b = c.issue(ChallengeTrigger::FailedLogins);
        assert_ne!(a, b);
        assert_eq!(a, "echo-rate-000001");
        assert!(!c.verify(&a, "nope"));
        assert!(c.verify(&a, &a));
        assert!(!c.verify(&a, &a));
        assert!(!c.verify("echo-rate-999999", "echo-rate-999999"));
    }
}
