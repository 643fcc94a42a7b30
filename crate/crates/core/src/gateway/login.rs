use std::collections::HashMap;
use std::net::IpAddr;
use std::sync::Mutex;

use super::request::LoginOutcome;

const SWEEP_AT: usize = 4096;

/// Failed-login timestamps (ms) per client address.
#[derive(Debug, Default)]
pub struct LoginTracker {
    failures: Mutex<HashMap<IpAddr, Vec<i64>>>,
}

impl LoginTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Decides whether this attempt must be challenged, then records its
    /// outcome unless it was. Failures older than `window_ms` no longer
    /// count and a success clears the slate.
    pub fn note_login(
        &self,
        ip: IpAddr,
        outcome: Option<LoginOutcome>,
        now_ms: i64,
        window_ms: i64,
        threshold: u32,
    ) -> bool {
        let mut map = self.failures.lock().unwrap_or_else(|e| e.into_inner());
        if map.len() > SWEEP_AT {
            map.retain(|_, v| v.last().is_some_and(|t| now_ms - t < window_ms));
        }
        let entry = map.entry(ip).or_default();
        entry.retain(|t| now_ms - t < window_ms);
        let required = entry.len() >= threshold as usize;
        if !required {
            apply(entry, outcome, now_ms);
        }
        if entry.is_empty() {
            map.remove(&ip);
        }
        required
    }

    /// Records an outcome learned after the fact, without a check.
    pub fn record(&self, ip: IpAddr, outcome: LoginOutcome, now_ms: i64, window_ms: i64) {
        let mut map = self.failures.lock().unwrap_or_else(|e| e.into_inner());
        let entry = map.entry(ip).or_default();
        entry.retain(|t| now_ms - t < window_ms);
        apply(entry, Some(outcome), now_ms);
        if entry.is_empty() {
            map.remove(&ip);
        }
    }

    pub fn failures(&self, ip: IpAddr, now_ms: i64, window_ms: i64) -> usize {
        let map = self.failures.lock().unwrap_or_else(|e| e.into_inner());
        map.get(&ip)
            .map_or(0, |v| v.iter().filter(|t| now_ms - **t < window_ms).count())
    }
}

fn apply(entry: &mut Vec<i64>, outcome: Option<LoginOutcome>, now_ms: i64) {
    match outcome {
        Some(LoginOutcome::Failure) => entry.push(now_ms),
        Some(LoginOutcome::Success) => entry.clear(),
        None => {}
    }
}
