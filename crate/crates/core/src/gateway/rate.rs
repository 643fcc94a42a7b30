use std::collections::{HashMap, VecDeque};
use std::net::IpAddr;
use std::sync::Mutex;

pub const WINDOW_MS: i64 = 1000;
const SWEEP_AT: usize = 4096;

/// `None` is the site-wide counter.
pub type RateKey = Option<IpAddr>;

/// Request timestamps (ms) inside the trailing second, per key.
#[derive(Debug, Default)]
pub struct RateTracker {
    windows: Mutex<HashMap<RateKey, VecDeque<i64>>>,
}

impl RateTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts this request and reports whether the trailing one-second
    /// window, this request included, now holds more than `threshold`.
    pub fn note_rate(&self, key: RateKey, now_ms: i64, threshold: u32) -> bool {
        let mut map = self.windows.lock().unwrap_or_else(|e| e.into_inner());
        if map.len() > SWEEP_AT {
            map.retain(|_, q| q.back().is_some_and(|t| now_ms - t < WINDOW_MS));
        }
        let q = map.entry(key).or_default();
        while q.front().is_some_and(|t| now_ms - t >= WINDOW_MS) {
            q.pop_front();
        }
        q.push_back(now_ms);
        q.len() > threshold as usize
    }

    pub fn current(&self, key: RateKey, now_ms: i64) -> usize {
        let map = self.windows.lock().unwrap_or_else(|e| e.into_inner());
        map.get(&key)
            .map_or(0, |q| q.iter().filter(|t| now_ms - **t < WINDOW_MS).count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundary() {
        let r = RateTracker::new();
        let got: Vec<bool> = (0..201).map(|i| r.note_rate(None, i * 4, 200)).collect();
        assert!(got[..200].iter().all(|c| !c));
        assert!(got[200]);
        let r = RateTracker::new();
        assert!((0..200).all(|i| !r.note_rate(None, i * 4, 200)));
    }

    #[test]
    fn window_drains() {
        let r = RateTracker::new();
        for _ in 0..3 {
            r.note_rate(None, 0, 2);
        }
        assert!(r.note_rate(None, 999, 2));
        assert!(!r.note_rate(None, 1000, 2));
        assert!((0..100).all(|i| !r.note_rate(Some("192.0.2.1".parse().unwrap()), 5000 + i * 100, 10)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_quadratic_recount(
            gaps in proptest::collection::vec(0i64..6, 1..10_000),
            threshold in 1u32..300,
        ) {
            let mut t = 0;
            let ts: Vec<i64> = gaps.iter().map(|g| { t += g; t }).collect();
            let r = RateTracker::new();
            for (i, &now) in ts.iter().enumerate() {
                let count = ts[..=i].iter().filter(|&&x| now - x < WINDOW_MS).count();
                prop_assert_eq!(r.note_rate(None, now, threshold), count > threshold as usize);
            }
        }
    }
}
