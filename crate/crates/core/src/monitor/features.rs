//! Tumbling-window feature extraction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::event::{BehaviorEvent, EventBody, Protocol};

/// `script_path` of a window computed over all scripts.
pub const AGGREGATE: &str = "*";
/// `script_path` for per-script windows holding events with no script.
pub const UNATTRIBUTED: &str = "-";

pub const FEATURE_NAMES: [&str; 8] = [
    "max_exec_ms",
    "total_exec_ms",
    "mean_cpu_pct",
    "smtp_out_count",
    "http_out_count",
    "distinct_dests",
    "new_links_count",
    "core_touch_count",
];

pub const F_MAX_EXEC_MS: usize = 0;
pub const F_TOTAL_EXEC_MS: usize = 1;
pub const F_MEAN_CPU_PCT: usize = 2;
pub const F_SMTP_OUT: usize = 3;
pub const F_HTTP_OUT: usize = 4;
pub const F_DISTINCT_DESTS: usize = 5;
pub const F_NEW_LINKS: usize = 6;
pub const F_CORE_TOUCH: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Script,
    Global,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Epoch milliseconds, a multiple of the window length.
    pub window_start: i64,
    pub window_len: u64,
    pub script_path: String,
    pub max_exec_ms: u64,
    pub total_exec_ms: u64,
    pub mean_cpu_pct: f64,
    pub smtp_out_count: u64,
    pub http_out_count: u64,
    pub distinct_dests: u64,
    pub new_links_count: u64,
    pub core_touch_count: u64,
}

impl FeatureVector {
    pub fn values(&self) -> [f64; 8] {
        [
            self.max_exec_ms as f64,
            self.total_exec_ms as f64,
            self.mean_cpu_pct,
            self.smtp_out_count as f64,
            self.http_out_count as f64,
            self.distinct_dests as f64,
            self.new_links_count as f64,
            self.core_touch_count as f64,
        ]
    }

    pub fn from_values(v: [f64; 8]) -> Self {
        Self {
            max_exec_ms: v[F_MAX_EXEC_MS] as u64,
            total_exec_ms: v[F_TOTAL_EXEC_MS] as u64,
            mean_cpu_pct: v[F_MEAN_CPU_PCT],
            smtp_out_count: v[F_SMTP_OUT] as u64,
            http_out_count: v[F_HTTP_OUT] as u64,
            distinct_dests: v[F_DISTINCT_DESTS] as u64,
            new_links_count: v[F_NEW_LINKS] as u64,
            core_touch_count: v[F_CORE_TOUCH] as u64,
            ..Self::default()
        }
    }

    pub fn window_end(&self) -> i64 {
        self.window_start + self.window_len as i64 * 1000
    }

    /// `name=value` pairs of the non-zero features.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = FEATURE_NAMES
            .iter()
            .zip(self.values())
            .filter(|(_, v)| *v != 0.0)
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        if parts.is_empty() {
            "no activity".into()
        } else {
            parts.join(", ")
        }
    }
}

#[derive(Default)]
struct Acc {
    max_exec: u64,
    total_exec: u64,
    cpu_sum: f64,
    execs: u64,
    smtp: u64,
    http: u64,
    dests: BTreeSet<String>,
    links: u64,
    touches: u64,
}

/// Windows every event with `file_touch` counted as a core touch.
pub fn window_features(events: &[BehaviorEvent], window_len: u64, group_by: GroupBy) -> Vec<FeatureVector> {
    window_features_with(events, window_len, group_by, |_| true)
}

/// Buckets events into epoch-aligned tumbling windows of `window_len`
/// seconds. Only `file_touch` events whose touched path satisfies `is_core`
/// count towards `core_touch_count`. Windows with no events are omitted;
/// output is ordered by window start, then script.
///
/// `distinct_dests` counts distinct outbound-message destinations.
pub fn window_features_with(
    events: &[BehaviorEvent],
    window_len: u64,
    group_by: GroupBy,
    is_core: impl Fn(&str) -> bool,
) -> Vec<FeatureVector> {
    assert!(window_len > 0, "window length must be positive");
    let len_ms = window_len as i64 * 1000;
    let mut windows: BTreeMap<(i64, String), Acc> = BTreeMap::new();
    for ev in events {
        let start = ev.timestamp.div_euclid(len_ms) * len_ms;
        let key = match group_by {
            GroupBy::Global => AGGREGATE.to_string(),
            GroupBy::Script => ev.script().unwrap_or(UNATTRIBUTED).to_string(),
        };
        let acc = windows.entry((start, key)).or_default();
        match &ev.body {
            EventBody::ScriptExec {
                duration_ms,
                cpu_pct,
                ..
            } => {
                acc.max_exec = acc.max_exec.max(*duration_ms);
                acc.total_exec += duration_ms;
                acc.cpu_sum += cpu_pct;
                acc.execs += 1;
            }
            EventBody::OutboundMsg { protocol, dest, .. } => {
                match protocol {
                    Protocol::Smtp => acc.smtp += 1,
                    Protocol::Http => acc.http += 1,
                    Protocol::Dns | Protocol::Other => {}
                }
                if !acc.dests.contains(dest) {
                    acc.dests.insert(dest.clone());
                }
            }
            EventBody::FileTouch { touched_path, .. } => {
                if is_core(touched_path) {
                    acc.touches += 1;
                }
            }
            EventBody::LinkCreated { .. } => acc.links += 1,
        }
    }
    windows
        .into_iter()
        .map(|((start, script), a)| FeatureVector {
            window_start: start,
            window_len,
            script_path: script,
            max_exec_ms: a.max_exec,
            total_exec_ms: a.total_exec,
            mean_cpu_pct: if a.execs == 0 {
                0.0
            } else {
                (a.cpu_sum / a.execs as f64).clamp(0.0, 100.0)
            },
            smtp_out_count: a.smtp,
            http_out_count: a.http,
            distinct_dests: a.dests.len() as u64,
            new_links_count: a.links,
            core_touch_count: a.touches,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(ts: i64, script: &str, ms: u64, cpu: f64) -> BehaviorEvent {
        BehaviorEvent {
            timestamp: ts,
            body: EventBody::ScriptExec {
                script_path: script.into(),
                duration_ms: ms,
                cpu_pct: cpu,
            },
        }
    }

    fn smtp(ts: i64, script: &str, dest: &str) -> BehaviorEvent {
        BehaviorEvent {
            timestamp: ts,
            body: EventBody::OutboundMsg {
                protocol: Protocol::Smtp,
                dest: dest.into(),
                script_path: Some(script.into()),
            },
        }
    }

    #[test]
    fn single_exec() {
        let fv = window_features(&[exec(1_000, "a.php", 5000, 40.0)], 60, GroupBy::Global);
        assert_eq!(fv.len(), 1);
        assert_eq!(fv[0].max_exec_ms, 5000);
        assert_eq!(fv[0].total_exec_ms, 5000);
        assert_eq!(fv[0].mean_cpu_pct, 40.0);
        assert_eq!(fv[0].script_path, AGGREGATE);
    }

    #[test]
    fn smtp_storm_counts() {
        let evs: Vec<_> = (0..500).map(|i| smtp(i * 100, "tmp/m.php", &format!("mx{}.example", i % 7))).collect();
        let fv = window_features(&evs, 60, GroupBy::Script);
        assert_eq!(fv.len(), 1);
        assert_eq!(fv[0].smtp_out_count, 500);
        assert_eq!(fv[0].distinct_dests, 7);
        assert_eq!(fv[0].script_path, "tmp/m.php");
    }

    #[test]
    fn windows_are_tumbling_and_sparse() {
        let evs = vec![
            exec(59_999, "a.php", 1, 0.0),
            exec(60_000, "a.php", 2, 0.0),
            exec(300_000, "b.php", 3, 0.0),
        ];
        let fv = window_features(&evs, 60, GroupBy::Script);
        let starts: Vec<i64> = fv.iter().map(|f| f.window_start).collect();
        assert_eq!(starts, vec![0, 60_000, 300_000]);
    }

    #[test]
    fn negative_timestamps_floor() {
        let fv = window_features(&[exec(-1, "a.php", 1, 0.0)], 60, GroupBy::Global);
        assert_eq!(fv[0].window_start, -60_000);
    }
}
