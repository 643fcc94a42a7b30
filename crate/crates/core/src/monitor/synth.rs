//! Labeled synthetic data: feature samples for training and event logs for
//! end-to-end runs. Both are seeded and fully deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::builtin::BuiltinThresholds;
use super::event::{BehaviorEvent, EventBody, Protocol};
use super::features::FeatureVector;
use super::tree::{Label, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Benign,
    MailStorm,
    ResourceAbuse,
    LinkFarm,
}

impl Profile {
    pub const ALL: [Profile; 4] = [
        Profile::Benign,
        Profile::MailStorm,
        Profile::ResourceAbuse,
        Profile::LinkFarm,
    ];
}

fn draw_features(rng: &mut ChaCha8Rng, profile: Option<Profile>) -> [f64; 8] {
    let exec_max: u64;
    let cpu: f64;
    let mut smtp = rng.gen_range(0..20u64);
    let mut links = rng.gen_range(0..15u64);
    match profile {
        None => {
            // anywhere in the plausible range, to populate the boundaries
            exec_max = rng.gen_range(0..40_000);
            let cpu_pct: f64 = rng.gen_range(0.0..100.0);
            smtp = rng.gen_range(0..250);
            links = rng.gen_range(0..120);
            let execs = rng.gen_range(1..40u64);
            return [
                exec_max as f64,
                (exec_max * execs) as f64,
                (cpu_pct * 10.0).round() / 10.0,
                smtp as f64,
                rng.gen_range(0..60u64) as f64,
                rng.gen_range(0..40u64) as f64,
                links as f64,
                rng.gen_range(0..3u64) as f64,
            ];
        }
        Some(Profile::Benign) => {
            exec_max = rng.gen_range(20..4_000);
            cpu = rng.gen_range(1.0..60.0);
        }
        Some(Profile::MailStorm) => {
            exec_max = rng.gen_range(100..8_000);
            cpu = rng.gen_range(5.0..70.0);
            smtp = rng.gen_range(100..3_000);
        }
        Some(Profile::ResourceAbuse) => {
            exec_max = rng.gen_range(10_000..120_000);
            cpu = rng.gen_range(80.0..100.0);
        }
        Some(Profile::LinkFarm) => {
            exec_max = rng.gen_range(50..6_000);
            cpu = rng.gen_range(5.0..70.0);
            links = rng.gen_range(50..600);
        }
    }
    let execs = rng.gen_range(1..40u64);
    [
        exec_max as f64,
        (exec_max * execs) as f64,
        (cpu * 10.0).round() / 10.0,
        smtp as f64,
        rng.gen_range(0..60u64) as f64,
        rng.gen_range(0..40u64) as f64,
        links as f64,
        0.0,
    ]
}

/// `n` feature samples, labeled by `thresholds`. Roughly 55% come from the
/// benign profile, 10% from each abuse profile and 15% are drawn across the
/// whole range so the class boundaries are populated.
pub fn labeled_samples(seed: u64, n: usize, thresholds: &BuiltinThresholds) -> Vec<(FeatureVector, Label)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let roll: f64 = rng.gen();
            let profile = match roll {
                r if r < 0.55 => Some(Profile::Benign),
                r if r < 0.65 => Some(Profile::MailStorm),
                r if r < 0.75 => Some(Profile::ResourceAbuse),
                r if r < 0.85 => Some(Profile::LinkFarm),
                _ => None,
            };
            let x = draw_features(&mut rng, profile);
            let label = thresholds.label(&x);
            (FeatureVector::from_values(x), label)
        })
        .collect()
}

pub fn to_samples(labeled: &[(FeatureVector, Label)]) -> Vec<Sample> {
    labeled.iter().map(|(fv, l)| Sample::from_features(fv, *l)).collect()
}

/// What a generated log contains, for checking ingest and windowing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLedger {
    pub events: usize,
    pub script_exec: usize,
    pub smtp: usize,
    pub http: usize,
    pub file_touch: usize,
    pub link_created: usize,
}

#[derive(Debug, Clone)]
pub struct LogSpec {
    pub seed: u64,
    pub start_ms: i64,
    pub window_len: u64,
    pub windows: usize,
    /// Scripts and the behavior each one exhibits in every window.
    pub scripts: Vec<(String, Profile)>,
}

/// Generates a time-ordered event log following `spec`.
pub fn generate_log(spec: &LogSpec) -> (Vec<BehaviorEvent>, LogLedger) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len_ms = spec.window_len as i64 * 1000;
    let mut events = Vec::new();
    let mut ledger = LogLedger::default();
    for w in 0..spec.windows {
        let base = spec.start_ms.div_euclid(len_ms) * len_ms + w as i64 * len_ms;
        for (script, profile) in &spec.scripts {
            let (execs, smtp, links, heavy) = match profile {
                Profile::Benign => (rng.gen_range(1..8), rng.gen_range(0..3), rng.gen_range(0..3), false),
                Profile::MailStorm => (rng.gen_range(1..4), rng.gen_range(150..400), 0, false),
                Profile::ResourceAbuse => (rng.gen_range(2..5), 0, 0, true),
                Profile::LinkFarm => (1, 0, rng.gen_range(60..150), false),
            };
            let mut emit = |body: EventBody, rng: &mut ChaCha8Rng| {
                events.push(BehaviorEvent {
                    timestamp: base + rng.gen_range(0..len_ms),
                    body,
                });
            };
            for _ in 0..execs {
                let (duration_ms, cpu_pct) = if heavy {
                    (rng.gen_range(15_000..55_000), rng.gen_range(85.0..99.0))
                } else {
                    (rng.gen_range(15..2_500), rng.gen_range(1.0..45.0))
                };
                let cpu_pct = (cpu_pct * 10.0f64).round() / 10.0;
                emit(
                    EventBody::ScriptExec {
                        script_path: script.clone(),
                        duration_ms,
                        cpu_pct,
                    },
                    &mut rng,
                );
                ledger.script_exec += 1;
            }
            for i in 0..smtp {
                let dest = format!("mx{}.mail{}.example", i % 17, rng.gen_range(0..40));
                emit(
                    EventBody::OutboundMsg {
                        protocol: Protocol::Smtp,
                        dest,
                        script_path: Some(script.clone()),
                    },
                    &mut rng,
                );
                ledger.smtp += 1;
            }
            if rng.gen_bool(0.5) {
                emit(
                    EventBody::OutboundMsg {
                        protocol: Protocol::Http,
                        dest: "https://api.wordpress.org/core/version-check/1.7/".into(),
                        script_path: Some(script.clone()),
                    },
                    &mut rng,
                );
                ledger.http += 1;
            }
            for _ in 0..links {
                let dest = format!("https://shop.example/item/{}", rng.gen_range(0..1_000_000));
                emit(
                    EventBody::LinkCreated {
                        dest,
                        script_path: Some(script.clone()),
                    },
                    &mut rng,
                );
                ledger.link_created += 1;
            }
            if rng.gen_bool(0.2) {
                emit(
                    EventBody::FileTouch {
                        script_path: script.clone(),
                        touched_path: format!("cache/page-{}.tmp", rng.gen_range(0..100)),
                    },
                    &mut rng,
                );
                ledger.file_touch += 1;
            }
        }
    }
    events.sort_by_key(|e| e.timestamp);
    ledger.events = events.len();
    (events, ledger)
}
