//! Hand-written classification tree with operator-tunable thresholds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{FEATURE_NAMES, F_MAX_EXEC_MS, F_MEAN_CPU_PCT, F_NEW_LINKS, F_SMTP_OUT};
use super::tree::{DecisionTree, Label, Node};

/// Defaults are calibrated on the synthetic benign profiles so that they
/// raise no alerts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuiltinThresholds {
    /// SMTP messages per window.
    pub smtp: f64,
    pub exec_ms: f64,
    pub cpu_pct: f64,
    /// Links created per window.
    pub links: f64,
}

impl Default for BuiltinThresholds {
    fn default() -> Self {
        Self {
            smtp: 100.0,
            exec_ms: 10_000.0,
            cpu_pct: 80.0,
            links: 50.0,
        }
    }
}

impl BuiltinThresholds {
    /// The rule the tree encodes, written out directly.
    pub fn label(&self, x: &[f64]) -> Label {
        if x[F_SMTP_OUT] >= self.smtp {
            Label::MailStorm
        } else if x[F_MAX_EXEC_MS] >= self.exec_ms && x[F_MEAN_CPU_PCT] >= self.cpu_pct {
            Label::ResourceAbuse
        } else if x[F_NEW_LINKS] >= self.links {
            Label::LinkFarm
        } else {
            Label::Benign
        }
    }
}

pub fn builtin_tree(t: &BuiltinThresholds) -> DecisionTree {
    let leaf = |label| Node::Leaf {
        label,
        class_counts: BTreeMap::from([(label, 1)]),
    };
    let split = |feature_index, threshold, left, right| Node::Split {
        feature_index,
        threshold,
        left,
        right,
    };
    let nodes = vec![
        split(F_SMTP_OUT, t.smtp, 1, 2),
        split(F_MAX_EXEC_MS, t.exec_ms, 3, 4),
        leaf(Label::MailStorm),
        split(F_NEW_LINKS, t.links, 5, 6),
        split(F_MEAN_CPU_PCT, t.cpu_pct, 8, 7),
        leaf(Label::Benign),
        leaf(Label::LinkFarm),
        leaf(Label::ResourceAbuse),
        split(F_NEW_LINKS, t.links, 9, 10),
        leaf(Label::Benign),
        leaf(Label::LinkFarm),
    ];
    DecisionTree {
        nodes,
        max_depth: 4,
        min_leaf: 1,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::features::FeatureVector;
    use crate::monitor::tree::classify_fv;

    #[test]
    fn well_formed() {
        builtin_tree(&Default::default()).validate().unwrap();
    }

    proptest::proptest! {
        #[test]
        fn tree_matches_rule(
            exec in 0u64..30_000, cpu in 0.0f64..100.0, smtp in 0u64..300, links in 0u64..120,
        ) {
            let t = BuiltinThresholds::default();
            let fv = FeatureVector {
                max_exec_ms: exec,
                mean_cpu_pct: cpu,
                smtp_out_count: smtp,
                new_links_count: links,
                ..Default::default()
            };
            proptest::prop_assert_eq!(classify_fv(&builtin_tree(&t), &fv), t.label(&fv.values()));
        }
    }

    #[test]
    fn mail_storm() {
        let fv = FeatureVector {
            smtp_out_count: 500,
            ..Default::default()
        };
        assert_eq!(classify_fv(&builtin_tree(&Default::default()), &fv), Label::MailStorm);
    }

    #[test]
    fn all_zero_is_benign() {
        assert_eq!(
            classify_fv(&builtin_tree(&Default::default()), &FeatureVector::default()),
            Label::Benign
        );
    }

    #[test]
    fn heavy_script() {
        let fv = FeatureVector {
            max_exec_ms: 60_000,
            mean_cpu_pct: 95.0,
            ..Default::default()
        };
        assert_eq!(classify_fv(&builtin_tree(&Default::default()), &fv), Label::ResourceAbuse);
    }

    #[test]
    fn slow_but_idle_script_with_links() {
        let fv = FeatureVector {
            max_exec_ms: 60_000,
            mean_cpu_pct: 10.0,
            new_links_count: 80,
            ..Default::default()
        };
        assert_eq!(classify_fv(&builtin_tree(&Default::default()), &fv), Label::LinkFarm);
    }
}
