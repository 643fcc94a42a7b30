//! CART-style decision tree over feature vectors.
//!
//! Splits minimize weighted Gini impurity over midpoint thresholds between
//! consecutive distinct values. Candidates are compared with exact integer
//! arithmetic, so ties are real ties and resolve to the lowest feature index,
//! then the lowest threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{FeatureVector, FEATURE_NAMES};

/// Class labels. Declaration order doubles as the leaf tie-break order, so
/// `Benign` wins every majority tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Benign,
    Malicious,
    MailStorm,
    ResourceAbuse,
    LinkFarm,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::Benign,
        Label::Malicious,
        Label::MailStorm,
        Label::ResourceAbuse,
        Label::LinkFarm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
            Label::MailStorm => "mail_storm",
            Label::ResourceAbuse => "resource_abuse",
            Label::LinkFarm => "link_farm",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
        class_counts: BTreeMap<Label, usize>,
    },
}

/// Nodes are stored in an arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Feature names for display; index `i` names feature `i`.
    #[serde(default)]
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: Label,
}

impl Sample {
    pub fn new(x: Vec<f64>, label: Label) -> Self {
        Self { x, label }
    }

    pub fn from_features(fv: &FeatureVector, label: Label) -> Self {
        Self::new(fv.values().to_vec(), label)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("need at least 2 samples with the same feature count, got {0}")]
    InsufficientData(usize),
    #[error("feature values must be finite")]
    NonFiniteFeature,
    #[error("tree references feature {index} but the vector has {len}")]
    MissingFeature { index: usize, len: usize },
    #[error("malformed tree: {0}")]
    Malformed(String),
}

type Counts = [u64; Label::ALL.len()];

fn counts_of<'a>(labels: impl Iterator<Item = &'a Label>) -> Counts {
    let mut c = [0u64; Label::ALL.len()];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

fn sum_sq(c: &Counts) -> u128 {
    c.iter().map(|&v| (v as u128) * (v as u128)).sum()
}

fn is_pure(c: &Counts) -> bool {
    c.iter().filter(|&&v| v > 0).count() <= 1
}

fn majority(c: &Counts) -> Label {
    let mut best = Label::Benign;
    for l in Label::ALL {
        if c[l.index()] > c[best.index()] {
            best = l;
        }
    }
    best
}

/// A split's quality as the fraction `S_L/n_L + S_R/n_R`, where `S` is the
/// sum of squared class counts. Weighted Gini equals `1 - that/N`, so a larger
/// fraction is a lower impurity.
#[derive(Debug, Clone, Copy)]
pub struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    pub fn new(left: &Counts, right: &Counts) -> Self {
        let nl: u64 = left.iter().sum();
        let nr: u64 = right.iter().sum();
        let (nl, nr) = (nl as u128, nr as u128);
        Self {
            num: sum_sq(left) * nr + sum_sq(right) * nl,
            den: nl * nr,
        }
    }

    /// Strictly lower impurity than `other`.
    pub fn better_than(&self, other: &SplitScore) -> bool {
        self.num * other.den > other.num * self.den
    }

    pub fn weighted_gini(&self, n: usize) -> f64 {
        1.0 - (self.num as f64 / self.den as f64) / n as f64
    }
}

/// Midpoint of two distinct values that still separates them.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m <= a || m > b {
        b
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature_index: usize,
    pub threshold: f64,
}

/// Best admissible split of `idx` (indices into `samples`), or `None` when no
/// threshold leaves at least `min_leaf` samples on both sides.
pub fn best_split(samples: &[Sample], idx: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n_features = samples[idx[0]].x.len();
    let total = counts_of(idx.iter().map(|&i| &samples[i].label));
    let min_leaf = min_leaf.max(1);
    let mut best: Option<(SplitScore, SplitChoice)> = None;
    let mut order = idx.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| samples[a].x[f].total_cmp(&samples[b].x[f]));
        let mut left = [0u64; Label::ALL.len()];
        for pos in 0..order.len() - 1 {
            let s = &samples[order[pos]];
            left[s.label.index()] += 1;
            let (a, b) = (s.x[f], samples[order[pos + 1]].x[f]);
            let n_left = pos + 1;
            if a == b || n_left < min_leaf || order.len() - n_left < min_leaf {
                continue;
            }
            let mut right = total;
            for k in 0..right.len() {
                right[k] -= left[k];
            }
            let score = SplitScore::new(&left, &right);
            if best.as_ref().is_none_or(|(s, _)| score.better_than(s)) {
                best = Some((
                    score,
                    SplitChoice {
                        feature_index: f,
                        threshold: midpoint(a, b),
                    },
                ));
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Trains a tree. A single-class training set yields a one-leaf tree and a
/// logged warning rather than an error.
pub fn train_tree(samples: &[Sample], params: TreeParams) -> Result<DecisionTree, TreeError> {
    if samples.len() < 2 || samples.iter().any(|s| s.x.len() != samples[0].x.len()) {
        return Err(TreeError::InsufficientData(samples.len()));
    }
    if samples.iter().flat_map(|s| &s.x).any(|v| !v.is_finite()) {
        return Err(TreeError::NonFiniteFeature);
    }
    let labels = counts_of(samples.iter().map(|s| &s.label));
    if is_pure(&labels) {
        log::warn!(
            "all {} training samples carry label {}; tree is a single leaf",
            samples.len(),
            majority(&labels)
        );
    }
    let mut tree = DecisionTree {
        nodes: Vec::new(),
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        feature_names: if samples[0].x.len() == FEATURE_NAMES.len() {
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            Vec::new()
        },
    };
    let all: Vec<usize> = (0..samples.len()).collect();
    grow(&mut tree, samples, all, 0, params);
    Ok(tree)
}

fn grow(tree: &mut DecisionTree, samples: &[Sample], idx: Vec<usize>, depth: usize, p: TreeParams) -> usize {
    let counts = counts_of(idx.iter().map(|&i| &samples[i].label));
    let slot = tree.nodes.len();
    let leaf = |counts: &Counts| Node::Leaf {
        label: majority(counts),
        class_counts: Label::ALL
            .into_iter()
            .filter(|l| counts[l.index()] > 0)
            .map(|l| (l, counts[l.index()] as usize))
            .collect(),
    };
    let choice = if depth >= p.max_depth || is_pure(&counts) || idx.len() < 2 * p.min_leaf.max(1) {
        None
    } else {
        best_split(samples, &idx, p.min_leaf)
    };
    let Some(c) = choice else {
        tree.nodes.push(leaf(&counts));
        return slot;
    };
    tree.nodes.push(leaf(&counts)); // placeholder until the children exist
    let (l, r): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| samples[i].x[c.feature_index] < c.threshold);
    let left = grow(tree, samples, l, depth + 1, p);
    let right = grow(tree, samples, r, depth + 1, p);
    tree.nodes[slot] = Node::Split {
        feature_index: c.feature_index,
        threshold: c.threshold,
        left,
        right,
    };
    slot
}

impl DecisionTree {
    pub fn single_leaf(label: Label) -> Self {
        Self {
            nodes: vec![Node::Leaf {
                label,
                class_counts: BTreeMap::from([(label, 1)]),
            }],
            max_depth: 0,
            min_leaf: 1,
            feature_names: Vec::new(),
        }
    }

    pub fn is_single_leaf(&self) -> bool {
        matches!(self.nodes.as_slice(), [Node::Leaf { .. }])
    }

    pub fn depth(&self) -> usize {
        fn d(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(t, *left).max(d(t, *right)),
            }
        }
        d(self, 0)
    }

    /// Checks the arena forms one rooted binary tree with non-empty leaves.
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.nodes.is_empty() {
            return Err(TreeError::Malformed("no nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() {
                return Err(TreeError::Malformed(format!("child {i} does not exist")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(TreeError::Malformed(format!("node {i} reached twice")));
            }
            match &self.nodes[i] {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if threshold.is_nan() {
                        return Err(TreeError::Malformed(format!("node {i} threshold is NaN")));
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
                Node::Leaf { class_counts, .. } => {
                    if class_counts.values().sum::<usize>() == 0 {
                        return Err(TreeError::Malformed(format!("leaf {i} has no samples")));
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(TreeError::Malformed(format!("node {orphan} unreachable")));
        }
        Ok(())
    }

    /// `validate`, plus every split must read a feature below `width`.
    pub fn validate_for(&self, width: usize) -> Result<(), TreeError> {
        self.validate()?;
        for n in &self.nodes {
            if let Node::Split { feature_index, .. } = n {
                if *feature_index >= width {
                    return Err(TreeError::MissingFeature { index: *feature_index, len: width });
                }
            }
        }
        Ok(())
    }

    /// Index of the leaf `x` descends to.
    pub fn leaf_for(&self, x: &[f64]) -> Result<usize, TreeError> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return Ok(i),
                Node::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    let v = *x.get(*feature_index).ok_or(TreeError::MissingFeature {
                        index: *feature_index,
                        len: x.len(),
                    })?;
                    i = if v < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn feature_name(&self, i: usize) -> String {
        self.feature_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("x{i}"))
    }

    /// Indented text rendering for operators.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(0, 0, &mut out);
        out
    }

    fn render_node(&self, i: usize, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent);
        match &self.nodes[i] {
            Node::Leaf { label, class_counts } => {
                let counts: Vec<String> = class_counts.iter().map(|(l, n)| format!("{l}:{n}")).collect();
                out.push_str(&format!("{pad}=> {label} [{}]\n", counts.join(" ")));
            }
            Node::Split {
                feature_index,
                threshold,
                left,
                right,
            } => {
                let name = self.feature_name(*feature_index);
                out.push_str(&format!("{pad}if {name} < {threshold}\n"));
                self.render_node(*left, indent + 1, out);
                out.push_str(&format!("{pad}else\n"));
                self.render_node(*right, indent + 1, out);
            }
        }
    }
}

pub fn classify(tree: &DecisionTree, x: &[f64]) -> Result<Label, TreeError> {
    match &tree.nodes[tree.leaf_for(x)?] {
        Node::Leaf { label, .. } => Ok(*label),
        Node::Split { .. } => unreachable!("leaf_for returns leaves"),
    }
}

pub fn classify_fv(tree: &DecisionTree, fv: &FeatureVector) -> Label {
    classify(tree, &fv.values()).expect("feature vectors carry every feature")
}
