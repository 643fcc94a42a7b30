//! Alerts raised from classified windows, core-file touches and sitemap drift.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::event::{BehaviorEvent, EventBody};
use super::features::FeatureVector;
use super::sitemap::DriftReport;
use super::tree::{classify_fv, DecisionTree, Label};
use crate::integrity::{sha256_hex, BaselineManifest};
use crate::paths::normalize_rel;
use crate::signatures::Severity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertCategory {
    ResourceAbuse,
    MailStorm,
    CoreTamper,
    SitemapDrift,
    LinkFarm,
}

impl AlertCategory {
    pub const ALL: [AlertCategory; 5] = [
        AlertCategory::ResourceAbuse,
        AlertCategory::MailStorm,
        AlertCategory::CoreTamper,
        AlertCategory::SitemapDrift,
        AlertCategory::LinkFarm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlertCategory::ResourceAbuse => "resource_abuse",
            AlertCategory::MailStorm => "mail_storm",
            AlertCategory::CoreTamper => "core_tamper",
            AlertCategory::SitemapDrift => "sitemap_drift",
            AlertCategory::LinkFarm => "link_farm",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            AlertCategory::CoreTamper => Severity::Critical,
            AlertCategory::MailStorm | AlertCategory::LinkFarm | AlertCategory::SitemapDrift => Severity::High,
            AlertCategory::ResourceAbuse => Severity::Medium,
        }
    }

    fn for_label(label: Label) -> Option<Self> {
        match label {
            Label::Benign => None,
            Label::MailStorm => Some(AlertCategory::MailStorm),
            Label::LinkFarm => Some(AlertCategory::LinkFarm),
            Label::ResourceAbuse | Label::Malicious => Some(AlertCategory::ResourceAbuse),
        }
    }
}

impl fmt::Display for AlertCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub severity: Severity,
    pub category: AlertCategory,
    pub subject: String,
    pub detail: String,
    /// Epoch milliseconds, half-open `[window_start, window_end)`.
    pub window_start: i64,
    pub window_end: i64,
}

impl Alert {
    /// The id is a digest of the content, so re-running a pass over the same
    /// log yields the same ids.
    pub fn new(category: AlertCategory, subject: String, detail: String, window: (i64, i64)) -> Self {
        let key = format!("{category}\n{subject}\n{detail}\n{}\n{}", window.0, window.1);
        Self {
            alert_id: sha256_hex(key.as_bytes())[..16].to_string(),
            severity: category.severity(),
            category,
            subject,
            detail,
            window_start: window.0,
            window_end: window.1,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("alert serializes")
    }
}

/// One alert per window the tree labels as abusive.
pub fn classify_windows(tree: &DecisionTree, windows: &[FeatureVector]) -> Vec<Alert> {
    windows
        .iter()
        .filter_map(|fv| {
            let label = classify_fv(tree, fv);
            let category = AlertCategory::for_label(label)?;
            let what = match label {
                Label::MailStorm => "is sending bulk mail",
                Label::ResourceAbuse => "is running heavy, CPU-bound executions",
                Label::LinkFarm => "is generating links at a high rate",
                _ => "behaves abnormally",
            };
            let subject = fv.script_path.clone();
            let detail = format!(
                "{subject} {what} (classified {label}); {}",
                fv.describe()
            );
            Some(Alert::new(category, subject, detail, (fv.window_start, fv.window_end())))
        })
        .collect()
}

/// Maps an event path to the manifest's relative form. Absolute paths must
/// lie under `site_root`.
pub fn manifest_key(path: &str, site_root: Option<&Path>) -> Option<String> {
    let p = Path::new(path);
    if p.is_absolute() {
        let root = site_root?;
        crate::paths::rel_path(root, p)
    } else {
        normalize_rel(path)
    }
}

/// One `core_tamper` alert per `file_touch` of a baselined path.
pub fn core_touch_alerts(
    events: &[BehaviorEvent],
    manifest: &BaselineManifest,
    site_root: Option<&Path>,
) -> Vec<Alert> {
    events
        .iter()
        .filter_map(|ev| {
            let EventBody::FileTouch {
                script_path,
                touched_path,
            } = &ev.body
            else {
                return None;
            };
            let key = manifest_key(touched_path, site_root)?;
            if !manifest.contains(&key) {
                return None;
            }
            let detail = format!("core file {key} was modified or copied by script {script_path}");
            Some(Alert::new(
                AlertCategory::CoreTamper,
                key,
                detail,
                (ev.timestamp, ev.timestamp + 1),
            ))
        })
        .collect()
}

pub fn drift_alert(report: &DriftReport, sitemap_name: &str, at: i64) -> Option<Alert> {
    if !report.flagged {
        return None;
    }
    let sample: Vec<&str> = report.added.iter().take(10).map(String::as_str).collect();
    let more = report.added.len().saturating_sub(sample.len());
    let mut detail = format!(
        "{sitemap_name} gained {} URLs and lost {} since the baseline; added: {}",
        report.added.len(),
        report.removed.len(),
        sample.join(" ")
    );
    if more > 0 {
        detail.push_str(&format!(" (+{more} more)"));
    }
    Some(Alert::new(
        AlertCategory::SitemapDrift,
        sitemap_name.to_string(),
        detail,
        (at, at + 1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrity::BaselineEntry;
    use std::collections::BTreeMap;

    fn manifest(paths: &[&str]) -> BaselineManifest {
        let entries: BTreeMap<String, BaselineEntry> = paths
            .iter()
            .map(|p| {
                (
                    p.to_string(),
                    BaselineEntry {
                        rel_path: p.to_string(),
                        size: 1,
                        digest: "00".repeat(32),
                        mode: 0o644,
                        recorded_at: None,
                    },
                )
            })
            .collect();
        let mut m = BaselineManifest {
            cms_name: "wordpress".into(),
            cms_version: "6.4".into(),
            exclude_globs: vec![],
            entries,
            sitemap_urls: None,
            manifest_digest: String::new(),
        };
        m.manifest_digest = m.canonical_digest();
        m
    }

    fn touch(ts: i64, script: &str, path: &str) -> BehaviorEvent {
        BehaviorEvent {
            timestamp: ts,
            body: EventBody::FileTouch {
                script_path: script.into(),
                touched_path: path.into(),
            },
        }
    }

    #[test]
    fn touch_of_core_file() {
        let m = manifest(&["index.php"]);
        let a = core_touch_alerts(&[touch(5, "tmp/upd.php", "index.php")], &m, None);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].category, AlertCategory::CoreTamper);
        assert!(a[0].detail.contains("index.php") && a[0].detail.contains("tmp/upd.php"));
    }

    #[test]
    fn touch_of_cache_file() {
        let m = manifest(&["index.php"]);
        assert!(core_touch_alerts(&[touch(5, "x.php", "cache/page.tmp")], &m, None).is_empty());
    }

    #[test]
    fn ten_touches_ten_alerts() {
        let names: Vec<String> = (0..10).map(|i| format!("lib/f{i}.php")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let m = manifest(&refs);
        let evs: Vec<_> = names.iter().enumerate().map(|(i, n)| touch(i as i64, "tmp/x.php", n)).collect();
        assert_eq!(core_touch_alerts(&evs, &m, None).len(), 10);
    }

    #[test]
    fn absolute_paths_need_root() {
        let m = manifest(&["index.php"]);
        let ev = [touch(1, "a.php", "/srv/site/index.php")];
        assert!(core_touch_alerts(&ev, &m, None).is_empty());
        assert_eq!(core_touch_alerts(&ev, &m, Some(Path::new("/srv/site"))).len(), 1);
    }
}
