//! Operator configuration: one ini file plus `HOSTGUARD_<SECTION>_<KEY>`
//! environment overrides.
//!
//! Relative paths resolve against the directory holding the config file (or
//! the working directory when no file is used).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use hostguard::gateway::GatewayPolicy;
use hostguard::hardening::HardeningPolicy;
use hostguard::ini::{split_list, IniDocument};
use hostguard::monitor::{BuiltinThresholds, GroupBy};
use thiserror::Error;

pub const CONFIG_ENV: &str = "HOSTGUARD_CONFIG";
pub const DEFAULT_CONFIG_NAME: &str = "hostguard.ini";

const SITE_KEYS: &[&str] = &["web_root", "cms_name", "cms_version", "exclude", "sitemap"];
const PATH_KEYS: &[&str] = &[
    "state_dir",
    "manifest",
    "signatures",
    "quarantine_dir",
    "geo_table",
    "blacklist_store",
];
const LOG_KEYS: &[&str] = &[
    "block_log",
    "verdict_log",
    "alert_log",
    "dead_letter_log",
    "scan_report",
    "report_dir",
];
const HARDENING_EXTRA: &[&str] = &["php_ini", "credentials"];
const GATEWAY_EXTRA: &[&str] = &["listen", "upstream", "max_body_bytes"];
const MONITOR_KEYS: &[&str] = &[
    "event_log",
    "window_secs",
    "group_by",
    "tree",
    "smtp_threshold",
    "exec_ms_threshold",
    "cpu_pct_threshold",
    "links_threshold",
    "sitemap_threshold",
    "sink",
    "smtp_host",
    "smtp_port",
    "smtp_from",
    "smtp_to",
    "smtp_timeout_ms",
    "max_retries",
    "poll_ms",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {reason}")]
    Syntax { path: PathBuf, reason: String },
    #[error("{origin}: unknown key {key:?} in [{section}]")]
    UnknownKey { origin: String, section: String, key: String },
    #[error("{origin}: unknown section [{section}]")]
    UnknownSection { origin: String, section: String },
    #[error("[{section}] {key}: {reason}")]
    Invalid { section: String, key: String, reason: String },
    #[error("{0} is not set in the config")]
    Missing(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkKind {
    File,
    Smtp,
}

#[derive(Debug, Clone)]
pub struct MonitorSettings {
    pub event_log: Option<PathBuf>,
    pub window: Duration,
    pub group_by: GroupBy,
    /// Trained tree as JSON; the built-in tree otherwise.
    pub tree: Option<PathBuf>,
    pub thresholds: BuiltinThresholds,
    pub sitemap_threshold: usize,
    pub sink: SinkKind,
    pub smtp_host: String,
    pub smtp_port: u16,
    pub smtp_from: String,
    pub smtp_to: Vec<String>,
    pub smtp_timeout: Duration,
    pub max_retries: u32,
    pub poll: Duration,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        Self {
            event_log: None,
            window: Duration::from_secs(300),
            group_by: GroupBy::Script,
            tree: None,
            thresholds: BuiltinThresholds::default(),
            sitemap_threshold: 10,
            sink: SinkKind::File,
            smtp_host: "127.0.0.1".into(),
            smtp_port: 25,
            smtp_from: String::new(),
            smtp_to: Vec::new(),
            smtp_timeout: Duration::from_secs(10),
            max_retries: 3,
            poll: Duration::from_millis(1000),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogPaths {
    pub block_log: PathBuf,
    pub verdict_log: PathBuf,
    pub alert_log: PathBuf,
    pub dead_letter_log: PathBuf,
    pub scan_report: PathBuf,
    pub report_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub origin: Option<PathBuf>,
    pub base_dir: PathBuf,
    pub web_root: Option<PathBuf>,
    pub cms_name: String,
    pub cms_version: String,
    pub baseline_exclude: Vec<String>,
    pub sitemap: Option<PathBuf>,
    pub state_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub signature_path: Option<PathBuf>,
    pub quarantine_dir: PathBuf,
    pub geo_table_path: Option<PathBuf>,
    pub blacklist_store: PathBuf,
    pub logs: LogPaths,
    pub hardening: HardeningPolicy,
    pub php_ini: Option<PathBuf>,
    pub credentials: Option<PathBuf>,
    pub gateway: GatewayPolicy,
    pub listen: Option<SocketAddr>,
    pub upstream: Option<SocketAddr>,
    pub max_body_bytes: usize,
    pub monitor: MonitorSettings,
}

/// Every settable `(section, key)` pair.
pub fn known_keys() -> Vec<(&'static str, &'static str)> {
    let mut out = Vec::new();
    let mut add = |s: &'static str, keys: &[&'static str]| out.extend(keys.iter().map(|k| (s, *k)));
    add("site", SITE_KEYS);
    add("paths", PATH_KEYS);
    add("logs", LOG_KEYS);
    add("hardening", &HardeningPolicy::KEYS);
    add("hardening", HARDENING_EXTRA);
    add("gateway", &GatewayPolicy::KEYS);
    add("gateway", GATEWAY_EXTRA);
    add("monitor", MONITOR_KEYS);
    out
}

pub fn env_var_name(section: &str, key: &str) -> String {
    format!("HOSTGUARD_{}_{}", section.to_ascii_uppercase(), key.to_ascii_uppercase())
}

/// The config file to use: the flag, then `HOSTGUARD_CONFIG`, then
/// `hostguard.ini` in the working directory if it exists.
pub fn locate(flag: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = flag {
        return Some(p.to_path_buf());
    }
    if let Some(p) = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()) {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from(DEFAULT_CONFIG_NAME);
    local.is_file().then_some(local)
}

impl Config {
    pub fn load(flag: Option<&Path>) -> Result<Self, ConfigError> {
        let env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with("HOSTGUARD_")).collect();
        match locate(flag) {
            Some(path) => {
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Unreadable {
                    path: path.clone(),
                    source,
                })?;
                let base = path
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."));
                Self::from_parts(&text, Some(path), base, &env)
            }
            None => Self::from_parts("", None, PathBuf::from("."), &env),
        }
    }

    /// Builds a config from file text and `HOSTGUARD_*` variables.
    pub fn from_parts(
        text: &str,
        origin: Option<PathBuf>,
        base_dir: PathBuf,
        env: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let origin_name = origin
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "<defaults>".into());
        let doc = IniDocument::parse(text).map_err(|e| ConfigError::Syntax {
            path: origin.clone().unwrap_or_default(),
            reason: e.to_string(),
        })?;
        let known = known_keys();
        let mut settings: Vec<(String, String, String)> = Vec::new();
        for e in &doc.entries {
            let Some(section) = e.section.as_deref() else {
                return Err(ConfigError::Syntax {
                    path: origin.clone().unwrap_or_default(),
                    reason: format!("line {}: {} is outside any section", e.line, e.key),
                });
            };
            if !known.iter().any(|(s, _)| *s == section) {
                return Err(ConfigError::UnknownSection {
                    origin: origin_name,
                    section: section.to_string(),
                });
            }
            if !known.contains(&(section, e.key.as_str())) {
                return Err(ConfigError::UnknownKey {
                    origin: format!("{origin_name} line {}", e.line),
                    section: section.to_string(),
                    key: e.key.clone(),
                });
            }
            settings.push((section.to_string(), e.key.clone(), e.value.clone()));
        }
        for (name, value) in env {
            if name == CONFIG_ENV || !name.starts_with("HOSTGUARD_") {
                continue;
            }
            match known.iter().find(|(s, k)| env_var_name(s, k) == *name) {
                Some((s, k)) => settings.push((s.to_string(), k.to_string(), value.clone())),
                None if name == "HOSTGUARD_BLESS" || name == "HOSTGUARD_LOG" => {}
                None => {
                    return Err(ConfigError::UnknownKey {
                        origin: "environment".into(),
                        section: "-".into(),
                        key: name.clone(),
                    })
                }
            }
        }
        Self::build(&settings, base_dir, origin)
    }

    fn build(settings: &[(String, String, String)], base_dir: PathBuf, origin: Option<PathBuf>) -> Result<Self, ConfigError> {
        let resolve = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let get = |section: &str, key: &str| -> Option<&str> {
            settings
                .iter()
                .rev()
                .find(|(s, k, _)| s == section && k == key)
                .map(|(_, _, v)| v.as_str())
        };
        let path_opt = |section: &str, key: &str| get(section, key).filter(|v| !v.trim().is_empty()).map(|v| resolve(v.trim()));
        let invalid = |section: &str, key: &str, reason: String| ConfigError::Invalid {
            section: section.into(),
            key: key.into(),
            reason,
        };
        let num = |section: &str, key: &str, default: u64| -> Result<u64, ConfigError> {
            match get(section, key) {
                None => Ok(default),
                Some(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| invalid(section, key, format!("expected a non-negative integer, got {v:?}"))),
            }
        };
        let float = |section: &str, key: &str, default: f64| -> Result<f64, ConfigError> {
            match get(section, key) {
                None => Ok(default),
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite() && *f >= 0.0)
                    .ok_or_else(|| invalid(section, key, format!("expected a non-negative number, got {v:?}"))),
            }
        };
        let addr = |key: &str| -> Result<Option<SocketAddr>, ConfigError> {
            get("gateway", key)
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().parse().map_err(|_| invalid("gateway", key, format!("{v:?} is not ip:port"))))
                .transpose()
        };

        let state_dir = path_opt("paths", "state_dir").unwrap_or_else(|| base_dir.join("hostguard-state"));
        let in_state = |section: &str, key: &str, name: &str| path_opt(section, key).unwrap_or_else(|| state_dir.join(name));
        let logs = LogPaths {
            block_log: in_state("logs", "block_log", "logs/blocks.jsonl"),
            verdict_log: in_state("logs", "verdict_log", "logs/verdicts.jsonl"),
            alert_log: in_state("logs", "alert_log", "logs/alerts.jsonl"),
            dead_letter_log: in_state("logs", "dead_letter_log", "logs/dead-letters.jsonl"),
            scan_report: in_state("logs", "scan_report", "logs/scan.jsonl"),
            report_dir: in_state("logs", "report_dir", "reports"),
        };

        let mut hardening = HardeningPolicy::default();
        let mut gateway = GatewayPolicy::default();
        for (s, k, v) in settings {
            match s.as_str() {
                "hardening" if HardeningPolicy::KEYS.contains(&k.as_str()) => {
                    let v = if k == "weak_password_list" && !v.trim().is_empty() {
                        resolve(v.trim()).display().to_string()
                    } else {
                        v.clone()
                    };
                    hardening.set(k, &v).map_err(|e| invalid(s, k, e.to_string()))?
                }
                "gateway" if GatewayPolicy::KEYS.contains(&k.as_str()) => {
                    gateway.set(k, v).map_err(|e| invalid(s, k, e.to_string()))?
                }
                _ => {}
            }
        }

        let mut monitor = MonitorSettings {
            event_log: path_opt("monitor", "event_log"),
            tree: path_opt("monitor", "tree"),
            ..MonitorSettings::default()
        };
        let window_secs = num("monitor", "window_secs", monitor.window.as_secs())?;
        if window_secs == 0 {
            return Err(invalid("monitor", "window_secs", "must be positive".into()));
        }
        monitor.window = Duration::from_secs(window_secs);
        if let Some(g) = get("monitor", "group_by") {
            monitor.group_by = match g.trim() {
                "script" => GroupBy::Script,
                "global" => GroupBy::Global,
                other => return Err(invalid("monitor", "group_by", format!("expected script or global, got {other:?}"))),
            };
        }
        let d = BuiltinThresholds::default();
        monitor.thresholds = BuiltinThresholds {
            smtp: float("monitor", "smtp_threshold", d.smtp)?,
            exec_ms: float("monitor", "exec_ms_threshold", d.exec_ms)?,
            cpu_pct: float("monitor", "cpu_pct_threshold", d.cpu_pct)?,
            links: float("monitor", "links_threshold", d.links)?,
        };
        monitor.sitemap_threshold = num("monitor", "sitemap_threshold", monitor.sitemap_threshold as u64)? as usize;
        if let Some(s) = get("monitor", "sink") {
            monitor.sink = match s.trim() {
                "file" => SinkKind::File,
                "smtp" => SinkKind::Smtp,
                other => return Err(invalid("monitor", "sink", format!("expected file or smtp, got {other:?}"))),
            };
        }
        if let Some(h) = get("monitor", "smtp_host") {
            monitor.smtp_host = h.trim().to_string();
        }
        monitor.smtp_port = u16::try_from(num("monitor", "smtp_port", 25)?)
            .map_err(|_| invalid("monitor", "smtp_port", "out of range".into()))?;
        monitor.smtp_from = get("monitor", "smtp_from").unwrap_or_default().trim().to_string();
        monitor.smtp_to = get("monitor", "smtp_to").map(split_list).unwrap_or_default();
        monitor.smtp_timeout = Duration::from_millis(num("monitor", "smtp_timeout_ms", 10_000)?);
        monitor.max_retries = u32::try_from(num("monitor", "max_retries", 3)?)
            .map_err(|_| invalid("monitor", "max_retries", "out of range".into()))?;
        monitor.poll = Duration::from_millis(num("monitor", "poll_ms", 1000)?.max(10));
        if monitor.sink == SinkKind::Smtp && (monitor.smtp_from.is_empty() || monitor.smtp_to.is_empty()) {
            return Err(invalid("monitor", "sink", "smtp needs smtp_from and smtp_to".into()));
        }

        Ok(Config {
            web_root: path_opt("site", "web_root"),
            cms_name: get("site", "cms_name").unwrap_or("cms").trim().to_string(),
            cms_version: get("site", "cms_version").unwrap_or("unknown").trim().to_string(),
            baseline_exclude: get("site", "exclude").map(split_list).unwrap_or_default(),
            sitemap: path_opt("site", "sitemap"),
            manifest_path: in_state("paths", "manifest", "manifest.hgm"),
            signature_path: path_opt("paths", "signatures"),
            quarantine_dir: in_state("paths", "quarantine_dir", "quarantine"),
            geo_table_path: path_opt("paths", "geo_table"),
            blacklist_store: in_state("paths", "blacklist_store", "blacklist.jsonl"),
            php_ini: path_opt("hardening", "php_ini"),
            credentials: path_opt("hardening", "credentials"),
            listen: addr("listen")?,
            upstream: addr("upstream")?,
            max_body_bytes: usize::try_from(num("gateway", "max_body_bytes", 16 << 20)?).unwrap_or(usize::MAX),
            hardening,
            gateway,
            monitor,
            logs,
            state_dir,
            base_dir,
            origin,
        })
    }

    pub fn web_root(&self) -> Result<&Path, ConfigError> {
        self.web_root.as_deref().ok_or(ConfigError::Missing("[site] web_root"))
    }
}
