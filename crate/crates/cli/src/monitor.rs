use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use hostguard::integrity::BaselineManifest;
use hostguard::monitor::alerts::manifest_key;
use hostguard::monitor::{
    builtin_tree, classify_windows, core_touch_alerts, dispatch_alert, drift_alert, ingest, parse_event_line,
    sitemap_drift, window_features_with, Alert, AlertSink, BehaviorEvent, DecisionTree, DispatchError, FileSink,
    RetryPolicy, FEATURE_NAMES, SmtpSettings, SmtpSink,
};

use crate::config::{Config, ConfigError, SinkKind};
use crate::{failed, CliError, CmdResult, Status};

pub fn load_tree(cfg: &Config) -> Result<DecisionTree, CliError> {
    let Some(p) = &cfg.monitor.tree else {
        return Ok(builtin_tree(&cfg.monitor.thresholds));
    };
    let text = fs::read_to_string(p).map_err(CliError::io(format!("reading tree {}", p.display())))?;
    let tree: DecisionTree = serde_json::from_str(&text).map_err(|e| failed(format!("{}: {e}", p.display())))?;
    tree.validate_for(FEATURE_NAMES.len()).map_err(|e| failed(format!("{}: {e}", p.display())))?;
    Ok(tree)
}

/// The baseline if one has been recorded.
pub fn load_manifest(cfg: &Config) -> Result<Option<BaselineManifest>, CliError> {
    if !cfg.manifest_path.exists() {
        return Ok(None);
    }
    BaselineManifest::load(&cfg.manifest_path)
        .map(Some)
        .map_err(|e| failed(format!("{}: {e}", cfg.manifest_path.display())))
}

/// Classification alerts for the windows covering `events`.
pub fn window_alerts(
    cfg: &Config,
    tree: &DecisionTree,
    manifest: Option<&BaselineManifest>,
    events: &[BehaviorEvent],
) -> Vec<Alert> {
    let root = cfg.web_root.as_deref();
    let is_core = |p: &str| match manifest {
        Some(m) => manifest_key(p, root).is_some_and(|k| m.contains(&k)),
        None => true,
    };
    let windows = window_features_with(events, cfg.monitor.window.as_secs(), cfg.monitor.group_by, is_core);
    classify_windows(tree, &windows)
}

fn mtime_ms(p: &Path) -> Option<i64> {
    let t = fs::metadata(p).ok()?.modified().ok()?;
    i64::try_from(t.duration_since(UNIX_EPOCH).ok()?.as_millis()).ok()
}

/// Drift between the live sitemap and the one recorded with the baseline.
pub fn sitemap_alert(cfg: &Config, manifest: Option<&BaselineManifest>) -> Result<Option<Alert>, CliError> {
    let (Some(path), Some(base)) = (&cfg.sitemap, manifest.and_then(|m| m.sitemap_urls.as_ref())) else {
        return Ok(None);
    };
    let text = fs::read_to_string(path).map_err(CliError::io(format!("reading sitemap {}", path.display())))?;
    let report = sitemap_drift(&text, base, cfg.monitor.sitemap_threshold)
        .map_err(|e| failed(format!("{}: {e}", path.display())))?;
    Ok(drift_alert(&report, &path.display().to_string(), mtime_ms(path).unwrap_or(0)))
}

pub struct Dispatcher {
    sink: Box<dyn AlertSink>,
    retry: RetryPolicy,
    dead_letter: PathBuf,
    /// Set when the sink is not the alert log itself.
    alert_log: Option<PathBuf>,
    seen: HashSet<String>,
}

/// Alert ids already in the alert log.
pub fn recorded_alert_ids(alert_log: &Path) -> HashSet<String> {
    let Ok(f) = File::open(alert_log) else { return HashSet::new() };
    BufReader::new(f)
        .lines()
        .map_while(Result::ok)
        .filter_map(|l| serde_json::from_str::<Alert>(&l).ok())
        .map(|a| a.alert_id)
        .collect()
}

impl Dispatcher {
    pub fn new(cfg: &Config) -> Result<Self, CliError> {
        let m = &cfg.monitor;
        let (sink, alert_log): (Box<dyn AlertSink>, _) = match m.sink {
            SinkKind::File => (
                Box::new(FileSink {
                    path: cfg.logs.alert_log.clone(),
                }),
                None,
            ),
            SinkKind::Smtp => (
                Box::new(
                    SmtpSink::new(SmtpSettings {
                        host: m.smtp_host.clone(),
                        port: m.smtp_port,
                        from: m.smtp_from.clone(),
                        to: m.smtp_to.clone(),
                        timeout: m.smtp_timeout,
                    })
                    .map_err(|e| ConfigError::Invalid {
                        section: "monitor".into(),
                        key: "sink".into(),
                        reason: e.to_string(),
                    })?,
                ),
                Some(cfg.logs.alert_log.clone()),
            ),
        };
        Ok(Self {
            sink,
            retry: RetryPolicy {
                max_retries: m.max_retries,
                ..RetryPolicy::default()
            },
            dead_letter: cfg.logs.dead_letter_log.clone(),
            seen: recorded_alert_ids(&cfg.logs.alert_log),
            alert_log,
        })
    }

    /// Prints the alert and delivers it unless the alert log already has it.
    pub fn raise(&mut self, a: &Alert) -> Result<(), CliError> {
        println!("ALERT {} {} {}: {}", a.severity, a.category, a.subject, a.detail);
        if !self.seen.insert(a.alert_id.clone()) {
            return Ok(());
        }
        if let Some(log) = &self.alert_log {
            hostguard::monitor::dispatch::append_line(log, &a.to_json_line())
                .map_err(CliError::io(format!("writing {}", log.display())))?;
        }
        match dispatch_alert(a, self.sink.as_mut(), &self.retry, &self.dead_letter) {
            Ok(_) => Ok(()),
            Err(e @ DispatchError::SinkUnavailable { .. }) => {
                eprintln!("hostguard: {e}");
                Ok(())
            }
            Err(e) => Err(failed(e)),
        }
    }
}

pub fn run(cfg: &Config, follow: bool) -> CmdResult {
    let log = cfg
        .monitor
        .event_log
        .clone()
        .ok_or(ConfigError::Missing("[monitor] event_log"))?;
    let tree = load_tree(cfg)?;
    let manifest = load_manifest(cfg)?;
    let mut dispatcher = Dispatcher::new(cfg)?;
    if follow {
        return follow_log(cfg, &log, &tree, manifest.as_ref(), &mut dispatcher);
    }

    let f = File::open(&log).map_err(CliError::io(format!("opening event log {}", log.display())))?;
    let ingested = ingest(BufReader::new(f)).map_err(failed)?;
    if let Some(first) = ingested.skipped.first() {
        eprintln!(
            "skipped {} malformed event lines (first: line {}: {})",
            ingested.skipped.len(),
            first.line,
            first.reason
        );
    }
    let events = &ingested.events;
    let mut alerts = window_alerts(cfg, &tree, manifest.as_ref(), events);
    if let Some(m) = &manifest {
        alerts.extend(core_touch_alerts(events, m, cfg.web_root.as_deref()));
    }
    alerts.extend(sitemap_alert(cfg, manifest.as_ref())?);
    for a in &alerts {
        dispatcher.raise(a)?;
    }
    println!("{} events, {} alerts", events.len(), alerts.len());
    Ok(if alerts.is_empty() { Status::Clean } else { Status::Findings })
}

/// Tails the event log. A window is classified once an event from a later
/// window arrives; core-file touches alert immediately.
fn follow_log(
    cfg: &Config,
    log: &Path,
    tree: &DecisionTree,
    manifest: Option<&BaselineManifest>,
    dispatcher: &mut Dispatcher,
) -> CmdResult {
    let window_ms = i64::try_from(cfg.monitor.window.as_millis()).unwrap_or(i64::MAX);
    let mut offset = 0u64;
    let mut carry: Vec<u8> = Vec::new();
    let mut pending: Vec<BehaviorEvent> = Vec::new();
    let mut sitemap_seen: Option<i64> = None;
    loop {
        let len = fs::metadata(log)
            .map_err(CliError::io(format!("reading event log {}", log.display())))?
            .len();
        if len < offset {
            eprintln!("event log shrank; reading from the start");
            offset = 0;
            carry.clear();
        }
        let mut fresh = Vec::new();
        if len > offset {
            let mut f = File::open(log).map_err(CliError::io(format!("opening {}", log.display())))?;
            f.seek(SeekFrom::Start(offset)).map_err(CliError::io("seeking event log"))?;
            let n = f.read_to_end(&mut carry).map_err(CliError::io("reading event log"))?;
            offset += n as u64;
            let complete = carry.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            for line in carry[..complete].split(|b| *b == b'\n') {
                let line = String::from_utf8_lossy(line);
                if line.trim().is_empty() {
                    continue;
                }
                match parse_event_line(line.trim()) {
                    Ok(ev) => fresh.push(ev),
                    Err(reason) => eprintln!("skipping event line: {reason}"),
                }
            }
            carry.drain(..complete);
        }
        if let Some(m) = manifest {
            for a in core_touch_alerts(&fresh, m, cfg.web_root.as_deref()) {
                dispatcher.raise(&a)?;
            }
        }
        pending.extend(fresh);
        if let Some(latest) = pending.iter().map(|e| e.timestamp).max() {
            let cutoff = latest.div_euclid(window_ms) * window_ms;
            let (closed, open): (Vec<_>, Vec<_>) = pending.into_iter().partition(|e| e.timestamp < cutoff);
            pending = open;
            if !closed.is_empty() {
                for a in window_alerts(cfg, tree, manifest, &closed) {
                    dispatcher.raise(&a)?;
                }
            }
        }
        if let Some(p) = &cfg.sitemap {
            let m = mtime_ms(p);
            if m != sitemap_seen {
                sitemap_seen = m;
                if let Some(a) = sitemap_alert(cfg, manifest)? {
                    dispatcher.raise(&a)?;
                }
            }
        }
        std::thread::sleep(cfg.monitor.poll);
    }
}
