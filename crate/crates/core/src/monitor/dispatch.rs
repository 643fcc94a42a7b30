//! Alert delivery with bounded retries and a dead-letter file.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use lettre::message::{header::ContentType, Mailbox, Message};
use lettre::transport::smtp::SmtpTransport;
use lettre::Transport;
use serde::Serialize;
use thiserror::Error;

use super::alerts::Alert;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct SinkError(pub String);

pub trait AlertSink {
    fn describe(&self) -> String;
    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError>;
}

pub fn append_line(path: &Path, line: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    f.write_all(&buf)?;
    f.sync_data()
}

/// Appends alerts as JSON lines.
pub struct FileSink {
    pub path: PathBuf,
}

impl AlertSink for FileSink {
    fn describe(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError> {
        append_line(&self.path, &alert.to_json_line()).map_err(|e| SinkError(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SmtpSettings {
    pub host: String,
    pub port: u16,
    pub from: String,
    pub to: Vec<String>,
    pub timeout: Duration,
}

/// Sends each alert as a plain-text mail over unauthenticated, unencrypted
/// SMTP, as offered by a local relay on most shared hosts.
pub struct SmtpSink {
    settings: SmtpSettings,
    transport: SmtpTransport,
}

impl SmtpSink {
    pub fn new(settings: SmtpSettings) -> Result<Self, SinkError> {
        settings
            .from
            .parse::<Mailbox>()
            .map_err(|e| SinkError(format!("bad sender {:?}: {e}", settings.from)))?;
        if settings.to.is_empty() {
            return Err(SinkError("no recipients".into()));
        }
        for r in &settings.to {
            r.parse::<Mailbox>()
                .map_err(|e| SinkError(format!("bad recipient {r:?}: {e}")))?;
        }
        let transport = SmtpTransport::builder_dangerous(&settings.host)
            .port(settings.port)
            .timeout(Some(settings.timeout))
            .build();
        Ok(Self { settings, transport })
    }
}

pub fn alert_message_body(alert: &Alert) -> String {
    format!(
        "category: {}\nseverity: {}\nsubject: {}\nwindow: {} .. {}\nalert id: {}\n\n{}\n",
        alert.category,
        alert.severity,
        alert.subject,
        fmt_ms(alert.window_start),
        fmt_ms(alert.window_end),
        alert.alert_id,
        alert.detail
    )
}

fn fmt_ms(ms: i64) -> String {
    chrono::DateTime::from_timestamp_millis(ms)
        .map(|t| crate::timefmt::format_ms(&t))
        .unwrap_or_else(|| ms.to_string())
}

impl AlertSink for SmtpSink {
    fn describe(&self) -> String {
        format!("smtp:{}:{}", self.settings.host, self.settings.port)
    }

    fn deliver(&mut self, alert: &Alert) -> Result<(), SinkError> {
        let mut b = Message::builder()
            .from(self.settings.from.parse().expect("validated in new"))
            .subject(format!(
                "[hostguard] {} {}: {}",
                alert.severity, alert.category, alert.subject
            ))
            .header(ContentType::TEXT_PLAIN);
        for r in &self.settings.to {
            b = b.to(r.parse().expect("validated in new"));
        }
        let msg = b
            .body(alert_message_body(alert))
            .map_err(|e| SinkError(e.to_string()))?;
        self.transport
            .send(&msg)
            .map(|_| ())
            .map_err(|e| SinkError(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles for each later one.
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryRecord {
    pub alert_id: String,
    pub sink: String,
    pub delivered: bool,
    pub retry_count: u32,
    pub dead_lettered: bool,
    pub last_error: Option<String>,
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("sink {} unavailable after {} retries: {reason}; alert {} dead-lettered", .record.sink, .record.retry_count, .record.alert_id)]
    SinkUnavailable { record: DeliveryRecord, reason: String },
    #[error("alert {alert_id} could not be delivered nor dead-lettered: {source}")]
    DeadLetterFailed {
        alert_id: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize)]
struct DeadLetter<'a> {
    alert: &'a Alert,
    sink: &'a str,
    attempts: u32,
    error: &'a str,
}

/// Delivers `alert`, retrying up to `policy.max_retries` times. When every
/// attempt fails the alert goes to `dead_letter` and the call reports
/// `SinkUnavailable`.
pub fn dispatch_alert(
    alert: &Alert,
    sink: &mut dyn AlertSink,
    policy: &RetryPolicy,
    dead_letter: &Path,
) -> Result<DeliveryRecord, DispatchError> {
    let mut retries = 0;
    let reason = loop {
        match sink.deliver(alert) {
            Ok(()) => {
                return Ok(DeliveryRecord {
                    alert_id: alert.alert_id.clone(),
                    sink: sink.describe(),
                    delivered: true,
                    retry_count: retries,
                    dead_lettered: false,
                    last_error: None,
                })
            }
            Err(e) if retries < policy.max_retries => {
                log::warn!("alert {} to {}: {e}; retrying", alert.alert_id, sink.describe());
                std::thread::sleep(policy.base_backoff * 2u32.pow(retries));
                retries += 1;
            }
            Err(e) => break e.0,
        }
    };
    let name = sink.describe();
    let line = serde_json::to_string(&DeadLetter {
        alert,
        sink: &name,
        attempts: retries + 1,
        error: &reason,
    })
    .expect("dead letter serializes");
    append_line(dead_letter, &line).map_err(|source| DispatchError::DeadLetterFailed {
        alert_id: alert.alert_id.clone(),
        source,
    })?;
    Err(DispatchError::SinkUnavailable {
        record: DeliveryRecord {
            alert_id: alert.alert_id.clone(),
            sink: name,
            delivered: false,
            retry_count: retries,
            dead_lettered: true,
            last_error: Some(reason.clone()),
        },
        reason,
    })
}
