//! Behavior events as emitted by web-server or PHP hooks, one JSON object
//! per line:
//!
//! ```text
//! {"timestamp":1700000000000,"kind":"script_exec","script_path":"index.php","duration_ms":120,"cpu_pct":12.5}
//! {"timestamp":1700000000100,"kind":"outbound_msg","protocol":"smtp","dest":"mx.example.net","script_path":"tmp/m.php"}
//! {"timestamp":1700000000200,"kind":"file_touch","script_path":"tmp/upd.php","touched_path":"index.php"}
//! {"timestamp":1700000000300,"kind":"link_created","dest":"https://example.com/p/1"}
//! ```
//!
//! `timestamp` is milliseconds since the Unix epoch, UTC.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Smtp,
    Http,
    Dns,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventBody {
    ScriptExec {
        script_path: String,
        duration_ms: u64,
        cpu_pct: f64,
    },
    OutboundMsg {
        protocol: Protocol,
        dest: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script_path: Option<String>,
    },
    FileTouch {
        script_path: String,
        touched_path: String,
    },
    LinkCreated {
        dest: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        script_path: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub timestamp: i64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl BehaviorEvent {
    /// The script the event is attributed to, if any.
    pub fn script(&self) -> Option<&str> {
        match &self.body {
            EventBody::ScriptExec { script_path, .. } | EventBody::FileTouch { script_path, .. } => {
                Some(script_path)
            }
            EventBody::OutboundMsg { script_path, .. } | EventBody::LinkCreated { script_path, .. } => {
                script_path.as_deref()
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match &self.body {
            EventBody::ScriptExec {
                script_path,
                cpu_pct,
                ..
            } => {
                if !(0.0..=100.0).contains(cpu_pct) {
                    return Err(format!("cpu_pct {cpu_pct} outside 0..=100"));
                }
                non_empty("script_path", script_path)
            }
            EventBody::OutboundMsg { dest, .. } | EventBody::LinkCreated { dest, .. } => {
                non_empty("dest", dest)
            }
            EventBody::FileTouch {
                script_path,
                touched_path,
            } => non_empty("script_path", script_path).and(non_empty("touched_path", touched_path)),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

fn non_empty(field: &str, v: &str) -> Result<(), String> {
    if v.is_empty() {
        Err(format!("{field} is empty"))
    } else {
        Ok(())
    }
}

pub fn parse_event_line(line: &str) -> Result<BehaviorEvent, String> {
    let ev: BehaviorEvent = serde_json::from_str(line).map_err(|e| e.to_string())?;
    ev.validate()?;
    Ok(ev)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    /// Sorted by timestamp; equal timestamps keep log order.
    pub events: Vec<BehaviorEvent>,
    pub skipped: Vec<SkippedLine>,
    /// Lines whose timestamp went backwards relative to the previous event.
    pub out_of_order: usize,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("event stream unreadable: {0}")]
    StreamUnreadable(#[from] std::io::Error),
}

/// Reads line-delimited events. Blank lines are ignored; malformed lines are
/// skipped and reported by 1-based line number.
pub fn ingest<R: BufRead>(mut reader: R) -> Result<Ingested, IngestError> {
    let mut out = Ingested::default();
    let mut buf = Vec::new();
    let mut line_no = 0;
    let mut last_ts = i64::MIN;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t.trim(),
            Err(_) => {
                out.skipped.push(SkippedLine {
                    line: line_no,
                    reason: "not UTF-8".into(),
                });
                continue;
            }
        };
        if text.is_empty() {
            continue;
        }
        match parse_event_line(text) {
            Ok(ev) => {
                if ev.timestamp < last_ts {
                    out.out_of_order += 1;
                }
                last_ts = last_ts.max(ev.timestamp);
                out.events.push(ev);
            }
            Err(reason) => out.skipped.push(SkippedLine { line: line_no, reason }),
        }
    }
    if out.out_of_order > 0 {
        out.events.sort_by_key(|e| e.timestamp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"timestamp":1000,"kind":"script_exec","script_path":"index.php","duration_ms":120,"cpu_pct":12.5}
{"timestamp":1100,"kind":"outbound_msg","protocol":"smtp","dest":"mx.example.net","script_path":"tmp/m.php"}
{"timestamp":1200,"kind":"file_touch","script_path":"tmp/upd.php","touched_path":"index.php"}
{"timestamp":1300,"kind":"link_created","dest":"https://example.com/p/1"}
"#;

    #[test]
    fn parses_all_kinds() {
        let r = ingest(SAMPLE.as_bytes()).unwrap();
        assert_eq!(r.events.len(), 4);
        assert!(r.skipped.is_empty());
        assert_eq!(r.events[1].script(), Some("tmp/m.php"));
        assert_eq!(r.events[3].script(), None);
        for ev in &r.events {
            assert_eq!(parse_event_line(&ev.to_json_line()).unwrap(), *ev);
        }
    }

    #[test]
    fn corrupt_lines_are_reported() {
        let mut lines: Vec<String> = SAMPLE.lines().map(String::from).collect();
        lines.insert(1, "{not json".into());
        lines.insert(3, r#"{"timestamp":5,"kind":"script_exec","script_path":"a.php","duration_ms":1,"cpu_pct":140}"#.into());
        lines.insert(5, r#"{"timestamp":5,"kind":"file_touch","script_path":"a.php"}"#.into());
        let text = lines.join("\n");
        let r = ingest(text.as_bytes()).unwrap();
        assert_eq!(r.events.len(), 4);
        let nums: Vec<usize> = r.skipped.iter().map(|s| s.line).collect();
        assert_eq!(nums, vec![2, 4, 6]);
    }

    #[test]
    fn empty_stream() {
        let r = ingest(&b""[..]).unwrap();
        assert!(r.events.is_empty() && r.skipped.is_empty());
    }

    #[test]
    fn reorders_by_timestamp() {
        let text = r#"{"timestamp":30,"kind":"link_created","dest":"a"}
{"timestamp":10,"kind":"link_created","dest":"b"}
{"timestamp":20,"kind":"link_created","dest":"c"}"#;
        let r = ingest(text.as_bytes()).unwrap();
        let ts: Vec<i64> = r.events.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        assert_eq!(r.out_of_order, 2);
    }
}
