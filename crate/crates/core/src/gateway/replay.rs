//! Offline evaluation of a recorded trace.

use std::io::{self, BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use super::request::HttpRequestRecord;
use super::verdict::Decision;
use super::Gateway;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ReplayStats {
    pub requests: usize,
    pub allowed: usize,
    pub challenged: usize,
    pub blocked: usize,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Evaluates each JSON line of `input` in order and writes one verdict
/// line per request. Blank lines are skipped.
pub fn replay<R: BufRead, W: Write>(gw: &Gateway, input: R, out: &mut W) -> Result<ReplayStats, ReplayError> {
    let mut stats = ReplayStats::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: HttpRequestRecord = serde_json::from_str(&line).map_err(|e| ReplayError::BadRecord {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let v = gw.evaluate(&req);
        stats.requests += 1;
        match v.decision {
            Decision::Allow => stats.allowed += 1,
            Decision::Challenge => stats.challenged += 1,
            Decision::Block => stats.blocked += 1,
        }
        out.write_all(v.to_json_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(stats)
}
