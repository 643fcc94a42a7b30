//! The page a visitor sees instead of the site when a request is stopped.

use std::fmt::Write as _;

use thiserror::Error;

use super::verdict::{Decision, Verdict};

pub const EVIDENCE_MAX_CHARS: usize = 160;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("allowed requests have no warning page")]
pub struct AllowVerdict;

pub fn reason_text(code: &str) -> &'static str {
    match code {
        "MAINTENANCE" => "site under maintenance",
        "BLACKLISTED" => "previously flagged request",
        "DNSBL_LISTED" => "address listed by a reputation service",
        "REPUTATION_UNAVAILABLE" => "address reputation could not be confirmed",
        "GEO_BLOCKED" => "region not served",
        "AGENT_BLOCKED" => "automated client",
        "AGENT_MISSING" => "missing browser identification",
        "LFI" => "local file inclusion",
        "RFI" => "remote file inclusion",
        "ENCODING_DEPTH" => "suspicious nested encoding",
        "PAYLOAD_SIGNATURE" => "malicious payload",
        "UPLOAD_EXTENSION" => "forbidden upload type",
        "UPLOAD_PHP_CONTENT" => "script content in upload",
        "FAILED_LOGINS" => "repeated failed logins",
        "RATE_LIMIT" => "too many requests",
        "STATE_UNAVAILABLE" => "security state unavailable",
        _ => "security policy",
    }
}

pub fn headline(v: &Verdict) -> String {
    let lead = match v.decision {
        Decision::Challenge => "verification required",
        _ => "request blocked",
    };
    format!("{lead}: {}", reason_text(&v.reason_code))
}

/// HTTP status to send with the page.
pub fn status_code(v: &Verdict) -> u16 {
    match (v.decision, v.reason_code.as_str()) {
        (Decision::Allow, _) => 200,
        (_, "MAINTENANCE") => 503,
        (Decision::Challenge, "RATE_LIMIT") => 429,
        _ => 403,
    }
}

/// Escapes markup characters and replaces control characters after
/// clipping to [`EVIDENCE_MAX_CHARS`].
pub fn escape_clipped(s: &str) -> String {
    let mut out = String::with_capacity(s.len().min(EVIDENCE_MAX_CHARS * 6));
    let mut chars = s.chars();
    for c in chars.by_ref().take(EVIDENCE_MAX_CHARS) {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c if c.is_control() => out.push('?'),
            c => out.push(c),
        }
    }
    if chars.next().is_some() {
        out.push_str("...");
    }
    out
}

pub fn render_warning(v: &Verdict) -> Result<String, AllowVerdict> {
    if v.decision == Decision::Allow {
        return Err(AllowVerdict);
    }
    let title = headline(v);
    let mut page = String::new();
    page.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    page.push_str("<meta name=\"robots\" content=\"noindex\">\n");
    let _ = writeln!(page, "<title>{title}</title>");
    page.push_str("</head>\n<body>\n");
    let _ = writeln!(page, "<h1>{title}</h1>");
    page.push_str(
        "<p>The site's security filter stopped this request. If you think this is a mistake, \
         contact the site owner and quote the request id below.</p>\n",
    );
    let _ = writeln!(page, "<p>Request id: <code>{}</code></p>", v.request_id);
    let _ = writeln!(
        page,
        "<p>Stage: <code>{}</code>, reason: <code>{}</code></p>",
        v.stage,
        escape_clipped(&v.reason_code)
    );
    if v.decision == Decision::Challenge {
        if let Some(id) = v.challenge_id() {
            let id = escape_clipped(id);
            let _ = writeln!(page, "<div class=\"challenge\" data-challenge-id=\"{id}\"></div>");
            let _ = writeln!(
                page,
                "<p>Complete the check, then repeat the request with header <code>X-Hostguard-Challenge: {id}:&lt;answer&gt;</code>.</p>"
            );
        }
    }
    let shown: Vec<&String> = v.evidence.iter().filter(|e| !e.starts_with("challenge_id=")).collect();
    if !shown.is_empty() {
        page.push_str("<ul class=\"evidence\">\n");
        for e in shown {
            let _ = writeln!(page, "<li>{}</li>", escape_clipped(e));
        }
        page.push_str("</ul>\n");
    }
    page.push_str("</body>\n</html>\n");
    Ok(page)
}
