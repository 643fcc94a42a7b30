//! Sitemap parsing and drift against the baselined URL set.

use std::collections::BTreeSet;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SitemapParseError {
    #[error("malformed XML at byte {pos}: {reason}")]
    Xml { pos: u64, reason: String },
    #[error("root element is <{0}>, expected <urlset> or <sitemapindex>")]
    UnexpectedRoot(String),
    #[error("document has no root element")]
    Empty,
    #[error("nested <loc> element")]
    NestedLoc,
}

/// `<loc>` values in document order, trimmed. Accepts `<urlset>` and
/// `<sitemapindex>` roots, with or without a namespace prefix.
pub fn parse_sitemap(doc: &str) -> Result<Vec<String>, SitemapParseError> {
    let mut reader = Reader::from_str(doc);
    reader.config_mut().trim_text(false);
    let mut locs = Vec::new();
    let mut current: Option<String> = None;
    let mut depth = 0usize;
    let mut seen_root = false;
    loop {
        let ev = reader.read_event().map_err(|e| SitemapParseError::Xml {
            pos: reader.error_position(),
            reason: e.to_string(),
        })?;
        match ev {
            Event::Start(e) => {
                let name = e.local_name();
                let name = String::from_utf8_lossy(name.as_ref()).into_owned();
                if depth == 0 {
                    if seen_root {
                        return Err(SitemapParseError::Xml {
                            pos: reader.buffer_position(),
                            reason: "second root element".into(),
                        });
                    }
                    check_root(&name)?;
                    seen_root = true;
                }
                depth += 1;
                if name == "loc" {
                    if current.is_some() {
                        return Err(SitemapParseError::NestedLoc);
                    }
                    current = Some(String::new());
                }
            }
            Event::Empty(e) => {
                if depth == 0 {
                    let name = e.local_name();
                    check_root(&String::from_utf8_lossy(name.as_ref()))?;
                    seen_root = true;
                }
            }
            Event::End(e) => {
                depth = depth.saturating_sub(1);
                if e.local_name().as_ref() == b"loc" {
                    if let Some(loc) = current.take() {
                        let loc = loc.trim();
                        if !loc.is_empty() {
                            locs.push(loc.to_string());
                        }
                    }
                }
            }
            Event::Text(t) => {
                if let Some(cur) = current.as_mut() {
                    let text = t.unescape().map_err(|e| SitemapParseError::Xml {
                        pos: reader.buffer_position(),
                        reason: e.to_string(),
                    })?;
                    cur.push_str(&text);
                }
            }
            Event::CData(t) => {
                if let Some(cur) = current.as_mut() {
                    cur.push_str(&String::from_utf8_lossy(&t));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !seen_root {
        return Err(SitemapParseError::Empty);
    }
    if depth != 0 {
        return Err(SitemapParseError::Xml {
            pos: reader.buffer_position(),
            reason: "unclosed element".into(),
        });
    }
    Ok(locs)
}

fn check_root(name: &str) -> Result<(), SitemapParseError> {
    if name == "urlset" || name == "sitemapindex" {
        Ok(())
    } else {
        Err(SitemapParseError::UnexpectedRoot(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftReport {
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
    pub flagged: bool,
}

pub fn sitemap_drift(
    current: &str,
    baseline_urls: &BTreeSet<String>,
    new_link_threshold: usize,
) -> Result<DriftReport, SitemapParseError> {
    let now: BTreeSet<String> = parse_sitemap(current)?.into_iter().collect();
    Ok(drift_between(&now, baseline_urls, new_link_threshold))
}

pub fn drift_between(
    current: &BTreeSet<String>,
    baseline: &BTreeSet<String>,
    new_link_threshold: usize,
) -> DriftReport {
    let added: BTreeSet<String> = current.difference(baseline).cloned().collect();
    let removed = baseline.difference(current).cloned().collect();
    DriftReport {
        flagged: added.len() >= new_link_threshold,
        added,
        removed,
    }
}

/// Renders a `<urlset>` document for `urls`.
pub fn render_sitemap<'a>(urls: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<urlset xmlns=\"http://www.sitemaps.org/schemas/sitemap/0.9\">\n",
    );
    for u in urls {
        out.push_str("  <url><loc>");
        out.push_str(&quick_xml::escape::escape(u));
        out.push_str("</loc></url>\n");
    }
    out.push_str("</urlset>\n");
    out
}
