//! Small ini-style parser shared by php.ini audits, policy files and the
//! operator config.
//!
//! Accepted syntax: `[section]` headers, `key = value` pairs, full-line
//! comments starting with `;` or `#`, and inline `;` comments after unquoted
//! values. Values may be wrapped in single or double quotes. Keys keep their
//! original spelling (php.ini keys such as `session.gc_maxlifetime` contain
//! dots); lookups are case-sensitive for keys and case-insensitive for
//! sections.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct IniError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IniEntry {
    /// Lowercased section name, `None` before the first header.
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IniDocument {
    pub entries: Vec<IniEntry>,
    pub sections: Vec<String>,
}

impl IniDocument {
    pub fn parse(text: &str) -> Result<Self, IniError> {
        let mut doc = IniDocument::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_start_matches('\u{feff}').trim();
            if line.is_empty() || line.starts_with(';') || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| IniError {
                line: line_no,
                reason: reason.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(err("empty section name"));
                }
                let name = name.to_ascii_lowercase();
                if !doc.sections.contains(&name) {
                    doc.sections.push(name.clone());
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key"));
            }
            if key.chars().any(|c| c.is_whitespace() || c == '[' || c == ']') {
                return Err(err("key contains whitespace or brackets"));
            }
            let value = parse_value(value.trim()).map_err(|r| err(r))?;
            doc.entries.push(IniEntry {
                section: section.clone(),
                key: key.to_string(),
                value,
                line: line_no,
            });
        }
        Ok(doc)
    }

    /// Last value for `key` inside `section` (`None` = before any header).
    pub fn get(&self, section: Option<&str>, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.key == key && section_eq(e.section.as_deref(), section))
            .map(|e| e.value.as_str())
    }

    /// Last value for `key` regardless of section, php.ini semantics.
    pub fn get_any(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.key == key)
            .map(|e| e.value.as_str())
    }

    pub fn section_entries<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a IniEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| section_eq(e.section.as_deref(), Some(section)))
    }
}

fn section_eq(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
        _ => false,
    }
}

fn parse_value(v: &str) -> Result<String, &'static str> {
    for q in ['"', '\''] {
        if let Some(rest) = v.strip_prefix(q) {
            let end = rest.find(q).ok_or("unterminated quoted value")?;
            let tail = rest[end + 1..].trim();
            if !(tail.is_empty() || tail.starts_with(';') || tail.starts_with('#')) {
                return Err("trailing text after quoted value");
            }
            return Ok(rest[..end].to_string());
        }
    }
    let v = match v.find(" ;").or_else(|| v.find("\t;")) {
        Some(pos) => &v[..pos],
        None => v,
    };
    Ok(v.trim().to_string())
}

/// php.ini boolean reading: `On`, `1`, `true`, `yes` are truthy.
pub fn truthy(v: &str) -> bool {
    matches!(
        v.trim().to_ascii_lowercase().as_str(),
        "on" | "1" | "true" | "yes"
    )
}

/// Splits a comma separated list, trimming and dropping empties.
pub fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
