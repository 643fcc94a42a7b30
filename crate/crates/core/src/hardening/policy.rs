use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const DEFAULT_WEAK_PASSWORDS: &str = include_str!("../../data/weak_passwords.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct HardeningPolicy {
    /// Function names and `*_include`-style directives, in emission order.
    pub banned_functions: Vec<String>,
    /// Seconds.
    pub max_session_lifetime: u64,
    pub max_file_mode: u32,
    pub max_dir_mode: u32,
    pub forbidden_usernames: BTreeSet<String>,
    pub min_password_entropy_bits: f64,
    /// `None` uses the bundled list.
    pub weak_password_list: Option<PathBuf>,
}

impl Default for HardeningPolicy {
    fn default() -> Self {
        Self {
            banned_functions: ["shell_exec", "popen", "proc_open", "exec", "passthru", "system", "allow_url_include"]
                .map(String::from)
                .to_vec(),
            max_session_lifetime: 1440,
            max_file_mode: 0o644,
            max_dir_mode: 0o755,
            forbidden_usernames: ["admin", "administrator", "root"].map(String::from).into(),
            min_password_entropy_bits: 50.0,
            weak_password_list: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("unknown hardening key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("cannot read weak password list {path}: {reason}")]
    WeakListUnreadable { path: PathBuf, reason: String },
}

pub fn parse_mode(s: &str) -> Option<u32> {
    let s = s.trim().trim_start_matches("0o");
    if s.is_empty() || s.len() > 4 {
        return None;
    }
    u32::from_str_radix(s, 8).ok().filter(|m| *m <= 0o7777)
}

impl HardeningPolicy {
    pub const KEYS: [&'static str; 7] = [
        "banned_functions",
        "max_session_lifetime",
        "max_file_mode",
        "max_dir_mode",
        "forbidden_usernames",
        "min_password_entropy_bits",
        "weak_password_list",
    ];

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PolicyError> {
        let invalid = |reason: &str| PolicyError::InvalidValue {
            key: key.to_string(),
            reason: reason.to_string(),
        };
        match key {
            "banned_functions" => {
                let mut list: Vec<String> = Vec::new();
                for f in crate::ini::split_list(value) {
                    let f = f.to_ascii_lowercase();
                    if !f.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
                        return Err(invalid(&format!("{f:?} is not a function or directive name")));
                    }
                    if !list.contains(&f) {
                        list.push(f);
                    }
                }
                if list.is_empty() {
                    return Err(invalid("must name at least one function"));
                }
                self.banned_functions = list;
            }
            "max_session_lifetime" => {
                self.max_session_lifetime = value
                    .trim()
                    .parse()
                    .ok()
                    .filter(|v| *v > 0)
                    .ok_or_else(|| invalid("expected a positive number of seconds"))?
            }
            "max_file_mode" => {
                self.max_file_mode = parse_mode(value)
                    .filter(|m| *m <= 0o777)
                    .ok_or_else(|| invalid("expected an octal mode such as 644"))?
            }
            "max_dir_mode" => {
                self.max_dir_mode = parse_mode(value)
                    .filter(|m| *m <= 0o777)
                    .ok_or_else(|| invalid("expected an octal mode such as 755"))?
            }
            "forbidden_usernames" => {
                self.forbidden_usernames = crate::ini::split_list(value)
                    .into_iter()
                    .map(|u| u.to_lowercase())
                    .collect()
            }
            "min_password_entropy_bits" => {
                self.min_password_entropy_bits = value
                    .trim()
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| invalid("expected a non-negative number"))?
            }
            "weak_password_list" => {
                let v = value.trim();
                self.weak_password_list = if v.is_empty() { None } else { Some(PathBuf::from(v)) };
            }
            other => return Err(PolicyError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Lowercased weak passwords from the configured list or the bundled one.
    pub fn weak_passwords(&self) -> Result<BTreeSet<String>, PolicyError> {
        let text = match &self.weak_password_list {
            None => DEFAULT_WEAK_PASSWORDS.to_string(),
            Some(p) => read_list(p)?,
        };
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect())
    }
}

fn read_list(p: &Path) -> Result<String, PolicyError> {
    std::fs::read_to_string(p).map_err(|e| PolicyError::WeakListUnreadable {
        path: p.to_path_buf(),
        reason: e.to_string(),
    })
}
