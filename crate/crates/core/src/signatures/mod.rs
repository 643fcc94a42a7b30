//! Regex malware signatures.
//!
//! A signature file is UTF-8 text with one tab-separated record per line:
//!
//! ```text
//! id<TAB>threat_class<TAB>severity<TAB>flags<TAB>pattern<TAB>description
//! ```
//!
//! Lines starting with `#` are comments; a comment of the form
//! `# version: <text>` sets the set's version string. `flags` is a comma list
//! drawn from `ci` (case-insensitive, the default), `cs` (case-sensitive),
//! `binary_ok` (also applied to files that look binary) and `max=<bytes>`
//! (scan only the first `<bytes>` of a target); `-` means no flags.
//!
//! Pattern dialect: the `regex` crate's syntax in byte mode with Unicode
//! classes disabled. There are no backreferences or look-around, so matching
//! is linear in the input regardless of the pattern. Patterns that can match
//! the empty string are rejected.

mod scan;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::bytes::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fnv::fnv1a_64;

pub use scan::{
    scan_content, scan_files, scan_tree, FileSkip, ScanLimits, ScanReport, SignatureHit, SkipReason,
    DEFAULT_MAX_FILE_BYTES, EXCERPT_MAX_BYTES,
};

/// The seed corpus shipped with the crate.
pub const SEED_SIGNATURES: &str = include_str!("../../data/signatures/seed.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatClass {
    Webshell,
    Miner,
    PhishingRedirect,
    Injector,
    SpamMailer,
    GenericObfuscation,
}

impl ThreatClass {
    pub const ALL: [ThreatClass; 6] = [
        ThreatClass::Webshell,
        ThreatClass::Miner,
        ThreatClass::PhishingRedirect,
        ThreatClass::Injector,
        ThreatClass::SpamMailer,
        ThreatClass::GenericObfuscation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ThreatClass::Webshell => "webshell",
            ThreatClass::Miner => "miner",
            ThreatClass::PhishingRedirect => "phishing_redirect",
            ThreatClass::Injector => "injector",
            ThreatClass::SpamMailer => "spam_mailer",
            ThreatClass::GenericObfuscation => "generic_obfuscation",
        }
    }
}

impl FromStr for ThreatClass {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

impl fmt::Display for ThreatClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }
}

impl FromStr for Severity {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "low" => Ok(Severity::Low),
            "medium" => Ok(Severity::Medium),
            "high" => Ok(Severity::High),
            "critical" => Ok(Severity::Critical),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Signature {
    pub id: String,
    pub threat_class: ThreatClass,
    pub severity: Severity,
    pub pattern: String,
    pub description: String,
    pub case_insensitive: bool,
    pub binary_ok: bool,
    pub max_target_bytes: Option<usize>,
    regex: Regex,
}

impl Signature {
    pub fn regex(&self) -> &Regex {
        &self.regex
    }

    pub fn compile(
        id: &str,
        threat_class: ThreatClass,
        severity: Severity,
        pattern: &str,
        case_insensitive: bool,
    ) -> Result<Self, SignatureError> {
        let regex = compile_pattern(id, pattern, case_insensitive)?;
        Ok(Self {
            id: id.to_string(),
            threat_class,
            severity,
            pattern: pattern.to_string(),
            description: String::new(),
            case_insensitive,
            binary_ok: false,
            max_target_bytes: None,
            regex,
        })
    }
}

/// Upper bound on compiled program size; hostile signature files cannot blow
/// up memory.
const REGEX_SIZE_LIMIT: usize = 8 << 20;

fn compile_pattern(id: &str, pattern: &str, ci: bool) -> Result<Regex, SignatureError> {
    let regex = RegexBuilder::new(pattern)
        .case_insensitive(ci)
        .unicode(false)
        .size_limit(REGEX_SIZE_LIMIT)
        .dfa_size_limit(REGEX_SIZE_LIMIT)
        .build()
        .map_err(|e| SignatureError::PatternCompile {
            id: id.to_string(),
            reason: e.to_string(),
        })?;
    if regex.is_match(b"") {
        return Err(SignatureError::PatternCompile {
            id: id.to_string(),
            reason: "pattern matches the empty string".into(),
        });
    }
    Ok(regex)
}

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("malformed signature file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate signature id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("signature {id:?}: pattern does not compile: {reason}")]
    PatternCompile { id: String, reason: String },
    #[error("cannot read signature file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Immutable, ordered signature collection.
#[derive(Debug, Clone)]
pub struct SignatureSet {
    signatures: Vec<Signature>,
    pub version: String,
    pub loaded_from: PathBuf,
    /// FNV-1a 64 over the raw file bytes.
    pub checksum: u64,
}

impl SignatureSet {
    pub fn signatures(&self) -> &[Signature] {
        &self.signatures
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Signature> {
        self.signatures.iter().find(|s| s.id == id)
    }

    pub fn seed() -> Self {
        Self::parse(SEED_SIGNATURES.as_bytes(), Path::new("<seed>"))
            .expect("bundled seed corpus is valid")
    }

    /// Returns a new set with `sig` appended.
    pub fn with_signature(&self, sig: Signature) -> Result<Self, SignatureError> {
        if self.get(&sig.id).is_some() {
            return Err(SignatureError::DuplicateId {
                id: sig.id,
                line: 0,
            });
        }
        let mut next = self.clone();
        next.signatures.push(sig);
        Ok(next)
    }

    pub fn parse(raw: &[u8], origin: &Path) -> Result<Self, SignatureError> {
        let malformed = |line: usize, reason: &str| SignatureError::Malformed {
            line,
            reason: reason.to_string(),
        };
        let text = std::str::from_utf8(raw).map_err(|e| {
            let line = raw[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
            malformed(line, "file is not valid UTF-8")
        })?;
        let mut version = None;
        let mut signatures: Vec<Signature> = Vec::new();
        let mut last_line = 0;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = Some(v.trim().to_string());
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(malformed(
                    line_no,
                    &format!("expected 6 tab-separated fields, found {}", fields.len()),
                ));
            }
            let id = fields[0].trim();
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(malformed(line_no, "id must be non-empty without whitespace"));
            }
            let threat_class = fields[1]
                .trim()
                .parse::<ThreatClass>()
                .map_err(|_| malformed(line_no, &format!("unknown threat class {:?}", fields[1])))?;
            let severity = fields[2]
                .trim()
                .parse::<Severity>()
                .map_err(|_| malformed(line_no, &format!("unknown severity {:?}", fields[2])))?;
            let flags = parse_flags(fields[3]).map_err(|r| malformed(line_no, &r))?;
            let pattern = fields[4];
            if pattern.is_empty() {
                return Err(malformed(line_no, "empty pattern"));
            }
            if signatures.iter().any(|s| s.id == id) {
                return Err(SignatureError::DuplicateId {
                    id: id.to_string(),
                    line: line_no,
                });
            }
            let regex = compile_pattern(id, pattern, flags.case_insensitive)?;
            signatures.push(Signature {
                id: id.to_string(),
                threat_class,
                severity,
                pattern: pattern.to_string(),
                description: fields[5].trim().to_string(),
                case_insensitive: flags.case_insensitive,
                binary_ok: flags.binary_ok,
                max_target_bytes: flags.max_target_bytes,
                regex,
            });
        }
        if signatures.is_empty() {
            return Err(malformed(last_line.max(1), "no signatures defined"));
        }
        let checksum = fnv1a_64(raw);
        Ok(Self {
            signatures,
            version: version.unwrap_or_else(|| format!("{checksum:016x}")),
            loaded_from: origin.to_path_buf(),
            checksum,
        })
    }
}

/// Reads and compiles a signature file.
pub fn load_signatures(path: &Path) -> Result<SignatureSet, SignatureError> {
    let raw = std::fs::read(path).map_err(|source| SignatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SignatureSet::parse(&raw, path)
}

struct Flags {
    case_insensitive: bool,
    binary_ok: bool,
    max_target_bytes: Option<usize>,
}

fn parse_flags(raw: &str) -> Result<Flags, String> {
    let mut ci = None;
    let mut flags = Flags {
        case_insensitive: true,
        binary_ok: false,
        max_target_bytes: None,
    };
    let raw = raw.trim();
    if raw == "-" || raw.is_empty() {
        return Ok(flags);
    }
    for f in raw.split(',').map(str::trim) {
        match f {
            "ci" | "cs" => {
                let want = f == "ci";
                if ci.is_some_and(|c| c != want) {
                    return Err("flags ci and cs are mutually exclusive".into());
                }
                ci = Some(want);
            }
            "binary_ok" => flags.binary_ok = true,
            other => match other.strip_prefix("max=") {
                Some(n) => {
                    let n: usize = n
                        .parse()
                        .map_err(|_| format!("invalid max flag {other:?}"))?;
                    if n == 0 {
                        return Err("max must be positive".into());
                    }
                    flags.max_target_bytes = Some(n);
                }
                None => return Err(format!("unknown flag {other:?}")),
            },
        }
    }
    flags.case_insensitive = ci.unwrap_or(true);
    Ok(flags)
}
