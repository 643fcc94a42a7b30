use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use super::{Severity, SignatureSet, ThreatClass};
use crate::paths::{rel_path, PathFilter};

pub const DEFAULT_MAX_FILE_BYTES: u64 = 5 * 1024 * 1024;
pub const EXCERPT_MAX_BYTES: usize = 160;
const BINARY_SNIFF_BYTES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureHit {
    pub signature_id: String,
    /// Relative path for tree scans, or an origin tag such as `query:cmd`.
    pub file_path: String,
    pub byte_offset: usize,
    pub matched_excerpt: String,
    pub threat_class: ThreatClass,
    pub severity: Severity,
}

/// Applies every signature to `content`.
///
/// Hits come out in signature order, then by offset; each signature reports
/// its non-overlapping leftmost matches.
pub fn scan_content(content: &[u8], set: &SignatureSet, origin: &str) -> Vec<SignatureHit> {
    scan_with(content, set, origin, false)
}

fn scan_with(content: &[u8], set: &SignatureSet, origin: &str, binary_only: bool) -> Vec<SignatureHit> {
    let mut hits = Vec::new();
    for sig in set.signatures() {
        if binary_only && !sig.binary_ok {
            continue;
        }
        let target = match sig.max_target_bytes {
            Some(n) if n < content.len() => &content[..n],
            _ => content,
        };
        for m in sig.regex().find_iter(target) {
            if m.is_empty() {
                continue;
            }
            hits.push(SignatureHit {
                signature_id: sig.id.clone(),
                file_path: origin.to_string(),
                byte_offset: m.start(),
                matched_excerpt: excerpt(m.as_bytes()),
                threat_class: sig.threat_class,
                severity: sig.severity,
            });
        }
    }
    hits
}

fn excerpt(bytes: &[u8]) -> String {
    let cut = &bytes[..bytes.len().min(EXCERPT_MAX_BYTES)];
    match std::str::from_utf8(cut) {
        Ok(s) => s.to_string(),
        Err(e) if e.error_len().is_none() => {
            // truncated in the middle of a multi-byte character
            String::from_utf8_lossy(&cut[..e.valid_up_to()]).into_owned()
        }
        Err(_) => String::from_utf8_lossy(cut).into_owned(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanLimits {
    pub max_file_bytes: u64,
    pub follow_symlinks: bool,
    pub include_globs: Vec<String>,
    pub exclude_globs: Vec<String>,
}

impl Default for ScanLimits {
    fn default() -> Self {
        Self {
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
            follow_symlinks: false,
            include_globs: Vec::new(),
            exclude_globs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkipReason {
    TooLarge { size: u64, limit: u64 },
    Unreadable { error: String },
    BinaryExcluded,
    NotRegular,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSkip {
    pub path: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanReport {
    pub root: PathBuf,
    pub files_scanned: usize,
    pub files_skipped: Vec<FileSkip>,
    pub hits: Vec<SignatureHit>,
    pub duration_ms: u64,
    pub started_at: DateTime<Utc>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ReportLine<'a> {
    Hit(&'a SignatureHit),
    Summary {
        root: &'a Path,
        files_scanned: usize,
        files_skipped: &'a [FileSkip],
        hit_count: usize,
        #[serde(with = "crate::timefmt::rfc3339_ms")]
        started_at: DateTime<Utc>,
        duration_ms: u64,
    },
}

impl ScanReport {
    pub fn is_clean(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn files_visited(&self) -> usize {
        self.files_scanned + self.files_skipped.len()
    }

    /// Paths with at least one hit, in report order.
    pub fn hit_paths(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for h in &self.hits {
            if out.last() != Some(&h.file_path.as_str()) {
                out.push(&h.file_path);
            }
        }
        out
    }

    /// One JSON object per hit, then a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for h in &self.hits {
            out.push_str(&serde_json::to_string(&ReportLine::Hit(h)).expect("hit serializes"));
            out.push('\n');
        }
        let summary = ReportLine::Summary {
            root: &self.root,
            files_scanned: self.files_scanned,
            files_skipped: &self.files_skipped,
            hit_count: self.hits.len(),
            started_at: self.started_at,
            duration_ms: self.duration_ms,
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("scan root {0} does not exist or is not a directory")]
    RootNotFound(PathBuf),
    #[error("invalid glob: {0}")]
    InvalidGlob(#[from] globset::Error),
}

enum Outcome {
    Scanned(Vec<SignatureHit>),
    Skipped(SkipReason),
}

/// Walks `root` and scans every regular file accepted by the filters.
pub fn scan_tree(root: &Path, set: &SignatureSet, limits: &ScanLimits) -> Result<ScanReport, ScanError> {
    if !root.is_dir() {
        return Err(ScanError::RootNotFound(root.to_path_buf()));
    }
    let started_at = Utc::now();
    let clock = Instant::now();
    let filter = PathFilter::new(&limits.include_globs, &limits.exclude_globs)?;

    let mut candidates: Vec<(String, PathBuf)> = Vec::new();
    let mut skipped = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(limits.follow_symlinks)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0
                || !e.file_type().is_dir()
                || rel_path(root, e.path()).is_none_or(|r| !filter.excluded(&r))
        });
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                let path = err
                    .path()
                    .and_then(|p| rel_path(root, p))
                    .unwrap_or_default();
                skipped.push(FileSkip {
                    path,
                    reason: SkipReason::Unreadable {
                        error: err.to_string(),
                    },
                });
                continue;
            }
        };
        if entry.file_type().is_dir() {
            continue;
        }
        let Some(rel) = rel_path(root, entry.path()) else {
            skipped.push(FileSkip {
                path: entry.path().to_string_lossy().into_owned(),
                reason: SkipReason::Unreadable {
                    error: "path is not valid UTF-8".into(),
                },
            });
            continue;
        };
        if !filter.accepts(&rel) {
            continue;
        }
        if !entry.file_type().is_file() {
            skipped.push(FileSkip {
                path: rel,
                reason: SkipReason::NotRegular,
            });
            continue;
        }
        candidates.push((rel, entry.into_path()));
    }
    Ok(run_scan(root, set, limits, candidates, skipped, started_at, clock))
}

/// Scans an explicit list of relative paths under `root`.
///
/// Missing entries are recorded as unreadable skips.
pub fn scan_files<S: AsRef<str>>(
    root: &Path,
    rel_paths: &[S],
    set: &SignatureSet,
    limits: &ScanLimits,
) -> Result<ScanReport, ScanError> {
    if !root.is_dir() {
        return Err(ScanError::RootNotFound(root.to_path_buf()));
    }
    let started_at = Utc::now();
    let clock = Instant::now();
    let mut rels: Vec<String> = rel_paths.iter().map(|s| s.as_ref().to_string()).collect();
    rels.sort();
    rels.dedup();
    let mut candidates = Vec::new();
    let mut skipped = Vec::new();
    for rel in rels {
        let full = root.join(&rel);
        match fs::symlink_metadata(&full) {
            Ok(md) if md.is_file() => candidates.push((rel, full)),
            Ok(md) if md.file_type().is_symlink() && limits.follow_symlinks && full.is_file() => {
                candidates.push((rel, full))
            }
            Ok(_) => skipped.push(FileSkip {
                path: rel,
                reason: SkipReason::NotRegular,
            }),
            Err(e) => skipped.push(FileSkip {
                path: rel,
                reason: SkipReason::Unreadable {
                    error: e.to_string(),
                },
            }),
        }
    }
    Ok(run_scan(root, set, limits, candidates, skipped, started_at, clock))
}

fn run_scan(
    root: &Path,
    set: &SignatureSet,
    limits: &ScanLimits,
    candidates: Vec<(String, PathBuf)>,
    mut skipped: Vec<FileSkip>,
    started_at: DateTime<Utc>,
    clock: Instant,
) -> ScanReport {
    let outcomes: Vec<(String, Outcome)> = candidates
        .into_par_iter()
        .map(|(rel, path)| {
            let outcome = scan_one(&path, &rel, set, limits);
            (rel, outcome)
        })
        .collect();

    let mut files_scanned = 0;
    let mut hits = Vec::new();
    for (rel, outcome) in outcomes {
        match outcome {
            Outcome::Scanned(h) => {
                files_scanned += 1;
                hits.extend(h);
            }
            Outcome::Skipped(reason) => skipped.push(FileSkip { path: rel, reason }),
        }
    }
    hits.sort_by(|a, b| {
        a.file_path
            .cmp(&b.file_path)
            .then(a.byte_offset.cmp(&b.byte_offset))
    });
    skipped.sort_by(|a, b| a.path.cmp(&b.path));
    ScanReport {
        root: root.to_path_buf(),
        files_scanned,
        files_skipped: skipped,
        hits,
        duration_ms: clock.elapsed().as_millis() as u64,
        started_at,
    }
}

fn scan_one(path: &Path, rel: &str, set: &SignatureSet, limits: &ScanLimits) -> Outcome {
    let unreadable = |e: std::io::Error| {
        Outcome::Skipped(SkipReason::Unreadable {
            error: e.to_string(),
        })
    };
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => return unreadable(e),
    };
    let size = match file.metadata() {
        Ok(m) => m.len(),
        Err(e) => return unreadable(e),
    };
    if size > limits.max_file_bytes {
        return Outcome::Skipped(SkipReason::TooLarge {
            size,
            limit: limits.max_file_bytes,
        });
    }
    let mut content = Vec::with_capacity(size as usize);
    if let Err(e) = file
        .take(limits.max_file_bytes.saturating_add(1))
        .read_to_end(&mut content)
    {
        return unreadable(e);
    }
    if content.len() as u64 > limits.max_file_bytes {
        // grew while we were reading
        return Outcome::Skipped(SkipReason::TooLarge {
            size: content.len() as u64,
            limit: limits.max_file_bytes,
        });
    }
    let binary = looks_binary(&content);
    if binary && !set.signatures().iter().any(|s| s.binary_ok) {
        return Outcome::Skipped(SkipReason::BinaryExcluded);
    }
    Outcome::Scanned(scan_with(&content, set, rel, binary))
}

/// A NUL byte in the first 4 KiB marks content as binary.
pub fn looks_binary(content: &[u8]) -> bool {
    content[..content.len().min(BINARY_SNIFF_BYTES)].contains(&0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signatures::{Signature, SignatureSet};
    use proptest::prelude::*;

    fn seed() -> SignatureSet {
        static SEED: std::sync::OnceLock<SignatureSet> = std::sync::OnceLock::new();
        SEED.get_or_init(SignatureSet::seed).clone()
    }

    #[test]
    fn eval_base64_is_one_webshell_hit() {
        let hits = scan_content(
            b"<?php eval(base64_decode('ZWNobyAxOw==')); ?>",
            &seed(),
            "t",
        );
        let eval: Vec<_> = hits.iter().filter(|h| h.signature_id == "php.eval.b64").collect();
        assert_eq!(eval.len(), 1);
        assert_eq!(eval[0].threat_class, ThreatClass::Webshell);
        assert_eq!(eval[0].byte_offset, 6);
    }

    #[test]
    fn empty_content_has_no_hits() {
        assert!(scan_content(b"", &seed(), "t").is_empty());
    }

    #[test]
    fn coinhive_constructor_is_a_miner() {
        let js = b"/*! jQuery v3.3.1 */var m=new CoinHive.Anonymous('SITEKEY',{throttle:0.2});m.start();";
        let hits = scan_content(js, &seed(), "jquery.min.js");
        assert!(hits.iter().any(|h| h.threat_class == ThreatClass::Miner));
    }

    #[test]
    fn non_overlapping_leftmost() {
        let set = SignatureSet::parse(b"a\twebshell\thigh\t-\taba\td\n", Path::new("t")).unwrap();
        let offs: Vec<_> = scan_content(b"ababababa", &set, "t")
            .into_iter()
            .map(|h| h.byte_offset)
            .collect();
        assert_eq!(offs, vec![0, 4]);
    }

    #[test]
    fn excerpt_is_truncated_on_char_boundary() {
        let set = SignatureSet::parse("a\twebshell\thigh\t-\tx[^y]+y\td\n".as_bytes(), Path::new("t")).unwrap();
        let mut content = b"x".to_vec();
        content.extend("é".repeat(200).as_bytes());
        content.push(b'y');
        let hits = scan_content(&content, &set, "t");
        assert_eq!(hits.len(), 1);
        let ex = &hits[0].matched_excerpt;
        assert!(ex.len() <= EXCERPT_MAX_BYTES);
        assert!(String::from_utf8_lossy(&content).contains(ex.as_str()));
    }

    #[test]
    fn max_target_bytes_bounds_the_scan() {
        let set = SignatureSet::parse(b"a\twebshell\thigh\tmax=8\tevil\td\n", Path::new("t")).unwrap();
        assert_eq!(scan_content(b"evil....", &set, "t").len(), 1);
        assert!(scan_content(b"........evil", &set, "t").is_empty());
    }

    fn padding() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(prop_oneof![Just(b'\n'), Just(b' ')], 0..64)
    }

    fn payload() -> impl Strategy<Value = Vec<u8>> {
        let fragments = prop_oneof![
            Just(b"eval(base64_decode($x));".to_vec()),
            Just(b"new CoinHive.Anonymous('k');".to_vec()),
            Just(b"<?php echo 1; ?>".to_vec()),
            Just(b"gzinflate(base64_decode('eJ'))".to_vec()),
            Just(b"hello world ".to_vec()),
            proptest::collection::vec(any::<u8>(), 0..32),
        ];
        proptest::collection::vec(fragments, 0..6).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn embedding_shifts_offsets(c in payload(), pre in padding(), post in padding()) {
            let set = seed();
            let base = scan_content(&c, &set, "o");
            let mut big = pre.clone();
            big.extend_from_slice(&c);
            big.extend_from_slice(&post);
            let embedded = scan_content(&big, &set, "o");
            let shifted: Vec<_> = base
                .into_iter()
                .map(|mut h| { h.byte_offset += pre.len(); h })
                .collect();
            prop_assert_eq!(shifted, embedded);
        }

        #[test]
        fn hits_lie_inside_content(c in payload()) {
            for h in scan_content(&c, &seed(), "o") {
                prop_assert!(h.byte_offset < c.len());
                let ex = h.matched_excerpt.as_bytes();
                if std::str::from_utf8(&c).is_ok() {
                    prop_assert!(c[h.byte_offset..].starts_with(ex));
                }
            }
        }

        #[test]
        fn adding_a_signature_keeps_hits(c in payload()) {
            let set = seed();
            let before = scan_content(&c, &set, "o");
            let extra = Signature::compile("extra.echo", ThreatClass::Injector, Severity::Low, "echo", true).unwrap();
            let after = scan_content(&c, &set.with_signature(extra).unwrap(), "o");
            for h in &before {
                prop_assert!(after.contains(h));
            }
        }
    }
}
