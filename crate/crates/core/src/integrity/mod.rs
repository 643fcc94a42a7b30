//! Hash baselines of the pristine CMS core, tree verification and quarantine.
//!
//! Build the baseline from trusted content only: the manifest certifies
//! whatever it is given. Paths matching the manifest's exclude globs (add-ons
//! and other code that cannot be trusted) are never hashed; verification
//! routes them to [`IntegrityReport::unknown_unhashed`] so the caller can
//! signature-scan them instead.

mod manifest;
mod quarantine;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::paths::{rel_path, PathFilter};

pub use manifest::{ManifestError, MANIFEST_MAGIC};
pub use quarantine::{
    QuarantineEntry, QuarantineError, QuarantineReason, QuarantineStatus, QuarantineStore,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub rel_path: String,
    pub size: u64,
    /// SHA-256, lowercase hex.
    pub digest: String,
    pub mode: u32,
    /// Set when the entry was hashed in this process; the manifest file does
    /// not carry per-entry timestamps.
    pub recorded_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaselineManifest {
    pub cms_name: String,
    pub cms_version: String,
    pub exclude_globs: Vec<String>,
    pub entries: BTreeMap<String, BaselineEntry>,
    pub sitemap_urls: Option<BTreeSet<String>>,
    pub manifest_digest: String,
}

impl BaselineManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, rel: &str) -> bool {
        self.entries.contains_key(rel)
    }

    /// Recomputes the digest over the canonical form and compares.
    pub fn verify_digest(&self) -> bool {
        self.canonical_digest() == self.manifest_digest
    }
}

#[derive(Debug, Clone, Default)]
pub struct BaselineOptions {
    pub cms_name: String,
    pub cms_version: String,
    pub exclude_globs: Vec<String>,
    /// Sitemap document whose `<loc>` URLs join the baseline.
    pub sitemap: Option<String>,
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("root {0} does not exist or is not a directory")]
    RootNotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("path {0:?} cannot be represented in a manifest")]
    UnrepresentablePath(PathBuf),
    #[error("invalid CMS name or version {0:?}: must be a non-empty token without whitespace")]
    InvalidLabel(String),
    #[error("invalid glob: {0}")]
    InvalidGlob(#[from] globset::Error),
    #[error("invalid sitemap: {0}")]
    InvalidSitemap(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> std::io::Result<(u64, String)> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut size = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        size += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((size, hex::encode(hasher.finalize())))
}

#[cfg(unix)]
pub fn mode_bits(md: &fs::Metadata) -> u32 {
    use std::os::unix::fs::PermissionsExt;
    md.permissions().mode() & 0o7777
}

#[cfg(not(unix))]
pub fn mode_bits(md: &fs::Metadata) -> u32 {
    if md.permissions().readonly() {
        0o444
    } else {
        0o644
    }
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c.is_control())
}

/// Hashes every non-excluded regular file under `root`.
///
/// Any unreadable file aborts the build.
pub fn build_baseline(root: &Path, opts: &BaselineOptions) -> Result<BaselineManifest, BaselineError> {
    if !root.is_dir() {
        return Err(BaselineError::RootNotFound(root.to_path_buf()));
    }
    for label in [&opts.cms_name, &opts.cms_version] {
        if !valid_label(label) {
            return Err(BaselineError::InvalidLabel(label.clone()));
        }
    }
    for g in &opts.exclude_globs {
        if g.trim().is_empty() || g.contains('\n') || g.trim() != g {
            return Err(BaselineError::InvalidLabel(g.clone()));
        }
    }
    let filter = PathFilter::new::<String>(&[], &opts.exclude_globs)?;
    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0
                || !e.file_type().is_dir()
                || rel_path(root, e.path()).is_none_or(|r| !filter.excluded(&r))
        });
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
            BaselineError::UnreadableFile {
                path,
                source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")),
            }
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = rel_path(root, entry.path())
            .filter(|r| !r.contains('\n') && !r.contains('\r'))
            .ok_or_else(|| BaselineError::UnrepresentablePath(entry.path().to_path_buf()))?;
        if filter.excluded(&rel) {
            continue;
        }
        files.push((rel, entry.into_path()));
    }

    let now = Utc::now();
    let hashed: Result<Vec<BaselineEntry>, BaselineError> = files
        .into_par_iter()
        .map(|(rel, path)| {
            let unreadable = |source| BaselineError::UnreadableFile {
                path: path.clone(),
                source,
            };
            let md = fs::metadata(&path).map_err(unreadable)?;
            let (size, digest) = hash_file(&path).map_err(unreadable)?;
            Ok(BaselineEntry {
                rel_path: rel,
                size,
                digest,
                mode: mode_bits(&md),
                recorded_at: Some(now),
            })
        })
        .collect();
    let entries = hashed?
        .into_iter()
        .map(|e| (e.rel_path.clone(), e))
        .collect();

    let sitemap_urls = match &opts.sitemap {
        Some(doc) => {
            let locs = crate::monitor::parse_sitemap(doc)
                .map_err(|e| BaselineError::InvalidSitemap(e.to_string()))?;
            for u in &locs {
                if !is_absolute_url(u) {
                    return Err(BaselineError::InvalidSitemap(format!(
                        "not an absolute URL: {u:?}"
                    )));
                }
            }
            Some(locs.into_iter().collect())
        }
        None => None,
    };

    let mut m = BaselineManifest {
        cms_name: opts.cms_name.clone(),
        cms_version: opts.cms_version.clone(),
        exclude_globs: opts.exclude_globs.clone(),
        entries,
        sitemap_urls,
        manifest_digest: String::new(),
    };
    m.manifest_digest = m.canonical_digest();
    Ok(m)
}

pub(crate) fn is_absolute_url(s: &str) -> bool {
    !s.chars().any(char::is_whitespace)
        && url::Url::parse(s).is_ok_and(|u| u.has_host() && !u.cannot_be_a_base())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionDrift {
    pub rel_path: String,
    pub expected_mode: u32,
    pub found_mode: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub modified: Vec<String>,
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub unknown_unhashed: Vec<String>,
    pub permissions_drift: Vec<PermissionDrift>,
}

impl IntegrityReport {
    pub fn is_clean(&self) -> bool {
        self.modified.is_empty()
            && self.added.is_empty()
            && self.removed.is_empty()
            && self.permissions_drift.is_empty()
    }

    /// Live paths worth a signature scan: changed, new or never hashed.
    pub fn suspects(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .modified
            .iter()
            .chain(&self.added)
            .chain(&self.unknown_unhashed)
            .cloned()
            .collect();
        out.sort();
        out
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("manifest digest does not verify")]
    ManifestTampered,
    #[error("root {0} does not exist or is not a directory")]
    RootNotFound(PathBuf),
    #[error("invalid glob in manifest: {0}")]
    InvalidGlob(#[from] globset::Error),
}

enum LiveState {
    Clean,
    Modified,
    Drift(u32, u32),
}

/// Classifies every live file against `manifest`.
///
/// Unreadable files and non-regular entries at baselined paths count as
/// modified.
pub fn verify_tree(root: &Path, manifest: &BaselineManifest) -> Result<IntegrityReport, VerifyError> {
    if !manifest.verify_digest() {
        return Err(VerifyError::ManifestTampered);
    }
    if !root.is_dir() {
        return Err(VerifyError::RootNotFound(root.to_path_buf()));
    }
    let filter = PathFilter::new::<String>(&[], &manifest.exclude_globs)?;
    let mut report = IntegrityReport::default();
    let mut seen = BTreeSet::new();
    let mut to_hash = Vec::new();
    for entry in WalkDir::new(root).follow_links(false).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                // unreadable directory: everything baselined beneath it is suspect
                if let Some(rel) = e.path().and_then(|p| rel_path(root, p)) {
                    let prefix = format!("{rel}/");
                    for k in manifest.entries.keys().filter(|k| k.starts_with(&prefix)) {
                        if seen.insert(k.clone()) {
                            report.modified.push(k.clone());
                        }
                    }
                }
                continue;
            }
        };
        if entry.file_type().is_dir() {
            continue;
        }
        let Some(rel) = rel_path(root, entry.path()) else {
            report.added.push(entry.path().to_string_lossy().into_owned());
            continue;
        };
        if filter.excluded(&rel) {
            report.unknown_unhashed.push(rel);
            continue;
        }
        match manifest.entries.get(&rel) {
            None => report.added.push(rel),
            Some(base) => {
                seen.insert(rel.clone());
                if entry.file_type().is_file() {
                    to_hash.push((base, entry.into_path()));
                } else {
                    report.modified.push(rel);
                }
            }
        }
    }
    let states: Vec<(String, LiveState)> = to_hash
        .into_par_iter()
        .map(|(base, path)| {
            let state = match (fs::symlink_metadata(&path), hash_file(&path)) {
                (Ok(md), Ok((size, digest))) => {
                    if size != base.size || digest != base.digest {
                        LiveState::Modified
                    } else if mode_bits(&md) != base.mode {
                        LiveState::Drift(base.mode, mode_bits(&md))
                    } else {
                        LiveState::Clean
                    }
                }
                _ => LiveState::Modified,
            };
            (base.rel_path.clone(), state)
        })
        .collect();
    for (rel, state) in states {
        match state {
            LiveState::Clean => {}
            LiveState::Modified => report.modified.push(rel),
            LiveState::Drift(expected_mode, found_mode) => {
                report.permissions_drift.push(PermissionDrift {
                    rel_path: rel,
                    expected_mode,
                    found_mode,
                })
            }
        }
    }
    report.removed = manifest
        .entries
        .keys()
        .filter(|k| !seen.contains(*k))
        .cloned()
        .collect();
    report.modified.sort();
    report.added.sort();
    report.unknown_unhashed.sort();
    report.permissions_drift.sort_by(|a, b| a.rel_path.cmp(&b.rel_path));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    fn opts() -> BaselineOptions {
        BaselineOptions {
            cms_name: "joomla".into(),
            cms_version: "3.9.0".into(),
            ..Default::default()
        }
    }

    fn write(root: &Path, rel: &str, body: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, body).unwrap();
    }

    #[test]
    fn empty_directory_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_baseline(dir.path(), &opts()).unwrap();
        assert!(m.is_empty());
        assert!(m.verify_digest());
        assert_eq!(m.manifest_digest.len(), 64);
    }

    #[test]
    fn missing_root() {
        assert!(matches!(
            build_baseline(Path::new("/nonexistent/hostguard"), &opts()),
            Err(BaselineError::RootNotFound(_))
        ));
    }

    #[test]
    fn excluded_components_are_not_hashed() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "index.php", "<?php echo 1;");
        write(dir.path(), "components/com_x/x.php", "<?php");
        let mut o = opts();
        o.exclude_globs = vec!["components/**".into()];
        let m = build_baseline(dir.path(), &o).unwrap();
        assert_eq!(m.entries.keys().collect::<Vec<_>>(), vec!["index.php"]);
        write(dir.path(), "components/com_y/new.php", "<?php");
        let r = verify_tree(dir.path(), &m).unwrap();
        assert!(r.is_clean());
        assert_eq!(r.unknown_unhashed, vec!["components/com_x/x.php", "components/com_y/new.php"]);
    }

    #[test]
    fn unreadable_file_aborts_baseline() {
        if unsafe { libc::geteuid() } == 0 {
            // root reads through mode 000; covered by the symlink loop case below
            let dir = tempfile::tempdir().unwrap();
            std::os::unix::fs::symlink("loop", dir.path().join("loop")).unwrap();
            // dangling or looping symlinks are not regular files and are skipped
            assert!(build_baseline(dir.path(), &opts()).is_ok());
            return;
        }
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "secret.php", "x");
        fs::set_permissions(dir.path().join("secret.php"), fs::Permissions::from_mode(0o000)).unwrap();
        assert!(matches!(
            build_baseline(dir.path(), &opts()),
            Err(BaselineError::UnreadableFile { .. })
        ));
    }

    #[test]
    fn planted_functions_php_is_added() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "libraries/joomla/loader.php", "<?php class JLoader {}");
        let m = build_baseline(dir.path(), &opts()).unwrap();
        write(dir.path(), "libraries/joomla/functions.php", "<?php @eval($_POST['x']);");
        let r = verify_tree(dir.path(), &m).unwrap();
        assert_eq!(r.added, vec!["libraries/joomla/functions.php"]);
        assert!(r.modified.is_empty() && r.removed.is_empty());
    }

    #[test]
    fn mode_change_alone_is_drift() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.php", "x");
        fs::set_permissions(dir.path().join("a.php"), fs::Permissions::from_mode(0o644)).unwrap();
        let m = build_baseline(dir.path(), &opts()).unwrap();
        fs::set_permissions(dir.path().join("a.php"), fs::Permissions::from_mode(0o777)).unwrap();
        let r = verify_tree(dir.path(), &m).unwrap();
        assert_eq!(
            r.permissions_drift,
            vec![PermissionDrift {
                rel_path: "a.php".into(),
                expected_mode: 0o644,
                found_mode: 0o777
            }]
        );
        assert!(r.modified.is_empty());
    }

    #[test]
    fn symlink_at_baselined_path_is_modified() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.php", "x");
        let m = build_baseline(dir.path(), &opts()).unwrap();
        fs::remove_file(dir.path().join("a.php")).unwrap();
        std::os::unix::fs::symlink("/etc/passwd", dir.path().join("a.php")).unwrap();
        let r = verify_tree(dir.path(), &m).unwrap();
        assert_eq!(r.modified, vec!["a.php"]);
    }

    #[test]
    fn in_memory_tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.php", "x");
        let mut m = build_baseline(dir.path(), &opts()).unwrap();
        m.entries.get_mut("a.php").unwrap().size += 1;
        assert!(matches!(verify_tree(dir.path(), &m), Err(VerifyError::ManifestTampered)));
    }

    #[test]
    fn sitemap_urls_are_captured() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = opts();
        o.sitemap = Some(
            "<?xml version=\"1.0\"?><urlset><url><loc>https://example.org/</loc></url><url><loc> https://example.org/about </loc></url></urlset>".into(),
        );
        let m = build_baseline(dir.path(), &o).unwrap();
        let urls: Vec<_> = m.sitemap_urls.unwrap().into_iter().collect();
        assert_eq!(urls, vec!["https://example.org/", "https://example.org/about"]);
        o.sitemap = Some("<urlset><url><loc>/relative</loc></url></urlset>".into());
        assert!(matches!(build_baseline(dir.path(), &o), Err(BaselineError::InvalidSitemap(_))));
    }
}
