//! Manifest file format.
//!
//! ```text
//! HOSTGUARD-MANIFEST v1 <cms_name> <cms_version>
//! EXCLUDE <glob>                      (zero or more)
//! <digest> <size> <mode> <rel_path>   (sorted by rel_path)
//! SITEMAP                             (optional section)
//! <url>
//! DIGEST <manifest_digest>
//! ```
//!
//! `mode` is octal, every line ends in LF, and `manifest_digest` is the
//! SHA-256 (lowercase hex) of every byte before the `DIGEST` line. The trailer
//! is checked before anything else is parsed, so any alteration of a
//! serialized manifest surfaces as [`ManifestError::Tampered`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{sha256_hex, BaselineEntry, BaselineManifest};

pub const MANIFEST_MAGIC: &str = "HOSTGUARD-MANIFEST";
const VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest digest does not verify")]
    Tampered,
    #[error("malformed manifest at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("cannot access manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BaselineManifest {
    /// Everything up to, not including, the `DIGEST` trailer.
    pub fn canonical_body(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MANIFEST_MAGIC} {VERSION} {} {}", self.cms_name, self.cms_version);
        for g in &self.exclude_globs {
            let _ = writeln!(out, "EXCLUDE {g}");
        }
        for e in self.entries.values() {
            let _ = writeln!(out, "{} {} {:o} {}", e.digest, e.size, e.mode, e.rel_path);
        }
        if let Some(urls) = &self.sitemap_urls {
            out.push_str("SITEMAP\n");
            for u in urls {
                out.push_str(u);
                out.push('\n');
            }
        }
        out
    }

    pub fn canonical_digest(&self) -> String {
        sha256_hex(self.canonical_body().as_bytes())
    }

    pub fn serialize(&self) -> String {
        let mut body = self.canonical_body();
        let _ = writeln!(body, "DIGEST {}", self.manifest_digest);
        body
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let io = |source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.serialize()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let raw = std::fs::read(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &[u8]) -> Result<Self, ManifestError> {
        let body_len = verify_trailer(raw)?;
        let digest = std::str::from_utf8(&raw[body_len + "DIGEST ".len()..raw.len() - 1])
            .map_err(|_| ManifestError::Tampered)?
            .to_string();
        let body = std::str::from_utf8(&raw[..body_len]).map_err(|_| ManifestError::Malformed {
            line: 1,
            reason: "not valid UTF-8".into(),
        })?;
        let m = parse_body(body, digest)?;
        // a verified file that is not in canonical form was not written by us
        if m.canonical_body().as_bytes() != &raw[..body_len] {
            return Err(ManifestError::Malformed {
                line: 1,
                reason: "manifest is not in canonical form".into(),
            });
        }
        Ok(m)
    }
}

/// Checks the `DIGEST` trailer and returns the body length.
fn verify_trailer(raw: &[u8]) -> Result<usize, ManifestError> {
    if raw.last() != Some(&b'\n') {
        return Err(ManifestError::Tampered);
    }
    let without_nl = &raw[..raw.len() - 1];
    let start = without_nl
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |p| p + 1);
    let trailer = &without_nl[start..];
    let hex = trailer.strip_prefix(b"DIGEST ").ok_or(ManifestError::Tampered)?;
    if hex.len() != 64 || !hex.iter().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(ManifestError::Tampered);
    }
    if sha256_hex(&raw[..start]).as_bytes() != hex {
        return Err(ManifestError::Tampered);
    }
    Ok(start)
}

fn parse_body(body: &str, manifest_digest: String) -> Result<BaselineManifest, ManifestError> {
    let bad = |line: usize, reason: &str| ManifestError::Malformed {
        line,
        reason: reason.to_string(),
    };
    let mut lines = body.split_terminator('\n').enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4 || parts[0] != MANIFEST_MAGIC {
        return Err(bad(1, "bad header"));
    }
    if parts[1] != VERSION {
        return Err(bad(1, &format!("unsupported manifest version {}", parts[1])));
    }
    let mut m = BaselineManifest {
        cms_name: parts[2].to_string(),
        cms_version: parts[3].to_string(),
        exclude_globs: Vec::new(),
        entries: BTreeMap::new(),
        sitemap_urls: None,
        manifest_digest,
    };
    let mut in_sitemap = false;
    for (n, line) in lines {
        if in_sitemap {
            if !super::is_absolute_url(line) {
                return Err(bad(n, "sitemap entry is not an absolute URL"));
            }
            m.sitemap_urls.get_or_insert_with(BTreeSet::new).insert(line.to_string());
            continue;
        }
        if line == "SITEMAP" {
            in_sitemap = true;
            m.sitemap_urls = Some(BTreeSet::new());
            continue;
        }
        if let Some(g) = line.strip_prefix("EXCLUDE ") {
            crate::paths::check_glob(g).map_err(|e| bad(n, &e.to_string()))?;
            m.exclude_globs.push(g.to_string());
            continue;
        }
        let mut f = line.splitn(4, ' ');
        let (Some(digest), Some(size), Some(mode), Some(rel)) = (f.next(), f.next(), f.next(), f.next())
        else {
            return Err(bad(n, "expected `digest size mode path`"));
        };
        if digest.len() != 64 || !digest.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(bad(n, "digest must be 64 lowercase hex characters"));
        }
        let size: u64 = size.parse().map_err(|_| bad(n, "invalid size"))?;
        let mode = u32::from_str_radix(mode, 8)
            .ok()
            .filter(|m| *m <= 0o7777)
            .ok_or_else(|| bad(n, "invalid octal mode"))?;
        if crate::paths::normalize_rel(rel).as_deref() != Some(rel) || rel.is_empty() {
            return Err(bad(n, "path is not normalized"));
        }
        let entry = BaselineEntry {
            rel_path: rel.to_string(),
            size,
            digest: digest.to_string(),
            mode,
            recorded_at: None,
        };
        if m.entries.insert(rel.to_string(), entry).is_some() {
            return Err(bad(n, "duplicate path"));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrity::{build_baseline, BaselineOptions};
    use proptest::prelude::*;

    fn sample() -> BaselineManifest {
        let dir = tempfile::tempdir().unwrap();
        for (rel, body) in [("index.php", "<?php"), ("a b/c.js", "x"), ("lib/x.php", "<?php 2")] {
            let p = dir.path().join(rel);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, body).unwrap();
        }
        build_baseline(
            dir.path(),
            &BaselineOptions {
                cms_name: "wordpress".into(),
                cms_version: "5.2".into(),
                exclude_globs: vec!["wp-content/plugins/**".into()],
                sitemap: Some("<urlset><url><loc>https://example.org/</loc></url></urlset>".into()),
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let text = m.serialize();
        assert!(text.starts_with("HOSTGUARD-MANIFEST v1 wordpress 5.2\nEXCLUDE wp-content/plugins/**\n"));
        assert!(text.contains(" a b/c.js\n"));
        let back = BaselineManifest::parse(text.as_bytes()).unwrap();
        assert_eq!(back.entries.len(), 3);
        assert_eq!(back.manifest_digest, m.manifest_digest);
        assert_eq!(back.serialize(), text);
    }

    #[test]
    fn uppercase_digest_is_tampering() {
        let text = sample().serialize();
        let pos = text.rfind("DIGEST ").unwrap() + 7;
        let mut bytes = text.into_bytes();
        bytes[pos..].iter_mut().filter(|b| b.is_ascii_lowercase()).take(1).for_each(|b| *b = b.to_ascii_uppercase());
        assert!(matches!(BaselineManifest::parse(&bytes), Err(ManifestError::Tampered)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]
        #[test]
        fn any_single_byte_change_is_tampering(pos in any::<prop::sample::Index>(), delta in 1u8..=255) {
            let text = sample().serialize().into_bytes();
            let i = pos.index(text.len());
            let mut bad = text.clone();
            bad[i] = bad[i].wrapping_add(delta);
            prop_assert!(matches!(BaselineManifest::parse(&bad), Err(ManifestError::Tampered)));
        }
    }
}
