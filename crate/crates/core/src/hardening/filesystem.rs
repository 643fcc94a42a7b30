//! File and directory permission audit.

use std::path::{Path, PathBuf};

use thiserror::Error;
use walkdir::WalkDir;

use super::{Finding, FindingCategory, HardeningPolicy};
use crate::integrity::mode_bits;
use crate::paths::rel_path;
use crate::signatures::Severity;

#[derive(Debug, Error)]
pub enum FilesystemError {
    #[error("root {0} does not exist or is not a directory")]
    RootNotFound(PathBuf),
}

/// Directory subjects end in `/`; the root itself is `./`. Symlinks are not
/// followed and not judged. Entries that cannot be read are logged and
/// skipped.
pub fn audit_filesystem(root: &Path, policy: &HardeningPolicy) -> Result<Vec<Finding>, FilesystemError> {
    if !root.is_dir() {
        return Err(FilesystemError::RootNotFound(root.to_path_buf()));
    }
    let mut findings = Vec::new();
    for entry in WalkDir::new(root).follow_links(false).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                log::warn!("permission audit skipped an entry: {e}");
                continue;
            }
        };
        let ft = entry.file_type();
        let (max, is_dir) = if ft.is_dir() {
            (policy.max_dir_mode, true)
        } else if ft.is_file() {
            (policy.max_file_mode, false)
        } else {
            continue;
        };
        let Ok(md) = entry.metadata() else { continue };
        let mode = mode_bits(&md);
        if mode & !max == 0 {
            continue;
        }
        let Some(rel) = rel_path(root, entry.path()) else { continue };
        let subject = match (is_dir, rel.is_empty()) {
            (true, true) => "./".to_string(),
            (true, false) => format!("{rel}/"),
            (false, _) => rel,
        };
        let severity = if mode & 0o002 != 0 {
            Severity::Critical
        } else if mode & 0o020 != 0 || mode & 0o7000 != 0 {
            Severity::High
        } else {
            Severity::Medium
        };
        findings.push(Finding {
            finding_id: format!("permissions:{subject}"),
            category: FindingCategory::Permissions,
            subject,
            observed: format!("{mode:o}"),
            expected: format!("{:o}", mode & max),
            severity,
            remediable: false,
            fix: None,
        });
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::os::unix::fs::PermissionsExt;

    fn chmod(p: &Path, mode: u32) {
        fs::set_permissions(p, fs::Permissions::from_mode(mode)).unwrap();
    }

    #[test]
    fn conforming_tree_is_clean() {
        let d = tempfile::tempdir().unwrap();
        chmod(d.path(), 0o755);
        fs::create_dir(d.path().join("lib")).unwrap();
        chmod(&d.path().join("lib"), 0o755);
        fs::write(d.path().join("lib/a.php"), "x").unwrap();
        chmod(&d.path().join("lib/a.php"), 0o644);
        fs::write(d.path().join("index.php"), "x").unwrap();
        chmod(&d.path().join("index.php"), 0o600);
        assert!(audit_filesystem(d.path(), &HardeningPolicy::default()).unwrap().is_empty());
    }

    #[test]
    fn world_writable_is_critical() {
        let d = tempfile::tempdir().unwrap();
        chmod(d.path(), 0o755);
        fs::create_dir(d.path().join("uploads")).unwrap();
        chmod(&d.path().join("uploads"), 0o777);
        fs::write(d.path().join("config.php"), "x").unwrap();
        chmod(&d.path().join("config.php"), 0o777);
        fs::write(d.path().join("run.sh"), "x").unwrap();
        chmod(&d.path().join("run.sh"), 0o755);
        let f = audit_filesystem(d.path(), &HardeningPolicy::default()).unwrap();
        let got: Vec<(&str, Severity, &str)> = f
            .iter()
            .map(|f| (f.subject.as_str(), f.severity, f.expected.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                ("config.php", Severity::Critical, "644"),
                ("run.sh", Severity::Medium, "644"),
                ("uploads/", Severity::Critical, "755"),
            ]
        );
    }

    #[test]
    fn missing_root() {
        assert!(audit_filesystem(Path::new("/definitely/not/here"), &HardeningPolicy::default()).is_err());
    }
}
