//! Relative-path normalization and glob matching for tree walks.

use std::path::{Component, Path};

use globset::{Glob, GlobSet, GlobSetBuilder};

/// Converts `path` (under `root`) to a forward-slash relative path with no
/// `.`/`..` components. Returns `None` for paths outside `root` or that are
/// not valid UTF-8.
pub fn rel_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let mut parts = Vec::new();
    for c in rel.components() {
        match c {
            Component::Normal(s) => parts.push(s.to_str()?),
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(parts.join("/"))
}

/// Normalizes a textual relative path: backslashes to slashes, drops empty and
/// `.` segments, rejects `..`.
pub fn normalize_rel(s: &str) -> Option<String> {
    let mut parts = Vec::new();
    for seg in s.split(['/', '\\']) {
        match seg {
            "" | "." => {}
            ".." => return None,
            other => parts.push(other),
        }
    }
    Some(parts.join("/"))
}

/// Compiled include/exclude filter over relative paths.
#[derive(Debug, Clone)]
pub struct PathFilter {
    include: Option<GlobSet>,
    exclude: GlobSet,
}

impl PathFilter {
    pub fn new<S: AsRef<str>>(include: &[S], exclude: &[S]) -> Result<Self, globset::Error> {
        let include = if include.is_empty() {
            None
        } else {
            Some(build(include)?)
        };
        Ok(Self {
            include,
            exclude: build(exclude)?,
        })
    }

    pub fn excluded(&self, rel: &str) -> bool {
        self.exclude.is_match(rel)
    }

    pub fn included(&self, rel: &str) -> bool {
        self.include.as_ref().is_none_or(|g| g.is_match(rel))
    }

    pub fn accepts(&self, rel: &str) -> bool {
        !self.excluded(rel) && self.included(rel)
    }
}

fn build<S: AsRef<str>>(globs: &[S]) -> Result<GlobSet, globset::Error> {
    let mut b = GlobSetBuilder::new();
    for g in globs {
        b.add(
            globset::GlobBuilder::new(g.as_ref())
                .literal_separator(true)
                .build()?,
        );
    }
    b.build()
}

/// Validates a single glob without building a set.
pub fn check_glob(g: &str) -> Result<(), globset::Error> {
    Glob::new(g).map(|_| ())
}
