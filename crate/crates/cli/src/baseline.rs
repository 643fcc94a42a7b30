use std::fs;

use hostguard::integrity::{build_baseline, BaselineOptions};

use crate::config::Config;
use crate::{confirm, failed, CliError, CmdResult, Status};

pub fn run(cfg: &Config, yes: bool, cms_name: Option<String>, cms_version: Option<String>) -> CmdResult {
    let root = cfg.web_root()?;
    if !yes {
        let q = format!("Record {} as the pristine baseline?", root.display());
        if !confirm(&q).map_err(CliError::io("reading confirmation"))? {
            return Err(failed("aborted; pass --yes to skip the prompt"));
        }
    }
    let sitemap = match &cfg.sitemap {
        Some(p) => Some(fs::read_to_string(p).map_err(CliError::io(format!("reading sitemap {}", p.display())))?),
        None => None,
    };
    let opts = BaselineOptions {
        cms_name: cms_name.unwrap_or_else(|| cfg.cms_name.clone()),
        cms_version: cms_version.unwrap_or_else(|| cfg.cms_version.clone()),
        exclude_globs: cfg.baseline_exclude.clone(),
        sitemap,
    };
    let manifest = build_baseline(root, &opts).map_err(failed)?;
    if let Some(dir) = cfg.manifest_path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    }
    manifest.save(&cfg.manifest_path).map_err(failed)?;
    println!("manifest: {}", cfg.manifest_path.display());
    println!("entries: {}", manifest.len());
    if let Some(urls) = &manifest.sitemap_urls {
        println!("sitemap urls: {}", urls.len());
    }
    println!("digest: {}", manifest.manifest_digest);
    Ok(Status::Clean)
}
