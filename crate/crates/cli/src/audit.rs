use std::fs;
use std::path::Path;

use hostguard::hardening::{audit_credentials, audit_filesystem, audit_runtime_config, emit_remediation, hosting_checklist, Finding};

use crate::config::Config;
use crate::{failed, CliError, CmdResult, Status};

pub const OVERRIDES_FILE: &str = "php-overrides.ini";
pub const ACCESS_FILE: &str = "htaccess.conf";
pub const MANUAL_FILE: &str = "manual-steps.txt";

fn read(p: &Path) -> Result<String, CliError> {
    fs::read_to_string(p).map_err(CliError::io(format!("reading {}", p.display())))
}

pub fn collect_findings(cfg: &Config) -> Result<Vec<Finding>, CliError> {
    if cfg.php_ini.is_none() && cfg.web_root.is_none() && cfg.credentials.is_none() {
        return Err(failed("nothing to audit: set [hardening] php_ini, [site] web_root or [hardening] credentials"));
    }
    let mut findings = Vec::new();
    if let Some(p) = &cfg.php_ini {
        findings.extend(audit_runtime_config(&read(p)?, &cfg.hardening).map_err(|e| failed(format!("{}: {e}", p.display())))?);
    }
    if let Some(root) = &cfg.web_root {
        findings.extend(audit_filesystem(root, &cfg.hardening).map_err(failed)?);
    }
    if let Some(p) = &cfg.credentials {
        findings.extend(audit_credentials(&read(p)?, &cfg.hardening).map_err(|e| failed(format!("{}: {e}", p.display())))?);
    }
    Ok(findings)
}

pub fn run(cfg: &Config, emit: Option<&Path>) -> CmdResult {
    let findings = collect_findings(cfg)?;
    if !findings.is_empty() {
        println!("{:<28} {:<15} {:<9} {:<4} SUBJECT", "ID", "CATEGORY", "SEVERITY", "FIX");
    }
    for f in &findings {
        println!(
            "{:<28} {:<15} {:<9} {:<4} {} (observed {}, expected {})",
            f.finding_id,
            f.category,
            f.severity,
            if f.remediable { "auto" } else { "man" },
            f.subject,
            f.observed,
            f.expected
        );
    }
    if let Some(dir) = emit {
        let bundle = emit_remediation(&findings);
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
        let mut manual = bundle.manual_steps.join("\n");
        if !manual.is_empty() {
            manual.push_str("\n\n");
        }
        manual.push_str("Hosting checklist:\n");
        for item in hosting_checklist() {
            manual.push_str("- ");
            manual.push_str(&item);
            manual.push('\n');
        }
        for (name, text) in [
            (OVERRIDES_FILE, bundle.runtime_overrides.as_str()),
            (ACCESS_FILE, bundle.access_rules.as_str()),
            (MANUAL_FILE, manual.as_str()),
        ] {
            let p = dir.join(name);
            fs::write(&p, text).map_err(CliError::io(format!("writing {}", p.display())))?;
            println!("wrote {}", p.display());
        }
    }
    println!("{} findings", findings.len());
    Ok(if findings.is_empty() { Status::Clean } else { Status::Findings })
}
