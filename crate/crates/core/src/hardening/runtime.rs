//! php.ini-style runtime configuration audit.

use thiserror::Error;

use super::{Finding, FindingCategory, Fix, HardeningPolicy};
use crate::ini::{split_list, truthy, IniDocument, IniError};
use crate::signatures::Severity;

/// Entries of `banned_functions` that are ini directives rather than
/// functions, with PHP's built-in default when the directive is absent.
pub const BANNED_DIRECTIVES: [(&str, bool); 3] = [
    ("allow_url_include", false),
    ("allow_url_fopen", true),
    ("expose_php", true),
];

#[derive(Debug, Error, PartialEq)]
pub enum RuntimeAuditError {
    #[error("config parse error at {0}")]
    ConfigParseError(#[from] IniError),
}

/// Effective boolean value of `directive`, falling back to `default`.
pub fn directive_enabled(doc: &IniDocument, directive: &str, default: bool) -> bool {
    doc.get_any(directive).map(truthy).unwrap_or(default)
}

pub fn disabled_functions(doc: &IniDocument) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for f in split_list(doc.get_any("disable_functions").unwrap_or("")) {
        let f = f.to_ascii_lowercase();
        if !out.contains(&f) {
            out.push(f);
        }
    }
    out
}

/// Sections are ignored and the last occurrence of a directive wins, as in
/// php.ini. Directives left at PHP defaults are judged by those defaults,
/// except `display_errors`, which is flagged only when explicitly on.
pub fn audit_runtime_config(config_doc: &str, policy: &HardeningPolicy) -> Result<Vec<Finding>, RuntimeAuditError> {
    let doc = IniDocument::parse(config_doc)?;
    let mut findings = Vec::new();
    let disabled = disabled_functions(&doc);
    for name in &policy.banned_functions {
        if let Some((_, default)) = BANNED_DIRECTIVES.iter().find(|(d, _)| d == name) {
            if directive_enabled(&doc, name, *default) {
                findings.push(Finding {
                    finding_id: format!("runtime.{name}"),
                    category: FindingCategory::RuntimeConfig,
                    subject: name.clone(),
                    observed: doc.get_any(name).unwrap_or("(default On)").to_string(),
                    expected: "Off".into(),
                    severity: if name == "allow_url_include" {
                        Severity::Critical
                    } else {
                        Severity::Medium
                    },
                    remediable: true,
                    fix: Some(Fix::SetDirective {
                        directive: name.clone(),
                        value: "Off".into(),
                    }),
                });
            }
        } else if !disabled.contains(name) {
            findings.push(Finding {
                finding_id: format!("runtime.disable_functions.{name}"),
                category: FindingCategory::RuntimeConfig,
                subject: name.clone(),
                observed: "enabled".into(),
                expected: "listed in disable_functions".into(),
                severity: Severity::High,
                remediable: true,
                fix: Some(Fix::DisableFunction {
                    function: name.clone(),
                    already_disabled: disabled.clone(),
                }),
            });
        }
    }
    if let Some(v) = doc.get_any("display_errors") {
        // php also accepts "stderr"/"stdout" as enabling values
        let lv = v.to_ascii_lowercase();
        if truthy(v) || lv == "stdout" || lv == "stderr" {
            findings.push(Finding {
                finding_id: "runtime.display_errors".into(),
                category: FindingCategory::RuntimeConfig,
                subject: "display_errors".into(),
                observed: v.to_string(),
                expected: "Off".into(),
                severity: Severity::Medium,
                remediable: true,
                fix: Some(Fix::SetDirective {
                    directive: "display_errors".into(),
                    value: "Off".into(),
                }),
            });
        }
    }
    if let Some(v) = doc.get_any("session.gc_maxlifetime") {
        let ok = v.trim().parse::<u64>().is_ok_and(|s| s <= policy.max_session_lifetime);
        if !ok {
            findings.push(Finding {
                finding_id: "session.gc_maxlifetime".into(),
                category: FindingCategory::Session,
                subject: "session.gc_maxlifetime".into(),
                observed: v.to_string(),
                expected: format!("<= {}", policy.max_session_lifetime),
                severity: Severity::Medium,
                remediable: true,
                fix: Some(Fix::SetDirective {
                    directive: "session.gc_maxlifetime".into(),
                    value: policy.max_session_lifetime.to_string(),
                }),
            });
        }
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(f: &[Finding]) -> Vec<&str> {
        f.iter().map(|f| f.finding_id.as_str()).collect()
    }

    #[test]
    fn empty_disable_functions_flags_every_banned_function() {
        let f = audit_runtime_config("disable_functions =\n", &HardeningPolicy::default()).unwrap();
        assert_eq!(
            ids(&f),
            vec![
                "runtime.disable_functions.shell_exec",
                "runtime.disable_functions.popen",
                "runtime.disable_functions.proc_open",
                "runtime.disable_functions.exec",
                "runtime.disable_functions.passthru",
                "runtime.disable_functions.system",
            ]
        );
    }

    #[test]
    fn compliant_config() {
        let doc = "[PHP]\ndisable_functions = shell_exec,popen,proc_open,exec,passthru,system\nallow_url_include = Off\n";
        assert!(audit_runtime_config(doc, &HardeningPolicy::default()).unwrap().is_empty());
    }

    #[test]
    fn long_sessions() {
        let doc = "disable_functions = SHELL_EXEC,popen,proc_open,exec,passthru,system\n[Session]\nsession.gc_maxlifetime = 86400\n";
        let f = audit_runtime_config(doc, &HardeningPolicy::default()).unwrap();
        assert_eq!(ids(&f), vec!["session.gc_maxlifetime"]);
        assert_eq!(f[0].category, FindingCategory::Session);
    }

    #[test]
    fn unsafe_directives() {
        let doc = "disable_functions = shell_exec,popen,proc_open,exec,passthru,system\nallow_url_include = On\ndisplay_errors = On\n";
        let f = audit_runtime_config(doc, &HardeningPolicy::default()).unwrap();
        assert_eq!(ids(&f), vec!["runtime.allow_url_include", "runtime.display_errors"]);
        assert_eq!(f[0].severity, Severity::Critical);
    }

    #[test]
    fn last_occurrence_wins() {
        let doc = "disable_functions = shell_exec,popen,proc_open,exec,passthru,system\nallow_url_include = On\n[x]\nallow_url_include = Off\n";
        assert!(audit_runtime_config(doc, &HardeningPolicy::default()).unwrap().is_empty());
    }

    #[test]
    fn parse_error_carries_line() {
        let e = audit_runtime_config("a = 1\nnonsense\n", &HardeningPolicy::default()).unwrap_err();
        let RuntimeAuditError::ConfigParseError(ie) = e;
        assert_eq!(ie.line, 2);
    }
}
