//! Remediation documents: a php.ini override file, `.htaccess` rules and
//! manual steps for everything that needs a human.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Finding, FindingCategory, Fix};

/// Extensions whose execution is denied in flagged directories.
pub const SCRIPT_EXTENSIONS: &str = "php[0-9]?|phtml|phar|pl|py|cgi|sh";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemediationBundle {
    /// php.ini syntax; later lines override earlier ones.
    pub runtime_overrides: String,
    /// Apache `.htaccess` syntax for the web root.
    pub access_rules: String,
    pub manual_steps: Vec<String>,
}

impl RemediationBundle {
    pub fn is_empty(&self) -> bool {
        self.runtime_overrides.is_empty() && self.access_rules.is_empty() && self.manual_steps.is_empty()
    }
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn deny_scripts_rule(dir: &str) -> Option<String> {
    let dir = dir.trim_end_matches('/');
    if dir.is_empty() || dir.chars().any(|c| c == '"' || c.is_control()) {
        return None;
    }
    Some(format!(
        "# no script execution under {dir}/\n<IfModule mod_rewrite.c>\nRewriteEngine On\nRewriteRule \"^{}/.*\\.(?:{SCRIPT_EXTENSIONS})(?:\\.|$)\" - [F,NC]\n</IfModule>\n",
        regex::escape(dir)
    ))
}

/// Builds the bundle. Output depends only on `findings`, including their
/// order for manual steps.
pub fn emit_remediation(findings: &[Finding]) -> RemediationBundle {
    let mut disable: Vec<String> = Vec::new();
    let mut directives: BTreeMap<&str, &str> = BTreeMap::new();
    let mut rules: BTreeMap<&str, String> = BTreeMap::new();
    let mut manual = Vec::new();
    let push_unique = |list: &mut Vec<String>, f: &str| {
        if !list.iter().any(|x| x == f) {
            list.push(f.to_string());
        }
    };
    for f in findings {
        match &f.fix {
            Some(Fix::DisableFunction {
                function,
                already_disabled,
            }) => {
                for d in already_disabled {
                    push_unique(&mut disable, d);
                }
                push_unique(&mut disable, function);
            }
            Some(Fix::SetDirective { directive, value }) => {
                directives.insert(directive, value);
            }
            None => match f.category {
                FindingCategory::Permissions => {
                    let path = if f.subject == "./" { "." } else { f.subject.trim_end_matches('/') };
                    manual.push(format!(
                        "chmod {} {}   # currently {}",
                        f.expected,
                        shell_quote(path),
                        f.observed
                    ));
                    if f.subject.ends_with('/') {
                        if let Some(rule) = deny_scripts_rule(&f.subject) {
                            rules.insert(&f.subject, rule);
                        }
                    }
                }
                FindingCategory::Credentials if f.finding_id.starts_with("credentials.username") => {
                    manual.push(format!(
                        "replace account {} with a non-default name and remove the old account",
                        f.subject
                    ));
                }
                FindingCategory::Credentials => {
                    manual.push(format!(
                        "set a new password for {} ({}; want {})",
                        f.subject, f.observed, f.expected
                    ));
                }
                _ => manual.push(format!(
                    "{}: {} is {}, expected {}",
                    f.category, f.subject, f.observed, f.expected
                )),
            },
        }
    }
    let mut runtime = String::new();
    if !disable.is_empty() || !directives.is_empty() {
        runtime.push_str("; hostguard runtime overrides\n");
        if !disable.is_empty() {
            runtime.push_str(&format!("disable_functions = {}\n", disable.join(",")));
        }
        for (d, v) in directives {
            runtime.push_str(&format!("{d} = {v}\n"));
        }
    }
    let mut access = String::new();
    if !rules.is_empty() {
        access.push_str("# hostguard access rules\n");
        for rule in rules.values() {
            access.push_str(rule);
        }
    }
    RemediationBundle {
        runtime_overrides: runtime,
        access_rules: access,
        manual_steps: manual,
    }
}

/// Appends the override document, which is how a user-level php.ini
/// layered after the host's applies.
pub fn apply_runtime_overrides(config_doc: &str, overrides: &str) -> String {
    let mut out = config_doc.to_string();
    if !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(overrides);
    out
}

/// Hosting-level steps no audit can verify from inside the account.
pub fn hosting_checklist() -> Vec<String> {
    [
        "serve the site over HTTPS only and redirect plain HTTP; then set session.cookie_secure = On",
        "enable search-friendly URLs in the CMS settings",
        "enable page caching in the CMS or at the host",
        "schedule `hostguard clean-tmp` to purge stale files from the temporary folder",
    ]
    .map(String::from)
    .to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardening::{audit_runtime_config, HardeningPolicy};
    use crate::signatures::Severity;

    #[test]
    fn aggregates_disable_functions() {
        let f = audit_runtime_config("disable_functions = mail\n", &HardeningPolicy::default()).unwrap();
        let b = emit_remediation(&f);
        assert!(b
            .runtime_overrides
            .contains("disable_functions = mail,shell_exec,popen,proc_open,exec,passthru,system\n"));
        assert_eq!(b.runtime_overrides.matches("disable_functions").count(), 1);
        assert!(b.access_rules.is_empty() && b.manual_steps.is_empty());
    }

    #[test]
    fn empty_findings_empty_bundle() {
        assert!(emit_remediation(&[]).is_empty());
    }

    #[test]
    fn applying_is_idempotent() {
        let p = HardeningPolicy::default();
        let cfg = "[PHP]\ndisable_functions =\nallow_url_include = On\ndisplay_errors = On\n[Session]\nsession.gc_maxlifetime = 86400\n";
        let b = emit_remediation(&audit_runtime_config(cfg, &p).unwrap());
        let fixed = apply_runtime_overrides(cfg, &b.runtime_overrides);
        assert!(audit_runtime_config(&fixed, &p).unwrap().is_empty());
        let again = emit_remediation(&audit_runtime_config(&fixed, &p).unwrap());
        assert!(again.is_empty());
    }

    #[test]
    fn uploads_dir_gets_deny_rule() {
        let f = Finding {
            finding_id: "permissions:wp-content/uploads/".into(),
            category: FindingCategory::Permissions,
            subject: "wp-content/uploads/".into(),
            observed: "777".into(),
            expected: "755".into(),
            severity: Severity::Critical,
            remediable: false,
            fix: None,
        };
        let b = emit_remediation(&[f]);
        assert!(b.access_rules.contains("RewriteRule \"^wp\\-content/uploads/"));
        assert_eq!(b.manual_steps, vec!["chmod 755 'wp-content/uploads'   # currently 777"]);
    }
}
