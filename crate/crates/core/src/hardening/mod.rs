//! Hosting-configuration audits: runtime directives, filesystem permissions
//! and credentials, plus remediation documents for the operator to apply.

mod credentials;
mod filesystem;
mod policy;
mod remediation;
mod runtime;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::signatures::Severity;

pub use credentials::{audit_credentials, password_entropy_bits, CredentialError, CredentialRecord, Secret};
pub use filesystem::{audit_filesystem, FilesystemError};
pub use policy::{HardeningPolicy, PolicyError, DEFAULT_WEAK_PASSWORDS};
pub use remediation::{apply_runtime_overrides, emit_remediation, hosting_checklist, RemediationBundle, SCRIPT_EXTENSIONS};
pub use runtime::{audit_runtime_config, directive_enabled, RuntimeAuditError, BANNED_DIRECTIVES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingCategory {
    RuntimeConfig,
    Permissions,
    Credentials,
    Transport,
    Session,
}

impl FindingCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingCategory::RuntimeConfig => "runtime_config",
            FindingCategory::Permissions => "permissions",
            FindingCategory::Credentials => "credentials",
            FindingCategory::Transport => "transport",
            FindingCategory::Session => "session",
        }
    }
}

impl fmt::Display for FindingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete change the remediation bundle can carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fix", rename_all = "snake_case")]
pub enum Fix {
    /// Add `function` to `disable_functions`, keeping what the config
    /// already disables.
    DisableFunction {
        function: String,
        already_disabled: Vec<String>,
    },
    SetDirective { directive: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub finding_id: String,
    pub category: FindingCategory,
    pub subject: String,
    pub observed: String,
    pub expected: String,
    pub severity: Severity,
    pub remediable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none", flatten)]
    pub fix: Option<Fix>,
}

impl Finding {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("finding serializes")
    }
}
