//! Credential audit over an exported account list.
//!
//! The export is line-delimited JSON, one account per line, carrying either
//! a plaintext `password` or a `hash`:
//!
//! ```text
//! {"account":"admin","realm":"cms","password":"123456"}
//! {"account":"root","realm":"mysql","hash":"*6BB4837EB74329105EE4568DDA7DC67ED2CA2AD9"}
//! ```
//!
//! Lines that are blank or start with `#` are ignored.

use serde::Deserialize;
use thiserror::Error;

use super::{Finding, FindingCategory, HardeningPolicy, PolicyError};
use crate::signatures::Severity;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Secret {
    Plain(String),
    Hash(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialRecord {
    pub account: String,
    pub realm: String,
    pub secret: Secret,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    account: String,
    #[serde(default)]
    realm: String,
    password: Option<String>,
    hash: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CredentialError {
    #[error("credential document line {line}: {reason}")]
    CredDocParseError { line: usize, reason: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

pub fn parse_credentials(doc: &str) -> Result<Vec<CredentialRecord>, CredentialError> {
    let mut out = Vec::new();
    for (i, line) in doc.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |reason: String| CredentialError::CredDocParseError { line: i + 1, reason };
        let raw: RawRecord = serde_json::from_str(t).map_err(|e| err(e.to_string()))?;
        if raw.account.trim().is_empty() {
            return Err(err("empty account".into()));
        }
        let secret = match (raw.password, raw.hash) {
            (Some(p), None) => Secret::Plain(p),
            (None, Some(h)) => Secret::Hash(h),
            _ => return Err(err("exactly one of password or hash is required".into())),
        };
        out.push(CredentialRecord {
            account: raw.account,
            realm: raw.realm,
            secret,
        });
    }
    Ok(out)
}

/// `length * log2(pool)` where the pool is the union of the character
/// classes present: lowercase (26), uppercase (26), digits (10), ASCII
/// symbols and space (33), anything else (100).
pub fn password_entropy_bits(pw: &str) -> f64 {
    let (mut lower, mut upper, mut digit, mut symbol, mut other) = (false, false, false, false, false);
    for c in pw.chars() {
        match c {
            'a'..='z' => lower = true,
            'A'..='Z' => upper = true,
            '0'..='9' => digit = true,
            ' '..='~' => symbol = true,
            _ => other = true,
        }
    }
    let pool: u32 = [(lower, 26), (upper, 26), (digit, 10), (symbol, 33), (other, 100)]
        .iter()
        .filter(|(present, _)| *present)
        .map(|(_, n)| n)
        .sum();
    if pool == 0 {
        return 0.0;
    }
    pw.chars().count() as f64 * f64::from(pool).log2()
}

fn dictionary_hit(pw: &str, account: &str, weak: &std::collections::BTreeSet<String>) -> bool {
    let lower = pw.to_lowercase();
    if weak.contains(&lower) || lower == account.to_lowercase() {
        return true;
    }
    let stem = lower.trim_end_matches(|c: char| c.is_ascii_digit() || c.is_ascii_punctuation());
    stem.chars().count() >= 4 && weak.contains(stem)
}

/// Hash-only records are checked against the forbidden usernames only.
/// Findings never contain the password.
pub fn audit_credentials(cred_doc: &str, policy: &HardeningPolicy) -> Result<Vec<Finding>, CredentialError> {
    let records = parse_credentials(cred_doc)?;
    let weak = policy.weak_passwords()?;
    let mut findings = Vec::new();
    for r in &records {
        let who = if r.realm.is_empty() {
            r.account.clone()
        } else {
            format!("{}/{}", r.realm, r.account)
        };
        if policy.forbidden_usernames.contains(&r.account.to_lowercase()) {
            findings.push(Finding {
                finding_id: format!("credentials.username:{who}"),
                category: FindingCategory::Credentials,
                subject: who.clone(),
                observed: format!("account name {:?}", r.account),
                expected: "a non-default account name".into(),
                severity: Severity::High,
                remediable: false,
                fix: None,
            });
        }
        if let Secret::Plain(pw) = &r.secret {
            let bits = password_entropy_bits(pw);
            let common = dictionary_hit(pw, &r.account, &weak);
            if common || bits < policy.min_password_entropy_bits {
                let observed = if common {
                    format!("common password, about {bits:.1} bits")
                } else {
                    format!("about {bits:.1} bits")
                };
                findings.push(Finding {
                    finding_id: format!("credentials.password:{who}"),
                    category: FindingCategory::Credentials,
                    subject: who.clone(),
                    observed,
                    expected: format!(
                        "at least {} bits and not a common password",
                        policy.min_password_entropy_bits
                    ),
                    severity: if common { Severity::Critical } else { Severity::High },
                    remediable: false,
                    fix: None,
                });
            }
        }
    }
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admin_with_123456() {
        let f = audit_credentials(
            r#"{"account":"admin","realm":"cms","password":"123456"}"#,
            &HardeningPolicy::default(),
        )
        .unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|f| !f.observed.contains("123456")));
    }

    #[test]
    fn strong_random_password() {
        let f = audit_credentials(
            r#"{"account":"ops-rhw","realm":"cms","password":"q7#Lw9!vTz2@Rk4$Mx8e"}"#,
            &HardeningPolicy::default(),
        )
        .unwrap();
        assert!(f.is_empty(), "{f:?}");
    }

    #[test]
    fn root_hash_only() {
        let f = audit_credentials(
            r#"{"account":"root","realm":"mysql","hash":"*6BB4837EB74329105EE4568DDA7DC67ED2CA2AD9"}"#,
            &HardeningPolicy::default(),
        )
        .unwrap();
        assert_eq!(f.len(), 1);
        assert!(f[0].finding_id.starts_with("credentials.username"));
    }

    #[test]
    fn entropy_values() {
        assert_eq!(password_entropy_bits(""), 0.0);
        assert!((password_entropy_bits("123456") - 6.0 * 10f64.log2()).abs() < 1e-9);
        assert!((password_entropy_bits("aB3$") - 4.0 * 95f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn dictionary_variants() {
        let weak = HardeningPolicy::default().weak_passwords().unwrap();
        assert!(dictionary_hit("Password2024!", "x", &weak));
        assert!(dictionary_hit("Sunshine", "x", &weak));
        assert!(dictionary_hit("bob-the-admin", "bob-the-admin", &weak));
        assert!(!dictionary_hit("q7#Lw9!vTz2@Rk4", "x", &weak));
    }

    #[test]
    fn malformed_records() {
        for doc in [
            "{not json",
            r#"{"account":"a"}"#,
            r#"{"account":"a","password":"x","hash":"y"}"#,
            r#"{"account":"","password":"x"}"#,
            r#"{"account":"a","password":"x","extra":1}"#,
        ] {
            assert!(
                matches!(
                    audit_credentials(doc, &HardeningPolicy::default()),
                    Err(CredentialError::CredDocParseError { line: 1, .. })
                ),
                "{doc}"
            );
        }
    }
}
