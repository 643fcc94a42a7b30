use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;
use thiserror::Error;

use super::policy::GatewayPolicy;
use super::request::{url_decode, HttpRequestRecord};
use super::{Flag, StageResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Production,
    Maintenance,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "production" => Ok(Mode::Production),
            "maintenance" => Ok(Mode::Maintenance),
            other => Err(format!("unknown mode {other:?}, expected production or maintenance")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("maintenance mode needs a maintenance_token")]
pub struct MaintenanceTokenUnset;

/// Both sides are hashed first so the comparison also hides the length.
pub fn token_matches(given: &str, expected: &str) -> bool {
    let a = Sha256::digest(given.as_bytes());
    let b = Sha256::digest(expected.as_bytes());
    a.ct_eq(&b).into()
}

/// In maintenance mode only requests with `?access=<token>` get through.
pub fn maintenance_gate(
    req: &HttpRequestRecord,
    mode: Mode,
    policy: &GatewayPolicy,
) -> Result<StageResult, MaintenanceTokenUnset> {
    if mode == Mode::Production {
        return Ok(Ok(()));
    }
    let token = policy.maintenance_token.as_deref().ok_or(MaintenanceTokenUnset)?;
    let ok = req
        .query_params
        .iter()
        .filter(|(k, _)| k == "access")
        .any(|(_, v)| token_matches(&url_decode(v, true), token));
    Ok(if ok {
        Ok(())
    } else {
        Err(Flag::block("MAINTENANCE", vec!["mode=maintenance".into()]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::request::Method;

    fn req(target: &str) -> HttpRequestRecord {
        HttpRequestRecord::new(
            "192.0.2.1".parse().unwrap(),
            Method::Get,
            target,
            crate::timefmt::parse("2024-03-01T10:00:00.000Z").unwrap(),
        )
    }

    #[test]
    fn gate() {
        let mut p = GatewayPolicy::default();
        assert_eq!(maintenance_gate(&req("/"), Mode::Maintenance, &p), Err(MaintenanceTokenUnset));
        assert_eq!(maintenance_gate(&req("/"), Mode::Production, &p), Ok(Ok(())));
        p.set("maintenance_token", "s3cret token").unwrap();
        assert_eq!(maintenance_gate(&req("/admin?access=s3cret%20token"), Mode::Maintenance, &p), Ok(Ok(())));
        let wrong = maintenance_gate(&req("/admin?access=s3cret"), Mode::Maintenance, &p).unwrap();
        assert_eq!(wrong.unwrap_err().reason_code, "MAINTENANCE");
        assert!(maintenance_gate(&req("/"), Mode::Maintenance, &p).unwrap().is_err());
    }
}
