//! Defensive toolkit for small CMS-based websites on shared hosting.
//!
//! The crate is split by concern:
//!
//! - [`signatures`]: regex malware signatures and file-tree scanning.
//! - [`integrity`]: hash baselines of the pristine CMS core, verification and quarantine.
//! - [`hardening`]: runtime-config, permission and credential audits with remediation output.
//! - [`bloomset`]: the Bloom filter fronting the request blacklist.
//! - [`gateway`]: the layered request-filtering pipeline.
//! - [`monitor`]: behavior-event windowing, decision-tree classification and alerting.
//!
//! Everything here is synchronous; the `hostguard` binary wraps the gateway in
//! an async reverse proxy.

pub mod bloomset;
pub mod fnv;
pub mod gateway;
pub mod hardening;
pub mod ini;
pub mod integrity;
pub mod monitor;
pub mod paths;
pub mod signatures;
pub mod timefmt;
