#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

pub const TRACE_SEED: u64 = 7;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn bless() -> bool {
    std::env::var_os("HOSTGUARD_BLESS").is_some_and(|v| v == "1")
}

/// The binary with a clean environment and no stdin.
pub fn hostguard(config: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hostguard"));
    c.env_clear().arg("--config").arg(config).stdin(Stdio::null());
    c
}

pub fn run(config: &Path, args: &[&str]) -> Output {
    hostguard(config).args(args).output().expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes `hostguard.ini` into `dir` with every state path under `dir/state`.
pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("hostguard.ini");
    std::fs::write(&p, format!("[paths]\nstate_dir = state\n{extra}")).unwrap();
    p
}
