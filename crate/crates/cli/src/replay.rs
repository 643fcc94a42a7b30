use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::Path;

use hostguard::gateway::{replay, Gateway, GeoTable, Mode, RequestIds};

use crate::config::Config;
use crate::{failed, scan, CliError, CmdResult, Status};

/// A gateway from the config's policy, signatures and geo table, with the
/// library defaults for everything else.
pub fn base_gateway(cfg: &Config, mode: Mode) -> Result<Gateway, CliError> {
    let sigs = scan::load_sigs(cfg)?;
    let mut gw = Gateway::new(cfg.gateway.clone(), sigs, mode).map_err(failed)?;
    if let Some(p) = &cfg.geo_table_path {
        let text = fs::read_to_string(p).map_err(CliError::io(format!("reading {}", p.display())))?;
        gw = gw.with_geo(GeoTable::parse(&text).map_err(|e| failed(format!("{}: {e}", p.display())))?);
    }
    Ok(gw)
}

pub fn open_append(p: &Path) -> Result<File, CliError> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(p)
        .map_err(CliError::io(format!("opening {}", p.display())))
}

/// 1-based number and both sides of the first differing line, if any.
pub fn first_divergence<'a>(expected: &'a str, actual: &'a str) -> Option<(usize, Option<&'a str>, Option<&'a str>)> {
    let mut e = expected.split_inclusive('\n');
    let mut a = actual.split_inclusive('\n');
    let mut n = 0;
    loop {
        n += 1;
        match (e.next(), a.next()) {
            (None, None) => return None,
            (x, y) if x == y => continue,
            (x, y) => return Some((n, x, y)),
        }
    }
}

pub fn run(cfg: &Config, trace: &Path, golden: Option<&Path>, out: Option<&Path>, block_log: Option<&Path>) -> CmdResult {
    let mut gw = base_gateway(cfg, Mode::Production)?.with_request_ids(RequestIds::sequence(0));
    if let Some(p) = block_log {
        gw = gw.with_block_log(Box::new(open_append(p)?));
    }
    let input = File::open(trace).map_err(CliError::io(format!("opening trace {}", trace.display())))?;
    let mut verdicts = Vec::new();
    let stats = replay(&gw, BufReader::new(input), &mut verdicts).map_err(failed)?;
    match out {
        Some(p) => fs::write(p, &verdicts).map_err(CliError::io(format!("writing {}", p.display())))?,
        None if golden.is_none() => io::stdout()
            .lock()
            .write_all(&verdicts)
            .map_err(CliError::io("writing verdicts"))?,
        None => {}
    }
    eprintln!(
        "replayed {} requests: {} allowed, {} challenged, {} blocked",
        stats.requests, stats.allowed, stats.challenged, stats.blocked
    );
    let Some(g) = golden else { return Ok(Status::Clean) };
    let expected = fs::read(g).map_err(CliError::io(format!("reading golden {}", g.display())))?;
    if expected == verdicts {
        println!("verdicts match {}", g.display());
        return Ok(Status::Clean);
    }
    let expected = String::from_utf8_lossy(&expected);
    let actual = String::from_utf8_lossy(&verdicts);
    match first_divergence(&expected, &actual) {
        Some((line, e, a)) => {
            let show = |s: Option<&str>| s.map(|s| s.trim_end_matches('\n').to_string()).unwrap_or_else(|| "<end of file>".into());
            println!("verdicts differ from {} at line {line}", g.display());
            println!("  golden: {}", show(e));
            println!("  actual: {}", show(a));
        }
        None => println!("verdicts differ from {} in encoding", g.display()),
    }
    Ok(Status::Findings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_reports_first_line() {
        assert_eq!(first_divergence("a\nb\n", "a\nb\n"), None);
        assert_eq!(first_divergence("a\nb\n", "a\nc\n"), Some((2, Some("b\n"), Some("c\n"))));
        assert_eq!(first_divergence("a\n", "a\nb\n"), Some((2, None, Some("b\n"))));
        assert_eq!(first_divergence("a", "a\n"), Some((1, Some("a"), Some("a\n"))));
    }
}
