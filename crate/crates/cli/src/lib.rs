//! The `hostguard` operator commands.
//!
//! Exit codes: 0 when nothing was found, 1 when a command found something
//! the operator should look at, 2 on any error.

use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hostguard::gateway::Mode;
use thiserror::Error;

pub mod audit;
pub mod baseline;
pub mod config;
pub mod monitor;
pub mod replay;
pub mod report;
pub mod review;
pub mod scan;
pub mod serve;

use config::{Config, ConfigError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

pub fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean,
    Findings,
}

pub type CmdResult = Result<Status, CliError>;

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Clean => 0,
            Status::Findings => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hostguard", version, about = "Integrity, malware, hardening and request filtering for small CMS sites")]
pub struct Cli {
    /// Config file; defaults to $HOSTGUARD_CONFIG, then ./hostguard.ini.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Answer yes to every confirmation prompt.
    #[arg(long, short = 'y', global = true)]
    pub yes: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hash the pristine web root into the baseline manifest.
    Baseline {
        /// Recorded in the manifest; defaults to [site] cms_name.
        #[arg(long)]
        cms_name: Option<String>,
        /// Defaults to [site] cms_version.
        #[arg(long)]
        cms_version: Option<String>,
    },
    /// Verify the tree against the baseline and scan changed files for malware.
    Scan {
        /// Move files with critical signature hits into quarantine.
        #[arg(long)]
        quarantine: bool,
        /// Report file; defaults to [logs] scan_report.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Audit the PHP runtime config, file permissions and credentials.
    Audit {
        /// Write php-overrides.ini, htaccess.conf and manual-steps.txt here.
        #[arg(long, value_name = "DIR")]
        emit_remediation: Option<PathBuf>,
    },
    /// Run the filtering reverse proxy.
    Serve {
        /// production, or maintenance to admit only token holders.
        #[arg(long, default_value = "production")]
        mode: Mode,
        /// Overrides [gateway] listen.
        #[arg(long, value_name = "ADDR:PORT")]
        listen: Option<SocketAddr>,
        /// Overrides [gateway] upstream.
        #[arg(long, value_name = "ADDR:PORT")]
        upstream: Option<SocketAddr>,
    },
    /// Evaluate a recorded request trace offline.
    Replay {
        /// JSON lines, one request record each.
        trace: PathBuf,
        /// Compare the verdicts byte for byte with this file.
        #[arg(long, value_name = "PATH")]
        golden: Option<PathBuf>,
        /// Verdict output; stdout when neither this nor --golden is given.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Append block-log records here.
        #[arg(long, value_name = "PATH")]
        block_log: Option<PathBuf>,
    },
    /// Window and classify the behavior event log.
    Monitor {
        /// Classify the whole log, alert, and exit 1 if anything was raised.
        #[arg(long, conflicts_with = "follow", required_unless_present = "follow")]
        once: bool,
        /// Tail the log and alert as windows close.
        #[arg(long)]
        follow: bool,
    },
    /// Inspect and act on quarantined files, blocked requests and alerts.
    Review {
        #[command(subcommand)]
        action: review::Action,
    },
    /// Summarize the block and alert logs.
    ///
    /// Writes summary.json and per-minute.csv to [logs] report_dir. CSV
    /// columns: minute (RFC 3339, UTC), blocked, challenged, alerts.
    Report {
        /// Only records newer than this, e.g. 1h, 30m, 7d.
        #[arg(long)]
        since: Option<humantime::Duration>,
        /// Per-minute counts; defaults to per-minute.csv in [logs] report_dir.
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
        /// Summary JSON; defaults to summary.json in [logs] report_dir.
        #[arg(long, value_name = "PATH")]
        summary: Option<PathBuf>,
    },
}

/// Asks on stderr and reads one line from stdin; anything but y/yes is a no.
pub fn confirm(question: &str) -> io::Result<bool> {
    let mut err = io::stderr();
    write!(err, "{question} [y/N] ")?;
    err.flush()?;
    let mut line = String::new();
    io::stdin().lock().read_line(&mut line)?;
    Ok(matches!(line.trim().to_ascii_lowercase().as_str(), "y" | "yes"))
}

pub fn run(cli: Cli) -> CmdResult {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Baseline { cms_name, cms_version } => baseline::run(&cfg, cli.yes, cms_name, cms_version),
        Command::Scan { quarantine, report } => scan::run(&cfg, quarantine, report),
        Command::Audit { emit_remediation } => audit::run(&cfg, emit_remediation.as_deref()),
        Command::Serve { mode, listen, upstream } => serve::run(&cfg, mode, listen, upstream),
        Command::Replay {
            trace,
            golden,
            out,
            block_log,
        } => replay::run(&cfg, &trace, golden.as_deref(), out.as_deref(), block_log.as_deref()),
        Command::Monitor { follow, .. } => monitor::run(&cfg, follow),
        Command::Review { action } => review::run(&cfg, cli.yes, action),
        Command::Report { since, csv, summary } => report::run(&cfg, since.map(Into::into), csv, summary),
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(s) => ExitCode::from(s.code()),
        Err(e) => {
            eprintln!("hostguard: {e}");
            ExitCode::from(2)
        }
    }
}
