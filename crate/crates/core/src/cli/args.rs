use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use clap::{Args, Parser, Subcommand};

use super::{
    live_transport, run_analysis, run_diff, Mode, RunConfig, DEFAULT_CONCURRENCY,
    DEFAULT_TTL_HOURS, EXIT_FATAL, EXIT_OK,
};
use crate::clock::{Clock, FixedClock, SystemClock};
use crate::http::{AbortTransport, HttpTransport};
use crate::lockfile::PackageManagerKind;
use crate::registry::DEFAULT_REGISTRY;
use crate::repoprobe::TOKEN_ENV;
use crate::report::DEFAULT_LISTING_LIMIT;
use crate::smells::{parse_smell_set, SmellKind};

#[derive(Debug, Parser)]
#[command(
    name = "chainsmell",
    version,
    about = "Detect software supply chain smells in NPM projects"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a project checkout against the live registry and forges.
    Analyze(AnalyzeArgs),
    /// Re-run detection and reporting from a saved pond, offline.
    Replay(ReplayArgs),
    /// Compare the smell counts of two ponds.
    Diff(DiffArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Project name shown in the report (defaults to package.json).
    #[arg(long)]
    pub name: Option<String>,
    /// Project version shown in the report (defaults to package.json).
    #[arg(long = "version")]
    pub project_version: Option<String>,
    #[arg(long, value_parser = parse_kind)]
    pub package_manager: Option<PackageManagerKind>,
    #[arg(long, default_value = "chainsmell-report")]
    pub output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONCURRENCY)]
    pub concurrency: usize,
    /// Exit with status 2 when any of these smells is present, e.g. `S1,S3`.
    #[arg(long, value_parser = parse_fail_on, default_value = "")]
    pub fail_on: BTreeSet<SmellKind>,
    /// Findings listed inline per smell before the collapsible full listing.
    #[arg(long, default_value_t = DEFAULT_LISTING_LIMIT)]
    pub listing_limit: usize,
    /// Report timestamp, RFC 3339 or Unix seconds. Falls back to SOURCE_DATE_EPOCH.
    #[arg(long, value_parser = parse_instant)]
    pub clock: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value = ".")]
    pub path: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = DEFAULT_REGISTRY)]
    pub registry_url: String,
    #[arg(long, hide = true)]
    pub github_api_url: Option<String>,
    /// Reuse entries of a previous pond in the output directory younger than this.
    #[arg(long, default_value_t = DEFAULT_TTL_HOURS)]
    pub cache_ttl_hours: i64,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub pond: PathBuf,
    /// Take the package set from this checkout's lockfile instead of the pond.
    #[arg(long)]
    pub path: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    #[arg(long)]
    pub old: PathBuf,
    #[arg(long)]
    pub new: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<PackageManagerKind, String> {
    s.parse()
}

fn parse_fail_on(s: &str) -> Result<BTreeSet<SmellKind>, String> {
    parse_smell_set(s).map_err(|e| e.to_string())
}

pub fn parse_instant(s: &str) -> Result<DateTime<Utc>, String> {
    if let Ok(secs) = s.trim().parse::<i64>() {
        return DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| format!("timestamp out of range: {s}"));
    }
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("invalid timestamp {s:?}: {e}"))
}

fn clock_from(explicit: Option<DateTime<Utc>>) -> Result<Arc<dyn Clock>, String> {
    if let Some(at) = explicit {
        return Ok(Arc::new(FixedClock(at)));
    }
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) if !v.trim().is_empty() => Ok(Arc::new(FixedClock(parse_instant(&v)?))),
        _ => Ok(Arc::new(SystemClock)),
    }
}

fn config_from(common: CommonArgs, mode: Mode) -> Result<RunConfig, String> {
    let mut config = RunConfig::new(mode, common.output, clock_from(common.clock)?);
    config.project_name = common.name;
    config.project_version = common.project_version;
    config.package_manager = common.package_manager;
    config.concurrency_limit = common.concurrency;
    config.fail_on = common.fail_on;
    config.listing_limit = common.listing_limit;
    Ok(config)
}

/// Parses `args` and runs the command, returning the process exit code.
/// `transport` overrides the live HTTP stack.
pub fn main_with_args<I, S>(args: I, transport: Option<Arc<dyn HttpTransport>>) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
        }
    };
    let (config, transport) = match cli.command {
        Command::Diff(args) => {
            return match run_diff(&args.old, &args.new, args.output.as_deref()) {
                Ok(text) => {
                    print!("{text}");
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_FATAL
                }
            };
        }
        Command::Analyze(args) => {
            let config = config_from(args.common, Mode::Live).map(|mut c| {
                c.project_path = Some(args.path);
                c.registry_base_url = args.registry_url;
                c.github_api_base = args.github_api_url;
                c.github_token = std::env::var(TOKEN_ENV).ok();
                c.cache_ttl = (!args.no_cache).then(|| Duration::hours(args.cache_ttl_hours));
                c
            });
            let transport = match transport {
                Some(t) => Ok(t),
                None => live_transport().map_err(|e| e.to_string()),
            };
            (config, transport)
        }
        Command::Replay(args) => {
            let config = config_from(args.common, Mode::Replay { pond: args.pond }).map(|mut c| {
                c.project_path = args.path;
                c
            });
            let transport: Arc<dyn HttpTransport> =
                transport.unwrap_or_else(|| Arc::new(AbortTransport::default()));
            (config, Ok(transport))
        }
    };
    let (config, transport) = match (config, transport) {
        (Ok(c), Ok(t)) => (c, t),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return EXIT_FATAL;
        }
    };
    match run_analysis(&config, transport) {
        Ok(outcome) => {
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            eprintln!(
                "{} packages analyzed; report written to {}",
                outcome.summary.total_packages,
                config.report_path().display()
            );
            if !outcome.fail_on_hits.is_empty() {
                let hits: Vec<String> =
                    outcome.fail_on_hits.iter().map(|k| k.to_string()).collect();
                eprintln!("failing on: {}", hits.join(", "));
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_analyze_flags() {
        let cli = Cli::try_parse_from([
            "chainsmell",
            "analyze",
            "--path",
            "proj",
            "--name",
            "demo",
            "--version",
            "1.2.3",
            "--package-manager",
            "pnpm",
            "--fail-on",
            "S1,S5",
            "--concurrency",
            "4",
        ])
        .unwrap();
        let Command::Analyze(args) = cli.command else {
            panic!("expected analyze")
        };
        assert_eq!(args.common.project_version.as_deref(), Some("1.2.3"));
        assert_eq!(args.common.package_manager, Some(PackageManagerKind::Pnpm));
        assert_eq!(args.common.fail_on.len(), 3);
        assert!(Cli::try_parse_from(["chainsmell", "analyze", "--fail-on", "S7"]).is_err());
    }

    #[test]
    fn instants() {
        assert_eq!(parse_instant("0").unwrap().timestamp(), 0);
        assert_eq!(
            parse_instant("2024-01-02T03:04:05Z").unwrap().timestamp(),
            1_704_164_645
        );
        assert!(parse_instant("yesterday").is_err());
    }
}
