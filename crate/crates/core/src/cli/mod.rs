//! End-to-end workflow: extract, resolve, fetch, then save the pond and
//! render reports. Also the `analyze` / `replay` / `diff` front end.

mod args;
pub mod collect;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::Duration;
use thiserror::Error;

use crate::clock::Clock;
use crate::http::{
    HttpTransport, RateLimitedTransport, ReqwestTransport, RetryPolicy, RetryingTransport,
};
use crate::lockfile::{
    detect_package_manager, extract_dependencies, LockfileError, PackageManagerKind,
};
use crate::pond::{load_pond, replay_fetcher, save_pond, DirtyPond, PondError, DEFAULT_POND_FILE};
use crate::registry::{MetadataSourceKind, RegistryClient, DEFAULT_REGISTRY};
use crate::repoprobe::{LiveRepoProber, MemoizedRepoSource};
use crate::report::{
    diff_summaries, render_json, render_markdown, ReportBundle, REPORT_FILE, SUMMARY_FILE,
};
use crate::smells::{assess_all, detect_all, summarize, SmellKind, SmellSummary, Verdict};

pub use args::{main_with_args, Cli, Command};
use collect::{collect_all, targets_from_graph, Sources, Target};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_CONCURRENCY: usize = 16;
pub const DEFAULT_REQUESTS_PER_SECOND: f64 = 8.0;
pub const DEFAULT_TTL_HOURS: i64 = 24;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_SMELLS: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lockfile(#[from] LockfileError),
    #[error(transparent)]
    Pond(#[from] PondError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Live,
    /// Answers every query from a saved pond. With a project path the lockfile
    /// still defines the package set; without one the pond does.
    Replay {
        pond: PathBuf,
    },
}

#[derive(Clone)]
pub struct RunConfig {
    pub project_path: Option<PathBuf>,
    pub project_name: Option<String>,
    pub project_version: Option<String>,
    pub package_manager: Option<PackageManagerKind>,
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub concurrency_limit: usize,
    pub fail_on: BTreeSet<SmellKind>,
    pub registry_base_url: String,
    pub github_api_base: Option<String>,
    pub github_token: Option<String>,
    /// Live-mode reuse window for a previous pond in `output_dir`; `None` disables reuse.
    pub cache_ttl: Option<Duration>,
    pub listing_limit: usize,
    pub clock: Arc<dyn Clock>,
}

impl RunConfig {
    pub fn new(mode: Mode, output_dir: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Self {
        RunConfig {
            project_path: None,
            project_name: None,
            project_version: None,
            package_manager: None,
            mode,
            output_dir: output_dir.into(),
            concurrency_limit: DEFAULT_CONCURRENCY,
            fail_on: BTreeSet::new(),
            registry_base_url: DEFAULT_REGISTRY.to_string(),
            github_api_base: None,
            github_token: None,
            cache_ttl: Some(Duration::hours(DEFAULT_TTL_HOURS)),
            listing_limit: crate::report::DEFAULT_LISTING_LIMIT,
            clock,
        }
    }

    pub fn pond_path(&self) -> PathBuf {
        self.output_dir.join(DEFAULT_POND_FILE)
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join(REPORT_FILE)
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output_dir.join(SUMMARY_FILE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub summary: SmellSummary,
    pub fail_on_hits: BTreeSet<SmellKind>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.fail_on_hits.is_empty() {
            EXIT_OK
        } else {
            EXIT_SMELLS
        }
    }
}

/// The production HTTP stack: retries around a per-host rate limit around reqwest.
pub fn live_transport() -> Result<Arc<dyn HttpTransport>, CliError> {
    let reqwest = ReqwestTransport::new(StdDuration::from_secs(30))
        .map_err(|e| CliError::Config(e.reason()))?;
    Ok(Arc::new(RetryingTransport::new(
        RateLimitedTransport::new(reqwest, DEFAULT_REQUESTS_PER_SECOND),
        RetryPolicy::default(),
    )))
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Project labels from `package.json`, if there is one.
fn manifest_labels(root: &Path) -> (Option<String>, Option<String>) {
    let Ok(text) = std::fs::read_to_string(root.join("package.json")) else {
        return (None, None);
    };
    let Ok(doc) = serde_json::from_str::<serde_json::Value>(&text) else {
        return (None, None);
    };
    let field = |k: &str| doc.get(k).and_then(|v| v.as_str()).map(str::to_string);
    (field("name"), field("version"))
}

/// Runs the four stages. `transport` serves every network request; replay runs
/// never touch it.
pub fn run_analysis(
    config: &RunConfig,
    transport: Arc<dyn HttpTransport>,
) -> Result<RunOutcome, CliError> {
    if config.concurrency_limit == 0 {
        return Err(CliError::Config(
            "concurrency must be at least 1".to_string(),
        ));
    }
    let clock = config.clock.as_ref();

    let replay_pond = match &config.mode {
        Mode::Replay { pond } => Some(load_pond(pond)?),
        Mode::Live => None,
    };

    // Stage 1: the package set.
    let (kind, targets, lock_diagnostics) = match (&config.project_path, &replay_pond) {
        (Some(root), _) => {
            let kind = detect_package_manager(root, config.package_manager)?;
            let graph = extract_dependencies(root, kind)?;
            (kind, targets_from_graph(&graph), graph.diagnostics.clone())
        }
        (None, Some(pond)) => {
            let targets = pond
                .entries
                .values()
                .map(|e| Target {
                    id: e.id.clone(),
                    direct: e.direct,
                    unregistered: false,
                    embedded_url: None,
                })
                .collect();
            (pond.package_manager, targets, Vec::new())
        }
        (None, None) => return Err(CliError::Config("analyze needs a project path".to_string())),
    };
    for diagnostic in &lock_diagnostics {
        tracing::warn!("{diagnostic}");
    }

    let (manifest_name, manifest_version) = config
        .project_path
        .as_deref()
        .map(manifest_labels)
        .unwrap_or_default();
    let project = config
        .project_name
        .clone()
        .or_else(|| replay_pond.as_ref().map(|p| p.project.clone()))
        .or(manifest_name)
        .unwrap_or_else(|| "unnamed".to_string());
    let project_version = config
        .project_version
        .clone()
        .or_else(|| replay_pond.as_ref().map(|p| p.project_version.clone()))
        .or(manifest_version)
        .unwrap_or_else(|| "0.0.0".to_string());

    // Stages 2 and 3: registry metadata, repository links, repository probes.
    std::fs::create_dir_all(&config.output_dir).map_err(|source| CliError::Output {
        path: config.output_dir.clone(),
        source,
    })?;
    let entries = match &replay_pond {
        Some(pond) => {
            let replay = replay_fetcher(pond);
            let sources = Sources {
                metadata: &replay,
                repos: &replay,
                kind: MetadataSourceKind::Replay,
            };
            collect_all(
                &targets,
                &sources,
                clock,
                config.concurrency_limit,
                &BTreeMap::new(),
                None,
            )
        }
        None => {
            let previous = match config.cache_ttl {
                Some(_) if config.pond_path().is_file() => match load_pond(&config.pond_path()) {
                    Ok(p) => p.entries,
                    Err(e) => {
                        tracing::warn!("ignoring previous pond: {e}");
                        BTreeMap::new()
                    }
                },
                _ => BTreeMap::new(),
            };
            let registry = RegistryClient::new(
                &config.registry_base_url,
                transport.clone(),
                config.clock.clone(),
            );
            let mut prober = LiveRepoProber::new(transport.clone(), config.github_token.clone());
            if let Some(api) = &config.github_api_base {
                prober = prober.with_api_base(api);
            }
            let repos = MemoizedRepoSource::new(prober);
            let sources = Sources {
                metadata: &registry,
                repos: &repos,
                kind: MetadataSourceKind::Live,
            };
            let ttl = config.cache_ttl;
            let reuse = if ttl.is_some() {
                previous
            } else {
                BTreeMap::new()
            };
            collect_all(
                &targets,
                &sources,
                clock,
                config.concurrency_limit,
                &reuse,
                ttl,
            )
        }
    };

    // Stage 4: pond first, then detection and reports.
    let created_at = replay_pond
        .as_ref()
        .map_or_else(|| clock.now(), |p| p.created_at);
    let mut pond = DirtyPond::new(project, project_version, kind, created_at);
    pond.entries = entries;
    save_pond(&pond, &config.pond_path())?;

    let findings = detect_all(&pond);
    let summary = summarize(&findings, &pond);
    let incomplete = pond
        .entries
        .values()
        .filter(|e| {
            !e.diagnostics.is_empty()
                || assess_all(e)
                    .iter()
                    .any(|v| matches!(v, Verdict::Unknown { .. }))
        })
        .count();
    let mut warnings = Vec::new();
    if incomplete > 0 {
        warnings.push(format!(
            "{incomplete} of {} packages could not be fully analyzed; see the Unknown column and {DEFAULT_POND_FILE}",
            pond.len()
        ));
    }
    let bundle = ReportBundle::new(&pond, summary.clone(), &findings, clock.now(), TOOL_VERSION)
        .with_warnings(warnings.clone())
        .with_listing_limit(config.listing_limit);
    write_output(&config.report_path(), &render_markdown(&bundle))?;
    write_output(&config.summary_path(), &render_json(&bundle))?;

    let fail_on_hits = config
        .fail_on
        .iter()
        .copied()
        .filter(|k| summary.count(*k) > 0)
        .collect();
    Ok(RunOutcome {
        summary,
        fail_on_hits,
        warnings,
    })
}

fn pond_summary(path: &Path) -> Result<(SmellSummary, String), CliError> {
    let pond = load_pond(path)?;
    let findings = detect_all(&pond);
    let label = format!("{} {}", pond.project, pond.project_version);
    Ok((summarize(&findings, &pond), label))
}

/// Compares two ponds. Returns the Markdown table, also written to `output` when given.
pub fn run_diff(old: &Path, new: &Path, output: Option<&Path>) -> Result<String, CliError> {
    let (old_summary, mut old_label) = pond_summary(old)?;
    let (new_summary, mut new_label) = pond_summary(new)?;
    if old_label == new_label {
        old_label = format!("{old_label} (old)");
        new_label = format!("{new_label} (new)");
    }
    let text = diff_summaries((&old_summary, &old_label), (&new_summary, &new_label));
    if let Some(path) = output {
        write_output(path, &text)?;
    }
    Ok(text)
}
