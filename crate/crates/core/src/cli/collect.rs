//! Stage 3: fetch registry metadata and probe repositories for every target
//! on a bounded worker pool, merging results through a single writer.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use chrono::Duration;

use crate::clock::Clock;
use crate::lockfile::{classify_specifier, DependencyGraph, PackageId, SpecifierSource};
use crate::pond::PondEntry;
use crate::registry::{MetadataSource, MetadataSourceKind, RegistryMetadata};
use crate::repoprobe::{split_repo_url, RepoSource};

/// One package to analyze.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub id: PackageId,
    pub direct: bool,
    /// Git or tarball dependency with no registry identity.
    pub unregistered: bool,
    /// Repository URL embedded in the lockfile for git dependencies.
    pub embedded_url: Option<String>,
}

pub fn targets_from_graph(graph: &DependencyGraph) -> Vec<Target> {
    graph
        .packages
        .values()
        .map(|record| Target {
            id: record.id.clone(),
            direct: graph.is_direct(&record.id),
            unregistered: record.unregistered,
            embedded_url: record.resolved_url.clone().filter(|url| {
                record.unregistered && classify_specifier(url) == SpecifierSource::Git
            }),
        })
        .collect()
}

pub struct Sources<'a> {
    pub metadata: &'a dyn MetadataSource,
    pub repos: &'a dyn RepoSource,
    pub kind: MetadataSourceKind,
}

pub fn collect_entry(target: &Target, sources: &Sources<'_>, clock: &dyn Clock) -> PondEntry {
    let mut diagnostics = Vec::new();
    let registry = if target.unregistered && sources.kind == MetadataSourceKind::Live {
        RegistryMetadata::unregistered(
            &target.id,
            target.embedded_url.clone(),
            clock.now(),
            sources.kind,
        )
    } else {
        match sources.metadata.fetch_package_metadata(&target.id) {
            Ok(metadata) => metadata,
            Err(error) => {
                diagnostics.push(error.to_string());
                RegistryMetadata::from_error(&target.id, &error, clock.now(), sources.kind)
            }
        }
    };
    let (repo, subpath) = match registry
        .repository_url_raw
        .as_deref()
        .and_then(split_repo_url)
    {
        Some((url, subpath)) => (
            Some(sources.repos.probe_repo(&url, &target.id, clock)),
            subpath,
        ),
        None => (None, None),
    };
    PondEntry {
        id: target.id.clone(),
        direct: target.direct,
        repository_url_raw: registry.repository_url_raw.clone(),
        monorepo_directory: registry.repository_directory.clone().or(subpath),
        registry,
        repo,
        diagnostics,
    }
}

/// Reuses `previous` entries younger than `ttl` (`None` = never expire).
pub fn fresh_entry(
    previous: &BTreeMap<PackageId, PondEntry>,
    target: &Target,
    now: chrono::DateTime<chrono::Utc>,
    ttl: Option<Duration>,
) -> Option<PondEntry> {
    let entry = previous.get(&target.id)?;
    let young = |at: chrono::DateTime<chrono::Utc>| ttl.is_none_or(|ttl| now - at < ttl);
    let repo_young = entry.repo.as_ref().is_none_or(|r| young(r.probed_at));
    (young(entry.registry.fetched_at) && repo_young && entry.diagnostics.is_empty()).then(|| {
        PondEntry {
            direct: target.direct,
            ..entry.clone()
        }
    })
}

/// Runs [`collect_entry`] for every target with at most `limit` in flight.
pub fn collect_all(
    targets: &[Target],
    sources: &Sources<'_>,
    clock: &dyn Clock,
    limit: usize,
    previous: &BTreeMap<PackageId, PondEntry>,
    ttl: Option<Duration>,
) -> BTreeMap<PackageId, PondEntry> {
    let now = clock.now();
    let mut entries = BTreeMap::new();
    let mut pending = Vec::new();
    for target in targets {
        match fresh_entry(previous, target, now, ttl) {
            Some(entry) => {
                entries.insert(entry.id.clone(), entry);
            }
            None => pending.push(target),
        }
    }
    if pending.is_empty() {
        return entries;
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..limit.clamp(1, pending.len()) {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(target) = pending.get(i) else { break };
                let entry = collect_entry(target, sources, clock);
                if tx.send(entry).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for entry in rx {
            tracing::debug!(package = %entry.id, "collected");
            entries.insert(entry.id.clone(), entry);
        }
    });
    entries
}
