//! Lockfile extraction: turn `yarn.lock`, `pnpm-lock.yaml` or
//! `package-lock.json` into a [`DependencyGraph`] of exact resolved versions.

mod manifest;
mod npm;
mod pnpm;
mod specifier;
mod yarn;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::parse_manifest;
pub(crate) use specifier::{classify_specifier, SpecifierSource};

#[derive(Debug, Error)]
pub enum LockfileError {
    #[error(
        "no lockfile found in {root} (looked for yarn.lock, pnpm-lock.yaml, package-lock.json)"
    )]
    NoLockfileFound { root: PathBuf },
    #[error("malformed lockfile at line {line}: {reason}")]
    MalformedLockfile { line: usize, reason: String },
    #[error("unsupported {kind} lockfile version {found}")]
    UnsupportedLockfileVersion {
        kind: PackageManagerKind,
        found: String,
    },
    #[error("malformed package manifest: {0}")]
    MalformedManifest(String),
    #[error("invalid package id: {0}")]
    InvalidPackageId(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LockfileError {
    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        LockfileError::MalformedLockfile {
            line,
            reason: reason.into(),
        }
    }
}

/// Canonical identity of one resolved package.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPackageId")]
pub struct PackageId {
    name: String,
    version: String,
}

#[derive(Deserialize)]
struct RawPackageId {
    name: String,
    version: String,
}

impl TryFrom<RawPackageId> for PackageId {
    type Error = LockfileError;

    fn try_from(raw: RawPackageId) -> Result<Self, Self::Error> {
        PackageId::new(raw.name, raw.version)
    }
}

impl PackageId {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Result<Self, LockfileError> {
        let name = name.into();
        let version = version.into();
        if !is_valid_package_name(&name) {
            return Err(LockfileError::InvalidPackageId(format!(
                "bad package name {name:?}"
            )));
        }
        if !is_exact_version(&version) {
            return Err(LockfileError::InvalidPackageId(format!(
                "{name}: {version:?} is not an exact version"
            )));
        }
        Ok(PackageId { name, version })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Scope, if the name is `@scope/name`.
    pub fn scope(&self) -> Option<&str> {
        self.name
            .strip_prefix('@')
            .and_then(|rest| rest.split_once('/'))
            .map(|(scope, _)| scope)
    }

    pub fn unscoped_name(&self) -> &str {
        match self.name.strip_prefix('@') {
            Some(rest) => rest.split_once('/').map_or(rest, |(_, n)| n),
            None => &self.name,
        }
    }
}

impl fmt::Display for PackageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

impl FromStr for PackageId {
    type Err = LockfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, version) = split_name_at(s)
            .ok_or_else(|| LockfileError::InvalidPackageId(format!("missing version in {s:?}")))?;
        PackageId::new(name, version)
    }
}

/// Splits `name@rest` where `name` may be scoped.
pub(crate) fn split_name_at(s: &str) -> Option<(&str, &str)> {
    let search_from = usize::from(s.starts_with('@'));
    let at = s[search_from..].find('@')? + search_from;
    Some((&s[..at], &s[at + 1..]))
}

pub fn is_valid_package_name(name: &str) -> bool {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return false;
    }
    match name.strip_prefix('@') {
        Some(rest) => match rest.split_once('/') {
            Some((scope, pkg)) => !scope.is_empty() && !pkg.is_empty() && !pkg.contains('/'),
            None => false,
        },
        None => !name.contains('/') && !name.contains('@'),
    }
}

/// True for `MAJOR.MINOR.PATCH[-pre][+build]`; anything a range could look like is rejected.
pub fn is_exact_version(version: &str) -> bool {
    if version.is_empty()
        || version.chars().any(|c| {
            c.is_whitespace() || matches!(c, '^' | '~' | '>' | '<' | '*' | '|' | '=' | ':' | '/')
        })
    {
        return false;
    }
    let core_end = version.find(['-', '+']).unwrap_or(version.len());
    let core = &version[..core_end];
    let parts: Vec<&str> = core.split('.').collect();
    parts.len() == 3
        && parts
            .iter()
            .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()))
        && (core_end == version.len() || version.len() > core_end + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PackageManagerKind {
    YarnV1,
    Pnpm,
    Npm,
}

impl PackageManagerKind {
    /// Detection precedence when several lockfiles are present.
    pub const PRECEDENCE: [PackageManagerKind; 3] = [
        PackageManagerKind::YarnV1,
        PackageManagerKind::Pnpm,
        PackageManagerKind::Npm,
    ];

    pub fn lockfile_name(self) -> &'static str {
        match self {
            PackageManagerKind::YarnV1 => "yarn.lock",
            PackageManagerKind::Pnpm => "pnpm-lock.yaml",
            PackageManagerKind::Npm => "package-lock.json",
        }
    }
}

impl fmt::Display for PackageManagerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PackageManagerKind::YarnV1 => "yarn",
            PackageManagerKind::Pnpm => "pnpm",
            PackageManagerKind::Npm => "npm",
        })
    }
}

impl FromStr for PackageManagerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "yarn" | "yarnv1" | "yarn-v1" => Ok(PackageManagerKind::YarnV1),
            "pnpm" => Ok(PackageManagerKind::Pnpm),
            "npm" => Ok(PackageManagerKind::Npm),
            other => Err(format!(
                "unknown package manager {other:?} (expected yarn, pnpm or npm)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyRecord {
    pub id: PackageId,
    /// Range strings that resolved to this version, e.g. `^1.1.1`.
    pub declared_specifiers: BTreeSet<String>,
    pub resolved_url: Option<String>,
    /// Carried verbatim, never validated.
    pub integrity: Option<String>,
    pub declared_dependencies: BTreeMap<String, String>,
    /// Installed from git or a tarball URL rather than the registry.
    pub unregistered: bool,
}

impl DependencyRecord {
    pub fn new(id: PackageId) -> Self {
        DependencyRecord {
            id,
            declared_specifiers: BTreeSet::new(),
            resolved_url: None,
            integrity: None,
            declared_dependencies: BTreeMap::new(),
            unregistered: false,
        }
    }

    fn merge(&mut self, other: DependencyRecord) {
        self.declared_specifiers.extend(other.declared_specifiers);
        if self.resolved_url.is_none() {
            self.resolved_url = other.resolved_url;
        }
        if self.integrity.is_none() {
            self.integrity = other.integrity;
        }
        for (name, range) in other.declared_dependencies {
            self.declared_dependencies.entry(name).or_insert(range);
        }
        self.unregistered |= other.unregistered;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    pub packages: BTreeMap<PackageId, DependencyRecord>,
    pub direct: BTreeSet<PackageId>,
    pub edges: BTreeSet<(PackageId, PackageId)>,
    /// Non-fatal notes: excluded workspace packages, unresolved names.
    pub diagnostics: Vec<String>,
}

impl DependencyGraph {
    pub fn len(&self) -> usize {
        self.packages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }

    pub fn is_direct(&self, id: &PackageId) -> bool {
        self.direct.contains(id)
    }

    pub fn transitive(&self) -> impl Iterator<Item = &PackageId> {
        self.packages.keys().filter(|id| !self.direct.contains(*id))
    }

    /// Inserts a record, merging it into an existing one with the same id.
    pub fn insert(&mut self, record: DependencyRecord) {
        match self.packages.get_mut(&record.id) {
            Some(existing) => existing.merge(record),
            None => {
                self.packages.insert(record.id.clone(), record);
            }
        }
    }
}

/// Picks the package manager for `project_root`. An explicit choice wins, but
/// its lockfile must still exist.
pub fn detect_package_manager(
    project_root: &Path,
    explicit: Option<PackageManagerKind>,
) -> Result<PackageManagerKind, LockfileError> {
    let candidates: &[PackageManagerKind] = match explicit {
        Some(ref kind) => std::slice::from_ref(kind),
        None => &PackageManagerKind::PRECEDENCE,
    };
    candidates
        .iter()
        .copied()
        .find(|kind| project_root.join(kind.lockfile_name()).is_file())
        .ok_or_else(|| LockfileError::NoLockfileFound {
            root: project_root.to_path_buf(),
        })
}

/// Parses lockfile text. `direct` is left empty; see [`classify_direct`].
pub fn parse_lockfile(
    content: &str,
    kind: PackageManagerKind,
) -> Result<DependencyGraph, LockfileError> {
    match kind {
        PackageManagerKind::YarnV1 => yarn::parse(content),
        PackageManagerKind::Pnpm => pnpm::parse(content),
        PackageManagerKind::Npm => npm::parse(content),
    }
}

/// Marks packages whose name and specifier match a manifest declaration as direct.
pub fn classify_direct(
    mut graph: DependencyGraph,
    manifest_deps: &BTreeMap<String, String>,
) -> DependencyGraph {
    graph.direct.clear();
    for (declared_name, range) in manifest_deps {
        let target = match classify_specifier(range) {
            SpecifierSource::Alias { name, .. } => name,
            SpecifierSource::Local => {
                graph.diagnostics.push(format!(
                    "{declared_name}: local dependency {range:?} is not analyzed"
                ));
                continue;
            }
            _ => declared_name.clone(),
        };
        let matches: Vec<PackageId> = graph
            .packages
            .values()
            .filter(|r| r.id.name() == target && r.declared_specifiers.contains(range))
            .map(|r| r.id.clone())
            .collect();
        if matches.is_empty() {
            graph.diagnostics.push(format!(
                "{declared_name}@{range} is declared in the manifest but not resolved in the lockfile"
            ));
        }
        graph.direct.extend(matches);
    }
    graph
}

/// Reads the lockfile (and `package.json`, when present) under `project_root`.
pub fn extract_dependencies(
    project_root: &Path,
    kind: PackageManagerKind,
) -> Result<DependencyGraph, LockfileError> {
    let read = |path: PathBuf| {
        std::fs::read_to_string(&path).map_err(|source| LockfileError::Io { path, source })
    };
    let lockfile = read(project_root.join(kind.lockfile_name()))?;
    let graph = parse_lockfile(&lockfile, kind)?;
    let manifest_path = project_root.join("package.json");
    if manifest_path.is_file() {
        let manifest = parse_manifest(&read(manifest_path)?)?;
        Ok(classify_direct(graph, &manifest))
    } else {
        let mut graph = graph;
        graph
            .diagnostics
            .push("no package.json found; every package is treated as transitive".to_string());
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn package_id_accepts_scoped_and_plain_names() {
        let id = PackageId::new("@kwsites/file-exists", "1.1.1").unwrap();
        assert_eq!(id.scope(), Some("kwsites"));
        assert_eq!(id.unscoped_name(), "file-exists");
        assert_eq!(id.to_string(), "@kwsites/file-exists@1.1.1");
        let plain: PackageId = "debug@4.3.4".parse().unwrap();
        assert_eq!(plain.name(), "debug");
        assert_eq!(plain.unscoped_name(), "debug");
        assert_eq!(plain.scope(), None);
    }

    #[test]
    fn package_id_rejects_bad_names() {
        for name in ["", "@scope", "@/x", "@scope/", "a/b", "has space", "@a/b/c"] {
            assert!(PackageId::new(name, "1.0.0").is_err(), "{name:?}");
        }
    }

    #[test]
    fn ranges_are_not_versions() {
        for v in [
            "^1.0.0",
            "~1.2.3",
            ">=1.0.0",
            "<2.0.0",
            "*",
            "1.x",
            "1.2.x",
            "1.0",
            "",
            "latest",
            "1.0.0 || 2.0.0",
            "npm:foo@1.0.0",
        ] {
            assert!(!is_exact_version(v), "{v:?}");
        }
        for v in [
            "1.1.1",
            "0.0.0-development",
            "5.0.0-next.12",
            "1.0.0+build.7",
            "10.20.30",
        ] {
            assert!(is_exact_version(v), "{v:?}");
        }
    }

    #[test]
    fn package_id_orders_by_name_then_version() {
        let a: PackageId = "a@2.0.0".parse().unwrap();
        let ab: PackageId = "a-b@1.0.0".parse().unwrap();
        let a1: PackageId = "a@1.0.0".parse().unwrap();
        let mut ids = vec![ab.clone(), a.clone(), a1.clone()];
        ids.sort();
        assert_eq!(ids, vec![a1, a, ab]);
    }

    #[test]
    fn package_id_deserialization_validates() {
        let ok: PackageId = serde_json::from_str(r#"{"name":"debug","version":"4.3.4"}"#).unwrap();
        assert_eq!(ok.version(), "4.3.4");
        assert!(serde_json::from_str::<PackageId>(r#"{"name":"debug","version":"^4"}"#).is_err());
    }

    #[test]
    fn detect_follows_precedence() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            detect_package_manager(dir.path(), None),
            Err(LockfileError::NoLockfileFound { .. })
        ));
        std::fs::write(dir.path().join("package-lock.json"), "{}").unwrap();
        assert_eq!(
            detect_package_manager(dir.path(), None).unwrap(),
            PackageManagerKind::Npm
        );
        std::fs::write(dir.path().join("yarn.lock"), "").unwrap();
        assert_eq!(
            detect_package_manager(dir.path(), None).unwrap(),
            PackageManagerKind::YarnV1
        );
        assert_eq!(
            detect_package_manager(dir.path(), Some(PackageManagerKind::Npm)).unwrap(),
            PackageManagerKind::Npm
        );
        assert!(detect_package_manager(dir.path(), Some(PackageManagerKind::Pnpm)).is_err());
    }

    #[test]
    fn detect_only_yarn() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("yarn.lock"), "").unwrap();
        assert_eq!(
            detect_package_manager(dir.path(), None).unwrap(),
            PackageManagerKind::YarnV1
        );
    }

    fn record(name: &str, version: &str, specs: &[&str]) -> DependencyRecord {
        let mut r = DependencyRecord::new(PackageId::new(name, version).unwrap());
        r.declared_specifiers = specs.iter().map(|s| s.to_string()).collect();
        r
    }

    #[test]
    fn classify_requires_matching_specifier() {
        let mut graph = DependencyGraph::default();
        graph.insert(record("debug", "4.3.4", &["^4.1.1"]));
        graph.insert(record("debug", "3.2.7", &["^3.1.0"]));
        graph.insert(record("ms", "2.1.2", &["2.1.2"]));
        let manifest = BTreeMap::from([("debug".to_string(), "^4.1.1".to_string())]);
        let graph = classify_direct(graph, &manifest);
        let direct: Vec<String> = graph.direct.iter().map(|i| i.to_string()).collect();
        assert_eq!(direct, vec!["debug@4.3.4"]);
        assert_eq!(graph.transitive().count(), 2);
    }

    #[test]
    fn classify_empty_manifest_is_all_transitive() {
        let mut graph = DependencyGraph::default();
        graph.insert(record("ms", "2.1.2", &["2.1.2"]));
        let graph = classify_direct(graph, &BTreeMap::new());
        assert!(graph.direct.is_empty());
        assert_eq!(graph.transitive().count(), 1);
    }

    #[test]
    fn classify_unresolved_manifest_name_is_a_warning() {
        let graph = classify_direct(
            DependencyGraph::default(),
            &BTreeMap::from([("left-pad".to_string(), "^1.0.0".to_string())]),
        );
        assert!(graph.direct.is_empty());
        assert_eq!(graph.diagnostics.len(), 1);
    }

    #[test]
    fn classify_follows_npm_aliases() {
        let mut graph = DependencyGraph::default();
        graph.insert(record(
            "string-width",
            "4.2.3",
            &["npm:string-width@^4.2.0"],
        ));
        let manifest = BTreeMap::from([(
            "string-width-cjs".to_string(),
            "npm:string-width@^4.2.0".to_string(),
        )]);
        let graph = classify_direct(graph, &manifest);
        assert_eq!(graph.direct.len(), 1);
    }
}
