//! The "Dirty Pond": fused registry and repository metadata per package,
//! persisted as canonical JSON and replayable offline.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::clock::Clock;
use crate::lockfile::{PackageId, PackageManagerKind};
use crate::registry::{
    MetadataSource, MetadataSourceKind, ProvenanceStatus, RegistryError, RegistryMetadata,
};
use crate::repoprobe::{
    split_repo_url, Accessibility, ArchiveStatus, ForkStatus, NormalizedRepoUrl, RepoSource,
    RepoStatus, TagStatus,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_POND_FILE: &str = "dirty-pond.json";
const REPLAY_MISS: &str = "replay miss";

#[derive(Debug, Error)]
pub enum PondError {
    #[error("pond I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("pond schema_version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: String, expected: u32 },
    #[error("malformed pond: {0}")]
    MalformedPond(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PondEntry {
    pub id: PackageId,
    pub direct: bool,
    pub registry: RegistryMetadata,
    /// Present iff `repository_url_raw` normalizes.
    pub repo: Option<RepoStatus>,
    pub repository_url_raw: Option<String>,
    pub monorepo_directory: Option<String>,
    pub diagnostics: Vec<String>,
}

impl PondEntry {
    pub fn validate(&self) -> Result<(), String> {
        if self.registry.id != self.id {
            return Err(format!(
                "{}: registry metadata is for {}",
                self.id, self.registry.id
            ));
        }
        let normalized = self
            .repository_url_raw
            .as_deref()
            .and_then(split_repo_url)
            .map(|(url, _)| url);
        match (&normalized, &self.repo) {
            (Some(url), Some(repo)) if *url == repo.url => {}
            (None, None) => {}
            (Some(_), Some(_)) => {
                return Err(format!("{}: repo status is for a different URL", self.id))
            }
            (Some(_), None) => {
                return Err(format!("{}: normalizable URL without repo status", self.id))
            }
            (None, Some(_)) => {
                return Err(format!(
                    "{}: repo status without a normalizable URL",
                    self.id
                ))
            }
        }
        if let Some(repo) = &self.repo {
            if !repo.is_gated() {
                return Err(format!(
                    "{}: inaccessible repo carries probe results",
                    self.id
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirtyPond {
    pub schema_version: u32,
    pub project: String,
    pub project_version: String,
    pub package_manager: PackageManagerKind,
    pub created_at: DateTime<Utc>,
    #[serde(
        serialize_with = "serialize_entries",
        deserialize_with = "deserialize_entries"
    )]
    pub entries: BTreeMap<PackageId, PondEntry>,
}

impl DirtyPond {
    pub fn new(
        project: impl Into<String>,
        project_version: impl Into<String>,
        package_manager: PackageManagerKind,
        created_at: DateTime<Utc>,
    ) -> Self {
        DirtyPond {
            schema_version: SCHEMA_VERSION,
            project: project.into(),
            project_version: project_version.into(),
            package_manager,
            created_at,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, entry: PondEntry) {
        self.entries.insert(entry.id.clone(), entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Canonical text: pretty JSON, entries in package order, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("pond serialization is infallible");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, PondError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| PondError::MalformedPond(e.to_string()))?;
        match value.get("schema_version") {
            Some(v) if v.as_u64() == Some(u64::from(SCHEMA_VERSION)) => {}
            Some(v) => {
                return Err(PondError::SchemaVersionMismatch {
                    found: v.to_string(),
                    expected: SCHEMA_VERSION,
                })
            }
            None => {
                return Err(PondError::MalformedPond(
                    "missing schema_version".to_string(),
                ))
            }
        }
        let pond: DirtyPond =
            serde_json::from_value(value).map_err(|e| PondError::MalformedPond(e.to_string()))?;
        for entry in pond.entries.values() {
            entry.validate().map_err(PondError::MalformedPond)?;
        }
        Ok(pond)
    }
}

fn serialize_entries<S: Serializer>(
    entries: &BTreeMap<PackageId, PondEntry>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    let mut map = serializer.serialize_map(Some(entries.len()))?;
    for (id, entry) in entries {
        map.serialize_entry(&id.to_string(), entry)?;
    }
    map.end()
}

fn deserialize_entries<'de, D: Deserializer<'de>>(
    deserializer: D,
) -> Result<BTreeMap<PackageId, PondEntry>, D::Error> {
    struct EntriesVisitor;

    impl<'de> Visitor<'de> for EntriesVisitor {
        type Value = BTreeMap<PackageId, PondEntry>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map of `name@version` to pond entries")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut entries = BTreeMap::new();
            while let Some((key, entry)) = access.next_entry::<String, PondEntry>()? {
                if key != entry.id.to_string() {
                    return Err(de::Error::custom(format!(
                        "entry key {key:?} does not match its id {}",
                        entry.id
                    )));
                }
                if entries.insert(entry.id.clone(), entry).is_some() {
                    return Err(de::Error::custom(format!("duplicate entry {key:?}")));
                }
            }
            Ok(entries)
        }
    }

    deserializer.deserialize_map(EntriesVisitor)
}

pub fn save_pond(pond: &DirtyPond, path: &Path) -> Result<(), PondError> {
    let io = |source| PondError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, pond.to_canonical_json()).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_pond(path: &Path) -> Result<DirtyPond, PondError> {
    let text = std::fs::read_to_string(path).map_err(|source| PondError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DirtyPond::from_json(&text)
}

/// Answers registry and repository queries from a loaded pond, never touching the network.
pub struct ReplayFetcher {
    entries: BTreeMap<PackageId, PondEntry>,
    by_url: HashMap<String, RepoStatus>,
}

pub fn replay_fetcher(pond: &DirtyPond) -> ReplayFetcher {
    let mut by_url = HashMap::new();
    for entry in pond.entries.values() {
        if let Some(repo) = &entry.repo {
            by_url
                .entry(repo.url.canonical_https.clone())
                .or_insert_with(|| repo.clone());
        }
    }
    ReplayFetcher {
        entries: pond.entries.clone(),
        by_url,
    }
}

impl ReplayFetcher {
    pub fn entry(&self, id: &PackageId) -> Option<&PondEntry> {
        self.entries.get(id)
    }

    pub fn package_ids(&self) -> impl Iterator<Item = &PackageId> {
        self.entries.keys()
    }

    fn recorded_repo(&self, url: &NormalizedRepoUrl, id: &PackageId) -> Option<&RepoStatus> {
        self.entries
            .get(id)
            .and_then(|e| e.repo.as_ref())
            .filter(|repo| repo.url == *url)
    }
}

fn miss() -> String {
    REPLAY_MISS.to_string()
}

impl MetadataSource for ReplayFetcher {
    fn fetch_package_metadata(&self, id: &PackageId) -> Result<RegistryMetadata, RegistryError> {
        let entry = self
            .entries
            .get(id)
            .ok_or_else(|| RegistryError::CacheMiss(id.clone()))?;
        Ok(RegistryMetadata {
            source: MetadataSourceKind::Replay,
            ..entry.registry.clone()
        })
    }

    fn check_provenance(&self, id: &PackageId) -> ProvenanceStatus {
        self.entries
            .get(id)
            .map(|e| e.registry.provenance.clone())
            .unwrap_or(ProvenanceStatus::Unknown { reason: miss() })
    }
}

impl RepoSource for ReplayFetcher {
    fn probe_accessibility(&self, url: &NormalizedRepoUrl) -> Accessibility {
        self.by_url
            .get(&url.canonical_https)
            .map(|r| r.accessibility.clone())
            .unwrap_or(Accessibility::Unknown { reason: miss() })
    }

    fn find_release_tag(&self, url: &NormalizedRepoUrl, id: &PackageId) -> TagStatus {
        self.recorded_repo(url, id)
            .map(|r| r.matched_tag.clone())
            .unwrap_or(TagStatus::Unknown { reason: miss() })
    }

    fn fetch_repo_flags(&self, url: &NormalizedRepoUrl) -> (ForkStatus, ArchiveStatus) {
        match self.by_url.get(&url.canonical_https) {
            Some(r) => (r.is_fork.clone(), r.is_archived.clone()),
            None => (
                ForkStatus::Unknown { reason: miss() },
                ArchiveStatus::Unknown { reason: miss() },
            ),
        }
    }

    /// Recorded statuses come back unchanged, timestamps included.
    fn probe_repo(&self, url: &NormalizedRepoUrl, id: &PackageId, clock: &dyn Clock) -> RepoStatus {
        if let Some(recorded) = self.recorded_repo(url, id) {
            return recorded.clone();
        }
        match self.by_url.get(&url.canonical_https) {
            Some(shared) => RepoStatus::new(
                url.clone(),
                shared.accessibility.clone(),
                shared.is_fork.clone(),
                shared.is_archived.clone(),
                TagStatus::Unknown { reason: miss() },
                shared.probed_at,
            ),
            None => RepoStatus::unknown(url.clone(), REPLAY_MISS, clock.now()),
        }
    }
}
