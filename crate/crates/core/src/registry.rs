//! NPM registry metadata: repository URL, deprecation and provenance presence.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::Clock;
use crate::http::{HttpRequest, HttpTransport};
use crate::lockfile::PackageId;

pub const DEFAULT_REGISTRY: &str = "https://registry.npmjs.org";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeprecationStatus {
    NotDeprecated,
    /// Registry message, verbatim (may be empty).
    Deprecated {
        message: String,
    },
    Unknown {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProvenanceStatus {
    HasAttestation,
    NoAttestation,
    Unknown { reason: String },
}

/// Outcome of the package-document lookup itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RegistryLookup {
    Found,
    NotFound,
    /// Not looked up at all (git/tarball dependency).
    Unregistered,
    Unavailable {
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataSourceKind {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryMetadata {
    pub id: PackageId,
    pub lookup: RegistryLookup,
    /// Verbatim `repository` value; never normalized here.
    pub repository_url_raw: Option<String>,
    /// `repository.directory`, for packages published from a monorepo.
    pub repository_directory: Option<String>,
    pub deprecation: DeprecationStatus,
    pub provenance: ProvenanceStatus,
    pub fetched_at: DateTime<Utc>,
    pub source: MetadataSourceKind,
}

impl RegistryMetadata {
    /// Metadata for a failed lookup: every status that depended on it is Unknown.
    pub fn from_error(
        id: &PackageId,
        error: &RegistryError,
        fetched_at: DateTime<Utc>,
        source: MetadataSourceKind,
    ) -> Self {
        let (lookup, reason) = match error {
            RegistryError::PackageNotFound(_) => (
                RegistryLookup::NotFound,
                "package not found in registry".to_string(),
            ),
            RegistryError::Transient { reason, .. } => (
                RegistryLookup::Unavailable {
                    reason: reason.clone(),
                },
                reason.clone(),
            ),
            RegistryError::CacheMiss(_) => (
                RegistryLookup::Unavailable {
                    reason: "replay miss".to_string(),
                },
                "replay miss".to_string(),
            ),
        };
        RegistryMetadata {
            id: id.clone(),
            lookup,
            repository_url_raw: None,
            repository_directory: None,
            deprecation: DeprecationStatus::Unknown {
                reason: reason.clone(),
            },
            provenance: ProvenanceStatus::Unknown { reason },
            fetched_at,
            source,
        }
    }

    /// Metadata for a git or tarball dependency that has no registry identity.
    pub fn unregistered(
        id: &PackageId,
        embedded_url: Option<String>,
        fetched_at: DateTime<Utc>,
        source: MetadataSourceKind,
    ) -> Self {
        let reason = "unregistered package".to_string();
        RegistryMetadata {
            id: id.clone(),
            lookup: RegistryLookup::Unregistered,
            repository_url_raw: embedded_url,
            repository_directory: None,
            deprecation: DeprecationStatus::Unknown {
                reason: reason.clone(),
            },
            provenance: ProvenanceStatus::Unknown { reason },
            fetched_at,
            source,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("{0} not found in registry")]
    PackageNotFound(PackageId),
    #[error("fetching {id} failed: {reason}")]
    Transient { id: PackageId, reason: String },
    #[error("{0} is not in the replay pond")]
    CacheMiss(PackageId),
}

/// Source of registry metadata: live HTTP or a replayed pond.
pub trait MetadataSource: Send + Sync {
    fn fetch_package_metadata(&self, id: &PackageId) -> Result<RegistryMetadata, RegistryError>;
    fn check_provenance(&self, id: &PackageId) -> ProvenanceStatus;
}

/// The parts of a package document the detectors need.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PackageDocument {
    versions: HashMap<String, VersionInfo>,
    repository: Option<(String, Option<String>)>,
    package_deprecation: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct VersionInfo {
    repository: Option<(String, Option<String>)>,
    deprecated: Option<String>,
}

impl PackageDocument {
    pub fn from_json(doc: &Value) -> Self {
        let versions: HashMap<String, VersionInfo> = doc
            .get("versions")
            .and_then(Value::as_object)
            .map(|versions| {
                versions
                    .iter()
                    .map(|(v, body)| {
                        let info = VersionInfo {
                            repository: body.get("repository").and_then(repository_field),
                            deprecated: body
                                .get("deprecated")
                                .and_then(Value::as_str)
                                .map(str::to_string),
                        };
                        (v.clone(), info)
                    })
                    .collect()
            })
            .unwrap_or_default();

        // Whole-package deprecation: an explicit top-level message, or the
        // `latest` release itself being deprecated.
        let latest_deprecation = doc
            .pointer("/dist-tags/latest")
            .and_then(Value::as_str)
            .and_then(|latest| versions.get(latest))
            .and_then(|info| info.deprecated.clone());
        let package_deprecation = doc
            .get("deprecated")
            .and_then(Value::as_str)
            .map(str::to_string)
            .or(latest_deprecation);

        PackageDocument {
            repository: doc.get("repository").and_then(repository_field),
            versions,
            package_deprecation,
        }
    }

    /// Builds metadata for one exact version of this document.
    pub fn metadata_for(
        &self,
        id: &PackageId,
        provenance: ProvenanceStatus,
        fetched_at: DateTime<Utc>,
        source: MetadataSourceKind,
    ) -> RegistryMetadata {
        let version = self.versions.get(id.version());
        let repository = version
            .and_then(|v| v.repository.clone())
            .or_else(|| self.repository.clone());
        let version_deprecation = version.and_then(|v| v.deprecated.clone());
        let deprecation = match (version_deprecation, &self.package_deprecation, version) {
            (Some(message), _, _) => DeprecationStatus::Deprecated { message },
            (None, Some(message), _) => DeprecationStatus::Deprecated {
                message: message.clone(),
            },
            (None, None, Some(_)) => DeprecationStatus::NotDeprecated,
            (None, None, None) => DeprecationStatus::Unknown {
                reason: "version not in registry document".to_string(),
            },
        };
        let (repository_url_raw, repository_directory) = match repository {
            Some((url, dir)) => (Some(url), dir),
            None => (None, None),
        };
        RegistryMetadata {
            id: id.clone(),
            lookup: RegistryLookup::Found,
            repository_url_raw,
            repository_directory,
            deprecation,
            provenance,
            fetched_at,
            source,
        }
    }
}

/// `repository` may be a bare string or `{type, url, directory}`.
fn repository_field(value: &Value) -> Option<(String, Option<String>)> {
    match value {
        Value::String(s) => Some((s.clone(), None)),
        Value::Object(obj) => {
            let url = obj.get("url").and_then(Value::as_str)?;
            let dir = obj
                .get("directory")
                .and_then(Value::as_str)
                .map(str::to_string);
            Some((url.to_string(), dir))
        }
        _ => None,
    }
}

/// Interprets an attestation endpoint reply.
pub fn provenance_from_response(status: u16, body: &[u8]) -> ProvenanceStatus {
    match status {
        200 => match serde_json::from_slice::<Value>(body) {
            Ok(doc) => match doc.get("attestations").and_then(Value::as_array) {
                Some(list) if !list.is_empty() => ProvenanceStatus::HasAttestation,
                Some(_) => ProvenanceStatus::NoAttestation,
                None => ProvenanceStatus::Unknown {
                    reason: "attestation response has no `attestations` list".to_string(),
                },
            },
            Err(_) => ProvenanceStatus::Unknown {
                reason: "malformed attestation response".to_string(),
            },
        },
        404 => ProvenanceStatus::NoAttestation,
        other => ProvenanceStatus::Unknown {
            reason: format!("http {other}"),
        },
    }
}

/// `@scope/name` → `@scope%2fname`, as the registry expects in paths.
pub fn escape_name(name: &str) -> String {
    name.replacen('/', "%2f", 1)
}

type DocCache = Mutex<HashMap<String, Result<Arc<PackageDocument>, RegistryFetchFailure>>>;

#[derive(Debug, Clone)]
enum RegistryFetchFailure {
    NotFound,
    Transient(String),
}

/// Live registry client over any [`HttpTransport`].
pub struct RegistryClient<T> {
    base_url: String,
    transport: T,
    clock: Arc<dyn Clock>,
    documents: DocCache,
}

impl<T: HttpTransport> RegistryClient<T> {
    pub fn new(base_url: &str, transport: T, clock: Arc<dyn Clock>) -> Self {
        RegistryClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            transport,
            clock,
            documents: Mutex::new(HashMap::new()),
        }
    }

    pub fn document_url(&self, name: &str) -> String {
        format!("{}/{}", self.base_url, escape_name(name))
    }

    pub fn attestations_url(&self, id: &PackageId) -> String {
        format!(
            "{}/-/npm/v1/attestations/{}@{}",
            self.base_url,
            escape_name(id.name()),
            id.version()
        )
    }

    fn document(&self, name: &str) -> Result<Arc<PackageDocument>, RegistryFetchFailure> {
        if let Some(cached) = self
            .documents
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(name)
        {
            return cached.clone();
        }
        let request =
            HttpRequest::get(self.document_url(name)).header("accept", "application/json");
        let result = match self.transport.execute(&request) {
            Ok(resp) if resp.status == 200 => serde_json::from_slice::<Value>(&resp.body)
                .map(|doc| Arc::new(PackageDocument::from_json(&doc)))
                .map_err(|_| {
                    RegistryFetchFailure::Transient("malformed package document".to_string())
                }),
            Ok(resp) if resp.status == 404 => Err(RegistryFetchFailure::NotFound),
            Ok(resp) => Err(RegistryFetchFailure::Transient(format!(
                "http {}",
                resp.status
            ))),
            Err(e) => Err(RegistryFetchFailure::Transient(e.reason())),
        };
        // Transient failures are not cached: another version may retry.
        if !matches!(result, Err(RegistryFetchFailure::Transient(_))) {
            self.documents
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .insert(name.to_string(), result.clone());
        }
        result
    }
}

impl<T: HttpTransport> MetadataSource for RegistryClient<T> {
    fn fetch_package_metadata(&self, id: &PackageId) -> Result<RegistryMetadata, RegistryError> {
        let document = self.document(id.name()).map_err(|failure| match failure {
            RegistryFetchFailure::NotFound => RegistryError::PackageNotFound(id.clone()),
            RegistryFetchFailure::Transient(reason) => RegistryError::Transient {
                id: id.clone(),
                reason,
            },
        })?;
        let provenance = self.check_provenance(id);
        Ok(document.metadata_for(id, provenance, self.clock.now(), MetadataSourceKind::Live))
    }

    fn check_provenance(&self, id: &PackageId) -> ProvenanceStatus {
        let request =
            HttpRequest::get(self.attestations_url(id)).header("accept", "application/json");
        match self.transport.execute(&request) {
            Ok(resp) => provenance_from_response(resp.status, &resp.body),
            Err(e) => ProvenanceStatus::Unknown { reason: e.reason() },
        }
    }
}
