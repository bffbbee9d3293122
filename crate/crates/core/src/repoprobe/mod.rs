//! Source repository probing: accessibility, release tags, fork/archived flags.

mod normalize;

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::Clock;
use crate::http::{HttpRequest, HttpResponse, HttpTransport, TransportError};
use crate::lockfile::PackageId;

pub use normalize::{normalize_repo_url, split_repo_url, NormalizedRepoUrl};

pub const GITHUB_API: &str = "https://api.github.com";
pub const TOKEN_ENV: &str = "DW_GITHUB_TOKEN";
pub const DEFAULT_TAG_CAP: usize = 2000;
const TAGS_PER_PAGE: usize = 100;
const INACCESSIBLE: &str = "repo inaccessible";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Accessibility {
    Accessible,
    NotFound,
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ForkStatus {
    /// `parent` is the upstream's canonical URL (empty if the forge did not say).
    Fork {
        parent: String,
    },
    NotFork,
    Unknown {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ArchiveStatus {
    Archived,
    Active,
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TagStatus {
    Tag { name: String },
    NoTagFound,
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoStatus {
    pub url: NormalizedRepoUrl,
    pub accessibility: Accessibility,
    pub is_fork: ForkStatus,
    pub is_archived: ArchiveStatus,
    pub matched_tag: TagStatus,
    pub probed_at: DateTime<Utc>,
}

impl RepoStatus {
    /// Assembles a status; anything but an accessible repo forces the
    /// dependent fields to `Unknown("repo inaccessible")`.
    pub fn new(
        url: NormalizedRepoUrl,
        accessibility: Accessibility,
        is_fork: ForkStatus,
        is_archived: ArchiveStatus,
        matched_tag: TagStatus,
        probed_at: DateTime<Utc>,
    ) -> Self {
        if accessibility != Accessibility::Accessible {
            return RepoStatus::inaccessible(url, accessibility, probed_at);
        }
        RepoStatus {
            url,
            accessibility,
            is_fork,
            is_archived,
            matched_tag,
            probed_at,
        }
    }

    pub fn inaccessible(
        url: NormalizedRepoUrl,
        accessibility: Accessibility,
        probed_at: DateTime<Utc>,
    ) -> Self {
        let reason = || INACCESSIBLE.to_string();
        RepoStatus {
            url,
            accessibility,
            is_fork: ForkStatus::Unknown { reason: reason() },
            is_archived: ArchiveStatus::Unknown { reason: reason() },
            matched_tag: TagStatus::Unknown { reason: reason() },
            probed_at,
        }
    }

    /// Every field Unknown with the same reason.
    pub fn unknown(url: NormalizedRepoUrl, reason: &str, probed_at: DateTime<Utc>) -> Self {
        RepoStatus {
            url,
            accessibility: Accessibility::Unknown {
                reason: reason.to_string(),
            },
            is_fork: ForkStatus::Unknown {
                reason: reason.to_string(),
            },
            is_archived: ArchiveStatus::Unknown {
                reason: reason.to_string(),
            },
            matched_tag: TagStatus::Unknown {
                reason: reason.to_string(),
            },
            probed_at,
        }
    }

    pub fn is_gated(&self) -> bool {
        self.accessibility == Accessibility::Accessible
            || (matches!(self.is_fork, ForkStatus::Unknown { .. })
                && matches!(self.is_archived, ArchiveStatus::Unknown { .. })
                && matches!(self.matched_tag, TagStatus::Unknown { .. }))
    }
}

/// Repository facts, from a live forge or a replayed pond.
pub trait RepoSource: Send + Sync {
    fn probe_accessibility(&self, url: &NormalizedRepoUrl) -> Accessibility;
    fn find_release_tag(&self, url: &NormalizedRepoUrl, id: &PackageId) -> TagStatus;
    fn fetch_repo_flags(&self, url: &NormalizedRepoUrl) -> (ForkStatus, ArchiveStatus);

    /// Full probe: tags and flags are only fetched for accessible repos.
    fn probe_repo(&self, url: &NormalizedRepoUrl, id: &PackageId, clock: &dyn Clock) -> RepoStatus {
        let accessibility = self.probe_accessibility(url);
        if accessibility != Accessibility::Accessible {
            return RepoStatus::inaccessible(url.clone(), accessibility, clock.now());
        }
        let matched_tag = self.find_release_tag(url, id);
        let (is_fork, is_archived) = self.fetch_repo_flags(url);
        RepoStatus::new(
            url.clone(),
            accessibility,
            is_fork,
            is_archived,
            matched_tag,
            clock.now(),
        )
    }
}

/// Tag names tried for a release, highest precedence first.
pub fn tag_candidates(id: &PackageId) -> Vec<String> {
    let (name, short, version) = (id.name(), id.unscoped_name(), id.version());
    let mut out: Vec<String> = Vec::with_capacity(7);
    for candidate in [
        format!("v{version}"),
        version.to_string(),
        format!("{name}@{version}"),
        format!("{short}@{version}"),
        format!("{name}-v{version}"),
        format!("{short}-v{version}"),
        format!("{name}/v{version}"),
    ] {
        if !out.contains(&candidate) {
            out.push(candidate);
        }
    }
    out
}

/// Highest-precedence candidate present in `tags`.
pub fn select_tag<'a, I>(id: &PackageId, tags: I) -> Option<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let candidates = tag_candidates(id);
    let mut best: Option<usize> = None;
    for tag in tags {
        if let Some(rank) = candidates.iter().position(|c| c == tag) {
            best = Some(best.map_or(rank, |b| b.min(rank)));
            if rank == 0 {
                break;
            }
        }
    }
    best.map(|i| candidates[i].clone())
}

/// Live prober: HTTPS for accessibility, the GitHub REST API for tags and
/// flags, git smart-HTTP ref advertisement for tags on other forges.
pub struct LiveRepoProber<T> {
    transport: T,
    api_base: String,
    token: Option<String>,
    tag_cap: usize,
}

impl<T: HttpTransport> LiveRepoProber<T> {
    pub fn new(transport: T, token: Option<String>) -> Self {
        LiveRepoProber {
            transport,
            api_base: GITHUB_API.to_string(),
            token: token.filter(|t| !t.trim().is_empty()),
            tag_cap: DEFAULT_TAG_CAP,
        }
    }

    pub fn with_api_base(mut self, api_base: &str) -> Self {
        self.api_base = api_base.trim_end_matches('/').to_string();
        self
    }

    pub fn with_tag_cap(mut self, cap: usize) -> Self {
        self.tag_cap = cap.max(1);
        self
    }

    fn api_request(&self, url: String) -> HttpRequest {
        let request = HttpRequest::get(url)
            .header("accept", "application/vnd.github+json")
            .header("x-github-api-version", "2022-11-28");
        match &self.token {
            Some(token) => request.header("authorization", format!("Bearer {token}")),
            None => request,
        }
    }

    fn github_tags(&self, url: &NormalizedRepoUrl, id: &PackageId) -> TagStatus {
        let candidates = tag_candidates(id);
        let mut seen: Vec<String> = Vec::new();
        let mut next = Some(format!(
            "{}/repos/{}/{}/tags?per_page={TAGS_PER_PAGE}&page=1",
            self.api_base, url.owner, url.repo
        ));
        let mut page = 1;
        while let Some(page_url) = next.take() {
            let response = match self.transport.execute(&self.api_request(page_url)) {
                Ok(r) if r.status == 200 => r,
                Ok(r) => {
                    return TagStatus::Unknown {
                        reason: api_failure(&r),
                    }
                }
                Err(e) => return TagStatus::Unknown { reason: e.reason() },
            };
            let Ok(Value::Array(items)) = serde_json::from_slice::<Value>(&response.body) else {
                return TagStatus::Unknown {
                    reason: "malformed tag listing".to_string(),
                };
            };
            let count = items.len();
            seen.extend(
                items
                    .iter()
                    .filter_map(|t| t.get("name").and_then(Value::as_str).map(str::to_string)),
            );
            if seen.iter().any(|t| *t == candidates[0]) {
                break;
            }
            let has_next = match response.header("link") {
                Some(link) => next_link(link).is_some(),
                None => count == TAGS_PER_PAGE,
            };
            if !has_next {
                break;
            }
            if seen.len() >= self.tag_cap {
                return match select_tag(id, seen.iter().map(String::as_str)) {
                    Some(name) => TagStatus::Tag { name },
                    None => TagStatus::Unknown {
                        reason: format!("tag listing exceeds {} tags", self.tag_cap),
                    },
                };
            }
            page += 1;
            next = Some(
                response
                    .header("link")
                    .and_then(next_link)
                    .unwrap_or_else(|| {
                        format!(
                            "{}/repos/{}/{}/tags?per_page={TAGS_PER_PAGE}&page={page}",
                            self.api_base, url.owner, url.repo
                        )
                    }),
            );
        }
        match select_tag(id, seen.iter().map(String::as_str)) {
            Some(name) => TagStatus::Tag { name },
            None => TagStatus::NoTagFound,
        }
    }

    fn smart_http_tags(&self, url: &NormalizedRepoUrl, id: &PackageId) -> TagStatus {
        let request = HttpRequest::get(format!(
            "{}.git/info/refs?service=git-upload-pack",
            url.canonical_https
        ));
        match self.transport.execute(&request) {
            Ok(r) if r.status == 200 => {
                let tags = advertised_tags(&r.body);
                match select_tag(id, tags.iter().map(String::as_str)) {
                    Some(name) => TagStatus::Tag { name },
                    None => TagStatus::NoTagFound,
                }
            }
            Ok(r) => TagStatus::Unknown {
                reason: format!("http {}", r.status),
            },
            Err(e) => TagStatus::Unknown { reason: e.reason() },
        }
    }
}

impl<T: HttpTransport> RepoSource for LiveRepoProber<T> {
    fn probe_accessibility(&self, url: &NormalizedRepoUrl) -> Accessibility {
        let mut result = self
            .transport
            .execute(&HttpRequest::head(&url.canonical_https));
        if matches!(result, Ok(ref r) if r.status == 405) {
            result = self
                .transport
                .execute(&HttpRequest::get(&url.canonical_https));
        }
        accessibility_from(result)
    }

    fn find_release_tag(&self, url: &NormalizedRepoUrl, id: &PackageId) -> TagStatus {
        if url.is_github() {
            self.github_tags(url, id)
        } else {
            self.smart_http_tags(url, id)
        }
    }

    fn fetch_repo_flags(&self, url: &NormalizedRepoUrl) -> (ForkStatus, ArchiveStatus) {
        let unknown = |reason: &str| {
            (
                ForkStatus::Unknown {
                    reason: reason.to_string(),
                },
                ArchiveStatus::Unknown {
                    reason: reason.to_string(),
                },
            )
        };
        if !url.is_github() {
            return unknown("unsupported forge");
        }
        let request = self.api_request(format!(
            "{}/repos/{}/{}",
            self.api_base, url.owner, url.repo
        ));
        let response = match self.transport.execute(&request) {
            Ok(r) if r.status == 200 => r,
            Ok(r) => return unknown(&api_failure(&r)),
            Err(e) => return unknown(&e.reason()),
        };
        match serde_json::from_slice::<Value>(&response.body) {
            Ok(doc) => repo_flags_from_document(&doc),
            Err(_) => unknown("malformed repository document"),
        }
    }
}

/// Remembers accessibility and fork/archive flags per repository, so sibling
/// packages of a monorepo share one probe. Tag lookups stay per package.
pub struct MemoizedRepoSource<R> {
    inner: R,
    accessibility: Mutex<HashMap<String, Accessibility>>,
    flags: Mutex<HashMap<String, (ForkStatus, ArchiveStatus)>>,
}

impl<R: RepoSource> MemoizedRepoSource<R> {
    pub fn new(inner: R) -> Self {
        MemoizedRepoSource {
            inner,
            accessibility: Mutex::new(HashMap::new()),
            flags: Mutex::new(HashMap::new()),
        }
    }
}

fn memo<V: Clone>(map: &Mutex<HashMap<String, V>>, key: &str, compute: impl FnOnce() -> V) -> V {
    if let Some(hit) = map.lock().expect("memo lock").get(key) {
        return hit.clone();
    }
    let value = compute();
    map.lock()
        .expect("memo lock")
        .entry(key.to_string())
        .or_insert(value)
        .clone()
}

impl<R: RepoSource> RepoSource for MemoizedRepoSource<R> {
    fn probe_accessibility(&self, url: &NormalizedRepoUrl) -> Accessibility {
        memo(&self.accessibility, &url.canonical_https, || {
            self.inner.probe_accessibility(url)
        })
    }

    fn find_release_tag(&self, url: &NormalizedRepoUrl, id: &PackageId) -> TagStatus {
        self.inner.find_release_tag(url, id)
    }

    fn fetch_repo_flags(&self, url: &NormalizedRepoUrl) -> (ForkStatus, ArchiveStatus) {
        memo(&self.flags, &url.canonical_https, || {
            self.inner.fetch_repo_flags(url)
        })
    }
}

/// Reads `fork`, `parent` and `archived` from a GitHub repository document.
pub fn repo_flags_from_document(doc: &Value) -> (ForkStatus, ArchiveStatus) {
    let is_fork = match doc.get("fork").and_then(Value::as_bool) {
        Some(true) => {
            let parent = match doc.get("parent") {
                Some(Value::String(full_name)) => format!("https://github.com/{full_name}"),
                Some(Value::Object(p)) => p
                    .get("html_url")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .or_else(|| {
                        p.get("full_name")
                            .and_then(Value::as_str)
                            .map(|n| format!("https://github.com/{n}"))
                    })
                    .unwrap_or_default(),
                _ => String::new(),
            };
            ForkStatus::Fork { parent }
        }
        Some(false) => ForkStatus::NotFork,
        None => ForkStatus::Unknown {
            reason: "no `fork` field".to_string(),
        },
    };
    let is_archived = match doc.get("archived").and_then(Value::as_bool) {
        Some(true) => ArchiveStatus::Archived,
        Some(false) => ArchiveStatus::Active,
        None => ArchiveStatus::Unknown {
            reason: "no `archived` field".to_string(),
        },
    };
    (is_fork, is_archived)
}

pub fn accessibility_from(result: Result<HttpResponse, TransportError>) -> Accessibility {
    match result {
        Ok(r) if (200..400).contains(&r.status) => Accessibility::Accessible,
        Ok(r) if r.status == 404 || r.status == 410 => Accessibility::NotFound,
        Ok(r) => Accessibility::Unknown {
            reason: format!("http {}", r.status),
        },
        Err(e) => Accessibility::Unknown { reason: e.reason() },
    }
}

fn api_failure(response: &HttpResponse) -> String {
    match response.status {
        429 => "rate limited".to_string(),
        403 if response.header("x-ratelimit-remaining") == Some("0") => "rate limited".to_string(),
        404 => "api 404".to_string(),
        other => format!("http {other}"),
    }
}

/// `<url>; rel="next"` target from a Link header.
fn next_link(link: &str) -> Option<String> {
    link.split(',').find_map(|part| {
        let (target, params) = part.split_once(';')?;
        params
            .split(';')
            .any(|p| p.trim() == "rel=\"next\"")
            .then(|| {
                target
                    .trim()
                    .trim_start_matches('<')
                    .trim_end_matches('>')
                    .to_string()
            })
    })
}

/// Tag names from a git-upload-pack ref advertisement.
fn advertised_tags(body: &[u8]) -> Vec<String> {
    let text = String::from_utf8_lossy(body);
    let mut tags: Vec<String> = text
        .split('\n')
        .filter_map(|line| {
            let line = line.split('\0').next().unwrap_or(line);
            let pos = line.find("refs/tags/")?;
            let tag = &line[pos + "refs/tags/".len()..];
            Some(tag.trim_end_matches("^{}").trim().to_string())
        })
        .filter(|t| !t.is_empty())
        .collect();
    tags.dedup();
    tags
}
