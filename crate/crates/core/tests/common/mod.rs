#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chainsmell::clock::FixedClock;
use chainsmell::lockfile::{PackageId, PackageManagerKind};
use chainsmell::pond::{DirtyPond, PondEntry};
use chainsmell::registry::{
    DeprecationStatus, MetadataSourceKind, ProvenanceStatus, RegistryLookup, RegistryMetadata,
};
use chainsmell::repoprobe::{
    normalize_repo_url, Accessibility, ArchiveStatus, ForkStatus, RepoStatus, TagStatus,
};
use chrono::{DateTime, Utc};
use proptest::prelude::*;

pub const FIXED_NOW: i64 = 1_700_000_000;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn project(name: &str) -> PathBuf {
    fixtures().join("projects").join(name)
}

pub fn at(secs: i64) -> DateTime<Utc> {
    FixedClock::from_unix(secs).0
}

/// Knobs for one hand-built pond entry.
#[derive(Debug, Clone)]
pub struct Spec {
    pub id: &'static str,
    pub direct: bool,
    pub url: Option<&'static str>,
    pub accessibility: Accessibility,
    pub tag: TagStatus,
    pub fork: ForkStatus,
    pub archive: ArchiveStatus,
    pub deprecation: DeprecationStatus,
    pub provenance: ProvenanceStatus,
}

impl Spec {
    pub fn clean(id: &'static str, url: &'static str) -> Self {
        Spec {
            id,
            direct: false,
            url: Some(url),
            accessibility: Accessibility::Accessible,
            tag: TagStatus::Tag {
                name: "v1.0.0".into(),
            },
            fork: ForkStatus::NotFork,
            archive: ArchiveStatus::Active,
            deprecation: DeprecationStatus::NotDeprecated,
            provenance: ProvenanceStatus::NoAttestation,
        }
    }

    pub fn build(&self) -> PondEntry {
        let id: PackageId = self.id.parse().unwrap();
        entry(
            id,
            self.direct,
            self.url.map(str::to_string),
            self.accessibility.clone(),
            self.tag.clone(),
            self.fork.clone(),
            self.archive.clone(),
            self.deprecation.clone(),
            self.provenance.clone(),
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub fn entry(
    id: PackageId,
    direct: bool,
    url: Option<String>,
    accessibility: Accessibility,
    tag: TagStatus,
    fork: ForkStatus,
    archive: ArchiveStatus,
    deprecation: DeprecationStatus,
    provenance: ProvenanceStatus,
) -> PondEntry {
    let repo = url
        .as_deref()
        .and_then(normalize_repo_url)
        .map(|u| RepoStatus::new(u, accessibility, fork, archive, tag, at(FIXED_NOW - 60)));
    PondEntry {
        registry: RegistryMetadata {
            id: id.clone(),
            lookup: RegistryLookup::Found,
            repository_url_raw: url.clone(),
            repository_directory: None,
            deprecation,
            provenance,
            fetched_at: at(FIXED_NOW - 120),
            source: MetadataSourceKind::Live,
        },
        id,
        direct,
        repo,
        repository_url_raw: url,
        monorepo_directory: None,
        diagnostics: vec![],
    }
}

/// Ten entries with hand-assigned statuses: 2 without a URL, 1 URL 404,
/// 3 without a release tag, 2 deprecated (one registry, one archived),
/// 1 fork, and no attestation anywhere.
pub fn ten_entry_pond() -> DirtyPond {
    let mut pond = DirtyPond::new(
        "fixture-app",
        "1.0.0",
        PackageManagerKind::YarnV1,
        at(FIXED_NOW - 300),
    );
    let specs = vec![
        Spec {
            url: None,
            ..Spec::clean("a-no-url@1.0.0", "")
        },
        Spec {
            url: Some("not a url"),
            direct: true,
            ..Spec::clean("b-bad-url@2.1.0", "")
        },
        Spec {
            accessibility: Accessibility::NotFound,
            ..Spec::clean(
                "c-gone@0.3.1",
                "git+https://github.com/gone-owner/c-gone.git",
            )
        },
        Spec {
            tag: TagStatus::NoTagFound,
            ..Spec::clean("d-untagged@1.2.3", "https://github.com/d/untagged")
        },
        Spec {
            tag: TagStatus::NoTagFound,
            deprecation: DeprecationStatus::Deprecated {
                message: "use e-next instead".into(),
            },
            direct: true,
            ..Spec::clean("e-old@4.0.0", "github:e/old")
        },
        Spec {
            tag: TagStatus::NoTagFound,
            ..Spec::clean("@scope/f-untagged@0.0.9", "git@github.com:scope/f.git")
        },
        Spec {
            archive: ArchiveStatus::Archived,
            ..Spec::clean("g-archived@3.3.3", "https://github.com/g/archived")
        },
        Spec {
            fork: ForkStatus::Fork {
                parent: "https://github.com/upstream/h".into(),
            },
            ..Spec::clean("h-forked@1.0.0", "https://github.com/someone/h")
        },
        Spec::clean("i-clean@5.0.0", "https://github.com/i/clean"),
        Spec {
            direct: true,
            ..Spec::clean("j-clean@6.1.0", "https://gitlab.com/j/clean")
        },
    ];
    for spec in specs {
        pond.insert(spec.build());
    }
    pond
}

pub fn empty_pond() -> DirtyPond {
    DirtyPond::new(
        "empty-app",
        "0.0.0",
        PackageManagerKind::Npm,
        at(FIXED_NOW - 300),
    )
}

/// One published scan: total, no URL, URL 404, no tag, deprecated, fork, no provenance.
#[derive(Debug, Clone, Copy)]
pub struct Column {
    pub project: &'static str,
    pub version: &'static str,
    pub counts: [usize; 7],
}

pub const METAMASK_V10: Column = Column {
    project: "metamask-extension",
    version: "10.0.0",
    counts: [3597, 25, 44, 500, 247, 42, 3597],
};
pub const METAMASK_V12: Column = Column {
    project: "metamask-extension",
    version: "12.0.0",
    counts: [3332, 47, 15, 425, 53, 59, 3274],
};
pub const WEBPACK_V5_55: Column = Column {
    project: "webpack",
    version: "5.55.0",
    counts: [866, 2, 10, 77, 17, 6, 866],
};

/// Builds a pond whose entries realize `column` by construction: disjoint
/// index ranges for the repository-level smells, deprecation on the tail,
/// missing provenance on the head.
pub fn modeled_pond(column: Column) -> DirtyPond {
    let [total, no_url, gone, no_tag, deprecated, forks, no_prov] = column.counts;
    assert!(no_url + gone + no_tag + forks <= total);
    let mut pond = DirtyPond::new(
        column.project,
        column.version,
        PackageManagerKind::YarnV1,
        at(FIXED_NOW - 300),
    );
    for i in 0..total {
        let id = PackageId::new(format!("pkg-{i:05}"), "1.0.0").unwrap();
        let (c1, c2, c3, c4) = (
            no_url,
            no_url + gone,
            no_url + gone + no_tag,
            no_url + gone + no_tag + forks,
        );
        let mut url = Some(format!("https://github.com/org{i}/pkg-{i:05}"));
        let mut acc = Accessibility::Accessible;
        let mut tag = TagStatus::Tag {
            name: "v1.0.0".into(),
        };
        let mut fork = ForkStatus::NotFork;
        if i < c1 {
            url = None;
        } else if i < c2 {
            acc = Accessibility::NotFound;
        } else if i < c3 {
            tag = TagStatus::NoTagFound;
        } else if i < c4 {
            fork = ForkStatus::Fork {
                parent: format!("https://github.com/upstream/pkg-{i:05}"),
            };
        }
        let deprecation = if i >= total - deprecated {
            DeprecationStatus::Deprecated {
                message: "deprecated".into(),
            }
        } else {
            DeprecationStatus::NotDeprecated
        };
        let provenance = if i < no_prov {
            ProvenanceStatus::NoAttestation
        } else {
            ProvenanceStatus::HasAttestation
        };
        pond.insert(entry(
            id,
            i % 10 == 0,
            url,
            acc,
            tag,
            fork,
            ArchiveStatus::Active,
            deprecation,
            provenance,
        ));
    }
    pond
}

/// (fixture, format, count frozen from the text-scan oracle)
pub const FIXTURES: [(&str, PackageManagerKind, usize); 9] = [
    ("yarn-basic", PackageManagerKind::YarnV1, 6),
    ("yarn-git-local", PackageManagerKind::YarnV1, 3),
    ("yarn-scoped", PackageManagerKind::YarnV1, 5),
    ("pnpm-v6", PackageManagerKind::Pnpm, 3),
    ("pnpm-v9", PackageManagerKind::Pnpm, 5),
    ("pnpm-v9-workspace", PackageManagerKind::Pnpm, 3),
    ("npm-v3", PackageManagerKind::Npm, 7),
    ("npm-v2-nested", PackageManagerKind::Npm, 7),
    ("npm-workspace", PackageManagerKind::Npm, 3),
];

/// Distinct `(name, version)` pairs in a yarn v1 lockfile, by line scanning.
pub fn yarn_scan_count(text: &str) -> usize {
    let mut seen = BTreeSet::new();
    let mut header: Option<String> = None;
    for line in text.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !line.starts_with(' ') {
            header = Some(line.trim_end_matches(':').to_string());
            continue;
        }
        let trimmed = line.trim();
        if let (Some(h), Some(rest)) = (&header, trimmed.strip_prefix("version ")) {
            let first = h.split(", ").next().unwrap().trim_matches('"');
            let descriptors: Vec<&str> = h.split(", ").map(|d| d.trim_matches('"')).collect();
            if descriptors
                .iter()
                .all(|d| d.contains("@file:") || d.contains("@link:"))
            {
                header = None;
                continue;
            }
            let real = match first.find("@npm:") {
                Some(p) => &first[p + 5..],
                None => first,
            };
            let at = real[1..].find('@').unwrap() + 1;
            seen.insert((real[..at].to_string(), rest.trim_matches('"').to_string()));
            header = None;
        }
    }
    seen.len()
}

/// Distinct package keys under `packages:` in a pnpm lockfile, by line scanning.
pub fn pnpm_scan_count(text: &str) -> usize {
    let mut seen = BTreeSet::new();
    let mut inside = false;
    for line in text.lines() {
        if !line.starts_with(' ') && !line.is_empty() {
            inside = line == "packages:";
            continue;
        }
        if inside && line.starts_with("  ") && !line.starts_with("   ") && line.ends_with(':') {
            let key = line
                .trim()
                .trim_end_matches(':')
                .trim_matches('\'')
                .trim_start_matches('/');
            let key = key.split('(').next().unwrap();
            seen.insert(key.to_string());
        }
    }
    seen.len()
}

/// Distinct installed `(name, version)` pairs in a package-lock, skipping links.
pub fn npm_scan_count(text: &str) -> usize {
    let doc: serde_json::Value = serde_json::from_str(text).unwrap();
    let mut seen = BTreeSet::new();
    for (path, entry) in doc["packages"].as_object().unwrap() {
        let Some(pos) = path.rfind("node_modules/") else {
            continue;
        };
        if entry.get("link").and_then(|v| v.as_bool()) == Some(true) {
            continue;
        }
        let name = entry
            .get("name")
            .and_then(|v| v.as_str())
            .unwrap_or(&path[pos + "node_modules/".len()..]);
        seen.insert((
            name.to_string(),
            entry["version"].as_str().unwrap().to_string(),
        ));
    }
    seen.len()
}

fn reason() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("timeout".to_string()),
        Just("rate limited".to_string())
    ]
}

fn accessibility() -> impl Strategy<Value = Accessibility> {
    prop_oneof![
        3 => Just(Accessibility::Accessible),
        1 => Just(Accessibility::NotFound),
        1 => reason().prop_map(|reason| Accessibility::Unknown { reason }),
    ]
}

fn tag() -> impl Strategy<Value = TagStatus> {
    prop_oneof![
        Just(TagStatus::Tag {
            name: "v1.0.0".into()
        }),
        Just(TagStatus::NoTagFound),
        reason().prop_map(|reason| TagStatus::Unknown { reason }),
    ]
}

fn fork() -> impl Strategy<Value = ForkStatus> {
    prop_oneof![
        Just(ForkStatus::Fork {
            parent: "https://github.com/up/x".into()
        }),
        Just(ForkStatus::Fork {
            parent: String::new()
        }),
        Just(ForkStatus::NotFork),
        reason().prop_map(|reason| ForkStatus::Unknown { reason }),
    ]
}

fn archive() -> impl Strategy<Value = ArchiveStatus> {
    prop_oneof![
        Just(ArchiveStatus::Archived),
        Just(ArchiveStatus::Active),
        reason().prop_map(|reason| ArchiveStatus::Unknown { reason }),
    ]
}

fn deprecation() -> impl Strategy<Value = DeprecationStatus> {
    prop_oneof![
        Just(DeprecationStatus::NotDeprecated),
        "[a-z ]{0,12}".prop_map(|message| DeprecationStatus::Deprecated { message }),
        reason().prop_map(|reason| DeprecationStatus::Unknown { reason }),
    ]
}

fn provenance() -> impl Strategy<Value = ProvenanceStatus> {
    prop_oneof![
        Just(ProvenanceStatus::HasAttestation),
        Just(ProvenanceStatus::NoAttestation),
        reason().prop_map(|reason| ProvenanceStatus::Unknown { reason }),
    ]
}

fn url() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        Just(None),
        Just(Some(String::new())),
        Just(Some("not a url".to_string())),
        "[a-c]{1,2}".prop_map(|o| Some(format!("https://github.com/{o}/repo"))),
        "[a-c]{1,2}".prop_map(|o| Some(format!("git+ssh://git@gitlab.com/{o}/repo.git"))),
    ]
}

fn lookup() -> impl Strategy<Value = RegistryLookup> {
    prop_oneof![
        6 => Just(RegistryLookup::Found),
        1 => Just(RegistryLookup::NotFound),
        1 => Just(RegistryLookup::Unregistered),
        1 => reason().prop_map(|reason| RegistryLookup::Unavailable { reason }),
    ]
}

/// Any entry satisfying the pond invariants, including gating.
pub fn arb_entry() -> impl Strategy<Value = PondEntry> {
    (
        "[a-e]{1,3}",
        0u8..3,
        any::<bool>(),
        url(),
        (accessibility(), tag(), fork(), archive()),
        (deprecation(), provenance(), lookup()),
    )
        .prop_map(
            |(name, minor, direct, url, (acc, tag, fork, archive), (dep, prov, lookup))| {
                let id = PackageId::new(name, format!("1.{minor}.0")).unwrap();
                let mut e = entry(id, direct, url, acc, tag, fork, archive, dep, prov);
                e.registry.lookup = lookup;
                e
            },
        )
}

pub fn arb_pond(max: usize) -> impl Strategy<Value = DirtyPond> {
    prop::collection::vec(arb_entry(), 0..=max).prop_map(|entries| {
        let mut pond = DirtyPond::new("gen", "0.1.0", PackageManagerKind::Pnpm, at(FIXED_NOW));
        for e in entries {
            pond.insert(e);
        }
        pond
    })
}

/// Naive classification straight from the raw status fields, written
/// independently of the detector code paths.
pub fn naive_counts(pond: &DirtyPond) -> [usize; 6] {
    let mut counts = [0usize; 6];
    for e in pond.entries.values() {
        let registry_failed = matches!(
            e.registry.lookup,
            RegistryLookup::NotFound | RegistryLookup::Unavailable { .. }
        );
        let raw = e.repository_url_raw.as_deref().unwrap_or("").trim();
        let parseable = normalize_repo_url(raw).is_some();
        let acc = e.repo.as_ref().map(|r| &r.accessibility);
        if !registry_failed && !parseable {
            counts[0] += 1;
        }
        if !registry_failed && parseable && acc == Some(&Accessibility::NotFound) {
            counts[1] += 1;
        }
        let accessible = acc == Some(&Accessibility::Accessible);
        let r = e.repo.as_ref();
        if accessible && r.unwrap().matched_tag == TagStatus::NoTagFound {
            counts[2] += 1;
        }
        let deprecated = matches!(e.registry.deprecation, DeprecationStatus::Deprecated { .. });
        let archived = accessible && r.unwrap().is_archived == ArchiveStatus::Archived;
        if deprecated || archived {
            counts[3] += 1;
        }
        if accessible && matches!(r.unwrap().is_fork, ForkStatus::Fork { .. }) {
            counts[4] += 1;
        }
        if e.registry.provenance == ProvenanceStatus::NoAttestation {
            counts[5] += 1;
        }
    }
    counts
}
