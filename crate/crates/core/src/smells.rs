//! The five supply chain smell detectors and their summary counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lockfile::PackageId;
use crate::pond::{DirtyPond, PondEntry};
use crate::registry::{DeprecationStatus, ProvenanceStatus, RegistryLookup};
use crate::repoprobe::{split_repo_url, Accessibility, ArchiveStatus, ForkStatus, TagStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SmellKind {
    S1NoSourceUrl,
    S1SourceUrl404,
    S2InaccessibleTag,
    S3Deprecated,
    S4Fork,
    S5NoProvenance,
}

impl SmellKind {
    pub const ALL: [SmellKind; 6] = [
        SmellKind::S1NoSourceUrl,
        SmellKind::S1SourceUrl404,
        SmellKind::S2InaccessibleTag,
        SmellKind::S3Deprecated,
        SmellKind::S4Fork,
        SmellKind::S5NoProvenance,
    ];

    pub fn code(self) -> &'static str {
        match self {
            SmellKind::S1NoSourceUrl | SmellKind::S1SourceUrl404 => "S1",
            SmellKind::S2InaccessibleTag => "S2",
            SmellKind::S3Deprecated => "S3",
            SmellKind::S4Fork => "S4",
            SmellKind::S5NoProvenance => "S5",
        }
    }

    /// Summary-table row label.
    pub fn label(self) -> &'static str {
        match self {
            SmellKind::S1NoSourceUrl => "# with No Source Code URL",
            SmellKind::S1SourceUrl404 => "# Source Code URL 404",
            SmellKind::S2InaccessibleTag => "# Inaccessible Tag",
            SmellKind::S3Deprecated => "# of Deprecated",
            SmellKind::S4Fork => "# from Forks",
            SmellKind::S5NoProvenance => "# without Provenance",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SmellKind::S1NoSourceUrl => "No source code URL",
            SmellKind::S1SourceUrl404 => "Source code URL returns 404",
            SmellKind::S2InaccessibleTag => "No release tag for the installed version",
            SmellKind::S3Deprecated => "Deprecated package",
            SmellKind::S4Fork => "Package built from a fork",
            SmellKind::S5NoProvenance => "No build provenance",
        }
    }
}

impl fmt::Display for SmellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown smell {0:?} (expected S1..S5 or a full kind name)")]
pub struct UnknownSmell(pub String);

/// Parses a `--fail-on` list such as `S1,S3`. A bare `S1` selects both S1 kinds.
pub fn parse_smell_set(text: &str) -> Result<BTreeSet<SmellKind>, UnknownSmell> {
    let mut set = BTreeSet::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let matched: Vec<SmellKind> = SmellKind::ALL
            .into_iter()
            .filter(|k| {
                k.code().eq_ignore_ascii_case(item) || k.to_string().eq_ignore_ascii_case(item)
            })
            .collect();
        if matched.is_empty() {
            return Err(UnknownSmell(item.to_string()));
        }
        set.extend(matched);
    }
    Ok(set)
}

impl FromStr for SmellKind {
    type Err = UnknownSmell;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SmellKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| UnknownSmell(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmellFinding {
    pub kind: SmellKind,
    pub id: PackageId,
    pub direct: bool,
    pub evidence: String,
}

/// Outcome of one detector on one entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Smell {
        kind: SmellKind,
        evidence: String,
    },
    Clean,
    /// The signal could not be established; tallied under `kind`.
    Unknown {
        kind: SmellKind,
    },
    /// The detector does not apply (e.g. S2 without an accessible repository).
    NotApplicable,
}

impl Verdict {
    fn into_finding(self, entry: &PondEntry) -> Option<SmellFinding> {
        match self {
            Verdict::Smell { kind, evidence } => Some(SmellFinding {
                kind,
                id: entry.id.clone(),
                direct: entry.direct,
                evidence,
            }),
            _ => None,
        }
    }
}

pub fn assess_s1(entry: &PondEntry) -> Verdict {
    let no_url = |evidence: String| Verdict::Smell {
        kind: SmellKind::S1NoSourceUrl,
        evidence,
    };
    if matches!(
        entry.registry.lookup,
        RegistryLookup::NotFound | RegistryLookup::Unavailable { .. }
    ) {
        return Verdict::Unknown {
            kind: SmellKind::S1NoSourceUrl,
        };
    }
    let raw = match entry.repository_url_raw.as_deref().map(str::trim) {
        None => return no_url("package metadata has no repository field".to_string()),
        Some("") => return no_url("repository field is empty".to_string()),
        Some(raw) => raw,
    };
    if split_repo_url(raw).is_none() {
        return no_url(format!(
            "repository field {raw:?} is not a recognizable source URL"
        ));
    }
    match &entry.repo {
        Some(repo) => match repo.accessibility {
            Accessibility::Accessible => Verdict::Clean,
            Accessibility::NotFound => Verdict::Smell {
                kind: SmellKind::S1SourceUrl404,
                evidence: format!("{} returned 404", repo.url),
            },
            Accessibility::Unknown { .. } => Verdict::Unknown {
                kind: SmellKind::S1SourceUrl404,
            },
        },
        None => Verdict::Unknown {
            kind: SmellKind::S1SourceUrl404,
        },
    }
}

/// Shared gate for the repository-level detectors: the repo must be accessible.
fn accessible_repo(
    entry: &PondEntry,
    kind: SmellKind,
) -> Result<&crate::repoprobe::RepoStatus, Verdict> {
    match &entry.repo {
        Some(repo) => match repo.accessibility {
            Accessibility::Accessible => Ok(repo),
            Accessibility::NotFound => Err(Verdict::NotApplicable),
            Accessibility::Unknown { .. } => Err(Verdict::Unknown { kind }),
        },
        None if matches!(
            entry.registry.lookup,
            RegistryLookup::NotFound | RegistryLookup::Unavailable { .. }
        ) =>
        {
            Err(Verdict::Unknown { kind })
        }
        None => Err(Verdict::NotApplicable),
    }
}

pub fn assess_s2(entry: &PondEntry) -> Verdict {
    let kind = SmellKind::S2InaccessibleTag;
    let repo = match accessible_repo(entry, kind) {
        Ok(repo) => repo,
        Err(verdict) => return verdict,
    };
    match &repo.matched_tag {
        TagStatus::Tag { .. } => Verdict::Clean,
        TagStatus::NoTagFound => Verdict::Smell {
            kind,
            evidence: format!("no tag for version {} in {}", entry.id.version(), repo.url),
        },
        TagStatus::Unknown { .. } => Verdict::Unknown { kind },
    }
}

pub fn assess_s3(entry: &PondEntry) -> Verdict {
    let kind = SmellKind::S3Deprecated;
    let mut evidence = Vec::new();
    if let DeprecationStatus::Deprecated { message } = &entry.registry.deprecation {
        if message.trim().is_empty() {
            evidence.push("deprecated in the registry".to_string());
        } else {
            evidence.push(format!("deprecated in the registry: {}", message.trim()));
        }
    }
    let archive = match accessible_repo(entry, kind) {
        Ok(repo) => Some((&repo.is_archived, &repo.url)),
        Err(Verdict::Unknown { .. }) => None,
        Err(_) => {
            if evidence.is_empty()
                && matches!(
                    entry.registry.deprecation,
                    DeprecationStatus::Unknown { .. }
                )
            {
                return Verdict::Unknown { kind };
            }
            return finish_s3(evidence, false);
        }
    };
    let archive_unknown = match archive {
        Some((ArchiveStatus::Archived, url)) => {
            evidence.push(format!("repository {url} is archived"));
            false
        }
        Some((ArchiveStatus::Active, _)) => false,
        Some((ArchiveStatus::Unknown { .. }, _)) | None => true,
    };
    let unknown = archive_unknown
        || matches!(
            entry.registry.deprecation,
            DeprecationStatus::Unknown { .. }
        );
    finish_s3(evidence, unknown)
}

fn finish_s3(evidence: Vec<String>, unknown: bool) -> Verdict {
    if !evidence.is_empty() {
        Verdict::Smell {
            kind: SmellKind::S3Deprecated,
            evidence: evidence.join("; "),
        }
    } else if unknown {
        Verdict::Unknown {
            kind: SmellKind::S3Deprecated,
        }
    } else {
        Verdict::Clean
    }
}

pub fn assess_s4(entry: &PondEntry) -> Verdict {
    let kind = SmellKind::S4Fork;
    let repo = match accessible_repo(entry, kind) {
        Ok(repo) => repo,
        Err(verdict) => return verdict,
    };
    match &repo.is_fork {
        ForkStatus::Fork { parent } if parent.is_empty() => Verdict::Smell {
            kind,
            evidence: format!("{} is a fork (parent not reported)", repo.url),
        },
        ForkStatus::Fork { parent } => Verdict::Smell {
            kind,
            evidence: format!("{} is a fork of {parent}", repo.url),
        },
        ForkStatus::NotFork => Verdict::Clean,
        ForkStatus::Unknown { .. } => Verdict::Unknown { kind },
    }
}

pub fn assess_s5(entry: &PondEntry) -> Verdict {
    let kind = SmellKind::S5NoProvenance;
    match &entry.registry.provenance {
        ProvenanceStatus::HasAttestation => Verdict::Clean,
        ProvenanceStatus::NoAttestation => Verdict::Smell {
            kind,
            evidence: format!("no provenance attestation published for {}", entry.id),
        },
        ProvenanceStatus::Unknown { .. } => Verdict::Unknown { kind },
    }
}

pub fn detect_s1(entry: &PondEntry) -> Option<SmellFinding> {
    assess_s1(entry).into_finding(entry)
}

pub fn detect_s2(entry: &PondEntry) -> Option<SmellFinding> {
    assess_s2(entry).into_finding(entry)
}

pub fn detect_s3(entry: &PondEntry) -> Option<SmellFinding> {
    assess_s3(entry).into_finding(entry)
}

pub fn detect_s4(entry: &PondEntry) -> Option<SmellFinding> {
    assess_s4(entry).into_finding(entry)
}

pub fn detect_s5(entry: &PondEntry) -> Option<SmellFinding> {
    assess_s5(entry).into_finding(entry)
}

pub fn assess_all(entry: &PondEntry) -> [Verdict; 5] {
    [
        assess_s1(entry),
        assess_s2(entry),
        assess_s3(entry),
        assess_s4(entry),
        assess_s5(entry),
    ]
}

/// Runs every detector over every entry, in pond order.
pub fn detect_all(pond: &DirtyPond) -> Vec<SmellFinding> {
    pond.entries
        .values()
        .flat_map(|entry| {
            assess_all(entry)
                .into_iter()
                .filter_map(|v| v.into_finding(entry))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmellSummary {
    pub total_packages: usize,
    pub counts: BTreeMap<SmellKind, usize>,
    pub unknown_counts: BTreeMap<SmellKind, usize>,
}

impl SmellSummary {
    pub fn empty(total_packages: usize) -> Self {
        let zeros: BTreeMap<SmellKind, usize> =
            SmellKind::ALL.into_iter().map(|k| (k, 0)).collect();
        SmellSummary {
            total_packages,
            counts: zeros.clone(),
            unknown_counts: zeros,
        }
    }

    pub fn count(&self, kind: SmellKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn unknown(&self, kind: SmellKind) -> usize {
        self.unknown_counts.get(&kind).copied().unwrap_or(0)
    }
}

/// Counts distinct packages per kind; unknown tallies are re-derived from the pond.
pub fn summarize(findings: &[SmellFinding], pond: &DirtyPond) -> SmellSummary {
    let mut summary = SmellSummary::empty(pond.len());
    let mut seen: BTreeSet<(SmellKind, &PackageId)> = BTreeSet::new();
    for finding in findings {
        if seen.insert((finding.kind, &finding.id)) {
            *summary.counts.entry(finding.kind).or_default() += 1;
        }
    }
    for entry in pond.entries.values() {
        for verdict in assess_all(entry) {
            if let Verdict::Unknown { kind } = verdict {
                *summary.unknown_counts.entry(kind).or_default() += 1;
            }
        }
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::lockfile::PackageManagerKind;
    use crate::registry::{MetadataSourceKind, RegistryMetadata};
    use crate::repoprobe::{normalize_repo_url, RepoStatus};

    fn entry(url: Option<&str>, acc: Accessibility) -> PondEntry {
        let id: PackageId = "pkg@1.0.0".parse().unwrap();
        let at = FixedClock::from_unix(0).0;
        let repo = url.and_then(normalize_repo_url).map(|u| {
            RepoStatus::new(
                u,
                acc,
                ForkStatus::NotFork,
                ArchiveStatus::Active,
                TagStatus::Tag {
                    name: "v1.0.0".into(),
                },
                at,
            )
        });
        PondEntry {
            registry: RegistryMetadata {
                id: id.clone(),
                lookup: RegistryLookup::Found,
                repository_url_raw: url.map(str::to_string),
                repository_directory: None,
                deprecation: DeprecationStatus::NotDeprecated,
                provenance: ProvenanceStatus::HasAttestation,
                fetched_at: at,
                source: MetadataSourceKind::Replay,
            },
            id,
            direct: true,
            repo,
            repository_url_raw: url.map(str::to_string),
            monorepo_directory: None,
            diagnostics: vec![],
        }
    }

    fn ok() -> PondEntry {
        entry(Some("https://github.com/a/b"), Accessibility::Accessible)
    }

    fn with_repo(f: impl FnOnce(&mut RepoStatus)) -> PondEntry {
        let mut e = ok();
        f(e.repo.as_mut().unwrap());
        e
    }

    fn kind(v: Option<SmellFinding>) -> Option<SmellKind> {
        v.map(|f| f.kind)
    }

    #[test]
    fn clean_entry_has_no_findings() {
        assert!(assess_all(&ok()).iter().all(|v| *v == Verdict::Clean));
    }

    #[test]
    fn s1_variants() {
        assert_eq!(
            kind(detect_s1(&entry(None, Accessibility::Accessible))),
            Some(SmellKind::S1NoSourceUrl)
        );
        assert_eq!(
            kind(detect_s1(&entry(Some("  "), Accessibility::Accessible))),
            Some(SmellKind::S1NoSourceUrl)
        );
        assert_eq!(
            kind(detect_s1(&entry(
                Some("UNLICENSED"),
                Accessibility::Accessible
            ))),
            Some(SmellKind::S1NoSourceUrl)
        );
        let gone = entry(Some("https://github.com/a/b"), Accessibility::NotFound);
        let f = detect_s1(&gone).unwrap();
        assert_eq!(f.kind, SmellKind::S1SourceUrl404);
        assert!(f.evidence.contains("https://github.com/a/b"));
        let flaky = entry(
            Some("https://github.com/a/b"),
            Accessibility::Unknown {
                reason: "timeout".into(),
            },
        );
        assert_eq!(
            assess_s1(&flaky),
            Verdict::Unknown {
                kind: SmellKind::S1SourceUrl404
            }
        );
    }

    #[test]
    fn s2_is_gated_on_accessibility() {
        let e = with_repo(|r| r.matched_tag = TagStatus::NoTagFound);
        assert_eq!(kind(detect_s2(&e)), Some(SmellKind::S2InaccessibleTag));
        let gone = entry(Some("https://github.com/a/b"), Accessibility::NotFound);
        assert_eq!(detect_s2(&gone), None);
        assert_eq!(assess_s2(&gone), Verdict::NotApplicable);
        let e = with_repo(|r| {
            r.matched_tag = TagStatus::Unknown {
                reason: "rate limited".into(),
            }
        });
        assert_eq!(
            assess_s2(&e),
            Verdict::Unknown {
                kind: SmellKind::S2InaccessibleTag
            }
        );
    }

    #[test]
    fn s3_signals() {
        let mut e = ok();
        e.registry.deprecation = DeprecationStatus::Deprecated {
            message: "no longer maintained".into(),
        };
        let f = detect_s3(&e).unwrap();
        assert!(f.evidence.contains("registry") && f.evidence.contains("no longer maintained"));

        let e = with_repo(|r| r.is_archived = ArchiveStatus::Archived);
        let f = detect_s3(&e).unwrap();
        assert!(f.evidence.contains("archived") && !f.evidence.contains("registry"));

        let e = with_repo(|r| {
            r.is_archived = ArchiveStatus::Unknown {
                reason: "api 404".into(),
            }
        });
        assert_eq!(
            assess_s3(&e),
            Verdict::Unknown {
                kind: SmellKind::S3Deprecated
            }
        );

        let mut e = entry(None, Accessibility::Accessible);
        e.registry.deprecation = DeprecationStatus::Deprecated {
            message: String::new(),
        };
        assert_eq!(kind(detect_s3(&e)), Some(SmellKind::S3Deprecated));
        assert_eq!(
            assess_s3(&entry(None, Accessibility::Accessible)),
            Verdict::Clean
        );
    }

    #[test]
    fn s4_and_s5() {
        let e = with_repo(|r| {
            r.is_fork = ForkStatus::Fork {
                parent: "https://github.com/up/b".into(),
            }
        });
        assert!(detect_s4(&e)
            .unwrap()
            .evidence
            .contains("https://github.com/up/b"));
        let e = with_repo(|r| {
            r.is_fork = ForkStatus::Unknown {
                reason: "unsupported forge".into(),
            }
        });
        assert_eq!(
            assess_s4(&e),
            Verdict::Unknown {
                kind: SmellKind::S4Fork
            }
        );

        let mut e = ok();
        e.registry.provenance = ProvenanceStatus::NoAttestation;
        assert_eq!(kind(detect_s5(&e)), Some(SmellKind::S5NoProvenance));
        e.registry.provenance = ProvenanceStatus::Unknown {
            reason: "http 500".into(),
        };
        assert_eq!(
            assess_s5(&e),
            Verdict::Unknown {
                kind: SmellKind::S5NoProvenance
            }
        );
    }

    #[test]
    fn summarize_counts_distinct_packages() {
        let mut pond = DirtyPond::new(
            "p",
            "1",
            PackageManagerKind::Npm,
            FixedClock::from_unix(0).0,
        );
        let mut e = ok();
        e.registry.provenance = ProvenanceStatus::NoAttestation;
        pond.insert(e.clone());
        let finding = detect_s5(&e).unwrap();
        let summary = summarize(&[finding.clone(), finding], &pond);
        assert_eq!(summary.count(SmellKind::S5NoProvenance), 1);
        assert_eq!(summary.total_packages, 1);
        assert_eq!(summarize(&[], &pond).count(SmellKind::S5NoProvenance), 0);
    }

    #[test]
    fn fail_on_parsing() {
        let set = parse_smell_set("S1, s3").unwrap();
        assert_eq!(
            set.into_iter().collect::<Vec<_>>(),
            vec![
                SmellKind::S1NoSourceUrl,
                SmellKind::S1SourceUrl404,
                SmellKind::S3Deprecated
            ]
        );
        assert_eq!(parse_smell_set("S4Fork").unwrap().len(), 1);
        assert!(parse_smell_set("").unwrap().is_empty());
        assert!(parse_smell_set("S9").is_err());
    }
}
