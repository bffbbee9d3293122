//! Markdown and JSON reports, Call-to-Action guidance, and cross-version diffs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;

use crate::lockfile::{PackageId, PackageManagerKind};
use crate::pond::DirtyPond;
use crate::smells::{SmellFinding, SmellKind, SmellSummary};

pub const REPORT_FILE: &str = "software_supply_chain_smells_report.md";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DEFAULT_LISTING_LIMIT: usize = 50;
pub const TOTAL_LABEL: &str = "# of Total Packages";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportBundle {
    pub project: String,
    pub project_version: String,
    pub package_manager: PackageManagerKind,
    pub generated_at: DateTime<Utc>,
    pub tool_version: String,
    pub summary: SmellSummary,
    /// Each group: direct dependencies first, then package order.
    pub findings: BTreeMap<SmellKind, Vec<SmellFinding>>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub listing_limit: usize,
}

impl ReportBundle {
    pub fn new(
        pond: &DirtyPond,
        summary: SmellSummary,
        findings: &[SmellFinding],
        generated_at: DateTime<Utc>,
        tool_version: &str,
    ) -> Self {
        let mut grouped: BTreeMap<SmellKind, BTreeMap<(bool, PackageId), SmellFinding>> =
            SmellKind::ALL
                .into_iter()
                .map(|k| (k, BTreeMap::new()))
                .collect();
        for finding in findings {
            grouped
                .entry(finding.kind)
                .or_default()
                .entry((!finding.direct, finding.id.clone()))
                .or_insert_with(|| finding.clone());
        }
        ReportBundle {
            project: pond.project.clone(),
            project_version: pond.project_version.clone(),
            package_manager: pond.package_manager,
            generated_at,
            tool_version: tool_version.to_string(),
            summary,
            findings: grouped
                .into_iter()
                .map(|(k, group)| (k, group.into_values().collect()))
                .collect(),
            warnings: Vec::new(),
            listing_limit: DEFAULT_LISTING_LIMIT,
        }
    }

    pub fn with_warnings(mut self, warnings: Vec<String>) -> Self {
        self.warnings = warnings;
        self
    }

    pub fn with_listing_limit(mut self, limit: usize) -> Self {
        self.listing_limit = limit;
        self
    }

    pub fn present_kinds(&self) -> BTreeSet<SmellKind> {
        SmellKind::ALL
            .into_iter()
            .filter(|k| self.summary.count(*k) > 0)
            .collect()
    }
}

fn timestamp(at: &DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn render_markdown(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    let s = &bundle.summary;
    let _ = writeln!(out, "# Software Supply Chain Smells Report\n");
    let _ = writeln!(
        out,
        "- Project: `{}` version `{}`\n- Package manager: {}\n- Generated: {}\n- Tool: chainsmell {}\n",
        bundle.project,
        bundle.project_version,
        bundle.package_manager,
        timestamp(&bundle.generated_at),
        bundle.tool_version
    );
    for warning in &bundle.warnings {
        let _ = writeln!(out, "> **Warning:** {warning}\n");
    }

    out.push_str(PREAMBLE);

    out.push_str("\n## Summary\n\n");
    out.push_str("| Smell | Check | Packages | Unknown |\n|---|---|---:|---:|\n");
    let _ = writeln!(out, "| | {TOTAL_LABEL} | {} | |", s.total_packages);
    for kind in SmellKind::ALL {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            kind.code(),
            kind.label(),
            s.count(kind),
            s.unknown(kind)
        );
    }

    let present = bundle.present_kinds();
    if !present.is_empty() {
        out.push_str("\n## Findings\n");
    }
    for kind in &present {
        let group = &bundle.findings[kind];
        let _ = writeln!(
            out,
            "\n### {} {} ({})\n",
            kind.code(),
            kind.title(),
            group.len()
        );
        let (shown, rest) = group.split_at(group.len().min(bundle.listing_limit));
        for finding in shown {
            out.push_str(&finding_line(finding));
        }
        if !rest.is_empty() {
            let _ = writeln!(
                out,
                "\n{} more not listed above.\n\n<details>\n<summary>All {} packages</summary>\n",
                rest.len(),
                group.len()
            );
            for finding in group {
                out.push_str(&finding_line(finding));
            }
            out.push_str("\n</details>\n");
        }
    }

    out.push('\n');
    out.push_str(&render_call_to_action(&present));
    out
}

fn finding_line(finding: &SmellFinding) -> String {
    let scope = if finding.direct {
        "direct"
    } else {
        "transitive"
    };
    format!(
        "- `{}` ({scope}): {}\n",
        finding.id,
        finding.evidence.replace('\n', " ")
    )
}

const PREAMBLE: &str = "\
## How to read this report

Every package pinned in the lockfile was checked against its registry metadata and its \
source repository. A smell is not a vulnerability. It marks a package whose origin or \
upkeep cannot be verified, which makes it harder to trust and easier to attack.

- **S1**: the metadata has no usable repository link, or the link returns 404.
- **S2**: the repository exists but has no git tag for the installed version.
- **S3**: the version is deprecated in the registry or its repository is archived.
- **S4**: the declared repository is a fork of another repository.
- **S5**: the registry holds no provenance attestation for the version.

The Unknown column counts packages whose status could not be established, for example \
because of rate limiting. Unknown results are never counted as smells. Direct \
dependencies are listed before transitive ones.
";

const CTA_S1: &str = "\
**S1 (source code URL).** Where the repository link is missing or broken, submit a Pull \
Request to the dependency's maintainer that adds or fixes the `repository` field in its \
`package.json`.";

const CTA_S2: &str = "\
**S2 (release tag).** Where a published version has no matching tag, submit a Pull Request \
to the dependency's maintainer that adds a tagging step to its release workflow, so the \
exact source of every version can be traced.";

const CTA_S3: &str = "\
**S3 (deprecated).** Confirm the maintainer's deprecation intention by reading the \
deprecation message or the repository status, then double-check for alternative versions \
or a maintained replacement package.";

const CTA_S4: &str = "\
**S4 (fork).** Compare the fork with its upstream and verify that the fork is not malicious. \
Prefer the upstream package when it ships the same functionality.";

const CTA_S5: &str = "\
**S5 (provenance).** Open an issue in the dependency's repository asking the maintainers \
to publish with build provenance, for example with `npm publish --provenance` from a CI \
workflow.";

pub fn render_call_to_action(present_kinds: &BTreeSet<SmellKind>) -> String {
    let mut out = String::from("## Call to Action\n\n");
    let has = |k: SmellKind| present_kinds.contains(&k);
    let blocks = [
        (
            has(SmellKind::S1NoSourceUrl) || has(SmellKind::S1SourceUrl404),
            CTA_S1,
        ),
        (has(SmellKind::S2InaccessibleTag), CTA_S2),
        (has(SmellKind::S3Deprecated), CTA_S3),
        (has(SmellKind::S4Fork), CTA_S4),
        (has(SmellKind::S5NoProvenance), CTA_S5),
    ];
    let selected: Vec<&str> = blocks
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, text)| *text)
        .collect();
    if selected.is_empty() {
        out.push_str("No smells detected. Nothing to follow up.\n");
    } else {
        out.push_str(&selected.join("\n\n"));
        out.push('\n');
    }
    out
}

pub fn render_json(bundle: &ReportBundle) -> String {
    let mut text =
        serde_json::to_string_pretty(bundle).expect("report serialization is infallible");
    text.push('\n');
    text
}

fn signed(delta: i64) -> String {
    if delta > 0 {
        format!("+{delta}")
    } else {
        delta.to_string()
    }
}

/// Side-by-side counts with signed deltas (new minus old).
pub fn diff_summaries(old: (&SmellSummary, &str), new: (&SmellSummary, &str)) -> String {
    let (old, old_label) = old;
    let (new, new_label) = new;
    let mut out = format!(
        "# Smell Diff\n\n| Check | {old_label} | {new_label} | Delta |\n|---|---:|---:|---:|\n"
    );
    let mut row = |label: &str, a: usize, b: usize| {
        let _ = writeln!(
            out,
            "| {label} | {a} | {b} | {} |",
            signed(b as i64 - a as i64)
        );
    };
    row(TOTAL_LABEL, old.total_packages, new.total_packages);
    for kind in SmellKind::ALL {
        row(kind.label(), old.count(kind), new.count(kind));
    }
    out
}
