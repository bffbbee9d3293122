mod common;

use std::collections::BTreeSet;

use chainsmell::lockfile::PackageId;
use chainsmell::pond::DirtyPond;
use chainsmell::smells::{assess_all, detect_all, summarize, SmellKind, Verdict};
use common::{arb_entry, arb_pond, naive_counts};
use proptest::prelude::*;

fn ids_of(pond: &DirtyPond, kinds: &[SmellKind]) -> BTreeSet<PackageId> {
    detect_all(pond)
        .into_iter()
        .filter(|f| kinds.contains(&f.kind))
        .map(|f| f.id)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn repo_level_smells_never_overlap_s1(pond in arb_pond(20)) {
        let s1 = ids_of(&pond, &[SmellKind::S1NoSourceUrl, SmellKind::S1SourceUrl404]);
        let s2 = ids_of(&pond, &[SmellKind::S2InaccessibleTag]);
        let s4 = ids_of(&pond, &[SmellKind::S4Fork]);
        prop_assert!(s1.is_disjoint(&s2));
        prop_assert!(s1.is_disjoint(&s4));
    }

    #[test]
    fn summary_matches_naive_rescan(pond in arb_pond(20)) {
        let summary = summarize(&detect_all(&pond), &pond);
        let naive = naive_counts(&pond);
        for (kind, expected) in SmellKind::ALL.into_iter().zip(naive) {
            prop_assert_eq!(summary.count(kind), expected, "{}", kind);
            prop_assert!(summary.count(kind) <= summary.total_packages);
        }
        prop_assert_eq!(summary.total_packages, pond.len());
    }

    #[test]
    fn adding_an_entry_never_lowers_a_count(pond in arb_pond(20), extra in arb_entry()) {
        prop_assume!(!pond.entries.contains_key(&extra.id));
        let before = summarize(&detect_all(&pond), &pond);
        let mut bigger = pond.clone();
        bigger.insert(extra);
        let after = summarize(&detect_all(&bigger), &bigger);
        for kind in SmellKind::ALL {
            prop_assert!(after.count(kind) >= before.count(kind));
            prop_assert!(after.unknown(kind) >= before.unknown(kind));
        }
    }

    #[test]
    fn findings_always_carry_evidence(entry in arb_entry()) {
        for verdict in assess_all(&entry) {
            if let Verdict::Smell { kind, evidence } = verdict {
                prop_assert!(!evidence.is_empty(), "{:?} has empty evidence", kind);
            }
        }
    }

    #[test]
    fn pond_round_trips(pond in arb_pond(12)) {
        let text = pond.to_canonical_json();
        let loaded = DirtyPond::from_json(&text).unwrap();
        prop_assert_eq!(&loaded, &pond);
        prop_assert_eq!(loaded.to_canonical_json(), text);
    }
}

#[test]
fn fully_unknown_entry_only_feeds_unknown_tallies() {
    use chainsmell::registry::{DeprecationStatus, ProvenanceStatus, RegistryLookup};
    use chainsmell::repoprobe::{Accessibility, ArchiveStatus, ForkStatus, TagStatus};

    let unknown = || "timeout".to_string();
    let mut with_repo = common::entry(
        "x@1.0.0".parse().unwrap(),
        false,
        Some("https://github.com/x/x".into()),
        Accessibility::Unknown { reason: unknown() },
        TagStatus::Unknown { reason: unknown() },
        ForkStatus::Unknown { reason: unknown() },
        ArchiveStatus::Unknown { reason: unknown() },
        DeprecationStatus::Unknown { reason: unknown() },
        ProvenanceStatus::Unknown { reason: unknown() },
    );
    let mut failed_lookup = with_repo.clone();
    failed_lookup.registry.lookup = RegistryLookup::Unavailable { reason: unknown() };
    failed_lookup.registry.repository_url_raw = None;
    failed_lookup.repository_url_raw = None;
    failed_lookup.repo = None;
    with_repo.registry.lookup = RegistryLookup::Found;

    for entry in [with_repo, failed_lookup] {
        let verdicts = assess_all(&entry);
        assert!(
            verdicts
                .iter()
                .all(|v| matches!(v, Verdict::Unknown { .. })),
            "{verdicts:?}"
        );
        let mut pond = common::empty_pond();
        pond.insert(entry);
        let summary = summarize(&detect_all(&pond), &pond);
        assert!(SmellKind::ALL.iter().all(|k| summary.count(*k) == 0));
        assert_eq!(summary.unknown_counts.values().sum::<usize>(), 5);
    }
}
