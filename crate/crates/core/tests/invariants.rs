//! Property tests for the invariants that hold across modules.

mod common;

use adas_core::canonical::{self, canonicalize};
use adas_core::certification::{issue_certificate, CertError, IssuerKey};
use adas_core::decision::{authorize, evaluate_min_gate, evaluate_weighted, weighted_aggregate, Outcome};
use adas_core::evidence::{
    append_to_bundle, bundle_fingerprint, put_artefact, ArtefactKind, EvidenceBundle, MemoryStore,
};
use adas_core::model::{DimensionScore, PerDimension, ScoreVector};
use adas_core::policy::ThresholdVector;
use adas_core::scoring::{score_dimension, MetricReport};
use adas_core::translog::{merkle, replay_status, CertificateStatus, StatusEvent};
use adas_core::translog::merkle::CompactRange;
use adas_core::{ContentHash, Dimension};
use common::oracle;
use proptest::prelude::*;

fn score() -> impl Strategy<Value = DimensionScore> {
    (0u32..=10_000)
        .prop_flat_map(|v| (Just(v), 0..=v, v..=10_000u32))
        .prop_map(|(v, lo, hi)| DimensionScore::new(v, lo, hi).unwrap())
}

fn scores() -> impl Strategy<Value = ScoreVector> {
    prop::array::uniform5(score()).prop_map(|a| PerDimension::from_fn(|d| a[d.index()]))
}

fn thresholds() -> impl Strategy<Value = ThresholdVector> {
    prop::array::uniform5(0u32..=10_000).prop_map(|a| PerDimension::from_fn(|d| a[d.index()]))
}

fn weights() -> impl Strategy<Value = PerDimension<u32>> {
    // Five parts summing to exactly 10000.
    prop::array::uniform4(0u32..=10_000).prop_map(|mut cuts| {
        cuts.sort_unstable();
        let bounds = [0, cuts[0], cuts[1], cuts[2], cuts[3], 10_000];
        PerDimension::from_fn(|d| bounds[d.index() + 1] - bounds[d.index()])
    })
}

proptest! {
    #[test]
    fn raising_a_score_never_turns_approval_into_denial(v in scores(), t in thresholds(), d in 0usize..5, ci in any::<bool>()) {
        let before = evaluate_min_gate(&v, &t, ci).passed;
        let dim = Dimension::ALL[d];
        let mut raised = v;
        let s = v[dim];
        raised.set(dim, DimensionScore::new(s.value().max(s.ci_hi()), s.ci_hi(), s.ci_hi()).unwrap());
        prop_assert!(!before || evaluate_min_gate(&raised, &t, ci).passed);
    }

    #[test]
    fn min_gate_matches_brute_force(v in scores(), t in thresholds(), ci in any::<bool>()) {
        let basis: [u32; 5] = std::array::from_fn(|i| if ci { v[Dimension::ALL[i]].ci_lo() } else { v[Dimension::ALL[i]].value() });
        let tau: [u32; 5] = std::array::from_fn(|i| t[Dimension::ALL[i]]);
        let r = evaluate_min_gate(&v, &t, ci);
        prop_assert_eq!(r.passed, oracle::min_gate(&basis, &tau));
        prop_assert_eq!(r.failing.len(), (0..5).filter(|&i| basis[i] < tau[i]).count());
    }

    #[test]
    fn weighted_aggregate_lies_between_extremes(v in scores(), w in weights(), ci in any::<bool>()) {
        let agg = weighted_aggregate(&v, &w, ci);
        let gated: Vec<u32> = Dimension::ALL.iter().map(|d| v[*d].gated(ci)).collect();
        prop_assert!(agg >= *gated.iter().min().unwrap() && agg <= *gated.iter().max().unwrap());
        // Exact rational check of the half-up rounding.
        let num: u64 = Dimension::ALL.iter().map(|d| u64::from(w[*d]) * u64::from(v[*d].gated(ci))).sum();
        prop_assert!(u64::from(agg) * 10_000 + 5_000 > num && u64::from(agg) * 10_000 <= num + 5_000);
    }

    #[test]
    fn weighted_ci_gating_is_stricter(v in scores(), w in weights(), cutoff in 0u32..=10_000) {
        let floors = PerDimension::splat(0);
        prop_assert!(!evaluate_weighted(&v, &w, cutoff, &floors, true).passed
            || evaluate_weighted(&v, &w, cutoff, &floors, false).passed);
    }

    #[test]
    fn dimension_score_is_a_weighted_mean(entries in prop::collection::vec((score(), 1u32..100), 1..8)) {
        let reports: Vec<MetricReport> = entries.iter().map(|(s, w)| MetricReport {
            dimension: Dimension::Risk,
            metric_name: "m".into(),
            value: s.value(),
            ci_lo: s.ci_lo(),
            ci_hi: s.ci_hi(),
            weight: *w,
            source_artefact: ContentHash::of(b"x"),
        }).collect();
        let got = score_dimension(&reports).unwrap();
        let total: u64 = entries.iter().map(|(_, w)| u64::from(*w)).sum();
        let num: u64 = entries.iter().map(|(s, w)| u64::from(*w) * u64::from(s.value())).sum();
        // |got - num/total| <= 1/2, ties rounded up.
        let got_scaled = 2 * u64::from(got.value()) * total;
        prop_assert!(got_scaled + total > 2 * num && got_scaled <= 2 * num + total);
        prop_assert!(got.ci_lo() <= got.value() && got.value() <= got.ci_hi());
    }

    #[test]
    fn canonical_encoding_is_idempotent_and_round_trips(v in scores()) {
        let bytes = canonical::to_canonical_bytes(&v).unwrap();
        let again = canonicalize(&canonical::parse(&bytes).unwrap()).unwrap();
        prop_assert_eq!(&again, &bytes);
        let back: ScoreVector = canonical::from_canonical_slice(&bytes).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn appending_changes_the_fingerprint(blobs in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..64), 1..6)) {
        let store = MemoryStore::new();
        let mut bundle = EvidenceBundle::new("b", "d").unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for (i, blob) in blobs.iter().enumerate() {
            let before = bundle_fingerprint(&bundle);
            let r = put_artefact(&store, blob, ArtefactKind::ModelCard, i as u64, "x").unwrap();
            let fresh = seen.insert(r.content_hash);
            let prior = bundle.entries().to_vec();
            let result = append_to_bundle(&mut bundle, &store, r);
            prop_assert_eq!(result.is_ok(), fresh);
            prop_assert_eq!(&bundle.entries()[..prior.len()], &prior[..]);
            prop_assert_eq!(bundle_fingerprint(&bundle) != before, fresh);
        }
    }

    #[test]
    fn compact_range_matches_reference(n in 0usize..300, seed in any::<u64>()) {
        let data: Vec<Vec<u8>> = (0..n).map(|i| format!("{seed}:{i}").into_bytes()).collect();
        let mut c = CompactRange::new();
        for d in &data {
            c.push(merkle::leaf_hash(d));
        }
        let reference: Vec<oracle::H> = data.iter().map(|d| oracle::leaf(d)).collect();
        prop_assert_eq!(*c.root().as_bytes(), oracle::mth(&reference));
    }

    #[test]
    fn revoked_is_absorbing(prefix in prop::collection::vec(0u8..4, 0..6), suffix in prop::collection::vec(0u8..4, 0..6)) {
        use adas_core::certification::RevocationAction::*;
        let ev = |c: &u8| match c {
            0 => StatusEvent::Issuance { expires_at: 1_000 },
            1 => StatusEvent::Revocation(Suspend),
            2 => StatusEvent::Revocation(Reinstate),
            _ => StatusEvent::Revocation(Revoke),
        };
        let events: Vec<StatusEvent> = prefix.iter().map(ev)
            .chain(std::iter::once(StatusEvent::Revocation(Revoke)))
            .chain(suffix.iter().map(ev))
            .collect();
        prop_assert_eq!(replay_status(events.iter().copied(), 0), CertificateStatus::Revoked);
        prop_assert_eq!(replay_status(events, 5_000), CertificateStatus::Revoked);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every DENIED decision, whatever produced it, is refused a certificate.
    #[test]
    fn denied_decisions_are_never_certified(v in scores()) {
        let store = MemoryStore::new();
        let mut bundle = common::eu_bundle(&store, common::NOW, Some(ArtefactKind::TestReport));
        let metrics: Vec<serde_json::Value> = Dimension::ALL.iter().map(|d| {
            let s = v[*d];
            serde_json::json!({"dimension": d, "metric_name": "m", "value": s.value(), "ci_lo": s.ci_lo(), "ci_hi": s.ci_hi(), "weight": 1})
        }).collect();
        let bytes = canonicalize(&serde_json::json!({ "metrics": metrics })).unwrap();
        let r = put_artefact(&store, &bytes, ArtefactKind::TestReport, common::NOW, "t").unwrap();
        append_to_bundle(&mut bundle, &store, r).unwrap();
        let (policy, deployment) = (common::eu_policy(), common::eu_deployment());
        let decision = authorize(&deployment, &bundle, &policy, &store, common::NOW).unwrap();
        let pkg = adas_core::certification::assemble_audit_package(&policy, &deployment, &bundle, &decision).unwrap();
        let key = IssuerKey::from_seed([3; 32]);
        let issued = issue_certificate(&pkg, &key, 30, common::NOW);
        if decision.outcome == Outcome::Denied {
            prop_assert!(matches!(issued, Err(CertError::DeniedDeployment)));
        } else {
            prop_assert!(issued.is_ok());
        }
    }
}
