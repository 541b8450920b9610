//! Turns declared metric reports into dimension scores.
//!
//! Metrics arrive inside `TestReport` artefacts as
//! `{"metrics": [{"dimension", "metric_name", "value", "ci_lo", "ci_hi", "weight"}]}`
//! with values already normalised to hundredths. A dimension score is the
//! weight-averaged value, and its interval is the weight-averaged interval
//! endpoints, each rounded half-up once at the end.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::evidence::{get_artefact, ArtefactKind, EvidenceBundle, EvidenceError, ObjectStore};
use crate::hash::ContentHash;
use crate::model::{Dimension, DimensionScore, PerDimension, ScoreVector, SCALE_MAX};

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("malformed test report {artefact}: {detail}")]
    MalformedTestReport { artefact: ContentHash, detail: String },
    #[error("no metrics for this dimension")]
    NoMetrics,
    #[error("metric reports for more than one dimension passed to score_dimension")]
    MixedDimensions,
    #[error("unscorable dimension(s): {}", .0.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(", "))]
    UnscorableDimension(Vec<Dimension>),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

/// One metric as it appears in a test report payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricEntry {
    pub dimension: Dimension,
    pub metric_name: String,
    pub value: u32,
    pub ci_lo: u32,
    pub ci_hi: u32,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestReportPayload {
    pub metrics: Vec<MetricEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dimension: Dimension,
    pub metric_name: String,
    pub value: u32,
    pub ci_lo: u32,
    pub ci_hi: u32,
    pub weight: u32,
    pub source_artefact: ContentHash,
}

impl MetricReport {
    fn from_entry(entry: MetricEntry, source: ContentHash) -> Result<Self, ScoringError> {
        let malformed = |detail: String| ScoringError::MalformedTestReport { artefact: source, detail };
        if !(entry.ci_lo <= entry.value && entry.value <= entry.ci_hi && entry.ci_hi <= SCALE_MAX) {
            return Err(malformed(format!(
                "metric {:?}: expected 0 <= ci_lo ({}) <= value ({}) <= ci_hi ({}) <= 10000",
                entry.metric_name, entry.ci_lo, entry.value, entry.ci_hi
            )));
        }
        if entry.weight == 0 {
            return Err(malformed(format!("metric {:?}: weight must be positive", entry.metric_name)));
        }
        Ok(Self {
            dimension: entry.dimension,
            metric_name: entry.metric_name,
            value: entry.value,
            ci_lo: entry.ci_lo,
            ci_hi: entry.ci_hi,
            weight: entry.weight,
            source_artefact: source,
        })
    }
}

/// Parses one test report payload.
pub fn parse_test_report(bytes: &[u8], source: ContentHash) -> Result<Vec<MetricReport>, ScoringError> {
    let payload: TestReportPayload =
        canonical::from_slice(bytes).map_err(|e| ScoringError::MalformedTestReport {
            artefact: source,
            detail: e.to_string(),
        })?;
    payload
        .metrics
        .into_iter()
        .map(|m| MetricReport::from_entry(m, source))
        .collect()
}

/// Reads and parses every `TestReport` artefact in bundle order.
pub fn extract_metric_reports<S: ObjectStore + ?Sized>(
    bundle: &EvidenceBundle,
    store: &S,
) -> Result<Vec<MetricReport>, ScoringError> {
    let mut out = Vec::new();
    for entry in bundle.entries().iter().filter(|e| e.kind == ArtefactKind::TestReport) {
        let bytes = get_artefact(store, &entry.content_hash)?;
        out.extend(parse_test_report(&bytes, entry.content_hash)?);
    }
    Ok(out)
}

/// `round(num / den)` with halves rounded up.
fn div_round_half_up(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

pub fn score_dimension(reports: &[MetricReport]) -> Result<DimensionScore, ScoringError> {
    let first = reports.first().ok_or(ScoringError::NoMetrics)?;
    if reports.iter().any(|r| r.dimension != first.dimension) {
        return Err(ScoringError::MixedDimensions);
    }
    let total_weight: u128 = reports.iter().map(|r| u128::from(r.weight)).sum();
    let mean = |field: fn(&MetricReport) -> u32| -> u32 {
        let weighted: u128 = reports.iter().map(|r| u128::from(r.weight) * u128::from(field(r))).sum();
        u32::try_from(div_round_half_up(weighted, total_weight)).expect("mean of u32 values fits in u32")
    };
    let value = mean(|r| r.value);
    let ci_lo = mean(|r| r.ci_lo);
    let ci_hi = mean(|r| r.ci_hi);
    // Rounding is monotone, so ordered inputs give ordered outputs.
    Ok(DimensionScore::new(value, ci_lo, ci_hi).expect("weighted means preserve interval ordering"))
}

pub fn score_vector_from_reports(reports: &[MetricReport]) -> Result<ScoreVector, ScoringError> {
    let mut by_dim: BTreeMap<Dimension, Vec<MetricReport>> = BTreeMap::new();
    for r in reports {
        by_dim.entry(r.dimension).or_default().push(r.clone());
    }
    let missing: Vec<Dimension> = Dimension::ALL
        .into_iter()
        .filter(|d| !by_dim.contains_key(d))
        .collect();
    if !missing.is_empty() {
        return Err(ScoringError::UnscorableDimension(missing));
    }
    let mut scores = PerDimension::splat(DimensionScore::point(0).expect("zero is in range"));
    for (d, group) in by_dim {
        scores.set(d, score_dimension(&group)?);
    }
    Ok(scores)
}

/// Scores every dimension from the bundle's test reports. A dimension with no
/// metrics fails the whole assembly.
pub fn assemble_score_vector<S: ObjectStore + ?Sized>(
    bundle: &EvidenceBundle,
    store: &S,
) -> Result<ScoreVector, ScoringError> {
    score_vector_from_reports(&extract_metric_reports(bundle, store)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{append_to_bundle, put_artefact, MemoryStore};
    use serde_json::json;

    fn report(d: Dimension, value: u32, lo: u32, hi: u32, weight: u32) -> MetricReport {
        MetricReport {
            dimension: d,
            metric_name: "m".into(),
            value,
            ci_lo: lo,
            ci_hi: hi,
            weight,
            source_artefact: ContentHash::of(b"src"),
        }
    }

    #[test]
    fn equal_weight_mean() {
        let s = score_dimension(&[
            report(Dimension::Risk, 9000, 8500, 9500, 1),
            report(Dimension::Risk, 7000, 6000, 8000, 1),
        ])
        .unwrap();
        assert_eq!((s.value(), s.ci_lo(), s.ci_hi()), (8000, 7250, 8750));
    }

    #[test]
    fn single_report_identity() {
        let s = score_dimension(&[report(Dimension::Risk, 10000, 10000, 10000, 3)]).unwrap();
        assert_eq!((s.value(), s.ci_lo(), s.ci_hi()), (10000, 10000, 10000));
    }

    #[test]
    fn rounding_is_half_up() {
        // (1 + 2) / 2 = 1.5 -> 2
        let s = score_dimension(&[report(Dimension::Risk, 1, 1, 1, 1), report(Dimension::Risk, 2, 2, 2, 1)]).unwrap();
        assert_eq!(s.value(), 2);
        // (1*2 + 2*1) / 3 = 1.333 -> 1
        let s = score_dimension(&[report(Dimension::Risk, 1, 1, 1, 2), report(Dimension::Risk, 2, 2, 2, 1)]).unwrap();
        assert_eq!(s.value(), 1);
    }

    #[test]
    fn empty_and_mixed_inputs() {
        assert!(matches!(score_dimension(&[]), Err(ScoringError::NoMetrics)));
        assert!(matches!(
            score_dimension(&[report(Dimension::Risk, 1, 1, 1, 1), report(Dimension::Control, 1, 1, 1, 1)]),
            Err(ScoringError::MixedDimensions)
        ));
    }

    fn store_report(store: &MemoryStore, bundle: &mut EvidenceBundle, payload: serde_json::Value) -> ContentHash {
        let bytes = crate::canonical::canonicalize(&payload).unwrap();
        let r = put_artefact(store, &bytes, ArtefactKind::TestReport, 0, "tr").unwrap();
        let h = r.content_hash;
        append_to_bundle(bundle, store, r).unwrap();
        h
    }

    fn metric(d: &str, v: u32) -> serde_json::Value {
        json!({"dimension": d, "metric_name": format!("{d}-metric"), "value": v, "ci_lo": v - 100, "ci_hi": v + 100, "weight": 1})
    }

    #[test]
    fn extraction_keeps_provenance() {
        let store = MemoryStore::new();
        let mut bundle = EvidenceBundle::new("b", "d").unwrap();
        let card = put_artefact(&store, b"card", ArtefactKind::ModelCard, 0, "c").unwrap();
        append_to_bundle(&mut bundle, &store, card).unwrap();
        assert!(extract_metric_reports(&bundle, &store).unwrap().is_empty());

        let h = store_report(&store, &mut bundle, json!({"metrics": [metric("Risk", 8000), metric("Control", 9000)]}));
        let reports = extract_metric_reports(&bundle, &store).unwrap();
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(|r| r.source_artefact == h));
    }

    #[test]
    fn malformed_report_names_artefact() {
        let store = MemoryStore::new();
        let mut bundle = EvidenceBundle::new("b", "d").unwrap();
        let h = store_report(
            &store,
            &mut bundle,
            json!({"metrics": [{"dimension": "Risk", "metric_name": "x", "value": 5000, "ci_lo": 6000, "ci_hi": 7000, "weight": 1}]}),
        );
        match extract_metric_reports(&bundle, &store) {
            Err(ScoringError::MalformedTestReport { artefact, .. }) => assert_eq!(artefact, h),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn float_values_are_malformed() {
        let bytes = br#"{"metrics":[{"dimension":"Risk","metric_name":"x","value":50.5,"ci_lo":1,"ci_hi":9000,"weight":1}]}"#;
        assert!(matches!(
            parse_test_report(bytes, ContentHash::of(bytes)),
            Err(ScoringError::MalformedTestReport { .. })
        ));
    }

    #[test]
    fn assembly_requires_all_dimensions() {
        let store = MemoryStore::new();
        let mut bundle = EvidenceBundle::new("b", "d").unwrap();
        store_report(
            &store,
            &mut bundle,
            json!({"metrics": [metric("Risk", 8000), metric("Alignment", 8000), metric("Control", 8000), metric("Auditability", 8000)]}),
        );
        match assemble_score_vector(&bundle, &store) {
            Err(ScoringError::UnscorableDimension(dims)) => assert_eq!(dims, vec![Dimension::Externality]),
            other => panic!("unexpected {other:?}"),
        }
        store_report(&store, &mut bundle, json!({"metrics": [metric("Externality", 7700)]}));
        let v = assemble_score_vector(&bundle, &store).unwrap();
        assert_eq!(v[Dimension::Externality].value(), 7700);
        assert_eq!(assemble_score_vector(&bundle, &store).unwrap(), v);
    }
}
