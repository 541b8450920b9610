//! WebAssembly exports for the static demo page.
//!
//! Every export takes and returns JSON text so the page needs no generated
//! bindings beyond strings. Failures come back as `{"error": "..."}`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use adas_core::decision::{evaluate_rule, weighted_aggregate};
use adas_core::model::ScoreVector;
use adas_core::policy::{parse_policy, DecisionRule};
use adas_core::scoring::{parse_test_report, score_dimension, MetricReport};
use adas_core::translog::merkle;
use adas_core::{ContentHash, Dimension};

fn respond(result: Result<Value, String>) -> String {
    result.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

/// Evaluates a policy's decision rule against a score vector.
///
/// `policy` is a policy document; `scores` maps each dimension to
/// `{value, ci_lo, ci_hi}` in hundredths.
#[wasm_bindgen]
pub fn evaluate_gate(policy: &str, scores: &str) -> String {
    respond((|| {
        let policy = parse_policy(policy.as_bytes()).map_err(|e| e.to_string())?;
        let scores: ScoreVector = serde_json::from_str(scores).map_err(|e| format!("scores: {e}"))?;
        let result = evaluate_rule(&scores, &policy);
        let mut out = json!({ "passed": result.passed, "failing": result.failing });
        if let DecisionRule::Weighted { weights, ci_gating, .. } = &policy.rule {
            out["aggregate"] = json!(weighted_aggregate(&scores, weights, *ci_gating));
        }
        // Dimensions that clear the gate but sit inside the conditional band.
        let banded: Vec<Dimension> = Dimension::ALL
            .into_iter()
            .filter(|d| {
                let band = policy.conditional_band[*d];
                let v = scores[*d].value();
                band > 0 && v >= policy.thresholds[*d] && v < policy.thresholds[*d].saturating_add(band)
            })
            .collect();
        out["conditional_band"] = json!(banded);
        Ok(out)
    })())
}

/// Aggregates a test report (`{"metrics": [...]}`) into per-dimension
/// scores. Dimensions without metrics are listed under `missing`.
#[wasm_bindgen]
pub fn aggregate_scores(report: &str) -> String {
    respond((|| {
        let reports = parse_test_report(report.as_bytes(), ContentHash::of(report.as_bytes())).map_err(|e| e.to_string())?;
        let mut scores = serde_json::Map::new();
        let mut missing = Vec::new();
        for d in Dimension::ALL {
            let mine: Vec<MetricReport> = reports.iter().filter(|r| r.dimension == d).cloned().collect();
            if mine.is_empty() {
                missing.push(d);
            } else {
                let s = score_dimension(&mine).map_err(|e| e.to_string())?;
                scores.insert(d.as_str().to_owned(), json!(s));
            }
        }
        Ok(json!({ "scores": scores, "missing": missing }))
    })())
}

#[derive(Deserialize)]
struct MerkleRequest {
    leaves: Vec<String>,
    index: u64,
    #[serde(default)]
    old_size: Option<u64>,
}

#[derive(Serialize)]
struct MerkleView {
    size: u64,
    root: ContentHash,
    leaf_hashes: Vec<ContentHash>,
    inclusion_path: Vec<ContentHash>,
    inclusion_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistency: Option<Value>,
}

/// Builds a log over the given leaf strings and proves one of them.
///
/// Request: `{"leaves": [...], "index": n, "old_size": m?}`; with
/// `old_size` a consistency proof from that prefix is included.
#[wasm_bindgen]
pub fn merkle_explore(request: &str) -> String {
    respond((|| {
        let req: MerkleRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
        let size = req.leaves.len() as u64;
        if req.index >= size {
            return Err(format!("index {} out of range for {size} leaves", req.index));
        }
        let hashes: Vec<ContentHash> = req.leaves.iter().map(|l| merkle::leaf_hash(l.as_bytes())).collect();
        let root = merkle::root(&hashes);
        let path = merkle::inclusion_path(req.index as usize, &hashes);
        let verified = merkle::root_from_inclusion(req.index, size, &hashes[req.index as usize], &path) == Some(root);
        let consistency = match req.old_size {
            None => None,
            Some(m) if m == 0 || m > size => return Err(format!("old_size must be in 1..={size}")),
            Some(m) => {
                let old_root = merkle::root(&hashes[..m as usize]);
                let proof = merkle::consistency_path(m as usize, &hashes);
                let ok = merkle::verify_consistency_path(m, size, &old_root, &root, &proof);
                Some(json!({ "old_size": m, "old_root": old_root, "path": proof, "verified": ok }))
            }
        };
        let view = MerkleView {
            size,
            root,
            leaf_hashes: hashes,
            inclusion_path: path,
            inclusion_verified: verified,
            consistency,
        };
        serde_json::to_value(view).map_err(|e| e.to_string())
    })())
}
