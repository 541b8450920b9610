//! Fixture loading and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use adas_core::canonical;
use adas_core::evidence::{append_to_bundle, put_artefact, ArtefactKind, EvidenceBundle, ObjectStore};
use adas_core::model::DeploymentDescriptor;
use adas_core::policy::{parse_policy, Policy};
use serde::Deserialize;

/// 2026-01-01T00:00:00Z.
pub const NOW: u64 = 1_767_225_600;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn read_fixture(rel: &str) -> Vec<u8> {
    std::fs::read(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn eu_policy() -> Policy {
    parse_policy(&read_fixture("policies/eu-healthcare-high-risk.json")).unwrap()
}

pub fn eu_deployment() -> DeploymentDescriptor {
    canonical::from_slice(&read_fixture("deployments/eu-triage.json")).unwrap()
}

#[derive(Deserialize)]
pub struct ManifestItem {
    pub file: String,
    pub kind: ArtefactKind,
    pub label: String,
}

pub fn eu_evidence_items() -> Vec<ManifestItem> {
    canonical::from_slice(&read_fixture("evidence/eu-healthcare/manifest.json")).unwrap()
}

/// Stores the EU evidence corpus, skipping `skip`, and returns the bundle.
pub fn eu_bundle<S: ObjectStore>(store: &S, now: u64, skip: Option<ArtefactKind>) -> EvidenceBundle {
    let mut bundle = EvidenceBundle::new("eu-triage-2026", &eu_deployment().deployment_id).unwrap();
    for item in eu_evidence_items() {
        if Some(item.kind) == skip {
            continue;
        }
        let bytes = read_fixture(&format!("evidence/eu-healthcare/{}", item.file));
        let r = put_artefact(store, &bytes, item.kind, now, &item.label).unwrap();
        append_to_bundle(&mut bundle, store, r).unwrap();
    }
    bundle
}

/// Every file in the fixture corpus, by relative path.
pub fn corpus() -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &std::path::Path, base: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, base, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(&fixtures(), &fixtures(), &mut out);
    out
}
