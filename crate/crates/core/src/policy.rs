//! Machine-readable jurisdiction/domain policies and the registry that
//! resolves them.
//!
//! A policy document is canonical JSON with exactly these top-level fields:
//! `policy_id`, `version`, `jurisdiction`, `domain`, `thresholds`, `rule`,
//! `evidence_requirements`, `missing_evidence_action`, `condition_templates`,
//! `conditional_band` and `oversight_floor`. The last three may be omitted
//! (empty list, zero band, no floor). Any other field is a schema error.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical::{self, CanonicalError};
use crate::decision::{ConditionKind, ConditionTemplate};
use crate::evidence::ArtefactKind;
use crate::hash::ContentHash;
use crate::model::{partial_per_dimension, Dimension, OversightMode, PerDimension, SCALE_MAX};

pub type ThresholdVector = PerDimension<u32>;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("policy syntax error: {0}")]
    Syntax(String),
    #[error("policy schema error: {0}")]
    Schema(String),
    #[error("policy invariant violated: {0}")]
    Invariant(String),
    #[error("no policy for jurisdiction {jurisdiction:?}, domain {domain:?}{}", version.as_ref().map(|v| format!(", version {v}")).unwrap_or_default())]
    PolicyNotFound {
        jurisdiction: String,
        domain: String,
        version: Option<String>,
    },
    #[error("several policies claim version {version} for ({jurisdiction}, {domain})")]
    AmbiguousVersion {
        jurisdiction: String,
        domain: String,
        version: String,
    },
    #[error("policy ({jurisdiction}, {domain}, {version}) is already registered")]
    Duplicate {
        jurisdiction: String,
        domain: String,
        version: String,
    },
}

impl From<CanonicalError> for PolicyError {
    fn from(e: CanonicalError) -> Self {
        match e {
            CanonicalError::Schema(m) => PolicyError::Schema(m),
            other => PolicyError::Syntax(other.to_string()),
        }
    }
}

/// Dotted-integer version (`1.0`, `1.10`, `2.0.3`). Ordering compares the
/// integer components lexicographically; equality is on the original text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyVersion {
    text: String,
    parts: Vec<u64>,
}

impl PolicyVersion {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    pub fn cmp_version(&self, other: &Self) -> Ordering {
        self.parts.cmp(&other.parts)
    }
}

impl FromStr for PolicyVersion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split('.')
            .map(|p| {
                if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
                    Err(format!("invalid version {s:?}: expected dotted integers"))
                } else {
                    p.parse::<u64>().map_err(|e| format!("invalid version {s:?}: {e}"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            text: s.to_owned(),
            parts,
        })
    }
}

impl fmt::Display for PolicyVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for PolicyVersion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for PolicyVersion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// One stage of a lexicographic rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexStage {
    pub dimensions: Vec<Dimension>,
    pub thresholds: BTreeMap<Dimension, u32>,
    pub ci_gating: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum DecisionRule {
    MinGate {
        ci_gating: bool,
    },
    Lexicographic {
        stages: Vec<LexStage>,
    },
    Weighted {
        weights: PerDimension<u32>,
        cutoff: u32,
        #[serde(default, deserialize_with = "partial_per_dimension")]
        floors: PerDimension<u32>,
        ci_gating: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceRequirement {
    pub kind: ArtefactKind,
    pub min_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_age_days: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MissingEvidenceAction {
    #[serde(rename = "DENY")]
    Deny,
    #[serde(rename = "ESCALATE")]
    Escalate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub policy_id: String,
    pub version: PolicyVersion,
    pub jurisdiction: String,
    pub domain: String,
    pub thresholds: ThresholdVector,
    pub rule: DecisionRule,
    pub evidence_requirements: Vec<EvidenceRequirement>,
    pub missing_evidence_action: MissingEvidenceAction,
    #[serde(default)]
    pub condition_templates: Vec<ConditionTemplate>,
    #[serde(default, deserialize_with = "partial_per_dimension")]
    pub conditional_band: PerDimension<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversight_floor: Option<OversightMode>,
}

impl Policy {
    /// Checks every invariant that a parsed document must satisfy.
    pub fn validate(&self) -> Result<(), PolicyError> {
        let fail = |m: String| Err(PolicyError::Invariant(m));
        for (field, value) in [
            ("policy_id", &self.policy_id),
            ("jurisdiction", &self.jurisdiction),
            ("domain", &self.domain),
        ] {
            if value.trim().is_empty() {
                return fail(format!("{field} must be non-empty"));
            }
        }
        for (d, &t) in self.thresholds.iter() {
            let band = self.conditional_band[d];
            if t > SCALE_MAX {
                return fail(format!("threshold for {d} is {t}, above 10000"));
            }
            if t + band > SCALE_MAX {
                return fail(format!("threshold + conditional band for {d} is {}, above 10000", t + band));
            }
        }
        match &self.rule {
            DecisionRule::MinGate { .. } => {}
            DecisionRule::Lexicographic { stages } => {
                let mut seen = BTreeSet::new();
                for (i, stage) in stages.iter().enumerate() {
                    if stage.dimensions.is_empty() {
                        return fail(format!("lexicographic stage {i} has no dimensions"));
                    }
                    for d in &stage.dimensions {
                        if !seen.insert(*d) {
                            return fail(format!("dimension {d} appears in more than one lexicographic stage"));
                        }
                    }
                    let declared: BTreeSet<_> = stage.dimensions.iter().copied().collect();
                    let keyed: BTreeSet<_> = stage.thresholds.keys().copied().collect();
                    if declared != keyed {
                        return fail(format!(
                            "lexicographic stage {i}: thresholds must be given for exactly the stage dimensions"
                        ));
                    }
                    if let Some((d, t)) = stage.thresholds.iter().find(|(_, &t)| t > SCALE_MAX) {
                        return fail(format!("lexicographic stage {i}: threshold for {d} is {t}, above 10000"));
                    }
                }
            }
            DecisionRule::Weighted { weights, cutoff, floors, .. } => {
                let sum: u64 = weights.iter().map(|(_, &w)| u64::from(w)).sum();
                if sum != u64::from(SCALE_MAX) {
                    return fail(format!("weights sum to {sum}, expected exactly 10000"));
                }
                if *cutoff > SCALE_MAX {
                    return fail(format!("weighted cutoff {cutoff} above 10000"));
                }
                if let Some((d, f)) = floors.iter().find(|(_, &f)| f > SCALE_MAX) {
                    return fail(format!("floor for {d} is {f}, above 10000"));
                }
            }
        }
        for req in &self.evidence_requirements {
            if req.min_count < 1 {
                return fail(format!("evidence requirement {:?} has min_count 0", req.kind));
            }
            if req.max_age_days == Some(0) {
                return fail(format!("evidence requirement {:?} has max_age_days 0", req.kind));
            }
        }
        let mut ids = BTreeSet::new();
        for t in &self.condition_templates {
            if t.condition_id.trim().is_empty() {
                return fail("condition template with empty condition_id".into());
            }
            if !ids.insert(t.condition_id.as_str()) {
                return fail(format!("duplicate condition_id {:?}", t.condition_id));
            }
            match t.kind {
                ConditionKind::EnhancedLogging { interval_days: 0 } | ConditionKind::Reassessment { deadline_days: 0 } => {
                    return fail(format!("condition {:?} has a zero-day parameter", t.condition_id));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("policies contain only encodable values")
    }
}

pub fn parse_policy(bytes: &[u8]) -> Result<Policy, PolicyError> {
    let policy: Policy = canonical::from_slice(bytes)?;
    policy.validate()?;
    Ok(policy)
}

/// SHA-256 of the policy's canonical encoding.
pub fn policy_fingerprint(policy: &Policy) -> ContentHash {
    ContentHash::of(&policy.to_canonical_bytes())
}

/// All known policies. Reads take `&self`; wrap in a lock for shared
/// mutable use.
#[derive(Debug, Default, Clone)]
pub struct PolicyRegistry {
    policies: Vec<Policy>,
}

impl PolicyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, policy: Policy) -> Result<(), PolicyError> {
        policy.validate()?;
        if self.policies.iter().any(|p| {
            p.jurisdiction == policy.jurisdiction && p.domain == policy.domain && p.version == policy.version
        }) {
            return Err(PolicyError::Duplicate {
                jurisdiction: policy.jurisdiction,
                domain: policy.domain,
                version: policy.version.to_string(),
            });
        }
        self.policies.push(policy);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Policy> {
        self.policies.iter()
    }

    /// Exact version when given, otherwise the highest version for the
    /// (jurisdiction, domain) pair.
    pub fn resolve(&self, jurisdiction: &str, domain: &str, version: Option<&str>) -> Result<&Policy, PolicyError> {
        let not_found = || PolicyError::PolicyNotFound {
            jurisdiction: jurisdiction.to_owned(),
            domain: domain.to_owned(),
            version: version.map(str::to_owned),
        };
        let candidates: Vec<&Policy> = self
            .policies
            .iter()
            .filter(|p| p.jurisdiction == jurisdiction && p.domain == domain)
            .collect();

        let wanted = match version {
            Some(v) => Some(v.parse::<PolicyVersion>().map_err(|_| not_found())?),
            None => candidates
                .iter()
                .map(|p| &p.version)
                .max_by(|a, b| a.cmp_version(b))
                .cloned(),
        };
        let wanted = wanted.ok_or_else(not_found)?;
        let mut matching = candidates
            .into_iter()
            .filter(|p| p.version.cmp_version(&wanted) == Ordering::Equal);
        let first = matching.next().ok_or_else(not_found)?;
        if matching.next().is_some() {
            return Err(PolicyError::AmbiguousVersion {
                jurisdiction: jurisdiction.to_owned(),
                domain: domain.to_owned(),
                version: wanted.to_string(),
            });
        }
        Ok(first)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const EU_HEALTHCARE: &str = include_str!("../fixtures/policies/eu-healthcare-high-risk.json");
    pub(crate) const US_CRITICAL: &str = include_str!("../fixtures/policies/us-critical-infrastructure.json");

    fn eu() -> Policy {
        parse_policy(EU_HEALTHCARE.as_bytes()).unwrap()
    }

    fn with_version(mut p: Policy, v: &str) -> Policy {
        p.version = v.parse().unwrap();
        p
    }

    #[test]
    fn eu_fixture_parses() {
        let p = eu();
        assert_eq!(p.rule, DecisionRule::MinGate { ci_gating: true });
        assert!(p.thresholds.iter().all(|(_, &t)| t == 7500));
        let kinds: BTreeSet<_> = p.evidence_requirements.iter().map(|r| r.kind).collect();
        for k in [
            ArtefactKind::ModelCard,
            ArtefactKind::DataLineage,
            ArtefactKind::MonitoringPlan,
            ArtefactKind::RedTeamReport,
        ] {
            assert!(kinds.contains(&k), "missing {k:?}");
        }
    }

    #[test]
    fn lexicographic_fixture_parses() {
        let p = parse_policy(US_CRITICAL.as_bytes()).unwrap();
        let DecisionRule::Lexicographic { stages } = &p.rule else {
            panic!("expected lexicographic rule")
        };
        assert_eq!(stages[0].dimensions, vec![Dimension::Control, Dimension::Auditability]);
        assert!(stages[0].thresholds.values().all(|&t| t == 9000));
    }

    #[test]
    fn weights_must_sum_to_scale() {
        let mut v: serde_json::Value = serde_json::from_str(EU_HEALTHCARE).unwrap();
        v["rule"] = serde_json::json!({
            "type": "Weighted",
            "weights": {"Risk": 2000, "Alignment": 2000, "Externality": 2000, "Control": 2000, "Auditability": 1000},
            "cutoff": 7000,
            "ci_gating": false
        });
        let err = parse_policy(v.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, PolicyError::Invariant(ref m) if m.contains("9000")), "{err}");
    }

    #[test]
    fn unknown_and_malformed_documents() {
        let mut v: serde_json::Value = serde_json::from_str(EU_HEALTHCARE).unwrap();
        v["notes"] = serde_json::json!("informal");
        assert!(matches!(parse_policy(v.to_string().as_bytes()), Err(PolicyError::Schema(_))));
        assert!(matches!(parse_policy(b"{\"policy_id\":"), Err(PolicyError::Syntax(_))));

        let mut v: serde_json::Value = serde_json::from_str(EU_HEALTHCARE).unwrap();
        v["rule"]["extra"] = serde_json::json!(true);
        assert!(matches!(parse_policy(v.to_string().as_bytes()), Err(PolicyError::Schema(_))));

        let mut v: serde_json::Value = serde_json::from_str(EU_HEALTHCARE).unwrap();
        v["thresholds"]["Risk"] = serde_json::json!(75.0);
        assert!(parse_policy(v.to_string().as_bytes()).is_err());
    }

    #[test]
    fn band_may_not_push_past_scale() {
        let mut p = eu();
        p.conditional_band.set(Dimension::Risk, 2501);
        assert!(matches!(p.validate(), Err(PolicyError::Invariant(_))));
    }

    #[test]
    fn overlapping_stages_rejected() {
        let mut p = parse_policy(US_CRITICAL.as_bytes()).unwrap();
        if let DecisionRule::Lexicographic { stages } = &mut p.rule {
            let dup = LexStage {
                dimensions: vec![Dimension::Control],
                thresholds: [(Dimension::Control, 8000)].into_iter().collect(),
                ci_gating: false,
            };
            stages.push(dup);
        }
        assert!(matches!(p.validate(), Err(PolicyError::Invariant(_))));
    }

    #[test]
    fn version_ordering_is_numeric() {
        let a: PolicyVersion = "1.9".parse().unwrap();
        let b: PolicyVersion = "1.10".parse().unwrap();
        assert_eq!(a.cmp_version(&b), Ordering::Less);
        assert!("1.x".parse::<PolicyVersion>().is_err());
        assert!("".parse::<PolicyVersion>().is_err());
    }

    #[test]
    fn resolve_picks_highest_version() {
        let mut reg = PolicyRegistry::new();
        reg.add(with_version(eu(), "1.0")).unwrap();
        reg.add(with_version(eu(), "1.1")).unwrap();
        assert_eq!(reg.resolve("EU", "healthcare", None).unwrap().version.as_str(), "1.1");
        assert_eq!(reg.resolve("EU", "healthcare", Some("1.0")).unwrap().version.as_str(), "1.0");
        assert!(matches!(
            reg.resolve("EU", "healthcare", Some("2.0")),
            Err(PolicyError::PolicyNotFound { .. })
        ));
        assert!(matches!(
            reg.resolve("US", "logistics", None),
            Err(PolicyError::PolicyNotFound { .. })
        ));
        assert!(matches!(reg.add(with_version(eu(), "1.1")), Err(PolicyError::Duplicate { .. })));
    }

    #[test]
    fn equal_ordering_versions_are_ambiguous() {
        let mut reg = PolicyRegistry::new();
        reg.add(with_version(eu(), "1.1")).unwrap();
        reg.add(with_version(eu(), "1.01")).unwrap();
        assert!(matches!(
            reg.resolve("EU", "healthcare", None),
            Err(PolicyError::AmbiguousVersion { .. })
        ));
    }

    #[test]
    fn same_deployment_under_two_jurisdictions() {
        let mut reg = PolicyRegistry::new();
        reg.add(eu()).unwrap();
        reg.add(parse_policy(US_CRITICAL.as_bytes()).unwrap()).unwrap();
        let a = reg.resolve("EU", "healthcare", None).unwrap();
        let b = reg.resolve("US", "critical-infrastructure", None).unwrap();
        assert_ne!(policy_fingerprint(a), policy_fingerprint(b));
        assert_eq!((a.jurisdiction.as_str(), a.domain.as_str()), ("EU", "healthcare"));
        assert_eq!((b.jurisdiction.as_str(), b.domain.as_str()), ("US", "critical-infrastructure"));
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let p = eu();
        let reparsed = parse_policy(&p.to_canonical_bytes()).unwrap();
        assert_eq!(reparsed, p);
        assert_eq!(policy_fingerprint(&reparsed), policy_fingerprint(&p));

        let mut q = p.clone();
        q.thresholds.set(Dimension::Risk, 7501);
        assert_ne!(policy_fingerprint(&q), policy_fingerprint(&p));
    }

    #[test]
    fn condition_templates_need_positive_parameters() {
        let mut p = eu();
        p.condition_templates.push(ConditionTemplate {
            condition_id: "zero".into(),
            kind: ConditionKind::Reassessment { deadline_days: 0 },
            trigger: Dimension::Risk,
        });
        assert!(matches!(p.validate(), Err(PolicyError::Invariant(_))));
    }
}
