//! The authorisation pipeline: evidence sufficiency, scoring, oversight
//! floor, the policy's gate rule, then conditions for marginal dimensions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evidence::{
    check_sufficiency, get_artefact, ArtefactKind, EvidenceBundle, EvidenceError, ObjectStore, SECONDS_PER_DAY,
};
use crate::hash::ContentHash;
use crate::model::{validate_deployment, DeploymentDescriptor, Dimension, Finding, OversightMode, PerDimension, ScoreVector};
use crate::policy::{policy_fingerprint, DecisionRule, LexStage, MissingEvidenceAction, Policy, ThresholdVector};
use crate::scoring::{assemble_score_vector, ScoringError};

#[derive(Debug, thiserror::Error)]
pub enum DecisionError {
    #[error("policy applies to ({policy_jurisdiction}, {policy_domain}) but the deployment is ({jurisdiction}, {domain})")]
    PolicyMismatch {
        policy_jurisdiction: String,
        policy_domain: String,
        jurisdiction: String,
        domain: String,
    },
    #[error("bundle belongs to deployment {bundle:?}, not {deployment:?}")]
    BundleMismatch { bundle: String, deployment: String },
    #[error("invalid deployment: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidDeployment(Vec<Finding>),
    #[error("storage failure during assessment: {0}")]
    Storage(#[source] EvidenceError),
}

/// One violated comparison. `dimension` is `None` for the weighted
/// aggregate; `stage` is set for explicit lexicographic stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateFailure {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<Dimension>,
    pub required: u32,
    pub observed: u32,
    pub ci_gated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResult {
    pub passed: bool,
    pub failing: Vec<GateFailure>,
}

impl GateResult {
    fn from_failures(failing: Vec<GateFailure>) -> Self {
        Self {
            passed: failing.is_empty(),
            failing,
        }
    }
}

fn min_gate_failures(
    scores: &ScoreVector,
    dims: impl Iterator<Item = (Dimension, u32)>,
    ci_gating: bool,
    stage: Option<u32>,
) -> Vec<GateFailure> {
    dims.filter_map(|(d, required)| {
        let observed = scores[d].gated(ci_gating);
        (observed < required).then_some(GateFailure {
            dimension: Some(d),
            required,
            observed,
            ci_gated: ci_gating,
            stage,
        })
    })
    .collect()
}

/// Passes iff every dimension meets its threshold; with CI gating the
/// interval's lower bound must meet it too.
pub fn evaluate_min_gate(scores: &ScoreVector, thresholds: &ThresholdVector, ci_gating: bool) -> GateResult {
    GateResult::from_failures(min_gate_failures(
        scores,
        thresholds.iter().map(|(d, &t)| (d, t)),
        ci_gating,
        None,
    ))
}

/// Evaluates stages in order and stops at the first failing one. Dimensions
/// not named by any stage are min-gated against `base_thresholds` last, with
/// CI gating if any explicit stage uses it.
pub fn evaluate_lexicographic(scores: &ScoreVector, stages: &[LexStage], base_thresholds: &ThresholdVector) -> GateResult {
    for (i, stage) in stages.iter().enumerate() {
        let failures = min_gate_failures(
            scores,
            stage.dimensions.iter().map(|d| (*d, stage.thresholds[d])),
            stage.ci_gating,
            Some(i as u32),
        );
        if !failures.is_empty() {
            return GateResult::from_failures(failures);
        }
    }
    let staged: Vec<Dimension> = stages.iter().flat_map(|s| s.dimensions.iter().copied()).collect();
    let ci_gating = stages.iter().any(|s| s.ci_gating);
    GateResult::from_failures(min_gate_failures(
        scores,
        base_thresholds
            .iter()
            .filter(|(d, _)| !staged.contains(d))
            .map(|(d, &t)| (d, t)),
        ci_gating,
        None,
    ))
}

/// Weighted mean of the (gated) scores, in hundredths, rounded half-up.
pub fn weighted_aggregate(scores: &ScoreVector, weights: &PerDimension<u32>, ci_gating: bool) -> u32 {
    let sum: u64 = scores
        .iter()
        .map(|(d, s)| u64::from(weights[d]) * u64::from(s.gated(ci_gating)))
        .sum();
    ((2 * sum + 10_000) / 20_000) as u32
}

/// Passes iff the weighted aggregate reaches `cutoff` and every dimension
/// reaches its floor.
pub fn evaluate_weighted(
    scores: &ScoreVector,
    weights: &PerDimension<u32>,
    cutoff: u32,
    floors: &PerDimension<u32>,
    ci_gating: bool,
) -> GateResult {
    let aggregate = weighted_aggregate(scores, weights, ci_gating);
    let mut failing = Vec::new();
    if aggregate < cutoff {
        failing.push(GateFailure {
            dimension: None,
            required: cutoff,
            observed: aggregate,
            ci_gated: ci_gating,
            stage: None,
        });
    }
    failing.extend(min_gate_failures(scores, floors.iter().map(|(d, &f)| (d, f)), ci_gating, None));
    GateResult::from_failures(failing)
}

pub fn evaluate_rule(scores: &ScoreVector, policy: &Policy) -> GateResult {
    match &policy.rule {
        DecisionRule::MinGate { ci_gating } => evaluate_min_gate(scores, &policy.thresholds, *ci_gating),
        DecisionRule::Lexicographic { stages } => evaluate_lexicographic(scores, stages, &policy.thresholds),
        DecisionRule::Weighted {
            weights,
            cutoff,
            floors,
            ci_gating,
        } => evaluate_weighted(scores, weights, *cutoff, floors, *ci_gating),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ConditionKind {
    /// Fresh `LogAttestation` evidence at most `interval_days` old.
    EnhancedLogging { interval_days: u32 },
    /// The deployment's oversight mode must be veto or co-sign.
    MandatoryHumanVeto,
    /// A new full assessment within `deadline_days` of issuance.
    Reassessment { deadline_days: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionTemplate {
    pub condition_id: String,
    pub kind: ConditionKind,
    pub trigger: Dimension,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub condition_id: String,
    pub kind: ConditionKind,
    pub trigger: Dimension,
    pub issued_at: u64,
}

/// Instantiates the templates of every dimension whose score sits in the
/// marginal band `[threshold, threshold + band)`.
pub fn derive_conditions(scores: &ScoreVector, policy: &Policy, issued_at: u64) -> Vec<Condition> {
    let marginal = |d: Dimension| {
        let t = policy.thresholds[d];
        let v = scores[d].value();
        t <= v && v < t + policy.conditional_band[d]
    };
    policy
        .condition_templates
        .iter()
        .filter(|t| marginal(t.trigger))
        .map(|t| Condition {
            condition_id: t.condition_id.clone(),
            kind: t.kind.clone(),
            trigger: t.trigger,
            issued_at,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConditionStatus {
    Satisfied,
    Violated { detail: String },
}

/// Checks a condition against current evidence and deployment state.
pub fn check_condition<S: ObjectStore + ?Sized>(
    condition: &Condition,
    bundle: &EvidenceBundle,
    store: &S,
    deployment: &DeploymentDescriptor,
    now: u64,
) -> ConditionStatus {
    let violated = |detail: String| ConditionStatus::Violated { detail };
    match condition.kind {
        ConditionKind::EnhancedLogging { interval_days } => {
            let mut newest: Option<u64> = None;
            for e in bundle.entries().iter().filter(|e| e.kind == ArtefactKind::LogAttestation) {
                if let Err(err) = get_artefact(store, &e.content_hash) {
                    return violated(format!("log attestation unusable: {err}"));
                }
                newest = newest.max(Some(e.timestamp));
            }
            match newest {
                None => violated("no LogAttestation evidence".into()),
                Some(ts) => {
                    let age = now.saturating_sub(ts);
                    if age <= u64::from(interval_days) * SECONDS_PER_DAY {
                        ConditionStatus::Satisfied
                    } else {
                        violated(format!(
                            "newest LogAttestation is {} days old, limit {interval_days}",
                            age / SECONDS_PER_DAY
                        ))
                    }
                }
            }
        }
        ConditionKind::MandatoryHumanVeto => {
            let mode = deployment.human_oversight.mode;
            if mode >= OversightMode::Veto {
                ConditionStatus::Satisfied
            } else {
                violated(format!("oversight mode is {mode}, veto or co-sign required"))
            }
        }
        ConditionKind::Reassessment { deadline_days } => {
            let deadline = condition.issued_at + u64::from(deadline_days) * SECONDS_PER_DAY;
            if now < deadline {
                ConditionStatus::Satisfied
            } else {
                violated(format!("reassessment deadline passed at {deadline}"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "APPROVED")]
    Approved,
    #[serde(rename = "APPROVED_WITH_CONDITIONS")]
    ApprovedWithConditions,
    #[serde(rename = "DENIED")]
    Denied,
}

impl Outcome {
    pub fn is_approved(self) -> bool {
        !matches!(self, Outcome::Denied)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Approved => "APPROVED",
            Outcome::ApprovedWithConditions => "APPROVED_WITH_CONDITIONS",
            Outcome::Denied => "DENIED",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Machine-readable reason attached to a decision. Serialized as a
/// colon-separated string, e.g. `evidence:MonitoringPlan` or
/// `gate:Control:observed=8500:required=9000:basis=ci_lo:stage=0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reason {
    MissingEvidence(ArtefactKind),
    /// Marker for external review queues; the outcome is still DENIED.
    EscalatedForReview,
    IntegrityViolation(ContentHash),
    MissingArtefact(ContentHash),
    MalformedTestReport(ContentHash),
    Unscorable(Dimension),
    OversightBelowFloor { actual: OversightMode, required: OversightMode },
    Gate(GateFailure),
}

pub const ESCALATION_MARKER: &str = "escalation:human-review";

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::MissingEvidence(k) => write!(f, "evidence:{k}"),
            Reason::EscalatedForReview => f.write_str(ESCALATION_MARKER),
            Reason::IntegrityViolation(h) => write!(f, "integrity:{h}"),
            Reason::MissingArtefact(h) => write!(f, "missing-artefact:{h}"),
            Reason::MalformedTestReport(h) => write!(f, "malformed-report:{h}"),
            Reason::Unscorable(d) => write!(f, "unscorable:{d}"),
            Reason::OversightBelowFloor { actual, required } => {
                write!(f, "oversight:actual={actual}:required={required}")
            }
            Reason::Gate(g) => {
                let subject = g.dimension.map(Dimension::as_str).unwrap_or("aggregate");
                let basis = if g.ci_gated { "ci_lo" } else { "value" };
                write!(f, "gate:{subject}:observed={}:required={}:basis={basis}", g.observed, g.required)?;
                if let Some(stage) = g.stage {
                    write!(f, ":stage={stage}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Reason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unrecognised reason {s:?}");
        if s == ESCALATION_MARKER {
            return Ok(Reason::EscalatedForReview);
        }
        let (code, rest) = s.split_once(':').ok_or_else(bad)?;
        let hash = |r: &str| r.parse::<ContentHash>().map_err(|_| bad());
        match code {
            "evidence" => Ok(Reason::MissingEvidence(rest.parse().map_err(|_| bad())?)),
            "integrity" => Ok(Reason::IntegrityViolation(hash(rest)?)),
            "missing-artefact" => Ok(Reason::MissingArtefact(hash(rest)?)),
            "malformed-report" => Ok(Reason::MalformedTestReport(hash(rest)?)),
            "unscorable" => Ok(Reason::Unscorable(rest.parse().map_err(|_| bad())?)),
            "oversight" => {
                let (a, r) = rest.split_once(":required=").ok_or_else(bad)?;
                let a = a.strip_prefix("actual=").ok_or_else(bad)?;
                Ok(Reason::OversightBelowFloor {
                    actual: a.parse().map_err(|_| bad())?,
                    required: r.parse().map_err(|_| bad())?,
                })
            }
            "gate" => {
                let mut parts = rest.split(':');
                let subject = parts.next().ok_or_else(bad)?;
                let dimension = match subject {
                    "aggregate" => None,
                    d => Some(d.parse::<Dimension>().map_err(|_| bad())?),
                };
                let mut field = |key: &str| -> Result<String, String> {
                    let p = parts.next().ok_or_else(bad)?;
                    p.strip_prefix(key)
                        .and_then(|v| v.strip_prefix('='))
                        .map(str::to_owned)
                        .ok_or_else(bad)
                };
                let observed = field("observed")?.parse().map_err(|_| bad())?;
                let required = field("required")?.parse().map_err(|_| bad())?;
                let ci_gated = match field("basis")?.as_str() {
                    "ci_lo" => true,
                    "value" => false,
                    _ => return Err(bad()),
                };
                let stage = match parts.next() {
                    None => None,
                    Some(p) => Some(p.strip_prefix("stage=").ok_or_else(bad)?.parse().map_err(|_| bad())?),
                };
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(Reason::Gate(GateFailure {
                    dimension,
                    required,
                    observed,
                    ci_gated,
                    stage,
                }))
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Reason {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Reason {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decision {
    pub outcome: Outcome,
    pub conditions: Vec<Condition>,
    pub reasons: Vec<Reason>,
    pub policy_fingerprint: ContentHash,
    /// Absent when the assessment stopped before scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_vector: Option<ScoreVector>,
    pub evaluated_at: u64,
}

impl Decision {
    fn denied(reasons: Vec<Reason>, policy: &Policy, scores: Option<ScoreVector>, now: u64) -> Self {
        debug_assert!(!reasons.is_empty());
        Self {
            outcome: Outcome::Denied,
            conditions: Vec::new(),
            reasons,
            policy_fingerprint: policy_fingerprint(policy),
            score_vector: scores,
            evaluated_at: now,
        }
    }

    pub fn is_escalated(&self) -> bool {
        self.reasons.contains(&Reason::EscalatedForReview)
    }
}

fn evidence_reason(err: EvidenceError) -> Result<Reason, DecisionError> {
    match err {
        EvidenceError::IntegrityViolation(h) => Ok(Reason::IntegrityViolation(h)),
        EvidenceError::NotFound(h) | EvidenceError::UnknownArtefact(h) => Ok(Reason::MissingArtefact(h)),
        other => Err(DecisionError::Storage(other)),
    }
}

/// Runs the full assessment of `deployment` under `policy` at time `now`.
///
/// Evidence and scoring problems become DENIED decisions with reasons;
/// only caller mistakes and storage failures are errors.
pub fn authorize<S: ObjectStore + ?Sized>(
    deployment: &DeploymentDescriptor,
    bundle: &EvidenceBundle,
    policy: &Policy,
    store: &S,
    now: u64,
) -> Result<Decision, DecisionError> {
    let findings = validate_deployment(deployment);
    if !findings.is_empty() {
        return Err(DecisionError::InvalidDeployment(findings));
    }
    if policy.jurisdiction != deployment.jurisdiction || policy.domain != deployment.use_context.domain {
        return Err(DecisionError::PolicyMismatch {
            policy_jurisdiction: policy.jurisdiction.clone(),
            policy_domain: policy.domain.clone(),
            jurisdiction: deployment.jurisdiction.clone(),
            domain: deployment.use_context.domain.clone(),
        });
    }
    if bundle.deployment_id() != deployment.deployment_id {
        return Err(DecisionError::BundleMismatch {
            bundle: bundle.deployment_id().to_owned(),
            deployment: deployment.deployment_id.clone(),
        });
    }

    // 1. Evidence sufficiency, before any scoring.
    let sufficiency = match check_sufficiency(bundle, policy, store, now) {
        Ok(r) => r,
        Err(e) => return Ok(Decision::denied(vec![evidence_reason(e)?], policy, None, now)),
    };
    if !sufficiency.satisfied {
        let mut reasons: Vec<Reason> = sufficiency
            .unsatisfied()
            .map(|r| Reason::MissingEvidence(r.requirement.kind))
            .collect();
        if sufficiency.action_on_failure == MissingEvidenceAction::Escalate {
            reasons.push(Reason::EscalatedForReview);
        }
        return Ok(Decision::denied(reasons, policy, None, now));
    }

    // 2. Scores.
    let scores = match assemble_score_vector(bundle, store) {
        Ok(s) => s,
        Err(ScoringError::UnscorableDimension(dims)) => {
            let reasons = dims.into_iter().map(Reason::Unscorable).collect();
            return Ok(Decision::denied(reasons, policy, None, now));
        }
        Err(ScoringError::MalformedTestReport { artefact, .. }) => {
            return Ok(Decision::denied(vec![Reason::MalformedTestReport(artefact)], policy, None, now))
        }
        Err(ScoringError::Evidence(e)) => return Ok(Decision::denied(vec![evidence_reason(e)?], policy, None, now)),
        Err(ScoringError::NoMetrics | ScoringError::MixedDimensions) => {
            unreachable!("score_vector_from_reports groups reports by dimension")
        }
    };

    // 3. Oversight floor, 4. decision rule.
    let mut reasons = Vec::new();
    if let Some(required) = policy.oversight_floor {
        let actual = deployment.human_oversight.mode;
        if actual < required {
            reasons.push(Reason::OversightBelowFloor { actual, required });
        }
    }
    let gate = evaluate_rule(&scores, policy);
    reasons.extend(gate.failing.into_iter().map(Reason::Gate));
    if !reasons.is_empty() {
        return Ok(Decision::denied(reasons, policy, Some(scores), now));
    }

    // 5. Conditions for marginal dimensions.
    let conditions = derive_conditions(&scores, policy, now);
    let outcome = if conditions.is_empty() {
        Outcome::Approved
    } else {
        Outcome::ApprovedWithConditions
    };
    Ok(Decision {
        outcome,
        conditions,
        reasons: Vec::new(),
        policy_fingerprint: policy_fingerprint(policy),
        score_vector: Some(scores),
        evaluated_at: now,
    })
}
