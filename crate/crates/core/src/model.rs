//! Deployment descriptors, the five authorisation dimensions and score vectors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Upper end of the fixed-point score scale: 100.00 in hundredths.
pub const SCALE_MAX: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Risk,
    Alignment,
    Externality,
    Control,
    Auditability,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Risk,
        Dimension::Alignment,
        Dimension::Externality,
        Dimension::Control,
        Dimension::Auditability,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Risk => "Risk",
            Dimension::Alignment => "Alignment",
            Dimension::Externality => "Externality",
            Dimension::Control => "Control",
            Dimension::Auditability => "Auditability",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

/// One value per dimension. Serialized as a JSON object keyed by dimension
/// name; deserializing requires all five keys and nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PerDimension<T>([T; 5]);

impl<T> PerDimension<T> {
    pub fn from_fn(mut f: impl FnMut(Dimension) -> T) -> Self {
        Self(Dimension::ALL.map(&mut f))
    }

    pub fn get(&self, d: Dimension) -> &T {
        &self.0[d.index()]
    }

    pub fn set(&mut self, d: Dimension, value: T) {
        self.0[d.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Dimension, &T)> {
        Dimension::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(Dimension, &T) -> U) -> PerDimension<U> {
        PerDimension::from_fn(|d| f(d, self.get(d)))
    }
}

impl<T: Copy> PerDimension<T> {
    pub fn splat(value: T) -> Self {
        Self([value; 5])
    }
}

impl<T: Default> Default for PerDimension<T> {
    fn default() -> Self {
        Self::from_fn(|_| T::default())
    }
}

impl<T> std::ops::Index<Dimension> for PerDimension<T> {
    type Output = T;

    fn index(&self, d: Dimension) -> &T {
        self.get(d)
    }
}

impl<T: Serialize> Serialize for PerDimension<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&'static str, &T> = self.iter().map(|(d, v)| (d.as_str(), v)).collect();
        map.serialize(serializer)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for PerDimension<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut map: BTreeMap<Dimension, T> = BTreeMap::deserialize(deserializer)?;
        let missing: Vec<&str> = Dimension::ALL
            .iter()
            .filter(|d| !map.contains_key(d))
            .map(|d| d.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(serde::de::Error::custom(format!(
                "missing dimension(s): {}",
                missing.join(", ")
            )));
        }
        Ok(Self(Dimension::ALL.map(|d| map.remove(&d).expect("checked above"))))
    }
}

/// Deserializes a per-dimension map where absent dimensions default to zero.
pub(crate) fn partial_per_dimension<'de, D, T>(deserializer: D) -> Result<PerDimension<T>, D::Error>
where
    D: Deserializer<'de>,
    T: DeserializeOwned + Default,
{
    let mut map: BTreeMap<Dimension, T> = BTreeMap::deserialize(deserializer)?;
    Ok(PerDimension::from_fn(|d| map.remove(&d).unwrap_or_default()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("missing dimension {0}")]
    MissingDimension(Dimension),
    #[error("{dimension}: expected 0 <= ci_lo ({ci_lo}) <= value ({value}) <= ci_hi ({ci_hi}) <= 10000")]
    RangeViolation {
        dimension: Dimension,
        value: u32,
        ci_lo: u32,
        ci_hi: u32,
    },
}

/// A dimension score in hundredths with its confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScore")]
pub struct DimensionScore {
    value: u32,
    ci_lo: u32,
    ci_hi: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScore {
    value: u32,
    ci_lo: u32,
    ci_hi: u32,
}

impl TryFrom<RawScore> for DimensionScore {
    type Error = String;

    fn try_from(raw: RawScore) -> Result<Self, String> {
        DimensionScore::new(raw.value, raw.ci_lo, raw.ci_hi).ok_or_else(|| {
            format!(
                "expected 0 <= ci_lo ({}) <= value ({}) <= ci_hi ({}) <= 10000",
                raw.ci_lo, raw.value, raw.ci_hi
            )
        })
    }
}

impl DimensionScore {
    pub fn new(value: u32, ci_lo: u32, ci_hi: u32) -> Option<Self> {
        (ci_lo <= value && value <= ci_hi && ci_hi <= SCALE_MAX).then_some(Self { value, ci_lo, ci_hi })
    }

    /// A degenerate interval at `value`.
    pub fn point(value: u32) -> Option<Self> {
        Self::new(value, value, value)
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn ci_lo(&self) -> u32 {
        self.ci_lo
    }

    pub fn ci_hi(&self) -> u32 {
        self.ci_hi
    }

    /// The quantity compared against a threshold: the interval's lower bound
    /// when CI gating is on, the point value otherwise.
    pub fn gated(&self, ci_gating: bool) -> u32 {
        if ci_gating {
            self.ci_lo
        } else {
            self.value
        }
    }
}

pub type ScoreVector = PerDimension<DimensionScore>;

/// Builds a validated score vector from `(value, ci_lo, ci_hi)` triples.
pub fn make_score_vector(entries: &BTreeMap<Dimension, (u32, u32, u32)>) -> Result<ScoreVector, ModelError> {
    let mut scores = [DimensionScore { value: 0, ci_lo: 0, ci_hi: 0 }; 5];
    for d in Dimension::ALL {
        let &(value, ci_lo, ci_hi) = entries.get(&d).ok_or(ModelError::MissingDimension(d))?;
        scores[d.index()] = DimensionScore::new(value, ci_lo, ci_hi).ok_or(ModelError::RangeViolation {
            dimension: d,
            value,
            ci_lo,
            ci_hi,
        })?;
    }
    Ok(PerDimension(scores))
}

/// Ordered from least to most human involvement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OversightMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "review")]
    Review,
    #[serde(rename = "veto")]
    Veto,
    #[serde(rename = "co-sign")]
    CoSign,
}

impl OversightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OversightMode::None => "none",
            OversightMode::Review => "review",
            OversightMode::Veto => "veto",
            OversightMode::CoSign => "co-sign",
        }
    }
}

impl fmt::Display for OversightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OversightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [OversightMode::None, OversightMode::Review, OversightMode::Veto, OversightMode::CoSign]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown oversight mode {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    pub id: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpace {
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanOversight {
    pub mode: OversightMode,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlMechanisms {
    #[serde(rename = "override")]
    pub override_available: bool,
    pub shutdown: bool,
    pub sandboxed: bool,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UseContext {
    pub domain: String,
    pub purpose: String,
}

/// A specific AI system in a specific use context and jurisdiction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentDescriptor {
    pub deployment_id: String,
    pub model_ref: ModelRef,
    pub data_refs: Vec<String>,
    pub action_space: ActionSpace,
    pub human_oversight: HumanOversight,
    pub control_mechanisms: ControlMechanisms,
    pub use_context: UseContext,
    pub jurisdiction: String,
    pub scope_statement: String,
}

/// A single validation failure: which field, and which rule it broke.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub field: String,
    pub rule: String,
}

impl Finding {
    fn new(field: &str, rule: &str) -> Self {
        Self {
            field: field.to_owned(),
            rule: rule.to_owned(),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub fn validate_deployment(d: &DeploymentDescriptor) -> Vec<Finding> {
    let required = [
        ("deployment_id", &d.deployment_id),
        ("model_ref.id", &d.model_ref.id),
        ("model_ref.version", &d.model_ref.version),
        ("use_context.domain", &d.use_context.domain),
        ("jurisdiction", &d.jurisdiction),
        ("scope_statement", &d.scope_statement),
    ];
    required
        .into_iter()
        .filter(|(_, value)| value.trim().is_empty())
        .map(|(field, _)| Finding::new(field, "required"))
        .collect()
}

/// Deployment descriptors keyed by id; enforces id uniqueness on insert.
#[derive(Debug, Default, Clone)]
pub struct DeploymentRegistry {
    deployments: BTreeMap<String, DeploymentDescriptor>,
}

impl DeploymentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, d: DeploymentDescriptor) -> Result<(), Vec<Finding>> {
        let mut findings = validate_deployment(&d);
        if self.deployments.contains_key(&d.deployment_id) {
            findings.push(Finding::new("deployment_id", "not unique"));
        }
        if !findings.is_empty() {
            return Err(findings);
        }
        self.deployments.insert(d.deployment_id.clone(), d);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&DeploymentDescriptor> {
        self.deployments.get(id)
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.deployments.keys().map(String::as_str).collect()
    }
}
