//! Content-addressed artefact storage, append-only evidence bundles, and the
//! evidence sufficiency check that runs before any scoring.
//!
//! Objects live under `objects/<hh>/<remaining 62 hex>`, keyed by the SHA-256
//! of their bytes. Every read re-hashes the bytes, so a modified object is
//! reported as [`EvidenceError::IntegrityViolation`] rather than returned.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::canonical::{self, CanonicalError};
use crate::hash::ContentHash;
use crate::policy::{EvidenceRequirement, MissingEvidenceAction, Policy};

pub const SECONDS_PER_DAY: u64 = 86_400;
pub const MAX_LABEL_LEN: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum EvidenceError {
    #[error("artefact is empty")]
    EmptyArtefact,
    #[error("artefact label exceeds {MAX_LABEL_LEN} bytes")]
    LabelTooLong,
    #[error("artefact {0} not found")]
    NotFound(ContentHash),
    #[error("integrity violation: stored bytes for {0} no longer match their hash")]
    IntegrityViolation(ContentHash),
    #[error("artefact {0} is not in the store")]
    UnknownArtefact(ContentHash),
    #[error("artefact {0} is already in the bundle")]
    DuplicateEntry(ContentHash),
    #[error("artefact reference for {hash} claims {claimed} bytes, stored object has {actual}")]
    SizeMismatch {
        hash: ContentHash,
        claimed: u64,
        actual: u64,
    },
    #[error("invalid bundle id {0:?}")]
    InvalidBundleId(String),
    #[error("bundle {0:?} not found")]
    BundleNotFound(String),
    #[error("bundle {0:?} already exists")]
    BundleExists(String),
    #[error("malformed bundle manifest: {0}")]
    MalformedManifest(#[from] CanonicalError),
    #[error("storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArtefactKind {
    ModelCard,
    SystemCard,
    DataLineage,
    RedTeamReport,
    SecurityAttestation,
    MonitoringPlan,
    LegalDeclaration,
    TestReport,
    LogAttestation,
    IncidentReport,
}

impl ArtefactKind {
    pub const ALL: [ArtefactKind; 10] = [
        ArtefactKind::ModelCard,
        ArtefactKind::SystemCard,
        ArtefactKind::DataLineage,
        ArtefactKind::RedTeamReport,
        ArtefactKind::SecurityAttestation,
        ArtefactKind::MonitoringPlan,
        ArtefactKind::LegalDeclaration,
        ArtefactKind::TestReport,
        ArtefactKind::LogAttestation,
        ArtefactKind::IncidentReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtefactKind::ModelCard => "ModelCard",
            ArtefactKind::SystemCard => "SystemCard",
            ArtefactKind::DataLineage => "DataLineage",
            ArtefactKind::RedTeamReport => "RedTeamReport",
            ArtefactKind::SecurityAttestation => "SecurityAttestation",
            ArtefactKind::MonitoringPlan => "MonitoringPlan",
            ArtefactKind::LegalDeclaration => "LegalDeclaration",
            ArtefactKind::TestReport => "TestReport",
            ArtefactKind::LogAttestation => "LogAttestation",
            ArtefactKind::IncidentReport => "IncidentReport",
        }
    }
}

impl fmt::Display for ArtefactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtefactKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtefactKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown artefact kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtefactRef {
    pub content_hash: ContentHash,
    pub kind: ArtefactKind,
    /// UTC seconds since the epoch.
    pub timestamp: u64,
    pub size_bytes: u64,
    pub label: String,
}

/// Raw byte storage keyed by content hash. Implementations store and return
/// bytes verbatim; verification happens in [`get_artefact`].
pub trait ObjectStore {
    /// Returns `true` if the object was newly written.
    fn write_object(&self, hash: &ContentHash, bytes: &[u8]) -> Result<bool, EvidenceError>;
    fn read_object(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, EvidenceError>;
    fn contains(&self, hash: &ContentHash) -> Result<bool, EvidenceError>;
    fn object_count(&self) -> Result<usize, EvidenceError>;
}

impl<S: ObjectStore + ?Sized> ObjectStore for &S {
    fn write_object(&self, hash: &ContentHash, bytes: &[u8]) -> Result<bool, EvidenceError> {
        (**self).write_object(hash, bytes)
    }
    fn read_object(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, EvidenceError> {
        (**self).read_object(hash)
    }
    fn contains(&self, hash: &ContentHash) -> Result<bool, EvidenceError> {
        (**self).contains(hash)
    }
    fn object_count(&self) -> Result<usize, EvidenceError> {
        (**self).object_count()
    }
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    objects: RwLock<BTreeMap<ContentHash, Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    #[cfg(test)]
    pub(crate) fn corrupt(&self, hash: &ContentHash, index: usize) {
        let mut objects = self.objects.write().unwrap();
        objects.get_mut(hash).unwrap()[index] ^= 0x01;
    }
}

impl ObjectStore for MemoryStore {
    fn write_object(&self, hash: &ContentHash, bytes: &[u8]) -> Result<bool, EvidenceError> {
        let mut objects = self.objects.write().expect("object store lock poisoned");
        if objects.contains_key(hash) {
            return Ok(false);
        }
        objects.insert(*hash, bytes.to_vec());
        Ok(true)
    }

    fn read_object(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, EvidenceError> {
        Ok(self.objects.read().expect("object store lock poisoned").get(hash).cloned())
    }

    fn contains(&self, hash: &ContentHash) -> Result<bool, EvidenceError> {
        Ok(self.objects.read().expect("object store lock poisoned").contains_key(hash))
    }

    fn object_count(&self) -> Result<usize, EvidenceError> {
        Ok(self.objects.read().expect("object store lock poisoned").len())
    }
}

/// Flat sharded object directory: `<root>/<hh>/<remaining 62 hex>`.
#[derive(Debug, Clone)]
pub struct FsStore {
    root: PathBuf,
}

impl FsStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn object_path(&self, hash: &ContentHash) -> PathBuf {
        let hex = hash.to_hex();
        self.root.join(&hex[..2]).join(&hex[2..])
    }
}

impl ObjectStore for FsStore {
    fn write_object(&self, hash: &ContentHash, bytes: &[u8]) -> Result<bool, EvidenceError> {
        let path = self.object_path(hash);
        if path.exists() {
            return Ok(false);
        }
        let dir = path.parent().expect("object paths have a shard directory");
        fs::create_dir_all(dir)?;
        // Write-then-rename so concurrent writers of the same content never
        // expose a partial object.
        let tmp = dir.join(format!(".tmp-{}-{}", std::process::id(), &hash.to_hex()[2..18]));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(true)
    }

    fn read_object(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, EvidenceError> {
        match fs::read(self.object_path(hash)) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn contains(&self, hash: &ContentHash) -> Result<bool, EvidenceError> {
        Ok(self.object_path(hash).is_file())
    }

    fn object_count(&self) -> Result<usize, EvidenceError> {
        let shards = match fs::read_dir(&self.root) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(e.into()),
        };
        let mut count = 0;
        for shard in shards {
            let shard = shard?;
            if shard.file_type()?.is_dir() {
                count += fs::read_dir(shard.path())?
                    .filter_map(Result::ok)
                    .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
                    .count();
            }
        }
        Ok(count)
    }
}

/// Stores `bytes` under their SHA-256. Storing identical bytes twice yields
/// the same hash and a single object.
pub fn put_artefact<S: ObjectStore + ?Sized>(
    store: &S,
    bytes: &[u8],
    kind: ArtefactKind,
    timestamp: u64,
    label: &str,
) -> Result<ArtefactRef, EvidenceError> {
    if bytes.is_empty() {
        return Err(EvidenceError::EmptyArtefact);
    }
    if label.len() > MAX_LABEL_LEN {
        return Err(EvidenceError::LabelTooLong);
    }
    let hash = ContentHash::of(bytes);
    store.write_object(&hash, bytes)?;
    Ok(ArtefactRef {
        content_hash: hash,
        kind,
        timestamp,
        size_bytes: bytes.len() as u64,
        label: label.to_owned(),
    })
}

/// Reads an object and re-verifies its hash.
pub fn get_artefact<S: ObjectStore + ?Sized>(store: &S, hash: &ContentHash) -> Result<Vec<u8>, EvidenceError> {
    let bytes = store.read_object(hash)?.ok_or(EvidenceError::NotFound(*hash))?;
    if ContentHash::of(&bytes) != *hash {
        return Err(EvidenceError::IntegrityViolation(*hash));
    }
    Ok(bytes)
}

/// Append-only, ordered collection of artefact references for one deployment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceBundle {
    bundle_id: String,
    deployment_id: String,
    entries: Vec<ArtefactRef>,
}

pub(crate) fn valid_bundle_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

impl EvidenceBundle {
    pub fn new(bundle_id: impl Into<String>, deployment_id: impl Into<String>) -> Result<Self, EvidenceError> {
        let bundle_id = bundle_id.into();
        if !valid_bundle_id(&bundle_id) {
            return Err(EvidenceError::InvalidBundleId(bundle_id));
        }
        Ok(Self {
            bundle_id,
            deployment_id: deployment_id.into(),
            entries: Vec::new(),
        })
    }

    pub fn bundle_id(&self) -> &str {
        &self.bundle_id
    }

    pub fn deployment_id(&self) -> &str {
        &self.deployment_id
    }

    pub fn entries(&self) -> &[ArtefactRef] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The manifest: canonical encoding of the whole bundle. Its SHA-256 is
    /// the bundle fingerprint.
    pub fn manifest_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("bundles contain only encodable values")
    }

    pub fn from_manifest(bytes: &[u8]) -> Result<Self, EvidenceError> {
        let bundle: EvidenceBundle = canonical::from_canonical_slice(bytes)?;
        Self::from_parts(&bundle.bundle_id, &bundle.deployment_id, bundle.entries)
    }

    /// Rebuilds a bundle from recorded parts without consulting a store.
    pub fn from_parts(bundle_id: &str, deployment_id: &str, entries: Vec<ArtefactRef>) -> Result<Self, EvidenceError> {
        let mut bundle = Self::new(bundle_id, deployment_id)?;
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.content_hash) {
                return Err(EvidenceError::DuplicateEntry(e.content_hash));
            }
        }
        bundle.entries = entries;
        Ok(bundle)
    }
}

/// Appends `artefact` after checking that its object exists, is intact and
/// has the claimed size, and that the bundle does not already hold it.
pub fn append_to_bundle<S: ObjectStore + ?Sized>(
    bundle: &mut EvidenceBundle,
    store: &S,
    artefact: ArtefactRef,
) -> Result<(), EvidenceError> {
    if bundle.entries.iter().any(|e| e.content_hash == artefact.content_hash) {
        return Err(EvidenceError::DuplicateEntry(artefact.content_hash));
    }
    let bytes = match get_artefact(store, &artefact.content_hash) {
        Ok(b) => b,
        Err(EvidenceError::NotFound(h)) => return Err(EvidenceError::UnknownArtefact(h)),
        Err(e) => return Err(e),
    };
    if bytes.len() as u64 != artefact.size_bytes {
        return Err(EvidenceError::SizeMismatch {
            hash: artefact.content_hash,
            claimed: artefact.size_bytes,
            actual: bytes.len() as u64,
        });
    }
    bundle.entries.push(artefact);
    Ok(())
}

/// SHA-256 of the bundle manifest. Changes whenever an entry is added,
/// altered or reordered.
pub fn bundle_fingerprint(bundle: &EvidenceBundle) -> ContentHash {
    ContentHash::of(&bundle.manifest_bytes())
}

/// Re-reads every entry, failing on the first missing or tampered object.
pub fn verify_bundle<S: ObjectStore + ?Sized>(bundle: &EvidenceBundle, store: &S) -> Result<(), EvidenceError> {
    for e in &bundle.entries {
        get_artefact(store, &e.content_hash)?;
    }
    Ok(())
}

/// Manifest files under `<root>/<bundle_id>`.
#[derive(Debug, Clone)]
pub struct BundleDir {
    root: PathBuf,
}

impl BundleDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, bundle_id: &str) -> Result<PathBuf, EvidenceError> {
        if !valid_bundle_id(bundle_id) {
            return Err(EvidenceError::InvalidBundleId(bundle_id.to_owned()));
        }
        Ok(self.root.join(bundle_id))
    }

    pub fn create(&self, bundle: &EvidenceBundle) -> Result<(), EvidenceError> {
        let path = self.path(bundle.bundle_id())?;
        if path.exists() {
            return Err(EvidenceError::BundleExists(bundle.bundle_id.clone()));
        }
        self.save(bundle)
    }

    /// Overwrites the manifest. Callers hold the single-writer lock and only
    /// save bundles that grew from the stored state.
    pub fn save(&self, bundle: &EvidenceBundle) -> Result<(), EvidenceError> {
        let path = self.path(bundle.bundle_id())?;
        fs::create_dir_all(&self.root)?;
        let tmp = self.root.join(format!(".{}.tmp", bundle.bundle_id()));
        fs::write(&tmp, bundle.manifest_bytes())?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(&self, bundle_id: &str) -> Result<EvidenceBundle, EvidenceError> {
        let path = self.path(bundle_id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(EvidenceError::BundleNotFound(bundle_id.to_owned()))
            }
            Err(e) => return Err(e.into()),
        };
        let bundle = EvidenceBundle::from_manifest(&bytes)?;
        if bundle.bundle_id != bundle_id {
            return Err(EvidenceError::InvalidBundleId(bundle.bundle_id));
        }
        Ok(bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementStatus {
    pub requirement: EvidenceRequirement,
    pub found_count: u32,
    pub fresh_count: u32,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SufficiencyReport {
    pub satisfied: bool,
    pub per_requirement: Vec<RequirementStatus>,
    pub action_on_failure: MissingEvidenceAction,
}

impl SufficiencyReport {
    pub fn unsatisfied(&self) -> impl Iterator<Item = &RequirementStatus> {
        self.per_requirement.iter().filter(|r| !r.satisfied)
    }
}

/// Whether an artefact stamped at `timestamp` is within `max_age_days` of `now`.
/// Artefacts dated after `now` count as fresh.
pub fn is_fresh(timestamp: u64, now: u64, max_age_days: Option<u32>) -> bool {
    match max_age_days {
        None => true,
        Some(days) => now.saturating_sub(timestamp) <= u64::from(days) * SECONDS_PER_DAY,
    }
}

/// Counts the bundle's artefacts against each of the policy's evidence
/// requirements. Every entry is integrity-checked first.
pub fn check_sufficiency<S: ObjectStore + ?Sized>(
    bundle: &EvidenceBundle,
    policy: &Policy,
    store: &S,
    now: u64,
) -> Result<SufficiencyReport, EvidenceError> {
    verify_bundle(bundle, store)?;
    let per_requirement: Vec<RequirementStatus> = policy
        .evidence_requirements
        .iter()
        .map(|req| {
            let of_kind = bundle.entries.iter().filter(|e| e.kind == req.kind);
            let (found, fresh) = of_kind.fold((0u32, 0u32), |(found, fresh), e| {
                (found + 1, fresh + u32::from(is_fresh(e.timestamp, now, req.max_age_days)))
            });
            RequirementStatus {
                requirement: req.clone(),
                found_count: found,
                fresh_count: fresh,
                satisfied: fresh >= req.min_count,
            }
        })
        .collect();
    Ok(SufficiencyReport {
        satisfied: per_requirement.iter().all(|r| r.satisfied),
        per_requirement,
        action_on_failure: policy.missing_evidence_action,
    })
}
