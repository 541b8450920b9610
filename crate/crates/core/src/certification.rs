//! Audit packages, signed certificates and revocation records.
//!
//! Certificates and revocation records are signed with Ed25519 over the
//! canonical encoding of every field except `signature`, which is left out
//! of the signed bytes entirely.

use std::fs;
use std::path::{Path, PathBuf};

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canonical::{self, CanonicalError};
use crate::decision::{Condition, Decision, Outcome};
use crate::evidence::{bundle_fingerprint, ArtefactRef, EvidenceBundle, EvidenceError};
use crate::hash::{decode_lower_hex, ContentHash};
use crate::model::{DeploymentDescriptor, ScoreVector};
use crate::policy::{policy_fingerprint, Policy};
use crate::translog::{CertificateStatus, TransparencyLog};

pub const SECONDS_PER_DAY: u64 = crate::evidence::SECONDS_PER_DAY;

#[derive(Debug, thiserror::Error)]
pub enum CertError {
    #[error("refusing to certify a DENIED decision")]
    DeniedDeployment,
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error("validity must be at least one day")]
    InvalidValidity,
    #[error("hash mismatch: {0}")]
    HashMismatch(String),
    #[error(transparent)]
    Encoding(#[from] CanonicalError),
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
}

/// Ed25519 signing key held by the issuing authority.
#[derive(Clone)]
pub struct IssuerKey {
    signing: SigningKey,
}

impl std::fmt::Debug for IssuerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IssuerKey").field("key_id", &self.key_id()).finish_non_exhaustive()
    }
}

impl IssuerKey {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    /// Parses a private key file: 64 lowercase hex characters.
    pub fn from_hex(text: &str) -> Result<Self, CertError> {
        decode_lower_hex::<32>(text.trim())
            .map(Self::from_seed)
            .ok_or_else(|| CertError::InvalidKey("private key must be 64 lowercase hex characters".into()))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.signing.to_bytes())
    }

    pub fn public(&self) -> IssuerPublicKey {
        IssuerPublicKey {
            verifying: self.signing.verifying_key(),
        }
    }

    pub fn key_id(&self) -> String {
        self.public().key_id()
    }

    pub(crate) fn sign_hex(&self, message: &[u8]) -> String {
        hex::encode(self.signing.sign(message).to_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssuerPublicKey {
    verifying: VerifyingKey,
}

impl IssuerPublicKey {
    /// Parses a public key file: 64 lowercase hex characters.
    pub fn from_hex(text: &str) -> Result<Self, CertError> {
        let bytes = decode_lower_hex::<32>(text.trim())
            .ok_or_else(|| CertError::InvalidKey("public key must be 64 lowercase hex characters".into()))?;
        VerifyingKey::from_bytes(&bytes)
            .map(|verifying| Self { verifying })
            .map_err(|e| CertError::InvalidKey(e.to_string()))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.verifying.to_bytes())
    }

    /// First 16 hex characters of the SHA-256 of the raw public key.
    pub fn key_id(&self) -> String {
        ContentHash::of(self.verifying.as_bytes()).to_hex()[..16].to_owned()
    }

    /// Strict verification of a lowercase-hex signature.
    pub fn verify_hex(&self, message: &[u8], signature_hex: &str) -> bool {
        let Some(bytes) = decode_lower_hex::<64>(signature_hex) else {
            return false;
        };
        self.verifying
            .verify_strict(message, &Signature::from_bytes(&bytes))
            .is_ok()
    }
}

/// Canonical bytes of `value` with its top-level `signature` field removed.
pub fn signing_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let mut v = serde_json::to_value(value).map_err(|_| CanonicalError::UnencodableValue {
        path: "$".into(),
        what: "value not representable as JSON",
    })?;
    if let Some(map) = v.as_object_mut() {
        map.remove("signature");
    }
    canonical::canonicalize(&v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentHashes {
    pub policy: ContentHash,
    pub deployment: ContentHash,
    pub manifest: ContentHash,
    pub decision: ContentHash,
}

/// The complete hashed record behind one assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditPackage {
    pub package_id: String,
    pub policy_id: String,
    pub policy_version: String,
    pub policy_fingerprint: ContentHash,
    pub deployment: DeploymentDescriptor,
    pub bundle_id: String,
    pub bundle_manifest: Vec<ArtefactRef>,
    pub bundle_fingerprint: ContentHash,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_vector: Option<ScoreVector>,
    pub decision: Decision,
    pub component_hashes: ComponentHashes,
}

fn hash_of<T: Serialize + ?Sized>(v: &T) -> ContentHash {
    canonical::canonical_hash(v).expect("domain values are encodable")
}

fn package_id(c: &ComponentHashes) -> String {
    let digest = ContentHash::of_parts(&[
        c.policy.as_bytes(),
        c.deployment.as_bytes(),
        c.manifest.as_bytes(),
        c.decision.as_bytes(),
    ]);
    format!("pkg-{}", &digest.to_hex()[..32])
}

pub fn assemble_audit_package(
    policy: &Policy,
    deployment: &DeploymentDescriptor,
    bundle: &EvidenceBundle,
    decision: &Decision,
) -> Result<AuditPackage, CertError> {
    let fingerprint = policy_fingerprint(policy);
    if decision.policy_fingerprint != fingerprint {
        return Err(CertError::HashMismatch(format!(
            "decision was made under policy {}, not {fingerprint}",
            decision.policy_fingerprint
        )));
    }
    if bundle.deployment_id() != deployment.deployment_id {
        return Err(CertError::HashMismatch(format!(
            "bundle {} belongs to deployment {:?}",
            bundle.bundle_id(),
            bundle.deployment_id()
        )));
    }
    let component_hashes = ComponentHashes {
        policy: fingerprint,
        deployment: hash_of(deployment),
        manifest: hash_of(bundle.entries()),
        decision: hash_of(decision),
    };
    let pkg = AuditPackage {
        package_id: package_id(&component_hashes),
        policy_id: policy.policy_id.clone(),
        policy_version: policy.version.to_string(),
        policy_fingerprint: fingerprint,
        deployment: deployment.clone(),
        bundle_id: bundle.bundle_id().to_owned(),
        bundle_manifest: bundle.entries().to_vec(),
        bundle_fingerprint: bundle_fingerprint(bundle),
        score_vector: decision.score_vector,
        decision: decision.clone(),
        component_hashes,
    };
    verify_audit_package(&pkg, Some(policy))?;
    Ok(pkg)
}

/// Recomputes every recorded hash in the package. With `policy` supplied,
/// also checks the package was made under exactly that policy.
pub fn verify_audit_package(pkg: &AuditPackage, policy: Option<&Policy>) -> Result<(), CertError> {
    let mut problems = Vec::new();
    let c = &pkg.component_hashes;
    if c.deployment != hash_of(&pkg.deployment) {
        problems.push("deployment component hash".to_owned());
    }
    if c.manifest != hash_of(&pkg.bundle_manifest) {
        problems.push("manifest component hash".to_owned());
    }
    if c.decision != hash_of(&pkg.decision) {
        problems.push("decision component hash".to_owned());
    }
    if c.policy != pkg.policy_fingerprint || pkg.decision.policy_fingerprint != pkg.policy_fingerprint {
        problems.push("policy fingerprint".to_owned());
    }
    if let Some(p) = policy {
        if policy_fingerprint(p) != pkg.policy_fingerprint {
            problems.push("policy does not match recorded fingerprint".to_owned());
        }
    }
    match EvidenceBundle::from_parts(&pkg.bundle_id, &pkg.deployment.deployment_id, pkg.bundle_manifest.clone()) {
        Ok(bundle) if bundle_fingerprint(&bundle) == pkg.bundle_fingerprint => {}
        _ => problems.push("bundle fingerprint".to_owned()),
    }
    if pkg.score_vector != pkg.decision.score_vector {
        problems.push("score vector differs from decision".to_owned());
    }
    if pkg.package_id != package_id(c) {
        problems.push("package id".to_owned());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CertError::HashMismatch(problems.join(", ")))
    }
}

pub fn audit_package_hash(pkg: &AuditPackage) -> ContentHash {
    hash_of(pkg)
}

/// Signed, expiring licence to operate, bound to an audit package by hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub certificate_id: String,
    pub deployment_id: String,
    pub scope_statement: String,
    pub policy_id: String,
    pub policy_version: String,
    pub outcome: Outcome,
    pub conditions: Vec<Condition>,
    pub audit_package_hash: ContentHash,
    pub issued_at: u64,
    pub expires_at: u64,
    pub issuer_key_id: String,
    pub signature: String,
}

impl Certificate {
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("certificates are encodable")
    }

    /// Parses a certificate file; the bytes must be canonical.
    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CanonicalError> {
        canonical::from_canonical_slice(bytes)
    }

    pub fn file_hash(&self) -> ContentHash {
        ContentHash::of(&self.to_canonical_bytes())
    }
}

pub fn issue_certificate(
    pkg: &AuditPackage,
    key: &IssuerKey,
    validity_days: u32,
    issued_at: u64,
) -> Result<Certificate, CertError> {
    if !pkg.decision.outcome.is_approved() {
        return Err(CertError::DeniedDeployment);
    }
    if validity_days == 0 {
        return Err(CertError::InvalidValidity);
    }
    let package_hash = audit_package_hash(pkg);
    let id_digest = ContentHash::of_parts(&[package_hash.as_bytes(), &issued_at.to_be_bytes()]);
    let mut cert = Certificate {
        certificate_id: format!("cert-{}", &id_digest.to_hex()[..32]),
        deployment_id: pkg.deployment.deployment_id.clone(),
        scope_statement: pkg.deployment.scope_statement.clone(),
        policy_id: pkg.policy_id.clone(),
        policy_version: pkg.policy_version.clone(),
        outcome: pkg.decision.outcome,
        conditions: pkg.decision.conditions.clone(),
        audit_package_hash: package_hash,
        issued_at,
        expires_at: issued_at + u64::from(validity_days) * SECONDS_PER_DAY,
        issuer_key_id: key.key_id(),
        signature: String::new(),
    };
    cert.signature = key.sign_hex(&signing_bytes(&cert)?);
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub valid: bool,
    pub checks: Vec<VerificationCheck>,
}

impl VerificationReport {
    pub fn check(&self, name: &str) -> Option<&VerificationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> VerificationCheck {
    VerificationCheck {
        name: name.to_owned(),
        passed,
        detail: detail.into(),
    }
}

/// Signature and key-id check for any signed record.
fn signature_check<T: Serialize>(value: &T, key_id: &str, signature: &str, key: &IssuerPublicKey) -> VerificationCheck {
    if key_id != key.key_id() {
        return check(
            "signature",
            false,
            format!("issuer_key_id {key_id} does not match supplied key {}", key.key_id()),
        );
    }
    match signing_bytes(value) {
        Ok(bytes) if key.verify_hex(&bytes, signature) => check("signature", true, "Ed25519 signature valid"),
        Ok(_) => check("signature", false, "Ed25519 signature does not verify"),
        Err(e) => check("signature", false, e.to_string()),
    }
}

/// Runs every check the supplied material allows. Failures are reported,
/// never raised.
pub fn verify_certificate(
    cert: &Certificate,
    issuer: &IssuerPublicKey,
    pkg: Option<&AuditPackage>,
    log: Option<&TransparencyLog>,
    now: u64,
) -> VerificationReport {
    let mut checks = vec![signature_check(cert, &cert.issuer_key_id, &cert.signature, issuer)];
    checks.push(if cert.issued_at >= cert.expires_at {
        check("expiry", false, "issued_at is not before expires_at")
    } else if now < cert.expires_at {
        check("expiry", true, format!("valid until {}", cert.expires_at))
    } else {
        check("expiry", false, format!("expired at {}", cert.expires_at))
    });
    if let Some(pkg) = pkg {
        let actual = audit_package_hash(pkg);
        checks.push(if actual == cert.audit_package_hash {
            check("audit-package-hash", true, format!("package hash {actual}"))
        } else {
            check(
                "audit-package-hash",
                false,
                format!("certificate binds {}, package hashes to {actual}", cert.audit_package_hash),
            )
        });
        checks.push(match verify_audit_package(pkg, None) {
            Ok(()) => check("audit-package-integrity", true, "all component hashes recompute"),
            Err(e) => check("audit-package-integrity", false, e.to_string()),
        });
    }
    if let Some(log) = log {
        checks.push(match (log.find_issuance(cert), log.latest_sth()) {
            (Some(index), Some(sth)) if index < sth.tree_size => {
                let included = log
                    .prove_inclusion(index, sth.tree_size)
                    .is_ok_and(|proof| crate::translog::verify_inclusion(&proof, &log.leaf_hash(index), sth));
                if !sth.verify_signature(issuer) {
                    check("log-inclusion", false, "tree head signature does not verify")
                } else {
                    check("log-inclusion", included, format!("leaf {index} of tree size {}", sth.tree_size))
                }
            }
            (Some(index), _) => check("log-inclusion", false, format!("leaf {index} not covered by a signed tree head")),
            (None, _) => check("log-inclusion", false, "no ISSUANCE entry for this certificate"),
        });
        let status = log.certificate_status(&cert.certificate_id, now);
        checks.push(check("status", status == CertificateStatus::Active, status.as_str()));
    }
    VerificationReport {
        valid: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RevocationAction {
    Revoke,
    Suspend,
    Reinstate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevocationReason {
    MaterialIncident,
    EvidenceInvalid,
    ScopeChange,
    PolicyUpdate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevocationRecord {
    pub certificate_id: String,
    pub action: RevocationAction,
    pub reason: RevocationReason,
    pub timestamp: u64,
    pub issuer_key_id: String,
    pub signature: String,
}

impl RevocationRecord {
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("revocation records are encodable")
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CanonicalError> {
        canonical::from_canonical_slice(bytes)
    }

    pub fn verify(&self, issuer: &IssuerPublicKey) -> bool {
        signature_check(self, &self.issuer_key_id, &self.signature, issuer).passed
    }
}

/// Produces a signed revocation, suspension or reinstatement. It takes
/// effect once appended to the transparency log.
pub fn revoke_certificate(
    certificate_id: &str,
    action: RevocationAction,
    reason: RevocationReason,
    key: &IssuerKey,
    timestamp: u64,
) -> Result<RevocationRecord, CertError> {
    let mut record = RevocationRecord {
        certificate_id: certificate_id.to_owned(),
        action,
        reason,
        timestamp,
        issuer_key_id: key.key_id(),
        signature: String::new(),
    };
    record.signature = key.sign_hex(&signing_bytes(&record)?);
    Ok(record)
}

/// A directory of files named by the SHA-256 of their contents.
#[derive(Debug, Clone)]
pub struct ContentDir {
    root: PathBuf,
}

impl ContentDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, hash: &ContentHash) -> PathBuf {
        self.root.join(hash.to_hex())
    }

    pub fn write(&self, bytes: &[u8]) -> Result<ContentHash, std::io::Error> {
        let hash = ContentHash::of(bytes);
        let path = self.path(&hash);
        if !path.exists() {
            fs::create_dir_all(&self.root)?;
            let tmp = self.root.join(format!(".{}.tmp", hash.to_hex()));
            fs::write(&tmp, bytes)?;
            fs::rename(tmp, &path)?;
        }
        Ok(hash)
    }

    pub fn read(&self, hash: &ContentHash) -> Result<Option<Vec<u8>>, EvidenceError> {
        match fs::read(self.path(hash)) {
            Ok(bytes) if ContentHash::of(&bytes) == *hash => Ok(Some(bytes)),
            Ok(_) => Err(EvidenceError::IntegrityViolation(*hash)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Every (hash, bytes) pair, skipping temporary files.
    pub fn entries(&self) -> Result<Vec<(ContentHash, Vec<u8>)>, EvidenceError> {
        let dir = match fs::read_dir(&self.root) {
            Ok(d) => d,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut out = Vec::new();
        for entry in dir {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Ok(hash) = name.parse::<ContentHash>() else {
                continue;
            };
            out.push((hash, fs::read(entry.path())?));
        }
        out.sort_by_key(|e| e.0);
        Ok(out)
    }

    pub fn read_typed<T: DeserializeOwned>(&self, hash: &ContentHash) -> Result<Option<T>, CertError> {
        match self.read(hash) {
            Ok(Some(bytes)) => Ok(Some(canonical::from_canonical_slice(&bytes)?)),
            Ok(None) => Ok(None),
            Err(EvidenceError::StorageFailure(e)) => Err(CertError::Storage(e)),
            Err(e) => Err(CertError::HashMismatch(e.to_string())),
        }
    }
}
