//! Append-only Merkle log of certificate issuance and revocation events.
//!
//! Tree hashing follows the certificate-transparency construction (RFC 6962,
//! RFC 9162): leaves are `SHA-256(0x00 || data)`, interior nodes
//! `SHA-256(0x01 || left || right)`, and a tree of `n` leaves splits at the
//! largest power of two strictly below `n`.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::{self, CanonicalError};
use crate::certification::{
    signing_bytes, Certificate, IssuerKey, IssuerPublicKey, RevocationAction, RevocationRecord,
};
use crate::hash::ContentHash;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("leaf index {index} out of range for tree size {tree_size} (log size {log_size})")]
    IndexOutOfRange { index: u64, tree_size: u64, log_size: u64 },
    #[error("sizes {old_size}..{new_size} out of range (log size {log_size})")]
    SizeOutOfRange { old_size: u64, new_size: u64, log_size: u64 },
    #[error("invalid log entry: {0}")]
    InvalidEntry(String),
    #[error("corrupt log: {0}")]
    Corrupt(String),
    #[error("storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
}

impl From<CanonicalError> for LogError {
    fn from(e: CanonicalError) -> Self {
        LogError::InvalidEntry(e.to_string())
    }
}

pub mod merkle {
    //! Tree hashing, proofs and proof verification over leaf hashes.

    use crate::hash::ContentHash;

    pub fn leaf_hash(data: &[u8]) -> ContentHash {
        ContentHash::of_parts(&[&[0x00], data])
    }

    pub fn node_hash(left: &ContentHash, right: &ContentHash) -> ContentHash {
        ContentHash::of_parts(&[&[0x01], left.as_bytes(), right.as_bytes()])
    }

    pub fn empty_root() -> ContentHash {
        ContentHash::of(b"")
    }

    /// Largest power of two strictly less than `n` (n >= 2).
    fn split(n: usize) -> usize {
        debug_assert!(n >= 2);
        1 << (usize::BITS - 1 - (n - 1).leading_zeros())
    }

    /// Batch tree hash over already-hashed leaves.
    pub fn root(leaves: &[ContentHash]) -> ContentHash {
        match leaves.len() {
            0 => empty_root(),
            1 => leaves[0],
            n => {
                let k = split(n);
                node_hash(&root(&leaves[..k]), &root(&leaves[k..]))
            }
        }
    }

    /// Audit path for leaf `m` of `leaves` (m < leaves.len()).
    pub fn inclusion_path(m: usize, leaves: &[ContentHash]) -> Vec<ContentHash> {
        let n = leaves.len();
        if n <= 1 {
            return Vec::new();
        }
        let k = split(n);
        if m < k {
            let mut path = inclusion_path(m, &leaves[..k]);
            path.push(root(&leaves[k..]));
            path
        } else {
            let mut path = inclusion_path(m - k, &leaves[k..]);
            path.push(root(&leaves[..k]));
            path
        }
    }

    /// Consistency path between the first `m` leaves and all of `leaves`
    /// (0 < m <= leaves.len()).
    pub fn consistency_path(m: usize, leaves: &[ContentHash]) -> Vec<ContentHash> {
        fn subproof(m: usize, leaves: &[ContentHash], complete: bool) -> Vec<ContentHash> {
            let n = leaves.len();
            if m == n {
                return if complete { Vec::new() } else { vec![root(leaves)] };
            }
            let k = split(n);
            if m <= k {
                let mut path = subproof(m, &leaves[..k], complete);
                path.push(root(&leaves[k..]));
                path
            } else {
                let mut path = subproof(m - k, &leaves[k..], false);
                path.push(root(&leaves[..k]));
                path
            }
        }
        subproof(m, leaves, true)
    }

    fn lsb(x: u64) -> bool {
        x & 1 == 1
    }

    /// Recomputes the root from a leaf and its audit path.
    pub fn root_from_inclusion(index: u64, size: u64, leaf: &ContentHash, path: &[ContentHash]) -> Option<ContentHash> {
        if index >= size {
            return None;
        }
        let (mut f, mut s) = (index, size - 1);
        let mut r = *leaf;
        for p in path {
            if s == 0 {
                return None;
            }
            if lsb(f) || f == s {
                r = node_hash(p, &r);
                if !lsb(f) {
                    while !lsb(f) && f != 0 {
                        f >>= 1;
                        s >>= 1;
                    }
                }
            } else {
                r = node_hash(&r, p);
            }
            f >>= 1;
            s >>= 1;
        }
        (s == 0).then_some(r)
    }

    pub fn verify_consistency_path(
        old_size: u64,
        new_size: u64,
        old_root: &ContentHash,
        new_root: &ContentHash,
        path: &[ContentHash],
    ) -> bool {
        if old_size > new_size {
            return false;
        }
        if old_size == new_size {
            return path.is_empty() && old_root == new_root;
        }
        if old_size == 0 {
            return path.is_empty() && *old_root == empty_root();
        }
        if path.is_empty() {
            return false;
        }
        let mut nodes = Vec::with_capacity(path.len() + 1);
        if old_size.is_power_of_two() {
            nodes.push(*old_root);
        }
        nodes.extend_from_slice(path);
        let (mut f, mut s) = (old_size - 1, new_size - 1);
        while lsb(f) {
            f >>= 1;
            s >>= 1;
        }
        let (mut fr, mut sr) = (nodes[0], nodes[0]);
        for c in &nodes[1..] {
            if s == 0 {
                return false;
            }
            if lsb(f) || f == s {
                fr = node_hash(c, &fr);
                sr = node_hash(c, &sr);
                if !lsb(f) {
                    while !lsb(f) && f != 0 {
                        f >>= 1;
                        s >>= 1;
                    }
                }
            } else {
                sr = node_hash(&sr, c);
            }
            f >>= 1;
            s >>= 1;
        }
        s == 0 && fr == *old_root && sr == *new_root
    }

    /// Incrementally maintained root: one perfect subtree hash per set bit of
    /// the leaf count, largest first.
    #[derive(Debug, Clone, Default)]
    pub struct CompactRange {
        size: u64,
        peaks: Vec<(u64, ContentHash)>,
    }

    impl CompactRange {
        pub fn new() -> Self {
            Self::default()
        }

        pub fn size(&self) -> u64 {
            self.size
        }

        pub fn push(&mut self, leaf: ContentHash) {
            let mut node = (1u64, leaf);
            while let Some(&(width, left)) = self.peaks.last() {
                if width != node.0 {
                    break;
                }
                self.peaks.pop();
                node = (width * 2, node_hash(&left, &node.1));
            }
            self.peaks.push(node);
            self.size += 1;
        }

        pub fn root(&self) -> ContentHash {
            let mut iter = self.peaks.iter().rev();
            let Some(&(_, mut acc)) = iter.next() else {
                return empty_root();
            };
            for (_, peak) in iter {
                acc = node_hash(peak, &acc);
            }
            acc
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntryType {
    Issuance,
    RevocationEvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Payload {
    Issuance(Certificate),
    Revocation(RevocationRecord),
}

/// One log leaf. The leaf hash covers the canonical payload bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    entry_type: EntryType,
    payload: Vec<u8>,
    leaf_hash: ContentHash,
    parsed: Payload,
}

/// On-disk and over-the-wire shape of an entry.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryRecord {
    entry_type: EntryType,
    payload: Value,
}

#[derive(Serialize)]
struct EntryView<'a> {
    entry_type: EntryType,
    payload: Value,
    leaf_hash: &'a ContentHash,
}

impl LogEntry {
    pub fn issuance(cert: &Certificate) -> Self {
        Self::build(EntryType::Issuance, cert.to_canonical_bytes(), Payload::Issuance(cert.clone()))
    }

    pub fn revocation(record: &RevocationRecord) -> Self {
        Self::build(
            EntryType::RevocationEvent,
            record.to_canonical_bytes(),
            Payload::Revocation(record.clone()),
        )
    }

    /// Parses raw payload bytes, which must be the canonical encoding of a
    /// value of the declared type.
    pub fn from_payload(entry_type: EntryType, payload: Vec<u8>) -> Result<Self, LogError> {
        let parsed = match entry_type {
            EntryType::Issuance => Payload::Issuance(Certificate::from_canonical_bytes(&payload)?),
            EntryType::RevocationEvent => Payload::Revocation(RevocationRecord::from_canonical_bytes(&payload)?),
        };
        Ok(Self::build(entry_type, payload, parsed))
    }

    fn build(entry_type: EntryType, payload: Vec<u8>, parsed: Payload) -> Self {
        Self {
            entry_type,
            leaf_hash: merkle::leaf_hash(&payload),
            payload,
            parsed,
        }
    }

    pub fn entry_type(&self) -> EntryType {
        self.entry_type
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn leaf_hash(&self) -> ContentHash {
        self.leaf_hash
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match &self.parsed {
            Payload::Issuance(c) => Some(c),
            Payload::Revocation(_) => None,
        }
    }

    pub fn revocation_record(&self) -> Option<&RevocationRecord> {
        match &self.parsed {
            Payload::Revocation(r) => Some(r),
            Payload::Issuance(_) => None,
        }
    }

    fn certificate_id(&self) -> &str {
        match &self.parsed {
            Payload::Issuance(c) => &c.certificate_id,
            Payload::Revocation(r) => &r.certificate_id,
        }
    }

    /// `{"entry_type", "payload"}` in canonical form: one record of the log file.
    pub fn record_bytes(&self) -> Vec<u8> {
        let record = EntryRecord {
            entry_type: self.entry_type,
            payload: canonical::parse(&self.payload).expect("payload was validated on construction"),
        };
        canonical::to_canonical_bytes(&record).expect("entries are encodable")
    }

    pub fn from_record_bytes(bytes: &[u8]) -> Result<Self, LogError> {
        let record: EntryRecord = canonical::from_canonical_slice(bytes)?;
        Self::from_payload(record.entry_type, canonical::canonicalize(&record.payload)?)
    }
}

impl Serialize for LogEntry {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EntryView {
            entry_type: self.entry_type,
            payload: canonical::parse(&self.payload).map_err(serde::ser::Error::custom)?,
            leaf_hash: &self.leaf_hash,
        }
        .serialize(serializer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignedTreeHead {
    pub tree_size: u64,
    pub root_hash: ContentHash,
    pub timestamp: u64,
    pub signature: String,
}

impl SignedTreeHead {
    pub fn sign(tree_size: u64, root_hash: ContentHash, timestamp: u64, key: &IssuerKey) -> Self {
        let mut sth = Self {
            tree_size,
            root_hash,
            timestamp,
            signature: String::new(),
        };
        sth.signature = key.sign_hex(&signing_bytes(&sth).expect("tree heads are encodable"));
        sth
    }

    pub fn verify_signature(&self, key: &IssuerPublicKey) -> bool {
        signing_bytes(self).is_ok_and(|bytes| key.verify_hex(&bytes, &self.signature))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionProof {
    pub leaf_index: u64,
    pub tree_size: u64,
    pub audit_path: Vec<ContentHash>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyProof {
    pub old_size: u64,
    pub new_size: u64,
    pub path: Vec<ContentHash>,
}

/// True iff the proof leads from `leaf_hash` to the root of `sth`, for the
/// same tree size. The signature on `sth` is not checked here.
pub fn verify_inclusion(proof: &InclusionProof, leaf_hash: &ContentHash, sth: &SignedTreeHead) -> bool {
    proof.tree_size == sth.tree_size
        && merkle::root_from_inclusion(proof.leaf_index, proof.tree_size, leaf_hash, &proof.audit_path)
            == Some(sth.root_hash)
}

pub fn verify_consistency(proof: &ConsistencyProof, old: &SignedTreeHead, new: &SignedTreeHead) -> bool {
    proof.old_size == old.tree_size
        && proof.new_size == new.tree_size
        && merkle::verify_consistency_path(old.tree_size, new.tree_size, &old.root_hash, &new.root_hash, &proof.path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CertificateStatus {
    Active,
    Suspended,
    Revoked,
    Expired,
    Unknown,
}

impl CertificateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CertificateStatus::Active => "ACTIVE",
            CertificateStatus::Suspended => "SUSPENDED",
            CertificateStatus::Revoked => "REVOKED",
            CertificateStatus::Expired => "EXPIRED",
            CertificateStatus::Unknown => "UNKNOWN",
        }
    }
}

impl std::fmt::Display for CertificateStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lifecycle events relevant to status replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatusEvent {
    Issuance { expires_at: u64 },
    Revocation(RevocationAction),
}

/// Replays events in order. REVOKE is absorbing; SUSPEND and REINSTATE only
/// act on an issued certificate; a repeated issuance does not lift a
/// suspension. Expiry comes from the first issuance.
pub fn replay_status(events: impl IntoIterator<Item = StatusEvent>, now: u64) -> CertificateStatus {
    use CertificateStatus::*;
    let mut state = Unknown;
    let mut expires_at = None;
    for event in events {
        state = match (state, event) {
            (Revoked, _) => Revoked,
            (_, StatusEvent::Revocation(RevocationAction::Revoke)) => Revoked,
            (Unknown, StatusEvent::Issuance { expires_at: e }) => {
                expires_at = Some(e);
                Active
            }
            (s, StatusEvent::Issuance { .. }) => s,
            (Unknown, StatusEvent::Revocation(_)) => Unknown,
            (_, StatusEvent::Revocation(RevocationAction::Suspend)) => Suspended,
            (_, StatusEvent::Revocation(RevocationAction::Reinstate)) => Active,
        };
    }
    match (state, expires_at) {
        (Active | Suspended, Some(e)) if now >= e => Expired,
        (s, _) => s,
    }
}

const ENTRIES_FILE: &str = "entries.log";
const STH_FILE: &str = "sth.json";

/// The log: entries, an incrementally maintained root, and the latest signed
/// tree head. When opened from a directory every append is persisted before
/// it becomes visible.
#[derive(Debug, Clone, Default)]
pub struct TransparencyLog {
    entries: Vec<LogEntry>,
    leaves: Vec<ContentHash>,
    compact: merkle::CompactRange,
    sth: Option<SignedTreeHead>,
    dir: Option<PathBuf>,
}

impl TransparencyLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a persisted log, re-deriving every leaf and checking the stored
    /// tree head against the recomputed root of its prefix.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LogError> {
        let dir = dir.into();
        let mut log = Self::new();
        match fs::read(dir.join(ENTRIES_FILE)) {
            Ok(bytes) => {
                for record in split_records(&bytes)? {
                    log.push(LogEntry::from_record_bytes(record)?);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        match fs::read(dir.join(STH_FILE)) {
            Ok(bytes) => {
                let sth: SignedTreeHead = canonical::from_canonical_slice(&bytes)
                    .map_err(|e| LogError::Corrupt(format!("{STH_FILE}: {e}")))?;
                if sth.tree_size > log.size() || merkle::root(&log.leaves[..sth.tree_size as usize]) != sth.root_hash {
                    return Err(LogError::Corrupt(format!(
                        "{STH_FILE} does not match the first {} entries",
                        sth.tree_size
                    )));
                }
                log.sth = Some(sth);
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        log.dir = Some(dir);
        Ok(log)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn size(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn entry(&self, index: u64) -> Option<&LogEntry> {
        self.entries.get(usize::try_from(index).ok()?)
    }

    pub fn leaf_hash(&self, index: u64) -> ContentHash {
        self.leaves[index as usize]
    }

    /// Root of the whole log, maintained incrementally.
    pub fn root(&self) -> ContentHash {
        self.compact.root()
    }

    /// Root of the first `size` leaves, recomputed from scratch.
    pub fn root_at(&self, size: u64) -> Result<ContentHash, LogError> {
        if size > self.size() {
            return Err(LogError::SizeOutOfRange {
                old_size: size,
                new_size: size,
                log_size: self.size(),
            });
        }
        Ok(merkle::root(&self.leaves[..size as usize]))
    }

    pub fn latest_sth(&self) -> Option<&SignedTreeHead> {
        self.sth.as_ref()
    }

    fn push(&mut self, entry: LogEntry) {
        self.leaves.push(entry.leaf_hash);
        self.compact.push(entry.leaf_hash);
        self.entries.push(entry);
    }

    /// Appends one entry and signs a tree head covering it.
    pub fn append_entry(
        &mut self,
        entry: LogEntry,
        key: &IssuerKey,
        timestamp: u64,
    ) -> Result<(u64, SignedTreeHead), LogError> {
        let index = self.size();
        let mut next = self.compact.clone();
        next.push(entry.leaf_hash);
        let sth = SignedTreeHead::sign(index + 1, next.root(), timestamp, key);
        if let Some(dir) = &self.dir {
            fs::create_dir_all(dir)?;
            let record = entry.record_bytes();
            let len = u32::try_from(record.len()).map_err(|_| LogError::InvalidEntry("entry exceeds 4 GiB".into()))?;
            let mut file = OpenOptions::new().create(true).append(true).open(dir.join(ENTRIES_FILE))?;
            file.write_all(&len.to_be_bytes())?;
            file.write_all(&record)?;
            file.sync_all()?;
            let tmp = dir.join(format!(".{STH_FILE}.tmp"));
            let mut f = File::create(&tmp)?;
            f.write_all(&canonical::to_canonical_bytes(&sth)?)?;
            f.sync_all()?;
            fs::rename(tmp, dir.join(STH_FILE))?;
        }
        self.push(entry);
        self.sth = Some(sth.clone());
        Ok((index, sth))
    }

    pub fn prove_inclusion(&self, leaf_index: u64, tree_size: u64) -> Result<InclusionProof, LogError> {
        if leaf_index >= tree_size || tree_size > self.size() {
            return Err(LogError::IndexOutOfRange {
                index: leaf_index,
                tree_size,
                log_size: self.size(),
            });
        }
        Ok(InclusionProof {
            leaf_index,
            tree_size,
            audit_path: merkle::inclusion_path(leaf_index as usize, &self.leaves[..tree_size as usize]),
        })
    }

    pub fn prove_consistency(&self, old_size: u64, new_size: u64) -> Result<ConsistencyProof, LogError> {
        if old_size == 0 || old_size > new_size || new_size > self.size() {
            return Err(LogError::SizeOutOfRange {
                old_size,
                new_size,
                log_size: self.size(),
            });
        }
        Ok(ConsistencyProof {
            old_size,
            new_size,
            path: merkle::consistency_path(old_size as usize, &self.leaves[..new_size as usize]),
        })
    }

    /// Index of the ISSUANCE entry carrying exactly this certificate.
    pub fn find_issuance(&self, cert: &Certificate) -> Option<u64> {
        self.entries
            .iter()
            .position(|e| e.certificate() == Some(cert))
            .map(|i| i as u64)
    }

    pub fn find_certificate(&self, certificate_id: &str) -> Option<&Certificate> {
        self.entries
            .iter()
            .filter_map(LogEntry::certificate)
            .find(|c| c.certificate_id == certificate_id)
    }

    pub fn certificate_status(&self, certificate_id: &str, now: u64) -> CertificateStatus {
        let events = self
            .entries
            .iter()
            .filter(|e| e.certificate_id() == certificate_id)
            .map(|e| match &e.parsed {
                Payload::Issuance(c) => StatusEvent::Issuance { expires_at: c.expires_at },
                Payload::Revocation(r) => StatusEvent::Revocation(r.action),
            });
        replay_status(events, now)
    }
}

fn split_records(mut bytes: &[u8]) -> Result<Vec<&[u8]>, LogError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(LogError::Corrupt(format!("truncated length prefix after record {}", out.len())));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().expect("four bytes")) as usize;
        let rest = &bytes[4..];
        if rest.len() < len {
            return Err(LogError::Corrupt(format!("truncated record {}", out.len())));
        }
        out.push(&rest[..len]);
        bytes = &rest[len..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::merkle::*;
    use super::*;
    use crate::certification::tests::{approved_package, test_key, NOW};
    use crate::certification::{issue_certificate, revoke_certificate, RevocationReason};

    fn leaves(n: usize) -> Vec<ContentHash> {
        (0..n).map(|i| leaf_hash(format!("leaf-{i}").as_bytes())).collect()
    }

    #[test]
    fn empty_root_is_hash_of_nothing() {
        assert_eq!(
            empty_root().to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(CompactRange::new().root(), empty_root());
    }

    #[test]
    fn compact_range_matches_batch() {
        let all = leaves(70);
        let mut c = CompactRange::new();
        for (i, leaf) in all.iter().enumerate() {
            c.push(*leaf);
            assert_eq!(c.root(), root(&all[..=i]), "size {}", i + 1);
        }
    }

    #[test]
    fn inclusion_round_trip_and_sensitivity() {
        let all = leaves(13);
        let r = root(&all);
        for m in 0..13 {
            let path = inclusion_path(m, &all);
            assert_eq!(root_from_inclusion(m as u64, 13, &all[m], &path), Some(r));
            if let Some(first) = path.first() {
                let mut bad = path.clone();
                bad[0] = ContentHash::of(first.as_bytes());
                assert_ne!(root_from_inclusion(m as u64, 13, &all[m], &bad), Some(r));
            }
        }
        assert_eq!(root_from_inclusion(0, 1, &all[0], &[]), Some(all[0]));
        assert_eq!(root_from_inclusion(1, 1, &all[0], &[]), None);
    }

    #[test]
    fn consistency_round_trip() {
        let all = leaves(20);
        for new in 1..=20 {
            for old in 1..=new {
                let path = consistency_path(old, &all[..new]);
                assert!(
                    verify_consistency_path(old as u64, new as u64, &root(&all[..old]), &root(&all[..new]), &path),
                    "{old}->{new}"
                );
            }
        }
        assert!(consistency_path(5, &all[..5]).is_empty());
    }

    #[test]
    fn status_replay_rules() {
        use CertificateStatus::*;
        use RevocationAction::*;
        let iss = StatusEvent::Issuance { expires_at: 100 };
        let rev = StatusEvent::Revocation;
        assert_eq!(replay_status([], 0), Unknown);
        assert_eq!(replay_status([iss], 0), Active);
        assert_eq!(replay_status([iss], 100), Expired);
        assert_eq!(replay_status([iss, rev(Suspend)], 0), Suspended);
        assert_eq!(replay_status([iss, rev(Suspend)], 100), Expired);
        assert_eq!(
            replay_status([iss, rev(Suspend), rev(Reinstate), rev(Revoke), rev(Reinstate)], 0),
            Revoked
        );
        assert_eq!(replay_status([iss, rev(Revoke)], 1000), Revoked);
    }

    fn signed_cert(days: u32) -> Certificate {
        let (pkg, _) = approved_package(9000);
        issue_certificate(&pkg, &test_key(1), days, NOW).unwrap()
    }

    #[test]
    fn append_proves_and_resolves_status() {
        let key = test_key(1);
        let mut log = TransparencyLog::new();
        assert!(log.latest_sth().is_none());
        let cert = signed_cert(365);
        let (index, sth) = log.append_entry(LogEntry::issuance(&cert), &key, NOW).unwrap();
        assert_eq!((index, sth.tree_size), (0, 1));
        assert_eq!(sth.root_hash, leaf_hash(&cert.to_canonical_bytes()));
        assert!(sth.verify_signature(&key.public()));
        assert!(!sth.verify_signature(&test_key(2).public()));
        assert_eq!(log.certificate_status(&cert.certificate_id, NOW), CertificateStatus::Active);

        for action in [RevocationAction::Suspend, RevocationAction::Reinstate] {
            let r = revoke_certificate(&cert.certificate_id, action, RevocationReason::PolicyUpdate, &key, NOW + 1).unwrap();
            log.append_entry(LogEntry::revocation(&r), &key, NOW + 1).unwrap();
        }
        assert_eq!(log.certificate_status(&cert.certificate_id, NOW + 2), CertificateStatus::Active);
        assert_eq!(log.certificate_status("cert-none", NOW), CertificateStatus::Unknown);

        let sth = log.latest_sth().unwrap().clone();
        assert_eq!(sth.tree_size, 3);
        assert_eq!(log.root(), log.root_at(3).unwrap());
        let proof = log.prove_inclusion(0, 3).unwrap();
        assert!(verify_inclusion(&proof, &log.leaf_hash(0), &sth));
        let short = log.prove_inclusion(0, 2).unwrap();
        assert!(!verify_inclusion(&short, &log.leaf_hash(0), &sth));
        assert!(matches!(log.prove_inclusion(3, 3), Err(LogError::IndexOutOfRange { .. })));
        assert!(matches!(log.prove_consistency(0, 3), Err(LogError::SizeOutOfRange { .. })));
        assert!(matches!(log.prove_consistency(2, 4), Err(LogError::SizeOutOfRange { .. })));
        assert_eq!(log.find_issuance(&cert), Some(0));
    }

    #[test]
    fn persisted_log_reopens_identically() {
        let dir = tempfile::tempdir().unwrap();
        let key = test_key(1);
        let cert = signed_cert(30);
        let mut log = TransparencyLog::open(dir.path().join("log")).unwrap();
        log.append_entry(LogEntry::issuance(&cert), &key, NOW).unwrap();
        let r = revoke_certificate(&cert.certificate_id, RevocationAction::Revoke, RevocationReason::MaterialIncident, &key, NOW).unwrap();
        log.append_entry(LogEntry::revocation(&r), &key, NOW + 5).unwrap();

        let again = TransparencyLog::open(dir.path().join("log")).unwrap();
        assert_eq!(again.size(), 2);
        assert_eq!(again.root(), log.root());
        assert_eq!(again.latest_sth(), log.latest_sth());
        assert_eq!(again.certificate_status(&cert.certificate_id, NOW), CertificateStatus::Revoked);

        let path = dir.path().join("log").join(ENTRIES_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(TransparencyLog::open(dir.path().join("log")), Err(LogError::Corrupt(_))));
    }

    #[test]
    fn entry_records_round_trip() {
        let cert = signed_cert(30);
        let e = LogEntry::issuance(&cert);
        let back = LogEntry::from_record_bytes(&e.record_bytes()).unwrap();
        assert_eq!(back, e);
        assert!(LogEntry::from_payload(EntryType::RevocationEvent, cert.to_canonical_bytes()).is_err());
        let view = canonical::to_canonical_bytes(&e).unwrap();
        assert!(String::from_utf8(view).unwrap().contains("\"leaf_hash\""));
    }
}
