//! On-disk layout of an engine home directory.
//!
//! ```text
//! objects/   artefact bytes, sharded by hash
//! bundles/   evidence bundle manifests
//! policies/  canonical policy files, named by fingerprint
//! packages/  audit packages, named by hash
//! certs/     certificates and revocation records, named by hash
//! log/       entries.log + sth.json
//! keys/      issuer.key, issuer.pub
//! ```

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use adas_core::canonical;
use adas_core::certification::{Certificate, ContentDir, IssuerKey, IssuerPublicKey, RevocationRecord};
use adas_core::evidence::{BundleDir, FsStore};
use adas_core::policy::{parse_policy, policy_fingerprint, Policy, PolicyRegistry};
use adas_core::translog::TransparencyLog;
use adas_core::ContentHash;

const SUBDIRS: [&str; 7] = ["objects", "bundles", "policies", "packages", "certs", "log", "keys"];

#[derive(Debug, Clone)]
pub struct EngineHome {
    root: PathBuf,
}

/// Exclusive hold on the home's write paths; released on drop.
pub struct WriteLock {
    _file: File,
}

impl EngineHome {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn private_key_path(&self) -> PathBuf {
        self.root.join("keys").join("issuer.key")
    }

    pub fn public_key_path(&self) -> PathBuf {
        self.root.join("keys").join("issuer.pub")
    }

    pub fn is_initialized(&self) -> bool {
        self.public_key_path().is_file()
    }

    /// Creates the layout and writes the issuer key pair.
    pub fn init(&self, key: &IssuerKey) -> Result<()> {
        if self.is_initialized() {
            bail!("{} is already initialized", self.root.display());
        }
        for d in SUBDIRS {
            fs::create_dir_all(self.root.join(d)).with_context(|| format!("creating {d}/"))?;
        }
        write_private(&self.private_key_path(), &format!("{}\n", key.to_hex()))?;
        fs::write(self.public_key_path(), format!("{}\n", key.public().to_hex()))?;
        Ok(())
    }

    pub fn require_initialized(&self) -> Result<()> {
        if !self.is_initialized() {
            bail!("{} is not an engine home (run `adas init`)", self.root.display());
        }
        Ok(())
    }

    pub fn lock(&self) -> Result<WriteLock> {
        self.require_initialized()?;
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.root.join(".lock"))?;
        file.lock().context("locking engine home")?;
        Ok(WriteLock { _file: file })
    }

    pub fn signing_key(&self) -> Result<IssuerKey> {
        let text = fs::read_to_string(self.private_key_path()).context("reading issuer private key")?;
        Ok(IssuerKey::from_hex(&text)?)
    }

    pub fn public_key(&self) -> Result<IssuerPublicKey> {
        read_public_key(&self.public_key_path())
    }

    pub fn store(&self) -> FsStore {
        FsStore::new(self.root.join("objects"))
    }

    pub fn bundles(&self) -> BundleDir {
        BundleDir::new(self.root.join("bundles"))
    }

    pub fn packages(&self) -> ContentDir {
        ContentDir::new(self.root.join("packages"))
    }

    pub fn certs(&self) -> ContentDir {
        ContentDir::new(self.root.join("certs"))
    }

    pub fn log_dir(&self) -> PathBuf {
        self.root.join("log")
    }

    pub fn log(&self) -> Result<TransparencyLog> {
        TransparencyLog::open(self.log_dir()).context("opening transparency log")
    }

    pub fn policies_dir(&self) -> PathBuf {
        self.root.join("policies")
    }

    pub fn policies(&self) -> Result<PolicyRegistry> {
        let mut reg = PolicyRegistry::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(self.policies_dir())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            let policy = parse_policy(&fs::read(&p)?).with_context(|| format!("loading {}", p.display()))?;
            reg.add(policy)?;
        }
        Ok(reg)
    }

    /// Stores a policy under its fingerprint after checking it does not
    /// clash with a registered (jurisdiction, domain, version).
    pub fn add_policy(&self, policy: Policy) -> Result<ContentHash> {
        let mut reg = self.policies()?;
        let bytes = policy.to_canonical_bytes();
        let fingerprint = policy_fingerprint(&policy);
        reg.add(policy)?;
        let path = self.policies_dir().join(format!("{fingerprint}.json"));
        let tmp = self.policies_dir().join(format!(".{fingerprint}.tmp"));
        fs::write(&tmp, bytes)?;
        fs::rename(tmp, path)?;
        Ok(fingerprint)
    }

    /// All certificates and revocation records in `certs/`.
    pub fn cert_files(&self) -> Result<(Vec<Certificate>, Vec<RevocationRecord>)> {
        let (mut certs, mut records) = (Vec::new(), Vec::new());
        for (hash, bytes) in self.certs().entries()? {
            if let Ok(c) = Certificate::from_canonical_bytes(&bytes) {
                certs.push(c);
            } else if let Ok(r) = RevocationRecord::from_canonical_bytes(&bytes) {
                records.push(r);
            } else {
                bail!("certs/{hash} is neither a certificate nor a revocation record");
            }
        }
        Ok((certs, records))
    }
}

pub fn read_public_key(path: &Path) -> Result<IssuerPublicKey> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(IssuerPublicKey::from_hex(&text)?)
}

pub fn read_canonical_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    canonical::from_canonical_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(unix)]
fn write_private(path: &Path, contents: &str) -> Result<()> {
    use std::io::Write;
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = OpenOptions::new().create_new(true).write(true).mode(0o600).open(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[cfg(not(unix))]
fn write_private(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}
