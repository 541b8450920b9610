//! `adas`: drive the authorisation pipeline from the command line.
//!
//! Exit codes: 0 success or approval, 2 denial or failed verification,
//! 1 any operational error.

pub mod clock;
pub mod home;
pub mod server;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use adas_core::canonical;
use adas_core::certification::{
    assemble_audit_package, issue_certificate, revoke_certificate, verify_certificate,
    AuditPackage, Certificate, IssuerKey, RevocationAction, RevocationReason,
};
use adas_core::decision::authorize;
use adas_core::evidence::{
    append_to_bundle, bundle_fingerprint, get_artefact, put_artefact, ArtefactKind, ArtefactRef, EvidenceBundle,
};
use adas_core::model::{validate_deployment, DeploymentDescriptor};
use adas_core::policy::{parse_policy, policy_fingerprint};
use adas_core::translog::{CertificateStatus, LogEntry, TransparencyLog};
use adas_core::ContentHash;

use clock::{parse_clock, Clock};
use home::{read_canonical_file, read_public_key, EngineHome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DENIED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "adas", version, about = "Deployment authorisation engine")]
pub struct Cli {
    /// Engine home directory.
    #[arg(long, global = true, env = "ADAS_HOME", default_value = ".adas")]
    home: PathBuf,
    /// Override the current time: Unix seconds or RFC 3339.
    #[arg(long, global = true, env = "ADAS_CLOCK", value_parser = parse_clock)]
    clock: Option<Clock>,
    /// Output encoding for machine-readable results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Canonical)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Canonical,
    Pretty,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create the home layout and an issuer key pair.
    Init {
        /// Import this private key (64 hex characters) instead of generating one.
        #[arg(long)]
        import_key: Option<PathBuf>,
    },
    #[command(subcommand)]
    Policy(PolicyCmd),
    #[command(subcommand)]
    Evidence(EvidenceCmd),
    /// Assess a deployment; on approval issue and log a certificate.
    Assess(AssessArgs),
    #[command(subcommand)]
    Cert(CertCmd),
    #[command(subcommand)]
    Log(LogCmd),
    /// Serve the read-only status interface.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8470")]
        bind: String,
    },
}

#[derive(Subcommand, Debug)]
enum PolicyCmd {
    /// Validate and register a policy file.
    Add { file: PathBuf },
    /// Print the policy that resolves for a jurisdiction and domain.
    Show {
        #[arg(long)]
        jurisdiction: String,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        version: Option<String>,
    },
    /// Print the fingerprint of a policy file.
    Fingerprint { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum EvidenceCmd {
    /// Store an artefact; optionally append it to a bundle.
    Put {
        file: PathBuf,
        #[arg(long)]
        kind: ArtefactKind,
        #[arg(long)]
        label: Option<String>,
        /// Artefact time; defaults to the clock.
        #[arg(long, value_parser = parse_clock)]
        timestamp: Option<Clock>,
        #[arg(long)]
        bundle: Option<String>,
    },
    BundleCreate {
        bundle_id: String,
        #[arg(long)]
        deployment: String,
    },
    /// Append an already stored artefact to a bundle.
    BundleAppend {
        bundle_id: String,
        hash: ContentHash,
        #[arg(long)]
        kind: ArtefactKind,
        #[arg(long, default_value = "")]
        label: String,
        #[arg(long, value_parser = parse_clock)]
        timestamp: Option<Clock>,
    },
    BundleShow { bundle_id: String },
}

#[derive(Args, Debug)]
struct AssessArgs {
    /// Deployment descriptor (JSON).
    #[arg(long)]
    deployment: PathBuf,
    #[arg(long)]
    bundle: String,
    /// Defaults to the descriptor's jurisdiction.
    #[arg(long)]
    jurisdiction: Option<String>,
    /// Defaults to the descriptor's use-context domain.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    policy_version: Option<String>,
    #[arg(long, default_value_t = 365)]
    validity_days: u32,
}

#[derive(Subcommand, Debug)]
enum CertCmd {
    /// Verify a certificate file. Material not given explicitly is taken
    /// from the home when one exists.
    Verify {
        file: PathBuf,
        /// Issuer public key file.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Audit package file to check the hash binding against.
        #[arg(long)]
        package: Option<PathBuf>,
        /// Log directory (entries.log + sth.json) for inclusion and status.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Use only the material given on the command line.
        #[arg(long)]
        offline: bool,
    },
    /// Sign a revocation, suspension or reinstatement and append it to the log.
    Revoke {
        certificate_id: String,
        #[arg(long, value_parser = parse_action, default_value = "REVOKE")]
        action: RevocationAction,
        #[arg(long, value_parser = parse_reason)]
        reason: RevocationReason,
    },
    Status { certificate_id: String },
}

#[derive(Subcommand, Debug)]
enum LogCmd {
    Sth,
    ProveInclusion {
        index: u64,
        /// Defaults to the current tree size.
        #[arg(long)]
        size: Option<u64>,
    },
    ProveConsistency {
        old: u64,
        /// Defaults to the current tree size.
        new: Option<u64>,
    },
}

fn parse_action(s: &str) -> Result<RevocationAction, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("{s:?}: expected REVOKE, SUSPEND or REINSTATE"))
}

fn parse_reason(s: &str) -> Result<RevocationReason, String> {
    serde_json::from_value(json!(s))
        .map_err(|_| format!("{s:?}: expected MaterialIncident, EvidenceInvalid, ScopeChange or PolicyUpdate"))
}

struct Ctx {
    home: EngineHome,
    clock: Clock,
    format: Format,
}

impl Ctx {
    fn now(&self) -> u64 {
        self.clock.now()
    }

    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut out = match self.format {
            Format::Canonical => canonical::to_canonical_bytes(value)?,
            Format::Pretty => canonical::to_pretty(value).into_bytes(),
        };
        out.push(b'\n');
        std::io::stdout().lock().write_all(&out)?;
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let ctx = Ctx {
        home: EngineHome::new(cli.home),
        clock: cli.clock.unwrap_or(Clock::System),
        format: cli.format,
    };
    match dispatch(&ctx, cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<i32> {
    match command {
        Command::Init { import_key } => init(ctx, import_key.as_deref()),
        Command::Policy(c) => policy(ctx, c),
        Command::Evidence(c) => evidence(ctx, c),
        Command::Assess(a) => assess(ctx, a),
        Command::Cert(c) => cert(ctx, c),
        Command::Log(c) => log(ctx, c),
        Command::Serve { bind } => {
            ctx.home.require_initialized()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(ctx.home.clone(), ctx.clock, &bind))?;
            Ok(EXIT_OK)
        }
    }
}

fn init(ctx: &Ctx, import: Option<&Path>) -> Result<i32> {
    let key = match import {
        Some(p) => IssuerKey::from_hex(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => {
            let mut seed = [0u8; 32];
            rand::RngCore::fill_bytes(&mut rand::rngs::OsRng, &mut seed);
            IssuerKey::from_seed(seed)
        }
    };
    ctx.home.init(&key)?;
    ctx.emit(&json!({
        "home": ctx.home.root().display().to_string(),
        "issuer_key_id": key.key_id(),
        "public_key": key.public().to_hex(),
    }))?;
    Ok(EXIT_OK)
}

fn policy(ctx: &Ctx, cmd: PolicyCmd) -> Result<i32> {
    match cmd {
        PolicyCmd::Add { file } => {
            let policy = parse_policy(&fs::read(&file).with_context(|| format!("reading {}", file.display()))?)?;
            let _lock = ctx.home.lock()?;
            let summary = json!({
                "policy_id": policy.policy_id,
                "version": policy.version.as_str(),
                "jurisdiction": policy.jurisdiction,
                "domain": policy.domain,
            });
            let fingerprint = ctx.home.add_policy(policy)?;
            let mut summary = summary;
            summary["fingerprint"] = json!(fingerprint);
            ctx.emit(&summary)?;
        }
        PolicyCmd::Show { jurisdiction, domain, version } => {
            ctx.home.require_initialized()?;
            let reg = ctx.home.policies()?;
            ctx.emit(reg.resolve(&jurisdiction, &domain, version.as_deref())?)?;
        }
        PolicyCmd::Fingerprint { file } => {
            let policy = parse_policy(&fs::read(&file).with_context(|| format!("reading {}", file.display()))?)?;
            ctx.emit(&json!({ "policy_id": policy.policy_id, "fingerprint": policy_fingerprint(&policy) }))?;
        }
    }
    Ok(EXIT_OK)
}

fn evidence(ctx: &Ctx, cmd: EvidenceCmd) -> Result<i32> {
    let _lock = match cmd {
        EvidenceCmd::BundleShow { .. } => None,
        _ => Some(ctx.home.lock()?),
    };
    let store = ctx.home.store();
    let bundles = ctx.home.bundles();
    match cmd {
        EvidenceCmd::Put { file, kind, label, timestamp, bundle } => {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let label = label.unwrap_or_else(|| file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            let ts = timestamp.unwrap_or(ctx.clock).now();
            let r = put_artefact(&store, &bytes, kind, ts, &label)?;
            if let Some(id) = bundle {
                let mut b = bundles.load(&id)?;
                append_to_bundle(&mut b, &store, r.clone())?;
                bundles.save(&b)?;
            }
            ctx.emit(&r)?;
        }
        EvidenceCmd::BundleCreate { bundle_id, deployment } => {
            let b = EvidenceBundle::new(bundle_id, deployment)?;
            bundles.create(&b)?;
            ctx.emit(&bundle_view(&b))?;
        }
        EvidenceCmd::BundleAppend { bundle_id, hash, kind, label, timestamp } => {
            let mut b = bundles.load(&bundle_id)?;
            let size = get_artefact(&store, &hash)?.len() as u64;
            let r = ArtefactRef {
                content_hash: hash,
                kind,
                timestamp: timestamp.unwrap_or(ctx.clock).now(),
                size_bytes: size,
                label,
            };
            append_to_bundle(&mut b, &store, r)?;
            bundles.save(&b)?;
            ctx.emit(&bundle_view(&b))?;
        }
        EvidenceCmd::BundleShow { bundle_id } => {
            ctx.home.require_initialized()?;
            ctx.emit(&bundle_view(&bundles.load(&bundle_id)?))?;
        }
    }
    Ok(EXIT_OK)
}

fn bundle_view(b: &EvidenceBundle) -> serde_json::Value {
    json!({ "bundle": b, "fingerprint": bundle_fingerprint(b) })
}

fn read_deployment(path: &Path) -> Result<DeploymentDescriptor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let d: DeploymentDescriptor = canonical::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let findings = validate_deployment(&d);
    if !findings.is_empty() {
        let list: Vec<String> = findings.iter().map(ToString::to_string).collect();
        bail!("invalid deployment descriptor: {}", list.join("; "));
    }
    Ok(d)
}

fn assess(ctx: &Ctx, a: AssessArgs) -> Result<i32> {
    let _lock = ctx.home.lock()?;
    let now = ctx.now();
    let deployment = read_deployment(&a.deployment)?;
    let jurisdiction = a.jurisdiction.as_deref().unwrap_or(&deployment.jurisdiction);
    let domain = a.domain.as_deref().unwrap_or(&deployment.use_context.domain);
    let registry = ctx.home.policies()?;
    let policy = registry.resolve(jurisdiction, domain, a.policy_version.as_deref())?;
    let bundle = ctx.home.bundles().load(&a.bundle)?;
    let store = ctx.home.store();

    let decision = authorize(&deployment, &bundle, policy, &store, now)?;
    let pkg = assemble_audit_package(policy, &deployment, &bundle, &decision)?;
    let pkg_hash = ctx.home.packages().write(&canonical::to_canonical_bytes(&pkg)?)?;

    let mut result = json!({
        "decision": decision,
        "audit_package_hash": pkg_hash,
        "policy_id": policy.policy_id,
        "policy_version": policy.version.as_str(),
    });
    if !decision.outcome.is_approved() {
        ctx.emit(&result)?;
        return Ok(EXIT_DENIED);
    }

    let key = ctx.home.signing_key()?;
    let cert = issue_certificate(&pkg, &key, a.validity_days, now)?;
    let cert_hash = ctx.home.certs().write(&cert.to_canonical_bytes())?;
    let mut log = ctx.home.log()?;
    // Re-running an identical assessment at the same instant reproduces the
    // same certificate; it is logged once.
    let index = match log.find_issuance(&cert) {
        Some(i) => i,
        None => log.append_entry(LogEntry::issuance(&cert), &key, now)?.0,
    };
    result["certificate"] = serde_json::to_value(&cert)?;
    result["certificate_file"] = json!(format!("certs/{cert_hash}"));
    result["log_index"] = json!(index);
    ctx.emit(&result)?;
    Ok(EXIT_OK)
}

fn cert(ctx: &Ctx, cmd: CertCmd) -> Result<i32> {
    match cmd {
        CertCmd::Verify { file, key, package, log, offline } => {
            let cert: Certificate = read_canonical_file(&file)?;
            let use_home = !offline && ctx.home.is_initialized();
            let issuer = match (key, use_home) {
                (Some(k), _) => read_public_key(&k)?,
                (None, true) => ctx.home.public_key()?,
                (None, false) => bail!("no issuer public key: pass --key"),
            };
            let pkg: Option<AuditPackage> = match (package, use_home) {
                (Some(p), _) => Some(read_canonical_file(&p)?),
                (None, true) => ctx.home.packages().read_typed(&cert.audit_package_hash).ok().flatten(),
                (None, false) => None,
            };
            let log = match (log, use_home) {
                (Some(dir), _) => Some(open_log_snapshot(&dir)?),
                (None, true) => Some(ctx.home.log()?),
                (None, false) => None,
            };
            let report = verify_certificate(&cert, &issuer, pkg.as_ref(), log.as_ref(), ctx.now());
            ctx.emit(&report)?;
            Ok(if report.valid { EXIT_OK } else { EXIT_DENIED })
        }
        CertCmd::Revoke { certificate_id, action, reason } => {
            let _lock = ctx.home.lock()?;
            let now = ctx.now();
            let mut log = ctx.home.log()?;
            if log.find_certificate(&certificate_id).is_none() {
                bail!("certificate {certificate_id} has no ISSUANCE entry in the log");
            }
            let key = ctx.home.signing_key()?;
            let record = revoke_certificate(&certificate_id, action, reason, &key, now)?;
            let file = ctx.home.certs().write(&record.to_canonical_bytes())?;
            let (index, sth) = log.append_entry(LogEntry::revocation(&record), &key, now)?;
            ctx.emit(&json!({
                "record": record,
                "record_file": format!("certs/{file}"),
                "log_index": index,
                "sth": sth,
                "status": log.certificate_status(&certificate_id, now),
            }))?;
            Ok(EXIT_OK)
        }
        CertCmd::Status { certificate_id } => {
            ctx.home.require_initialized()?;
            let status = ctx.home.log()?.certificate_status(&certificate_id, ctx.now());
            ctx.emit(&json!({ "certificate_id": certificate_id, "status": status }))?;
            Ok(if status == CertificateStatus::Unknown { EXIT_ERROR } else { EXIT_OK })
        }
    }
}

/// Opens a log directory for reading, accepting either a home or its `log/`.
fn open_log_snapshot(dir: &Path) -> Result<TransparencyLog> {
    let dir = if dir.join("log").join("entries.log").is_file() { dir.join("log") } else { dir.to_path_buf() };
    if !dir.join("entries.log").is_file() {
        bail!("{} holds no log (entries.log missing)", dir.display());
    }
    TransparencyLog::open(&dir).with_context(|| format!("opening log {}", dir.display()))
}

fn log(ctx: &Ctx, cmd: LogCmd) -> Result<i32> {
    ctx.home.require_initialized()?;
    let log = ctx.home.log()?;
    let current = log.latest_sth().map_or(0, |s| s.tree_size);
    match cmd {
        LogCmd::Sth => ctx.emit(log.latest_sth().ok_or_else(|| anyhow!("log is empty"))?)?,
        LogCmd::ProveInclusion { index, size } => {
            let size = size.unwrap_or(current);
            let proof = log.prove_inclusion(index, size)?;
            ctx.emit(&json!({ "proof": proof, "leaf_hash": log.leaf_hash(index) }))?;
        }
        LogCmd::ProveConsistency { old, new } => {
            ctx.emit(&log.prove_consistency(old, new.unwrap_or(current))?)?;
        }
    }
    Ok(EXIT_OK)
}
