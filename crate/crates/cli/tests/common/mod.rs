//! Shared helpers: a temporary engine home driven through the binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const CLOCK: &str = "2026-01-01T00:00:00Z";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub struct Home {
    pub dir: tempfile::TempDir,
}

impl Home {
    pub fn new() -> Self {
        let h = Home { dir: tempfile::tempdir().unwrap() };
        h.ok(&["init"]);
        h
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_adas"))
            .args(args)
            .env("ADAS_HOME", self.path())
            .env("ADAS_CLOCK", CLOCK)
            .output()
            .unwrap()
    }

    pub fn ok(&self, args: &[&str]) -> Value {
        let out = self.run(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }

    /// Registers the EU policy and a bundle of the fixture evidence,
    /// leaving out `skip`.
    pub fn eu_setup(&self, skip: Option<&str>) {
        let f = fixtures();
        self.ok(&["policy", "add", f.join("policies/eu-healthcare-high-risk.json").to_str().unwrap()]);
        self.ok(&["evidence", "bundle-create", "eu-1", "--deployment", "dep-eu-triage-001"]);
        let items: Vec<Value> =
            serde_json::from_slice(&std::fs::read(f.join("evidence/eu-healthcare/manifest.json")).unwrap()).unwrap();
        for item in items {
            let kind = item["kind"].as_str().unwrap();
            if Some(kind) == skip {
                continue;
            }
            let file = f.join("evidence/eu-healthcare").join(item["file"].as_str().unwrap());
            self.ok(&["evidence", "put", file.to_str().unwrap(), "--kind", kind, "--bundle", "eu-1"]);
        }
    }

    pub fn assess(&self) -> Output {
        let deployment = fixtures().join("deployments/eu-triage.json");
        self.run(&["assess", "--deployment", deployment.to_str().unwrap(), "--bundle", "eu-1"])
    }

    pub fn log_size(&self) -> u64 {
        let out = self.run(&["log", "sth"]);
        if out.status.success() {
            serde_json::from_slice::<Value>(&out.stdout).unwrap()["tree_size"].as_u64().unwrap()
        } else {
            0
        }
    }
}

pub fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}
