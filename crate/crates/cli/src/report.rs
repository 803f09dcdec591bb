//! Run summaries, bound checks and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Within { target: f64, tolerance: f64 },
}

impl Bound {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => v <= limit,
            Bound::AtLeast { limit } => v >= limit,
            Bound::Within { target, tolerance } => (v - target).abs() <= tolerance,
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::AtMost { limit } => write!(f, "<= {limit}"),
            Bound::AtLeast { limit } => write!(f, ">= {limit}"),
            Bound::Within { target, tolerance } => write!(f, "{target} ± {tolerance}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub metric: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    /// Non-numeric results, e.g. the branch choices.
    pub labels: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl Summary {
    pub fn new(scenario: &str, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            seed,
            metrics: BTreeMap::new(),
            labels: BTreeMap::new(),
            checks: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn label(&mut self, name: &str, value: impl Into<String>) -> &mut Self {
        self.labels.insert(name.to_string(), value.into());
        self
    }

    /// Records `value` under `name` and checks it against `bound`.
    pub fn checked(&mut self, name: &str, value: f64, bound: Bound) -> &mut Self {
        self.metric(name, value);
        self.checks.push(Check {
            metric: name.to_string(),
            value,
            bound,
            passed: bound.holds(value),
        });
        self
    }

    pub fn output(&mut self, file: &str) -> &mut Self {
        self.outputs.push(file.to_string());
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self) -> String {
        let width = self
            .metrics
            .keys()
            .chain(self.labels.keys())
            .map(String::len)
            .max()
            .unwrap_or(0);
        let mut out = format!("{} (seed {})\n", self.scenario, self.seed);
        for (k, v) in &self.metrics {
            let _ = writeln!(out, "  {k:<width$}  {v:.9}");
        }
        for (k, v) in &self.labels {
            let _ = writeln!(out, "  {k:<width$}  {v}");
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  [{verdict}] {} = {:.9} (want {})", c.metric, c.value, c.bound);
        }
        out
    }
}

/// Lists what a run produced. Written next to the outputs as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration, hex.
    pub config_digest: String,
    pub outputs: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
    pub passed: bool,
}

/// SHA-256 of the JSON encoding of `config`. Struct fields serialize in
/// declaration order, so equal configs give equal digests.
pub fn config_digest<T: Serialize>(config: &T) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes `summary.json` and `manifest.json` into `out_dir`.
pub fn finish(out_dir: &Path, summary: &mut Summary, digest: String) -> Result<RunManifest, CliError> {
    summary.output("summary.json");
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    let manifest = RunManifest {
        scenario: summary.scenario.clone(),
        seed: summary.seed,
        config_digest: digest,
        outputs: summary.outputs.clone(),
        metrics: summary.metrics.clone(),
        passed: summary.passed(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Bound::AtMost { limit: 1.0 }.holds(1.0));
        assert!(!Bound::AtLeast { limit: 1.0 }.holds(0.5));
        assert!(Bound::Within { target: 2.0, tolerance: 0.1 }.holds(2.05));
        assert!(!Bound::Within { target: 2.0, tolerance: 0.1 }.holds(f64::NAN));
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        #[derive(Serialize)]
        struct C {
            a: f64,
            b: &'static str,
        }
        let d1 = config_digest(&C { a: 1.0, b: "x" }).unwrap();
        assert_eq!(d1, config_digest(&C { a: 1.0, b: "x" }).unwrap());
        assert_ne!(d1, config_digest(&C { a: 1.5, b: "x" }).unwrap());
        assert_eq!(d1.len(), 64);
    }

    #[test]
    fn failed_check_fails_summary() {
        let mut s = Summary::new("t", 0);
        s.checked("ok", 0.0, Bound::AtMost { limit: 1.0 });
        assert!(s.passed());
        s.checked("bad", 2.0, Bound::AtMost { limit: 1.0 });
        assert!(!s.passed());
        assert!(s.table().contains("[FAIL] bad"));
    }
}
