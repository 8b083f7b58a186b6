//! Run configuration: a TOML file with global settings, caps, and one
//! `[experiment.<name>]` table per experiment, run in file order.
//!
//! ```toml
//! master_seed = 7
//! workers = 4
//! output_dir = "results"
//!
//! [caps]
//! hybrid_cap = 1048576
//!
//! [experiment.tight_nn]
//! kind = "tightness_sweep"
//! kernel = "nearest_neighbor"
//! reps = 200
//! t = [10, 100]
//! M = [1, 5]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::Expectation;
use crate::kernels::{build_kernel, Kernel, KernelSpec};
use crate::voter::DEFAULT_HYBRID_CAP;
use crate::walks::DEFAULT_SOLVE_CEILING;

/// Environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "VMINT_WORKERS";

/// Smallest accepted replicate count.
pub const MIN_REPS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Vk,
    Akr,
    Overshoot,
    UkFar,
    Excursion,
    TightnessSweep,
    Theorem2Schedule,
    Greenfn,
    DensityDecay,
    Duality,
    CrossingCensus,
    ReturnTail,
    GamblersRuin,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 13] = [
        ExperimentKind::Vk,
        ExperimentKind::Akr,
        ExperimentKind::Overshoot,
        ExperimentKind::UkFar,
        ExperimentKind::Excursion,
        ExperimentKind::TightnessSweep,
        ExperimentKind::Theorem2Schedule,
        ExperimentKind::Greenfn,
        ExperimentKind::DensityDecay,
        ExperimentKind::Duality,
        ExperimentKind::CrossingCensus,
        ExperimentKind::ReturnTail,
        ExperimentKind::GamblersRuin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Vk => "vk",
            ExperimentKind::Akr => "akr",
            ExperimentKind::Overshoot => "overshoot",
            ExperimentKind::UkFar => "uk_far",
            ExperimentKind::Excursion => "excursion",
            ExperimentKind::TightnessSweep => "tightness_sweep",
            ExperimentKind::Theorem2Schedule => "theorem2_schedule",
            ExperimentKind::Greenfn => "greenfn",
            ExperimentKind::DensityDecay => "density_decay",
            ExperimentKind::Duality => "duality",
            ExperimentKind::CrossingCensus => "crossing_census",
            ExperimentKind::ReturnTail => "return_tail",
            ExperimentKind::GamblersRuin => "gamblers_ruin",
        }
    }

    /// Grid keys that must be present.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Vk | ExperimentKind::Excursion => &["k", "t"],
            ExperimentKind::Akr | ExperimentKind::Overshoot => &["k", "r"],
            ExperimentKind::UkFar => &["k", "m", "t"],
            ExperimentKind::TightnessSweep => &["t", "M"],
            ExperimentKind::Theorem2Schedule => &["k"],
            ExperimentKind::Greenfn => &["k", "r", "x", "l"],
            ExperimentKind::DensityDecay => &["K"],
            ExperimentKind::Duality => &["x", "t"],
            ExperimentKind::CrossingCensus => &["t", "K"],
            ExperimentKind::ReturnTail => &["n"],
            ExperimentKind::GamblersRuin => &["x", "lo", "hi"],
        }
    }

    /// Optional keys beyond the grid.
    pub fn optional_keys(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Akr => &["exact"],
            ExperimentKind::Overshoot => &["max_jumps"],
            ExperimentKind::TightnessSweep => &["expect"],
            ExperimentKind::Theorem2Schedule => &["C", "voter_reps"],
            ExperimentKind::DensityDecay | ExperimentKind::CrossingCensus => &["window"],
            _ => &[],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Ratio band (akr: 3, uk_far: 20).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
    /// Probability floor (excursion, theorem2_schedule: 0.01).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    /// Relative tolerance on the second moment (theorem2_schedule: 0.05).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_tol: Option<f64>,
    /// Constant in the occupation bound (greenfn: 5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    /// Absolute tolerance (duality: 0.03).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    /// Relative tolerance (return_tail: 0.1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub kernel: String,
    pub reps: u64,
    /// Overrides the master seed for this experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<Vec<i64>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub big_k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<i64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voter_reps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_jumps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub tolerances: Tolerances,
}

fn is_default(t: &Tolerances) -> bool {
    *t == Tolerances::default()
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, kernel: &str, reps: u64) -> Self {
        ExperimentSpec {
            kind,
            kernel: kernel.to_string(),
            reps,
            seed: None,
            k: None,
            r: None,
            t: None,
            m: None,
            big_m: None,
            big_k: None,
            x: None,
            l: None,
            n: None,
            lo: None,
            hi: None,
            c: None,
            window: None,
            voter_reps: None,
            max_jumps: None,
            expect: None,
            exact: None,
            tolerances: Tolerances::default(),
        }
    }

    /// Keys set in this spec, beyond `kind`, `kernel`, `reps`, `seed` and
    /// `tolerances`.
    pub fn present_keys(&self) -> Vec<&'static str> {
        let flags = [
            ("k", self.k.is_some()),
            ("r", self.r.is_some()),
            ("t", self.t.is_some()),
            ("m", self.m.is_some()),
            ("M", self.big_m.is_some()),
            ("K", self.big_k.is_some()),
            ("x", self.x.is_some()),
            ("l", self.l.is_some()),
            ("n", self.n.is_some()),
            ("lo", self.lo.is_some()),
            ("hi", self.hi.is_some()),
            ("C", self.c.is_some()),
            ("window", self.window.is_some()),
            ("voter_reps", self.voter_reps.is_some()),
            ("max_jumps", self.max_jumps.is_some()),
            ("expect", self.expect.is_some()),
            ("exact", self.exact.is_some()),
        ];
        flags.into_iter().filter(|(_, on)| *on).map(|(k, _)| k).collect()
    }

    fn list_len(&self, key: &str) -> Option<usize> {
        match key {
            "k" => self.k.as_ref().map(Vec::len),
            "r" => self.r.as_ref().map(Vec::len),
            "t" => self.t.as_ref().map(Vec::len),
            "m" => self.m.as_ref().map(Vec::len),
            "M" => self.big_m.as_ref().map(Vec::len),
            "K" => self.big_k.as_ref().map(Vec::len),
            "x" => self.x.as_ref().map(Vec::len),
            "l" => self.l.as_ref().map(Vec::len),
            "n" => self.n.as_ref().map(Vec::len),
            _ => None,
        }
    }

    /// Largest site magnitude the grid refers to.
    pub fn max_site(&self) -> i64 {
        let mut out = 0i64;
        let abs_max = |v: &Option<Vec<i64>>| v.iter().flatten().map(|a| a.saturating_abs()).max().unwrap_or(0);
        out = out.max(abs_max(&self.x)).max(abs_max(&self.l)).max(abs_max(&self.big_m));
        out = out.max(self.lo.map_or(0, i64::saturating_abs)).max(self.hi.map_or(0, i64::saturating_abs));
        let kmax = abs_max(&self.k);
        match self.kind {
            ExperimentKind::Akr | ExperimentKind::Overshoot | ExperimentKind::Greenfn => {
                let rmax = self.r.iter().flatten().copied().max().unwrap_or(0);
                out = out.max(kmax.saturating_mul(1i64.checked_shl(rmax + 1).unwrap_or(i64::MAX)));
            }
            ExperimentKind::Theorem2Schedule => {
                let top = self.k.iter().flatten().copied().max().unwrap_or(0).clamp(0, 60) as u32;
                out = out.max(1i64 << (top + 2));
            }
            _ => out = out.max(kmax),
        }
        out
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        self.kernel.parse()
    }

    pub fn build_kernel(&self) -> Result<Kernel> {
        build_kernel(&self.kernel_spec()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    /// Largest hybrid zone a voter replicate may reach before censoring.
    #[serde(default = "default_hybrid_cap")]
    pub hybrid_cap: i64,
    /// Largest number of unknowns for an exact solve.
    #[serde(default = "default_solve_ceiling")]
    pub exact_solve_ceiling: usize,
    /// Largest kernel radius and grid site magnitude accepted.
    #[serde(default = "default_cutoff_ceiling")]
    pub kernel_cutoff_ceiling: i64,
}

fn default_hybrid_cap() -> i64 {
    DEFAULT_HYBRID_CAP
}

fn default_solve_ceiling() -> usize {
    DEFAULT_SOLVE_CEILING
}

fn default_cutoff_ceiling() -> i64 {
    10_000_000
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            hybrid_cap: default_hybrid_cap(),
            exact_solve_ceiling: default_solve_ceiling(),
            kernel_cutoff_ceiling: default_cutoff_ceiling(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default, rename = "experiment")]
    pub experiments: IndexMap<String, ExperimentSpec>,
}

/// Worker count from the environment, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl RunConfig {
    pub fn new(master_seed: u64) -> Self {
        RunConfig {
            master_seed,
            workers: 1,
            output_dir: default_output_dir(),
            caps: Caps::default(),
            experiments: IndexMap::new(),
        }
    }

    /// Parses and validates config text; `origin` names it in diagnostics.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        config.validate().map_err(|(name, field, message)| {
            let place = locate(text, name.as_deref(), field.as_deref())
                .map_or_else(String::new, |line| format!("line {line}: "));
            let what = match (&name, &field) {
                (Some(n), Some(f)) => format!("experiment.{n}.{f}: "),
                (Some(n), None) => format!("experiment.{n}: "),
                (None, Some(f)) => format!("{f}: "),
                (None, None) => String::new(),
            };
            Error::Config {
                path: origin.to_string(),
                message: format!("{place}{what}{message}"),
            }
        })?;
        Ok(config)
    }

    /// Checks the invariants not expressible in the schema. Errors carry
    /// (experiment, field, message).
    pub fn validate(&self) -> std::result::Result<(), (Option<String>, Option<String>, String)> {
        let top = |field: &str, msg: String| (None, Some(field.to_string()), msg);
        if self.workers < 1 {
            return Err(top("workers", "must be at least 1".into()));
        }
        if self.caps.hybrid_cap < 1 {
            return Err(top("caps.hybrid_cap", "must be positive".into()));
        }
        if self.caps.kernel_cutoff_ceiling < 1 {
            return Err(top("caps.kernel_cutoff_ceiling", "must be positive".into()));
        }
        for (name, spec) in &self.experiments {
            let err = |field: &str, msg: String| (Some(name.clone()), Some(field.to_string()), msg);
            if spec.reps < MIN_REPS {
                return Err(err("reps", format!("must be at least {MIN_REPS}, got {}", spec.reps)));
            }
            let kspec = spec.kernel_spec().map_err(|e| err("kernel", e.to_string()))?;
            let kernel = build_kernel(&kspec).map_err(|e| err("kernel", e.to_string()))?;
            if kernel.radius() > self.caps.kernel_cutoff_ceiling {
                return Err(err(
                    "kernel",
                    format!("radius {} exceeds kernel_cutoff_ceiling {}", kernel.radius(), self.caps.kernel_cutoff_ceiling),
                ));
            }
            let kind = spec.kind;
            for key in kind.required_keys() {
                if !spec.present_keys().contains(key) {
                    return Err(err(key, format!("required by kind {kind}")));
                }
                if spec.list_len(key) == Some(0) {
                    return Err(err(key, "grid list must be nonempty".into()));
                }
            }
            for key in spec.present_keys() {
                if !kind.required_keys().contains(&key) && !kind.optional_keys().contains(&key) {
                    return Err(err(key, format!("unknown key for kind {kind}")));
                }
            }
            if spec.max_site() > self.caps.kernel_cutoff_ceiling {
                return Err(err(
                    "kind",
                    format!("grid reaches site {} beyond kernel_cutoff_ceiling {}", spec.max_site(), self.caps.kernel_cutoff_ceiling),
                ));
            }
            if spec.voter_reps.is_some_and(|v| v < MIN_REPS) {
                return Err(err("voter_reps", format!("must be at least {MIN_REPS}")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form: object keys sorted,
    /// experiments keyed by name. `workers` and `output_dir` do not affect
    /// results and are left out.
    pub fn hash(&self) -> String {
        let experiments: BTreeMap<&String, &ExperimentSpec> = self.experiments.iter().collect();
        let value = serde_json::json!({
            "master_seed": self.master_seed,
            "caps": self.caps,
            "experiments": experiments,
        });
        let text = serde_json::to_string(&canonical(value)).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    RunConfig::parse_str(&text, &path.display().to_string())
}

fn canonical(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map.into_iter().map(|(k, v)| (k, canonical(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        other => other,
    }
}

/// 1-based line of `field` within `[experiment.<name>]` (or at top level).
fn locate(text: &str, name: Option<&str>, field: Option<&str>) -> Option<usize> {
    let lines: Vec<&str> = text.lines().collect();
    let start = match name {
        Some(n) => {
            let header = format!("[experiment.{n}]");
            let quoted = format!("[experiment.\"{n}\"]");
            lines.iter().position(|l| {
                let l = l.trim();
                l == header || l == quoted
            })?
        }
        None => 0,
    };
    let key = field.map(|f| f.rsplit('.').next().unwrap_or(f));
    if let Some(key) = key {
        for (i, line) in lines.iter().enumerate().skip(start + name.is_some() as usize) {
            let l = line.trim();
            if name.is_some() && l.starts_with('[') {
                break;
            }
            if l.split('=').next().map(str::trim) == Some(key) {
                return Some(i + 1);
            }
        }
    }
    name.map(|_| start + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
master_seed = 11
workers = 2
output_dir = "out"

[experiment.tight_nn]
kind = "tightness_sweep"
kernel = "nearest_neighbor"
reps = 200
t = [10, 100]
M = [1, 5]
"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::parse_str(MINIMAL, "minimal").unwrap();
        assert_eq!(c.experiments.len(), 1);
        let e = &c.experiments["tight_nn"];
        assert_eq!(e.kind, ExperimentKind::TightnessSweep);
        assert_eq!(e.t, Some(vec![10.0, 100.0]));
        assert_eq!(e.big_m, Some(vec![1, 5]));
        assert_eq!(c.caps, Caps::default());
    }

    #[test]
    fn zero_workers_rejected() {
        let text = MINIMAL.replace("workers = 2", "workers = 0");
        let err = RunConfig::parse_str(&text, "w").unwrap_err().to_string();
        assert!(err.contains("workers") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = MINIMAL.replace("reps = 200", "reps = 200\nrepz = 3");
        let err = RunConfig::parse_str(&text, "u").unwrap_err().to_string();
        assert!(err.contains("repz") && err.contains("line 10"), "{err}");
    }

    #[test]
    fn key_unused_by_kind_rejected() {
        let text = MINIMAL.replace("M = [1, 5]", "M = [1, 5]\nm = [1.0]");
        let err = RunConfig::parse_str(&text, "k").unwrap_err().to_string();
        assert!(err.contains("tight_nn.m") && err.contains("line 12"), "{err}");
    }

    #[test]
    fn missing_and_invalid_values() {
        let no_seed = MINIMAL.replace("master_seed = 11", "");
        assert!(RunConfig::parse_str(&no_seed, "s").unwrap_err().to_string().contains("master_seed"));
        let few = MINIMAL.replace("reps = 200", "reps = 50");
        let err = RunConfig::parse_str(&few, "r").unwrap_err().to_string();
        assert!(err.contains("reps") && err.contains("line 9"), "{err}");
        let typo = MINIMAL.replace("reps = 200", "reps = \"many\"");
        assert!(RunConfig::parse_str(&typo, "t").is_err());
        let no_m = MINIMAL.replace("M = [1, 5]", "");
        assert!(RunConfig::parse_str(&no_m, "m").unwrap_err().to_string().contains("required"));
        let empty = MINIMAL.replace("M = [1, 5]", "M = []");
        assert!(RunConfig::parse_str(&empty, "e").unwrap_err().to_string().contains("nonempty"));
    }

    #[test]
    fn duplicate_experiment_rejected() {
        let text = format!("{MINIMAL}\n[experiment.tight_nn]\nkind = \"vk\"\n");
        let err = RunConfig::parse_str(&text, "d").unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn grid_beyond_cutoff_ceiling_rejected() {
        let text = MINIMAL.replace("output_dir = \"out\"", "output_dir = \"out\"\n[caps]\nkernel_cutoff_ceiling = 3");
        assert!(RunConfig::parse_str(&text, "c").unwrap_err().to_string().contains("beyond"));
    }

    #[test]
    fn hash_ignores_order_and_whitespace() {
        let reordered = r#"
output_dir="elsewhere"
[experiment.tight_nn]
M=[1,5]
reps=200
t=[10.0,100.0]
kernel="nearest_neighbor"
kind="tightness_sweep"

[caps]
hybrid_cap = 1048576
"#;
        let a = RunConfig::parse_str(MINIMAL, "a").unwrap();
        let b = RunConfig::parse_str(&format!("master_seed=11\n{reordered}"), "b").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::parse_str(&MINIMAL.replace("reps = 200", "reps = 201"), "c").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn experiments_keep_file_order() {
        let text = r#"
master_seed = 1
[experiment.zeta]
kind = "return_tail"
kernel = "nearest_neighbor"
reps = 100
n = [2]
[experiment.alpha]
kind = "return_tail"
kernel = "nearest_neighbor"
reps = 100
n = [3]
"#;
        let c = RunConfig::parse_str(text, "o").unwrap();
        assert_eq!(c.experiments.keys().collect::<Vec<_>>(), ["zeta", "alpha"]);
    }

    #[test]
    fn empty_config_is_valid() {
        let c = RunConfig::parse_str("master_seed = 3\n", "empty").unwrap();
        assert!(c.experiments.is_empty());
    }
}
