//! Built-in acceptance suites: each criterion is a fixed, seeded
//! computation with a pass/fail outcome and a runtime budget.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use crate::config::RunConfig;
use crate::dual::{density, dual_marginal};
use crate::error::{Error, Result};
use crate::experiments::{self as ex, ScheduleOptions};
use crate::harness::{csv_path, run_all};
use crate::kernels::{build_kernel, Kernel};
use crate::rng::Stream;
use crate::walks::{exact_solve, hit_before, return_tail_with, Clock, TargetSet};

/// Master seed used when none is given.
pub const DEFAULT_SEED: u64 = 1;

/// Replicates for the heavy-tailed interface sweep (see README).
pub const HEAVY_SWEEP_REPS: u64 = 500;

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    /// Runtime budget in seconds, if any.
    pub budget: Option<f64>,
}

pub const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, title: "gambler's ruin exactness", budget: Some(10.0) },
    Criterion { id: 2, title: "return-tail constant", budget: Some(60.0) },
    Criterion { id: 3, title: "killed Green's function three-way agreement", budget: Some(60.0) },
    Criterion { id: 4, title: "dyadic shell band", budget: Some(120.0) },
    Criterion { id: 5, title: "forward/dual marginals", budget: Some(300.0) },
    Criterion { id: 6, title: "coalescing density decay", budget: Some(300.0) },
    Criterion { id: 7, title: "tight interface signature", budget: Some(600.0) },
    Criterion { id: 8, title: "non-tight interface signature", budget: Some(900.0) },
    Criterion { id: 9, title: "jump-event and martingale anchors", budget: Some(60.0) },
    Criterion { id: 10, title: "structural zeros", budget: None },
    Criterion { id: 11, title: "determinism across worker counts", budget: None },
];

/// Criteria with budgets of two minutes or less.
pub const FAST: [u8; 7] = [1, 2, 3, 4, 9, 10, 11];

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget: Option<f64>,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let budget = self.budget.map_or_else(String::new, |b| format!(" of {b:.0} s"));
        write!(
            f,
            "criterion {:>2} {} {} ({:.1} s{budget}): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

/// Criterion ids for a suite name: `acceptance`, `fast`, or a single id.
pub fn suite_ids(name: &str) -> Result<Vec<u8>> {
    match name {
        "acceptance" => Ok(CRITERIA.iter().map(|c| c.id).collect()),
        "fast" => Ok(FAST.to_vec()),
        other => match other.parse::<u8>() {
            Ok(id) if (1..=11).contains(&id) => Ok(vec![id]),
            _ => Err(Error::InvalidParameter(format!(
                "unknown suite {other:?}; expected acceptance, fast, or a criterion id 1-11"
            ))),
        },
    }
}

fn kernel(spec: &str) -> Result<Kernel> {
    build_kernel(&spec.parse()?)
}

/// Collects named checks into a detail line.
struct Checks(Vec<(bool, String)>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn check(&mut self, ok: bool, what: String) {
        self.0.push((ok, what));
    }

    fn passed(&self) -> bool {
        self.0.iter().all(|(ok, _)| *ok)
    }

    fn detail(&self) -> String {
        self.0
            .iter()
            .map(|(ok, what)| format!("{}{what}", if *ok { "" } else { "FAILED " }))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Runs one criterion with the given master seed.
pub fn run_criterion(id: u8, seed: u64) -> Result<CriterionResult> {
    let meta = CRITERIA
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::InvalidParameter(format!("no criterion {id}")))?;
    let stream = Stream::new(seed, &format!("criterion-{id}"));
    let start = Instant::now();
    let checks = match id {
        1 => gamblers_ruin(&stream)?,
        2 => return_tail(&stream)?,
        3 => green_agreement(&stream)?,
        4 => dyadic_band(&stream)?,
        5 => duality(&stream)?,
        6 => density_decay(&stream)?,
        7 => tight_signature(&stream)?,
        8 => non_tight_signature(&stream)?,
        9 => schedule_anchors(&stream)?,
        10 => structural_zeros(&stream)?,
        _ => determinism(seed)?,
    };
    let seconds = start.elapsed().as_secs_f64();
    let mut checks = checks;
    if let Some(b) = meta.budget {
        checks.check(seconds < b, format!("runtime {seconds:.1} s < {b:.0} s"));
    }
    Ok(CriterionResult {
        id,
        title: meta.title,
        passed: checks.passed(),
        detail: checks.detail(),
        seconds,
        budget: meta.budget,
    })
}

fn gamblers_ruin(stream: &Stream) -> Result<Checks> {
    let nn = kernel("nearest_neighbor")?;
    let mut c = Checks::new();
    let p = hit_before(&nn, 3, TargetSet::Point(10), TargetSet::Point(0), false, 100_000, stream)?;
    c.check(p.contains(0.3), format!("P^3(tau_10 < tau_0) = {:.4} [{:.4}, {:.4}] contains 0.3", p.point, p.ci_low, p.ci_high));
    let exact = exact_solve(&nn, (0, 10), &[TargetSet::Point(10), TargetSet::Point(0)])?.absorption(3, 0);
    c.check((exact - 0.3).abs() <= 1e-10, format!("exact solve {exact:.12}"));
    Ok(c)
}

fn return_tail(stream: &Stream) -> Result<Checks> {
    let nn = kernel("nearest_neighbor")?;
    let mut c = Checks::new();
    let limit = (2.0 / std::f64::consts::PI).sqrt();
    let p30 = return_tail_with(&nn, 30, 1_000_000, &stream.child("n=30"), Clock::Embedded)?;
    let scaled = 30.0 * p30.point;
    c.check(
        (scaled / limit - 1.0).abs() <= 0.10,
        format!("30 P(tau_hat_0 > 900) = {scaled:.4} within 10% of {limit:.4}"),
    );
    let p2 = return_tail_with(&nn, 2, 1_000_000, &stream.child("n=2"), Clock::Embedded)?;
    c.check(p2.contains(0.375), format!("P(tau_hat_0 > 4) = {:.4} [{:.4}, {:.4}] contains 0.375", p2.point, p2.ci_low, p2.ci_high));
    Ok(c)
}

fn green_agreement(stream: &Stream) -> Result<Checks> {
    let ur = kernel("uniform_range(2)")?;
    let g = ex::exp_greenfn(&ur, (4, 1, 2, 2), 100_000, stream, crate::walks::DEFAULT_SOLVE_CEILING)?;
    let mut c = Checks::new();
    let exact = g.exact.ok_or_else(|| Error::Precondition("exact solve unavailable".into()))?;
    let ex_report = crate::stats::EstimateReport::exact(exact);
    c.check(
        g.occupation.agrees_with(&g.ratio),
        format!("occupation {:.4} vs ratio {:.4}", g.occupation.point, g.ratio.point),
    );
    c.check(g.occupation.agrees_with(&ex_report), format!("occupation vs exact {exact:.4}"));
    c.check(g.ratio.agrees_with(&ex_report), "ratio vs exact".into());
    Ok(c)
}

fn dyadic_band(stream: &Stream) -> Result<Checks> {
    let ur = kernel("uniform_range(2)")?;
    let pts: Vec<ex::AkrPoint> = (1..=3)
        .map(|r| ex::exp_akr(&ur, 8, r, 100_000, &stream.child(&format!("r={r}"))))
        .collect::<Result<_>>()?;
    let mut c = Checks::new();
    let scaled: Vec<f64> = pts.iter().map(|p| p.scaled.point).collect();
    let hi = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    c.check(hi / lo <= 3.0, format!("2^r P = {scaled:.4?}, max/min {:.3} <= 3", hi / lo));
    let verdict = ex::akr_verdict(&pts, 3.0);
    c.check(verdict.is_pass(), format!("strictly decreasing in r: {verdict}"));
    Ok(c)
}

fn duality(stream: &Stream) -> Result<Checks> {
    let ur = kernel("uniform_range(2)")?;
    let xs: Vec<i64> = (-3..=3).collect();
    let t = 8.0;
    let forward = ex::exp_forward_marginals(&ur, &xs, t, 100_000, &stream.child("forward"), crate::voter::DEFAULT_HYBRID_CAP)?;
    let mut c = Checks::new();
    for (i, &x) in xs.iter().enumerate() {
        let d = dual_marginal(&ur, x, t, 100_000, &stream.child(&format!("dual/x={x}")))?;
        let gap = (forward[i].point - d.point).abs();
        c.check(gap <= 0.03, format!("x={x}: {:.4} vs {:.4}", forward[i].point, d.point));
    }
    c.check(forward.iter().all(|f| f.censored == 0), "no censored forward runs".into());
    Ok(c)
}

fn density_decay(stream: &Stream) -> Result<Checks> {
    let nn = kernel("nearest_neighbor")?;
    let mut pts = Vec::new();
    for k in [0.0, 4.0, 16.0, 64.0] {
        pts.push((k, density(&nn, k, 1000, 200, &stream.child(&format!("K={k}")))?));
    }
    let mut c = Checks::new();
    let shown: Vec<String> = pts
        .iter()
        .map(|(k, d)| format!("K={k}: {:.4} [{:.4}, {:.4}]", d.point, d.ci_low, d.ci_high))
        .collect();
    let verdict = ex::density_verdict(&pts);
    c.check(verdict.is_pass(), format!("{} ({verdict})", shown.join(", ")));
    Ok(c)
}

const VOTER_TIMES: [f64; 3] = [250.0, 1000.0, 4000.0];

fn tight_signature(stream: &Stream) -> Result<Checks> {
    let ur = kernel("uniform_range(2)")?;
    let table = ex::exp_tightness_sweep(&ur, &VOTER_TIMES, &[2, 5, 10, 20], 2000, stream, crate::voter::DEFAULT_HYBRID_CAP)?;
    let mut c = Checks::new();
    c.check(table.censored == 0, format!("{} censored", table.censored));
    let medians: Vec<f64> = table.medians.iter().map(|m| m.point).collect();
    let var = ex::median_variation(&table);
    c.check(var < 0.5, format!("medians {medians:?} vary by {:.0}% < 50%", 100.0 * var));
    let (i5, i20) = (1, 3);
    for (i, t) in table.t_list.iter().enumerate() {
        let (p5, p20) = (table.survival[i][i5].point, table.survival[i][i20].point);
        c.check(p20 < p5, format!("t={t}: P(>20) {p20:.4} < P(>5) {p5:.4}"));
    }
    Ok(c)
}

fn non_tight_signature(stream: &Stream) -> Result<Checks> {
    let pl = kernel("power_law(1.2, 100000)")?;
    let cap = crate::voter::DEFAULT_HYBRID_CAP;
    let table = ex::exp_tightness_sweep(&pl, &VOTER_TIMES, &[2, 5, 10, 20], HEAVY_SWEEP_REPS, &stream.child("sweep"), cap)?;
    let mut c = Checks::new();
    c.check(table.censored == 0, format!("{} censored", table.censored));
    let medians: Vec<f64> = table.medians.iter().map(|m| m.point).collect();
    let growth = ex::median_growth(&table);
    c.check(growth >= 2.0, format!("medians {medians:?} grow by {growth:.3} >= 2"));
    let opts = ScheduleOptions {
        c: 0.25,
        k_list: vec![3, 4, 5],
        reps: 100,
        voter_reps: HEAVY_SWEEP_REPS,
        hybrid_cap: cap,
    };
    for r in ex::exp_theorem2_schedule(&pl, &opts, &stream.child("schedule"))? {
        c.check(
            r.interface.point >= 0.01 && r.interface.censored == 0,
            format!("k={}: P(r-l >= {}) at t={:.1} is {:.4}", r.k, r.m_k, r.t_k, r.interface.point),
        );
    }
    Ok(c)
}

fn schedule_anchors(stream: &Stream) -> Result<Checks> {
    let pl = kernel("power_law(1.2, 100000)")?;
    let opts = ScheduleOptions {
        c: 0.25,
        k_list: vec![3, 4, 5],
        reps: 10_000,
        voter_reps: 100,
        hybrid_cap: crate::voter::DEFAULT_HYBRID_CAP,
    };
    let mut c = Checks::new();
    for r in ex::exp_theorem2_schedule(&pl, &opts, stream)? {
        c.check(
            r.jump_event.contains(r.jump_event_analytic),
            format!(
                "k={}: P(F) {:.4} [{:.4}, {:.4}] contains {:.4}",
                r.k, r.jump_event.point, r.jump_event.ci_low, r.jump_event.ci_high, r.jump_event_analytic
            ),
        );
        let rel = (r.second_moment.point / r.second_moment_analytic - 1.0).abs();
        c.check(
            rel <= 0.05,
            format!("k={}: E[Z'^2] {:.1} vs {:.1} ({:.1}%)", r.k, r.second_moment.point, r.second_moment_analytic, 100.0 * rel),
        );
    }
    Ok(c)
}

fn structural_zeros(stream: &Stream) -> Result<Checks> {
    let nn = kernel("nearest_neighbor")?;
    let mut c = Checks::new();
    let mut nonzero = Vec::new();
    for k in [1, 2, 4, 8] {
        for t in [1.0, 10.0, 100.0, 1000.0] {
            let p = ex::exp_vk(&nn, k, t, 1000, &stream.child(&format!("vk/k={k},t={t}")))?;
            if p.probability.point != 0.0 {
                nonzero.push(format!("V^k at k={k}, t={t}"));
            }
        }
    }
    let table = ex::exp_tightness_sweep(&nn, &[10.0, 100.0, 1000.0], &[1, 2, 5, 10, 20], 200, &stream.child("sweep"), 1 << 20)?;
    for (i, t) in table.t_list.iter().enumerate() {
        for (j, m) in table.m_list.iter().enumerate() {
            if table.survival[i][j].point != 0.0 {
                nonzero.push(format!("P(r-l > {m}) at t={t}"));
            }
        }
    }
    c.check(nonzero.is_empty(), format!("16 V^k cells and 15 survival cells exactly 0 {nonzero:?}"));
    Ok(c)
}

/// Config exercised by the determinism criterion.
pub fn determinism_config(seed: u64, workers: usize, output_dir: PathBuf) -> Result<RunConfig> {
    let text = format!(
        r#"
master_seed = {seed}
workers = {workers}

[experiment.ruin]
kind = "gamblers_ruin"
kernel = "nearest_neighbor"
reps = 10000
x = [3, 7]
lo = 0
hi = 10

[experiment.return_tail]
kind = "return_tail"
kernel = "nearest_neighbor"
reps = 10000
n = [2, 10]

[experiment.green]
kind = "greenfn"
kernel = "uniform_range(2)"
reps = 5000
k = [4]
r = [1]
x = [2]
l = [2, 5]

[experiment.shell]
kind = "akr"
kernel = "uniform_range(2)"
reps = 5000
k = [8]
r = [1, 2]
exact = true

[experiment.tight]
kind = "tightness_sweep"
kernel = "uniform_range(2)"
reps = 200
t = [50, 200]
M = [2, 5]

[experiment.density]
kind = "density_decay"
kernel = "nearest_neighbor"
reps = 100
K = [0, 4, 16]
window = 300

[experiment.duality]
kind = "duality"
kernel = "uniform_range(2)"
reps = 2000
t = [8]
x = [-1, 0, 1]
"#
    );
    let mut config = RunConfig::parse_str(&text, "determinism")?;
    config.output_dir = output_dir;
    Ok(config)
}

fn determinism(seed: u64) -> Result<Checks> {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos());
    let root = std::env::temp_dir().join(format!("vmint-determinism-{}-{nanos}", std::process::id()));
    let mut c = Checks::new();
    let result = (|| -> Result<()> {
        let (a, b) = (root.join("workers-1"), root.join("workers-4"));
        let config_a = determinism_config(seed, 1, a.clone())?;
        let config_b = determinism_config(seed, 4, b.clone())?;
        run_all(&config_a)?;
        run_all(&config_b)?;
        for name in config_a.experiments.keys() {
            let x = std::fs::read(csv_path(&a, name))?;
            let y = std::fs::read(csv_path(&b, name))?;
            c.check(x == y, format!("{name}.csv identical ({} bytes)", x.len()));
        }
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&root);
    result?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        assert_eq!(suite_ids("acceptance").unwrap().len(), 11);
        assert_eq!(suite_ids("7").unwrap(), vec![7]);
        assert!(suite_ids("12").is_err());
        assert!(suite_ids("everything").is_err());
    }

    #[test]
    fn criterion_ids_are_contiguous() {
        for (i, c) in CRITERIA.iter().enumerate() {
            assert_eq!(c.id as usize, i + 1);
        }
    }
}
