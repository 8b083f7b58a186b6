//! Runs configured experiments and persists their results.
//!
//! Each experiment writes `<output_dir>/<name>.csv`; every run writes one
//! `records.jsonl` with a record per table row. CSV output depends only on
//! the config and seeds, never on the worker count or wall time.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use serde::{Deserialize, Serialize};

use crate::config::{Caps, ExperimentKind, ExperimentSpec, RunConfig};
use crate::dual::{crossing_census, density, dual_marginal};
use crate::error::{Error, Result};
use crate::experiments::{self as ex, Expectation, ScheduleOptions, Verdict};
use crate::kernels::Kernel;
use crate::rng::Stream;
use crate::stats::EstimateReport;
use crate::walks::{exact_solve, hit_before, return_tail_with, Clock, ExactSolve, TargetSet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Name of the JSON-lines record file within the output directory.
pub const RECORDS_FILE: &str = "records.jsonl";

/// Grid parameters, in CSV column order.
pub const PARAM_COLUMNS: [&str; 13] = ["k", "r", "t", "m", "M", "K", "x", "l", "n", "C", "lo", "hi", "window"];

/// One table row: a named quantity at a grid point.
#[derive(Clone, Debug)]
pub struct Row {
    pub quantity: String,
    pub params: BTreeMap<&'static str, f64>,
    pub report: EstimateReport,
}

impl Row {
    fn new(quantity: &str, params: &[(&'static str, f64)], report: EstimateReport) -> Self {
        Row {
            quantity: quantity.to_string(),
            params: params.iter().copied().collect(),
            report,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub name: String,
    pub kind: ExperimentKind,
    pub kernel: String,
    pub rows: Vec<Row>,
    pub verdict: Verdict,
    /// Effective seed: the experiment's own, else the master seed.
    pub seed: u64,
    /// Fingerprint of the experiment's root stream.
    pub stream: String,
    pub duration_seconds: f64,
}

/// One JSON-lines record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub kernel: String,
    pub quantity: String,
    pub params: BTreeMap<String, f64>,
    /// Absent when the estimate is undefined.
    pub point: Option<f64>,
    pub ci: [Option<f64>; 2],
    pub reps: u64,
    pub censored: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
    pub verdict: String,
    pub seed: u64,
    pub stream: String,
    pub duration_seconds: f64,
    pub version: String,
    pub config_hash: String,
    pub timestamp: String,
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub outcomes: Vec<ExperimentOutcome>,
    pub records: Vec<ResultRecord>,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.outcomes.iter().all(|o| o.verdict.is_pass())
    }

    /// 0 when every verdict passes, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() { 0 } else { 1 }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn records_for(outcome: &ExperimentOutcome, config_hash: &str, timestamp: &str) -> Vec<ResultRecord> {
    outcome
        .rows
        .iter()
        .map(|row| ResultRecord {
            experiment: outcome.name.clone(),
            kind: outcome.kind,
            kernel: outcome.kernel.clone(),
            quantity: row.quantity.clone(),
            params: row.params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            point: finite(row.report.point),
            ci: [finite(row.report.ci_low), finite(row.report.ci_high)],
            reps: row.report.reps,
            censored: row.report.censored,
            extras: row.report.extras.iter().filter(|(_, v)| v.is_finite()).map(|(k, v)| (k.clone(), *v)).collect(),
            verdict: outcome.verdict.to_string(),
            seed: outcome.seed,
            stream: outcome.stream.clone(),
            duration_seconds: outcome.duration_seconds,
            version: VERSION.to_string(),
            config_hash: config_hash.to_string(),
            timestamp: timestamp.to_string(),
        })
        .collect()
}

/// Writes an experiment table as CSV.
pub fn write_csv<W: Write>(outcome: &ExperimentOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["experiment", "quantity"];
    header.extend(PARAM_COLUMNS);
    header.extend(["point", "ci_low", "ci_high", "reps", "censored"]);
    w.write_record(&header)?;
    for row in &outcome.rows {
        let mut rec = vec![outcome.name.clone(), row.quantity.clone()];
        rec.extend(PARAM_COLUMNS.iter().map(|c| row.params.get(c).map_or_else(String::new, |v| v.to_string())));
        let r = &row.report;
        rec.extend([
            r.point.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.reps.to_string(),
            r.censored.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every experiment in config order on a pool of `config.workers`
/// threads, writing the CSV tables and the record stream. An empty
/// experiment list writes nothing.
pub fn run_all(config: &RunConfig) -> Result<RunSummary> {
    config
        .validate()
        .map_err(|(name, field, message)| Error::Config {
            path: "<config>".into(),
            message: format!("{}{}: {message}", name.map_or_else(String::new, |n| format!("experiment.{n}.")), field.unwrap_or_default()),
        })?;
    if config.experiments.is_empty() {
        return Ok(RunSummary::default());
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    let hash = config.hash();
    let mut jsonl = BufWriter::new(File::create(config.output_dir.join(RECORDS_FILE))?);
    let mut summary = RunSummary::default();
    for (name, spec) in &config.experiments {
        log::info!("running {name} ({})", spec.kind);
        let outcome = pool.install(|| run_experiment(name, spec, &config.caps, config.master_seed))?;
        log::info!("{name}: {} in {:.1}s", outcome.verdict, outcome.duration_seconds);
        write_csv(&outcome, BufWriter::new(File::create(csv_path(&config.output_dir, name))?))?;
        let timestamp = humantime::format_rfc3339_seconds(SystemTime::now()).to_string();
        for rec in records_for(&outcome, &hash, &timestamp) {
            serde_json::to_writer(&mut jsonl, &rec)?;
            jsonl.write_all(b"\n")?;
            summary.records.push(rec);
        }
        jsonl.flush()?;
        summary.outcomes.push(outcome);
    }
    Ok(summary)
}

pub fn csv_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.csv"))
}

/// Runs one experiment on the current rayon pool.
pub fn run_experiment(name: &str, spec: &ExperimentSpec, caps: &Caps, master_seed: u64) -> Result<ExperimentOutcome> {
    let kernel = spec.build_kernel()?;
    let seed = spec.seed.unwrap_or(master_seed);
    let stream = Stream::new(seed, name);
    let start = Instant::now();
    let (rows, verdict) = dispatch(&kernel, spec, caps, &stream)?;
    Ok(ExperimentOutcome {
        name: name.to_string(),
        kind: spec.kind,
        kernel: spec.kernel.clone(),
        rows,
        verdict,
        seed,
        stream: stream.fingerprint(),
        duration_seconds: start.elapsed().as_secs_f64(),
    })
}

fn need<'a, T>(v: &'a Option<Vec<T>>, key: &str) -> Result<&'a [T]> {
    v.as_deref()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Error::Precondition(format!("grid key `{key}` is required")))
}

fn need_one<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Precondition(format!("key `{key}` is required")))
}

fn exact_or_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::SolveTooLarge { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn dispatch(kernel: &Kernel, spec: &ExperimentSpec, caps: &Caps, stream: &Stream) -> Result<(Vec<Row>, Verdict)> {
    let reps = spec.reps;
    let tol = &spec.tolerances;
    let mut rows = Vec::new();
    let verdict = match spec.kind {
        ExperimentKind::Vk => {
            let mut pts = Vec::new();
            for &k in need(&spec.k, "k")? {
                for &t in need(&spec.t, "t")? {
                    let p = ex::exp_vk(kernel, k, t, reps, &stream.child(&format!("k={k},t={t}")))?;
                    let at = [("k", k as f64), ("t", t)];
                    rows.push(Row::new("probability", &at, p.probability.clone()));
                    rows.push(Row::new("normalized", &at, p.normalized.clone()));
                    pts.push(p);
                }
            }
            ex::vk_verdict(kernel, &pts)
        }
        ExperimentKind::Akr => {
            let mut pts = Vec::new();
            for &k in need(&spec.k, "k")? {
                for &r in need(&spec.r, "r")? {
                    let mut p = ex::exp_akr(kernel, k, r, reps, &stream.child(&format!("k={k},r={r}")))?;
                    if spec.exact.unwrap_or(false) {
                        p.exact = exact_or_none(ex::exact_akr(kernel, k, r, caps.exact_solve_ceiling))?;
                    }
                    let at = [("k", k as f64), ("r", r as f64)];
                    rows.push(Row::new("probability", &at, p.probability.clone()));
                    rows.push(Row::new("scaled", &at, p.scaled.clone()));
                    if let Some(e) = p.exact {
                        rows.push(Row::new("exact", &at, EstimateReport::exact(e)));
                    }
                    pts.push(p);
                }
            }
            ex::akr_verdict(&pts, tol.band.unwrap_or(3.0))
        }
        ExperimentKind::Overshoot => {
            let mut pts = Vec::new();
            for &k in need(&spec.k, "k")? {
                for &r in need(&spec.r, "r")? {
                    let p = ex::exp_overshoot(kernel, k, r, reps, &stream.child(&format!("k={k},r={r}")), spec.max_jumps)?;
                    let at = [("k", k as f64), ("r", r as f64)];
                    rows.push(Row::new("mean_overshoot", &at, p.mean_overshoot.clone()));
                    rows.push(Row::new("relative_overshoot", &at, p.relative.clone()));
                    rows.push(Row::new("far_exit", &at, p.far_exit.clone()));
                    rows.push(Row::new("scaled_far_exit", &at, p.scaled_far_exit.clone()));
                    pts.push(p);
                }
            }
            ex::overshoot_verdict(kernel, &pts)
        }
        ExperimentKind::UkFar => {
            let mut pts = Vec::new();
            for &k in need(&spec.k, "k")? {
                for &m in need(&spec.m, "m")? {
                    for &t in need(&spec.t, "t")? {
                        let p = ex::exp_uk_far(kernel, k, m, t, reps, &stream.child(&format!("k={k},m={m},t={t}")))?;
                        let at = [("k", k as f64), ("m", m), ("t", t)];
                        rows.push(Row::new("joint", &at, p.joint.clone()));
                        rows.push(Row::new("no_collision", &at, p.no_collision.clone()));
                        rows.push(Row::new("tail", &at, p.tail.clone()));
                        rows.push(Row::new("ratio", &at, p.ratio.clone()));
                        pts.push(p);
                    }
                }
            }
            ex::uk_far_verdict(&pts, tol.band.unwrap_or(20.0))
        }
        ExperimentKind::Excursion => {
            let mut pts = Vec::new();
            for &k in need(&spec.k, "k")? {
                for &t in need(&spec.t, "t")? {
                    let p = ex::exp_excursion(kernel, k, t, reps, &stream.child(&format!("k={k},t={t}")))?;
                    let at = [("k", k as f64), ("t", t)];
                    rows.push(Row::new("long_excursion", &at, p.long_excursion.clone()));
                    rows.push(Row::new("conditional", &at, p.conditional.clone()));
                    pts.push(p);
                }
            }
            ex::excursion_verdict(&pts, tol.floor.unwrap_or(0.01))
        }
        ExperimentKind::TightnessSweep => {
            let table = ex::exp_tightness_sweep(
                kernel,
                need(&spec.t, "t")?,
                need(&spec.big_m, "M")?,
                reps,
                stream,
                caps.hybrid_cap,
            )?;
            for (i, &t) in table.t_list.iter().enumerate() {
                for (j, &m) in table.m_list.iter().enumerate() {
                    rows.push(Row::new("survival", &[("t", t), ("M", m as f64)], table.survival[i][j].clone()));
                }
                rows.push(Row::new("median_size", &[("t", t)], table.medians[i].clone()));
            }
            let expect = spec.expect.unwrap_or_else(|| Expectation::for_kernel(kernel));
            ex::tightness_verdict(kernel, &table, expect)
        }
        ExperimentKind::Theorem2Schedule => {
            let opts = ScheduleOptions {
                c: spec.c.unwrap_or(0.25),
                k_list: need(&spec.k, "k")?
                    .iter()
                    .map(|&k| u32::try_from(k).map_err(|_| Error::Precondition(format!("k = {k} must be nonnegative"))))
                    .collect::<Result<_>>()?,
                reps,
                voter_reps: spec.voter_reps.unwrap_or(reps),
                hybrid_cap: caps.hybrid_cap,
            };
            let table = ex::exp_theorem2_schedule(kernel, &opts, stream)?;
            for r in &table {
                let at = [("k", r.k as f64), ("M", r.m_k as f64), ("t", r.t_k), ("C", opts.c)];
                rows.push(Row::new("interface", &at, r.interface.clone()));
                rows.push(Row::new("jump_event", &at, r.jump_event.clone()));
                rows.push(Row::new("jump_event_analytic", &at, EstimateReport::exact(r.jump_event_analytic)));
                rows.push(Row::new("second_moment", &at, r.second_moment.clone()));
                rows.push(Row::new("second_moment_analytic", &at, EstimateReport::exact(r.second_moment_analytic)));
                rows.push(Row::new("small_sup", &at, r.small_sup.clone()));
                rows.push(Row::new("lower_bound", &at, EstimateReport::exact(r.lower_bound)));
            }
            ex::schedule_verdict(&table, tol.floor.unwrap_or(0.01), tol.moment_tol.unwrap_or(0.05))
        }
        ExperimentKind::Greenfn => {
            let mut pts = Vec::new();
            for &k in need(&spec.k, "k")? {
                for &r in need(&spec.r, "r")? {
                    for &x in need(&spec.x, "x")? {
                        for &l in need(&spec.l, "l")? {
                            let sub = stream.child(&format!("k={k},r={r},x={x},l={l}"));
                            let g = ex::exp_greenfn(kernel, (k, r, x, l), reps, &sub, caps.exact_solve_ceiling)?;
                            let at = [("k", k as f64), ("r", r as f64), ("x", x as f64), ("l", l as f64)];
                            rows.push(Row::new("occupation", &at, g.occupation.clone()));
                            rows.push(Row::new("hit", &at, g.hit.clone()));
                            rows.push(Row::new("escape", &at, g.escape.clone()));
                            rows.push(Row::new("ratio", &at, g.ratio.clone()));
                            if let Some(e) = g.exact {
                                rows.push(Row::new("exact", &at, EstimateReport::exact(e)));
                            }
                            pts.push(g);
                        }
                    }
                }
            }
            ex::green_verdict(&pts, tol.c1.unwrap_or(5.0))
        }
        ExperimentKind::DensityDecay => {
            let window = spec.window.unwrap_or(1000);
            let mut ks = need(&spec.big_k, "K")?.to_vec();
            ks.sort_by(f64::total_cmp);
            let mut pts = Vec::new();
            for k in ks {
                let d = density(kernel, k, window, reps, &stream.child(&format!("K={k}")))?;
                rows.push(Row::new("density", &[("K", k), ("window", window as f64)], d.clone()));
                pts.push((k, d));
            }
            ex::density_verdict(&pts)
        }
        ExperimentKind::Duality => {
            let xs = need(&spec.x, "x")?;
            let mut checks = Vec::new();
            for &t in need(&spec.t, "t")? {
                let sub = stream.child(&format!("t={t}"));
                let forward = ex::exp_forward_marginals(kernel, xs, t, reps, &sub.child("forward"), caps.hybrid_cap)?;
                let dual = xs
                    .iter()
                    .map(|&x| dual_marginal(kernel, x, t, reps, &sub.child(&format!("dual/x={x}"))))
                    .collect::<Result<Vec<_>>>()?;
                for (i, &x) in xs.iter().enumerate() {
                    let at = [("x", x as f64), ("t", t)];
                    rows.push(Row::new("forward", &at, forward[i].clone()));
                    rows.push(Row::new("dual", &at, dual[i].clone()));
                }
                checks.push(ex::duality_verdict(xs, &forward, &dual, tol.abs_tol.unwrap_or(0.03)));
            }
            checks.into_iter().find(|v| !v.is_pass()).unwrap_or(Verdict::Pass)
        }
        ExperimentKind::CrossingCensus => {
            let window = spec.window.unwrap_or(1000);
            for &t in need(&spec.t, "t")? {
                for &k in need(&spec.big_k, "K")? {
                    let c = crossing_census(kernel, t, k, window, reps, &stream.child(&format!("t={t},K={k}")))?;
                    let report = c.estimate.with_extra("pairs_examined", c.pairs_examined as f64);
                    rows.push(Row::new("crossing", &[("t", t), ("K", k), ("window", window as f64)], report));
                }
            }
            Verdict::Pass
        }
        ExperimentKind::ReturnTail => {
            let mut pts = Vec::new();
            for &n in need(&spec.n, "n")? {
                let p = return_tail_with(kernel, n, reps, &stream.child(&format!("n={n}")), Clock::Embedded)?;
                let exact = ex::exact_return_tail(kernel, n * n);
                let at = [("n", n as f64)];
                rows.push(Row::new("survival", &at, p.clone()));
                rows.push(Row::new("n_times_survival", &at, ex::scaled(&p, n as f64)));
                if let Some(e) = exact {
                    rows.push(Row::new("exact", &at, EstimateReport::exact(e)));
                }
                pts.push((n, p, exact));
            }
            ex::return_tail_verdict(kernel, &pts, tol.rel_tol.unwrap_or(0.1))
        }
        ExperimentKind::GamblersRuin => {
            let (lo, hi) = (need_one(spec.lo, "lo")?, need_one(spec.hi, "hi")?);
            let classes = [TargetSet::AtLeast(hi), TargetSet::AtMost(lo)];
            let solve: Option<ExactSolve> = match ExactSolve::new(kernel, (lo, hi), &classes, caps.exact_solve_ceiling) {
                Ok(s) => Some(s),
                Err(Error::SolveTooLarge { .. }) => None,
                Err(e) => return Err(e),
            };
            let mut pts = Vec::new();
            for &x in need(&spec.x, "x")? {
                let p = hit_before(kernel, x, classes[0], classes[1], false, reps, &stream.child(&format!("x={x}")))?;
                let exact = solve.as_ref().map(|s| s.absorption(x, 0));
                let at = [("x", x as f64), ("lo", lo as f64), ("hi", hi as f64)];
                rows.push(Row::new("probability", &at, p.clone()));
                if let Some(e) = exact {
                    rows.push(Row::new("exact", &at, EstimateReport::exact(e)));
                }
                pts.push((format!("x={x}"), p, exact));
            }
            ex::exact_agreement_verdict(&pts)
        }
    };
    Ok((rows, verdict))
}

/// Exact ruin probability `P^x(tau_{[hi, inf)} < tau_{(-inf, lo]})`.
pub fn exact_ruin(kernel: &Kernel, x: i64, lo: i64, hi: i64) -> Result<f64> {
    let s = exact_solve(kernel, (lo, hi), &[TargetSet::AtLeast(hi), TargetSet::AtMost(lo)])?;
    Ok(s.absorption(x, 0))
}

/// Reads a JSON-lines record file.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in file.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Reshapes for plotting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Tightness survival curves: `series, t, M, p_hat, ci_low, ci_high`.
    Survival,
    /// Density decay: `series, K, density, ci_low, ci_high`.
    Density,
    /// Schedule tables: `series, k, M_k, t_k, p_hat, ci_low, ci_high`.
    Schedule,
}

impl PlotKind {
    pub const SUPPORTED: [&'static str; 3] = ["survival", "density", "schedule"];
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "survival" => Ok(PlotKind::Survival),
            "density" => Ok(PlotKind::Density),
            "schedule" => Ok(PlotKind::Schedule),
            other => Err(Error::InvalidParameter(format!(
                "unknown plot kind {other:?}; supported: {}",
                PlotKind::SUPPORTED.join(", ")
            ))),
        }
    }
}

/// Writes the long-format plot table for `kind`.
pub fn emit_plot_data<W: Write>(records: &[ResultRecord], kind: PlotKind, out: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Precondition("no records to reshape".into()));
    }
    let (source, quantity, params, value): (ExperimentKind, &str, &[&str], &str) = match kind {
        PlotKind::Survival => (ExperimentKind::TightnessSweep, "survival", &["t", "M"], "p_hat"),
        PlotKind::Density => (ExperimentKind::DensityDecay, "density", &["K"], "density"),
        PlotKind::Schedule => (ExperimentKind::Theorem2Schedule, "interface", &["k", "M", "t"], "p_hat"),
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["series"];
    header.extend(match kind {
        PlotKind::Schedule => &["k", "M_k", "t_k"][..],
        _ => params,
    });
    header.extend([value, "ci_low", "ci_high"]);
    w.write_record(&header)?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
    for r in records.iter().filter(|r| r.kind == source && r.quantity == quantity) {
        let mut rec = vec![r.experiment.clone()];
        rec.extend(params.iter().map(|p| fmt(r.params.get(*p).copied())));
        rec.extend([fmt(r.point), fmt(r.ci[0]), fmt(r.ci[1])]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path, workers: usize) -> RunConfig {
        let text = format!(
            r#"
master_seed = 5
workers = {workers}
output_dir = "{}"

[experiment.ruin]
kind = "gamblers_ruin"
kernel = "nearest_neighbor"
reps = 2000
x = [3, 5]
lo = 0
hi = 10

[experiment.tail]
kind = "return_tail"
kernel = "nearest_neighbor"
reps = 2000
n = [2]

[experiment.tight]
kind = "tightness_sweep"
kernel = "uniform_range(2)"
reps = 100
t = [5, 20]
M = [0, 3]
"#,
            dir.display()
        );
        RunConfig::parse_str(&text, "test").unwrap()
    }

    #[test]
    fn run_writes_tables_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_all(&config(dir.path(), 1)).unwrap();
        assert_eq!(summary.outcomes.len(), 3);
        assert!(summary.outcomes[0].verdict.is_pass(), "{:?}", summary.outcomes[0].verdict);
        assert!(summary.outcomes[1].verdict.is_pass(), "{:?}", summary.outcomes[1].verdict);
        let csv = std::fs::read_to_string(dir.path().join("ruin.csv")).unwrap();
        assert!(csv.starts_with("experiment,quantity,k,r,t,m,M,K,x,l,n,C,lo,hi,window,point,"));
        assert!(csv.contains("ruin,exact,,,,,,,3,,,,0,10,,0.3"));
        let records = read_records(&dir.path().join(RECORDS_FILE)).unwrap();
        assert_eq!(records, summary.records);
        assert!(records.iter().all(|r| r.config_hash.len() == 64 && r.version == VERSION));
    }

    #[test]
    fn worker_count_does_not_change_tables() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_all(&config(a.path(), 1)).unwrap();
        run_all(&config(b.path(), 4)).unwrap();
        for name in ["ruin", "tail", "tight"] {
            let x = std::fs::read(csv_path(a.path(), name)).unwrap();
            let y = std::fs::read(csv_path(b.path(), name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn empty_run_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(1);
        c.output_dir = dir.path().join("never");
        let s = run_all(&c).unwrap();
        assert_eq!(s.exit_code(), 0);
        assert!(!c.output_dir.exists());
    }

    #[test]
    fn plot_data_reshapes_survival() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_all(&config(dir.path(), 1)).unwrap();
        let mut out = Vec::new();
        emit_plot_data(&summary.records, PlotKind::Survival, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "series,t,M,p_hat,ci_low,ci_high");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("tight,5,0,"));
        let err = "histogram".parse::<PlotKind>().unwrap_err().to_string();
        assert!(err.contains("survival, density, schedule"));
        assert!(emit_plot_data(&[], PlotKind::Density, Vec::new()).is_err());
    }

    #[test]
    fn exact_ruin_matches_closed_form() {
        let nn = crate::build_kernel(&"nearest_neighbor".parse().unwrap()).unwrap();
        assert!((exact_ruin(&nn, 3, 0, 10).unwrap() - 0.3).abs() < 1e-10);
    }
}
