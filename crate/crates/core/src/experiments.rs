//! Estimators for the quantitative events behind the tightness results, and
//! the verdicts drawn from them.
//!
//! Asymptotic statements are checked on finite grids as monotone trends,
//! ratio bands and floors with joint confidence intervals.

use std::fmt;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::rng::{self, SimRng, Stream};
use crate::stats::{family_z, EstimateReport, Z95};
use crate::voter::{init_heavyside, HarrisClock};
use crate::walks::{
    hit_before_with, ExactSolve, RandomWalk, Stop, StoppingSpec, TargetSet, DEFAULT_MAX_JUMPS,
};

/// Fraction of censored replicates above which a verdict is withheld.
pub const CENSOR_LIMIT: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail(String),
    Inconclusive(String),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    /// `Pass` if every check passed, else the first failure.
    pub fn from_checks(checks: Vec<(bool, String)>) -> Verdict {
        match checks.into_iter().find(|(ok, _)| !ok) {
            None => Verdict::Pass,
            Some((_, why)) => Verdict::Fail(why),
        }
    }

    fn censored(censored: u64, reps: u64) -> Option<Verdict> {
        (censored as f64 > CENSOR_LIMIT * reps as f64).then(|| {
            Verdict::Inconclusive(format!("censored: {censored} of {reps} replicates hit a cap"))
        })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "pass"),
            Verdict::Fail(why) => write!(f, "fail: {why}"),
            Verdict::Inconclusive(why) => write!(f, "inconclusive: {why}"),
        }
    }
}

fn bootstrap_seed(stream: &Stream) -> u64 {
    stream.child("bootstrap").replicate(0).random()
}

fn stops_report(stops: impl Iterator<Item = (Stop, bool)>) -> EstimateReport {
    let (mut hits, mut done, mut censored) = (0, 0, 0);
    for (stop, success) in stops {
        if stop == Stop::Censored {
            censored += 1;
        } else {
            done += 1;
            hits += success as u64;
        }
    }
    EstimateReport::proportion(hits, done, censored)
}

/// Scales a report and its interval by a positive constant.
pub fn scaled(report: &EstimateReport, factor: f64) -> EstimateReport {
    let mut out = report.clone();
    out.point *= factor;
    out.ci_low *= factor;
    out.ci_high *= factor;
    out
}

/// Whether `later` is significantly below `earlier`.
fn significantly_below(later: &EstimateReport, earlier: &EstimateReport) -> bool {
    let joint = (later.se().powi(2) + earlier.se().powi(2)).sqrt();
    earlier.point - later.point > Z95 * joint
}

fn skip_free(kernel: &Kernel) -> bool {
    kernel.radius() == 1
}

fn heavy_tailed(kernel: &Kernel) -> bool {
    kernel.family().power_law_alpha().is_some_and(|a| a < 2.0)
}

// ---------------------------------------------------------------------------
// Crossing probability V^k(t)

#[derive(Clone, Debug)]
pub struct VkPoint {
    pub k: i64,
    pub t: f64,
    pub probability: EstimateReport,
    /// `P / (k / sqrt(t))`.
    pub normalized: EstimateReport,
}

/// `P^k(Z(t) < 0, tau_0 > t)` for the difference walk.
pub fn exp_vk(kernel: &Kernel, k: i64, t: f64, reps: u64, stream: &Stream) -> Result<VkPoint> {
    if k < 1 || !(t > 0.0) {
        return Err(Error::Precondition(format!("exp_vk needs k >= 1 and t > 0, got k = {k}, t = {t}")));
    }
    let walk = RandomWalk::difference(kernel);
    let spec = StoppingSpec::new(vec![TargetSet::Point(0)]).with_horizon(t);
    let outs = rng::replicate(stream, reps, |_, rng| {
        let o = walk.run(k, &spec, rng, false);
        (o.stop, o.stop == Stop::HorizonExpired && o.final_position < 0)
    })?;
    let probability = stops_report(outs.into_iter());
    let normalized = scaled(&probability, t.sqrt() / k as f64);
    Ok(VkPoint { k, t, probability, normalized })
}

/// Skip-free kernels give exactly zero; otherwise the normalized ratio is
/// nonincreasing in `t` for each `k`.
pub fn vk_verdict(kernel: &Kernel, points: &[VkPoint]) -> Verdict {
    if skip_free(kernel) {
        return Verdict::from_checks(
            points
                .iter()
                .map(|p| (p.probability.point == 0.0, format!("V^k nonzero at k={}, t={}", p.k, p.t)))
                .collect(),
        );
    }
    let mut checks = Vec::new();
    for a in points {
        for b in points.iter().filter(|b| b.k == a.k && b.t > a.t) {
            checks.push((
                b.normalized.not_above(&a.normalized),
                format!("normalized V^k grows from t={} to t={} at k={}", a.t, b.t, a.k),
            ));
        }
    }
    Verdict::from_checks(checks)
}

// ---------------------------------------------------------------------------
// Dyadic shell events A(k, r)

#[derive(Clone, Debug)]
pub struct AkrPoint {
    pub k: i64,
    pub r: u32,
    pub probability: EstimateReport,
    /// `2^r P`.
    pub scaled: EstimateReport,
    pub exact: Option<f64>,
}

fn shell(k: i64, r: u32) -> i64 {
    k << r
}

/// Exit `(0, k 2^r)` on the right, then reach `(-inf, 0]` before leaving
/// `(0, k 2^{r+1})`, for the embedded difference chain.
pub fn exp_akr(kernel: &Kernel, k: i64, r: u32, reps: u64, stream: &Stream) -> Result<AkrPoint> {
    if k < 1 {
        return Err(Error::Precondition(format!("exp_akr needs k >= 1, got {k}")));
    }
    let (inner, outer) = (shell(k, r), shell(k, r + 1));
    let walk = RandomWalk::difference(kernel).embedded();
    let first = StoppingSpec::new(vec![TargetSet::AtMost(0), TargetSet::AtLeast(inner)]);
    let second = StoppingSpec::new(vec![TargetSet::AtMost(0), TargetSet::AtLeast(outer)]);
    let outs = rng::replicate(stream, reps, |_, rng| {
        let a = walk.run(k, &first, rng, false);
        if a.stop != Stop::Target(1) {
            return (a.stop, false);
        }
        let b = walk.run(a.final_position, &second, rng, false);
        (b.stop, b.stop == Stop::Target(0))
    })?;
    let probability = stops_report(outs.into_iter());
    Ok(AkrPoint {
        k,
        r,
        scaled: scaled(&probability, (1u64 << r) as f64),
        probability,
        exact: None,
    })
}

/// `P^k(A(k, r))` from two composed exact solves.
pub fn exact_akr(kernel: &Kernel, k: i64, r: u32, ceiling: usize) -> Result<f64> {
    let step = kernel.symmetrize();
    let (inner, outer) = (shell(k, r), shell(k, r + 1));
    let rad = step.radius();
    let mut classes = vec![TargetSet::AtMost(0)];
    classes.extend((inner..inner + rad).map(TargetSet::Point));
    let exit = ExactSolve::new(&step, (0, inner), &classes, ceiling)?;
    let back = ExactSolve::new(&step, (0, outer), &[TargetSet::AtMost(0), TargetSet::AtLeast(outer)], ceiling)?;
    Ok((inner..inner + rad)
        .enumerate()
        .map(|(i, y)| exit.absorption(k, i + 1) * back.absorption(y, 0))
        .sum())
}

/// For each `k`: `2^r P` stays within a factor `band`, and `P` decreases
/// significantly in `r`; an exact value, when present, lies in the CI.
pub fn akr_verdict(points: &[AkrPoint], band: f64) -> Verdict {
    let mut checks = Vec::new();
    let mut ks: Vec<i64> = points.iter().map(|p| p.k).collect();
    ks.dedup();
    for k in ks {
        let mut row: Vec<&AkrPoint> = points.iter().filter(|p| p.k == k).collect();
        row.sort_by_key(|p| p.r);
        let vals: Vec<f64> = row.iter().map(|p| p.scaled.point).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        checks.push((lo > 0.0 && hi / lo <= band, format!("2^r P(A) ratio {:.3} exceeds {band} at k={k}", hi / lo)));
        for w in row.windows(2) {
            checks.push((
                significantly_below(&w[1].probability, &w[0].probability),
                format!("P(A(k,r)) not decreasing from r={} to r={} at k={k}", w[0].r, w[1].r),
            ));
        }
    }
    for p in points {
        if let Some(e) = p.exact {
            checks.push((p.probability.contains(e), format!("exact {e:.6} outside CI at k={}, r={}", p.k, p.r)));
        }
    }
    Verdict::from_checks(checks)
}

// ---------------------------------------------------------------------------
// Overshoots

#[derive(Clone, Debug)]
pub struct OvershootPoint {
    pub k: i64,
    pub r: u32,
    /// `E^k |Z(tau_{(-inf, 0]})|`.
    pub mean_overshoot: EstimateReport,
    /// Mean overshoot divided by `k`.
    pub relative: EstimateReport,
    /// `P^k(Z(tau_{I^c}) > 3 k 2^r / 2)`.
    pub far_exit: EstimateReport,
    /// `2^r` times the far-exit probability.
    pub scaled_far_exit: EstimateReport,
}

pub fn exp_overshoot(
    kernel: &Kernel,
    k: i64,
    r: u32,
    reps: u64,
    stream: &Stream,
    max_jumps: Option<u64>,
) -> Result<OvershootPoint> {
    if k < 1 {
        return Err(Error::Precondition(format!("exp_overshoot needs k >= 1, got {k}")));
    }
    let walk = RandomWalk::difference(kernel).embedded();
    let cap = max_jumps.unwrap_or(DEFAULT_MAX_JUMPS);
    let down = StoppingSpec::new(vec![TargetSet::AtMost(0)]).with_max_jumps(cap);
    let ovs = rng::replicate(&stream.child("overshoot"), reps, |_, rng| {
        let o = walk.run(k, &down, rng, false);
        (o.stop != Stop::Censored).then(|| o.final_position.unsigned_abs() as f64)
    })?;
    let censored = ovs.iter().filter(|o| o.is_none()).count() as u64;
    let values: Vec<f64> = ovs.into_iter().flatten().collect();
    let mean_overshoot = EstimateReport::mean(&values, censored, bootstrap_seed(stream));
    let inner = shell(k, r);
    let exit = StoppingSpec::new(vec![TargetSet::OutsideInterval { lo: 0, hi: inner }]).with_max_jumps(cap);
    let outs = rng::replicate(&stream.child("exit"), reps, |_, rng| {
        let o = walk.run(k, &exit, rng, false);
        (o.stop, o.final_position as f64 > 1.5 * inner as f64)
    })?;
    let far_exit = stops_report(outs.into_iter());
    Ok(OvershootPoint {
        k,
        r,
        relative: scaled(&mean_overshoot, 1.0 / k as f64),
        scaled_far_exit: scaled(&far_exit, (1u64 << r) as f64),
        mean_overshoot,
        far_exit,
    })
}

/// Skip-free: overshoot exactly 0. Bounded jumps: overshoot below the
/// radius. Finite-variance families: relative overshoot nonincreasing in
/// `k`. Heavy-tailed families: reported only.
pub fn overshoot_verdict(kernel: &Kernel, points: &[OvershootPoint]) -> Verdict {
    let censored: u64 = points.iter().map(|p| p.mean_overshoot.censored + p.far_exit.censored).sum();
    let reps: u64 = points.iter().map(|p| p.mean_overshoot.reps + p.far_exit.reps).sum();
    if let Some(v) = Verdict::censored(censored, reps) {
        return v;
    }
    if skip_free(kernel) {
        return Verdict::from_checks(
            points
                .iter()
                .map(|p| (p.mean_overshoot.point == 0.0, format!("nonzero overshoot at k={}", p.k)))
                .collect(),
        );
    }
    if heavy_tailed(kernel) {
        return Verdict::Pass;
    }
    let rad = kernel.symmetrize().radius() as f64;
    let mut checks = Vec::new();
    for a in points {
        checks.push((a.mean_overshoot.point <= rad - 1.0, format!("overshoot above radius - 1 at k={}", a.k)));
        for b in points.iter().filter(|b| b.r == a.r && b.k > a.k) {
            checks.push((
                b.relative.not_above(&a.relative),
                format!("E/k grows from k={} to k={}", a.k, b.k),
            ));
        }
    }
    Verdict::from_checks(checks)
}

// ---------------------------------------------------------------------------
// Far excursions on the non-collision event U_k(t)

#[derive(Clone, Debug)]
pub struct UkFarPoint {
    pub k: i64,
    pub m: f64,
    pub t: f64,
    /// `P(U_k(t), max(Y^0(t), Y^k(t)) >= m sqrt(t))`.
    pub joint: EstimateReport,
    pub no_collision: EstimateReport,
    /// `P(|Y^0(2t)| >= m sqrt(t))`.
    pub tail: EstimateReport,
    /// `joint / (no_collision * tail)` with a conservative interval; NaN
    /// when the tail estimate is 0.
    pub ratio: EstimateReport,
}

pub fn exp_uk_far(kernel: &Kernel, k: i64, m: f64, t: f64, reps: u64, stream: &Stream) -> Result<UkFarPoint> {
    if k > -1 || !(m > 0.0) || !(t > 0.0) {
        return Err(Error::Precondition(format!(
            "exp_uk_far needs k <= -1, m > 0, t > 0; got k = {k}, m = {m}, t = {t}"
        )));
    }
    let level = m * t.sqrt();
    let free = StoppingSpec::horizon_only(2.0 * t);
    let walk = RandomWalk::new(kernel);
    let outs = rng::replicate(stream, reps, |_, rng| {
        let (survived, far) = pair_until_collision(kernel, k, t, level, rng);
        let y = walk.run(0, &free, rng, false).final_position;
        (survived, survived && far, y.unsigned_abs() as f64 >= level)
    })?;
    let count = |f: &dyn Fn(&(bool, bool, bool)) -> bool| outs.iter().filter(|o| f(o)).count() as u64;
    let no_collision = EstimateReport::proportion(count(&|o| o.0), reps, 0);
    let joint = EstimateReport::proportion(count(&|o| o.1), reps, 0);
    let tail = EstimateReport::proportion(count(&|o| o.2), reps, 0);
    let denom = no_collision.point * tail.point;
    let mut ratio = EstimateReport::exact(if denom > 0.0 { joint.point / denom } else { f64::NAN });
    if denom > 0.0 {
        ratio.ci_low = joint.ci_low / (no_collision.ci_high * tail.ci_high);
        ratio.ci_high = joint.ci_high / (no_collision.ci_low * tail.ci_low);
    }
    ratio.reps = reps;
    Ok(UkFarPoint { k, m, t, joint, no_collision, tail, ratio })
}

/// Runs `Y^0` and `Y^k` until they share a site or time `t` passes.
/// Returns (no collision, some walker ends at or above `level`).
fn pair_until_collision(kernel: &Kernel, k: i64, t: f64, level: f64, rng: &mut SimRng) -> (bool, bool) {
    let mut pos = [0i64, k];
    let mut time = 0.0;
    loop {
        time += rng.sample::<f64, _>(Exp1) / 2.0;
        if time > t {
            return (true, pos.iter().any(|&y| y as f64 >= level));
        }
        let who = rng.random_range(0..2);
        pos[who] += kernel.sample_step(rng);
        if pos[0] == pos[1] {
            return (false, false);
        }
    }
}

/// The ratio stays at most `band` over the grid (undefined ratios skipped).
pub fn uk_far_verdict(points: &[UkFarPoint], band: f64) -> Verdict {
    Verdict::from_checks(
        points
            .iter()
            .filter(|p| p.ratio.point.is_finite())
            .map(|p| (p.ratio.point <= band, format!("ratio {:.3} above {band} at m={}, t={}", p.ratio.point, p.m, p.t)))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Long excursions of the difference walk

#[derive(Clone, Debug)]
pub struct ExcursionPoint {
    pub k: i64,
    pub t: f64,
    /// An excursion from 0 lasting at least `3t/2` starts before `t/2`.
    pub long_excursion: EstimateReport,
    /// `P^0(tau_k < k^2 | tau_hat_0 > 3t/2)`.
    pub conditional: EstimateReport,
}

pub fn exp_excursion(kernel: &Kernel, k: i64, t: f64, reps: u64, stream: &Stream) -> Result<ExcursionPoint> {
    let kk = (k * k) as f64;
    if k < 1 || !(t > 2.0 * kk) {
        return Err(Error::Precondition(format!("exp_excursion needs k >= 1 and t > 2k^2, got k = {k}, t = {t}")));
    }
    let walk = RandomWalk::difference(kernel);
    let step = walk.step_kernel();
    let rate = walk.rate();
    let hold = |rng: &mut SimRng| rng.sample::<f64, _>(Exp1) / rate;

    let e1 = rng::replicate(&stream.child("long"), reps, |_, rng| {
        let mut time = 0.0;
        loop {
            let start = time + hold(rng);
            if start >= t / 2.0 {
                return false;
            }
            time = start;
            let mut pos = step.sample_step(rng);
            loop {
                let next = time + hold(rng);
                if next > start + 1.5 * t {
                    return true;
                }
                time = next;
                pos += step.sample_step(rng);
                if pos == 0 {
                    break;
                }
            }
        }
    })?;
    let long_excursion = EstimateReport::proportion(e1.iter().filter(|&&b| b).count() as u64, reps, 0);

    let cond = rng::replicate(&stream.child("conditional"), reps, |_, rng| {
        let (mut time, mut pos, mut reached) = (0.0, 0i64, false);
        loop {
            let next = time + hold(rng);
            if next > 1.5 * t {
                return Some(reached);
            }
            time = next;
            pos += step.sample_step(rng);
            if pos == 0 {
                return None;
            }
            reached |= pos == k && time < kk;
        }
    })?;
    let survivors: Vec<bool> = cond.into_iter().flatten().collect();
    let hits = survivors.iter().filter(|&&b| b).count() as u64;
    let conditional = EstimateReport::proportion(hits, survivors.len() as u64, 0)
        .with_extra("conditioning_reps", reps as f64);
    Ok(ExcursionPoint { k, t, long_excursion, conditional })
}

/// Both probabilities stay at or above `floor` on the grid.
pub fn excursion_verdict(points: &[ExcursionPoint], floor: f64) -> Verdict {
    let mut checks = Vec::new();
    for p in points {
        checks.push((p.long_excursion.point >= floor, format!("P(E1) below {floor} at t={}", p.t)));
        checks.push((p.conditional.point >= floor, format!("conditional below {floor} at k={}, t={}", p.k, p.t)));
    }
    Verdict::from_checks(checks)
}

// ---------------------------------------------------------------------------
// Interface tightness

#[derive(Clone, Debug)]
pub struct TightnessTable {
    /// Increasing observation times.
    pub t_list: Vec<f64>,
    pub m_list: Vec<i64>,
    /// `survival[i][j] = P(r_t - l_t > M)` at `t_list[i]`, `m_list[j]`.
    pub survival: Vec<Vec<EstimateReport>>,
    /// Median interface size `r_t - l_t + 1` per time.
    pub medians: Vec<EstimateReport>,
    pub reps: u64,
    pub censored: u64,
}

/// Runs the voter model from the Heavyside start, observing each replicate
/// at every time in `t_list`. Replicates hitting the hybrid cap are
/// censored.
pub fn exp_tightness_sweep(
    kernel: &Kernel,
    t_list: &[f64],
    m_list: &[i64],
    reps: u64,
    stream: &Stream,
    hybrid_cap: i64,
) -> Result<TightnessTable> {
    if !kernel.is_centered() {
        return Err(Error::Precondition("tightness sweep needs a mean-zero kernel".into()));
    }
    if t_list.is_empty() || m_list.is_empty() {
        return Err(Error::Precondition("tightness sweep needs nonempty t and M lists".into()));
    }
    let mut times = t_list.to_vec();
    times.sort_by(f64::total_cmp);
    let mut ms = m_list.to_vec();
    ms.sort();
    let clock = HarrisClock::new(kernel).with_cap(hybrid_cap);
    let runs = rng::replicate(stream, reps, |_, rng| -> Result<Option<Vec<i64>>> {
        let mut state = init_heavyside();
        let mut spreads = Vec::with_capacity(times.len());
        for &t in &times {
            match clock.run(&mut state, t, rng) {
                Ok(()) => spreads.push(state.right_one() - state.left_zero()),
                Err(Error::HybridCap { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(spreads))
    })?;
    let mut done = Vec::new();
    let mut censored = 0;
    for r in runs {
        match r? {
            Some(s) => done.push(s),
            None => censored += 1,
        }
    }
    let n = done.len() as u64;
    let survival = (0..times.len())
        .map(|i| {
            ms.iter()
                .map(|&m| {
                    let hits = done.iter().filter(|s| s[i] > m).count() as u64;
                    EstimateReport::proportion(hits, n, censored)
                })
                .collect()
        })
        .collect();
    let medians = (0..times.len())
        .map(|i| {
            let sizes: Vec<f64> = done.iter().map(|s| (s[i] + 1) as f64).collect();
            EstimateReport::median(&sizes, censored)
        })
        .collect();
    Ok(TightnessTable {
        t_list: times,
        m_list: ms,
        survival,
        medians,
        reps,
        censored,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Tight,
    NotTight,
}

impl Expectation {
    /// Heavy-tailed power laws are expected not to be tight.
    pub fn for_kernel(kernel: &Kernel) -> Self {
        if heavy_tailed(kernel) {
            Expectation::NotTight
        } else {
            Expectation::Tight
        }
    }
}

/// `(max - min) / max` of the medians, 0 when all vanish.
pub fn median_variation(table: &TightnessTable) -> f64 {
    let v: Vec<f64> = table.medians.iter().map(|m| m.point).collect();
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi <= 0.0 { 0.0 } else { (hi - lo) / hi }
}

/// Median size at the last time over the first; infinite when the first
/// median is 0 and the last is not.
pub fn median_growth(table: &TightnessTable) -> f64 {
    let first = table.medians.first().map_or(f64::NAN, |m| m.point);
    let last = table.medians.last().map_or(f64::NAN, |m| m.point);
    if first > 0.0 {
        last / first
    } else if last > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Tight: medians vary by less than 50%, each `P(r - l > M)` stays within
/// a factor 2 across times, and the survival function drops strictly
/// between the smallest and largest `M` (all exactly 0 for skip-free
/// kernels). Not tight: median grows by at least 2 from first to last time.
pub fn tightness_verdict(kernel: &Kernel, table: &TightnessTable, expect: Expectation) -> Verdict {
    if let Some(v) = Verdict::censored(table.censored, table.reps) {
        return v;
    }
    if skip_free(kernel) {
        return Verdict::from_checks(
            table
                .survival
                .iter()
                .flatten()
                .zip(table.t_list.iter().flat_map(|t| table.m_list.iter().map(move |m| (t, m))))
                .filter(|(_, (_, &m))| m >= 0)
                .map(|(s, (t, m))| (s.point == 0.0, format!("P(r-l > {m}) nonzero at t={t}")))
                .collect(),
        );
    }
    match expect {
        Expectation::Tight => {
            let mut checks = vec![(
                median_variation(table) < 0.5,
                format!("median size varies by {:.0}% across t", 100.0 * median_variation(table)),
            )];
            for (i, t) in table.t_list.iter().enumerate() {
                let row = &table.survival[i];
                let (first, last) = (&row[0], &row[row.len() - 1]);
                if row.len() > 1 {
                    checks.push((
                        last.point < first.point,
                        format!("P(r-l > M) not decreasing in M at t={t}"),
                    ));
                }
            }
            for j in 0..table.m_list.len() {
                let col: Vec<&EstimateReport> = table.survival.iter().map(|r| &r[j]).collect();
                let lo = col.iter().map(|e| e.point).fold(f64::INFINITY, f64::min);
                for e in &col {
                    checks.push((
                        e.point <= 2.0 * lo + 3.0 * e.se(),
                        format!("P(r-l > {}) grows in t", table.m_list[j]),
                    ));
                }
            }
            Verdict::from_checks(checks)
        }
        Expectation::NotTight => {
            let g = median_growth(table);
            Verdict::from_checks(vec![(g >= 2.0, format!("median grows only by a factor {g:.2}"))])
        }
    }
}

// ---------------------------------------------------------------------------
// Non-tightness schedule for heavy tails

#[derive(Clone, Debug)]
pub struct ScheduleRow {
    pub k: u32,
    /// `M_k = 2^k`.
    pub m_k: i64,
    /// `t_k = C / sum_{x >= 4 M_k} p(x)`.
    pub t_k: f64,
    /// `P(r_{t_k} - l_{t_k} >= M_k)`.
    pub interface: EstimateReport,
    /// Exactly one jump of size at least `4 M_k` by time `t_k`, to the right.
    pub jump_event: EstimateReport,
    pub jump_event_analytic: f64,
    /// `E[Z'(t_k)^2]` for the walk of jumps smaller than `4 M_k`.
    pub second_moment: EstimateReport,
    pub second_moment_analytic: f64,
    /// `P(sup_{s <= t_k} |Z'(s)| < M_k)`.
    pub small_sup: EstimateReport,
    /// `P(F)^2 P(sup |Z'| < M_k)^2` from the estimates.
    pub lower_bound: f64,
}

#[derive(Clone, Debug)]
pub struct ScheduleOptions {
    pub c: f64,
    pub k_list: Vec<u32>,
    /// Replicates of the walk decomposition.
    pub reps: u64,
    /// Replicates of the voter model.
    pub voter_reps: u64,
    pub hybrid_cap: i64,
}

/// `(M_k, t_k)` from the kernel's tail sums.
pub fn schedule_point(kernel: &Kernel, c: f64, k: u32) -> Result<(i64, f64)> {
    let m = 1i64 << k;
    let tail = kernel.right_tail_mass(4 * m as u64);
    if tail <= 0.0 {
        return Err(Error::Precondition(format!("kernel has no mass at or beyond {}", 4 * m)));
    }
    Ok((m, c / tail))
}

pub fn exp_theorem2_schedule(kernel: &Kernel, opts: &ScheduleOptions, stream: &Stream) -> Result<Vec<ScheduleRow>> {
    if !heavy_tailed(kernel) {
        return Err(Error::Precondition("theorem-2 schedule needs a power_law kernel with alpha < 2".into()));
    }
    if !kernel.is_symmetric() {
        return Err(Error::Precondition("theorem-2 schedule needs a symmetric kernel".into()));
    }
    if !(opts.c > 0.0) || opts.k_list.is_empty() {
        return Err(Error::Precondition("theorem-2 schedule needs C > 0 and a nonempty k list".into()));
    }
    let kmax = *opts.k_list.iter().max().unwrap();
    if kernel.radius() < 1i64 << (kmax + 2) {
        return Err(Error::Precondition(format!(
            "kernel cutoff {} is below 2^(k+2) = {}",
            kernel.radius(),
            1i64 << (kmax + 2)
        )));
    }
    let mut ks = opts.k_list.clone();
    ks.sort();
    let points: Vec<(i64, f64)> = ks.iter().map(|&k| schedule_point(kernel, opts.c, k)).collect::<Result<_>>()?;

    // Voter model: one trajectory per replicate observed at each t_k.
    let clock = HarrisClock::new(kernel).with_cap(opts.hybrid_cap);
    let runs = rng::replicate(&stream.child("voter"), opts.voter_reps, |_, rng| -> Result<Option<Vec<i64>>> {
        let mut state = init_heavyside();
        let mut out = Vec::new();
        for &(_, t) in &points {
            match clock.run(&mut state, t, rng) {
                Ok(()) => out.push(state.right_one() - state.left_zero()),
                Err(Error::HybridCap { .. }) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(out))
    })?;
    let mut spreads = Vec::new();
    let mut censored = 0;
    for r in runs {
        match r? {
            Some(s) => spreads.push(s),
            None => censored += 1,
        }
    }

    let mut rows = Vec::new();
    for (i, (&k, &(m, t))) in ks.iter().zip(&points).enumerate() {
        let hits = spreads.iter().filter(|s| s[i] >= m).count() as u64;
        let interface = EstimateReport::proportion(hits, spreads.len() as u64, censored);
        let big = 4 * m;
        let (small, _) = kernel.split_at(big as u64 - 1);
        let sub = stream.child(&format!("walk-k{k}"));
        let walks = rng::replicate(&sub, opts.reps, |_, rng| {
            let (mut time, mut z, mut sup) = (0.0, 0i64, 0i64);
            let (mut right, mut left) = (0u32, 0u32);
            loop {
                time += rng.sample::<f64, _>(Exp1);
                if time > t {
                    break;
                }
                let d = kernel.sample_step(rng);
                if d >= big {
                    right += 1;
                } else if d <= -big {
                    left += 1;
                } else {
                    z += d;
                    sup = sup.max(z.abs());
                }
            }
            (right == 1 && left == 0, (z * z) as f64, sup < m)
        })?;
        let n = opts.reps;
        let jump_event = EstimateReport::proportion(walks.iter().filter(|w| w.0).count() as u64, n, 0);
        let squares: Vec<f64> = walks.iter().map(|w| w.1).collect();
        let second_moment = EstimateReport::mean(&squares, 0, bootstrap_seed(&sub));
        let small_sup = EstimateReport::proportion(walks.iter().filter(|w| w.2).count() as u64, n, 0);
        rows.push(ScheduleRow {
            k,
            m_k: m,
            t_k: t,
            interface,
            jump_event_analytic: opts.c * (-2.0 * opts.c).exp(),
            second_moment_analytic: t * small.moment(2.0),
            lower_bound: jump_event.point.powi(2) * small_sup.point.powi(2),
            jump_event,
            second_moment,
            small_sup,
        });
    }
    Ok(rows)
}

/// Interface probability at least `floor` for every `k`; jump-event CI
/// contains the analytic value; second moment within `moment_tol`
/// (relative) of its analytic value.
pub fn schedule_verdict(rows: &[ScheduleRow], floor: f64, moment_tol: f64) -> Verdict {
    let censored: u64 = rows.iter().map(|r| r.interface.censored).max().unwrap_or(0);
    let reps: u64 = rows.iter().map(|r| r.interface.reps).max().unwrap_or(0);
    if let Some(v) = Verdict::censored(censored, reps) {
        return v;
    }
    let mut checks = Vec::new();
    for r in rows {
        checks.push((r.interface.point >= floor, format!("P(r-l >= M_k) = {:.4} below {floor} at k={}", r.interface.point, r.k)));
        checks.push((
            r.jump_event.contains(r.jump_event_analytic),
            format!("P(F) CI misses {:.4} at k={}", r.jump_event_analytic, r.k),
        ));
        let rel = (r.second_moment.point - r.second_moment_analytic).abs() / r.second_moment_analytic;
        checks.push((rel <= moment_tol, format!("E[Z'^2] off by {:.1}% at k={}", 100.0 * rel, r.k)));
    }
    Verdict::from_checks(checks)
}

// ---------------------------------------------------------------------------
// Killed Green's function

#[derive(Clone, Debug)]
pub struct GreenCheck {
    pub k: i64,
    pub r: u32,
    pub x: i64,
    pub l: i64,
    /// Monte Carlo `E^x[H_{k,r}(l)]`.
    pub occupation: EstimateReport,
    /// `P^x(tau_l < tau_{I^c})`.
    pub hit: EstimateReport,
    /// `P^l(tau_{I^c} < tau_hat_l)`.
    pub escape: EstimateReport,
    /// `hit / escape / rate` with a delta-method interval.
    pub ratio: EstimateReport,
    /// Exact occupation, absent when the interval exceeds the ceiling.
    pub exact: Option<f64>,
}

pub fn exp_greenfn(
    kernel: &Kernel,
    (k, r, x, l): (i64, u32, i64, i64),
    reps: u64,
    stream: &Stream,
    ceiling: usize,
) -> Result<GreenCheck> {
    let hi = shell(k, r);
    if !(0 < x && x < hi && 0 < l && l < hi) {
        return Err(Error::Precondition(format!("x = {x} and l = {l} must lie in (0, {hi})")));
    }
    let walk = RandomWalk::difference(kernel);
    let outside = TargetSet::OutsideInterval { lo: 0, hi };
    let spec = StoppingSpec::new(vec![outside]);
    let occ = rng::replicate(&stream.child("occupation"), reps, |_, rng| {
        let o = walk.run(x, &spec, rng, true);
        (o.stop != Stop::Censored).then(|| o.occupation_at(l))
    })?;
    let censored = occ.iter().filter(|o| o.is_none()).count() as u64;
    let values: Vec<f64> = occ.into_iter().flatten().collect();
    let occupation = EstimateReport::mean(&values, censored, bootstrap_seed(stream));

    let hit = hit_before_with(&walk, x, TargetSet::Point(l), outside, false, reps, &stream.child("hit"))?;
    let escape = hit_before_with(&walk, l, outside, TargetSet::Point(l), true, reps, &stream.child("escape"))?;
    let value = hit.point / escape.point / walk.rate();
    let rel_se = |e: &EstimateReport| if e.point > 0.0 { e.se() / e.point } else { 0.0 };
    let se = value * (rel_se(&hit).powi(2) + rel_se(&escape).powi(2)).sqrt();
    let mut ratio = EstimateReport::exact(value);
    ratio.ci_low = value - Z95 * se;
    ratio.ci_high = value + Z95 * se;
    ratio.reps = reps;

    let exact = match ExactSolve::new(walk.step_kernel(), (0, hi), &[outside], ceiling) {
        Ok(s) => Some(s.with_rate(walk.rate()).occupation(x, l)),
        Err(Error::SolveTooLarge { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(GreenCheck { k, r, x, l, occupation, hit, escape, ratio, exact })
}

/// Pairwise agreement of the Monte Carlo occupation, the Monte Carlo ratio
/// and the exact value (when available), and `E <= c1 (x ∧ l)`.
pub fn green_verdict(checks_in: &[GreenCheck], c1: f64) -> Verdict {
    let comparisons: usize = checks_in.iter().map(|g| if g.exact.is_some() { 3 } else { 1 }).sum();
    let z = family_z(comparisons);
    let mut checks = Vec::new();
    for g in checks_in {
        let at = format!("k={}, r={}, x={}, l={}", g.k, g.r, g.x, g.l);
        checks.push((g.occupation.agrees_within(&g.ratio, z), format!("occupation and ratio disagree at {at}")));
        if let Some(e) = g.exact {
            let ex = EstimateReport::exact(e);
            checks.push((g.occupation.agrees_within(&ex, z), format!("occupation misses exact {e:.5} at {at}")));
            checks.push((g.ratio.agrees_within(&ex, z), format!("ratio misses exact {e:.5} at {at}")));
        }
        checks.push((
            g.occupation.point <= c1 * g.x.min(g.l) as f64,
            format!("occupation above {c1} (x ∧ l) at {at}"),
        ));
    }
    Verdict::from_checks(checks)
}

// ---------------------------------------------------------------------------
// Forward marginals for the duality check

/// `P(eta_t(x) = 1)` for each `x`, from forward voter runs.
pub fn exp_forward_marginals(
    kernel: &Kernel,
    xs: &[i64],
    t: f64,
    reps: u64,
    stream: &Stream,
    hybrid_cap: i64,
) -> Result<Vec<EstimateReport>> {
    let clock = HarrisClock::new(kernel).with_cap(hybrid_cap);
    let runs = rng::replicate(stream, reps, |_, rng| -> Result<Option<Vec<u8>>> {
        let mut state = init_heavyside();
        match clock.run(&mut state, t, rng) {
            Ok(()) => Ok(Some(xs.iter().map(|&x| state.value(x)).collect())),
            Err(Error::HybridCap { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let mut done = Vec::new();
    let mut censored = 0;
    for r in runs {
        match r? {
            Some(v) => done.push(v),
            None => censored += 1,
        }
    }
    Ok((0..xs.len())
        .map(|i| {
            let ones = done.iter().filter(|v| v[i] == 1).count() as u64;
            EstimateReport::proportion(ones, done.len() as u64, censored)
        })
        .collect())
}

/// `|forward - dual| <= tol` at every site.
pub fn duality_verdict(xs: &[i64], forward: &[EstimateReport], dual: &[EstimateReport], tol: f64) -> Verdict {
    if let Some(v) = Verdict::censored(forward.iter().map(|f| f.censored).max().unwrap_or(0), forward.first().map_or(0, |f| f.reps)) {
        return v;
    }
    Verdict::from_checks(
        xs.iter()
            .zip(forward.iter().zip(dual))
            .map(|(x, (f, d))| {
                let gap = (f.point - d.point).abs();
                (gap <= tol, format!("forward and dual differ by {gap:.4} at x={x}"))
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Coalescing density

/// Densities strictly decreasing in `K` with disjoint intervals, and
/// exactly 1 at `K = 0`. Points must be sorted by `K`.
pub fn density_verdict(points: &[(f64, EstimateReport)]) -> Verdict {
    let mut checks = Vec::new();
    for (k, d) in points.iter().filter(|(k, _)| *k == 0.0) {
        checks.push((d.point == 1.0, format!("density at K={k} is {} not 1", d.point)));
    }
    for w in points.windows(2) {
        let ((k0, a), (k1, b)) = (&w[0], &w[1]);
        checks.push((a.ci_low > b.ci_high, format!("density intervals overlap between K={k0} and K={k1}")));
    }
    Verdict::from_checks(checks)
}

// ---------------------------------------------------------------------------
// Return-time tails

/// Largest `steps * sites * support` work accepted by [`exact_return_tail`].
pub const RETURN_TAIL_WORK: f64 = 1e9;

/// `P^0(tau_hat_0 > steps)` for the jump chain of `kernel`, by evolving the
/// sub-probability law killed at 0. `None` when the work bound is exceeded.
pub fn exact_return_tail(kernel: &Kernel, steps: u64) -> Option<f64> {
    let reach = kernel.radius().checked_mul(steps as i64)?;
    let width = 2 * reach as usize + 1;
    if steps as f64 * width as f64 * kernel.sites().len() as f64 > RETURN_TAIL_WORK {
        return None;
    }
    let origin = reach as usize;
    let mut law = vec![0.0; width];
    law[origin] = 1.0;
    let mut next = vec![0.0; width];
    for s in 0..steps {
        next.iter_mut().for_each(|v| *v = 0.0);
        let span = (kernel.radius() * s as i64) as usize;
        for i in origin - span..=origin + span {
            let mass = law[i];
            if mass == 0.0 {
                continue;
            }
            for (d, p) in kernel.support() {
                next[(i as i64 + d) as usize] += mass * p;
            }
        }
        next[origin] = 0.0;
        std::mem::swap(&mut law, &mut next);
    }
    Some(law.iter().sum())
}

/// `sigma sqrt(2 / pi)`: the limit of `n P(tau_hat_0 > n^2)`.
pub fn return_tail_constant(kernel: &Kernel) -> f64 {
    (kernel.moment(2.0) * 2.0 / std::f64::consts::PI).sqrt()
}

/// Smallest `n` at which the asymptotic constant is asserted.
pub const RETURN_TAIL_ASYMPTOTIC_N: u64 = 30;

/// Exact values inside the CIs; `n P` within `rel_tol` of the limit for
/// `n >= 30`. Items are `(n, P(tau_hat_0 > n^2), exact)`.
pub fn return_tail_verdict(kernel: &Kernel, points: &[(u64, EstimateReport, Option<f64>)], rel_tol: f64) -> Verdict {
    let limit = return_tail_constant(kernel);
    let mut checks = Vec::new();
    for (n, p, exact) in points {
        if let Some(e) = exact {
            checks.push((p.contains(*e), format!("exact {e:.6} outside CI at n={n}")));
        }
        if *n >= RETURN_TAIL_ASYMPTOTIC_N {
            let rel = (*n as f64 * p.point / limit - 1.0).abs();
            checks.push((rel <= rel_tol, format!("n P off the limit {limit:.4} by {:.1}% at n={n}", 100.0 * rel)));
        }
    }
    Verdict::from_checks(checks)
}

/// Every exact value lies in its Monte Carlo CI.
pub fn exact_agreement_verdict(points: &[(String, EstimateReport, Option<f64>)]) -> Verdict {
    Verdict::from_checks(
        points
            .iter()
            .filter_map(|(at, p, e)| e.map(|e| (p.contains(e), format!("exact {e:.6} outside CI at {at}"))))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_kernel;

    #[test]
    fn exact_return_tail_small_cases() {
        let nn = kernel("nearest_neighbor");
        assert!((exact_return_tail(&nn, 4).unwrap() - 0.375).abs() < 1e-15);
        assert!((exact_return_tail(&nn, 2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(exact_return_tail(&nn, 0), Some(1.0));
        let ur = kernel("uniform_range(2)");
        // One step never returns; two steps return with probability 1/4.
        assert!((exact_return_tail(&ur, 2).unwrap() - 0.75).abs() < 1e-15);
        let n = 30u64;
        let p = exact_return_tail(&nn, n * n).unwrap();
        assert!((n as f64 * p / return_tail_constant(&nn) - 1.0).abs() < 0.01);
    }

    #[test]
    fn density_verdict_rules() {
        let e = |v: f64| EstimateReport::exact(v);
        assert!(density_verdict(&[(0.0, e(1.0)), (4.0, e(0.3)), (16.0, e(0.1))]).is_pass());
        assert!(!density_verdict(&[(0.0, e(0.99))]).is_pass());
        assert!(!density_verdict(&[(4.0, e(0.3)), (16.0, e(0.3))]).is_pass());
    }

    fn kernel(s: &str) -> Kernel {
        build_kernel(&s.parse().unwrap()).unwrap()
    }

    #[test]
    fn vk_structural_zeros() {
        let nn = kernel("nearest_neighbor");
        let s = Stream::new(1, "vk");
        let pts: Vec<VkPoint> = [(2, 10.0), (5, 100.0)]
            .iter()
            .map(|&(k, t)| exp_vk(&nn, k, t, 2000, &s.child(&format!("{k}-{t}"))).unwrap())
            .collect();
        assert!(pts.iter().all(|p| p.probability.point == 0.0));
        assert!(vk_verdict(&nn, &pts).is_pass());
        let ur = kernel("uniform_range(2)");
        let tiny = exp_vk(&ur, 5, 0.01, 10_000, &s.child("tiny")).unwrap();
        assert_eq!(tiny.probability.point, 0.0);
    }

    #[test]
    fn vk_normalized_ratio_does_not_grow() {
        let ur = kernel("uniform_range(2)");
        let s = Stream::new(2, "vk-grid");
        let pts: Vec<VkPoint> = [100.0, 1000.0]
            .iter()
            .map(|&t| exp_vk(&ur, 4, t, 20_000, &s.child(&t.to_string())).unwrap())
            .collect();
        assert!(pts[0].probability.point > 0.0);
        assert!(vk_verdict(&ur, &pts).is_pass(), "{pts:?}");
    }

    #[test]
    fn akr_matches_two_stage_exact_solve() {
        let ur = kernel("uniform_range(2)");
        let exact = exact_akr(&ur, 4, 1, 4000).unwrap();
        assert!(exact > 0.0 && exact < 1.0);
        let p = exp_akr(&ur, 4, 1, 40_000, &Stream::new(3, "akr")).unwrap();
        assert!(p.probability.contains(exact), "{exact} {:?}", p.probability);
    }

    #[test]
    fn akr_exact_nearest_neighbor_closed_form() {
        // Skip-free: exit at exactly 2k, then ruin from 2k on (0, 4k): 1/2.
        let nn = kernel("nearest_neighbor");
        let p = exact_akr(&nn, 3, 1, 4000).unwrap();
        assert!((p - (3.0 / 6.0) * 0.5).abs() < 1e-10, "{p}");
    }

    #[test]
    fn overshoot_bounds() {
        let s = Stream::new(4, "ov");
        let nn = kernel("nearest_neighbor");
        let p = exp_overshoot(&nn, 4, 1, 500, &s, Some(1_000_000)).unwrap();
        assert_eq!(p.mean_overshoot.point, 0.0);
        let ur = kernel("uniform_range(2)");
        let q = exp_overshoot(&ur, 4, 1, 500, &s.child("ur"), Some(1_000_000)).unwrap();
        assert!(q.mean_overshoot.point <= 1.0 && q.mean_overshoot.point > 0.0);
        assert!(q.far_exit.point == 0.0);
    }

    #[test]
    fn uk_far_examples() {
        let ur = kernel("uniform_range(2)");
        let s = Stream::new(5, "uk");
        let far = exp_uk_far(&ur, -4, 1000.0, 4.0, 2000, &s).unwrap();
        assert_eq!(far.joint.point, 0.0);
        let nn = kernel("nearest_neighbor");
        let u = exp_uk_far(&nn, -1, 1.0, 20.0, 20_000, &s.child("nn")).unwrap();
        let spec = StoppingSpec::new(vec![TargetSet::Point(0)]).with_horizon(20.0);
        let diff = crate::walks::RandomWalk::difference(&nn);
        let surv = rng::replicate(&s.child("diff"), 20_000, |_, rng| diff.run(1, &spec, rng, false).stop)
            .unwrap()
            .into_iter()
            .filter(|s| *s == Stop::HorizonExpired)
            .count() as u64;
        let oracle = EstimateReport::proportion(surv, 20_000, 0);
        assert!(u.no_collision.agrees_with(&oracle), "{:?} {:?}", u.no_collision, oracle);
    }

    #[test]
    fn excursion_probabilities_are_positive() {
        let nn = kernel("nearest_neighbor");
        let s = Stream::new(6, "exc");
        let a = exp_excursion(&nn, 2, 100.0, 10_000, &s).unwrap();
        assert!(a.long_excursion.point > 0.0 && a.long_excursion.point < 1.0);
        let b = exp_excursion(&nn, 2, 400.0, 10_000, &s.child("400")).unwrap();
        let ratio = a.long_excursion.point / b.long_excursion.point;
        assert!(ratio > 0.5 && ratio < 2.0);
        let one = exp_excursion(&nn, 1, 3.0, 10_000, &s.child("k1")).unwrap();
        assert!(one.conditional.point > 0.0);
        assert!(exp_excursion(&nn, 3, 18.0, 10, &s).is_err());
    }

    #[test]
    fn tightness_nearest_neighbor_is_all_zero() {
        let nn = kernel("nearest_neighbor");
        let table = exp_tightness_sweep(&nn, &[50.0, 10.0], &[0, 2, 5], 200, &Stream::new(7, "nn"), 1 << 20).unwrap();
        assert_eq!(table.t_list, vec![10.0, 50.0]);
        assert!(table.survival.iter().flatten().all(|e| e.point == 0.0));
        assert!(table.medians.iter().all(|m| m.point == 0.0));
        assert!(tightness_verdict(&nn, &table, Expectation::Tight).is_pass());
    }

    #[test]
    fn tightness_refuses_drift() {
        let skew = Kernel::from_masses(vec![(-1, 0.3), (2, 0.7)], crate::KernelFamily::Custom).unwrap();
        assert!(exp_tightness_sweep(&skew, &[1.0], &[1], 100, &Stream::new(8, "d"), 100).is_err());
    }

    #[test]
    fn tightness_censoring_is_inconclusive() {
        let k = kernel("power_law(1.2, 10000)");
        let table = exp_tightness_sweep(&k, &[200.0], &[2], 100, &Stream::new(9, "c"), 16).unwrap();
        assert!(table.censored > 1);
        assert!(matches!(tightness_verdict(&k, &table, Expectation::NotTight), Verdict::Inconclusive(_)));
    }

    #[test]
    fn schedule_jump_event_matches_analytic_value() {
        let k = kernel("power_law(1.2, 100000)");
        let opts = ScheduleOptions {
            c: 0.25,
            k_list: vec![3],
            reps: 5000,
            voter_reps: 100,
            hybrid_cap: 1 << 20,
        };
        let rows = exp_theorem2_schedule(&k, &opts, &Stream::new(10, "sched")).unwrap();
        let r = &rows[0];
        assert_eq!(r.m_k, 8);
        assert!((r.jump_event_analytic - 0.25 * (-0.5f64).exp()).abs() < 1e-15);
        assert!(r.jump_event.contains(r.jump_event_analytic), "{:?}", r.jump_event);
        let rel = (r.second_moment.point / r.second_moment_analytic - 1.0).abs();
        assert!(rel < 0.1, "{rel}");
        let light = kernel("uniform_range(2)");
        assert!(exp_theorem2_schedule(&light, &opts, &Stream::new(10, "x")).is_err());
        let short = kernel("power_law(1.2, 20)");
        assert!(exp_theorem2_schedule(&short, &opts, &Stream::new(10, "y")).is_err());
    }

    #[test]
    fn green_three_way_small_instance() {
        let ur = kernel("uniform_range(2)");
        let g = exp_greenfn(&ur, (4, 1, 2, 2), 20_000, &Stream::new(11, "g"), 4000).unwrap();
        assert!(g.exact.is_some());
        assert!(green_verdict(&[g.clone()], 5.0).is_pass(), "{g:?}");
        assert!(exp_greenfn(&ur, (4, 1, 0, 2), 10, &Stream::new(11, "bad"), 4000).is_err());
    }

    #[test]
    fn forward_marginals_at_time_zero() {
        let ur = kernel("uniform_range(2)");
        let m = exp_forward_marginals(&ur, &[0, 1], 0.0, 100, &Stream::new(12, "f"), 1 << 20).unwrap();
        assert_eq!((m[0].point, m[1].point), (1.0, 0.0));
    }

    #[test]
    fn verdict_display() {
        assert_eq!(Verdict::Pass.to_string(), "pass");
        assert_eq!(Verdict::Inconclusive("censored".into()).to_string(), "inconclusive: censored");
    }
}
