//! Random walks on Z: continuous-time and embedded-chain simulation with
//! first-passage stopping, exact absorption solves on finite intervals, and
//! the potential kernel.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::rng::{self, Stream};
use crate::stats::EstimateReport;

/// Jumps after which a walk is abandoned and reported as censored.
pub const DEFAULT_MAX_JUMPS: u64 = 100_000_000;

pub const DEFAULT_SOLVE_CEILING: usize = 4000;

const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetSet {
    Point(i64),
    /// `{x <= a}`
    AtMost(i64),
    /// `{x >= b}`
    AtLeast(i64),
    /// `{x <= lo} ∪ {x >= hi}`, the complement of the open interval.
    OutsideInterval { lo: i64, hi: i64 },
}

impl TargetSet {
    pub fn contains(&self, x: i64) -> bool {
        match *self {
            TargetSet::Point(p) => x == p,
            TargetSet::AtMost(a) => x <= a,
            TargetSet::AtLeast(b) => x >= b,
            TargetSet::OutsideInterval { lo, hi } => x <= lo || x >= hi,
        }
    }
}

impl fmt::Display for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TargetSet::Point(p) => write!(f, "point({p})"),
            TargetSet::AtMost(a) => write!(f, "at_most({a})"),
            TargetSet::AtLeast(b) => write!(f, "at_least({b})"),
            TargetSet::OutsideInterval { lo, hi } => write!(f, "outside({lo}, {hi})"),
        }
    }
}

/// When a walk stops.
#[derive(Clone, Debug, PartialEq)]
pub struct StoppingSpec {
    pub targets: Vec<TargetSet>,
    /// Continuous time, or jump count for the embedded chain.
    pub horizon: Option<f64>,
    /// Targets containing the start only count after the first jump.
    pub strict_return: bool,
    pub max_jumps: u64,
}

impl StoppingSpec {
    pub fn new(targets: Vec<TargetSet>) -> Self {
        StoppingSpec {
            targets,
            horizon: None,
            strict_return: false,
            max_jumps: DEFAULT_MAX_JUMPS,
        }
    }

    pub fn horizon_only(horizon: f64) -> Self {
        StoppingSpec::new(Vec::new()).with_horizon(horizon)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn strict(mut self) -> Self {
        self.strict_return = true;
        self
    }

    pub fn with_max_jumps(mut self, max_jumps: u64) -> Self {
        self.max_jumps = max_jumps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() && self.horizon.is_none() {
            return Err(Error::InvalidStopping(
                "no target and no horizon: the walk would never stop".into(),
            ));
        }
        if let Some(h) = self.horizon {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::InvalidStopping(format!(
                    "horizon must be finite and nonnegative, got {h}"
                )));
            }
        }
        for t in &self.targets {
            if let TargetSet::OutsideInterval { lo, hi } = *t {
                if lo >= hi {
                    return Err(Error::InvalidStopping(format!(
                        "interval complement needs lo < hi, got ({lo}, {hi})"
                    )));
                }
            }
        }
        if self.max_jumps == 0 {
            return Err(Error::InvalidStopping("max_jumps must be positive".into()));
        }
        Ok(())
    }

    fn first_target(&self, x: i64) -> Option<usize> {
        self.targets.iter().position(|t| t.contains(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    /// Index into `StoppingSpec::targets`.
    Target(usize),
    HorizonExpired,
    /// The jump cap was reached first.
    Censored,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkOutcome {
    pub stop: Stop,
    /// Continuous time, or jump count for the embedded chain.
    pub hit_time: f64,
    pub jumps: u64,
    pub final_position: i64,
    /// Time spent at each site before stopping.
    pub occupation: Option<BTreeMap<i64, f64>>,
}

impl WalkOutcome {
    pub fn hit(&self, target: usize) -> bool {
        self.stop == Stop::Target(target)
    }

    pub fn occupation_at(&self, site: i64) -> f64 {
        self.occupation
            .as_ref()
            .and_then(|o| o.get(&site).copied())
            .unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clock {
    /// Exponential holding times at the walk's rate.
    Continuous,
    /// Each jump takes one unit; time is the jump count.
    Embedded,
}

/// A walk with step law `step` jumping at total rate `rate`.
#[derive(Clone, Debug)]
pub struct RandomWalk<'k> {
    step: Cow<'k, Kernel>,
    rate: f64,
    clock: Clock,
}

impl<'k> RandomWalk<'k> {
    /// Rate-1 continuous-time walk with step law `kernel`.
    pub fn new(kernel: &'k Kernel) -> Self {
        RandomWalk {
            step: Cow::Borrowed(kernel),
            rate: 1.0,
            clock: Clock::Continuous,
        }
    }

    /// `Y1 - Y2` for independent rate-1 walks: steps `(p(x) + p(-x)) / 2`
    /// at rate 2.
    pub fn difference(kernel: &Kernel) -> RandomWalk<'static> {
        RandomWalk {
            step: Cow::Owned(kernel.symmetrize()),
            rate: 2.0,
            clock: Clock::Continuous,
        }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "walk rate must be positive");
        self.rate = rate;
        self
    }

    pub fn embedded(mut self) -> Self {
        self.clock = Clock::Embedded;
        self
    }

    pub fn step_kernel(&self) -> &Kernel {
        &self.step
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    /// Runs one walk from `start`. The spec must already be valid.
    pub fn run<R: Rng + ?Sized>(
        &self,
        start: i64,
        spec: &StoppingSpec,
        rng: &mut R,
        track_occupation: bool,
    ) -> WalkOutcome {
        let mut occupation = track_occupation.then(BTreeMap::new);
        let mut pos = start;
        let mut time = 0.0;
        let mut jumps = 0u64;
        let outcome = |stop, time, jumps, pos, occupation| WalkOutcome {
            stop,
            hit_time: time,
            jumps,
            final_position: pos,
            occupation,
        };
        if !spec.strict_return {
            if let Some(i) = spec.first_target(pos) {
                return outcome(Stop::Target(i), 0.0, 0, pos, occupation);
            }
        }
        loop {
            if jumps >= spec.max_jumps {
                return outcome(Stop::Censored, time, jumps, pos, occupation);
            }
            let hold = match self.clock {
                Clock::Continuous => rng.sample::<f64, _>(Exp1) / self.rate,
                Clock::Embedded => 1.0,
            };
            if let Some(h) = spec.horizon {
                if time + hold > h {
                    if let Some(occ) = occupation.as_mut() {
                        *occ.entry(pos).or_insert(0.0) += h - time;
                    }
                    return outcome(Stop::HorizonExpired, h, jumps, pos, occupation);
                }
            }
            if let Some(occ) = occupation.as_mut() {
                *occ.entry(pos).or_insert(0.0) += hold;
            }
            time += hold;
            pos += self.step.sample_step(rng);
            jumps += 1;
            if let Some(i) = spec.first_target(pos) {
                return outcome(Stop::Target(i), time, jumps, pos, occupation);
            }
        }
    }
}

/// Rate-1 continuous-time walk from `start`.
pub fn run_walk<R: Rng + ?Sized>(
    kernel: &Kernel,
    start: i64,
    spec: &StoppingSpec,
    rng: &mut R,
    track_occupation: bool,
) -> Result<WalkOutcome> {
    spec.validate()?;
    Ok(RandomWalk::new(kernel).run(start, spec, rng, track_occupation))
}

/// The difference of two independent rate-1 walks, simulated directly.
pub fn run_difference_walk<R: Rng + ?Sized>(
    kernel: &Kernel,
    start_gap: i64,
    spec: &StoppingSpec,
    rng: &mut R,
) -> Result<WalkOutcome> {
    spec.validate()?;
    Ok(RandomWalk::difference(kernel).run(start_gap, spec, rng, false))
}

/// Monte Carlo estimate of `P^start(tau_a < tau_b)` on the embedded chain.
/// Walks hitting neither within the jump cap are reported as censored.
pub fn hit_before(
    kernel: &Kernel,
    start: i64,
    a: TargetSet,
    b: TargetSet,
    strict: bool,
    reps: u64,
    stream: &Stream,
) -> Result<EstimateReport> {
    hit_before_with(&RandomWalk::new(kernel), start, a, b, strict, reps, stream)
}

/// As [`hit_before`] for an arbitrary walk; only the jump chain matters.
pub fn hit_before_with(
    walk: &RandomWalk<'_>,
    start: i64,
    a: TargetSet,
    b: TargetSet,
    strict: bool,
    reps: u64,
    stream: &Stream,
) -> Result<EstimateReport> {
    if reps == 0 {
        return Err(Error::Precondition("reps must be at least 1".into()));
    }
    let mut spec = StoppingSpec::new(vec![a, b]);
    spec.strict_return = strict;
    spec.validate()?;
    let walk = walk.clone().embedded();
    let stops = rng::replicate(stream, reps, |_, rng| walk.run(start, &spec, rng, false).stop)?;
    Ok(proportion_of(&stops, Stop::Target(0)))
}

fn proportion_of(stops: &[Stop], success: Stop) -> EstimateReport {
    let censored = stops.iter().filter(|s| **s == Stop::Censored).count() as u64;
    let hits = stops.iter().filter(|s| **s == success).count() as u64;
    EstimateReport::proportion(hits, stops.len() as u64 - censored, censored)
}

/// Return-time tails for the rate-1 walk and its embedded chain.
#[derive(Clone, Debug)]
pub struct ReturnTail {
    /// `P^0(tau_hat_0 >= n^2)` in continuous time.
    pub continuous: EstimateReport,
    /// `P^0(tau_hat_0 > n^2 jumps)`.
    pub embedded: EstimateReport,
}

pub fn return_tail(kernel: &Kernel, n: u64, reps: u64, stream: &Stream) -> Result<ReturnTail> {
    Ok(ReturnTail {
        continuous: return_tail_with(kernel, n, reps, &stream.child("continuous"), Clock::Continuous)?,
        embedded: return_tail_with(kernel, n, reps, &stream.child("embedded"), Clock::Embedded)?,
    })
}

/// One clock of [`return_tail`].
pub fn return_tail_with(
    kernel: &Kernel,
    n: u64,
    reps: u64,
    stream: &Stream,
    clock: Clock,
) -> Result<EstimateReport> {
    if n == 0 || reps == 0 {
        return Err(Error::Precondition("n and reps must be positive".into()));
    }
    let horizon = (n * n) as f64;
    let spec = StoppingSpec::new(vec![TargetSet::Point(0)])
        .with_horizon(horizon)
        .strict();
    let mut walk = RandomWalk::new(kernel);
    if clock == Clock::Embedded {
        walk = walk.embedded();
    }
    let stops = rng::replicate(stream, reps, |_, rng| walk.run(0, &spec, rng, false).stop)?;
    let report = proportion_of(&stops, Stop::HorizonExpired);
    let scaled = n as f64 * report.point;
    Ok(report
        .with_param("n", n as f64)
        .with_extra("n_times_estimate", scaled))
}

/// `P^x(tau_0 > t)` for the rate-1 walk, with the ratio to
/// `(|x| / sqrt(t)) ∧ 1` as extra `normalized_ratio`.
pub fn survival_from(
    kernel: &Kernel,
    x: i64,
    t: f64,
    reps: u64,
    stream: &Stream,
) -> Result<EstimateReport> {
    if x == 0 {
        return Err(Error::Precondition("survival_from needs x != 0".into()));
    }
    if reps == 0 {
        return Err(Error::Precondition("reps must be at least 1".into()));
    }
    let spec = StoppingSpec::new(vec![TargetSet::Point(0)]).with_horizon(t);
    spec.validate()?;
    let walk = RandomWalk::new(kernel);
    let stops = rng::replicate(stream, reps, |_, rng| walk.run(x, &spec, rng, false).stop)?;
    let report = proportion_of(&stops, Stop::HorizonExpired);
    let scale = (x.unsigned_abs() as f64 / t.sqrt()).min(1.0);
    let ratio = report.point / scale;
    Ok(report
        .with_param("x", x as f64)
        .with_param("t", t)
        .with_extra("normalized_ratio", ratio))
}

/// Exact absorption probabilities and Green's function of the embedded
/// chain killed on entering any of the target classes.
///
/// Transient sites are the points of `(lo, hi)` not in any class; a class
/// may contain interior points, which then absorb.
#[derive(Clone, Debug)]
pub struct ExactSolve {
    lo: i64,
    hi: i64,
    classes: Vec<TargetSet>,
    rate: f64,
    sites: Vec<i64>,
    index: HashMap<i64, usize>,
    /// `absorption[(i, c)]`: probability of stopping in class `c` from `sites[i]`.
    absorption: DMatrix<f64>,
    /// `green[(i, j)]`: expected visits to `sites[j]` from `sites[i]`,
    /// counting time 0.
    green: DMatrix<f64>,
}

/// Exact solve with the default ceiling at jump rate 1.
pub fn exact_solve(kernel: &Kernel, interval: (i64, i64), classes: &[TargetSet]) -> Result<ExactSolve> {
    ExactSolve::new(kernel, interval, classes, DEFAULT_SOLVE_CEILING)
}

impl ExactSolve {
    pub fn new(
        kernel: &Kernel,
        (lo, hi): (i64, i64),
        classes: &[TargetSet],
        ceiling: usize,
    ) -> Result<ExactSolve> {
        if lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "interval needs lo < hi, got ({lo}, {hi})"
            )));
        }
        let classify = |x: i64| classes.iter().position(|c| c.contains(x));
        let sites: Vec<i64> = (lo + 1..hi).filter(|&x| classify(x).is_none()).collect();
        let n = sites.len();
        if n > ceiling {
            return Err(Error::SolveTooLarge {
                unknowns: n,
                ceiling,
            });
        }
        let index: HashMap<i64, usize> = sites.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        let k = classes.len();

        // A = I - Q, rhs = R.
        let mut a = DMatrix::<f64>::identity(n, n);
        let mut rhs = DMatrix::<f64>::zeros(n, k);
        for (i, &x) in sites.iter().enumerate() {
            for (d, m) in kernel.support() {
                let y = x + d;
                if let Some(&j) = index.get(&y) {
                    a[(i, j)] -= m;
                } else if let Some(c) = classify(y) {
                    rhs[(i, c)] += m;
                } else {
                    return Err(Error::UnclassifiedExit { site: y });
                }
            }
        }

        let lu = a.clone().lu();
        let green = lu
            .try_inverse()
            .ok_or(Error::SingularSystem { residual: f64::INFINITY })?;
        let absorption = &green * &rhs;
        let residual = (&a * &green - DMatrix::<f64>::identity(n, n))
            .amax()
            .max((&a * &absorption - &rhs).amax());
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::SingularSystem { residual });
        }
        Ok(ExactSolve {
            lo,
            hi,
            classes: classes.to_vec(),
            rate: 1.0,
            sites,
            index,
            absorption,
            green,
        })
    }

    /// Sets the jump rate used to convert visits to occupation time.
    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    pub fn interval(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn transient_sites(&self) -> &[i64] {
        &self.sites
    }

    /// Probability that the chain from `start` stops in class `class`.
    /// A start already inside a class stops there at time 0.
    pub fn absorption(&self, start: i64, class: usize) -> f64 {
        match self.index.get(&start) {
            Some(&i) => self.absorption[(i, class)],
            None => {
                let first = self.classes.iter().position(|c| c.contains(start));
                (first == Some(class)) as u8 as f64
            }
        }
    }

    /// Expected visits to `site` before absorption, from `start`.
    pub fn green(&self, start: i64, site: i64) -> f64 {
        match (self.index.get(&start), self.index.get(&site)) {
            (Some(&i), Some(&j)) => self.green[(i, j)],
            _ => 0.0,
        }
    }

    /// Expected continuous time at `site` before absorption.
    pub fn occupation(&self, start: i64, site: i64) -> f64 {
        self.green(start, site) / self.rate
    }

    /// Writes the absorption and Green matrices as long-format CSV
    /// (`matrix,row,column,value`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["matrix", "row", "column", "value"])?;
        for (i, &x) in self.sites.iter().enumerate() {
            for (c, class) in self.classes.iter().enumerate() {
                w.write_record([
                    "absorption".to_string(),
                    x.to_string(),
                    class.to_string(),
                    self.absorption[(i, c)].to_string(),
                ])?;
            }
        }
        for (i, &x) in self.sites.iter().enumerate() {
            for (j, &y) in self.sites.iter().enumerate() {
                w.write_record([
                    "green".to_string(),
                    x.to_string(),
                    y.to_string(),
                    self.green[(i, j)].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `P^x(tau_l < tau_{I^c})` and `P^l(tau_{I^c} < tau_hat_l)` on
/// `I = (lo, hi)`, from one solve in which `l` absorbs.
pub fn exact_hit_and_escape(kernel: &Kernel, (lo, hi): (i64, i64), x: i64, l: i64) -> Result<(f64, f64)> {
    if !(lo < l && l < hi) {
        return Err(Error::InvalidParameter(format!("{l} is not inside ({lo}, {hi})")));
    }
    let classes = [TargetSet::Point(l), TargetSet::OutsideInterval { lo, hi }];
    let solve = exact_solve(kernel, (lo, hi), &classes)?;
    let hit = solve.absorption(x, 0);
    let escape = kernel
        .support()
        .map(|(d, m)| m * solve.absorption(l + d, 1))
        .sum();
    Ok((hit, escape))
}

/// Truncated potential kernel with its last increment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialEstimate {
    pub value: f64,
    pub last_increment: f64,
    pub terms: usize,
}

const POTENTIAL_ESCAPE_TOL: f64 = 1e-12;
const POTENTIAL_TRIM: f64 = 1e-40;
/// Largest window half-width chosen automatically.
const POTENTIAL_MAX_HALF_WIDTH: usize = 1 << 22;

/// `a(x) = sum_{i < terms} (P^0(X_i = 0) - P^x(X_i = 0))` for a symmetric
/// kernel, on a window sized from a Hoeffding bound on the spread.
pub fn potential_kernel(kernel: &Kernel, x: i64, terms: usize) -> Result<PotentialEstimate> {
    let r = kernel.radius() as f64;
    let hoeffding = r * (66.0 * terms as f64).sqrt();
    let half = hoeffding.min(r * terms as f64).ceil() as usize + x.unsigned_abs() as usize + 1;
    if half > POTENTIAL_MAX_HALF_WIDTH {
        return Err(Error::WindowOverflow {
            term: 0,
            escaped: f64::NAN,
            required: half,
        });
    }
    potential_kernel_windowed(kernel, x, terms, half)
}

/// As [`potential_kernel`] with an explicit window `[-half, half]`.
pub fn potential_kernel_windowed(
    kernel: &Kernel,
    x: i64,
    terms: usize,
    half: usize,
) -> Result<PotentialEstimate> {
    if !kernel.is_symmetric() {
        return Err(Error::Precondition("potential kernel needs a symmetric kernel".into()));
    }
    if terms == 0 {
        return Err(Error::Precondition("terms must be at least 1".into()));
    }
    if x.unsigned_abs() as usize > half {
        return Err(Error::InvalidParameter(format!("site {x} outside window of half-width {half}")));
    }
    let width = 2 * half + 1;
    let mut cur = vec![0.0f64; width];
    let mut next = vec![0.0f64; width];
    let c = half as i64;
    cur[half] = 1.0;
    let (mut lo, mut hi) = (half, half);
    let mut sum = 0.0;
    let mut last = 0.0;
    let xi = (c + x) as usize;
    for term in 0..terms {
        // X_i from x hits 0 with the same probability X_i from 0 hits -x = x.
        last = cur[half] - cur[xi];
        sum += last;
        if term + 1 == terms {
            break;
        }
        let mut escaped = 0.0;
        let (mut new_lo, mut new_hi) = (usize::MAX, 0usize);
        for (d, m) in kernel.support() {
            let from = lo as i64 + d;
            let to = hi as i64 + d;
            let in_lo = from.max(0);
            let in_hi = to.min(width as i64 - 1);
            for j in from..in_lo.min(to + 1) {
                escaped += m * cur[(j - d) as usize];
            }
            for j in (in_hi + 1).max(from)..=to {
                escaped += m * cur[(j - d) as usize];
            }
            if in_lo > in_hi {
                continue;
            }
            let (a, b) = (in_lo as usize, in_hi as usize);
            let src = (in_lo - d) as usize;
            for (dst, &v) in next[a..=b].iter_mut().zip(&cur[src..src + (b - a + 1)]) {
                *dst += m * v;
            }
            new_lo = new_lo.min(a);
            new_hi = new_hi.max(b);
        }
        if escaped > POTENTIAL_ESCAPE_TOL {
            return Err(Error::WindowOverflow {
                term: term + 1,
                escaped,
                required: 2 * half,
            });
        }
        for v in &mut cur[lo..=hi] {
            *v = 0.0;
        }
        std::mem::swap(&mut cur, &mut next);
        while new_lo < new_hi && cur[new_lo] < POTENTIAL_TRIM {
            cur[new_lo] = 0.0;
            new_lo += 1;
        }
        while new_hi > new_lo && cur[new_hi] < POTENTIAL_TRIM {
            cur[new_hi] = 0.0;
            new_hi -= 1;
        }
        lo = new_lo.min(half);
        hi = new_hi.max(half);
        lo = lo.min(xi);
        hi = hi.max(xi);
    }
    Ok(PotentialEstimate {
        value: sum,
        last_increment: last.abs(),
        terms,
    })
}
