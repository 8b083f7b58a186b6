//! Coalescing random walks: the dual of the voter model.
//!
//! Walkers are run forward in dual time. Each live walker jumps at rate 1
//! by an independent draw from the kernel; a walker landing on an occupied
//! site is absorbed by the occupant.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::rng::{self, Stream};
use crate::stats::EstimateReport;
use crate::walks::{run_walk, StoppingSpec};

/// A coalescence: `absorbed` jumped onto `survivor` at dual time `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeRecord {
    pub time: f64,
    pub absorbed: usize,
    pub survivor: usize,
}

#[derive(Clone, Debug)]
pub struct WalkerSet {
    clock: f64,
    /// Live `(id, site)` pairs in no particular order.
    live: Vec<(usize, i64)>,
    /// Site to slot in `live`.
    occupancy: BTreeMap<i64, usize>,
    /// Union-find over walker ids; a live walker is its own root.
    parent: Vec<usize>,
    /// Current site of each live walker (stale for absorbed ones).
    site_of: Vec<i64>,
    merges: Vec<MergeRecord>,
}

/// One walker per site; ids follow the order of `sites`.
pub fn init_walkers(sites: &[i64]) -> Result<WalkerSet> {
    let mut occupancy = BTreeMap::new();
    let mut live = Vec::with_capacity(sites.len());
    for (id, &x) in sites.iter().enumerate() {
        if occupancy.insert(x, id).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate walker site {x}")));
        }
        live.push((id, x));
    }
    Ok(WalkerSet {
        clock: 0.0,
        live,
        occupancy,
        parent: (0..sites.len()).collect(),
        site_of: sites.to_vec(),
        merges: Vec::new(),
    })
}

impl WalkerSet {
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn walker_count(&self) -> usize {
        self.parent.len()
    }

    /// Live walkers as `(site, id)` in increasing site order.
    pub fn survivors(&self) -> impl Iterator<Item = (i64, usize)> + '_ {
        self.occupancy.iter().map(move |(&x, &slot)| (x, self.live[slot].0))
    }

    /// Live walkers with sites in `[lo, hi)`.
    pub fn live_in(&self, lo: i64, hi: i64) -> usize {
        self.occupancy.range(lo..hi).count()
    }

    pub fn merges(&self) -> &[MergeRecord] {
        &self.merges
    }

    /// The live walker that `id` has coalesced into.
    pub fn root(&mut self, id: usize) -> usize {
        let mut r = id;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = id;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    /// Current position of the walker started as `id`.
    pub fn position(&mut self, id: usize) -> i64 {
        let r = self.root(id);
        self.site_of[r]
    }

    pub fn coalesced(&mut self, a: usize, b: usize) -> bool {
        self.root(a) == self.root(b)
    }

    /// Number of distinct union-find roots.
    pub fn root_count(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.parent[i] == i).count()
    }

    /// Runs the coalescing dynamics for `duration` more units of dual time.
    pub fn evolve<R: Rng + ?Sized>(&mut self, kernel: &Kernel, duration: f64, rng: &mut R) -> Result<()> {
        if !(duration >= 0.0) {
            return Err(Error::Precondition(format!("duration must be nonnegative, got {duration}")));
        }
        let end = self.clock + duration;
        loop {
            let n = self.live.len();
            if n == 0 {
                self.clock = end;
                return Ok(());
            }
            let wait = rng.sample::<f64, _>(Exp1) / n as f64;
            if self.clock + wait >= end {
                self.clock = end;
                return Ok(());
            }
            self.clock += wait;
            let slot = rng.random_range(0..n);
            self.jump(slot, kernel.sample_step(rng));
        }
    }

    fn jump(&mut self, slot: usize, step: i64) {
        let (id, from) = self.live[slot];
        let to = from + step;
        self.occupancy.remove(&from);
        if let Some(&occupant) = self.occupancy.get(&to) {
            let survivor = self.live[occupant].0;
            self.parent[id] = survivor;
            self.merges.push(MergeRecord {
                time: self.clock,
                absorbed: id,
                survivor,
            });
            self.live.swap_remove(slot);
            if slot < self.live.len() {
                let (_, moved_site) = self.live[slot];
                self.occupancy.insert(moved_site, slot);
            }
        } else {
            self.live[slot].1 = to;
            self.site_of[id] = to;
            self.occupancy.insert(to, slot);
        }
    }

    /// Writes the merge history as CSV (`merge_time,absorbed_id,surviving_id`).
    pub fn write_merges<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["merge_time", "absorbed_id", "surviving_id"])?;
        for m in &self.merges {
            w.write_record([m.time.to_string(), m.absorbed.to_string(), m.survivor.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `P(eta_t(x) = 1)` from the Heavyside start, estimated by one backward
/// walk from `x` run for time `t` and checked against `<= 0`.
pub fn dual_marginal(kernel: &Kernel, x: i64, t: f64, reps: u64, stream: &Stream) -> Result<EstimateReport> {
    if reps == 0 {
        return Err(Error::Precondition("reps must be at least 1".into()));
    }
    let spec = StoppingSpec::horizon_only(t);
    spec.validate()?;
    let finals = rng::replicate(stream, reps, |_, rng| {
        run_walk(kernel, x, &spec, rng, false).map(|o| o.final_position)
    })?;
    let mut ones = 0;
    for f in finals {
        ones += (f? <= 0) as u64;
    }
    Ok(EstimateReport::proportion(ones, reps, 0)
        .with_param("x", x as f64)
        .with_param("t", t))
}

/// Margin discarded on each side of the window: `ceil(10 sqrt(K) sigma)`.
pub fn density_margin(kernel: &Kernel, k: f64) -> i64 {
    (10.0 * k.sqrt() * kernel.moment(2.0).sqrt()).ceil() as i64
}

/// Density of coalescing walkers at time `k`, started from every site of
/// `[0, window)` and counted in the core away from the edges.
pub fn density(kernel: &Kernel, k: f64, window: u64, reps: u64, stream: &Stream) -> Result<EstimateReport> {
    if window < 100 {
        return Err(Error::Precondition(format!("density window must be at least 100, got {window}")));
    }
    if reps == 0 || !(k >= 0.0) {
        return Err(Error::Precondition("density needs reps >= 1 and K >= 0".into()));
    }
    let margin = density_margin(kernel, k);
    let (lo, hi) = (margin, window as i64 - margin);
    if lo >= hi {
        return Err(Error::Precondition(format!(
            "window {window} too small for margin {margin} at K = {k}"
        )));
    }
    let sites: Vec<i64> = (0..window as i64).collect();
    let values = rng::replicate(stream, reps, |_, rng| -> Result<f64> {
        let mut ws = init_walkers(&sites)?;
        ws.evolve(kernel, k, rng)?;
        Ok(ws.live_in(lo, hi) as f64 / (hi - lo) as f64)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport::mean(&values, 0, stream.replicate(u64::MAX).random())
        .with_param("K", k)
        .with_param("window", window as f64)
        .with_param("margin", margin as f64))
}

/// A neighbouring survivor pair at dual time `K` followed to time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrossingEvent {
    pub replicate: u64,
    /// Positions at dual time `K`, `w < z`.
    pub pair: (i64, i64),
    /// Not coalesced and `left >= 0 > right` at the end.
    pub crossed: bool,
    pub coalesced: bool,
    pub final_positions: (i64, i64),
}

#[derive(Clone, Debug)]
pub struct CrossingCensus {
    /// Window-restricted estimate of `P(A_K(t) > 0)`, a lower bound for
    /// the full-lattice probability.
    pub estimate: EstimateReport,
    pub pairs_examined: u64,
    /// The crossed pairs only.
    pub crossings: Vec<CrossingEvent>,
}

/// Counts order reversals about 0 among neighbouring survivor pairs.
///
/// Walkers start from every site of `[-window/2, window - window/2)`, run
/// for dual time `k`, and the whole coalescing system then continues to
/// dual time `t`. `t == k` leaves nothing to observe and yields an empty
/// census; `t < k` is an error.
pub fn crossing_census(
    kernel: &Kernel,
    t: f64,
    k: f64,
    window: u64,
    reps: u64,
    stream: &Stream,
) -> Result<CrossingCensus> {
    if !(t >= k && k >= 0.0) {
        return Err(Error::Precondition(format!("crossing census needs t >= K >= 0, got t = {t}, K = {k}")));
    }
    if reps == 0 || window < 2 {
        return Err(Error::Precondition("crossing census needs reps >= 1 and window >= 2".into()));
    }
    let half = (window / 2) as i64;
    let sites: Vec<i64> = (-half..window as i64 - half).collect();
    let degenerate = t == k;
    let per_rep = rng::replicate(stream, reps, |rep, rng| -> Result<(u64, Vec<CrossingEvent>)> {
        if degenerate {
            return Ok((0, Vec::new()));
        }
        let mut ws = init_walkers(&sites)?;
        ws.evolve(kernel, k, rng)?;
        let survivors: Vec<(i64, usize)> = ws.survivors().collect();
        ws.evolve(kernel, t - k, rng)?;
        let mut events = Vec::new();
        for pair in survivors.windows(2) {
            let ((w, a), (z, b)) = (pair[0], pair[1]);
            let coalesced = ws.coalesced(a, b);
            let (fa, fb) = (ws.position(a), ws.position(b));
            let crossed = !coalesced && fa >= 0 && 0 > fb;
            events.push(CrossingEvent {
                replicate: rep,
                pair: (w, z),
                crossed,
                coalesced,
                final_positions: (fa, fb),
            });
        }
        Ok((survivors.len().saturating_sub(1) as u64, events))
    })?;
    let mut pairs_examined = 0;
    let mut positive = 0;
    let mut crossings = Vec::new();
    for r in per_rep {
        let (pairs, events) = r?;
        pairs_examined += pairs;
        let before = crossings.len();
        crossings.extend(events.into_iter().filter(|e| e.crossed));
        positive += (crossings.len() > before) as u64;
    }
    let estimate = EstimateReport::proportion(positive, reps, 0)
        .with_param("t", t)
        .with_param("K", k)
        .with_param("window", window as f64)
        .with_extra("window_restricted_lower_bound", 1.0);
    Ok(CrossingCensus {
        estimate,
        pairs_examined,
        crossings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::build_kernel;
    use crate::stats::ks_accepts;
    use crate::walks::run_difference_walk;
    use crate::walks::TargetSet;

    fn kernel(s: &str) -> Kernel {
        build_kernel(&s.parse().unwrap()).unwrap()
    }

    #[test]
    fn init_examples() {
        let mut one = init_walkers(&[0]).unwrap();
        assert_eq!(one.live_count(), 1);
        assert_eq!(one.root_count(), 1);
        let sites: Vec<i64> = (0..10).collect();
        let mut ten = init_walkers(&sites).unwrap();
        assert_eq!((ten.live_count(), ten.root_count()), (10, 10));
        assert!(ten.merges().is_empty());
        assert_eq!(ten.clock(), 0.0);
        let mut empty = init_walkers(&[]).unwrap();
        let mut rng = Stream::new(0, "e").replicate(0);
        empty.evolve(&kernel("nearest_neighbor"), 5.0, &mut rng).unwrap();
        assert_eq!(empty.live_count(), 0);
        assert!(init_walkers(&[1, 1]).is_err());
    }

    #[test]
    fn merges_only_ever_reduce_the_live_count() {
        let k = kernel("uniform_range(2)");
        let sites: Vec<i64> = (0..10).collect();
        let mut rng = Stream::new(1, "merge").replicate(0);
        let mut ws = init_walkers(&sites).unwrap();
        let mut last = ws.live_count();
        for _ in 0..1000 {
            ws.evolve(&k, 1.0, &mut rng).unwrap();
            assert!(ws.live_count() <= last);
            last = ws.live_count();
            assert_eq!(ws.root_count(), ws.live_count());
            let occupied: Vec<i64> = ws.survivors().map(|(x, _)| x).collect();
            assert!(occupied.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(ws.live_count() < 10);
        assert_eq!(ws.merges().len(), 10 - ws.live_count());
        let mut buf = Vec::new();
        ws.write_merges(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + ws.merges().len());
    }

    #[test]
    fn single_walker_has_free_walk_law() {
        let k = kernel("uniform_range(2)");
        let reps = 10_000;
        let dual: Vec<f64> = rng::replicate(&Stream::new(2, "dual"), reps, |_, rng| {
            let mut ws = init_walkers(&[0]).unwrap();
            ws.evolve(&k, 7.0, rng).unwrap();
            ws.position(0) as f64
        })
        .unwrap();
        let spec = StoppingSpec::horizon_only(7.0);
        let free: Vec<f64> = rng::replicate(&Stream::new(2, "free"), reps, |_, rng| {
            run_walk(&k, 0, &spec, rng, false).unwrap().final_position as f64
        })
        .unwrap();
        assert!(ks_accepts(&dual, &free, 0.001));
    }

    #[test]
    fn pair_survival_matches_difference_walk() {
        // Nearest-neighbour walkers cannot pass each other without meeting,
        // so they stay apart exactly while the difference walk avoids 0.
        let k = kernel("nearest_neighbor");
        let reps = 20_000;
        let (gap, t) = (4, 30.0);
        let apart = rng::replicate(&Stream::new(3, "pair"), reps, |_, rng| {
            let mut ws = init_walkers(&[0, gap]).unwrap();
            ws.evolve(&k, t, rng).unwrap();
            (ws.live_count() == 2) as u64
        })
        .unwrap()
        .into_iter()
        .sum::<u64>();
        let spec = StoppingSpec::new(vec![TargetSet::Point(0)]).with_horizon(t);
        let diff = rng::replicate(&Stream::new(3, "diff"), reps, |_, rng| {
            (run_difference_walk(&k, gap, &spec, rng).unwrap().stop == crate::walks::Stop::HorizonExpired) as u64
        })
        .unwrap()
        .into_iter()
        .sum::<u64>();
        let a = EstimateReport::proportion(apart, reps, 0);
        let b = EstimateReport::proportion(diff, reps, 0);
        assert!(a.agrees_with(&b), "{} vs {}", a.point, b.point);
    }

    #[test]
    fn dual_marginal_degenerate_times() {
        let k = kernel("uniform_range(2)");
        let s = Stream::new(4, "m");
        assert_eq!(dual_marginal(&k, 0, 0.0, 100, &s).unwrap().point, 1.0);
        assert_eq!(dual_marginal(&k, 1, 0.0, 100, &s).unwrap().point, 0.0);
    }

    #[test]
    fn dual_marginal_reflection() {
        let k = kernel("uniform_range(2)");
        for x in [-2, 0, 3] {
            let a = dual_marginal(&k, x, 6.0, 20_000, &Stream::new(5, &format!("a{x}"))).unwrap();
            let b = dual_marginal(&k, 1 - x, 6.0, 20_000, &Stream::new(5, &format!("b{x}"))).unwrap();
            let mut flipped = b.clone();
            flipped.point = 1.0 - b.point;
            (flipped.ci_low, flipped.ci_high) = (1.0 - b.ci_high, 1.0 - b.ci_low);
            assert!(a.agrees_with(&flipped), "x={x}: {} + {}", a.point, b.point);
        }
    }

    #[test]
    fn density_starts_at_one_and_decays() {
        let k = kernel("nearest_neighbor");
        let s = Stream::new(6, "dens");
        let d0 = density(&k, 0.0, 200, 5, &s).unwrap();
        assert_eq!(d0.point, 1.0);
        let d4 = density(&k, 4.0, 1000, 100, &s.child("4")).unwrap();
        let d16 = density(&k, 16.0, 1000, 100, &s.child("16")).unwrap();
        assert!(d4.ci_low > d16.ci_high, "{d4:?} {d16:?}");
        assert!(density(&k, 4.0, 50, 5, &s).is_err());
    }

    #[test]
    fn density_decays_diffusively() {
        let k = kernel("nearest_neighbor");
        let s = Stream::new(7, "diffusive");
        let d25 = density(&k, 25.0, 1000, 100, &s.child("25")).unwrap().point * 5.0;
        let d100 = density(&k, 100.0, 1000, 100, &s.child("100")).unwrap().point * 10.0;
        assert!(d25 / d100 < 2.0 && d100 / d25 < 2.0, "{d25} {d100}");
    }

    #[test]
    fn nearest_neighbor_census_is_empty() {
        let k = kernel("nearest_neighbor");
        let c = crossing_census(&k, 60.0, 5.0, 100, 50, &Stream::new(8, "nn")).unwrap();
        assert_eq!(c.estimate.point, 0.0);
        assert!(c.crossings.is_empty());
        assert!(c.pairs_examined > 0);
    }

    #[test]
    fn census_degenerate_and_invalid_intervals() {
        let k = kernel("uniform_range(2)");
        let s = Stream::new(9, "deg");
        let c = crossing_census(&k, 10.0, 10.0, 50, 5, &s).unwrap();
        assert_eq!(c.estimate.point, 0.0);
        assert_eq!(c.pairs_examined, 0);
        assert!(crossing_census(&k, 5.0, 10.0, 50, 5, &s).is_err());
    }

    #[test]
    fn census_events_are_coherent_and_decay_in_k() {
        let k = kernel("uniform_range(2)");
        let s = Stream::new(10, "census");
        let early = crossing_census(&k, 400.0, 5.0, 100, 300, &s.child("5")).unwrap();
        let late = crossing_census(&k, 400.0, 50.0, 100, 300, &s.child("50")).unwrap();
        for e in early.crossings.iter().chain(&late.crossings) {
            assert!(e.crossed && !e.coalesced);
            assert!(e.final_positions.0 >= 0 && e.final_positions.1 < 0);
            assert!(e.pair.0 < e.pair.1);
        }
        assert!(late.estimate.not_above(&early.estimate), "{:?} {:?}", late.estimate, early.estimate);
    }
}
