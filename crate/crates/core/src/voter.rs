//! Forward voter model from the Heavyside configuration.
//!
//! The configuration is stored as a finite buffer of cells: everything left
//! of the buffer is 1, everything right of it is 0. A *wall* at `b` means
//! `eta(b) != eta(b + 1)`; walls are the only places where a copy event can
//! change anything, since a target and its source hold different values iff
//! an odd number of walls lies between them.
//!
//! Dynamics: each site rings at rate 1 and copies the value at an offset
//! drawn from `p`. The pairs `(target, target + d)` that straddle a fixed
//! wall have total rate `E|d|`, so proposals are generated at rate
//! `walls * E|d|` by picking a wall uniformly, a signed offset from the
//! size-biased law `|d| p(d) / E|d|`, and the target uniformly among the
//! `|d|` positions that straddle the wall. A pair straddling `c` walls is
//! proposed at rate `c p(d)`, so it is accepted with probability `1/c`,
//! and only when `c` is odd (otherwise the copy is a no-op). The result is
//! exact in law on the infinite lattice and never materializes a ring that
//! cannot change a value.

use std::io::Write;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::fenwick::Fenwick;
use crate::kernels::Kernel;

pub const DEFAULT_HYBRID_CAP: i64 = 1 << 20;

const MIN_MARGIN: i64 = 16;

/// Voter configuration compressed to its hybrid zone.
#[derive(Clone, Debug)]
pub struct InterfaceState {
    time: f64,
    left_zero: i64,
    right_one: i64,
    origin: i64,
    cells: Vec<u8>,
    walls: Fenwick,
    /// Absolute wall positions in arbitrary order, for uniform sampling.
    wall_list: Vec<i64>,
    /// Index into `wall_list` per cell, `NO_WALL` when absent.
    wall_slot: Vec<u32>,
}

const NO_WALL: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InterfaceStats {
    pub left_zero: i64,
    pub right_one: i64,
    /// `r - l + 1`, zero for a sorted configuration.
    pub size: i64,
    pub inversions: u64,
}

/// One applied copy: `site` took the value found at `site + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CopyEvent {
    pub time: f64,
    pub site: i64,
    pub offset: i64,
}

/// 1s on `x <= 0`, 0s on `x >= 1`.
pub fn init_heavyside() -> InterfaceState {
    InterfaceState::from_configuration(1, &[])
}

impl InterfaceState {
    /// Builds the configuration that is 1 left of `first`, `bits` on
    /// `[first, first + bits.len())`, and 0 afterwards.
    pub fn from_configuration(first: i64, bits: &[u8]) -> InterfaceState {
        let origin = first - MIN_MARGIN;
        let mut cells = vec![1u8; MIN_MARGIN as usize];
        cells.extend(bits.iter().map(|&b| (b != 0) as u8));
        cells.extend(std::iter::repeat_n(0u8, MIN_MARGIN as usize));
        let mut state = InterfaceState {
            time: 0.0,
            left_zero: 0,
            right_one: 0,
            origin,
            cells,
            walls: Fenwick::default(),
            wall_list: Vec::new(),
            wall_slot: Vec::new(),
        };
        state.rebuild_indices();
        state
    }

    fn rebuild_indices(&mut self) {
        self.walls = Fenwick::from_counts(
            self.cells.windows(2).map(|w| (w[0] != w[1]) as i64),
        );
        self.wall_list.clear();
        self.wall_slot = vec![NO_WALL; self.cells.len()];
        for (i, w) in self.cells.windows(2).enumerate() {
            if w[0] != w[1] {
                self.wall_slot[i] = self.wall_list.len() as u32;
                self.wall_list.push(self.origin + i as i64);
            }
        }
        self.refresh_bounds();
    }

    fn refresh_bounds(&mut self) {
        let n = self.walls.total();
        debug_assert!(n >= 1 && n % 2 == 1);
        self.left_zero = self.origin + self.walls.find_kth(1) as i64 + 1;
        self.right_one = self.origin + self.walls.find_kth(n) as i64;
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn left_zero(&self) -> i64 {
        self.left_zero
    }

    pub fn right_one(&self) -> i64 {
        self.right_one
    }

    /// Pairs `x < y` in the hybrid zone with `eta(x) = 0`, `eta(y) = 1`.
    /// Computed by a scan of the hybrid zone.
    pub fn inversion_count(&self) -> u64 {
        let mut zeros = 0u64;
        let mut count = 0u64;
        for x in self.left_zero..=self.right_one {
            if self.value(x) == 0 {
                zeros += 1;
            } else {
                count += zeros;
            }
        }
        count
    }

    /// Number of walls, i.e. value changes along the line (always odd).
    pub fn wall_count(&self) -> u64 {
        self.walls.total() as u64
    }

    pub fn value(&self, site: i64) -> u8 {
        if site < self.origin {
            1
        } else if site >= self.origin + self.cells.len() as i64 {
            0
        } else {
            self.cells[(site - self.origin) as usize]
        }
    }

    /// Site values on `[l, r]`; empty when sorted.
    pub fn hybrid(&self) -> Vec<u8> {
        (self.left_zero..=self.right_one).map(|x| self.value(x)).collect()
    }

    pub fn stats(&self) -> InterfaceStats {
        interface_stats(self)
    }

    /// Walls strictly between sites `a < b`, i.e. at positions `a..b`.
    fn walls_between(&self, a: i64, b: i64) -> i64 {
        let n = self.cells.len() as i64 - 1;
        let lo = (a - self.origin).clamp(0, n) as usize;
        let hi = (b - self.origin).clamp(0, n) as usize;
        self.walls.range(lo, hi)
    }

    fn ensure_covers(&mut self, lo: i64, hi: i64) {
        let end = self.origin + self.cells.len() as i64;
        if lo > self.origin && hi < end - 1 {
            return;
        }
        let margin = MIN_MARGIN.max(self.cells.len() as i64 / 2);
        let new_origin = self.origin.min(lo - margin);
        let new_end = end.max(hi + margin + 1);
        let mut cells = Vec::with_capacity((new_end - new_origin) as usize);
        cells.extend(std::iter::repeat_n(1u8, (self.origin - new_origin) as usize));
        cells.extend_from_slice(&self.cells);
        cells.extend(std::iter::repeat_n(0u8, (new_end - end) as usize));
        self.origin = new_origin;
        self.cells = cells;
        self.rebuild_indices();
    }

    /// Site `target` copies the value at `source`. Returns whether the
    /// configuration changed.
    pub fn apply_copy(&mut self, target: i64, source: i64) -> bool {
        let v = self.value(source);
        if self.value(target) == v {
            return false;
        }
        self.ensure_covers(target - 1, target + 1);
        let idx = (target - self.origin) as usize;
        self.cells[idx] = v;
        for j in [idx.wrapping_sub(1), idx] {
            if j + 1 < self.cells.len() {
                let now = self.cells[j] != self.cells[j + 1];
                let before = self.wall_slot[j] != NO_WALL;
                if now != before {
                    self.toggle_wall(j, now);
                }
            }
        }
        // The outermost walls can only move when the flip touches them.
        if target <= self.left_zero || target >= self.right_one {
            self.refresh_bounds();
        }
        true
    }

    fn toggle_wall(&mut self, j: usize, present: bool) {
        if present {
            self.walls.add(j, 1);
            self.wall_slot[j] = self.wall_list.len() as u32;
            self.wall_list.push(self.origin + j as i64);
        } else {
            self.walls.add(j, -1);
            let slot = self.wall_slot[j] as usize;
            self.wall_slot[j] = NO_WALL;
            self.wall_list.swap_remove(slot);
            if let Some(&moved) = self.wall_list.get(slot) {
                self.wall_slot[(moved - self.origin) as usize] = slot as u32;
            }
        }
    }
}

pub fn interface_stats(state: &InterfaceState) -> InterfaceStats {
    InterfaceStats {
        left_zero: state.left_zero,
        right_one: state.right_one,
        size: state.right_one - state.left_zero + 1,
        inversions: state.inversion_count(),
    }
}

/// Event generator for the Harris dynamics of one replicate.
#[derive(Clone, Debug)]
pub struct HarrisClock<'k> {
    kernel: &'k Kernel,
    hybrid_cap: i64,
}

impl<'k> HarrisClock<'k> {
    pub fn new(kernel: &'k Kernel) -> Self {
        HarrisClock {
            kernel,
            hybrid_cap: DEFAULT_HYBRID_CAP,
        }
    }

    pub fn with_cap(mut self, hybrid_cap: i64) -> Self {
        self.hybrid_cap = hybrid_cap;
        self
    }

    /// Total rate at which sites left of `l` turn to 0 and sites right of
    /// `r` turn to 1, from the double-tail sums of the kernel.
    pub fn exterior_flip_rates(&self, state: &InterfaceState) -> (f64, f64) {
        let k = self.kernel;
        let (l, r) = (state.left_zero, state.right_one);
        let span = (r - l + 2) as u64;
        let mut left = k.right_double_tail(span);
        let mut right = k.left_double_tail(span);
        for z in l..=r {
            if state.value(z) == 0 {
                left += k.right_tail_mass((z - l + 1) as u64);
            } else {
                right += k.left_tail_mass((r - z + 1) as u64);
            }
        }
        (left, right)
    }

    /// Total proposal rate in the current state.
    pub fn proposal_rate(&self, state: &InterfaceState) -> f64 {
        state.walls.total() as f64 * self.kernel.abs_mean()
    }

    /// Evolves `state` to time `horizon`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        state: &mut InterfaceState,
        horizon: f64,
        rng: &mut R,
    ) -> Result<()> {
        self.run_logged(state, horizon, rng, None)
    }

    /// As [`run`](Self::run), appending every applied copy to `log`.
    pub fn run_logged<R: Rng + ?Sized>(
        &self,
        state: &mut InterfaceState,
        horizon: f64,
        rng: &mut R,
        mut log: Option<&mut Vec<CopyEvent>>,
    ) -> Result<()> {
        if horizon < state.time {
            return Err(Error::Precondition(format!(
                "horizon {horizon} is before current time {}",
                state.time
            )));
        }
        let per_wall = self.kernel.abs_mean();
        loop {
            let rate = state.walls.total() as f64 * per_wall;
            let wait: f64 = rng.sample::<f64, _>(Exp1) / rate;
            if state.time + wait >= horizon {
                state.time = horizon;
                return Ok(());
            }
            state.time += wait;

            let wall = state.wall_list[rng.random_range(0..state.wall_list.len())];
            let d = self.kernel.sample_size_biased(rng);
            let j = rng.random_range(0..d.abs());
            let (target, source) = if d > 0 {
                (wall - j, wall - j + d)
            } else {
                (wall + 1 + j, wall + 1 + j + d)
            };
            let crossed = state.walls_between(target.min(source), target.max(source));
            if crossed % 2 == 0 || (crossed > 1 && rng.random_range(0..crossed) != 0) {
                continue;
            }
            let changed = state.apply_copy(target, source);
            debug_assert!(changed);
            if let Some(log) = log.as_deref_mut() {
                log.push(CopyEvent {
                    time: state.time,
                    site: target,
                    offset: source - target,
                });
            }
            let width = state.right_one - state.left_zero + 1;
            if width > self.hybrid_cap {
                return Err(Error::HybridCap {
                    width,
                    cap: self.hybrid_cap,
                });
            }
        }
    }
}

/// Evolves the voter model to `horizon` with the default hybrid cap.
pub fn run_voter<R: Rng + ?Sized>(
    kernel: &Kernel,
    state: &mut InterfaceState,
    horizon: f64,
    rng: &mut R,
) -> Result<()> {
    HarrisClock::new(kernel).run(state, horizon, rng)
}

/// Writes an event log as CSV (`time,site,offset`).
pub fn write_event_log<W: Write>(events: &[CopyEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "site", "offset"])?;
    for e in events {
        w.write_record([e.time.to_string(), e.site.to_string(), e.offset.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
