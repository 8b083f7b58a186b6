//! Step distributions on the integers.
//!
//! A [`Kernel`] is a finitely supported probability mass function with
//! `p(0) = 0`, irreducible support, and cached tables for inverse-transform
//! sampling and tail sums. All built-in families are symmetric and hence
//! mean zero; heavy tails are realized by power laws tabulated up to a
//! cutoff.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(test)]
const NORMALIZATION_TOL: f64 = 1e-12;
/// Geometric tails are truncated once the remaining mass is below this.
const GEOMETRIC_TAIL_EPS: f64 = 1e-17;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    NearestNeighbor,
    UniformRange { radius: u32 },
    Geometric { q: f64 },
    PowerLaw { alpha: f64, cutoff: u32 },
    Table { path: PathBuf },
    /// Built from an explicit mass list (tests, derived kernels).
    Custom,
    Symmetrized { base: Box<KernelFamily> },
}

impl KernelFamily {
    /// The exponent of a heavy-tailed family, if any.
    pub fn power_law_alpha(&self) -> Option<f64> {
        match self {
            KernelFamily::PowerLaw { alpha, .. } => Some(*alpha),
            KernelFamily::Symmetrized { base } => base.power_law_alpha(),
            _ => None,
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::NearestNeighbor => write!(f, "nearest_neighbor"),
            KernelFamily::UniformRange { radius } => write!(f, "uniform_range({radius})"),
            KernelFamily::Geometric { q } => write!(f, "geometric({q})"),
            KernelFamily::PowerLaw { alpha, cutoff } => write!(f, "power_law({alpha}, {cutoff})"),
            KernelFamily::Table { path } => write!(f, "table({})", path.display()),
            KernelFamily::Custom => write!(f, "custom"),
            KernelFamily::Symmetrized { base } => write!(f, "symmetrized({base})"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    /// Parses `nearest_neighbor`, `uniform_range(R)`, `geometric(q)`,
    /// `power_law(alpha, cutoff)` and `table(path)`.
    fn from_str(s: &str) -> Result<Self> {
        let err = |message: &str| Error::SpecParse {
            spec: s.to_string(),
            message: message.to_string(),
        };
        let s_trim = s.trim();
        let (name, args) = match s_trim.find('(') {
            Some(open) => {
                let close = s_trim
                    .strip_suffix(')')
                    .ok_or_else(|| err("missing closing parenthesis"))?;
                (s_trim[..open].trim(), Some(&close[open + 1..]))
            }
            None => (s_trim, None),
        };
        let args: Vec<&str> = args
            .map(|a| a.split(',').map(str::trim).collect())
            .unwrap_or_default();
        let num = |i: usize| -> Result<f64> {
            args.get(i)
                .ok_or_else(|| err("missing argument"))?
                .parse::<f64>()
                .map_err(|_| err("argument is not a number"))
        };
        let int = |i: usize| -> Result<u32> {
            args.get(i)
                .ok_or_else(|| err("missing argument"))?
                .parse::<u32>()
                .map_err(|_| err("argument is not a nonnegative integer"))
        };
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(&format!("expected {n} argument(s), got {}", args.len())))
            }
        };
        match name {
            "nearest_neighbor" => {
                arity(0)?;
                Ok(KernelFamily::NearestNeighbor)
            }
            "uniform_range" => {
                arity(1)?;
                Ok(KernelFamily::UniformRange { radius: int(0)? })
            }
            "geometric" => {
                arity(1)?;
                Ok(KernelFamily::Geometric { q: num(0)? })
            }
            "power_law" => {
                arity(2)?;
                Ok(KernelFamily::PowerLaw {
                    alpha: num(0)?,
                    cutoff: int(1)?,
                })
            }
            "table" => {
                if args.len() != 1 || args[0].is_empty() {
                    return Err(err("table expects one path argument"));
                }
                Ok(KernelFamily::Table {
                    path: PathBuf::from(args[0]),
                })
            }
            _ => Err(err("unknown kernel family")),
        }
    }
}

/// How to build a kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Symmetrize the masses, which forces mean zero. Built-in families are
    /// already symmetric; this matters for table kernels.
    #[serde(default)]
    pub center: bool,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        KernelSpec {
            family,
            center: false,
        }
    }

    pub fn centered(mut self) -> Self {
        self.center = true;
        self
    }
}

impl FromStr for KernelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix("centered(").and_then(|r| r.strip_suffix(')')) {
            Some(inner) => Ok(KernelSpec::new(inner.parse()?).centered()),
            None => Ok(KernelSpec::new(s.parse()?)),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.center {
            write!(f, "centered({})", self.family)
        } else {
            write!(f, "{}", self.family)
        }
    }
}

/// A sub-probability piece of a kernel, as produced by [`Kernel::split_at`].
/// Its total mass is the rate of the compound Poisson process of the jumps
/// it keeps.
#[derive(Clone, Debug, PartialEq)]
pub struct SubKernel {
    pub sites: Vec<i64>,
    pub masses: Vec<f64>,
    pub mass: f64,
}

impl SubKernel {
    pub fn moment(&self, order: f64) -> f64 {
        moment_of(&self.sites, &self.masses, order)
    }

    pub fn mass_at(&self, site: i64) -> f64 {
        match self.sites.binary_search(&site) {
            Ok(i) => self.masses[i],
            Err(_) => 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Kernel {
    sites: Vec<i64>,
    masses: Vec<f64>,
    family: KernelFamily,
    step_table: WeightedAliasIndex<f64>,
    /// Alias table for `|x| p(x) / E|X|`.
    size_biased_table: WeightedAliasIndex<f64>,
    abs_mean: f64,
    /// `right_tail[m] = sum_{x >= m} p(x)` for `m` in `0..=radius + 1`.
    right_tail: Vec<f64>,
    /// `left_tail[m] = sum_{x <= -m} p(x)`.
    left_tail: Vec<f64>,
    /// `right_double[m] = sum_{j >= m} right_tail[j]`.
    right_double: Vec<f64>,
    left_double: Vec<f64>,
}

pub fn build_kernel(spec: &KernelSpec) -> Result<Kernel> {
    let kernel = match &spec.family {
        KernelFamily::NearestNeighbor => {
            Kernel::from_masses(vec![(-1, 0.5), (1, 0.5)], spec.family.clone())?
        }
        KernelFamily::UniformRange { radius } => {
            if *radius < 1 {
                return Err(Error::InvalidParameter("uniform_range needs R >= 1".into()));
            }
            let r = *radius as i64;
            let m = 1.0 / (2 * r) as f64;
            let pairs = (-r..=r).filter(|&x| x != 0).map(|x| (x, m)).collect();
            Kernel::from_masses(pairs, spec.family.clone())?
        }
        KernelFamily::Geometric { q } => {
            let q = *q;
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidParameter("geometric needs q in (0,1)".into()));
            }
            let n = (GEOMETRIC_TAIL_EPS.ln() / q.ln()).ceil().max(1.0) as i64;
            let mut pairs = Vec::with_capacity(2 * n as usize);
            for x in 1..=n {
                let m = 0.5 * (1.0 - q) * q.powi((x - 1) as i32);
                pairs.push((x, m));
                pairs.push((-x, m));
            }
            Kernel::from_masses(pairs, spec.family.clone())?
        }
        KernelFamily::PowerLaw { alpha, cutoff } => {
            let alpha = *alpha;
            if !(alpha > 0.0) || *cutoff < 1 {
                return Err(Error::InvalidParameter(
                    "power_law needs alpha > 0 and cutoff >= 1".into(),
                ));
            }
            let c = *cutoff as i64;
            let mut pairs = Vec::with_capacity(2 * c as usize);
            for x in 1..=c {
                let m = (x as f64).powf(-(1.0 + alpha));
                pairs.push((x, m));
                pairs.push((-x, m));
            }
            Kernel::from_masses(pairs, spec.family.clone())?
        }
        KernelFamily::Table { path } => Kernel::load_table(path)?,
        KernelFamily::Custom | KernelFamily::Symmetrized { .. } => {
            return Err(Error::InvalidParameter(format!(
                "{} kernels are derived, not built from a spec",
                spec.family
            )))
        }
    };
    if spec.center && !kernel.is_symmetric() {
        return Ok(kernel.symmetrize());
    }
    if !kernel.is_centered() {
        log::warn!("kernel {} is not mean zero (mean {})", spec.family, kernel.mean());
    }
    Ok(kernel)
}

impl Kernel {
    /// Builds a kernel from `(site, weight)` pairs. Weights are normalized;
    /// repeated sites are merged; weight at 0 is dropped with a warning.
    pub fn from_masses(pairs: Vec<(i64, f64)>, family: KernelFamily) -> Result<Kernel> {
        let mut pairs = pairs;
        if let Some(&(_, w)) = pairs.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::NotNormalizable(format!("invalid mass {w}")));
        }
        pairs.sort_by_key(|&(x, _)| x);
        let mut sites: Vec<i64> = Vec::with_capacity(pairs.len());
        let mut masses: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut dropped_zero = 0.0;
        for (x, w) in pairs {
            if x == 0 {
                dropped_zero += w;
                continue;
            }
            if w == 0.0 {
                continue;
            }
            if sites.last() == Some(&x) {
                *masses.last_mut().unwrap() += w;
            } else {
                sites.push(x);
                masses.push(w);
            }
        }
        if dropped_zero > 0.0 {
            log::warn!("dropping mass {dropped_zero} at site 0 and renormalizing");
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::NotNormalizable("no positive mass off the origin".into()));
        }
        masses.iter_mut().for_each(|m| *m /= total);

        let gcd = sites.iter().fold(0i64, |g, &x| gcd(g, x.abs()));
        if gcd != 1 {
            return Err(Error::NotIrreducible { gcd });
        }

        let alias = |weights: Vec<f64>| {
            WeightedAliasIndex::new(weights)
                .map_err(|e| Error::NotNormalizable(format!("sampling table: {e}")))
        };
        let step_table = alias(masses.clone())?;
        let abs_mean = moment_of(&sites, &masses, 1.0);
        let size_biased_table = alias(
            sites
                .iter()
                .zip(&masses)
                .map(|(x, m)| x.unsigned_abs() as f64 * m)
                .collect(),
        )?;

        let radius = sites.iter().map(|x| x.unsigned_abs()).max().unwrap() as usize;
        let mut right_point = vec![0.0; radius + 2];
        let mut left_point = vec![0.0; radius + 2];
        for (&x, &m) in sites.iter().zip(&masses) {
            if x > 0 {
                right_point[x as usize] = m;
            } else {
                left_point[(-x) as usize] = m;
            }
        }
        let suffix = |v: &[f64]| {
            let mut out = vec![0.0; v.len()];
            let mut acc = 0.0;
            for i in (0..v.len()).rev() {
                acc += v[i];
                out[i] = acc;
            }
            out
        };
        let right_tail = suffix(&right_point);
        let left_tail = suffix(&left_point);
        let right_double = suffix(&right_tail);
        let left_double = suffix(&left_tail);

        Ok(Kernel {
            sites,
            masses,
            family,
            step_table,
            size_biased_table,
            abs_mean,
            right_tail,
            left_tail,
            right_double,
            left_double,
        })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.sites.iter().copied().zip(self.masses.iter().copied())
    }

    pub fn sites(&self) -> &[i64] {
        &self.sites
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass_at(&self, site: i64) -> f64 {
        match self.sites.binary_search(&site) {
            Ok(i) => self.masses[i],
            Err(_) => 0.0,
        }
    }

    /// Largest `|x|` in the support.
    pub fn radius(&self) -> i64 {
        (self.right_tail.len() - 2) as i64
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(x, m)| x as f64 * m).sum()
    }

    pub fn is_centered(&self) -> bool {
        self.mean().abs() <= 1e-12
    }

    pub fn is_symmetric(&self) -> bool {
        self.support()
            .all(|(x, m)| (self.mass_at(-x) - m).abs() <= 1e-15 * m.max(1e-300))
    }

    /// `E|X|`, the rate at which a single boundary is crossed by copy events.
    pub fn abs_mean(&self) -> f64 {
        self.abs_mean
    }

    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.sites[self.step_table.sample(rng)]
    }

    /// Draws `x` with probability `|x| p(x) / E|X|`.
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.sites[self.size_biased_table.sample(rng)]
    }

    /// `sum_x |x|^order p(x)`.
    pub fn moment(&self, order: f64) -> f64 {
        moment_of(&self.sites, &self.masses, order)
    }

    /// `sum_{|x| >= m} p(x)`.
    pub fn tail_mass(&self, m: u64) -> f64 {
        self.right_tail_mass(m) + self.left_tail_mass(m)
    }

    /// `sum_{x >= m} p(x)` for `m >= 1`.
    pub fn right_tail_mass(&self, m: u64) -> f64 {
        let m = m.max(1) as usize;
        self.right_tail.get(m).copied().unwrap_or(0.0)
    }

    /// `sum_{x <= -m} p(x)` for `m >= 1`.
    pub fn left_tail_mass(&self, m: u64) -> f64 {
        let m = m.max(1) as usize;
        self.left_tail.get(m).copied().unwrap_or(0.0)
    }

    /// `sum_{j >= m} sum_{x >= j} p(x)`.
    pub fn right_double_tail(&self, m: u64) -> f64 {
        let m = m.max(1) as usize;
        self.right_double.get(m).copied().unwrap_or(0.0)
    }

    /// `sum_{j >= m} sum_{x <= -j} p(x)`.
    pub fn left_double_tail(&self, m: u64) -> f64 {
        let m = m.max(1) as usize;
        self.left_double.get(m).copied().unwrap_or(0.0)
    }

    /// `(p(x) + p(-x)) / 2`. Returns a clone for symmetric input.
    pub fn symmetrize(&self) -> Kernel {
        if self.is_symmetric() {
            return self.clone();
        }
        let pairs = self
            .support()
            .flat_map(|(x, m)| [(x, 0.5 * m), (-x, 0.5 * m)])
            .collect();
        let family = KernelFamily::Symmetrized {
            base: Box::new(self.family.clone()),
        };
        Kernel::from_masses(pairs, family).expect("symmetrization preserves validity")
    }

    /// Splits into `p'(x) = p(x) 1{|x| <= threshold}` and
    /// `p''(x) = p(x) 1{|x| > threshold}`.
    pub fn split_at(&self, threshold: u64) -> (SubKernel, SubKernel) {
        let mut near = SubKernel {
            sites: Vec::new(),
            masses: Vec::new(),
            mass: 0.0,
        };
        let mut far = near.clone();
        for (x, m) in self.support() {
            let part = if x.unsigned_abs() <= threshold {
                &mut near
            } else {
                &mut far
            };
            part.sites.push(x);
            part.masses.push(m);
        }
        near.mass = near.masses.iter().sum();
        far.mass = far.masses.iter().sum();
        (near, far)
    }

    /// Two-column `site mass` text, one line per support point.
    pub fn to_table_string(&self) -> String {
        let mut out = format!("# {}\n", self.family);
        for (x, m) in self.support() {
            out.push_str(&format!("{x} {m:e}\n"));
        }
        out
    }

    pub fn write_table(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_table_string())?;
        Ok(())
    }

    pub fn load_table(path: &Path) -> Result<Kernel> {
        let text = fs::read_to_string(path)?;
        let pairs = parse_table(&text).map_err(|(line, message)| Error::TableParse {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        Kernel::from_masses(
            pairs,
            KernelFamily::Table {
                path: path.to_path_buf(),
            },
        )
    }
}

fn parse_table(text: &str) -> std::result::Result<Vec<(i64, f64)>, (usize, String)> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(site), Some(mass), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err((i + 1, "expected two columns: site mass".into()));
        };
        let site = site
            .parse::<i64>()
            .map_err(|_| (i + 1, format!("bad site {site:?}")))?;
        let mass = mass
            .parse::<f64>()
            .map_err(|_| (i + 1, format!("bad mass {mass:?}")))?;
        if !(mass >= 0.0) || !mass.is_finite() {
            return Err((i + 1, format!("negative or non-finite mass {mass}")));
        }
        pairs.push((site, mass));
    }
    Ok(pairs)
}

fn moment_of(sites: &[i64], masses: &[f64], order: f64) -> f64 {
    if order == 0.0 {
        return masses.iter().sum();
    }
    sites
        .iter()
        .zip(masses)
        .map(|(&x, &m)| (x.unsigned_abs() as f64).powf(order) * m)
        .sum()
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn build(s: &str) -> Kernel {
        build_kernel(&s.parse().unwrap()).unwrap()
    }

    #[test]
    fn nearest_neighbor_masses() {
        let k = build("nearest_neighbor");
        assert_eq!(k.sites(), &[-1, 1]);
        assert_eq!(k.masses(), &[0.5, 0.5]);
        assert_eq!(k.moment(2.0), 1.0);
        assert_eq!(k.tail_mass(2), 0.0);
    }

    #[test]
    fn uniform_range_moments_and_tail() {
        let k = build("uniform_range(2)");
        for x in [-2, -1, 1, 2] {
            assert_eq!(k.mass_at(x), 0.25);
        }
        assert_eq!(k.mass_at(0), 0.0);
        assert!((k.moment(2.0) - 2.5).abs() < 1e-15);
        assert!((k.moment(1.0) - 1.5).abs() < 1e-15);
        assert!((k.tail_mass(2) - 0.5).abs() < 1e-15);
        assert!((k.tail_mass(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_law_normalizer_by_direct_summation() {
        let k = build("power_law(1.5, 4)");
        let w: Vec<f64> = (1..=4).map(|x: i32| (x as f64).powf(-2.5)).collect();
        let z: f64 = 2.0 * w.iter().sum::<f64>();
        for x in 1..=4i64 {
            let expect = w[(x - 1) as usize] / z;
            assert!((k.mass_at(x) - expect).abs() < 1e-15);
            assert!((k.mass_at(-x) - expect).abs() < 1e-15);
        }
        assert!(k.is_symmetric() && k.is_centered());
    }

    #[test]
    fn power_law_tail_matches_direct_sum() {
        let k = build("power_law(1.5, 1000)");
        let direct: f64 = k.support().filter(|(x, _)| x.abs() >= 8).map(|(_, m)| m).sum();
        assert!((k.tail_mass(8) - direct).abs() < 1e-13);
        let one_sided: f64 = k.support().filter(|(x, _)| *x >= 8).map(|(_, m)| m).sum();
        assert!((k.right_tail_mass(8) - one_sided).abs() < 1e-13);
    }

    #[test]
    fn reducible_support_is_rejected() {
        let err = Kernel::from_masses(vec![(-2, 0.5), (2, 0.5)], KernelFamily::Custom).unwrap_err();
        assert!(err.to_string().contains("kernel not irreducible"));
        // {2, -3} generates Z even though neither alone does
        assert!(Kernel::from_masses(vec![(2, 0.5), (-3, 0.5)], KernelFamily::Custom).is_ok());
    }

    #[test]
    fn zero_mass_is_dropped_and_renormalized() {
        let k = Kernel::from_masses(vec![(-1, 0.25), (0, 0.5), (1, 0.25)], KernelFamily::Custom)
            .unwrap();
        assert_eq!(k.mass_at(0), 0.0);
        assert!((k.mass_at(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unnormalizable_tables_are_rejected() {
        assert!(Kernel::from_masses(vec![(0, 1.0)], KernelFamily::Custom).is_err());
        assert!(Kernel::from_masses(vec![(1, -1.0), (2, 2.0)], KernelFamily::Custom).is_err());
        assert!(build_kernel(&"uniform_range(0)".parse().unwrap()).is_err());
        assert!(build_kernel(&"geometric(1.5)".parse().unwrap()).is_err());
    }

    #[test]
    fn symmetrize_deterministic_step() {
        let k = Kernel::from_masses(vec![(1, 1.0)], KernelFamily::Custom).unwrap();
        assert!(!k.is_centered());
        let s = k.symmetrize();
        assert_eq!(s.mass_at(1), 0.5);
        assert_eq!(s.mass_at(-1), 0.5);
        let u = build("uniform_range(3)");
        assert_eq!(u.symmetrize().masses(), u.masses());
    }

    #[test]
    fn split_partitions_masses() {
        let nn = build("nearest_neighbor");
        let (near, far) = nn.split_at(4);
        assert_eq!(near.mass, 1.0);
        assert_eq!(far.mass, 0.0);
        let k = build("power_law(1.5, 1000)");
        let (near, far) = k.split_at(8);
        assert!((far.mass - k.tail_mass(9)).abs() < 1e-13);
        assert!((near.mass + far.mass - 1.0).abs() < 1e-12);
        for (x, m) in k.support() {
            assert_eq!(near.mass_at(x) + far.mass_at(x), m);
        }
    }

    #[test]
    fn sampling_nearest_neighbor_support() {
        let k = build("nearest_neighbor");
        let mut rng = Stream::new(1, "nn").replicate(0);
        for _ in 0..1000 {
            let x = k.sample_step(&mut rng);
            assert!(x == 1 || x == -1);
        }
    }

    #[test]
    fn uniform_range_frequencies_within_four_se() {
        let k = build("uniform_range(2)");
        let mut rng = Stream::new(2, "freq").replicate(0);
        let n = 1_000_000;
        let mut counts = [0u64; 5];
        for _ in 0..n {
            counts[(k.sample_step(&mut rng) + 2) as usize] += 1;
        }
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        for (i, c) in counts.iter().enumerate() {
            if i == 2 {
                assert_eq!(*c, 0);
                continue;
            }
            assert!((*c as f64 / n as f64 - 0.25).abs() < 4.0 * se);
        }
    }

    #[test]
    fn power_law_empirical_tail_within_four_se() {
        let k = build("power_law(1.5, 1000)");
        let mut rng = Stream::new(3, "tail").replicate(0);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| k.sample_step(&mut rng).abs() >= 100).count();
        let p = k.tail_mass(100);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn chi_square_goodness_of_fit_for_builtins() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for spec in ["nearest_neighbor", "uniform_range(3)", "geometric(0.5)", "power_law(1.5, 50)"] {
            let k = build(spec);
            let mut rng = Stream::new(4, spec).replicate(0);
            let n = 1_000_000u64;
            let mut counts = vec![0u64; k.sites().len()];
            for _ in 0..n {
                let x = k.sample_step(&mut rng);
                counts[k.sites().binary_search(&x).unwrap()] += 1;
            }
            // pool cells with small expectation into one
            let (mut stat, mut cells, mut pooled_obs, mut pooled_exp) = (0.0, 0usize, 0.0, 0.0);
            for (c, m) in counts.iter().zip(k.masses()) {
                let e = m * n as f64;
                if e < 5.0 {
                    pooled_obs += *c as f64;
                    pooled_exp += e;
                } else {
                    stat += (*c as f64 - e).powi(2) / e;
                    cells += 1;
                }
            }
            if pooled_exp > 0.0 {
                stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
                cells += 1;
            }
            let crit = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(0.999);
            assert!(stat < crit, "{spec}: chi2 {stat} >= {crit}");
        }
    }

    #[test]
    fn size_biased_sampler_frequencies() {
        let k = build("uniform_range(2)");
        let mut rng = Stream::new(5, "sb").replicate(0);
        let n = 200_000;
        let big = (0..n).filter(|_| k.sample_size_biased(&mut rng).abs() == 2).count();
        // P(|X| = 2) under size bias = 2*0.5 / 1.5
        let p = 2.0 / 3.0;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((big as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn table_round_trip_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.txt");
        let k = build("geometric(0.3)");
        k.write_table(&path).unwrap();
        let back = Kernel::load_table(&path).unwrap();
        assert_eq!(back.sites(), k.sites());
        for (a, b) in back.masses().iter().zip(k.masses()) {
            assert!((a - b).abs() <= 1e-15 * b.max(1e-300) + 1e-300);
        }
        fs::write(&path, "# comment\n1 0.5\n-1 oops\n").unwrap();
        match Kernel::load_table(&path).unwrap_err() {
            Error::TableParse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn asymmetric_table_is_centered_on_request() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.txt");
        fs::write(&path, "1 0.75\n-1 0.25\n").unwrap();
        let spec = KernelSpec::new(KernelFamily::Table { path: path.clone() });
        let raw = build_kernel(&spec).unwrap();
        assert!(!raw.is_centered());
        let centered = build_kernel(&spec.centered()).unwrap();
        assert!(centered.is_centered() && centered.is_symmetric());
    }

    #[test]
    fn spec_strings_parse() {
        assert!("power_law(1.5)".parse::<KernelFamily>().is_err());
        assert!("brownian".parse::<KernelFamily>().is_err());
        assert_eq!(
            "power_law(1.2, 100000)".parse::<KernelFamily>().unwrap(),
            KernelFamily::PowerLaw { alpha: 1.2, cutoff: 100000 }
        );
        let centered: KernelSpec = "centered(uniform_range(3))".parse().unwrap();
        assert!(centered.center);
        assert_eq!(centered.to_string().parse::<KernelSpec>().unwrap(), centered);
        assert!(!"uniform_range(3)".parse::<KernelSpec>().unwrap().center);
    }

    fn family_strategy() -> impl Strategy<Value = KernelFamily> {
        prop_oneof![
            Just(KernelFamily::NearestNeighbor),
            (1u32..20).prop_map(|radius| KernelFamily::UniformRange { radius }),
            (0.05f64..0.95).prop_map(|q| KernelFamily::Geometric { q }),
            (1.01f64..3.0, 1u32..400).prop_map(|(alpha, cutoff)| KernelFamily::PowerLaw { alpha, cutoff }),
        ]
    }

    proptest! {
        #[test]
        fn built_kernels_satisfy_invariants(family in family_strategy()) {
            let k = build_kernel(&KernelSpec::new(family.clone())).unwrap();
            let total: f64 = k.masses().iter().sum();
            prop_assert!((total - 1.0).abs() < NORMALIZATION_TOL);
            prop_assert!(k.masses().iter().all(|&m| m >= 0.0));
            prop_assert_eq!(k.mass_at(0), 0.0);
            prop_assert!((k.tail_mass(1) - 1.0).abs() < NORMALIZATION_TOL);
            for m in 1..(k.radius() as u64 + 2) {
                prop_assert!(k.tail_mass(m + 1) <= k.tail_mass(m) + 1e-16);
            }
            prop_assert_eq!(family.to_string().parse::<KernelFamily>().unwrap(), family);
            for (x, _) in k.support() {
                let s = k.symmetrize();
                prop_assert!((s.mass_at(x) - s.mass_at(-x)).abs() < 1e-16);
            }
        }

        #[test]
        fn symmetrize_is_idempotent(weights in proptest::collection::vec(0.0f64..1.0, 1..8)) {
            let mut pairs: Vec<(i64, f64)> = weights.iter().enumerate()
                .map(|(i, &w)| (i as i64 - 3, w + 0.01)).collect();
            pairs.push((1, 0.1));
            let k = Kernel::from_masses(pairs, KernelFamily::Custom).unwrap();
            let once = k.symmetrize();
            let twice = once.symmetrize();
            prop_assert_eq!(once.sites(), twice.sites());
            for (a, b) in once.masses().iter().zip(twice.masses()) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn second_moment_nondecreasing_in_cutoff(alpha in 1.05f64..2.5, c in 1u32..300) {
            let m = |cutoff| build_kernel(&KernelSpec::new(KernelFamily::PowerLaw { alpha, cutoff }))
                .unwrap().moment(2.0);
            prop_assert!(m(c + 1) >= m(c) - 1e-12);
        }
    }
}
