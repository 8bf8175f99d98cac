//! Coverage models: how many SBSs a user can reach, and which ones.
//!
//! A [`CoverageDistribution`] holds `γ_b`, the probability of being in range
//! of exactly `b` SBSs. It comes from a square-lattice deployment
//! ([`GridModel`]), a Poisson point process ([`PppModel`]), or a literal
//! vector. [`Topology`] adds SBS identities so sessions can be simulated.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Samples per independently seeded Monte-Carlo shard.
const SHARD: u64 = 1 << 16;

/// Probability vectors must sum to one within this slack.
const SUM_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("gamma must be a non-empty probability vector (sum {sum})")]
    NotADistribution { sum: f64 },
    #[error("library must contain at least one file")]
    EmptyLibrary,
    #[error("{0} must be a finite non-negative number")]
    BadParameter(&'static str),
    #[error("gamma has mass at b = {b} but only {n_sbs} SBSs exist")]
    TooFewSbs { b: usize, n_sbs: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Zipf popularity `p_i ∝ i^{-α}` for `i = 1..=f`.
pub fn zipf(f: usize, alpha: f64) -> Result<Vec<f64>, TopologyError> {
    if f == 0 {
        return Err(TopologyError::EmptyLibrary);
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(TopologyError::BadParameter("alpha"));
    }
    let w: Vec<f64> = (1..=f).map(|i| (i as f64).powf(-alpha)).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// `γ_b` for `b = 0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CoverageDistribution {
    gamma: Vec<f64>,
}

impl TryFrom<Vec<f64>> for CoverageDistribution {
    type Error = TopologyError;

    fn try_from(gamma: Vec<f64>) -> Result<Self, TopologyError> {
        CoverageDistribution::new(gamma)
    }
}

impl From<CoverageDistribution> for Vec<f64> {
    fn from(c: CoverageDistribution) -> Vec<f64> {
        c.gamma
    }
}

impl CoverageDistribution {
    pub fn new(gamma: Vec<f64>) -> Result<Self, TopologyError> {
        let sum: f64 = gamma.iter().sum();
        if gamma.is_empty() || gamma.iter().any(|g| !g.is_finite() || *g < 0.0) || (sum - 1.0).abs() > SUM_SLACK {
            return Err(TopologyError::NotADistribution { sum });
        }
        Ok(CoverageDistribution { gamma })
    }

    /// All mass at `b`.
    pub fn point_mass(b: usize) -> Self {
        let mut gamma = vec![0.0; b + 1];
        gamma[b] = 1.0;
        CoverageDistribution { gamma }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    /// `γ_b`, zero past the end of the vector.
    pub fn get(&self, b: usize) -> f64 {
        self.gamma.get(b).copied().unwrap_or(0.0)
    }

    /// Largest `b` with `γ_b > 0`.
    pub fn n_max(&self) -> usize {
        self.gamma.iter().rposition(|&g| g > 0.0).unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        self.gamma.iter().enumerate().map(|(b, g)| b as f64 * g).sum()
    }

    /// `γ̃` of length `n + 1`: `γ̃_b = γ_b` for `b < n` and `γ̃_n = Σ_{b≥n} γ_b`.
    pub fn capped(&self, n: usize) -> Vec<f64> {
        let mut out: Vec<f64> = (0..n).map(|b| self.get(b)).collect();
        out.push(self.gamma.iter().skip(n).sum());
        out
    }

    /// Zero-padded or trimmed to length `n_sbs + 1`; fails if mass would be lost.
    pub fn for_sbs_count(&self, n_sbs: usize) -> Result<Self, TopologyError> {
        let b = self.n_max();
        if b > n_sbs {
            return Err(TopologyError::TooFewSbs { b, n_sbs });
        }
        let mut gamma = self.gamma.clone();
        gamma.resize(n_sbs + 1, 0.0);
        Ok(CoverageDistribution { gamma })
    }

    /// Draws a coverage count.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (b, &g) in self.gamma.iter().enumerate() {
            acc += g;
            if u < acc {
                return b;
            }
        }
        self.n_max()
    }

    /// Writes `b,gamma` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TopologyError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["b", "gamma"])?;
        for (b, g) in self.gamma.iter().enumerate() {
            out.write_record([b.to_string(), g.to_string()])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads `b,gamma` rows; missing `b` values are zero.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, TopologyError> {
        #[derive(Deserialize)]
        struct Row {
            b: usize,
            gamma: f64,
        }
        let mut gamma = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            if gamma.len() <= row.b {
                gamma.resize(row.b + 1, 0.0);
            }
            gamma[row.b] = row.gamma;
        }
        CoverageDistribution::new(gamma)
    }

    fn from_counts(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let mut gamma: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        trim(&mut gamma);
        CoverageDistribution { gamma }
    }
}

fn trim(gamma: &mut Vec<f64>) {
    while gamma.len() > 1 && *gamma.last().unwrap() == 0.0 {
        gamma.pop();
    }
}

/// SBSs on the square lattice `spacing · Z²`, users uniform in the
/// macro-cell disc of radius `radius`. The lattice is unbounded, so cells
/// near the macro-cell edge see the same neighbourhood as central ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub radius: f64,
    pub spacing: f64,
    pub r: f64,
    /// User density; it cancels in `γ` and only scales the area measures.
    #[serde(default = "default_phi")]
    pub phi: f64,
}

fn default_phi() -> f64 {
    1.0
}

impl GridModel {
    pub fn new(radius: f64, spacing: f64, r: f64) -> Result<Self, TopologyError> {
        for (name, v) in [("radius", radius), ("spacing", spacing), ("r", r)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TopologyError::BadParameter(name));
            }
        }
        if spacing == 0.0 {
            return Err(TopologyError::BadParameter("spacing"));
        }
        Ok(GridModel {
            radius,
            spacing,
            r,
            phi: 1.0,
        })
    }

    /// Number of lattice points inside the macro-cell disc.
    pub fn lattice_points_in_disc(&self) -> usize {
        let m = (self.radius / self.spacing).floor() as i64;
        let mut count = 0;
        for i in -m..=m {
            for j in -m..=m {
                let (x, y) = (i as f64 * self.spacing, j as f64 * self.spacing);
                if x * x + y * y <= self.radius * self.radius {
                    count += 1;
                }
            }
        }
        count
    }

    /// Largest spacing whose lattice puts at least `count` points in a disc
    /// of radius `radius`, by bisection on the monotone point count.
    pub fn spacing_for_count(radius: f64, count: usize) -> f64 {
        let points = |s: f64| GridModel {
            radius,
            spacing: s,
            r: 0.0,
            phi: 1.0,
        }
        .lattice_points_in_disc();
        let (mut lo, mut hi) = (radius / (count as f64).sqrt() / 4.0, 2.0 * radius + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if points(mid) >= count {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Lattice points within `r` of `(x, y)`, as lattice coordinates.
    fn in_range(&self, x: f64, y: f64) -> impl Iterator<Item = (i64, i64)> + '_ {
        let s = self.spacing;
        let r = self.r;
        let (i0, i1) = (((x - r) / s).ceil() as i64, ((x + r) / s).floor() as i64);
        (i0..=i1).flat_map(move |i| {
            let dx = i as f64 * s - x;
            let h = (r * r - dx * dx).max(0.0).sqrt();
            let (j0, j1) = (((y - h) / s).ceil() as i64, ((y + h) / s).floor() as i64);
            (j0..=j1).filter_map(move |j| {
                let dy = j as f64 * s - y;
                (dx * dx + dy * dy <= r * r).then_some((i, j))
            })
        })
    }

    /// Uniform point in the macro-cell disc.
    pub fn sample_user<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let rho = self.radius * rng.random::<f64>().sqrt();
        let theta = 2.0 * PI * rng.random::<f64>();
        (rho * theta.cos(), rho * theta.sin())
    }

    /// Monte-Carlo `γ` from `samples` uniform user positions. Shard `s`
    /// uses ChaCha8 seeded with `seed` on stream `s`, so the estimate does
    /// not depend on the number of worker threads.
    pub fn gamma_mc(&self, samples: u64, seed: u64) -> CoverageDistribution {
        let shards = samples.div_ceil(SHARD);
        let counts = (0..shards)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s);
                let mut counts = Vec::new();
                for _ in 0..SHARD.min(samples - s * SHARD) {
                    let (x, y) = self.sample_user(&mut rng);
                    let b = self.in_range(x, y).count();
                    if counts.len() <= b {
                        counts.resize(b + 1, 0u64);
                    }
                    counts[b] += 1;
                }
                counts
            })
            .reduce(Vec::new, merge_counts);
        CoverageDistribution::from_counts(&counts)
    }

    /// `γ` as area fractions of one lattice cell, i.e. for a macro-cell
    /// large enough that its boundary does not matter.
    pub fn gamma_exact(&self, slices: usize) -> CoverageDistribution {
        let s = self.spacing;
        self.sweep((0.0, s), slices, |_| (0.0, s))
    }

    /// `γ` as area fractions of the macro-cell disc itself; this is the
    /// distribution that [`gamma_mc`](Self::gamma_mc) estimates.
    pub fn gamma_exact_disc(&self, slices: usize) -> CoverageDistribution {
        let d = self.radius;
        self.sweep((-d, d), slices, |x| {
            let h = (d * d - x * x).max(0.0).sqrt();
            (-h, h)
        })
    }

    /// Area fractions of the region `{(x, y) : x0 ≤ x ≤ x1, y ∈ ys(x)}` by
    /// coverage count. Along each of `slices` vertical lines the covered
    /// lengths are exact; the line integrals are combined with the midpoint
    /// rule.
    fn sweep(&self, (x0, x1): (f64, f64), slices: usize, ys: impl Fn(f64) -> (f64, f64)) -> CoverageDistribution {
        let s = self.spacing;
        let r = self.r;
        let mut acc: Vec<f64> = Vec::new();
        let mut events: Vec<(f64, i32)> = Vec::new();
        let dx_slice = (x1 - x0) / slices as f64;
        for k in 0..slices {
            let x = x0 + (k as f64 + 0.5) * dx_slice;
            let (y0, y1) = ys(x);
            if y1 <= y0 {
                continue;
            }
            events.clear();
            let (i0, i1) = (((x - r) / s).ceil() as i64, ((x + r) / s).floor() as i64);
            for i in i0..=i1 {
                let dx = i as f64 * s - x;
                let h2 = r * r - dx * dx;
                if h2 <= 0.0 {
                    continue;
                }
                let h = h2.sqrt();
                let (j0, j1) = (((y0 - h) / s).floor() as i64, ((y1 + h) / s).ceil() as i64);
                for j in j0..=j1 {
                    let (lo, hi) = ((j as f64 * s - h).max(y0), (j as f64 * s + h).min(y1));
                    if lo < hi {
                        events.push((lo, 1));
                        events.push((hi, -1));
                    }
                }
            }
            events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut depth, mut last) = (0i32, y0);
            for &(y, step) in events.iter().chain(std::iter::once(&(y1, 0))) {
                let b = depth as usize;
                if acc.len() <= b {
                    acc.resize(b + 1, 0.0);
                }
                acc[b] += y - last;
                last = y;
                depth += step;
            }
        }
        let total: f64 = acc.iter().sum();
        let mut gamma: Vec<f64> = acc.into_iter().map(|a| a / total).collect();
        trim(&mut gamma);
        CoverageDistribution { gamma }
    }

    /// The `count` lattice points closest to the origin, ties broken by
    /// lattice coordinates; index in the result is the SBS label.
    pub fn sbs_positions(&self, count: usize) -> Vec<(i64, i64)> {
        // The disc of lattice radius m holds about πm² > count points.
        let m = ((count as f64) / PI).sqrt().ceil() as i64 + 2;
        let mut pts: Vec<(i64, i64)> = (-m..=m).flat_map(|i| (-m..=m).map(move |j| (i, j))).collect();
        pts.sort_by_key(|&(i, j)| (i * i + j * j, i, j));
        pts.truncate(count);
        pts
    }
}

fn merge_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    if a.len() < b.len() {
        a.resize(b.len(), 0);
    }
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Indices of `positions` within distance `r` of `user`.
pub fn in_range(positions: &[(f64, f64)], user: (f64, f64), r: f64) -> Vec<usize> {
    positions
        .iter()
        .enumerate()
        .filter(|(_, p)| (p.0 - user.0).powi(2) + (p.1 - user.1).powi(2) <= r * r)
        .map(|(i, _)| i)
        .collect()
}

/// SBSs as a homogeneous Poisson point process of density `lambda`; a user
/// connects to those within `r_u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PppModel {
    pub lambda: f64,
    pub r_u: f64,
}

impl PppModel {
    pub fn new(lambda: f64, r_u: f64) -> Result<Self, TopologyError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(TopologyError::BadParameter("lambda"));
        }
        if !(r_u.is_finite() && r_u >= 0.0) {
            return Err(TopologyError::BadParameter("r_u"));
        }
        Ok(PppModel { lambda, r_u })
    }

    /// Mean number of SBSs in range, `λπr_u²`.
    pub fn psi(&self) -> f64 {
        self.lambda * PI * self.r_u * self.r_u
    }

    /// Poisson(ψ) pmf, truncated once the remaining tail is below 1e-9 and
    /// renormalized.
    pub fn gamma(&self) -> CoverageDistribution {
        let psi = self.psi();
        if psi == 0.0 {
            return CoverageDistribution::point_mass(0);
        }
        let mut gamma = Vec::new();
        let mut log_p = -psi;
        let mut mass = 0.0;
        for b in 0.. {
            if b > 0 {
                log_p += psi.ln() - (b as f64).ln();
            }
            let p = log_p.exp();
            gamma.push(p);
            mass += p;
            if b as f64 > psi && 1.0 - mass < 1e-9 {
                break;
            }
        }
        let total: f64 = gamma.iter().sum();
        gamma.iter_mut().for_each(|g| *g /= total);
        trim(&mut gamma);
        CoverageDistribution { gamma }
    }

    /// One deployment on a torus of side `4 r_u` and a uniform user on it.
    /// The torus is wide enough that the coverage disc never wraps onto
    /// itself, so the in-range count is exactly Poisson(ψ).
    pub fn sample_coverage<R: Rng + ?Sized>(&self, rng: &mut R) -> ((f64, f64), Vec<(f64, f64)>, Vec<usize>) {
        let w = 4.0 * self.r_u.max(f64::MIN_POSITIVE);
        let mean = self.lambda * w * w;
        let count = if mean > 0.0 {
            Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
        } else {
            0
        };
        let pts: Vec<(f64, f64)> = (0..count).map(|_| (w * rng.random::<f64>(), w * rng.random::<f64>())).collect();
        let user = (w * rng.random::<f64>(), w * rng.random::<f64>());
        let wrap = |d: f64| {
            let d = d.abs();
            d.min(w - d)
        };
        let near = pts
            .iter()
            .enumerate()
            .filter(|(_, p)| wrap(p.0 - user.0).powi(2) + wrap(p.1 - user.1).powi(2) <= self.r_u * self.r_u)
            .map(|(i, _)| i)
            .collect();
        (user, pts, near)
    }
}

/// A coverage model with `n_sbs` labelled SBSs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    /// Lattice SBSs labelled by distance from the macro-cell centre.
    Grid { model: GridModel, n_sbs: usize },
    /// PPP counts with exchangeable labels drawn per session.
    Ppp { model: PppModel, n_sbs: usize },
    /// Literal `γ` with exchangeable labels drawn per session.
    Literal { gamma: CoverageDistribution, n_sbs: usize },
}

impl Topology {
    pub fn n_sbs(&self) -> usize {
        match self {
            Topology::Grid { n_sbs, .. } | Topology::Ppp { n_sbs, .. } | Topology::Literal { n_sbs, .. } => *n_sbs,
        }
    }

    /// Exact `γ` of this topology's sampler. The grid value ignores the
    /// finite SBS count, which only matters when the labelled lattice does
    /// not cover the macro-cell plus one radius.
    pub fn gamma(&self) -> CoverageDistribution {
        match self {
            Topology::Grid { model, .. } => model.gamma_exact_disc(1 << 13),
            Topology::Ppp { model, .. } => model.gamma(),
            Topology::Literal { gamma, .. } => gamma.clone(),
        }
    }

    /// A sampler that draws the labels of the SBSs in range of a random user.
    pub fn sampler(&self) -> CoverageSampler {
        let labels = match self {
            Topology::Grid { model, n_sbs } => model
                .sbs_positions(*n_sbs)
                .into_iter()
                .enumerate()
                .map(|(l, p)| (p, l))
                .collect(),
            _ => HashMap::new(),
        };
        CoverageSampler {
            topology: self.clone(),
            labels,
        }
    }
}

/// Per-topology sampling state, cheap to share across threads.
#[derive(Clone, Debug)]
pub struct CoverageSampler {
    topology: Topology,
    labels: HashMap<(i64, i64), usize>,
}

impl CoverageSampler {
    /// Labels of the in-range SBSs, ascending.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let n_sbs = self.topology.n_sbs();
        let mut out: Vec<usize> = match &self.topology {
            Topology::Grid { model, .. } => {
                let (x, y) = model.sample_user(rng);
                model.in_range(x, y).filter_map(|p| self.labels.get(&p).copied()).collect()
            }
            Topology::Ppp { model, .. } => {
                let b = model.sample_coverage(rng).2.len().min(n_sbs);
                index::sample(rng, n_sbs, b).into_vec()
            }
            Topology::Literal { gamma, .. } => {
                let b = gamma.sample(rng).min(n_sbs);
                index::sample(rng, n_sbs, b).into_vec()
            }
        };
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GRID_GAMMA: [f64; 5] = [0.0, 0.0, 0.1736, 0.5113, 0.3151];

    fn reference_grid() -> GridModel {
        GridModel::new(500.0, 60.0, 60.0).unwrap()
    }

    #[test]
    fn zipf_examples() {
        assert_eq!(zipf(4, 0.0).unwrap(), vec![0.25; 4]);
        let p = zipf(2, 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = zipf(200, 0.7).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
        // Independent summation: H_{200,0.7} by pairwise accumulation
        let h: f64 = (1..=200u32).rev().map(|i| 1.0 / f64::from(i).powf(0.7)).sum();
        assert!((p[0] - 1.0 / h).abs() < 1e-14);
        assert!(zipf(0, 1.0).is_err());
        assert!(zipf(3, -1.0).is_err());
    }

    #[test]
    fn distribution_validation_and_capping() {
        assert!(CoverageDistribution::new(vec![]).is_err());
        assert!(CoverageDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(CoverageDistribution::new(vec![1.5, -0.5]).is_err());
        let g = CoverageDistribution::new(GRID_GAMMA.to_vec()).unwrap();
        assert_eq!(g.n_max(), 4);
        let c = g.capped(3);
        assert_eq!(c.len(), 4);
        assert_eq!(&c[..3], &[0.0, 0.0, 0.1736]);
        assert!((c[3] - 0.8264).abs() < 1e-12);
        assert_eq!(g.capped(6).len(), 7);
        assert_eq!(g.for_sbs_count(10).unwrap().as_slice().len(), 11);
        assert!(g.for_sbs_count(3).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = CoverageDistribution::new(GRID_GAMMA.to_vec()).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("b,gamma\n0,0\n"));
        assert_eq!(CoverageDistribution::read_csv(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn grid_zero_radius_and_sparse_grid() {
        let g = GridModel::new(500.0, 60.0, 0.0).unwrap();
        assert_eq!(g.gamma_mc(10_000, 1).as_slice(), &[1.0]);
        let sparse = GridModel::new(500.0, 200.0, 60.0).unwrap();
        let mc = sparse.gamma_mc(50_000, 2);
        assert!(mc.n_max() <= 1);
        assert!(sparse.gamma_exact(4096).n_max() <= 1);
    }

    #[test]
    fn grid_exact_matches_closed_forms() {
        // spacing = r: every point of a cell sees 2, 3 or 4 corners;
        // the four-corner region has area s²(1 - √3 + π/3).
        let g = reference_grid().gamma_exact(1 << 14);
        assert_eq!(g.n_max(), 4);
        let g4 = 1.0 - 3f64.sqrt() + PI / 3.0;
        assert!((g.get(4) - g4).abs() < 1e-6, "{}", g.get(4));
        assert!((g.mean() - PI).abs() < 1e-6);
        for (b, &want) in GRID_GAMMA.iter().enumerate() {
            assert!((g.get(b) - want).abs() < 1e-4, "b={b}: {}", g.get(b));
        }
        // spacing ≥ 2r: one disc of area πr² per cell
        let sparse = GridModel::new(500.0, 150.0, 60.0).unwrap().gamma_exact(1 << 12);
        assert!((sparse.get(1) - PI * 3600.0 / 22500.0).abs() < 1e-5);
    }

    #[test]
    fn grid_mc_is_deterministic_and_close_to_exact() {
        let g = reference_grid();
        let a = g.gamma_mc(200_000, 7);
        assert_eq!(a, g.gamma_mc(200_000, 7));
        assert_ne!(a, g.gamma_mc(200_000, 8));
        // The disc average differs from the cell average through the
        // macro-cell boundary; the estimator targets the former.
        let disc = g.gamma_exact_disc(1 << 13);
        let n = 200_000f64;
        for b in 0..6 {
            let p = disc.get(b);
            assert!((a.get(b) - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt() + 1e-12, "b={b}");
            assert!((disc.get(b) - g.gamma_exact(1 << 12).get(b)).abs() < 0.01);
        }
    }

    #[test]
    fn spacing_search_hits_count() {
        let s = GridModel::spacing_for_count(500.0, 316);
        let g = GridModel::new(500.0, s, 60.0).unwrap();
        assert!(g.lattice_points_in_disc() >= 316);
        assert!(GridModel::new(500.0, s * 1.0001, 60.0).unwrap().lattice_points_in_disc() < 316);
    }

    #[test]
    fn sbs_labels_cover_the_macro_cell() {
        let g = reference_grid();
        let pos = g.sbs_positions(316);
        assert_eq!(pos.len(), 316);
        assert_eq!(pos[0], (0, 0));
        // Every lattice point within D + r of the centre is labelled.
        let reach = ((500.0 + 60.0) / 60.0) as i64;
        let labelled: std::collections::HashSet<_> = pos.iter().copied().collect();
        for i in -reach..=reach {
            for j in -reach..=reach {
                if ((i * i + j * j) as f64).sqrt() * 60.0 <= 560.0 {
                    assert!(labelled.contains(&(i, j)));
                }
            }
        }
    }

    #[test]
    fn single_sbs_in_range_of_user_at_origin() {
        assert_eq!(in_range(&[(0.0, 0.0)], (0.0, 0.0), 0.0), vec![0]);
        assert!(in_range(&[(1.0, 0.0)], (0.0, 0.0), 0.5).is_empty());
    }

    #[test]
    fn ppp_examples() {
        assert_eq!(PppModel::new(0.0, 60.0).unwrap().gamma().as_slice(), &[1.0]);
        let unit = PppModel::new(1.0 / PI, 1.0).unwrap();
        assert!((unit.psi() - 1.0).abs() < 1e-15);
        assert!((unit.gamma().get(0) - (-1f64).exp()).abs() < 1e-9);
        let m = PppModel::new(2e-4, 60.0).unwrap();
        assert!((m.psi() - 2e-4 * PI * 3600.0).abs() < 1e-15);
        let g = m.gamma();
        assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Direct Poisson pmf oracle
        let psi = m.psi();
        let mut fact = 1.0;
        for b in 0..8 {
            if b > 0 {
                fact *= b as f64;
            }
            let pmf = (-psi).exp() * psi.powi(b) / fact;
            assert!((g.get(b as usize) - pmf).abs() < 2e-9);
        }
        assert!(PppModel::new(-1.0, 1.0).is_err());
    }

    fn within_three_sigma(counts: &[u64], gamma: &CoverageDistribution, n: u64) {
        for (b, &c) in counts.iter().enumerate() {
            let p = gamma.get(b);
            let sigma = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
            let phat = c as f64 / n as f64;
            assert!((phat - p).abs() <= 3.0 * sigma + 1e-12, "b={b}: {phat} vs {p}");
        }
    }

    #[test]
    fn ppp_sampling_matches_pmf() {
        let m = PppModel::new(1.5e-4, 60.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut counts = vec![0u64; 40];
        for _ in 0..n {
            counts[m.sample_coverage(&mut rng).2.len()] += 1;
        }
        within_three_sigma(&counts, &m.gamma(), n);
    }

    #[test]
    fn labelled_sampling_matches_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let topos = [
            Topology::Grid {
                model: reference_grid(),
                n_sbs: 316,
            },
            Topology::Literal {
                gamma: CoverageDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
                n_sbs: 6,
            },
        ];
        for t in topos {
            let s = t.sampler();
            let mut counts = vec![0u64; 10];
            for _ in 0..n {
                let labels = s.sample(&mut rng);
                assert!(labels.windows(2).all(|w| w[0] < w[1]));
                assert!(labels.iter().all(|&l| l < t.n_sbs()));
                counts[labels.len()] += 1;
            }
            within_three_sigma(&counts, &t.gamma(), n);
        }
    }

    #[test]
    fn topology_serde() {
        let t = Topology::Literal {
            gamma: CoverageDistribution::new(vec![0.5, 0.5]).unwrap(),
            n_sbs: 2,
        };
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"kind":"literal","gamma":[0.5,0.5],"n_sbs":2}"#);
        assert_eq!(serde_json::from_str::<Topology>(&s).unwrap(), t);
        assert!(serde_json::from_str::<Topology>(r#"{"kind":"literal","gamma":[0.5],"n_sbs":2}"#).is_err());
    }

    proptest! {
        #[test]
        fn zipf_is_a_monotone_distribution(f in 1usize..300, alpha in 0.0f64..2.0) {
            let p = zipf(f, alpha).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn ppp_gamma_is_a_distribution(lambda in 0.0f64..1e-3, r in 0.0f64..100.0) {
            let g = PppModel::new(lambda, r).unwrap().gamma();
            prop_assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((g.mean() - lambda * PI * r * r).abs() < 1e-6 * (1.0 + lambda * PI * r * r));
        }

        #[test]
        fn grid_exact_is_a_distribution(spacing in 20.0f64..200.0, r in 0.0f64..120.0) {
            let m = GridModel::new(500.0, spacing, r).unwrap();
            let g = m.gamma_exact(512);
            prop_assert!((g.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // Mean count equals disc area over cell area.
            prop_assert!((g.mean() - PI * r * r / (spacing * spacing)).abs() < 2e-3 * (1.0 + g.mean()));
        }
    }
}
