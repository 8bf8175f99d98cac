//! Placement and protocol-parameter optimization.
//!
//! With privacy, a uniform placement `μ = 1/k` on the `⌊M/μ⌋` most popular
//! files is optimal, so the search is a scan over `(k, n)`. Without
//! privacy each file picks its own `k_i`, which is a multiple-choice
//! knapsack solved by dynamic programming over a discretized budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rates::{mbs_deficit, served, EPS};
use crate::topology::{CoverageDistribution, PppModel, TopologyError};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("no feasible (k, n) pair: need k + T <= N_SBS")]
    EmptySpace,
    #[error("collusion size T must be at least 1")]
    ZeroCollusion,
    #[error("cache size M = {0} must be finite and non-negative")]
    BadCacheSize(f64),
    #[error("theta = {0} must lie in [0, 1]")]
    BadTheta(f64),
    #[error("budget of {units} units per file times {files} files overflows the DP table")]
    BudgetOverflow { units: u64, files: usize },
    #[error("no-PIR candidate set must be non-empty and free of zero")]
    BadCandidates,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Candidate `k = 1/μ` values and the range of contacted coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub ks: Vec<usize>,
    pub n_sbs: usize,
    pub t: usize,
    /// Scan `n` up to `N_SBS` instead of `N_max + k + T`.
    #[serde(default)]
    pub full_range: bool,
}

impl SearchSpace {
    /// Every `k` with `k + T <= N_SBS`.
    pub fn new(n_sbs: usize, t: usize) -> Self {
        SearchSpace {
            ks: (1..=n_sbs.saturating_sub(t)).collect(),
            n_sbs,
            t,
            full_range: false,
        }
    }

    pub fn with_full_range(mut self) -> Self {
        self.full_range = true;
        self
    }

    /// `n ∈ {k + T, …}`, capped at `N_max + k + T` unless `full_range`.
    pub fn n_range(&self, k: usize, gamma: &CoverageDistribution) -> std::ops::RangeInclusive<usize> {
        let lo = k + self.t;
        let hi = if self.full_range {
            self.n_sbs
        } else {
            self.n_sbs.min(gamma.n_max() + k + self.t)
        };
        lo..=hi
    }

    fn pairs(&self, gamma: &CoverageDistribution) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .ks
            .iter()
            .filter(|&&k| k >= 1)
            .flat_map(|&k| self.n_range(k, gamma).map(move |n| (k, n)))
            .collect();
        // Scan order realises the tie-break: smaller n, then larger μ.
        out.sort();
        out.sort_by_key(|&(_, n)| n);
        out
    }
}

/// One scanned `(k, n)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub k: usize,
    pub n: usize,
    pub files_cached: usize,
    pub r: f64,
    pub d: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    /// Zero when not caching is optimal.
    pub mu_star: f64,
    pub k_star: Option<usize>,
    pub n_star: Option<usize>,
    pub files_cached: usize,
    pub objective: f64,
    pub r: f64,
    pub d: f64,
    pub table: Vec<Evaluation>,
}

impl Optimum {
    fn no_caching(table: Vec<Evaluation>) -> Self {
        Optimum {
            mu_star: 0.0,
            k_star: None,
            n_star: None,
            files_cached: 0,
            objective: 1.0,
            r: 1.0,
            d: 0.0,
            table,
        }
    }

    /// The placement vector for a library of `f` files.
    pub fn placement(&self, f: usize) -> Vec<f64> {
        (0..f).map(|i| if i < self.files_cached { self.mu_star } else { 0.0 }).collect()
    }
}

fn prefix(p: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len() + 1);
    out.push(0.0);
    for &x in p {
        out.push(out.last().unwrap() + x);
    }
    out
}

/// `min(⌊M k⌋, F)`, tolerant of `M` given as a float.
pub fn files_cached(m: f64, k: usize, f: usize) -> usize {
    let x = (m * k as f64 + 1e-9).floor();
    if x >= f as f64 {
        f
    } else {
        x as usize
    }
}

fn check(m: f64, t: usize, theta: f64) -> Result<(), OptimizerError> {
    if t == 0 {
        return Err(OptimizerError::ZeroCollusion);
    }
    if !(m.is_finite() && m >= 0.0) {
        return Err(OptimizerError::BadCacheSize(m));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(OptimizerError::BadTheta(theta));
    }
    Ok(())
}

/// Uniform-placement objective `R + θD` at one `(k, n)`.
pub fn evaluate_uniform(p_prefix: &[f64], gamma: &CoverageDistribution, m: f64, t: usize, theta: f64, k: usize, n: usize) -> Evaluation {
    let f = p_prefix.len() - 1;
    let mu = 1.0 / k as f64;
    let factor = mu / (mu * (n - t + 1) as f64 - 1.0);
    let cached = files_cached(m, k, f);
    let r = factor * p_prefix[cached] * mbs_deficit(gamma, n) + (p_prefix[f] - p_prefix[cached]);
    let d = factor * served(gamma, n);
    Evaluation {
        k,
        n,
        files_cached: cached,
        r,
        d,
        objective: r + theta * d,
    }
}

fn scan(
    p: &[f64],
    gamma: &CoverageDistribution,
    m: f64,
    theta: f64,
    space: &SearchSpace,
    compare_with_no_caching: bool,
) -> Result<Optimum, OptimizerError> {
    check(m, space.t, theta)?;
    let pairs = space.pairs(gamma);
    if pairs.is_empty() {
        return Err(OptimizerError::EmptySpace);
    }
    let pre = prefix(p);
    let table: Vec<Evaluation> = pairs
        .iter()
        .map(|&(k, n)| evaluate_uniform(&pre, gamma, m, space.t, theta, k, n))
        .collect();
    let best = table
        .iter()
        .filter(|e| e.files_cached > 0)
        .fold(None::<&Evaluation>, |best, e| match best {
            Some(b) if e.objective >= b.objective - EPS => Some(b),
            _ => Some(e),
        });
    match best {
        Some(b) if !compare_with_no_caching || b.objective < 1.0 - EPS => Ok(Optimum {
            mu_star: 1.0 / b.k as f64,
            k_star: Some(b.k),
            n_star: Some(b.n),
            files_cached: b.files_cached,
            objective: b.objective,
            r: b.r,
            d: b.d,
            table,
        }),
        _ => Ok(Optimum::no_caching(table)),
    }
}

/// Minimum backhaul under privacy over uniform placements.
pub fn optimize_pir(p: &[f64], gamma: &CoverageDistribution, m: f64, space: &SearchSpace) -> Result<Optimum, OptimizerError> {
    scan(p, gamma, m, 0.0, space, true)
}

/// Minimum of `R + θD` under privacy over uniform placements.
pub fn optimize_weighted(
    p: &[f64],
    gamma: &CoverageDistribution,
    m: f64,
    theta: f64,
    space: &SearchSpace,
) -> Result<Optimum, OptimizerError> {
    scan(p, gamma, m, theta, space, true)
}

/// The `⌊M⌋` most popular files cached whole, optimized over `n` only.
pub fn popular_pir(p: &[f64], gamma: &CoverageDistribution, m: f64, space: &SearchSpace) -> Result<Optimum, OptimizerError> {
    let popular = SearchSpace {
        ks: vec![1],
        ..space.clone()
    };
    if m < 1.0 - 1e-9 {
        check(m, space.t, 0.0)?;
        return Ok(Optimum::no_caching(Vec::new()));
    }
    scan(p, gamma, m, 0.0, &popular, false)
}

/// Per-file cost without privacy when caching `1/k` of the file:
/// `Σ_b γ_b (1 - min(1, b/k))`.
pub fn nopir_cost(gamma: &CoverageDistribution, k: usize) -> f64 {
    gamma
        .as_slice()
        .iter()
        .enumerate()
        .map(|(b, g)| g * (1.0 - (b as f64 / k as f64).min(1.0)))
        .sum()
}

/// Default no-PIR candidates `{1, …, 2 N_max}`.
pub fn default_nopir_ks(gamma: &CoverageDistribution) -> Vec<usize> {
    (1..=(2 * gamma.n_max()).max(1)).collect()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Largest table the DP will allocate, in cells.
const DP_CELL_LIMIT: u64 = 1 << 31;

/// Optimal per-file placement without privacy for every cache size at once.
///
/// The budget is counted in units of `1/lcm(ks)`; `best[u]` is the lowest
/// backhaul using at most `u` units. Choices are kept so that the
/// placement can be reconstructed for any `M`.
pub struct NoPirPlanner {
    ks: Vec<usize>,
    units: u64,
    weights: Vec<usize>,
    costs: Vec<f64>,
    p: Vec<f64>,
    best: Vec<f64>,
    // choice[i * (budget + 1) + u]: 0 = uncached, c + 1 = ks[c].
    choice: Vec<u8>,
    budget: usize,
}

impl NoPirPlanner {
    pub fn new(p: &[f64], gamma: &CoverageDistribution, ks: &[usize]) -> Result<Self, OptimizerError> {
        if ks.is_empty() || ks.contains(&0) || ks.len() > 254 {
            return Err(OptimizerError::BadCandidates);
        }
        let units = ks.iter().fold(1u64, |l, &k| l / gcd(l, k as u64) * k as u64);
        let budget = units
            .checked_mul(p.len() as u64)
            .filter(|&b| b.saturating_mul(p.len() as u64 + 1) <= DP_CELL_LIMIT)
            .ok_or(OptimizerError::BudgetOverflow { units, files: p.len() })? as usize;
        let weights: Vec<usize> = ks.iter().map(|&k| (units / k as u64) as usize).collect();
        let costs: Vec<f64> = ks.iter().map(|&k| nopir_cost(gamma, k)).collect();
        let width = budget + 1;
        let mut best = vec![0.0; width];
        let mut next = vec![0.0; width];
        let mut choice = vec![0u8; p.len() * width];
        for (i, &pi) in p.iter().enumerate() {
            let row = &mut choice[i * width..(i + 1) * width];
            for u in 0..width {
                let mut v = best[u] + pi;
                let mut c = 0u8;
                for (j, (&w, &cost)) in weights.iter().zip(&costs).enumerate() {
                    if w <= u {
                        let cand = best[u - w] + pi * cost;
                        if cand < v - EPS {
                            v = cand;
                            c = j as u8 + 1;
                        }
                    }
                }
                next[u] = v;
                row[u] = c;
            }
            std::mem::swap(&mut best, &mut next);
        }
        Ok(NoPirPlanner {
            ks: ks.to_vec(),
            units,
            weights,
            costs,
            p: p.to_vec(),
            best,
            choice,
            budget,
        })
    }

    /// Budget units per file.
    pub fn units(&self) -> u64 {
        self.units
    }

    fn budget_for(&self, m: f64) -> usize {
        let u = (m * self.units as f64 + 1e-9).floor();
        if u >= self.budget as f64 {
            self.budget
        } else {
            u.max(0.0) as usize
        }
    }

    /// Optimal backhaul for cache size `m`.
    pub fn rate(&self, m: f64) -> f64 {
        self.best[self.budget_for(m)]
    }

    /// Optimal `k_i` per file (`None` = uncached) for cache size `m`.
    pub fn placement(&self, m: f64) -> Vec<Option<usize>> {
        let width = self.budget + 1;
        let mut u = self.budget_for(m);
        let mut out = vec![None; self.p.len()];
        for i in (0..self.p.len()).rev() {
            let c = self.choice[i * width + u];
            if c > 0 {
                let j = (c - 1) as usize;
                out[i] = Some(self.ks[j]);
                u -= self.weights[j];
            }
        }
        out
    }

    /// Backhaul of an explicit placement, using this planner's costs.
    pub fn placement_rate(&self, ks: &[Option<usize>]) -> f64 {
        ks.iter()
            .zip(&self.p)
            .map(|(k, &pi)| match k {
                None => pi,
                Some(k) => pi * self.costs[self.ks.iter().position(|x| x == k).expect("candidate k")],
            })
            .sum()
    }
}

/// Optimal no-PIR backhaul for a single cache size.
pub fn optimize_nopir(p: &[f64], gamma: &CoverageDistribution, m: f64, ks: &[usize]) -> Result<(f64, Vec<Option<usize>>), OptimizerError> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(OptimizerError::BadCacheSize(m));
    }
    let planner = NoPirPlanner::new(p, gamma, ks)?;
    Ok((planner.rate(m), planner.placement(m)))
}

/// One point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: f64,
    pub mu_star: f64,
    pub k_star: Option<usize>,
    pub n_star: Option<usize>,
    #[serde(rename = "R_PIR")]
    pub r_pir: f64,
    #[serde(rename = "D_PIR")]
    pub d_pir: f64,
    #[serde(rename = "C_PIR")]
    pub c_pir: f64,
    #[serde(rename = "R_noPIR_popular")]
    pub r_nopir_popular: f64,
    #[serde(rename = "R_PIR_popular")]
    pub r_pir_popular: f64,
}

fn sweep_row(
    axis: f64,
    p: &[f64],
    gamma: &CoverageDistribution,
    m: f64,
    theta: f64,
    space: &SearchSpace,
) -> Result<SweepRow, OptimizerError> {
    let opt = optimize_weighted(p, gamma, m, theta, space)?;
    let pop = popular_pir(p, gamma, m, space)?;
    Ok(SweepRow {
        axis,
        mu_star: opt.mu_star,
        k_star: opt.k_star,
        n_star: opt.n_star,
        r_pir: opt.r,
        d_pir: opt.d,
        c_pir: opt.objective,
        r_nopir_popular: crate::rates::backhaul_nopir_popular(p, files_cached(m, 1, p.len()), gamma),
        r_pir_popular: pop.r,
    })
}

/// Optimum of `R + θD` for each cache size.
pub fn sweep_cache_size(
    p: &[f64],
    gamma: &CoverageDistribution,
    ms: &[f64],
    theta: f64,
    space: &SearchSpace,
) -> Result<Vec<SweepRow>, OptimizerError> {
    ms.par_iter().map(|&m| sweep_row(m, p, gamma, m, theta, space)).collect()
}

/// Optimum for each PPP density at a fixed cache size. `N_SBS` of `space`
/// is replaced per point by the largest count with non-negligible mass.
pub fn sweep_density(
    p: &[f64],
    r_u: f64,
    lambdas: &[f64],
    m: f64,
    theta: f64,
    space: &SearchSpace,
) -> Result<Vec<SweepRow>, OptimizerError> {
    lambdas
        .par_iter()
        .map(|&lambda| {
            let gamma = PppModel::new(lambda, r_u)?.gamma();
            sweep_row(lambda, p, &gamma, m, theta, space)
        })
        .collect()
}

/// A maximal run of sweep points sharing the same optimal `(k, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: f64,
    pub to: f64,
    pub k: Option<usize>,
    pub n: Option<usize>,
}

pub fn transitions(rows: &[SweepRow]) -> Vec<Transition> {
    let mut out: Vec<Transition> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(t) if t.k == r.k_star && t.n == r.n_star => t.to = r.axis,
            _ => out.push(Transition {
                from: r.axis,
                to: r.axis,
                k: r.k_star,
                n: r.n_star,
            }),
        }
    }
    out
}
