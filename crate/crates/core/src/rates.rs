//! Closed-form average rates, normalized by the file size `βL`.
//!
//! * backhaul without privacy, in both the MDS-placement form and the
//!   equivalent `Σ p_i Σ_b γ_b (1 - min(1, bμ_i))` form,
//! * backhaul with privacy against `T` colluders when `n` coordinates are
//!   contacted,
//! * traffic from the SBSs under privacy, where dummy queries are sent even
//!   for uncached files,
//! * the weighted rate `C = R + θD`.
//!
//! A placement is a vector `μ` with `μ_i = 1/k_i` for cached files and
//! `μ_i = 0` otherwise. Cached and uncached files are separated explicitly
//! rather than through `⌈μ_i⌉` and `⌊1 - μ_i⌋`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::CoverageDistribution;

/// Slack for recognising `μ = 1/k` and for rate comparisons.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RatesError {
    #[error("popularity and placement lengths differ ({p} vs {mu})")]
    LengthMismatch { p: usize, mu: usize },
    #[error("mu[{index}] = {value} is not 0 or 1/k for a positive integer k")]
    BadPlacement { index: usize, value: f64 },
    #[error("mu_min (n - T + 1) - 1 = {0} must be positive")]
    NonPositiveDenominator(f64),
    #[error("theta = {0} must lie in [0, 1]")]
    BadTheta(f64),
    #[error("collusion size T must be at least 1")]
    ZeroCollusion,
}

/// Checks a placement and returns `(μ_min, μ_max)` over cached files, or
/// `None` when nothing is cached.
pub fn placement_extremes(mu: &[f64]) -> Result<Option<(f64, f64)>, RatesError> {
    let mut ext: Option<(f64, f64)> = None;
    for (index, &value) in mu.iter().enumerate() {
        if value == 0.0 {
            continue;
        }
        let bad = RatesError::BadPlacement { index, value };
        if !(value > 0.0 && value <= 1.0 + EPS) {
            return Err(bad);
        }
        let k = 1.0 / value;
        if (k - k.round()).abs() > 1e-9 * k {
            return Err(bad);
        }
        ext = Some(match ext {
            None => (value, value),
            Some((lo, hi)) => (lo.min(value), hi.max(value)),
        });
    }
    Ok(ext)
}

fn check_lengths(p: &[f64], mu: &[f64]) -> Result<(), RatesError> {
    if p.len() != mu.len() {
        return Err(RatesError::LengthMismatch { p: p.len(), mu: mu.len() });
    }
    Ok(())
}

fn uncached_mass(p: &[f64], mu: &[f64]) -> f64 {
    p.iter().zip(mu).filter(|(_, &m)| m == 0.0).map(|(p, _)| p).sum()
}

/// `Σ_{b<n} γ_b (n - b)`: expected number of responses fetched from the MBS.
pub fn mbs_deficit(gamma: &CoverageDistribution, n: usize) -> f64 {
    (0..n).map(|b| gamma.get(b) * (n - b) as f64).sum()
}

/// `Σ_b γ̃_b b`: expected number of SBSs answering when at most `n` are used.
pub fn served(gamma: &CoverageDistribution, n: usize) -> f64 {
    gamma.capped(n).iter().enumerate().map(|(b, g)| b as f64 * g).sum()
}

/// Backhaul without privacy: a cached file misses `max(0, 1/μ_i - b)` of
/// its `1/μ_i` coded pieces when `b` SBSs are in range.
pub fn backhaul_nopir(p: &[f64], mu: &[f64], gamma: &CoverageDistribution) -> Result<f64, RatesError> {
    check_lengths(p, mu)?;
    placement_extremes(mu)?;
    let cached: f64 = p
        .iter()
        .zip(mu)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&pi, &m)| {
            let k = (1.0 / m).round();
            let missing: f64 = gamma
                .as_slice()
                .iter()
                .enumerate()
                .map(|(b, g)| g * (k - b as f64).max(0.0))
                .sum();
            pi * missing * m
        })
        .sum();
    Ok(cached + uncached_mass(p, mu))
}

/// The same rate written as `Σ p_i Σ_b γ_b (1 - min(1, bμ_i))`.
pub fn backhaul_nopir_alt(p: &[f64], mu: &[f64], gamma: &CoverageDistribution) -> Result<f64, RatesError> {
    check_lengths(p, mu)?;
    placement_extremes(mu)?;
    Ok(p
        .iter()
        .zip(mu)
        .map(|(&pi, &m)| {
            pi * gamma
                .as_slice()
                .iter()
                .enumerate()
                .map(|(b, g)| g * (1.0 - (b as f64 * m).min(1.0)))
                .sum::<f64>()
        })
        .sum())
}

/// No privacy, the `m` most popular files cached whole in every SBS.
pub fn backhaul_nopir_popular(p: &[f64], m: usize, gamma: &CoverageDistribution) -> f64 {
    let m = m.min(p.len());
    gamma.get(0) * p[..m].iter().sum::<f64>() + p[m..].iter().sum::<f64>()
}

fn pir_factor(mu_min: f64, mu_max: f64, n: usize, t: usize) -> Result<f64, RatesError> {
    if t == 0 {
        return Err(RatesError::ZeroCollusion);
    }
    let den = mu_min * (n as f64 - t as f64 + 1.0) - 1.0;
    if den <= EPS {
        return Err(RatesError::NonPositiveDenominator(den));
    }
    Ok(mu_max / den)
}

/// Backhaul with privacy against `t` colluders using `n` coordinates.
pub fn backhaul_pir(p: &[f64], mu: &[f64], gamma: &CoverageDistribution, n: usize, t: usize) -> Result<f64, RatesError> {
    check_lengths(p, mu)?;
    let Some((lo, hi)) = placement_extremes(mu)? else {
        return Ok(uncached_mass(p, mu));
    };
    let factor = pir_factor(lo, hi, n, t)?;
    let cached: f64 = p.iter().zip(mu).filter(|(_, &m)| m > 0.0).map(|(p, _)| p).sum();
    Ok(factor * cached * mbs_deficit(gamma, n) + uncached_mass(p, mu))
}

/// Traffic from the SBSs under privacy. Every request, cached or not,
/// downloads from the in-range SBSs, so popularity does not enter. Zero
/// when nothing is cached.
pub fn sbs_rate_pir(mu: &[f64], gamma: &CoverageDistribution, n: usize, t: usize) -> Result<f64, RatesError> {
    let Some((lo, hi)) = placement_extremes(mu)? else {
        return Ok(0.0);
    };
    Ok(pir_factor(lo, hi, n, t)? * served(gamma, n))
}

pub fn weighted_rate(r: f64, d: f64, theta: f64) -> Result<f64, RatesError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(RatesError::BadTheta(theta));
    }
    Ok(r + theta * d)
}

/// All rates of one configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateInputs {
    pub p: Vec<f64>,
    pub gamma: CoverageDistribution,
    pub mu: Vec<f64>,
    pub n: usize,
    pub t: usize,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub r_nopir: f64,
    pub r_pir: f64,
    pub d_pir: f64,
    pub c_pir: f64,
}

impl RateInputs {
    pub fn report(&self) -> Result<RateReport, RatesError> {
        let r_pir = backhaul_pir(&self.p, &self.mu, &self.gamma, self.n, self.t)?;
        let d_pir = sbs_rate_pir(&self.mu, &self.gamma, self.n, self.t)?;
        Ok(RateReport {
            r_nopir: backhaul_nopir(&self.p, &self.mu, &self.gamma)?,
            r_pir,
            d_pir,
            c_pir: weighted_rate(r_pir, d_pir, self.theta)?,
        })
    }
}
