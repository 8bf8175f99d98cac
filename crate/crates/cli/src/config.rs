//! Experiment configuration files.

use std::fmt;
use std::path::Path;

use edgepir::cache::{default_q, CachingScheme, EncodedCache, FileLibrary, Regime};
use edgepir::codes::LinearCode;
use edgepir::gf::{Field, Matrix};
use edgepir::pirproto::Blinding;
use edgepir::topology::{zipf, CoverageDistribution, GridModel, PppModel, Topology};
use rand::Rng;
use serde::Deserialize;

/// Rejected configuration: unknown preset, missing section, bad value.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub const PRESETS: [(&str, &str); 5] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
];

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub library: LibraryConfig,
    pub topology: TopologyConfig,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub retrieve: RetrieveConfig,
    #[serde(default)]
    pub privacy: PrivacyConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryConfig {
    pub files: usize,
    /// Zipf exponent; ignored when `popularity` is given.
    #[serde(default)]
    pub zipf: Option<f64>,
    #[serde(default)]
    pub popularity: Option<Vec<f64>>,
    /// Bits per stripe. Defaults to the smallest padding-free length.
    #[serde(default)]
    pub stripe_bits: Option<usize>,
    /// Explicit file contents as bit strings of length `beta * L`; random
    /// otherwise.
    #[serde(default)]
    pub data: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridGamma {
    /// One lattice cell (no macro-cell edge).
    #[default]
    Cell,
    /// The macro-cell disc, as sampled by `simulate`.
    Disc,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TopologyConfig {
    Grid {
        radius: f64,
        /// Lattice spacing; tuned to `n_sbs` points in the disc if absent.
        #[serde(default)]
        spacing: Option<f64>,
        r: f64,
        n_sbs: usize,
        #[serde(default)]
        gamma: GridGamma,
    },
    Ppp {
        lambda: f64,
        r_u: f64,
        n_sbs: usize,
    },
    Literal {
        gamma: Vec<f64>,
        n_sbs: usize,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Cache size `M` in files.
    pub cache_size: f64,
    #[serde(default = "one")]
    pub t: usize,
    /// Uniform placement: the `floor(M k)` most popular files with `1/k` each.
    #[serde(default)]
    pub k: Option<usize>,
    /// Per-file code dimensions, 0 for uncached.
    #[serde(default)]
    pub ks: Option<Vec<usize>>,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub q: Option<u64>,
    /// Generator matrices over GF(q), one per cached file in file order.
    #[serde(default)]
    pub codes: Option<Vec<Vec<Vec<u64>>>>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Coordinates per session; the rate-minimizing value if absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub blinding: Blinding,
    /// Generator of the blinding code over GF(q); GRS if absent.
    #[serde(default)]
    pub blinding_code: Option<Vec<Vec<u64>>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveConfig {
    #[serde(default)]
    pub file: usize,
    /// Labels of the SBSs in range; sampled from the topology if absent.
    #[serde(default)]
    pub in_range: Option<Vec<usize>>,
    #[serde(default)]
    pub snapshot: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyMode {
    #[default]
    Exact,
    Statistical,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyConfig {
    #[serde(default)]
    pub mode: PrivacyMode,
    /// Coalitions as coordinate positions; every T-subset if absent.
    #[serde(default)]
    pub coalitions: Option<Vec<Vec<usize>>>,
    #[serde(default = "default_sessions")]
    pub sessions: u64,
    #[serde(default = "default_buckets")]
    pub buckets: u64,
    #[serde(default = "default_limit")]
    pub limit: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl Default for PrivacyConfig {
    fn default() -> Self {
        PrivacyConfig {
            mode: PrivacyMode::Exact,
            coalitions: None,
            sessions: default_sessions(),
            buckets: default_buckets(),
            limit: default_limit(),
            alpha: default_alpha(),
        }
    }
}

fn default_sessions() -> u64 {
    100_000
}
fn default_buckets() -> u64 {
    64
}
fn default_limit() -> u64 {
    1 << 22
}
fn default_alpha() -> f64 {
    0.01
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    CacheSize,
    Density,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Values {
    pub fn expand(&self) -> anyhow::Result<Vec<f64>> {
        match self {
            Values::List(v) => Ok(v.clone()),
            Values::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(config_err(format!("bad range {start}..{stop} step {step}")));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                // Twelve significant digits strip the accumulated `i * step` noise.
                Ok((0..count)
                    .map(|i| format!("{:.11e}", start + i as f64 * step).parse().unwrap())
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    #[serde(default)]
    pub cache_sizes: Option<Values>,
    #[serde(default)]
    pub densities: Option<Values>,
    #[serde(default)]
    pub r_u: Option<f64>,
    #[serde(default = "default_ts")]
    pub t: Vec<usize>,
    #[serde(default = "default_thetas")]
    pub theta: Vec<f64>,
    /// Scan `n` up to `N_SBS` instead of `N_max + k + T`.
    #[serde(default)]
    pub full_range: bool,
}

fn default_ts() -> Vec<usize> {
    vec![1]
}
fn default_thetas() -> Vec<f64> {
    vec![0.0]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| config_err(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> anyhow::Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| config_err(format!("unknown preset {name:?}; available: fig2..fig6")))?;
        Self::parse(text)
    }

    pub fn n_sbs(&self) -> usize {
        match &self.topology {
            TopologyConfig::Grid { n_sbs, .. } | TopologyConfig::Ppp { n_sbs, .. } | TopologyConfig::Literal { n_sbs, .. } => *n_sbs,
        }
    }

    pub fn popularity(&self) -> anyhow::Result<Vec<f64>> {
        match (&self.library.popularity, self.library.zipf) {
            (Some(p), _) => {
                if p.len() != self.library.files {
                    return Err(config_err(format!("{} popularities for {} files", p.len(), self.library.files)));
                }
                Ok(p.clone())
            }
            (None, Some(alpha)) => Ok(zipf(self.library.files, alpha)?),
            (None, None) => Err(config_err("library needs zipf or popularity")),
        }
    }

    /// Topology for sampling sessions.
    pub fn topology(&self) -> anyhow::Result<Topology> {
        Ok(match &self.topology {
            TopologyConfig::Grid { radius, spacing, r, n_sbs, .. } => {
                let spacing = spacing.unwrap_or_else(|| GridModel::spacing_for_count(*radius, *n_sbs));
                Topology::Grid {
                    model: GridModel::new(*radius, spacing, *r)?,
                    n_sbs: *n_sbs,
                }
            }
            TopologyConfig::Ppp { lambda, r_u, n_sbs } => Topology::Ppp {
                model: PppModel::new(*lambda, *r_u)?,
                n_sbs: *n_sbs,
            },
            TopologyConfig::Literal { gamma, n_sbs } => Topology::Literal {
                gamma: CoverageDistribution::new(gamma.clone())?,
                n_sbs: *n_sbs,
            },
        })
    }

    /// Coverage distribution for the analytic rates.
    pub fn gamma(&self) -> anyhow::Result<CoverageDistribution> {
        let topo = self.topology()?;
        Ok(match (&self.topology, &topo) {
            (TopologyConfig::Grid { gamma: GridGamma::Cell, .. }, Topology::Grid { model, .. }) => model.gamma_exact(1 << 14),
            _ => topo.gamma(),
        })
    }

    pub fn regime(&self) -> Regime {
        Regime::Pir
    }

    /// Per-file code dimensions from `ks` or the uniform `k`.
    pub fn ks(&self) -> anyhow::Result<Vec<Option<usize>>> {
        let s = &self.scheme;
        match (&s.ks, s.k) {
            (Some(_), Some(_)) => Err(config_err("scheme: give either k or ks, not both")),
            (Some(ks), None) => {
                if ks.len() != self.library.files {
                    return Err(config_err(format!("scheme: {} entries in ks for {} files", ks.len(), self.library.files)));
                }
                Ok(ks.iter().map(|&k| (k > 0).then_some(k)).collect())
            }
            (None, Some(k)) => {
                if k == 0 {
                    return Err(config_err("scheme: k must be positive"));
                }
                let c = edgepir::optimizer::files_cached(s.cache_size, k, self.library.files);
                Ok((0..self.library.files).map(|i| (i < c).then_some(k)).collect())
            }
            (None, None) => Ok(vec![None; self.library.files]),
        }
    }

    pub fn mu(&self) -> anyhow::Result<Vec<f64>> {
        Ok(self.ks()?.iter().map(|k| k.map_or(0.0, |k| 1.0 / k as f64)).collect())
    }

    pub fn scheme(&self) -> anyhow::Result<CachingScheme> {
        Ok(CachingScheme::new(self.n_sbs(), self.scheme.cache_size, self.ks()?, self.regime())?)
    }

    pub fn q(&self) -> u64 {
        self.scheme.q.unwrap_or_else(|| default_q(self.n_sbs()))
    }

    /// Stripes per file: `Gamma = n - (k_max + T - 1)` for the configured
    /// or rate-minimizing `n`, 1 when nothing is cached.
    pub fn beta(&self, n: Option<usize>) -> anyhow::Result<usize> {
        let ks = self.ks()?;
        let Some(k_max) = ks.iter().flatten().copied().max() else {
            return Ok(1);
        };
        let n = n.ok_or_else(|| config_err("protocol.n is required once files are cached"))?;
        let t = self.scheme.t;
        if n < k_max + t || n > self.n_sbs() {
            return Err(crate::constraint_err(format!(
                "n = {n} must satisfy k_max + T = {} <= n <= N_SBS = {}",
                k_max + t,
                self.n_sbs()
            )));
        }
        Ok(n - (k_max + t - 1))
    }

    pub fn stripe_bits(&self) -> anyhow::Result<usize> {
        if let Some(l) = self.library.stripe_bits {
            return Ok(l);
        }
        let m = self.q().trailing_zeros() as usize;
        let lcm = self.ks()?.iter().flatten().fold(1usize, |a, &k| a / gcd(a, k) * k);
        Ok(m.max(1) * lcm)
    }

    pub fn library<R: Rng + ?Sized>(&self, beta: usize, rng: &mut R) -> anyhow::Result<FileLibrary> {
        let p = self.popularity()?;
        let l = self.stripe_bits()?;
        match &self.library.data {
            None => Ok(FileLibrary::random(beta, l, p, rng)?),
            Some(data) => {
                if data.len() != self.library.files {
                    return Err(config_err(format!("{} data strings for {} files", data.len(), self.library.files)));
                }
                let mut files = Vec::with_capacity(data.len());
                for (i, s) in data.iter().enumerate() {
                    let bits: Vec<bool> = s
                        .chars()
                        .map(|c| match c {
                            '0' => Ok(false),
                            '1' => Ok(true),
                            _ => Err(config_err(format!("file {i}: data must be 0/1"))),
                        })
                        .collect::<anyhow::Result<_>>()?;
                    if bits.len() != beta * l {
                        return Err(config_err(format!("file {i}: {} bits, expected beta * L = {}", bits.len(), beta * l)));
                    }
                    files.push(bits.chunks(l).map(<[bool]>::to_vec).collect());
                }
                Ok(FileLibrary::new(beta, l, files, p)?)
            }
        }
    }

    pub fn base_field(&self) -> anyhow::Result<Field> {
        Ok(Field::new(self.q(), 1)?)
    }

    fn code_from_rows(&self, rows: &[Vec<u64>]) -> anyhow::Result<LinearCode> {
        let f = self.base_field()?;
        let refs: Vec<&[u64]> = rows.iter().map(Vec::as_slice).collect();
        Ok(LinearCode::from_generator(Matrix::from_u64(&f, &refs)?)?)
    }

    pub fn encode(&self, library: &FileLibrary) -> anyhow::Result<EncodedCache> {
        let scheme = self.scheme()?;
        match &self.scheme.codes {
            None => Ok(EncodedCache::encode_default(library, &scheme, self.q())?),
            Some(gens) => {
                let mut it = gens.iter();
                let mut codes = Vec::with_capacity(scheme.num_files());
                for i in 0..scheme.num_files() {
                    if scheme.is_cached(i) {
                        let rows = it.next().ok_or_else(|| config_err("scheme.codes: one generator per cached file"))?;
                        codes.push(Some(self.code_from_rows(rows)?));
                    } else {
                        codes.push(None);
                    }
                }
                if it.next().is_some() {
                    return Err(config_err("scheme.codes: more generators than cached files"));
                }
                Ok(EncodedCache::encode(library, &scheme, codes, self.q())?)
            }
        }
    }

    pub fn blinding_code(&self) -> anyhow::Result<Option<LinearCode>> {
        self.protocol.blinding_code.as_deref().map(|rows| self.code_from_rows(rows)).transpose()
    }

    pub fn sweep(&self) -> anyhow::Result<&SweepConfig> {
        self.sweep.as_ref().ok_or_else(|| config_err("config has no [sweep] section"))
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            assert!(cfg.n_sbs() > 0, "{name}");
            cfg.ks().unwrap();
        }
        assert!(ExperimentConfig::preset("fig9").is_err());
    }

    #[test]
    fn ranges_expand_without_drift() {
        let v = Values::Range {
            start: 1e-5,
            stop: 5e-4,
            step: 1e-5,
        };
        let xs = v.expand().unwrap();
        assert_eq!(xs.len(), 50);
        assert_eq!(xs[31], 3.2e-4);
        assert_eq!(xs[12], 1.3e-4);
        let v = Values::Range {
            start: 1.0,
            stop: 200.0,
            step: 1.0,
        };
        assert_eq!(v.expand().unwrap().len(), 200);
    }

    #[test]
    fn uniform_k_caches_the_most_popular() {
        let mut cfg = ExperimentConfig::preset("fig3").unwrap();
        cfg.scheme.cache_size = 10.5;
        cfg.scheme.k = Some(2);
        let ks = cfg.ks().unwrap();
        assert_eq!(ks.iter().flatten().count(), 21);
        assert!(ks[..21].iter().all(|k| *k == Some(2)));
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = ExperimentConfig::preset("fig2").map(|_| PRESETS[0].1).unwrap();
        assert!(ExperimentConfig::parse(&format!("{text}\nbogus = 1\n")).is_err());
    }
}
