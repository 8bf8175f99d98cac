//! In-process network simulation: SBSs answer from their cached columns,
//! the MBS answers the remaining coordinates from the plaintext library, and
//! every session is accounted bit by bit.
//!
//! A session for a cached file contacts the `min(b, n)` in-range SBSs with
//! the lowest labels and lets the MBS serve the lowest-indexed unused
//! storage coordinates. A session for an uncached file sends dummy queries
//! for a uniformly chosen cached file to the same SBSs, discards the
//! answers, and downloads the file from the MBS.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheError, EncodedCache, FileLibrary, Mbs};
use crate::codes::LinearCode;
use crate::gf::Elem;
use crate::pirproto::{independence_report, Blinding, PrivacyReport, ProtoError, ProtocolParams, QuerySet, Transcript};
use crate::topology::{CoverageSampler, Topology};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("topology has {topology} SBSs but the cache has {cache}")]
    SbsCount { topology: usize, cache: usize },
    #[error("n = {n} must lie in [k_max + T, N_SBS] = [{lo}, {hi}]")]
    BadN { n: usize, lo: usize, hi: usize },
    #[error("file {0} does not exist")]
    UnknownFile(usize),
    #[error("SBS {0} does not exist or is listed twice")]
    BadCoverage(usize),
    #[error("recovered file {0} differs from the library")]
    RecoveryMismatch(usize),
    #[error("spy set of size {size} exceeds T = {t}")]
    TooManySpies { size: usize, t: usize },
    #[error("trials must be at least 1")]
    NoTrials,
}

/// The library at the MBS, the coded cache at the SBSs, and the coverage
/// model placing users among them.
pub struct Network<'a> {
    library: &'a FileLibrary,
    cache: &'a EncodedCache,
    topology: Topology,
    sampler: CoverageSampler,
    mbs_columns: Vec<OnceLock<Vec<Elem>>>,
}

impl<'a> Network<'a> {
    pub fn new(library: &'a FileLibrary, cache: &'a EncodedCache, topology: Topology) -> Result<Self, SimError> {
        if topology.n_sbs() != cache.n_sbs() {
            return Err(SimError::SbsCount {
                topology: topology.n_sbs(),
                cache: cache.n_sbs(),
            });
        }
        Ok(Network {
            library,
            cache,
            sampler: topology.sampler(),
            topology,
            mbs_columns: (0..cache.n_sbs()).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn library(&self) -> &FileLibrary {
        self.library
    }

    pub fn cache(&self) -> &EncodedCache {
        self.cache
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Labels of the SBSs in range of a random user.
    pub fn sample_coverage<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.sampler.sample(rng)
    }

    /// What an SBS returns: the column it stores.
    pub fn sbs_column(&self, j: usize) -> Result<&[Elem], SimError> {
        Ok(self.cache.column(j)?)
    }

    /// What the MBS returns when emulating coordinate `j`: the same column,
    /// recomputed from the plaintext files.
    pub fn mbs_column(&self, j: usize) -> Result<&[Elem], SimError> {
        let slot = self.mbs_columns.get(j).ok_or(CacheError::UnknownSbs(j))?;
        if let Some(c) = slot.get() {
            return Ok(c);
        }
        let col = Mbs::new(self.library, self.cache).column(j)?;
        Ok(slot.get_or_init(|| col))
    }
}

/// Who answered a coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Responder {
    Sbs,
    Mbs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetrievalTranscript {
    pub file: usize,
    pub cached: bool,
    /// Labels of all SBSs in range.
    pub in_range: Vec<usize>,
    /// Storage coordinates queried, in protocol position order.
    pub coords: Vec<usize>,
    pub responders: Vec<Responder>,
    /// File whose symbols the queries actually select (a dummy for
    /// uncached requests).
    pub query_target: Option<usize>,
    pub bits_from_mbs: u64,
    pub bits_from_sbs: u64,
    pub success: bool,
    /// Stripes decoded from SBS and MBS responses, as bit strings; absent
    /// when the file came over the backhaul in plain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Transcript>,
}

/// Session parameters shared by all retrievals.
#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub t: usize,
    pub n: usize,
    pub blinding: Blinding,
    /// Explicit `(n, T)` blinding code; otherwise GRS on the storage
    /// evaluation points.
    pub blinding_code: Option<LinearCode>,
    /// Keep queries and responses in transcripts.
    pub keep_protocol: bool,
}

impl SessionConfig {
    pub fn new(t: usize, n: usize) -> Self {
        SessionConfig {
            t,
            n,
            blinding: Blinding::PerRound,
            blinding_code: None,
            keep_protocol: false,
        }
    }
}

/// Runs retrievals against a [`Network`], caching one protocol plan per
/// coordinate set.
pub struct Simulator<'n, 'a> {
    network: &'n Network<'a>,
    config: SessionConfig,
    cached: Vec<usize>,
    plans: Mutex<HashMap<Vec<usize>, Arc<ProtocolParams>>>,
}

impl<'n, 'a> Simulator<'n, 'a> {
    pub fn new(network: &'n Network<'a>, config: SessionConfig) -> Result<Self, SimError> {
        let scheme = network.cache.scheme();
        let cached = scheme.cached_files();
        if let Some(k_max) = scheme.k_max() {
            let (lo, hi) = (k_max + config.t, scheme.n_sbs());
            if config.n < lo || config.n > hi {
                return Err(SimError::BadN { n: config.n, lo, hi });
            }
        }
        Ok(Simulator {
            network,
            config,
            cached,
            plans: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Storage coordinates for a user covered by `in_range`: the lowest
    /// `min(b, n)` in-range labels, then the lowest unused coordinates.
    pub fn coordinates(&self, in_range: &[usize]) -> (Vec<usize>, Vec<Responder>) {
        let n = self.config.n;
        let mut sbs: Vec<usize> = in_range.to_vec();
        sbs.sort();
        sbs.truncate(n);
        let mut coords = sbs.clone();
        let mut j = 0;
        while coords.len() < n {
            if !sbs.contains(&j) {
                coords.push(j);
            }
            j += 1;
        }
        let mut pairs: Vec<(usize, Responder)> = coords
            .into_iter()
            .map(|c| (c, if sbs.contains(&c) { Responder::Sbs } else { Responder::Mbs }))
            .collect();
        pairs.sort_by_key(|p| p.0);
        pairs.into_iter().unzip()
    }

    /// The protocol instance for a coordinate set, planned once.
    pub fn plan(&self, coords: &[usize]) -> Result<Arc<ProtocolParams>, SimError> {
        if let Some(p) = self.plans.lock().unwrap().get(coords) {
            return Ok(p.clone());
        }
        let cache = self.network.cache;
        let plan = match &self.config.blinding_code {
            Some(code) => ProtocolParams::plan_with_blinding(cache, self.config.t, coords, code.clone())?,
            None => ProtocolParams::plan(cache, self.config.t, coords)?,
        };
        let plan = Arc::new(plan);
        self.plans.lock().unwrap().insert(coords.to_vec(), plan.clone());
        Ok(plan)
    }

    fn check_coverage(&self, in_range: &[usize]) -> Result<(), SimError> {
        let n_sbs = self.network.cache.n_sbs();
        let mut seen = vec![false; n_sbs];
        for &l in in_range {
            if l >= n_sbs || seen[l] {
                return Err(SimError::BadCoverage(l));
            }
            seen[l] = true;
        }
        Ok(())
    }

    fn query<R: Rng + ?Sized>(&self, plan: &ProtocolParams, target: usize, rng: &mut R) -> Result<QuerySet, SimError> {
        Ok(plan.generate_queries(target, self.config.blinding, rng)?)
    }

    /// One retrieval of file `file` by a user covered by `in_range`.
    pub fn run_retrieval<R: Rng + ?Sized>(&self, file: usize, in_range: &[usize], rng: &mut R) -> Result<RetrievalTranscript, SimError> {
        let lib = self.network.library;
        if file >= lib.num_files() {
            return Err(SimError::UnknownFile(file));
        }
        self.check_coverage(in_range)?;
        let file_bits = (lib.beta() * lib.stripe_bits()) as u64;
        let mut in_range = in_range.to_vec();
        in_range.sort();
        let cached = self.network.cache.scheme().is_cached(file);

        if self.cached.is_empty() {
            return Ok(RetrievalTranscript {
                file,
                cached,
                in_range,
                coords: Vec::new(),
                responders: Vec::new(),
                query_target: None,
                bits_from_mbs: file_bits,
                bits_from_sbs: 0,
                success: true,
                recovered: None,
                protocol: None,
            });
        }

        let (coords, responders) = self.coordinates(&in_range);
        let plan = self.plan(&coords)?;
        let target = if cached { file } else { *self.cached.choose(rng).unwrap() };
        let queries = self.query(&plan, target, rng)?;
        let symbol_bits = plan.subresponse_bits() as u64;
        let d = plan.d() as u64;
        let sbs_count = responders.iter().filter(|r| **r == Responder::Sbs).count() as u64;

        let mut responses = Vec::with_capacity(coords.len());
        for (l, (&c, &who)) in coords.iter().zip(&responders).enumerate() {
            let column = match who {
                Responder::Sbs => self.network.sbs_column(c)?,
                // Uncached requests never reach the MBS with queries.
                Responder::Mbs if !cached => {
                    responses.push(Vec::new());
                    continue;
                }
                Responder::Mbs => self.network.mbs_column(c)?,
            };
            responses.push(plan.respond(&queries.queries[l], column)?);
        }

        let bits_from_sbs = sbs_count * d * symbol_bits;
        let (bits_from_mbs, success, recovery) = if cached {
            let rec = plan.recover(&queries, &responses)?;
            let ok = rec.stripes == lib.file(file);
            ((coords.len() as u64 - sbs_count) * d * symbol_bits, ok, Some(rec))
        } else {
            (file_bits, true, None)
        };
        if !success {
            return Err(SimError::RecoveryMismatch(file));
        }
        let protocol = self
            .config
            .keep_protocol
            .then(|| Transcript::new(&plan, &queries, &responses, recovery.as_ref()));
        Ok(RetrievalTranscript {
            file,
            cached,
            in_range,
            coords,
            responders,
            query_target: Some(target),
            bits_from_mbs,
            bits_from_sbs,
            success,
            recovered: recovery.as_ref().map(|r| r.stripes.iter().map(|s| bit_string(s)).collect()),
            protocol,
        })
    }

    /// Draws a file by popularity and a coverage set, then retrieves.
    pub fn run_random<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RetrievalTranscript, SimError> {
        let file = sample_index(self.network.library.popularity(), rng);
        let in_range = self.network.sample_coverage(rng);
        self.run_retrieval(file, &in_range, rng)
    }

    /// Averages normalized MBS and SBS traffic over `trials` sessions.
    /// Session `s` uses ChaCha8 seeded with `seed` on stream `s`.
    pub fn monte_carlo(&self, trials: u64, seed: u64) -> Result<MonteCarloSummary, SimError> {
        if trials == 0 {
            return Err(SimError::NoTrials);
        }
        let lib = self.network.library;
        let norm = (lib.beta() * lib.stripe_bits()) as f64;
        let acc = (0..trials)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s);
                let tr = self.run_random(&mut rng)?;
                Ok::<_, SimError>(Moments::one(tr.bits_from_mbs as f64 / norm, tr.bits_from_sbs as f64 / norm))
            })
            .try_reduce(Moments::default, |a, b| Ok(a.merge(b)))?;
        Ok(acc.summary(trials))
    }

    /// Sessions with uniformly random file requests; the spies at the given
    /// SBS labels log what they receive, and the log is tested for
    /// independence from the requested file.
    pub fn spy_coalition(&self, spies: &[usize], sessions: u64, buckets: u64, seed: u64) -> Result<SpyLog, SimError> {
        if spies.len() > self.config.t {
            return Err(SimError::TooManySpies {
                size: spies.len(),
                t: self.config.t,
            });
        }
        self.check_coverage(spies)?;
        let f = self.network.library.num_files();
        let observations = (0..sessions)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s);
                let file = rng.random_range(0..f);
                let in_range = self.network.sample_coverage(&mut rng);
                Ok((file, self.spy_view(spies, file, &in_range, &mut rng)?))
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let report = independence_report(spies, f, &observations, buckets);
        Ok(SpyLog { observations, report })
    }

    /// What the spies see in one session: for each spy, whether it was
    /// contacted, at which position, and its query matrix.
    pub fn spy_view<R: Rng + ?Sized>(&self, spies: &[usize], file: usize, in_range: &[usize], rng: &mut R) -> Result<Vec<u64>, SimError> {
        if self.cached.is_empty() {
            return Ok(Vec::new());
        }
        let (coords, responders) = self.coordinates(in_range);
        let plan = self.plan(&coords)?;
        let cached = self.network.cache.scheme().is_cached(file);
        let target = if cached { file } else { *self.cached.choose(rng).unwrap() };
        let queries = self.query(&plan, target, rng)?;
        let mut view = Vec::new();
        for &spy in spies {
            match coords.iter().position(|&c| c == spy) {
                Some(l) if responders[l] == Responder::Sbs => {
                    view.push(l as u64 + 1);
                    view.extend(queries.view(&[l]));
                }
                _ => view.push(0),
            }
        }
        Ok(view)
    }
}

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    r: f64,
    r2: f64,
    d: f64,
    d2: f64,
}

impl Moments {
    fn one(r: f64, d: f64) -> Self {
        Moments {
            r,
            r2: r * r,
            d,
            d2: d * d,
        }
    }

    fn merge(self, o: Moments) -> Moments {
        Moments {
            r: self.r + o.r,
            r2: self.r2 + o.r2,
            d: self.d + o.d,
            d2: self.d2 + o.d2,
        }
    }

    fn summary(self, n: u64) -> MonteCarloSummary {
        let nf = n as f64;
        let se = |s: f64, s2: f64| {
            if n < 2 {
                return 0.0;
            }
            let mean = s / nf;
            ((s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
        };
        MonteCarloSummary {
            trials: n,
            r_hat: self.r / nf,
            d_hat: self.d / nf,
            r_se: se(self.r, self.r2),
            d_se: se(self.d, self.d2),
        }
    }
}

/// Monte-Carlo estimates of the normalized rates with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: u64,
    pub r_hat: f64,
    pub d_hat: f64,
    pub r_se: f64,
    pub d_se: f64,
}

impl MonteCarloSummary {
    /// Both estimates within `sigmas` standard errors of the given values,
    /// with an absolute floor for zero-variance estimates.
    pub fn agrees_with(&self, r: f64, d: f64, sigmas: f64) -> bool {
        (self.r_hat - r).abs() <= sigmas * self.r_se + 1e-9 && (self.d_hat - d).abs() <= sigmas * self.d_se + 1e-9
    }
}

#[derive(Clone, Debug)]
pub struct SpyLog {
    /// `(requested file, spy view)` per session.
    pub observations: Vec<(usize, Vec<u64>)>,
    pub report: PrivacyReport,
}
