//! Private retrieval of one cached file from `n` coded responses, of which
//! any `T` may be pooled by colluding spies without learning the file index.
//!
//! A plan fixes the contacted storage-code coordinates and derives
//!
//! * the punctured storage codes `C'_i` and the largest one `C'_max`,
//! * the blinding code `C̄ = GRS(n, T)` on the same evaluation points,
//! * the retrieval code `C̃ = Σ C'_i ∘ C̄`,
//! * `d = k_max` subqueries per coordinate, `Γ = n - (k_max + T - 1)`
//!   file symbols recovered per subquery round, and `β = Γ` stripes,
//! * a `d × n` erasure matrix whose row `j` is supported on the cyclic
//!   window `{j, …, j + Γ - 1 mod n}`, and `β` information sets of `C'_max`
//!   telling which stripe each recovered symbol belongs to.
//!
//! Positions `0..n` used below are indices into the plan's coordinate list,
//! not physical SBS indices.
//!
//! Every subquery round draws its own blinding codewords. Reusing one
//! blinding vector for all `d` rows sent to a coordinate would let a single
//! spy subtract two rows and read off the requested position; the
//! [`Blinding::Shared`] mode exists to demonstrate exactly that.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::cache::{unpack_stripe, CacheError, EncodedCache, SymbolFields};
use crate::codes::{CodeError, ErasurePattern, LinearCode};
use crate::gf::{Elem, Embedding, Field, GfError, Matrix};

/// Rank evaluations allowed when checking the dual distance of a non-GRS
/// blinding code.
const DUAL_DISTANCE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum ProtoError {
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("nothing is cached")]
    NothingCached,
    #[error("file {0} is not cached")]
    NotCached(usize),
    #[error("collusion size T must be at least 1")]
    ZeroCollusion,
    #[error("n = {n} is below k_max + T = {needed}")]
    TooFewCoordinates { n: usize, needed: usize },
    #[error("coordinates must be distinct storage-code positions below {n_sbs}")]
    BadCoordinates { n_sbs: usize },
    #[error("blinding code must be an ({n}, {t}) code over {field}")]
    BlindingShape { n: usize, t: usize, field: String },
    #[error("blinding code dual distance {dual} does not protect against {t} colluders")]
    CollusionTooLarge { t: usize, dual: usize },
    #[error("storage codes are not GRS codes on shared weights and evaluation points; supply a blinding code")]
    NeedsBlindingCode,
    #[error("punctured code of file {0} is not contained in the largest punctured code")]
    NotNested(usize),
    #[error("retrieval code has rate 1")]
    RetrievalRateOne,
    #[error("files have {beta} stripes but the protocol needs {gamma}")]
    StripeCount { beta: usize, gamma: usize },
    #[error("erasure matrix violates {0}")]
    Condition(String),
    #[error("information-set construction failed at position {0}")]
    InformationSets(usize),
    #[error("expected {expected} responses of length {d}")]
    ResponseShape { expected: usize, d: usize },
    #[error("responses are inconsistent with the retrieval code")]
    Inconsistent,
    #[error("coalition position {0} is out of range or repeated")]
    BadCoalition(usize),
    #[error("coalition of {size} exceeds T = {t}")]
    CoalitionTooLarge { size: usize, t: usize },
    #[error("exact enumeration needs {outcomes} outcomes, limit is {limit}")]
    TooLargeForExact { outcomes: f64, limit: u64 },
}

/// How subqueries are randomized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Blinding {
    /// Independent blinding codewords for every subquery round.
    #[default]
    PerRound,
    /// One set of blinding codewords reused by all rounds (leaks for d > 1).
    Shared,
    /// No blinding at all; queries are deterministic in the file index.
    Off,
}

/// The `d × n` erasure matrix with its stripe bookkeeping.
#[derive(Clone, Debug)]
pub struct ErasureMatrix {
    n: usize,
    gamma: usize,
    k_max: usize,
    supports: Vec<Vec<usize>>,
    info_sets: Vec<Vec<usize>>,
    f_sets: Vec<Vec<usize>>,
    stripe: Vec<Vec<Option<usize>>>,
}

/// Assigns every position `l` to `weights[l]` stripes, filling information
/// sets of size `k_max` greedily from the lowest stripe index. Returns the
/// information sets `I_m` and the stripe sets `F_l = {m : l ∈ I_m}`.
pub fn build_information_sets(
    weights: &[usize],
    beta: usize,
    k_max: usize,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>), ProtoError> {
    let mut info = vec![Vec::with_capacity(k_max); beta];
    let mut f = vec![Vec::new(); weights.len()];
    for (l, &w) in weights.iter().enumerate() {
        let mut m = 0;
        while f[l].len() < w {
            if m == beta {
                return Err(ProtoError::InformationSets(l));
            }
            if info[m].len() < k_max {
                f[l].push(m);
                info[m].push(l);
            }
            m += 1;
        }
    }
    if let Some(m) = info.iter().position(|s| s.len() != k_max) {
        return Err(ProtoError::InformationSets(m));
    }
    Ok((info, f))
}

impl ErasureMatrix {
    /// Cyclic supports `J_j = {j, …, j + Γ - 1 mod n}` for `j < d`, with
    /// `β = Γ` information sets of size `k_max`.
    pub fn cyclic(n: usize, d: usize, gamma: usize, k_max: usize) -> Result<Self, ProtoError> {
        if gamma == 0 || gamma > n {
            return Err(ProtoError::Condition(format!("row weight {gamma} for length {n}")));
        }
        let supports: Vec<Vec<usize>> = (0..d)
            .map(|j| (0..gamma).map(|o| (j + o) % n).collect())
            .collect();
        let mut weights = vec![0; n];
        for l in supports.iter().flatten() {
            weights[*l] += 1;
        }
        let (info_sets, f_sets) = build_information_sets(&weights, gamma, k_max)?;
        let mut stripe = vec![vec![None; n]; d];
        let mut next = vec![0usize; n];
        for (j, row) in supports.iter().enumerate() {
            for &l in row {
                stripe[j][l] = Some(f_sets[l][next[l]]);
                next[l] += 1;
            }
        }
        Ok(ErasureMatrix {
            n,
            gamma,
            k_max,
            supports,
            info_sets,
            f_sets,
            stripe,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.supports.len()
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn support(&self, j: usize) -> &[usize] {
        &self.supports[j]
    }

    pub fn info_sets(&self) -> &[Vec<usize>] {
        &self.info_sets
    }

    pub fn f_set(&self, l: usize) -> &[usize] {
        &self.f_sets[l]
    }

    /// Stripe whose symbol position `l` returns in round `j`, if any.
    pub fn stripe(&self, j: usize, l: usize) -> Option<usize> {
        self.stripe[j][l]
    }

    pub fn column_weight(&self, l: usize) -> usize {
        self.supports.iter().filter(|s| s.contains(&l)).count()
    }

    pub fn to_matrix(&self, field: &Field) -> Matrix {
        Matrix::from_fn(field, self.d(), self.n, |j, l| {
            if self.supports[j].contains(&l) {
                Elem::ONE
            } else {
                Elem::ZERO
            }
        })
    }

    /// Checks C1 (row weight Γ), C2 (rows correctable by the retrieval
    /// code), C3 (column weights equal `|F_l|`), the information-set
    /// property against `c_max`, and the stripe assignment.
    pub fn check(&self, retrieval: &LinearCode, c_max: &LinearCode) -> Result<(), ProtoError> {
        for (j, s) in self.supports.iter().enumerate() {
            if s.len() != self.gamma {
                return Err(ProtoError::Condition(format!("C1 in row {j}")));
            }
            let pattern = ErasurePattern::from_support(self.n, s)?;
            if !retrieval.correctable(&pattern) {
                return Err(ProtoError::Condition(format!("C2 in row {j}")));
            }
        }
        for l in 0..self.n {
            if self.column_weight(l) != self.f_sets[l].len() {
                return Err(ProtoError::Condition(format!("C3 at position {l}")));
            }
        }
        for (m, set) in self.info_sets.iter().enumerate() {
            if set.len() != self.k_max || !c_max.is_information_set(set)? {
                return Err(ProtoError::Condition(format!("information set {m}")));
            }
        }
        for l in 0..self.n {
            let mut used: Vec<usize> = (0..self.d()).filter_map(|j| self.stripe[j][l]).collect();
            used.sort();
            if used != self.f_sets[l] {
                return Err(ProtoError::Condition(format!("stripe assignment at position {l}")));
            }
        }
        Ok(())
    }
}

struct RoundSolver {
    rows: Vec<usize>,
    inverse: Matrix,
}

struct StripeDecoder {
    positions: Vec<usize>,
    inverse: Matrix,
}

/// A protocol instance for one set of contacted coordinates.
pub struct ProtocolParams {
    n: usize,
    t: usize,
    k_min: usize,
    k_max: usize,
    d: usize,
    gamma: usize,
    coords: Vec<usize>,
    cached: Vec<usize>,
    offsets: Vec<Option<usize>>,
    fields: SymbolFields,
    delta: Vec<Option<u32>>,
    m_bits: u32,
    l_bits: usize,
    cbar: LinearCode,
    retrieval: LinearCode,
    punctured: Vec<Option<LinearCode>>,
    // Punctured generators over each file's symbol field.
    punctured_ext: Vec<Option<Matrix>>,
    erasure: ErasureMatrix,
    h_top: Matrix,
    solvers: Vec<RoundSolver>,
    decoders: Vec<Option<Vec<StripeDecoder>>>,
}

impl ProtocolParams {
    /// Plans with the blinding code GRS(n, T) on all-ones weights and the
    /// storage codes' evaluation points at `coords`.
    pub fn plan(cache: &EncodedCache, t: usize, coords: &[usize]) -> Result<Self, ProtoError> {
        let scheme = cache.scheme();
        let cached = scheme.cached_files();
        let first = cached.first().ok_or(ProtoError::NothingCached)?;
        let grs = cache.code(*first).and_then(LinearCode::grs_params).ok_or(ProtoError::NeedsBlindingCode)?;
        for &i in &cached {
            if cache.code(i).and_then(LinearCode::grs_params) != Some(grs) {
                return Err(ProtoError::NeedsBlindingCode);
            }
        }
        check_coords(coords, scheme.n_sbs())?;
        if t == 0 {
            return Err(ProtoError::ZeroCollusion);
        }
        let kappa: Vec<Elem> = coords.iter().map(|&c| grs.kappa[c]).collect();
        let base = cache.fields().base();
        if t > coords.len() {
            let k_max = scheme.k_max().unwrap_or(0);
            return Err(ProtoError::TooFewCoordinates {
                n: coords.len(),
                needed: k_max + t,
            });
        }
        let cbar = LinearCode::grs(base, t, &vec![Elem::ONE; coords.len()], &kappa)?;
        ProtocolParams::plan_with_blinding(cache, t, coords, cbar)
    }

    /// Plans with an explicit `(n, T)` blinding code over GF(q).
    pub fn plan_with_blinding(
        cache: &EncodedCache,
        t: usize,
        coords: &[usize],
        cbar: LinearCode,
    ) -> Result<Self, ProtoError> {
        let scheme = cache.scheme();
        let cached = scheme.cached_files();
        if cached.is_empty() {
            return Err(ProtoError::NothingCached);
        }
        if t == 0 {
            return Err(ProtoError::ZeroCollusion);
        }
        check_coords(coords, scheme.n_sbs())?;
        let n = coords.len();
        let k_min = scheme.k_min().unwrap();
        let k_max = scheme.k_max().unwrap();
        if n < k_max + t {
            return Err(ProtoError::TooFewCoordinates { n, needed: k_max + t });
        }
        let gamma = n - (k_max + t - 1);
        let d = k_max;
        if cache.beta() != gamma {
            return Err(ProtoError::StripeCount {
                beta: cache.beta(),
                gamma,
            });
        }
        let fields = cache.fields().clone();
        let base = fields.base().clone();
        if cbar.n() != n || cbar.k() != t || cbar.field() != &base {
            return Err(ProtoError::BlindingShape {
                n,
                t,
                field: base.to_string(),
            });
        }
        let dual = cbar.dual_min_distance(DUAL_DISTANCE_LIMIT)?;
        if t + 1 > dual {
            return Err(ProtoError::CollusionTooLarge { t, dual });
        }

        let mut punctured = vec![None; scheme.num_files()];
        for &i in &cached {
            punctured[i] = Some(cache.code(i).unwrap().puncture(coords)?);
        }
        let i_max = *cached.iter().find(|&&i| scheme.k(i) == Some(k_max)).unwrap();
        let c_max = punctured[i_max].clone().unwrap();
        for &i in &cached {
            let g = punctured[i].as_ref().unwrap().generator();
            if !c_max.parity_check().mul(&g.transpose())?.is_zero() {
                return Err(ProtoError::NotNested(i));
            }
        }

        let mut distinct: Vec<&LinearCode> = Vec::new();
        for &i in &cached {
            let c = punctured[i].as_ref().unwrap();
            if !distinct.iter().any(|d| d.generator() == c.generator()) {
                distinct.push(c);
            }
        }
        let mut retrieval = distinct[0].hadamard(&cbar)?;
        for c in &distinct[1..] {
            retrieval = retrieval.sum(&c.hadamard(&cbar)?)?;
        }
        if retrieval.k() >= n {
            return Err(ProtoError::RetrievalRateOne);
        }

        let erasure = ErasureMatrix::cyclic(n, d, gamma, k_max)?;
        erasure.check(&retrieval, &c_max)?;

        let lift = fields.base_to_top();
        let top = fields.top().clone();
        let h_top = retrieval.parity_check().map(&top, |e| lift.embed(e));
        let solvers = (0..d)
            .map(|j| {
                let hj = retrieval.parity_check().select_columns(erasure.support(j));
                let (_, rows) = hj.transpose().rref();
                let inverse = hj.select_rows(&rows).invert()?;
                Ok(RoundSolver {
                    rows,
                    inverse: inverse.map(&top, |e| lift.embed(e)),
                })
            })
            .collect::<Result<Vec<_>, ProtoError>>()?;

        let layout = cache.layout();
        let mut punctured_ext = vec![None; scheme.num_files()];
        let mut decoders: Vec<Option<Vec<StripeDecoder>>> = (0..scheme.num_files()).map(|_| None).collect();
        for &i in &cached {
            let code = punctured[i].as_ref().unwrap();
            let k = code.k();
            let emb = fields.base_into(layout.delta[i].unwrap());
            let small = emb.big().clone();
            punctured_ext[i] = Some(code.generator().map(&small, |e| emb.embed(e)));
            let per_stripe = erasure
                .info_sets()
                .iter()
                .map(|set| {
                    let positions = set[..k].to_vec();
                    let inverse = code.generator().select_columns(&positions).invert()?;
                    Ok(StripeDecoder {
                        positions,
                        inverse: inverse.map(&small, |e| emb.embed(e)),
                    })
                })
                .collect::<Result<Vec<_>, ProtoError>>()?;
            decoders[i] = Some(per_stripe);
        }

        let mut offsets = vec![None; scheme.num_files()];
        for (rank, &i) in cached.iter().enumerate() {
            offsets[i] = Some(rank * gamma);
        }

        Ok(ProtocolParams {
            n,
            t,
            k_min,
            k_max,
            d,
            gamma,
            coords: coords.to_vec(),
            cached,
            offsets,
            delta: layout.delta.clone(),
            m_bits: layout.m,
            l_bits: layout.l_bits,
            fields,
            cbar,
            retrieval,
            punctured,
            punctured_ext,
            erasure,
            h_top,
            solvers,
            decoders,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn beta(&self) -> usize {
        self.gamma
    }

    pub fn k_min(&self) -> usize {
        self.k_min
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Storage-code coordinate served at each position.
    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn cached_files(&self) -> &[usize] {
        &self.cached
    }

    pub fn blinding_code(&self) -> &LinearCode {
        &self.cbar
    }

    pub fn retrieval_code(&self) -> &LinearCode {
        &self.retrieval
    }

    pub fn punctured_code(&self, i: usize) -> Option<&LinearCode> {
        self.punctured[i].as_ref()
    }

    pub fn erasure(&self) -> &ErasureMatrix {
        &self.erasure
    }

    pub fn fields(&self) -> &SymbolFields {
        &self.fields
    }

    /// Length of every subquery: `β` entries per cached file.
    pub fn query_len(&self) -> usize {
        self.gamma * self.cached.len()
    }

    /// Size of one subresponse: one symbol of the largest symbol field.
    pub fn subresponse_bits(&self) -> usize {
        self.fields.top().degree() as usize
    }

    /// Number of blinding codewords a query set consumes.
    pub fn randomness_len(&self, blinding: Blinding) -> usize {
        match blinding {
            Blinding::PerRound => self.d * self.query_len(),
            Blinding::Shared => self.query_len(),
            Blinding::Off => 0,
        }
    }

    /// Draws uniform blinding codewords and builds the `n` query matrices.
    pub fn generate_queries<R: Rng + ?Sized>(
        &self,
        target: usize,
        blinding: Blinding,
        rng: &mut R,
    ) -> Result<QuerySet, ProtoError> {
        let base = self.fields.base();
        let codewords = (0..self.randomness_len(blinding))
            .map(|_| {
                let msg: Vec<Elem> = (0..self.t).map(|_| base.random(rng)).collect();
                self.cbar.encode(&msg)
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.build_queries(target, blinding, &codewords)
    }

    /// Builds the query matrices from explicit blinding codewords, laid out
    /// round-major (`codewords[j * query_len + t]`) for per-round blinding.
    pub fn build_queries(
        &self,
        target: usize,
        blinding: Blinding,
        codewords: &[Vec<Elem>],
    ) -> Result<QuerySet, ProtoError> {
        let offset = self
            .offsets
            .get(target)
            .copied()
            .flatten()
            .ok_or(ProtoError::NotCached(target))?;
        let base = self.fields.base();
        let len = self.query_len();
        let queries = (0..self.n)
            .map(|l| {
                Matrix::from_fn(base, self.d, len, |j, t| {
                    let blind = match blinding {
                        Blinding::PerRound => codewords[j * len + t][l],
                        Blinding::Shared => codewords[t][l],
                        Blinding::Off => Elem::ZERO,
                    };
                    match self.erasure.stripe(j, l) {
                        Some(s) if t == offset + s => base.add(blind, Elem::ONE),
                        _ => blind,
                    }
                })
            })
            .collect();
        Ok(QuerySet {
            target,
            blinding,
            queries,
        })
    }

    /// Response of a node holding `column` to one query matrix.
    pub fn respond(&self, query: &Matrix, column: &[Elem]) -> Result<Vec<Elem>, ProtoError> {
        respond(query, column, self.fields.base_to_top())
    }

    /// Recovers the target file from the `n` responses, in position order.
    pub fn recover(&self, queries: &QuerySet, responses: &[Vec<Elem>]) -> Result<Recovery, ProtoError> {
        let target = queries.target;
        if responses.len() != self.n || responses.iter().any(|r| r.len() != self.d) {
            return Err(ProtoError::ResponseShape {
                expected: self.n,
                d: self.d,
            });
        }
        let top = self.fields.top();
        let mut symbols = vec![vec![None; self.n]; self.d];
        let mut per_stripe: Vec<Vec<Option<Elem>>> = vec![vec![None; self.n]; self.gamma];
        for j in 0..self.d {
            let rho: Vec<Elem> = responses.iter().map(|r| r[j]).collect();
            let syndrome = self.h_top.mul_vec(&rho)?;
            let solver = &self.solvers[j];
            let rhs: Vec<Elem> = solver.rows.iter().map(|&r| syndrome[r]).collect();
            let o = solver.inverse.mul_vec(&rhs)?;
            let support = self.erasure.support(j);
            let check = self.h_top.select_columns(support).mul_vec(&o)?;
            if check != syndrome {
                return Err(ProtoError::Inconsistent);
            }
            for (idx, &l) in support.iter().enumerate() {
                symbols[j][l] = Some(o[idx]);
                let s = self.erasure.stripe(j, l).unwrap();
                per_stripe[s][l] = Some(o[idx]);
            }
        }
        let _ = top;

        let delta = self.delta[target].ok_or(ProtoError::NotCached(target))?;
        let down = self.fields.into_top(delta);
        let small = down.small();
        let g = self.punctured_ext[target].as_ref().unwrap();
        let decoders = self.decoders[target].as_ref().unwrap();
        let mut stripes = Vec::with_capacity(self.gamma);
        for (m, dec) in decoders.iter().enumerate() {
            let mut known = vec![None; self.n];
            for &l in &self.erasure.info_sets()[m] {
                let y = per_stripe[m][l].ok_or(ProtoError::Inconsistent)?;
                known[l] = Some(down.project(y).map_err(|_| ProtoError::Inconsistent)?);
            }
            let y: Vec<Elem> = dec.positions.iter().map(|&l| known[l].unwrap()).collect();
            let msg = dec.inverse.vec_mul(&y)?;
            let word = g.vec_mul(&msg)?;
            if known.iter().enumerate().any(|(l, k)| k.is_some_and(|k| k != word[l])) {
                return Err(ProtoError::Inconsistent);
            }
            let _ = small;
            stripes.push(unpack_stripe(&msg, delta, self.m_bits, self.l_bits));
        }
        Ok(Recovery { symbols, stripes })
    }

    /// Distribution of the coalition's view for every cached target, by
    /// enumerating all blinding randomness. Reports the largest total
    /// variation distance between two targets.
    pub fn verify_privacy_exact(
        &self,
        coalition: &[usize],
        blinding: Blinding,
        limit: u64,
    ) -> Result<PrivacyReport, ProtoError> {
        self.check_coalition(coalition)?;
        let q = self.fields.base().order();
        let draws = self.randomness_len(blinding) * self.t;
        let outcomes = (q as f64).powi(draws as i32);
        if outcomes > limit as f64 {
            return Err(ProtoError::TooLargeForExact { outcomes, limit });
        }
        let outcomes = outcomes as u64;
        let mut dists: Vec<HashMap<Vec<u64>, u64>> = vec![HashMap::new(); self.cached.len()];
        if !coalition.is_empty() {
            for code in 0..outcomes {
                let mut x = code;
                let mut digits = (0..draws).map(|_| {
                    let d = x % q;
                    x /= q;
                    Elem(d)
                });
                let codewords = (0..self.randomness_len(blinding))
                    .map(|_| {
                        let msg: Vec<Elem> = digits.by_ref().take(self.t).collect();
                        self.cbar.encode(&msg)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                for (rank, &i) in self.cached.iter().enumerate() {
                    let qs = self.build_queries(i, blinding, &codewords)?;
                    *dists[rank].entry(qs.view(coalition)).or_default() += 1;
                }
            }
        }
        let tv = max_pairwise_tv(&dists);
        Ok(PrivacyReport {
            coalition: coalition.to_vec(),
            exact: true,
            samples: outcomes,
            tv_distance: tv,
            chi_square: None,
            dof: None,
            p_value: None,
        })
    }

    /// Samples `sessions` query sets with uniformly chosen cached targets
    /// and tests independence of the target and the coalition's view,
    /// hashed into `buckets` categories, with a chi-square test.
    pub fn verify_privacy_statistical<R: Rng + ?Sized>(
        &self,
        coalition: &[usize],
        blinding: Blinding,
        sessions: u64,
        buckets: u64,
        rng: &mut R,
    ) -> Result<PrivacyReport, ProtoError> {
        self.check_coalition(coalition)?;
        let mut observations = Vec::with_capacity(sessions as usize);
        if !coalition.is_empty() {
            for _ in 0..sessions {
                let rank = rng.random_range(0..self.cached.len());
                let qs = self.generate_queries(self.cached[rank], blinding, rng)?;
                observations.push((rank, qs.view(coalition)));
            }
        }
        Ok(independence_report(coalition, self.cached.len(), &observations, buckets))
    }

    fn check_coalition(&self, coalition: &[usize]) -> Result<(), ProtoError> {
        if coalition.len() > self.t {
            return Err(ProtoError::CoalitionTooLarge {
                size: coalition.len(),
                t: self.t,
            });
        }
        let mut seen = vec![false; self.n];
        for &l in coalition {
            if l >= self.n || seen[l] {
                return Err(ProtoError::BadCoalition(l));
            }
            seen[l] = true;
        }
        Ok(())
    }
}

fn check_coords(coords: &[usize], n_sbs: usize) -> Result<(), ProtoError> {
    let mut seen = vec![false; n_sbs];
    for &c in coords {
        if c >= n_sbs || seen[c] {
            return Err(ProtoError::BadCoordinates { n_sbs });
        }
        seen[c] = true;
    }
    Ok(())
}

/// `query · column`, with the GF(q) query entries lifted into the field of
/// the column.
pub fn respond(query: &Matrix, column: &[Elem], lift: &Embedding) -> Result<Vec<Elem>, ProtoError> {
    if query.cols() != column.len() {
        return Err(ProtoError::Gf(GfError::DimensionMismatch(format!(
            "query of width {} against column of length {}",
            query.cols(),
            column.len()
        ))));
    }
    let top = lift.big();
    Ok((0..query.rows())
        .map(|j| {
            query
                .row(j)
                .iter()
                .zip(column)
                .filter(|(q, _)| !q.is_zero())
                .fold(Elem::ZERO, |acc, (&q, &c)| top.add(acc, top.mul(lift.embed(q), c)))
        })
        .collect())
}

/// The `n` query matrices of one retrieval.
#[derive(Clone, Debug)]
pub struct QuerySet {
    pub target: usize,
    pub blinding: Blinding,
    pub queries: Vec<Matrix>,
}

impl QuerySet {
    /// Everything the given positions receive, flattened.
    pub fn view(&self, coalition: &[usize]) -> Vec<u64> {
        coalition
            .iter()
            .flat_map(|&l| {
                let q = &self.queries[l];
                (0..q.rows()).flat_map(move |j| q.row(j).iter().map(|e| e.0))
            })
            .collect()
    }
}

/// Recovered symbols per round and position, and the decoded stripes.
#[derive(Clone, Debug)]
pub struct Recovery {
    pub symbols: Vec<Vec<Option<Elem>>>,
    pub stripes: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub coalition: Vec<usize>,
    pub exact: bool,
    pub samples: u64,
    pub tv_distance: f64,
    pub chi_square: Option<f64>,
    pub dof: Option<u64>,
    pub p_value: Option<f64>,
}

impl PrivacyReport {
    /// Exact reports pass at zero distance; statistical ones when
    /// independence is not rejected at level `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        if self.exact {
            self.tv_distance == 0.0
        } else {
            self.p_value.is_none_or(|p| p >= alpha)
        }
    }
}

fn max_pairwise_tv(dists: &[HashMap<Vec<u64>, u64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..dists.len() {
        for b in a + 1..dists.len() {
            let (na, nb) = (
                dists[a].values().sum::<u64>().max(1) as f64,
                dists[b].values().sum::<u64>().max(1) as f64,
            );
            let mut tv = 0.0;
            for (k, &ca) in &dists[a] {
                let cb = dists[b].get(k).copied().unwrap_or(0);
                tv += (ca as f64 / na - cb as f64 / nb).abs();
            }
            for (k, &cb) in &dists[b] {
                if !dists[a].contains_key(k) {
                    tv += cb as f64 / nb;
                }
            }
            worst = worst.max(tv / 2.0);
        }
    }
    worst
}

fn bucket(view: &[u64], buckets: u64) -> u64 {
    let mut h = DefaultHasher::new();
    view.hash(&mut h);
    h.finish() % buckets
}

/// Chi-square independence test between a target label in `0..targets` and
/// a hashed view, plus the plug-in total variation distance between the
/// per-target bucket distributions.
pub fn independence_report(
    coalition: &[usize],
    targets: usize,
    observations: &[(usize, Vec<u64>)],
    buckets: u64,
) -> PrivacyReport {
    let samples = observations.len() as u64;
    if observations.is_empty() || targets < 2 {
        return PrivacyReport {
            coalition: coalition.to_vec(),
            exact: false,
            samples,
            tv_distance: 0.0,
            chi_square: None,
            dof: None,
            p_value: None,
        };
    }
    let b = buckets as usize;
    let mut table = vec![vec![0u64; b]; targets];
    for (t, view) in observations {
        table[*t][bucket(view, buckets) as usize] += 1;
    }
    let mut dists: Vec<HashMap<Vec<u64>, u64>> = vec![HashMap::new(); targets];
    for (t, row) in table.iter().enumerate() {
        for (k, &c) in row.iter().enumerate() {
            if c > 0 {
                dists[t].insert(vec![k as u64], c);
            }
        }
    }
    let tv = max_pairwise_tv(&dists);
    let rows: Vec<usize> = (0..targets).filter(|&t| table[t].iter().any(|&c| c > 0)).collect();
    let cols: Vec<usize> = (0..b).filter(|&k| rows.iter().any(|&t| table[t][k] > 0)).collect();
    let n = samples as f64;
    let row_sum: Vec<f64> = rows.iter().map(|&t| table[t].iter().sum::<u64>() as f64).collect();
    let col_sum: Vec<f64> = cols.iter().map(|&k| rows.iter().map(|&t| table[t][k]).sum::<u64>() as f64).collect();
    let mut chi = 0.0;
    for (ri, &t) in rows.iter().enumerate() {
        for (ci, &k) in cols.iter().enumerate() {
            let expected = row_sum[ri] * col_sum[ci] / n;
            let diff = table[t][k] as f64 - expected;
            chi += diff * diff / expected;
        }
    }
    let dof = (rows.len().saturating_sub(1) * cols.len().saturating_sub(1)) as u64;
    let p_value = if dof == 0 {
        // A single shared bucket cannot distinguish targets; several targets
        // in disjoint single buckets are perfectly distinguishable.
        Some(if cols.len() == 1 { 1.0 } else { 0.0 })
    } else {
        let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
        Some(1.0 - dist.cdf(chi))
    };
    PrivacyReport {
        coalition: coalition.to_vec(),
        exact: false,
        samples,
        tv_distance: tv,
        chi_square: Some(chi),
        dof: Some(dof),
        p_value,
    }
}

/// Serializable record of one retrieval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub target: usize,
    pub coords: Vec<usize>,
    pub blinding: Blinding,
    /// `queries[l][j]` is subquery `j` sent to position `l`.
    pub queries: Vec<Vec<Vec<u64>>>,
    /// `responses[l][j]` is subresponse `j` from position `l`.
    pub responses: Vec<Vec<u64>>,
    /// `recovered[j][l]` is the file symbol extracted in round `j` at `l`.
    pub recovered: Vec<Vec<Option<u64>>>,
}

impl Transcript {
    pub fn new(params: &ProtocolParams, queries: &QuerySet, responses: &[Vec<Elem>], recovery: Option<&Recovery>) -> Self {
        Transcript {
            target: queries.target,
            coords: params.coords().to_vec(),
            blinding: queries.blinding,
            queries: queries
                .queries
                .iter()
                .map(|q| (0..q.rows()).map(|j| q.row(j).iter().map(|e| e.0).collect()).collect())
                .collect(),
            responses: responses.iter().map(|r| r.iter().map(|e| e.0).collect()).collect(),
            recovered: recovery
                .map(|r| {
                    r.symbols
                        .iter()
                        .map(|row| row.iter().map(|o| o.map(|e| e.0)).collect())
                        .collect()
                })
                .unwrap_or_default(),
        }
    }
}
