//! File library, content placement and MDS-coded cache contents.
//!
//! A file is `beta` stripes of `L` bits. A file cached with parameter `k`
//! has each stripe cut into `k` packets, each packet read as one symbol of
//! GF(q^delta), and the packet vector encoded with an `(N_sbs, k)` storage
//! code over GF(q); SBS `j` keeps coordinate `j` of every stripe.
//!
//! Packing is big-endian: the first bit of a packet is the most significant
//! bit of the symbol encoding. The last packet is zero-padded. All symbol
//! degrees are chosen as `delta_i = u * lcm(k) / k_i` so that every cached
//! file uses the same padded stripe length and every `delta_i` divides
//! `delta_max`, making each symbol field a subfield of the response field.
//!
//! Query and response vectors index cached files only, in ascending file
//! order, stripes ascending within a file.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{default_kappa, CodeError, LinearCode};
use crate::gf::{prime_power, Elem, Embedding, Field, GfError, Matrix};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error("popularity: {0}")]
    Popularity(String),
    #[error("file {file} has {got} bits, expected {expected}")]
    FileSize { file: usize, got: usize, expected: usize },
    #[error("placement uses {used} files of storage per SBS but M = {m}")]
    OverBudget { used: f64, m: f64 },
    #[error("file {file}: k = {k} is invalid for {n_sbs} SBSs in this regime")]
    BadK { file: usize, k: usize, n_sbs: usize },
    #[error("file {file}: k = {k} is not a multiple of k_min = {k_min}")]
    NotDivisible { file: usize, k: usize, k_min: usize },
    #[error("bit packing needs q to be a power of two, got {0}")]
    NotBinary(u64),
    #[error("stripes of {l_bits} bits need GF(q^{delta_max}), which exceeds 63 bits; use more, shorter stripes")]
    StripeTooLong { l_bits: usize, delta_max: u32 },
    #[error("file {file}: storage code must be an ({n}, {k}) code over {field}")]
    CodeShape { file: usize, n: usize, k: usize, field: String },
    #[error("SBS index {0} out of range")]
    UnknownSbs(usize),
    #[error("file {0} is not cached")]
    NotCached(usize),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Checks that `p` is a probability vector sorted non-increasingly.
pub fn validate_popularity(p: &[f64]) -> Result<(), CacheError> {
    if p.is_empty() {
        return Err(CacheError::Popularity("empty".into()));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(CacheError::Popularity("entries must be non-negative".into()));
    }
    if p.windows(2).any(|w| w[1] > w[0] + 1e-15) {
        return Err(CacheError::Popularity("must be non-increasing".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(CacheError::Popularity(format!("sums to {s}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FileLibrary {
    beta: usize,
    l_bits: usize,
    files: Vec<Vec<Vec<bool>>>,
    popularity: Vec<f64>,
}

impl FileLibrary {
    /// `files[i][a]` is stripe `a` of file `i`.
    pub fn new(
        beta: usize,
        l_bits: usize,
        files: Vec<Vec<Vec<bool>>>,
        popularity: Vec<f64>,
    ) -> Result<Self, CacheError> {
        validate_popularity(&popularity)?;
        if popularity.len() != files.len() {
            return Err(CacheError::Popularity(format!(
                "{} probabilities for {} files",
                popularity.len(),
                files.len()
            )));
        }
        for (i, f) in files.iter().enumerate() {
            let got: usize = f.iter().map(Vec::len).sum();
            if f.len() != beta || f.iter().any(|s| s.len() != l_bits) {
                return Err(CacheError::FileSize {
                    file: i,
                    got,
                    expected: beta * l_bits,
                });
            }
        }
        Ok(FileLibrary {
            beta,
            l_bits,
            files,
            popularity,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        beta: usize,
        l_bits: usize,
        popularity: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self, CacheError> {
        let files = (0..popularity.len())
            .map(|_| {
                (0..beta)
                    .map(|_| (0..l_bits).map(|_| rng.random::<bool>()).collect())
                    .collect()
            })
            .collect();
        FileLibrary::new(beta, l_bits, files, popularity)
    }

    pub fn num_files(&self) -> usize {
        self.files.len()
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn stripe_bits(&self) -> usize {
        self.l_bits
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn file(&self, i: usize) -> &[Vec<bool>] {
        &self.files[i]
    }

    pub fn stripe(&self, i: usize, a: usize) -> &[bool] {
        &self.files[i][a]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Pir,
    NoPir,
}

/// Content placement: file `i` is cached with `mu_i = 1 / k_i` or not at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachingScheme {
    n_sbs: usize,
    cache_size: f64,
    k: Vec<Option<usize>>,
    regime: Regime,
}

impl CachingScheme {
    pub fn new(
        n_sbs: usize,
        cache_size: f64,
        k: Vec<Option<usize>>,
        regime: Regime,
    ) -> Result<Self, CacheError> {
        let k_cap = match regime {
            Regime::Pir => n_sbs.saturating_sub(1),
            Regime::NoPir => n_sbs,
        };
        for (file, ki) in k.iter().enumerate() {
            if let Some(ki) = *ki {
                if ki == 0 || ki > k_cap {
                    return Err(CacheError::BadK { file, k: ki, n_sbs });
                }
            }
        }
        let used: f64 = k.iter().flatten().map(|&ki| 1.0 / ki as f64).sum();
        if used > cache_size + 1e-12 {
            return Err(CacheError::OverBudget {
                used,
                m: cache_size,
            });
        }
        let scheme = CachingScheme {
            n_sbs,
            cache_size,
            k,
            regime,
        };
        if regime == Regime::Pir {
            if let Some(k_min) = scheme.k_min() {
                for (file, ki) in scheme.k.iter().enumerate() {
                    if let Some(ki) = *ki {
                        if ki % k_min != 0 {
                            return Err(CacheError::NotDivisible { file, k: ki, k_min });
                        }
                    }
                }
            }
        }
        Ok(scheme)
    }

    /// Builds a placement from storage fractions; `mu_i = 0` means uncached.
    pub fn from_mu(n_sbs: usize, cache_size: f64, mu: &[f64], regime: Regime) -> Result<Self, CacheError> {
        let k = mu
            .iter()
            .enumerate()
            .map(|(file, &m)| {
                if m == 0.0 {
                    return Ok(None);
                }
                let k = (1.0 / m).round();
                if k < 1.0 || (1.0 / k - m).abs() > 1e-12 {
                    return Err(CacheError::BadK {
                        file,
                        k: k as usize,
                        n_sbs,
                    });
                }
                Ok(Some(k as usize))
            })
            .collect::<Result<Vec<_>, _>>()?;
        CachingScheme::new(n_sbs, cache_size, k, regime)
    }

    /// The same `k` for the `c` most popular of `f` files.
    pub fn uniform(n_sbs: usize, cache_size: f64, f: usize, c: usize, k: usize, regime: Regime) -> Result<Self, CacheError> {
        let ks = (0..f).map(|i| (i < c).then_some(k)).collect();
        CachingScheme::new(n_sbs, cache_size, ks, regime)
    }

    pub fn n_sbs(&self) -> usize {
        self.n_sbs
    }

    pub fn cache_size(&self) -> f64 {
        self.cache_size
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn num_files(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self, i: usize) -> Option<usize> {
        self.k[i]
    }

    pub fn ks(&self) -> &[Option<usize>] {
        &self.k
    }

    pub fn mu(&self, i: usize) -> f64 {
        self.k[i].map_or(0.0, |k| 1.0 / k as f64)
    }

    pub fn is_cached(&self, i: usize) -> bool {
        self.k[i].is_some()
    }

    pub fn cached_files(&self) -> Vec<usize> {
        (0..self.k.len()).filter(|&i| self.k[i].is_some()).collect()
    }

    pub fn uncached_files(&self) -> Vec<usize> {
        (0..self.k.len()).filter(|&i| self.k[i].is_none()).collect()
    }

    pub fn k_min(&self) -> Option<usize> {
        self.k.iter().flatten().copied().min()
    }

    pub fn k_max(&self) -> Option<usize> {
        self.k.iter().flatten().copied().max()
    }

    pub fn mu_min(&self) -> Option<f64> {
        self.k_max().map(|k| 1.0 / k as f64)
    }

    pub fn mu_max(&self) -> Option<f64> {
        self.k_min().map(|k| 1.0 / k as f64)
    }

    /// Files' worth of storage used per SBS.
    pub fn storage_used(&self) -> f64 {
        (0..self.k.len()).map(|i| self.mu(i)).sum()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Symbol sizes for a placement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub q: u64,
    /// Bits per GF(q) symbol.
    pub m: u32,
    pub l_bits: usize,
    /// Stripe length after zero padding, identical for all cached files.
    pub padded_bits: usize,
    pub delta: Vec<Option<u32>>,
    pub delta_max: u32,
}

impl Layout {
    pub fn new(q: u64, l_bits: usize, scheme: &CachingScheme) -> Result<Layout, CacheError> {
        let (p, m) = prime_power(q)?;
        if p != 2 {
            return Err(CacheError::NotBinary(q));
        }
        let lcm = scheme
            .ks()
            .iter()
            .flatten()
            .fold(1usize, |acc, &k| acc / gcd(acc, k) * k);
        let per_unit = m as usize * lcm;
        let unit = l_bits.div_ceil(per_unit).max(1);
        let delta: Vec<Option<u32>> = scheme
            .ks()
            .iter()
            .map(|k| k.map(|k| (unit * lcm / k) as u32))
            .collect();
        let delta_max = delta.iter().flatten().copied().max().unwrap_or(1);
        if delta_max as u64 * m as u64 > 63 {
            return Err(CacheError::StripeTooLong { l_bits, delta_max });
        }
        Ok(Layout {
            q,
            m,
            l_bits,
            padded_bits: unit * per_unit,
            delta,
            delta_max,
        })
    }
}

/// The smallest power of two `q` with `q - 1 >= n`.
pub fn default_q(n: usize) -> u64 {
    (n as u64 + 1).next_power_of_two()
}

/// Packs one stripe into `k` symbols of `delta * m` bits each.
pub fn pack_stripe(bits: &[bool], k: usize, delta: u32, m: u32) -> Vec<Elem> {
    let width = (delta * m) as usize;
    (0..k)
        .map(|t| {
            let v = (0..width).fold(0u64, |acc, b| {
                let bit = bits.get(t * width + b).copied().unwrap_or(false);
                acc << 1 | u64::from(bit)
            });
            Elem(v)
        })
        .collect()
}

/// Inverse of [`pack_stripe`], dropping the padding beyond `l_bits`.
pub fn unpack_stripe(symbols: &[Elem], delta: u32, m: u32, l_bits: usize) -> Vec<bool> {
    let width = (delta * m) as usize;
    let mut out = Vec::with_capacity(symbols.len() * width);
    for s in symbols {
        for b in (0..width).rev() {
            out.push(s.0 >> b & 1 == 1);
        }
    }
    out.truncate(l_bits);
    out
}

/// Packs every stripe of a file.
pub fn pack_file(stripes: &[Vec<bool>], k: usize, delta: u32, m: u32) -> Vec<Vec<Elem>> {
    stripes.iter().map(|s| pack_stripe(s, k, delta, m)).collect()
}

#[derive(Clone)]
struct SubField {
    field: Field,
    from_base: Embedding,
    to_top: Embedding,
}

/// GF(q), the per-file symbol fields GF(q^delta_i), and GF(q^delta_max),
/// with the embeddings between them.
#[derive(Clone)]
pub struct SymbolFields {
    base: Field,
    top: Field,
    base_to_top: Embedding,
    sub: BTreeMap<u32, SubField>,
}

impl SymbolFields {
    pub fn new(q: u64, deltas: impl IntoIterator<Item = u32>) -> Result<Self, CacheError> {
        let mut ds: Vec<u32> = deltas.into_iter().collect();
        ds.push(1);
        ds.sort();
        ds.dedup();
        let dmax = *ds.last().unwrap();
        if let Some(&bad) = ds.iter().find(|&&d| dmax % d != 0) {
            return Err(GfError::NotSubfield {
                small: format!("GF({q}^{bad})"),
                big: format!("GF({q}^{dmax})"),
            }
            .into());
        }
        let base = Field::new(q, 1)?;
        let top = Field::new(q, dmax)?;
        let base_to_top = Embedding::new(&base, &top)?;
        // The generator of GF(q), encoded as the digit vector (0, 1).
        let x = Elem(base.characteristic());
        let mut sub = BTreeMap::new();
        for d in ds {
            let field = if d == dmax { top.clone() } else if d == 1 { base.clone() } else { Field::new(q, d)? };
            let to_top = Embedding::new(&field, &top)?;
            // Route GF(q) through GF(q^d) so both paths into the top agree.
            let from_base = if base.degree() == 1 {
                Embedding::new(&base, &field)?
            } else {
                Embedding::from_root(&base, &field, to_top.project(base_to_top.embed(x))?)?
            };
            sub.insert(d, SubField { from_base, to_top, field });
        }
        Ok(SymbolFields {
            base_to_top,
            base,
            top,
            sub,
        })
    }

    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn top(&self) -> &Field {
        &self.top
    }

    pub fn field(&self, delta: u32) -> &Field {
        &self.sub[&delta].field
    }

    pub fn base_into(&self, delta: u32) -> &Embedding {
        &self.sub[&delta].from_base
    }

    pub fn into_top(&self, delta: u32) -> &Embedding {
        &self.sub[&delta].to_top
    }

    pub fn base_to_top(&self) -> &Embedding {
        &self.base_to_top
    }
}

/// Storage codes sharing one weighting and evaluation vector: file `i` gets
/// GRS(N_sbs, k_i) with all-ones weights and the default evaluation points.
pub fn default_codes(scheme: &CachingScheme, base: &Field) -> Result<Vec<Option<LinearCode>>, CacheError> {
    let n = scheme.n_sbs();
    let v = vec![Elem::ONE; n];
    let kappa = default_kappa(n);
    let mut by_k: BTreeMap<usize, LinearCode> = BTreeMap::new();
    scheme
        .ks()
        .iter()
        .map(|k| {
            k.map(|k| {
                if let Some(c) = by_k.get(&k) {
                    return Ok(c.clone());
                }
                let c = LinearCode::grs(base, k, &v, &kappa)?;
                by_k.insert(k, c.clone());
                Ok(c)
            })
            .transpose()
        })
        .collect()
}

/// Coded cache contents of every SBS.
pub struct EncodedCache {
    scheme: CachingScheme,
    layout: Layout,
    fields: SymbolFields,
    codes: Vec<Option<LinearCode>>,
    // Storage codes with scalars extended to each file's symbol field.
    ext_codes: Vec<Option<LinearCode>>,
    beta: usize,
    // stored[i][a][j]: symbol of stripe a of file i at SBS j, in GF(q^delta_i).
    stored: Vec<Vec<Vec<Elem>>>,
    // columns[j]: the response-field column of SBS j.
    columns: Vec<Vec<Elem>>,
    position: Vec<Option<usize>>,
}

impl EncodedCache {
    pub fn encode(
        library: &FileLibrary,
        scheme: &CachingScheme,
        codes: Vec<Option<LinearCode>>,
        q: u64,
    ) -> Result<Self, CacheError> {
        let layout = Layout::new(q, library.stripe_bits(), scheme)?;
        if library.num_files() != scheme.num_files() {
            return Err(CacheError::Popularity(format!(
                "library has {} files, placement {}",
                library.num_files(),
                scheme.num_files()
            )));
        }
        let fields = SymbolFields::new(q, layout.delta.iter().flatten().copied())?;
        let ext_codes = extend_codes(scheme, &fields, &layout, &codes)?;
        let mut stored = Vec::with_capacity(scheme.num_files());
        for (i, code) in ext_codes.iter().enumerate() {
            let (Some(k), Some(code)) = (scheme.k(i), code) else {
                stored.push(Vec::new());
                continue;
            };
            let delta = layout.delta[i].unwrap();
            let rows = pack_file(library.file(i), k, delta, layout.m)
                .iter()
                .map(|msg| code.encode(msg))
                .collect::<Result<Vec<_>, _>>()?;
            stored.push(rows);
        }
        Ok(Self::assemble(scheme.clone(), layout, fields, codes, ext_codes, library.beta(), stored))
    }

    /// Encodes with [`default_codes`] over GF(q).
    pub fn encode_default(library: &FileLibrary, scheme: &CachingScheme, q: u64) -> Result<Self, CacheError> {
        let base = Field::new(q, 1)?;
        let codes = default_codes(scheme, &base)?;
        EncodedCache::encode(library, scheme, codes, q)
    }

    fn assemble(
        scheme: CachingScheme,
        layout: Layout,
        fields: SymbolFields,
        codes: Vec<Option<LinearCode>>,
        ext_codes: Vec<Option<LinearCode>>,
        beta: usize,
        stored: Vec<Vec<Vec<Elem>>>,
    ) -> Self {
        let mut position = vec![None; scheme.num_files()];
        for (rank, &i) in scheme.cached_files().iter().enumerate() {
            position[i] = Some(rank * beta);
        }
        let mut columns = vec![Vec::new(); scheme.n_sbs()];
        for (j, col) in columns.iter_mut().enumerate() {
            for i in scheme.cached_files() {
                let emb = fields.into_top(layout.delta[i].unwrap());
                col.extend(stored[i].iter().map(|row| emb.embed(row[j])));
            }
        }
        EncodedCache {
            scheme,
            layout,
            fields,
            codes,
            ext_codes,
            beta,
            stored,
            columns,
            position,
        }
    }

    pub fn scheme(&self) -> &CachingScheme {
        &self.scheme
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn fields(&self) -> &SymbolFields {
        &self.fields
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn n_sbs(&self) -> usize {
        self.scheme.n_sbs()
    }

    pub fn code(&self, i: usize) -> Option<&LinearCode> {
        self.codes[i].as_ref()
    }

    /// Storage codes over GF(q), `None` for uncached files.
    pub fn codes(&self) -> &[Option<LinearCode>] {
        &self.codes
    }

    /// Length of a cache column: `beta` times the number of cached files.
    pub fn column_len(&self) -> usize {
        self.beta * self.scheme.cached_files().len()
    }

    /// Index of stripe `a` of file `i` inside a cache column.
    pub fn column_index(&self, i: usize, a: usize) -> Option<usize> {
        self.position[i].map(|p| p + a)
    }

    /// Symbol of stripe `a` of file `i` stored at SBS `j`, in GF(q^delta_i).
    pub fn symbol(&self, i: usize, a: usize, j: usize) -> Option<Elem> {
        self.stored.get(i)?.get(a)?.get(j).copied()
    }

    /// Everything SBS `j` stores, embedded into GF(q^delta_max).
    pub fn column(&self, j: usize) -> Result<&[Elem], CacheError> {
        self.columns.get(j).map(Vec::as_slice).ok_or(CacheError::UnknownSbs(j))
    }

    /// Recovers a stripe of file `i` from its symbols at the given SBSs.
    pub fn decode_stripe(&self, i: usize, known: &[(usize, Elem)]) -> Result<Vec<bool>, CacheError> {
        let code = self.ext_codes[i].as_ref().ok_or(CacheError::NotCached(i))?;
        let mut word = vec![None; self.n_sbs()];
        for &(j, s) in known {
            *word.get_mut(j).ok_or(CacheError::UnknownSbs(j))? = Some(s);
        }
        let msg = code.decode_message(&word)?;
        Ok(unpack_stripe(
            &msg,
            self.layout.delta[i].unwrap(),
            self.layout.m,
            self.layout.l_bits,
        ))
    }

    /// Writes the binary snapshot described in the crate documentation.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<(), CacheError> {
        w.write_all(SNAPSHOT_MAGIC)?;
        put_u64(w, self.layout.q)?;
        put_u64(w, self.layout.delta_max as u64)?;
        put_u64(w, self.scheme.num_files() as u64)?;
        put_u64(w, self.beta as u64)?;
        put_u64(w, self.n_sbs() as u64)?;
        put_u64(w, self.layout.l_bits as u64)?;
        put_u64(w, self.scheme.cache_size().to_bits())?;
        w.write_all(&[match self.scheme.regime() {
            Regime::Pir => 0,
            Regime::NoPir => 1,
        }])?;
        for i in 0..self.scheme.num_files() {
            put_u64(w, self.scheme.k(i).unwrap_or(0) as u64)?;
        }
        for code in self.codes.iter().flatten() {
            match code.grs_params() {
                Some(p) => {
                    w.write_all(&[0])?;
                    for e in p.v.iter().chain(&p.kappa) {
                        put_u64(w, e.0)?;
                    }
                }
                None => {
                    w.write_all(&[1])?;
                    for r in 0..code.k() {
                        for e in code.generator().row(r) {
                            put_u64(w, e.0)?;
                        }
                    }
                }
            }
        }
        for rows in &self.stored {
            for row in rows {
                for e in row {
                    put_u64(w, e.0)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self, CacheError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(CacheError::Snapshot("bad magic".into()));
        }
        let q = get_u64(r)?;
        let delta_max = get_u64(r)?;
        let f = get_usize(r)?;
        let beta = get_usize(r)?;
        let n = get_usize(r)?;
        let l_bits = get_usize(r)?;
        let cache_size = f64::from_bits(get_u64(r)?);
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        let regime = match byte[0] {
            0 => Regime::Pir,
            1 => Regime::NoPir,
            b => return Err(CacheError::Snapshot(format!("unknown regime {b}"))),
        };
        let ks = (0..f)
            .map(|_| get_usize(r).map(|k| (k > 0).then_some(k)))
            .collect::<Result<Vec<_>, _>>()?;
        let scheme = CachingScheme::new(n, cache_size, ks, regime)?;
        let layout = Layout::new(q, l_bits, &scheme)?;
        if layout.delta_max as u64 != delta_max {
            return Err(CacheError::Snapshot("symbol degree mismatch".into()));
        }
        let base = Field::new(q, 1)?;
        let read_elems = |r: &mut R, count: usize, field: &Field| -> Result<Vec<Elem>, CacheError> {
            (0..count)
                .map(|_| {
                    let v = get_u64(r)?;
                    if field.contains(Elem(v)) {
                        Ok(Elem(v))
                    } else {
                        Err(CacheError::Snapshot(format!("symbol {v} outside {field}")))
                    }
                })
                .collect()
        };
        let mut codes = Vec::with_capacity(f);
        for i in 0..f {
            let Some(k) = scheme.k(i) else {
                codes.push(None);
                continue;
            };
            r.read_exact(&mut byte)?;
            let code = match byte[0] {
                0 => {
                    let v = read_elems(r, n, &base)?;
                    let kappa = read_elems(r, n, &base)?;
                    LinearCode::grs(&base, k, &v, &kappa)?
                }
                1 => {
                    let g = read_elems(r, k * n, &base)?;
                    let rows: Vec<Vec<Elem>> = g.chunks(n).map(<[Elem]>::to_vec).collect();
                    LinearCode::from_generator(Matrix::from_rows(&base, &rows)?)?
                }
                b => return Err(CacheError::Snapshot(format!("unknown code kind {b}"))),
            };
            codes.push(Some(code));
        }
        let fields = SymbolFields::new(q, layout.delta.iter().flatten().copied())?;
        let mut stored = Vec::with_capacity(f);
        for i in 0..f {
            let Some(d) = layout.delta[i] else {
                stored.push(Vec::new());
                continue;
            };
            let field = fields.field(d).clone();
            let rows = (0..beta)
                .map(|_| read_elems(r, n, &field))
                .collect::<Result<Vec<_>, _>>()?;
            stored.push(rows);
        }
        let ext_codes = extend_codes(&scheme, &fields, &layout, &codes)?;
        Ok(EncodedCache::assemble(scheme, layout, fields, codes, ext_codes, beta, stored))
    }
}

fn extend_codes(
    scheme: &CachingScheme,
    fields: &SymbolFields,
    layout: &Layout,
    codes: &[Option<LinearCode>],
) -> Result<Vec<Option<LinearCode>>, CacheError> {
    if codes.len() != scheme.num_files() {
        return Err(CacheError::Popularity(format!(
            "{} storage codes for {} files",
            codes.len(),
            scheme.num_files()
        )));
    }
    let mut out = Vec::with_capacity(codes.len());
    for (i, code) in codes.iter().enumerate() {
        match (scheme.k(i), code) {
            (None, _) => out.push(None),
            (Some(k), Some(c)) if c.k() == k && c.n() == scheme.n_sbs() && c.field() == fields.base() => {
                let d = layout.delta[i].unwrap();
                out.push(Some(c.extend_scalars(fields.base_into(d))?));
            }
            (Some(k), _) => {
                return Err(CacheError::CodeShape {
                    file: i,
                    n: scheme.n_sbs(),
                    k,
                    field: fields.base().to_string(),
                })
            }
        }
    }
    Ok(out)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"EPIRCAC1";

fn put_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64, CacheError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_usize<R: Read>(r: &mut R) -> Result<usize, CacheError> {
    usize::try_from(get_u64(r)?).map_err(|_| CacheError::Snapshot("size overflow".into()))
}

/// The macro base station: stores plaintext files and synthesizes the coded
/// column of any coordinate on demand.
pub struct Mbs<'a> {
    library: &'a FileLibrary,
    cache: &'a EncodedCache,
}

impl<'a> Mbs<'a> {
    pub fn new(library: &'a FileLibrary, cache: &'a EncodedCache) -> Self {
        Mbs { library, cache }
    }

    pub fn library(&self) -> &FileLibrary {
        self.library
    }

    /// The column SBS `j` would hold, computed from the plaintext.
    pub fn column(&self, j: usize) -> Result<Vec<Elem>, CacheError> {
        if j >= self.cache.n_sbs() {
            return Err(CacheError::UnknownSbs(j));
        }
        let layout = &self.cache.layout;
        let mut col = Vec::with_capacity(self.cache.column_len());
        for i in self.cache.scheme.cached_files() {
            let d = layout.delta[i].unwrap();
            let code = self.cache.ext_codes[i].as_ref().unwrap();
            let g_col = code.generator().col(j);
            let field = code.field();
            let emb = self.cache.fields.into_top(d);
            for stripe in self.library.file(i) {
                let msg = pack_stripe(stripe, code.k(), d, layout.m);
                col.push(emb.embed(field.dot(&msg, &g_col)));
            }
        }
        Ok(col)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    fn example_codes(base: &Field) -> Vec<Option<LinearCode>> {
        let rep = Matrix::from_u64(base, &[&[1, 1, 1, 1, 1, 1]]).unwrap();
        let rows: Vec<Vec<u64>> = (0..5)
            .map(|i| (0..6).map(|j| u64::from(j == i || j == 5)).collect())
            .collect();
        let refs: Vec<&[u64]> = rows.iter().map(Vec::as_slice).collect();
        let spc = Matrix::from_u64(base, &refs).unwrap();
        vec![
            Some(LinearCode::from_generator(rep).unwrap()),
            Some(LinearCode::from_generator(spc).unwrap()),
        ]
    }

    fn example() -> (FileLibrary, EncodedCache) {
        let lib = FileLibrary::new(
            1,
            5,
            vec![vec![bits("10110")], vec![bits("01101")]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let scheme = CachingScheme::new(6, 1.2, vec![Some(1), Some(5)], Regime::Pir).unwrap();
        let base = Field::new(2, 1).unwrap();
        let cache = EncodedCache::encode(&lib, &scheme, example_codes(&base), 2).unwrap();
        (lib, cache)
    }

    #[test]
    fn packing_examples() {
        let s = bits("10110");
        assert_eq!(pack_stripe(&s, 1, 5, 1), vec![Elem(0b10110)]);
        assert_eq!(
            pack_stripe(&s, 5, 1, 1),
            vec![Elem(1), Elem(0), Elem(1), Elem(1), Elem(0)]
        );
        assert_eq!(pack_stripe(&[false; 5], 5, 1, 1), vec![Elem(0); 5]);
        assert_eq!(unpack_stripe(&pack_stripe(&s, 2, 3, 1), 3, 1, 5), s);
    }

    #[test]
    fn example_layout() {
        let (_, cache) = example();
        assert_eq!(cache.layout().delta, vec![Some(5), Some(1)]);
        assert_eq!(cache.layout().delta_max, 5);
        let x1 = Elem(0b10110);
        let x2 = bits("01101");
        for j in 0..6 {
            assert_eq!(cache.symbol(0, 0, j), Some(x1));
            let expected = if j < 5 { x2[j] } else { x2.iter().filter(|&&b| b).count() % 2 == 1 };
            assert_eq!(cache.symbol(1, 0, j), Some(Elem(u64::from(expected))));
        }
        // The sixth SBS holds the repetition symbol and the parity symbol.
        assert_eq!(cache.column(5).unwrap(), &[x1, Elem(1)]);
    }

    #[test]
    fn uncached_library_leaves_caches_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lib = FileLibrary::random(2, 8, vec![0.5, 0.5], &mut rng).unwrap();
        let scheme = CachingScheme::new(4, 1.0, vec![None, None], Regime::Pir).unwrap();
        let cache = EncodedCache::encode_default(&lib, &scheme, 8).unwrap();
        assert!(cache.column(0).unwrap().is_empty());
        assert!(matches!(cache.column(4), Err(CacheError::UnknownSbs(4))));
    }

    #[test]
    fn placement_validation() {
        assert!(matches!(
            CachingScheme::new(6, 1.0, vec![Some(1), Some(2)], Regime::Pir),
            Err(CacheError::OverBudget { .. })
        ));
        assert!(matches!(
            CachingScheme::new(6, 2.0, vec![Some(2), Some(3)], Regime::Pir),
            Err(CacheError::NotDivisible { .. })
        ));
        assert!(matches!(
            CachingScheme::new(6, 2.0, vec![Some(6)], Regime::Pir),
            Err(CacheError::BadK { .. })
        ));
        assert!(CachingScheme::new(6, 2.0, vec![Some(6)], Regime::NoPir).is_ok());
        assert!(CachingScheme::new(6, 2.0, vec![Some(2), Some(3)], Regime::NoPir).is_ok());
        let s = CachingScheme::from_mu(6, 1.0, &[0.5, 0.25, 0.0], Regime::Pir).unwrap();
        assert_eq!(s.ks(), &[Some(2), Some(4), None]);
        assert_eq!((s.k_min(), s.k_max()), (Some(2), Some(4)));
        assert!(validate_popularity(&[0.3, 0.7]).is_err());
        assert!(validate_popularity(&[0.7, 0.2]).is_err());
    }

    #[test]
    fn any_k_columns_decode() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let lib = FileLibrary::random(3, 12, vec![0.4, 0.3, 0.2, 0.1], &mut rng).unwrap();
        let scheme = CachingScheme::new(7, 2.0, vec![Some(2), Some(4), Some(4), None], Regime::Pir).unwrap();
        let cache = EncodedCache::encode_default(&lib, &scheme, 8).unwrap();
        for i in 0..3 {
            let k = scheme.k(i).unwrap();
            for a in 0..3 {
                crate::codes::for_each_subset(7, k, &mut |s| {
                    let known: Vec<(usize, Elem)> = s.iter().map(|&j| (j, cache.symbol(i, a, j).unwrap())).collect();
                    assert_eq!(cache.decode_stripe(i, &known).unwrap(), lib.stripe(i, a));
                    true
                });
            }
        }
    }

    #[test]
    fn columns_project_back_and_match_the_mbs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lib = FileLibrary::random(2, 10, vec![0.5, 0.3, 0.2], &mut rng).unwrap();
        let scheme = CachingScheme::new(5, 1.5, vec![Some(1), Some(2), None], Regime::Pir).unwrap();
        let cache = EncodedCache::encode_default(&lib, &scheme, 8).unwrap();
        let mbs = Mbs::new(&lib, &cache);
        for j in 0..5 {
            let col = cache.column(j).unwrap();
            assert_eq!(col.len(), 4);
            assert_eq!(mbs.column(j).unwrap(), col);
            for i in 0..2 {
                let d = cache.layout().delta[i].unwrap();
                for a in 0..2 {
                    let y = col[cache.column_index(i, a).unwrap()];
                    assert_eq!(cache.fields().into_top(d).project(y), Ok(cache.symbol(i, a, j).unwrap()));
                }
            }
        }
    }

    #[test]
    fn storage_budget_in_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lib = FileLibrary::random(2, 24, vec![0.25; 4], &mut rng).unwrap();
        let scheme = CachingScheme::new(7, 1.0, vec![Some(2), Some(4), Some(4), None], Regime::Pir).unwrap();
        let cache = EncodedCache::encode_default(&lib, &scheme, 8).unwrap();
        let layout = cache.layout();
        let bits: usize = (0..4)
            .filter_map(|i| layout.delta[i])
            .map(|d| 2 * (d * layout.m) as usize)
            .sum();
        assert!(bits as f64 <= 1.0 * 2.0 * layout.padded_bits as f64);
        for i in 0..3 {
            let d = layout.delta[i].unwrap() as usize;
            assert_eq!(d * scheme.k(i).unwrap() * layout.m as usize, layout.padded_bits);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let (_, cache) = example();
        let mut buf = Vec::new();
        cache.write_snapshot(&mut buf).unwrap();
        let back = EncodedCache::read_snapshot(&mut buf.as_slice()).unwrap();
        for j in 0..6 {
            assert_eq!(back.column(j).unwrap(), cache.column(j).unwrap());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lib = FileLibrary::random(3, 16, vec![0.5, 0.3, 0.2], &mut rng).unwrap();
        let scheme = CachingScheme::new(6, 1.0, vec![Some(2), Some(4), None], Regime::Pir).unwrap();
        let cache = EncodedCache::encode_default(&lib, &scheme, 8).unwrap();
        buf.clear();
        cache.write_snapshot(&mut buf).unwrap();
        let back = EncodedCache::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(back.column(3).unwrap(), cache.column(3).unwrap());
        assert!(EncodedCache::read_snapshot(&mut &buf[..20]).is_err());
        buf[0] = b'X';
        assert!(EncodedCache::read_snapshot(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn rejects_oversized_stripes_and_odd_q() {
        let scheme = CachingScheme::new(6, 1.0, vec![Some(1)], Regime::Pir).unwrap();
        assert!(matches!(Layout::new(8, 300, &scheme), Err(CacheError::StripeTooLong { .. })));
        assert!(matches!(Layout::new(7, 30, &scheme), Err(CacheError::NotBinary(7))));
        assert_eq!(default_q(6), 8);
        assert_eq!(default_q(7), 8);
        assert_eq!(default_q(8), 16);
    }

    #[test]
    fn symbol_field_embeddings_commute() {
        for (q, deltas) in [(8u64, vec![1u32, 2, 4]), (4, vec![2, 3, 6]), (16, vec![1, 2, 4]), (9, vec![2, 4])] {
            let f = SymbolFields::new(q, deltas.clone()).unwrap();
            for &d in &deltas {
                let (up, into) = (f.base_into(d), f.into_top(d));
                for x in f.base().elements() {
                    assert_eq!(into.embed(up.embed(x)), f.base_to_top().embed(x), "q={q} d={d}");
                }
            }
        }
    }
}
