//! Linear codes over [`Field`]s: generalized Reed-Solomon construction,
//! puncturing, Hadamard products and sums, information sets and erasure
//! recovery.
//!
//! Coordinates are 0-based throughout.

use thiserror::Error;

use crate::gf::{Elem, Embedding, Field, GfError, Matrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error(transparent)]
    Gf(#[from] GfError),
    #[error("GRS length {n} needs {n} distinct nonzero evaluation points but the field has {available}")]
    TooLong { n: usize, available: u64 },
    #[error("evaluation points must be nonzero and pairwise distinct")]
    BadEvaluationPoints,
    #[error("weighting vector has a zero entry")]
    ZeroWeight,
    #[error("dimension {k} is invalid for length {n}")]
    BadDimension { n: usize, k: usize },
    #[error("generator matrix has rank {rank} but {rows} rows")]
    RankDeficient { rows: usize, rank: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("codes are defined over different fields")]
    FieldMismatch,
    #[error("puncturing to {kept} coordinates loses dimension (k = {k})")]
    DimensionLoss { kept: usize, k: usize },
    #[error("coordinate {0} is out of range or repeated")]
    BadCoordinate(usize),
    #[error("information set must have exactly {k} coordinates, got {got}")]
    InformationSetSize { k: usize, got: usize },
    #[error("erasure pattern is not correctable")]
    Uncorrectable,
    #[error("known symbols are not consistent with any codeword")]
    NotACodeword,
    #[error("exhaustive dual distance search exceeds {0} rank evaluations")]
    TooLargeForExhaustive(u64),
}

/// Weighting and evaluation vectors of a generalized Reed-Solomon code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrsParams {
    pub v: Vec<Elem>,
    pub kappa: Vec<Elem>,
}

/// Binary erasure indicator; `true` marks an erased coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErasurePattern(Vec<bool>);

impl ErasurePattern {
    pub fn new(erased: Vec<bool>) -> Self {
        ErasurePattern(erased)
    }

    pub fn from_support(n: usize, support: &[usize]) -> Result<Self, CodeError> {
        let mut v = vec![false; n];
        for &i in support {
            if i >= n || v[i] {
                return Err(CodeError::BadCoordinate(i));
            }
            v[i] = true;
        }
        Ok(ErasurePattern(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i]).collect()
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_erased(&self, i: usize) -> bool {
        self.0[i]
    }
}

#[derive(Clone, Debug)]
pub struct LinearCode {
    field: Field,
    n: usize,
    k: usize,
    g: Matrix,
    h: Matrix,
    grs: Option<GrsParams>,
}

/// The default evaluation vector: the first `n` nonzero elements in
/// encoding order.
pub fn default_kappa(n: usize) -> Vec<Elem> {
    (1..=n as u64).map(Elem).collect()
}

fn check_coords(n: usize, coords: &[usize]) -> Result<(), CodeError> {
    let mut seen = vec![false; n];
    for &c in coords {
        if c >= n || seen[c] {
            return Err(CodeError::BadCoordinate(c));
        }
        seen[c] = true;
    }
    Ok(())
}

impl LinearCode {
    /// GRS(n, k, v, kappa) with generator `G[i][j] = v_j * kappa_j^i`.
    pub fn grs(field: &Field, k: usize, v: &[Elem], kappa: &[Elem]) -> Result<LinearCode, CodeError> {
        let n = kappa.len();
        if v.len() != n {
            return Err(CodeError::LengthMismatch {
                expected: n,
                got: v.len(),
            });
        }
        if n as u64 > field.order() - 1 {
            return Err(CodeError::TooLong {
                n,
                available: field.order() - 1,
            });
        }
        if k == 0 || k > n {
            return Err(CodeError::BadDimension { n, k });
        }
        if v.iter().any(|e| e.is_zero() || !field.contains(*e)) {
            return Err(CodeError::ZeroWeight);
        }
        let mut sorted = kappa.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n || sorted[0].is_zero() || !field.contains(sorted[n - 1]) {
            return Err(CodeError::BadEvaluationPoints);
        }
        let g = Matrix::from_fn(field, k, n, |i, j| {
            field.mul(v[j], field.pow(kappa[j], i as u64))
        });
        let h = g.nullspace();
        Ok(LinearCode {
            field: field.clone(),
            n,
            k,
            g,
            h,
            grs: Some(GrsParams {
                v: v.to_vec(),
                kappa: kappa.to_vec(),
            }),
        })
    }

    /// GRS(n, k) with all-ones weights and [`default_kappa`].
    pub fn grs_default(field: &Field, n: usize, k: usize) -> Result<LinearCode, CodeError> {
        LinearCode::grs(field, k, &vec![Elem::ONE; n], &default_kappa(n))
    }

    pub fn from_generator(g: Matrix) -> Result<LinearCode, CodeError> {
        let rank = g.rank();
        if rank != g.rows() || rank == 0 {
            return Err(CodeError::RankDeficient {
                rows: g.rows(),
                rank,
            });
        }
        let h = g.nullspace();
        Ok(LinearCode {
            field: g.field().clone(),
            n: g.cols(),
            k: g.rows(),
            g,
            h,
            grs: None,
        })
    }

    /// Code spanned by `rows`, reduced to a basis. Fails on the zero span.
    fn from_span(n: usize, rows: Matrix) -> Result<LinearCode, CodeError> {
        let (red, pivots) = rows.rref();
        let basis = red.select_rows(&(0..pivots.len()).collect::<Vec<_>>());
        if basis.rows() == 0 {
            return Err(CodeError::BadDimension { n, k: 0 });
        }
        LinearCode::from_generator(basis)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn generator(&self) -> &Matrix {
        &self.g
    }

    pub fn parity_check(&self) -> &Matrix {
        &self.h
    }

    pub fn grs_params(&self) -> Option<&GrsParams> {
        self.grs.as_ref()
    }

    pub fn is_grs(&self) -> bool {
        self.grs.is_some()
    }

    fn compatible(&self, other: &LinearCode) -> Result<(), CodeError> {
        if self.field != other.field {
            return Err(CodeError::FieldMismatch);
        }
        if self.n != other.n {
            return Err(CodeError::LengthMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }

    pub fn encode(&self, message: &[Elem]) -> Result<Vec<Elem>, CodeError> {
        if message.len() != self.k {
            return Err(CodeError::LengthMismatch {
                expected: self.k,
                got: message.len(),
            });
        }
        Ok(self.g.vec_mul(message)?)
    }

    pub fn contains(&self, word: &[Elem]) -> bool {
        word.len() == self.n && self.h.mul_vec(word).is_ok_and(|s| s.iter().all(|e| e.is_zero()))
    }

    /// Restriction to `keep`, in the given order.
    pub fn puncture(&self, keep: &[usize]) -> Result<LinearCode, CodeError> {
        check_coords(self.n, keep)?;
        if keep.len() < self.k {
            return Err(CodeError::DimensionLoss {
                kept: keep.len(),
                k: self.k,
            });
        }
        if let Some(p) = &self.grs {
            let v: Vec<Elem> = keep.iter().map(|&i| p.v[i]).collect();
            let kappa: Vec<Elem> = keep.iter().map(|&i| p.kappa[i]).collect();
            return LinearCode::grs(&self.field, self.k, &v, &kappa);
        }
        let g = self.g.select_columns(keep);
        if g.rank() < self.k {
            return Err(CodeError::DimensionLoss {
                kept: keep.len(),
                k: self.k,
            });
        }
        LinearCode::from_generator(g)
    }

    /// Span of all entrywise products of codewords of `self` and `other`.
    pub fn hadamard(&self, other: &LinearCode) -> Result<LinearCode, CodeError> {
        self.compatible(other)?;
        if let (Some(a), Some(b)) = (&self.grs, &other.grs) {
            if a.kappa == b.kappa {
                let v: Vec<Elem> = a.v.iter().zip(&b.v).map(|(&x, &y)| self.field.mul(x, y)).collect();
                let k = (self.k + other.k - 1).min(self.n);
                return LinearCode::grs(&self.field, k, &v, &a.kappa);
            }
        }
        let f = &self.field;
        let mut rows = Vec::with_capacity(self.k * other.k);
        for i in 0..self.k {
            for j in 0..other.k {
                rows.push(
                    self.g
                        .row(i)
                        .iter()
                        .zip(other.g.row(j))
                        .map(|(&x, &y)| f.mul(x, y))
                        .collect::<Vec<_>>(),
                );
            }
        }
        LinearCode::from_span(self.n, Matrix::from_rows(f, &rows)?)
    }

    /// The sum `self + other` (span of both generators).
    pub fn sum(&self, other: &LinearCode) -> Result<LinearCode, CodeError> {
        self.compatible(other)?;
        if let (Some(a), Some(b)) = (&self.grs, &other.grs) {
            if a == b {
                let k = self.k.max(other.k);
                return LinearCode::grs(&self.field, k, &a.v, &a.kappa);
            }
        }
        LinearCode::from_span(self.n, self.g.vstack(&other.g)?)
    }

    pub fn is_information_set(&self, coords: &[usize]) -> Result<bool, CodeError> {
        check_coords(self.n, coords)?;
        if coords.len() != self.k {
            return Err(CodeError::InformationSetSize {
                k: self.k,
                got: coords.len(),
            });
        }
        Ok(self.g.select_columns(coords).rank() == self.k)
    }

    /// True iff `rank(H|_chi) = |chi|` for the erased support `chi`.
    pub fn correctable(&self, pattern: &ErasurePattern) -> bool {
        if pattern.len() != self.n {
            return false;
        }
        let chi = pattern.support();
        if chi.is_empty() {
            return true;
        }
        if chi.len() > self.n - self.k {
            return false;
        }
        self.h.select_columns(&chi).rank() == chi.len()
    }

    /// Recovers the message from the unerased symbols of a codeword.
    pub fn decode_message(&self, word: &[Option<Elem>]) -> Result<Vec<Elem>, CodeError> {
        if word.len() != self.n {
            return Err(CodeError::LengthMismatch {
                expected: self.n,
                got: word.len(),
            });
        }
        let known: Vec<usize> = (0..self.n).filter(|&i| word[i].is_some()).collect();
        let gk = self.g.select_columns(&known);
        if gk.rank() < self.k {
            return Err(CodeError::Uncorrectable);
        }
        let rhs: Vec<Elem> = known.iter().map(|&i| word[i].unwrap()).collect();
        match gk.transpose().solve(&rhs) {
            Ok(m) => Ok(m),
            Err(GfError::NoSolution) => Err(CodeError::NotACodeword),
            Err(e) => Err(e.into()),
        }
    }

    pub fn erasure_decode(&self, word: &[Option<Elem>]) -> Result<Vec<Elem>, CodeError> {
        let m = self.decode_message(word)?;
        self.encode(&m)
    }

    /// Minimum distance of the dual code: the smallest number of linearly
    /// dependent columns of the generator, or `n + 1` when the dual is zero.
    /// GRS codes answer `k + 1` directly; other codes are searched
    /// exhaustively up to `limit` rank evaluations.
    pub fn dual_min_distance(&self, limit: u64) -> Result<usize, CodeError> {
        if self.grs.is_some() || self.k == self.n {
            return Ok(self.k + 1);
        }
        let mut budget = limit;
        for w in 1..=self.k + 1 {
            let mut found = false;
            let mut exhausted = false;
            for_each_subset(self.n, w, &mut |s| {
                if budget == 0 {
                    exhausted = true;
                    return false;
                }
                budget -= 1;
                if self.g.select_columns(s).rank() < w {
                    found = true;
                    return false;
                }
                true
            });
            if found {
                return Ok(w);
            }
            if exhausted {
                return Err(CodeError::TooLargeForExhaustive(limit));
            }
        }
        unreachable!("any k + 1 columns of a rank-k generator are dependent")
    }

    /// Exhaustive MDS test: every k-subset of coordinates is an information set.
    pub fn is_mds(&self) -> bool {
        let mut all = true;
        for_each_subset(self.n, self.k, &mut |s| {
            all = self.g.select_columns(s).rank() == self.k;
            all
        });
        all
    }

    /// The same code with scalars extended to a larger field.
    pub fn extend_scalars(&self, emb: &Embedding) -> Result<LinearCode, CodeError> {
        if emb.small() != &self.field {
            return Err(CodeError::FieldMismatch);
        }
        let big = emb.big();
        let map = |m: &Matrix| m.map(big, |e| emb.embed(e));
        Ok(LinearCode {
            field: big.clone(),
            n: self.n,
            k: self.k,
            g: map(&self.g),
            h: map(&self.h),
            grs: self.grs.as_ref().map(|p| GrsParams {
                v: p.v.iter().map(|&e| emb.embed(e)).collect(),
                kappa: p.kappa.iter().map(|&e| emb.embed(e)).collect(),
            }),
        })
    }
}

/// Calls `f` on each `k`-subset of `0..n` in lexicographic order until it
/// returns false.
pub fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gf(q: u64) -> Field {
        Field::new(q, 1).unwrap()
    }

    fn repetition6() -> LinearCode {
        LinearCode::from_generator(Matrix::from_u64(&gf(2), &[&[1, 1, 1, 1, 1, 1]]).unwrap()).unwrap()
    }

    fn spc6() -> LinearCode {
        let rows: Vec<Vec<u64>> = (0..5)
            .map(|i| (0..6).map(|j| u64::from(j == i || j == 5)).collect())
            .collect();
        let refs: Vec<&[u64]> = rows.iter().map(Vec::as_slice).collect();
        LinearCode::from_generator(Matrix::from_u64(&gf(2), &refs).unwrap()).unwrap()
    }

    fn same_code(a: &LinearCode, b: &LinearCode) -> bool {
        a.k() == b.k() && (0..a.k()).all(|i| b.contains(a.generator().row(i)))
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for_each_subset(n, k, &mut |s| {
            out.push(s.to_vec());
            true
        });
        out
    }

    // Rank via Gaussian elimination on explicit minors; independent of
    // `Matrix::rank` only in that it checks all k x k minors for a nonzero
    // determinant computed by cofactor expansion.
    fn det(f: &Field, m: &[Vec<Elem>]) -> Elem {
        if m.len() == 1 {
            return m[0][0];
        }
        let mut acc = Elem::ZERO;
        for c in 0..m.len() {
            let minor: Vec<Vec<Elem>> = m[1..]
                .iter()
                .map(|r| r.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, &e)| e).collect())
                .collect();
            let term = f.mul(m[0][c], det(f, &minor));
            acc = if c % 2 == 0 { f.add(acc, term) } else { f.sub(acc, term) };
        }
        acc
    }

    fn info_set_oracle(code: &LinearCode, s: &[usize]) -> bool {
        let g = code.generator().select_columns(s).to_rows();
        !det(code.field(), &g).is_zero()
    }

    #[test]
    fn grs_examples() {
        let f5 = gf(5);
        let c = LinearCode::grs(&f5, 1, &[Elem(1); 3], &[Elem(1), Elem(2), Elem(3)]).unwrap();
        assert_eq!(c.generator().row(0), &[Elem(1); 3]);
        let full = LinearCode::grs_default(&f5, 4, 4).unwrap();
        assert!(full.generator().invert().is_ok());
        assert_eq!(full.parity_check().rows(), 0);

        let f7 = gf(7);
        let c = LinearCode::grs_default(&f7, 5, 2).unwrap();
        for s in subsets(5, 2) {
            assert!(info_set_oracle(&c, &s));
            assert!(c.is_information_set(&s).unwrap());
        }
    }

    #[test]
    fn grs_rejections() {
        let f5 = gf(5);
        assert_eq!(
            LinearCode::grs(&f5, 1, &[Elem(1); 3], &[Elem(1), Elem(1), Elem(3)]).unwrap_err(),
            CodeError::BadEvaluationPoints
        );
        assert_eq!(
            LinearCode::grs(&f5, 1, &[Elem(1), Elem(0), Elem(1)], &[Elem(1), Elem(2), Elem(3)]).unwrap_err(),
            CodeError::ZeroWeight
        );
        assert!(matches!(LinearCode::grs_default(&f5, 5, 2), Err(CodeError::TooLong { .. })));
    }

    #[test]
    fn generator_examples() {
        let rep = repetition6();
        assert_eq!((rep.n(), rep.k()), (6, 1));
        let spc = spc6();
        assert_eq!((spc.n(), spc.k()), (6, 5));
        assert!(spc.is_information_set(&[0, 1, 2, 3, 4]).unwrap());
        for i in 0..6 {
            assert!(rep.is_information_set(&[i]).unwrap());
        }
        let id = LinearCode::from_generator(Matrix::identity(&gf(2), 4)).unwrap();
        assert_eq!(id.parity_check().rows(), 0);
        for i in 0..4 {
            assert!(!id.correctable(&ErasurePattern::from_support(4, &[i]).unwrap()));
        }
        let bad = Matrix::from_u64(&gf(2), &[&[1, 1], &[1, 1]]).unwrap();
        assert!(matches!(LinearCode::from_generator(bad), Err(CodeError::RankDeficient { .. })));
    }

    #[test]
    fn puncturing() {
        let f7 = gf(7);
        let c = LinearCode::grs_default(&f7, 5, 2).unwrap();
        assert!(same_code(&c.puncture(&[0, 1, 2, 3, 4]).unwrap(), &c));
        let p = c.puncture(&[1, 2, 3]).unwrap();
        assert_eq!(p.grs_params().unwrap().kappa, vec![Elem(2), Elem(3), Elem(4)]);
        assert!(p.is_mds());
        for s in subsets(3, 2) {
            assert!(info_set_oracle(&p, &s));
        }
        assert!(matches!(c.puncture(&[0]), Err(CodeError::DimensionLoss { .. })));
        assert!(matches!(c.puncture(&[0, 0]), Err(CodeError::BadCoordinate(0))));
    }

    #[test]
    fn hadamard_and_sum_examples() {
        let rep = repetition6();
        let spc = spc6();
        assert!(same_code(&rep.hadamard(&spc).unwrap(), &spc));
        let sum = rep.sum(&spc).unwrap();
        assert!(same_code(&sum, &spc));
        assert!(same_code(&spc.sum(&spc).unwrap(), &spc));
        // (C1 + C2) composed with the repetition retrieval code is C2
        assert!(same_code(&sum.hadamard(&rep).unwrap(), &spc));

        let f7 = gf(7);
        let a = LinearCode::grs_default(&f7, 5, 2).unwrap();
        assert_eq!(a.hadamard(&a).unwrap().k(), 3);
        // brute force: rank of the 4 pairwise products of generator rows
        let rows: Vec<Vec<Elem>> = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| {
                a.generator().row(i).iter().zip(a.generator().row(j)).map(|(&x, &y)| f7.mul(x, y)).collect()
            })
            .collect();
        assert_eq!(Matrix::from_rows(&f7, &rows).unwrap().rank(), 3);
    }

    #[test]
    fn generic_hadamard_agrees_with_grs_shortcut() {
        let f8 = Field::new(8, 1).unwrap();
        let kappa = default_kappa(7);
        let v1: Vec<Elem> = (1..=7).map(Elem).collect();
        let v2: Vec<Elem> = (1..=7).rev().map(Elem).collect();
        let a = LinearCode::grs(&f8, 2, &v1, &kappa).unwrap();
        let b = LinearCode::grs(&f8, 3, &v2, &kappa).unwrap();
        let fast = a.hadamard(&b).unwrap();
        let slow = LinearCode::from_generator(a.generator().clone())
            .unwrap()
            .hadamard(&LinearCode::from_generator(b.generator().clone()).unwrap())
            .unwrap();
        assert_eq!(fast.k(), 4);
        assert!(same_code(&fast, &slow) && same_code(&slow, &fast));
    }

    #[test]
    fn information_sets_of_grs_5_3() {
        let c = LinearCode::grs_default(&gf(7), 5, 3).unwrap();
        let count = subsets(5, 3)
            .iter()
            .filter(|s| c.is_information_set(s).unwrap())
            .count();
        assert_eq!(count, 10);
        assert!(matches!(
            c.is_information_set(&[0, 1]),
            Err(CodeError::InformationSetSize { .. })
        ));
    }

    #[test]
    fn correctability_matches_decoder() {
        let f7 = gf(7);
        let c = LinearCode::grs_default(&f7, 6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let msg: Vec<Elem> = (0..3).map(|_| f7.random(&mut rng)).collect();
        let cw = c.encode(&msg).unwrap();
        assert!(c.correctable(&ErasurePattern::new(vec![false; 6])));
        for mask in 0u32..64 {
            let pattern = ErasurePattern::new((0..6).map(|i| mask >> i & 1 == 1).collect());
            let word: Vec<Option<Elem>> = (0..6).map(|i| (!pattern.is_erased(i)).then_some(cw[i])).collect();
            let decoded = c.erasure_decode(&word);
            assert_eq!(c.correctable(&pattern), decoded.is_ok());
            if pattern.weight() <= 3 {
                assert_eq!(decoded.unwrap(), cw);
            } else {
                assert_eq!(decoded, Err(CodeError::Uncorrectable));
            }
        }
    }

    #[test]
    fn repetition_with_five_erasures() {
        let rep = repetition6();
        let mut word = vec![None; 6];
        word[3] = Some(Elem(1));
        assert_eq!(rep.erasure_decode(&word).unwrap(), vec![Elem(1); 6]);
    }

    #[test]
    fn grs_7_3_over_gf8_round_trip() {
        let f8 = Field::new(8, 1).unwrap();
        let c = LinearCode::grs_default(&f8, 7, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for erased in subsets(7, 4) {
            let msg: Vec<Elem> = (0..3).map(|_| f8.random(&mut rng)).collect();
            let cw = c.encode(&msg).unwrap();
            let word: Vec<Option<Elem>> = (0..7).map(|i| (!erased.contains(&i)).then_some(cw[i])).collect();
            assert_eq!(c.erasure_decode(&word).unwrap(), cw);
            assert_eq!(c.decode_message(&word).unwrap(), msg);
        }
    }

    #[test]
    fn inconsistent_word_is_rejected() {
        let c = repetition6();
        let word = vec![Some(Elem(0)), Some(Elem(1)), None, None, None, None];
        assert_eq!(c.erasure_decode(&word), Err(CodeError::NotACodeword));
    }

    // Minimum nonzero weight of the span of H, enumerated directly.
    fn dual_distance_oracle(c: &LinearCode) -> usize {
        let h = c.parity_check();
        let q = c.field().order();
        let r = h.rows();
        let mut best = c.n() + 1;
        for code in 1..q.pow(r as u32) {
            let mut x = code;
            let coeffs: Vec<Elem> = (0..r)
                .map(|_| {
                    let d = x % q;
                    x /= q;
                    Elem(d)
                })
                .collect();
            let w = h.vec_mul(&coeffs).unwrap().iter().filter(|e| !e.is_zero()).count();
            best = best.min(w);
        }
        best
    }

    #[test]
    fn dual_distances() {
        assert_eq!(repetition6().dual_min_distance(1 << 20).unwrap(), 2);
        let grs = LinearCode::grs_default(&gf(7), 6, 2).unwrap();
        assert_eq!(grs.dual_min_distance(0).unwrap(), 3);
        let generic = LinearCode::from_generator(grs.generator().clone()).unwrap();
        assert_eq!(generic.dual_min_distance(1 << 20).unwrap(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f2 = gf(2);
        let mut checked = 0;
        while checked < 30 {
            let g = Matrix::from_fn(&f2, 3, 6, |_, _| f2.random(&mut rng));
            let Ok(c) = LinearCode::from_generator(g) else { continue };
            assert_eq!(c.dual_min_distance(1 << 20).unwrap(), dual_distance_oracle(&c));
            checked += 1;
        }
        assert_eq!(
            spc6().dual_min_distance(2),
            Err(CodeError::TooLargeForExhaustive(2))
        );
    }

    #[test]
    fn scalar_extension_preserves_membership() {
        let small = gf(2);
        let big = Field::new(2, 5).unwrap();
        let emb = Embedding::new(&small, &big).unwrap();
        let spc = spc6().extend_scalars(&emb).unwrap();
        assert_eq!(spc.field(), &big);
        let word: Vec<Elem> = vec![Elem(3), Elem(7), Elem(0), Elem(1), Elem(30)];
        let cw = spc.encode(&word).unwrap();
        assert!(spc.contains(&cw));
        assert_eq!(cw[5], word.iter().fold(Elem::ZERO, |a, &b| big.add(a, b)));
    }

    proptest! {
        #[test]
        fn grs_nesting(k in 1usize..6, extra in 1usize..4, seed in any::<u64>()) {
            let f = Field::new(16, 1).unwrap();
            let n = 9;
            let kk = (k + extra).min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<Elem> = (0..n).map(|_| Elem(rand::Rng::random_range(&mut rng, 1..16))).collect();
            let kappa = default_kappa(n);
            let small = LinearCode::grs(&f, k, &v, &kappa).unwrap();
            let large = LinearCode::grs(&f, kk, &v, &kappa).unwrap();
            let prod = large.parity_check().mul(&small.generator().transpose()).unwrap();
            prop_assert!(prod.is_zero());
        }

        #[test]
        fn grs_is_mds(n in 2usize..=8, k in 1usize..=8) {
            prop_assume!(k <= n);
            let c = LinearCode::grs_default(&Field::new(11, 1).unwrap(), n, k).unwrap();
            prop_assert!(c.is_mds());
        }

        #[test]
        fn hadamard_dimension_law(ka in 1usize..5, kb in 1usize..5) {
            let f = Field::new(11, 1).unwrap();
            let n = 9;
            let a = LinearCode::from_generator(LinearCode::grs_default(&f, n, ka).unwrap().generator().clone()).unwrap();
            let b = LinearCode::from_generator(LinearCode::grs_default(&f, n, kb).unwrap().generator().clone()).unwrap();
            prop_assert_eq!(a.hadamard(&b).unwrap().k(), ka + kb - 1);
        }
    }
}
