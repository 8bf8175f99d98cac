//! Finite fields GF(p^e) and dense linear algebra over them.
//!
//! A [`Field`] is built from a base order `q = p^m` and an extension degree
//! `delta`; it represents GF(q^delta) as polynomials over the prime field
//! GF(p) modulo a monic irreducible of degree `m * delta`. Elements are plain
//! [`Elem`] values (the base-`p` digits of the coefficient vector, constant
//! term least significant) and all arithmetic goes through the owning field:
//!
//! ```
//! use edgepir::gf::Field;
//!
//! let gf4 = Field::new(4, 1).unwrap();
//! let alpha = gf4.elem(2); // x
//! assert_eq!(gf4.mul(alpha, alpha), gf4.elem(3)); // x^2 = x + 1
//! ```
//!
//! Fields up to order 2^16 use log/exp tables; larger ones multiply
//! polynomials directly.

mod embed;
mod matrix;
pub(crate) mod poly;

pub use embed::Embedding;
pub use matrix::Matrix;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

/// Largest field order that gets log/exp tables.
const TABLE_LIMIT: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GfError {
    #[error("{0} is not a prime power")]
    NotPrimePower(u64),
    #[error("extension degree must be at least 1")]
    ZeroDegree,
    #[error("modulus must be monic of degree {expected} with coefficients below {p}")]
    BadModulus { expected: usize, p: u64 },
    #[error("modulus is reducible over GF({0})")]
    Reducible(u64),
    #[error("GF({p}^{degree}) does not fit the 63-bit element encoding")]
    TooLarge { p: u64, degree: u32 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("{small} is not a subfield of {big}")]
    NotSubfield { small: String, big: String },
    #[error("element is outside the embedded subfield")]
    NotInSubfield,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular")]
    Singular,
    #[error("linear system has no solution")]
    NoSolution,
    #[error("operands belong to different fields")]
    FieldMismatch,
}

/// A field element, encoded as the base-`p` digits of its polynomial
/// coefficients (constant term in the least significant digit).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Elem(pub u64);

impl Elem {
    pub const ZERO: Elem = Elem(0);
    pub const ONE: Elem = Elem(1);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

struct Tables {
    // exp is doubled so log(a) + log(b) never needs a reduction.
    exp: Vec<u32>,
    log: Vec<u32>,
}

struct Inner {
    p: u64,
    base_degree: u32,
    delta: u32,
    degree: u32,
    order: u64,
    modulus: Vec<u64>,
    tables: Option<Tables>,
}

/// GF(q^delta) with q = p^m. Cheap to clone; immutable once built.
#[derive(Clone)]
pub struct Field(Arc<Inner>);

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.p == other.0.p
                && self.0.degree == other.0.degree
                && self.0.modulus == other.0.modulus)
    }
}

impl Eq for Field {}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({}^{})", self.0.p, self.0.degree)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.degree == 1 {
            write!(f, "GF({})", self.0.p)
        } else {
            write!(f, "GF({}^{})", self.0.p, self.0.degree)
        }
    }
}

/// Splits `q` into `(p, m)` with `q = p^m`, `p` prime.
pub fn prime_power(q: u64) -> Result<(u64, u32), GfError> {
    if q < 2 {
        return Err(GfError::NotPrimePower(q));
    }
    let mut p = 0;
    let mut d = 2u64;
    while d.saturating_mul(d) <= q {
        if q % d == 0 {
            p = d;
            break;
        }
        d += 1;
    }
    if p == 0 {
        return Ok((q, 1));
    }
    let (mut rest, mut m) = (q, 0);
    while rest % p == 0 {
        rest /= p;
        m += 1;
    }
    if rest != 1 {
        return Err(GfError::NotPrimePower(q));
    }
    Ok((p, m))
}

fn checked_order(p: u64, degree: u32) -> Result<u64, GfError> {
    let mut order: u64 = 1;
    for _ in 0..degree {
        order = order
            .checked_mul(p)
            .filter(|&o| o <= 1 << 63)
            .ok_or(GfError::TooLarge { p, degree })?;
    }
    Ok(order)
}

impl Field {
    /// GF(q^delta) with the lexicographically smallest monic irreducible
    /// modulus of degree `m * delta` over GF(p).
    pub fn new(q: u64, delta: u32) -> Result<Field, GfError> {
        let (p, m) = prime_power(q)?;
        if delta == 0 {
            return Err(GfError::ZeroDegree);
        }
        let degree = m * delta;
        checked_order(p, degree)?;
        let prime = Field::prime(p);
        let modulus = if degree == 1 {
            vec![0, 1]
        } else {
            poly::smallest_irreducible(&prime, degree as usize)
        };
        Field::build(p, m, delta, modulus)
    }

    /// GF(q^delta) with an explicit modulus over GF(p) (coefficients from the
    /// constant term up; must be monic of degree `m * delta`).
    pub fn with_modulus(q: u64, delta: u32, modulus: &[u64]) -> Result<Field, GfError> {
        let (p, m) = prime_power(q)?;
        if delta == 0 {
            return Err(GfError::ZeroDegree);
        }
        let degree = m * delta;
        checked_order(p, degree)?;
        let bad = GfError::BadModulus {
            expected: degree as usize,
            p,
        };
        if modulus.len() != degree as usize + 1
            || modulus.last() != Some(&1)
            || modulus.iter().any(|&c| c >= p)
        {
            return Err(bad);
        }
        let prime = Field::prime(p);
        let f: Vec<Elem> = modulus.iter().map(|&c| Elem(c)).collect();
        if !poly::is_irreducible(&prime, &f) {
            return Err(GfError::Reducible(p));
        }
        Field::build(p, m, delta, modulus.to_vec())
    }

    /// The prime field GF(p). `p` must be prime; this is not re-checked.
    pub(crate) fn prime(p: u64) -> Field {
        Field::build(p, 1, 1, vec![0, 1]).expect("prime field")
    }

    fn build(p: u64, m: u32, delta: u32, modulus: Vec<u64>) -> Result<Field, GfError> {
        let degree = m * delta;
        let order = checked_order(p, degree)?;
        let mut inner = Inner {
            p,
            base_degree: m,
            delta,
            degree,
            order,
            modulus,
            tables: None,
        };
        if order <= TABLE_LIMIT && order > 2 {
            inner.tables = Some(build_tables(&inner));
        }
        Ok(Field(Arc::new(inner)))
    }

    pub fn characteristic(&self) -> u64 {
        self.0.p
    }

    /// Order of the base field GF(q) this field was built over.
    pub fn base_order(&self) -> u64 {
        self.0.p.pow(self.0.base_degree)
    }

    pub fn base_degree(&self) -> u32 {
        self.0.base_degree
    }

    /// Extension degree over the base field GF(q).
    pub fn delta(&self) -> u32 {
        self.0.delta
    }

    /// Degree over the prime field.
    pub fn degree(&self) -> u32 {
        self.0.degree
    }

    pub fn order(&self) -> u64 {
        self.0.order
    }

    /// Modulus coefficients over GF(p), constant term first.
    pub fn modulus(&self) -> &[u64] {
        &self.0.modulus
    }

    pub fn zero(&self) -> Elem {
        Elem::ZERO
    }

    pub fn one(&self) -> Elem {
        Elem::ONE
    }

    /// The element with encoding `v`. Panics if `v` is not below the order.
    pub fn elem(&self, v: u64) -> Elem {
        assert!(v < self.0.order, "{v} is not an element of {self}");
        Elem(v)
    }

    pub fn contains(&self, a: Elem) -> bool {
        a.0 < self.0.order
    }

    pub fn elements(&self) -> impl Iterator<Item = Elem> {
        (0..self.0.order).map(Elem)
    }

    pub fn nonzero_elements(&self) -> impl Iterator<Item = Elem> {
        (1..self.0.order).map(Elem)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Elem {
        Elem(rng.random_range(0..self.0.order))
    }

    /// Coefficients over GF(p), constant term first, `degree` entries.
    pub fn digits(&self, a: Elem) -> Vec<u64> {
        let p = self.0.p;
        let mut v = a.0;
        (0..self.0.degree)
            .map(|_| {
                let d = v % p;
                v /= p;
                d
            })
            .collect()
    }

    pub fn from_digits(&self, digits: &[u64]) -> Elem {
        let p = self.0.p;
        Elem(digits.iter().rev().fold(0u64, |acc, &d| acc * p + d))
    }

    pub fn add(&self, a: Elem, b: Elem) -> Elem {
        let p = self.0.p;
        if p == 2 {
            return Elem(a.0 ^ b.0);
        }
        if self.0.degree == 1 {
            let s = a.0 + b.0;
            return Elem(if s >= p { s - p } else { s });
        }
        let (mut x, mut y) = (a.0, b.0);
        let (mut out, mut place) = (0u64, 1u64);
        while x > 0 || y > 0 {
            let d = (x % p + y % p) % p;
            out += d * place;
            x /= p;
            y /= p;
            place = place.wrapping_mul(p);
        }
        Elem(out)
    }

    pub fn neg(&self, a: Elem) -> Elem {
        let p = self.0.p;
        if p == 2 {
            return a;
        }
        if self.0.degree == 1 {
            return Elem(if a.0 == 0 { 0 } else { p - a.0 });
        }
        let digits: Vec<u64> = self
            .digits(a)
            .into_iter()
            .map(|d| if d == 0 { 0 } else { p - d })
            .collect();
        self.from_digits(&digits)
    }

    pub fn sub(&self, a: Elem, b: Elem) -> Elem {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: Elem, b: Elem) -> Elem {
        if a.0 == 0 || b.0 == 0 {
            return Elem::ZERO;
        }
        if let Some(t) = &self.0.tables {
            let s = t.log[a.0 as usize] + t.log[b.0 as usize];
            return Elem(t.exp[s as usize] as u64);
        }
        mul_slow(&self.0, a.0, b.0)
    }

    pub fn inv(&self, a: Elem) -> Result<Elem, GfError> {
        if a.0 == 0 {
            return Err(GfError::ZeroInverse);
        }
        if let Some(t) = &self.0.tables {
            let n = self.0.order as u32 - 1;
            let l = t.log[a.0 as usize];
            return Ok(Elem(t.exp[((n - l) % n) as usize] as u64));
        }
        Ok(self.pow(a, self.0.order - 2))
    }

    pub fn div(&self, a: Elem, b: Elem) -> Result<Elem, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Elem, mut e: u64) -> Elem {
        let mut base = a;
        let mut acc = Elem::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Dot product of two equal-length slices.
    pub fn dot(&self, a: &[Elem], b: &[Elem]) -> Elem {
        a.iter()
            .zip(b)
            .fold(Elem::ZERO, |acc, (&x, &y)| self.add(acc, self.mul(x, y)))
    }
}

fn mul_slow(f: &Inner, a: u64, b: u64) -> Elem {
    let d = f.degree as usize;
    if f.p == 2 {
        let mut prod: u128 = 0;
        for i in 0..64 {
            if (b >> i) & 1 == 1 {
                prod ^= (a as u128) << i;
            }
        }
        let mut full: u128 = 0;
        for (i, &c) in f.modulus.iter().enumerate() {
            full |= (c as u128) << i;
        }
        for i in (d..(2 * d).max(d + 1)).rev() {
            if (prod >> i) & 1 == 1 {
                prod ^= full << (i - d);
            }
        }
        return Elem(prod as u64);
    }
    let p = f.p as u128;
    if d == 1 {
        return Elem(((a as u128 * b as u128) % p) as u64);
    }
    let split = |mut v: u64| -> Vec<u128> {
        (0..d)
            .map(|_| {
                let r = v % f.p;
                v /= f.p;
                r as u128
            })
            .collect()
    };
    let (x, y) = (split(a), split(b));
    let mut prod = vec![0u128; 2 * d - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0 {
            continue;
        }
        for (j, &yj) in y.iter().enumerate() {
            prod[i + j] = (prod[i + j] + xi * yj) % p;
        }
    }
    for i in (d..prod.len()).rev() {
        let c = prod[i];
        if c == 0 {
            continue;
        }
        for (k, &m) in f.modulus.iter().enumerate().take(d) {
            let t = i - d + k;
            prod[t] = (prod[t] + (p - c) * m as u128) % p;
        }
        prod[i] = 0;
    }
    let mut out: u64 = 0;
    for &c in prod[..d].iter().rev() {
        out = out * f.p + c as u64;
    }
    Elem(out)
}

fn build_tables(f: &Inner) -> Tables {
    let n = f.order - 1;
    let factors = prime_factors(n);
    let generator = (1..f.order)
        .find(|&g| {
            factors.iter().all(|&r| {
                let mut acc = 1u64;
                let mut base = g;
                let mut e = n / r;
                while e > 0 {
                    if e & 1 == 1 {
                        acc = mul_slow(f, acc, base).0;
                    }
                    base = mul_slow(f, base, base).0;
                    e >>= 1;
                }
                acc != 1
            })
        })
        .expect("multiplicative group is cyclic");
    let mut exp = vec![0u32; 2 * n as usize];
    let mut log = vec![0u32; f.order as usize];
    let mut x = 1u64;
    for i in 0..n as usize {
        exp[i] = x as u32;
        exp[i + n as usize] = x as u32;
        log[x as usize] = i as u32;
        x = mul_slow(f, x, generator).0;
    }
    Tables { exp, log }
}

pub(crate) fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_fields() -> Vec<Field> {
        vec![
            Field::new(2, 1).unwrap(),
            Field::new(3, 1).unwrap(),
            Field::new(5, 1).unwrap(),
            Field::new(7, 1).unwrap(),
            Field::new(4, 1).unwrap(),
            Field::new(2, 3).unwrap(),
            Field::new(2, 5).unwrap(),
            Field::new(9, 1).unwrap(),
            Field::new(3, 3).unwrap(),
            Field::new(4, 3).unwrap(),
            Field::new(2, 6).unwrap(),
        ]
    }

    #[test]
    fn prime_power_detection() {
        assert_eq!(prime_power(2), Ok((2, 1)));
        assert_eq!(prime_power(8), Ok((2, 3)));
        assert_eq!(prime_power(49), Ok((7, 2)));
        assert_eq!(prime_power(6), Err(GfError::NotPrimePower(6)));
        assert_eq!(prime_power(1), Err(GfError::NotPrimePower(1)));
        assert!(Field::new(12, 1).is_err());
    }

    #[test]
    fn worked_examples() {
        let gf2 = Field::new(2, 1).unwrap();
        assert_eq!(gf2.mul(Elem(1), Elem(1)), Elem(1));
        let gf5 = Field::new(5, 1).unwrap();
        assert_eq!(gf5.mul(Elem(3), Elem(4)), Elem(2));
        let gf4 = Field::with_modulus(4, 1, &[1, 1, 1]).unwrap();
        assert_eq!(gf4.mul(Elem(2), Elem(2)), Elem(3));
        let gf32 = Field::new(2, 5).unwrap();
        assert_eq!(gf32.order(), 32);
        // x^5 + x^2 + 1 is the smallest irreducible quintic over GF(2).
        assert_eq!(gf32.modulus(), &[1, 0, 1, 0, 0, 1]);
    }

    #[test]
    fn rejects_reducible_modulus() {
        // x^2 + 1 = (x + 1)^2 over GF(2)
        assert_eq!(
            Field::with_modulus(2, 2, &[1, 0, 1]),
            Err(GfError::Reducible(2)).map(|_: ()| unreachable!())
        );
        assert!(matches!(
            Field::with_modulus(2, 2, &[1, 1]),
            Err(GfError::BadModulus { .. })
        ));
    }

    #[test]
    fn inverse_of_zero_is_an_error() {
        let f = Field::new(7, 1).unwrap();
        assert_eq!(f.inv(Elem(0)), Err(GfError::ZeroInverse));
    }

    #[test]
    fn axioms_exhaustive_on_small_fields() {
        for f in small_fields() {
            if f.order() > 64 {
                continue;
            }
            for a in f.elements() {
                assert_eq!(f.add(a, f.neg(a)), Elem::ZERO);
                if !a.is_zero() {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), Elem::ONE, "{f:?} {a:?}");
                }
                for b in f.elements() {
                    assert_eq!(f.add(a, b), f.add(b, a));
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in f.elements().step_by(3) {
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn table_and_slow_paths_agree() {
        for f in small_fields() {
            if f.0.tables.is_none() {
                continue;
            }
            for a in f.elements() {
                for b in f.elements() {
                    assert_eq!(f.mul(a, b), mul_slow(&f.0, a.0, b.0));
                }
            }
        }
    }

    #[test]
    fn large_fields_have_inverses() {
        let big = Field::new(2, 61).unwrap();
        let odd = Field::new(3, 20).unwrap();
        let prime = Field::new(4_294_967_291, 1).unwrap();
        for f in [big, odd, prime] {
            for v in [1u64, 2, 3, 12345, f.order() - 1] {
                let a = f.elem(v);
                assert_eq!(f.mul(a, f.inv(a).unwrap()), Elem::ONE, "{f}");
            }
        }
        assert!(matches!(Field::new(2, 64), Err(GfError::TooLarge { .. })));
    }

    thread_local! {
        static GF2_40: Field = Field::new(2, 40).unwrap();
        static GF5_7: Field = Field::new(5, 7).unwrap();
    }

    proptest! {
        #[test]
        fn ring_laws_gf2_40(a in 0u64..(1 << 40), b in 0u64..(1 << 40), c in 0u64..(1 << 40)) {
            let f = GF2_40.with(Clone::clone);
            let (a, b, c) = (Elem(a), Elem(b), Elem(c));
            prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
            prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
        }

        #[test]
        fn ring_laws_gf5_7(a in 0u64..78125, b in 0u64..78125, c in 0u64..78125) {
            let f = GF5_7.with(Clone::clone);
            let (a, b, c) = (Elem(a), Elem(b), Elem(c));
            prop_assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
            prop_assert_eq!(f.sub(f.add(a, b), b), a);
            if !a.is_zero() {
                prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), Elem::ONE);
            }
        }
    }
}
