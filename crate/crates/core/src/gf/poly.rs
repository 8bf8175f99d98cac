//! Dense univariate polynomials over a [`Field`], coefficients low to high.

use super::{prime_factors, Elem, Field};

pub(crate) type Poly = Vec<Elem>;

pub(crate) fn trim(mut a: Poly) -> Poly {
    while a.last().is_some_and(|c| c.is_zero()) {
        a.pop();
    }
    a
}

pub(crate) fn degree(a: &[Elem]) -> Option<usize> {
    a.iter().rposition(|c| !c.is_zero())
}

pub(crate) fn sub(f: &Field, a: &[Elem], b: &[Elem]) -> Poly {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or_default();
            let y = b.get(i).copied().unwrap_or_default();
            f.sub(x, y)
        })
        .collect();
    trim(out)
}

pub(crate) fn add(f: &Field, a: &[Elem], b: &[Elem]) -> Poly {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or_default();
            let y = b.get(i).copied().unwrap_or_default();
            f.add(x, y)
        })
        .collect();
    trim(out)
}

pub(crate) fn mul(f: &Field, a: &[Elem], b: &[Elem]) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Elem::ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = f.add(out[i + j], f.mul(x, y));
        }
    }
    trim(out)
}

/// Quotient and remainder of `a / b`; `b` must be nonzero.
pub(crate) fn divrem(f: &Field, a: &[Elem], b: &[Elem]) -> (Poly, Poly) {
    let db = degree(b).expect("division by the zero polynomial");
    let lead_inv = f.inv(b[db]).expect("nonzero leading coefficient");
    let mut r = trim(a.to_vec());
    let Some(da) = degree(&r) else {
        return (Vec::new(), Vec::new());
    };
    if da < db {
        return (Vec::new(), r);
    }
    let mut q = vec![Elem::ZERO; da - db + 1];
    while let Some(dr) = degree(&r) {
        if dr < db {
            break;
        }
        let c = f.mul(r[dr], lead_inv);
        let shift = dr - db;
        q[shift] = c;
        for (i, &bi) in b[..=db].iter().enumerate() {
            r[shift + i] = f.sub(r[shift + i], f.mul(c, bi));
        }
        r = trim(r);
    }
    (trim(q), r)
}

pub(crate) fn rem(f: &Field, a: &[Elem], m: &[Elem]) -> Poly {
    divrem(f, a, m).1
}

pub(crate) fn mulmod(f: &Field, a: &[Elem], b: &[Elem], m: &[Elem]) -> Poly {
    rem(f, &mul(f, a, b), m)
}

pub(crate) fn powmod(f: &Field, a: &[Elem], mut e: u64, m: &[Elem]) -> Poly {
    let mut base = rem(f, a, m);
    let mut acc = rem(f, &[Elem::ONE], m);
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(f, &acc, &base, m);
        }
        base = mulmod(f, &base, &base, m);
        e >>= 1;
    }
    acc
}

/// Monic greatest common divisor.
pub(crate) fn gcd(f: &Field, a: &[Elem], b: &[Elem]) -> Poly {
    let (mut x, mut y) = (trim(a.to_vec()), trim(b.to_vec()));
    while !y.is_empty() {
        let r = rem(f, &x, &y);
        x = y;
        y = r;
    }
    monic(f, x)
}

pub(crate) fn monic(f: &Field, a: Poly) -> Poly {
    match degree(&a) {
        None => a,
        Some(d) => {
            let inv = f.inv(a[d]).expect("nonzero leading coefficient");
            a.into_iter().map(|c| f.mul(c, inv)).collect()
        }
    }
}

pub(crate) fn eval(f: &Field, a: &[Elem], x: Elem) -> Elem {
    a.iter()
        .rev()
        .fold(Elem::ZERO, |acc, &c| f.add(f.mul(acc, x), c))
}

/// Rabin's irreducibility test for a polynomial over `f`.
pub(crate) fn is_irreducible(f: &Field, a: &[Elem]) -> bool {
    let a = trim(a.to_vec());
    let Some(n) = degree(&a) else { return false };
    if n == 0 {
        return false;
    }
    if n == 1 {
        return true;
    }
    let x = vec![Elem::ZERO, Elem::ONE];
    let q = f.order();
    // frob[i] = x^(q^i) mod a
    let mut frob = vec![rem(f, &x, &a)];
    for _ in 0..n {
        let next = powmod(f, frob.last().unwrap(), q, &a);
        frob.push(next);
    }
    if frob[n] != frob[0] {
        return false;
    }
    prime_factors(n as u64).into_iter().all(|r| {
        let h = sub(f, &frob[n / r as usize], &x);
        degree(&gcd(f, &a, &h)) == Some(0)
    })
}

/// Lexicographically smallest monic irreducible of degree `d` over `f`,
/// ordered by the encoding of its lower coefficients.
pub(crate) fn smallest_irreducible(f: &Field, d: usize) -> Vec<u64> {
    let q = f.order();
    let mut code: u64 = 0;
    loop {
        let mut c = code;
        let mut coeffs: Vec<u64> = (0..d)
            .map(|_| {
                let r = c % q;
                c /= q;
                r
            })
            .collect();
        coeffs.push(1);
        let poly: Poly = coeffs.iter().map(|&v| Elem(v)).collect();
        if is_irreducible(f, &poly) {
            return coeffs;
        }
        code += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: u64, d: usize) -> Poly {
        (0..=d).map(|i| Elem((v >> i) & 1)).collect()
    }

    // Trial division by every monic polynomial of degree 1..=d/2.
    fn irreducible_by_trial(f: &Field, a: &[Elem]) -> bool {
        let n = degree(a).unwrap();
        for dd in 1..=n / 2 {
            let count = f.order().pow(dd as u32);
            for code in 0..count {
                let mut c = code;
                let mut div: Poly = (0..dd)
                    .map(|_| {
                        let r = c % f.order();
                        c /= f.order();
                        Elem(r)
                    })
                    .collect();
                div.push(Elem::ONE);
                if rem(f, a, &div).is_empty() {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn rabin_matches_trial_division_gf2() {
        let f = Field::prime(2);
        for d in 2..=8 {
            for low in 0..(1u64 << d) {
                let a = bits(low | (1 << d), d);
                assert_eq!(is_irreducible(&f, &a), irreducible_by_trial(&f, &a), "{a:?}");
            }
        }
    }

    #[test]
    fn rabin_matches_trial_division_gf3() {
        let f = Field::prime(3);
        for d in 2..=4usize {
            for code in 0..3u64.pow(d as u32) {
                let mut c = code;
                let mut a: Poly = (0..d)
                    .map(|_| {
                        let r = c % 3;
                        c /= 3;
                        Elem(r)
                    })
                    .collect();
                a.push(Elem::ONE);
                assert_eq!(is_irreducible(&f, &a), irreducible_by_trial(&f, &a));
            }
        }
    }

    #[test]
    fn count_of_irreducibles_matches_necklace_formula() {
        // Number of monic irreducibles of degree 6 over GF(2) is 9.
        let f = Field::prime(2);
        let count = (0..64u64)
            .filter(|&low| is_irreducible(&f, &bits(low | 64, 6)))
            .count();
        assert_eq!(count, 9);
    }

    #[test]
    fn divrem_reconstructs() {
        let f = Field::prime(7);
        let a: Poly = [3, 0, 5, 1, 6].iter().map(|&v| Elem(v)).collect();
        let b: Poly = [2, 4, 1].iter().map(|&v| Elem(v)).collect();
        let (q, r) = divrem(&f, &a, &b);
        assert_eq!(add(&f, &mul(&f, &q, &b), &r), a);
        assert!(degree(&r).is_none_or(|d| d < 2));
    }
}
