use super::matrix::Matrix;
use super::poly::{self, Poly};
use super::{Elem, Field, GfError};

/// Exhaustive root search is used up to this field order.
const BRUTE_FORCE_LIMIT: u64 = 1 << 20;

/// Field embedding GF(p^a) -> GF(p^b) for a | b.
///
/// The image of the generator `x` of the small field is the smallest-encoded
/// root of its modulus in the big field, so the map is deterministic.
#[derive(Clone, Debug)]
pub struct Embedding {
    small: Field,
    big: Field,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Identity,
    Constant,
    General {
        basis: Vec<Elem>,
        pivots: Vec<usize>,
        inverse: Matrix,
    },
}

impl Embedding {
    pub fn new(small: &Field, big: &Field) -> Result<Embedding, GfError> {
        if small.characteristic() != big.characteristic() || big.degree() % small.degree() != 0 {
            return Err(GfError::NotSubfield {
                small: small.to_string(),
                big: big.to_string(),
            });
        }
        if small == big {
            return Ok(Embedding {
                small: small.clone(),
                big: big.clone(),
                kind: Kind::Identity,
            });
        }
        if small.degree() == 1 {
            return Ok(Embedding {
                small: small.clone(),
                big: big.clone(),
                kind: Kind::Constant,
            });
        }
        Embedding::from_root(small, big, smallest_root(small, big))
    }

    /// Embedding sending the generator `x` of `small` to `theta`, which must
    /// be a root of the modulus of `small` in `big`.
    pub fn from_root(small: &Field, big: &Field, theta: Elem) -> Result<Embedding, GfError> {
        if small.characteristic() != big.characteristic() || big.degree() % small.degree() != 0 {
            return Err(GfError::NotSubfield {
                small: small.to_string(),
                big: big.to_string(),
            });
        }
        let f: Poly = small.modulus().iter().map(|&c| Elem(c)).collect();
        if small.degree() > 1 && (!big.contains(theta) || !poly::eval(big, &f, theta).is_zero()) {
            return Err(GfError::NotInSubfield);
        }
        let kind = if small.degree() == 1 {
            Kind::Constant
        } else {
            let es = small.degree() as usize;
            let mut basis = Vec::with_capacity(es);
            let mut t = Elem::ONE;
            for _ in 0..es {
                basis.push(t);
                t = big.mul(t, theta);
            }
            let prime = Field::prime(big.characteristic());
            // Column i holds the prime-field digits of theta^i.
            let eb = big.degree() as usize;
            let mut b = Matrix::zeros(&prime, eb, es);
            for (i, &e) in basis.iter().enumerate() {
                for (r, d) in big.digits(e).into_iter().enumerate() {
                    b.set(r, i, Elem(d));
                }
            }
            let (_, pivots) = b.transpose().rref();
            let square = b.select_rows(&pivots);
            let inverse = square.invert().expect("basis of the embedded subfield");
            Kind::General {
                basis,
                pivots,
                inverse,
            }
        };
        Ok(Embedding {
            small: small.clone(),
            big: big.clone(),
            kind,
        })
    }

    pub fn small(&self) -> &Field {
        &self.small
    }

    pub fn big(&self) -> &Field {
        &self.big
    }

    pub fn embed(&self, x: Elem) -> Elem {
        match &self.kind {
            Kind::Identity | Kind::Constant => x,
            Kind::General { basis, .. } => {
                let digits = self.small.digits(x);
                basis
                    .iter()
                    .zip(digits)
                    .filter(|(_, d)| *d != 0)
                    .fold(Elem::ZERO, |acc, (&b, d)| {
                        self.big.add(acc, self.big.mul(b, Elem(d)))
                    })
            }
        }
    }

    /// Inverse of [`embed`](Self::embed) on its image.
    pub fn project(&self, y: Elem) -> Result<Elem, GfError> {
        let x = match &self.kind {
            Kind::Identity => return Ok(y),
            Kind::Constant => y,
            Kind::General {
                pivots, inverse, ..
            } => {
                let digits = self.big.digits(y);
                let rhs: Vec<Elem> = pivots.iter().map(|&r| Elem(digits[r])).collect();
                let sol = inverse.mul_vec(&rhs)?;
                let raw: Vec<u64> = sol.into_iter().map(|e| e.0).collect();
                self.small.from_digits(&raw)
            }
        };
        if self.small.contains(x) && self.embed(x) == y {
            Ok(x)
        } else {
            Err(GfError::NotInSubfield)
        }
    }
}

fn smallest_root(small: &Field, big: &Field) -> Elem {
    let f: Poly = small.modulus().iter().map(|&c| Elem(c)).collect();
    if big.order() <= BRUTE_FORCE_LIMIT {
        return big
            .elements()
            .find(|&x| poly::eval(big, &f, x).is_zero())
            .expect("modulus splits in the extension");
    }
    let mut roots = split(big, f);
    roots.sort();
    roots[0]
}

/// All roots of a squarefree polynomial that splits into linear factors.
fn split(f: &Field, a: Poly) -> Vec<Elem> {
    let a = poly::monic(f, a);
    let d = poly::degree(&a).unwrap_or(0);
    if d == 0 {
        return Vec::new();
    }
    if d == 1 {
        return vec![f.neg(a[0])];
    }
    let q = f.order();
    // Constants from a proper subfield give the same trace or quadratic
    // character at every conjugate root, so draw them from the whole field.
    for seed in 1u64.. {
        let c = Elem(splitmix(seed) % q);
        let h = if f.characteristic() == 2 {
            // Absolute trace of c*x modulo a.
            let mut s = poly::rem(f, &[Elem::ZERO, c], &a);
            let mut acc = s.clone();
            for _ in 1..f.degree() {
                s = poly::mulmod(f, &s, &s, &a);
                acc = poly::add(f, &acc, &s);
            }
            acc
        } else {
            let t = poly::powmod(f, &[c, Elem::ONE], (q - 1) / 2, &a);
            poly::sub(f, &t, &[Elem::ONE])
        };
        let g = poly::gcd(f, &a, &h);
        let dg = poly::degree(&g).unwrap_or(0);
        if dg > 0 && dg < d {
            let (other, _) = poly::divrem(f, &a, &g);
            let mut roots = split(f, g);
            roots.extend(split(f, other));
            return roots;
        }
    }
    unreachable!()
}

fn splitmix(seed: u64) -> u64 {
    let mut z = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
