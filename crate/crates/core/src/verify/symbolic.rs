//! Polynomial and rational-function algebra in one variable `p`, used to
//! check the pmf identities behind the samplers without any numerics.

use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_traits::Zero;

/// Integer polynomial in `p`; `coeffs[i]` multiplies `p^i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<BigInt>,
}

impl Poly {
    pub fn constant(c: i64) -> Self {
        Poly::from_coeffs(vec![BigInt::from(c)])
    }

    /// `c · p^k`.
    pub fn monomial(c: i64, k: usize) -> Self {
        let mut coeffs = vec![BigInt::zero(); k + 1];
        coeffs[k] = BigInt::from(c);
        Poly::from_coeffs(coeffs)
    }

    /// `1 − p^k`.
    pub fn one_minus_pow(k: usize) -> Self {
        &Poly::constant(1) - &Poly::monomial(1, k)
    }

    /// `1 + p^k`.
    pub fn one_plus_pow(k: usize) -> Self {
        &Poly::constant(1) + &Poly::monomial(1, k)
    }

    fn from_coeffs(mut coeffs: Vec<BigInt>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }
}

impl Add for &Poly {
    type Output = Poly;

    fn add(self, o: &Poly) -> Poly {
        let len = self.coeffs.len().max(o.coeffs.len());
        let zero = BigInt::zero();
        let coeffs = (0..len)
            .map(|i| self.coeffs.get(i).unwrap_or(&zero) + o.coeffs.get(i).unwrap_or(&zero))
            .collect();
        Poly::from_coeffs(coeffs)
    }
}

impl Sub for &Poly {
    type Output = Poly;

    fn sub(self, o: &Poly) -> Poly {
        let len = self.coeffs.len().max(o.coeffs.len());
        let zero = BigInt::zero();
        let coeffs = (0..len)
            .map(|i| self.coeffs.get(i).unwrap_or(&zero) - o.coeffs.get(i).unwrap_or(&zero))
            .collect();
        Poly::from_coeffs(coeffs)
    }
}

impl Mul for &Poly {
    type Output = Poly;

    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::from_coeffs(vec![]);
        }
        let mut coeffs = vec![BigInt::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Poly::from_coeffs(coeffs)
    }
}

/// `num / den` with `den` not identically zero.
#[derive(Debug, Clone)]
pub struct RationalFn {
    num: Poly,
    den: Poly,
}

impl RationalFn {
    pub fn new(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "rational function with zero denominator");
        RationalFn { num, den }
    }

    pub fn poly(p: Poly) -> Self {
        RationalFn::new(p, Poly::constant(1))
    }

    pub fn zero() -> Self {
        RationalFn::poly(Poly::constant(0))
    }

    pub fn one() -> Self {
        RationalFn::poly(Poly::constant(1))
    }

    /// Equality as rational functions.
    pub fn same_as(&self, o: &RationalFn) -> bool {
        &self.num * &o.den == &o.num * &self.den
    }
}

impl Add for &RationalFn {
    type Output = RationalFn;

    fn add(self, o: &RationalFn) -> RationalFn {
        RationalFn::new(
            &(&self.num * &o.den) + &(&o.num * &self.den),
            &self.den * &o.den,
        )
    }
}

impl Mul for &RationalFn {
    type Output = RationalFn;

    fn mul(self, o: &RationalFn) -> RationalFn {
        RationalFn::new(&self.num * &o.num, &self.den * &o.den)
    }
}

fn rf(num: Poly, den: Poly) -> RationalFn {
    RationalFn::new(num, den)
}

/// `P[Geo(p) = t] = (1 − p)·p^t`.
fn geo(t: usize) -> RationalFn {
    RationalFn::poly(&Poly::one_minus_pow(1) * &Poly::monomial(1, t))
}

/// `P[DLap(p) = z] = (1 − p)·p^{|z|} / (1 + p)`.
fn dlap(z: i64) -> RationalFn {
    rf(
        &Poly::one_minus_pow(1) * &Poly::monomial(1, z.unsigned_abs() as usize),
        Poly::one_plus_pow(1),
    )
}

/// For `X ~ Geo(p^r)` on ℕ and `Y ~ Geo(p, [0, r−1])` independent, checks
/// `P[rX + Y = t] = (1 − p)·p^t` for `t ∈ [0, t_max]`.
pub fn check_geometric_decomposition(r: usize, t_max: usize) -> bool {
    assert!(r >= 1);
    let high = |x: usize| RationalFn::poly(&Poly::one_minus_pow(r) * &Poly::monomial(1, r * x));
    let low = |y: usize| {
        rf(
            &Poly::one_minus_pow(1) * &Poly::monomial(1, y),
            Poly::one_minus_pow(r),
        )
    };
    (0..=t_max).all(|t| {
        let mut total = RationalFn::zero();
        for x in 0..=t / r {
            for y in 0..r {
                if r * x + y == t {
                    total = &total + &(&high(x) * &low(y));
                }
            }
        }
        total.same_as(&geo(t))
    })
}

/// For `B ~ Bernoulli((1−p)/(1+p))`, a fair sign `S` and `G ~ Geo(p)`,
/// checks `P[1{B=0}·S·(1+G) = z] = P[DLap(p) = z]` for `|z| ≤ z_max`.
pub fn check_dlap_decomposition(z_max: i64) -> bool {
    let q = rf(Poly::one_minus_pow(1), Poly::one_plus_pow(1));
    let not_q = rf(Poly::monomial(2, 1), Poly::one_plus_pow(1));
    let half = rf(Poly::constant(1), Poly::constant(2));
    (-z_max..=z_max).all(|z| {
        let got = if z == 0 {
            q.clone()
        } else {
            &(&not_q * &half) * &geo(z.unsigned_abs() as usize - 1)
        };
        got.same_as(&dlap(z))
    })
}

/// Checks the sampler's block form: a zero outcome with mass
/// `(1−p)/(1+p)`, otherwise block `x` with mass `2p/(1+p)·(1−p^r)·p^{rx}`,
/// a fair sign, and an in-block offset `Y ~ Geo(p, [0, r−1])`, reproduce
/// the discrete Laplace pmf for `|z| ≤ z_max`.
pub fn check_block_decomposition(r: usize, z_max: i64) -> bool {
    assert!(r >= 1);
    let zero = rf(Poly::one_minus_pow(1), Poly::one_plus_pow(1));
    let block = |x: usize| {
        rf(
            &(&Poly::monomial(2, 1) * &Poly::one_minus_pow(r)) * &Poly::monomial(1, r * x),
            Poly::one_plus_pow(1),
        )
    };
    let low = |y: usize| {
        rf(
            &Poly::one_minus_pow(1) * &Poly::monomial(1, y),
            Poly::one_minus_pow(r),
        )
    };
    let half = rf(Poly::constant(1), Poly::constant(2));
    (-z_max..=z_max).all(|z| {
        let got = if z == 0 {
            zero.clone()
        } else {
            let m = z.unsigned_abs() as usize - 1;
            &(&block(m / r) * &low(m % r)) * &half
        };
        got.same_as(&dlap(z))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_arithmetic() {
        let a = Poly::one_minus_pow(1);
        let b = Poly::one_plus_pow(1);
        assert_eq!(&a * &b, Poly::one_minus_pow(2));
        assert_eq!((&a - &a).degree(), None);
        assert!(RationalFn::new(Poly::one_minus_pow(2), a.clone())
            .same_as(&RationalFn::poly(b.clone())));
        assert!(!RationalFn::poly(a).same_as(&RationalFn::poly(b)));
        assert!(RationalFn::one().same_as(&RationalFn::poly(Poly::constant(1))));
    }

    #[test]
    fn identities_hold() {
        for r in [1, 2, 4] {
            assert!(check_geometric_decomposition(r, 64));
            assert!(check_block_decomposition(r, 32));
        }
        assert!(check_dlap_decomposition(32));
    }

    #[test]
    fn wrong_identity_is_caught() {
        // Dropping the sign coin doubles every nonzero mass.
        let q = rf(Poly::one_minus_pow(1), Poly::one_plus_pow(1));
        let not_q = rf(Poly::monomial(2, 1), Poly::one_plus_pow(1));
        assert!(q.same_as(&dlap(0)));
        assert!(!(&not_q * &geo(0)).same_as(&dlap(1)));
    }
}
