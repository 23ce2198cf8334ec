//! Fixed-point probability oracles.
//!
//! Every transcendental quantity here is a function of `e^{-x}` for rational
//! `x`. We evaluate it as a rigorous interval `[lo, hi] / 2^P` (Taylor series
//! on a halved argument with an explicit alternating-series remainder, then
//! repeated squaring with outward rounding), and read off the ℓ-bit
//! truncation only once both interval ends agree on it. If they do not, the
//! guard bits are doubled and the interval recomputed.
//!
//! All outputs are truncated toward zero: `0 ≤ true − returned < 2^{-ℓ}`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Initial guard bits for certified truncation.
pub const GUARD_BITS: u32 = 32;
/// Guard bits are doubled up to this cap before giving up.
pub const MAX_GUARD_BITS: u32 = 1 << 14;

/// A positive rational `num / den` with word-sized parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RationalParam {
    num: u64,
    den: u64,
}

impl RationalParam {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(invalid(format!("rational {num}/{den} must have positive parts")));
        }
        Ok(RationalParam { num, den })
    }

    pub fn integer(v: u64) -> Result<Self> {
        Self::new(v, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn to_ratio(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }

    /// Strictly inside `(0, 1)`.
    pub fn is_proper_fraction(&self) -> bool {
        self.num < self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `self / 2^k`, failing when the denominator leaves the word.
    pub fn halved(&self, k: u32) -> Result<Self> {
        let den = u128::from(self.den) << k.min(127);
        if k >= 64 || den > u128::from(u64::MAX) {
            return Err(Error::Overflow(format!("{self} / 2^{k} does not fit in a word")));
        }
        let g = self.num.gcd(&(den as u64));
        Self::new(self.num / g, den as u64 / g)
    }

    /// `self · k`, failing when the numerator leaves the word.
    pub fn scaled(&self, k: u64) -> Result<Self> {
        let g = k.gcd(&self.den);
        let num = self
            .num
            .checked_mul(k / g)
            .ok_or_else(|| Error::Overflow(format!("{self} · {k} does not fit in a word")))?;
        Self::new(num, self.den / g)
    }

    pub fn product(&self, other: &RationalParam) -> Result<Self> {
        let num = u128::from(self.num) * u128::from(other.num);
        let den = u128::from(self.den) * u128::from(other.den);
        let g = num.gcd(&den);
        let (num, den) = (num / g, den / g);
        if num > u128::from(u64::MAX) || den > u128::from(u64::MAX) {
            return Err(Error::Overflow(format!("{self} · {other} does not fit in a word")));
        }
        Self::new(num as u64, den as u64)
    }

    pub fn quotient_by(&self, k: u64) -> Result<Self> {
        let den = u128::from(self.den) * u128::from(k);
        let g = u128::from(self.num).gcd(&den);
        let (num, den) = (u128::from(self.num) / g, den / g);
        if den > u128::from(u64::MAX) {
            return Err(Error::Overflow(format!("{self} / {k} does not fit in a word")));
        }
        Self::new(num as u64, den as u64)
    }
}

impl fmt::Display for RationalParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for RationalParam {
    type Err = Error;

    /// Parses `"a/b"` or a bare integer `"a"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (a, b) = match s.split_once('/') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (s, "1"),
        };
        let parse = |x: &str| {
            x.parse::<u64>()
                .map_err(|_| invalid(format!("`{s}` is not a rational of the form a/b")))
        };
        Self::new(parse(a)?, parse(b)?)
    }
}

impl Serialize for RationalParam {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// An ℓ-bit binary fraction `mantissa / 2^frac_bits` in `[0, 1]`, truncated
/// toward zero from the quantity it approximates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FixedProb {
    mantissa: BigUint,
    frac_bits: u32,
}

impl FixedProb {
    pub fn new(mantissa: BigUint, frac_bits: u32) -> Result<Self> {
        if mantissa > BigUint::one() << frac_bits {
            return Err(invalid(format!(
                "mantissa {mantissa} exceeds 2^{frac_bits}"
            )));
        }
        Ok(FixedProb { mantissa, frac_bits })
    }

    pub fn one(frac_bits: u32) -> Self {
        FixedProb {
            mantissa: BigUint::one() << frac_bits,
            frac_bits,
        }
    }

    pub fn zero(frac_bits: u32) -> Self {
        FixedProb {
            mantissa: BigUint::zero(),
            frac_bits,
        }
    }

    pub fn mantissa(&self) -> &BigUint {
        &self.mantissa
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn to_ratio(&self) -> BigRational {
        dyadic(&self.mantissa, self.frac_bits)
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa.to_f64().unwrap_or(f64::INFINITY) / 2f64.powi(self.frac_bits as i32)
    }
}

/// `m / 2^bits` as an exact rational.
pub fn dyadic(m: &BigUint, bits: u32) -> BigRational {
    BigRational::new(BigInt::from(m.clone()), BigInt::one() << bits)
}

/// Smallest integer `e` with `2^e ≥ x`, for `x > 0`.
pub fn ceil_log2(x: &BigRational) -> i64 {
    assert!(x.is_positive(), "ceil_log2 of a non-positive value");
    let (a, b) = (x.numer().magnitude(), x.denom().magnitude());
    let covers = |e: i64| -> bool {
        if e >= 0 {
            (b << e as usize) >= *a
        } else {
            *b >= (a << (-e) as usize)
        }
    };
    let mut e = a.bits() as i64 - b.bits() as i64;
    while !covers(e) {
        e += 1;
    }
    while covers(e - 1) {
        e -= 1;
    }
    e
}

/// `⌊x · 2^bits⌋ / 2^bits` for `x ≥ 0`.
pub fn floor_dyadic(x: &BigRational, bits: u32) -> BigRational {
    let scaled = x.numer() * (BigInt::one() << bits);
    let m = scaled.div_floor(x.denom());
    BigRational::new(m, BigInt::one() << bits)
}

/// `⌈x · 2^bits⌉ / 2^bits` for `x ≥ 0`.
pub fn ceil_dyadic(x: &BigRational, bits: u32) -> BigRational {
    let scaled = x.numer() * (BigInt::one() << bits);
    let m = scaled.div_ceil(x.denom());
    BigRational::new(m, BigInt::one() << bits)
}

// ---------------------------------------------------------------------------
// Interval arithmetic on nonnegative fixed-point values
// ---------------------------------------------------------------------------

/// `[lo, hi] / 2^prec`, both ends nonnegative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Interval {
    pub lo: BigUint,
    pub hi: BigUint,
    pub prec: u32,
}

fn ceil_div(a: &BigUint, b: &BigUint) -> BigUint {
    let (q, r) = a.div_rem(b);
    if r.is_zero() {
        q
    } else {
        q + 1u32
    }
}

fn ceil_shr(a: &BigUint, k: u32) -> BigUint {
    let q = a >> k;
    if (&q << k) == *a {
        q
    } else {
        q + 1u32
    }
}

impl Interval {
    pub fn exact_one(prec: u32) -> Self {
        let one = BigUint::one() << prec;
        Interval {
            lo: one.clone(),
            hi: one,
            prec,
        }
    }

    fn unit(&self) -> BigUint {
        BigUint::one() << self.prec
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        debug_assert_eq!(self.prec, o.prec);
        Interval {
            lo: (&self.lo * &o.lo) >> self.prec,
            hi: ceil_shr(&(&self.hi * &o.hi), self.prec),
            prec: self.prec,
        }
    }

    pub fn div(&self, o: &Interval) -> Interval {
        debug_assert_eq!(self.prec, o.prec);
        assert!(!o.lo.is_zero(), "interval division by an interval touching zero");
        Interval {
            lo: (&self.lo << self.prec) / &o.hi,
            hi: ceil_div(&(&self.hi << self.prec), &o.lo),
            prec: self.prec,
        }
    }

    /// `1 − self`; requires `self ≤ 1`.
    pub fn one_minus(&self) -> Interval {
        let one = self.unit();
        let hi = self.hi.clone().min(one.clone());
        Interval {
            lo: &one - hi,
            hi: &one - self.lo.clone().min(one.clone()),
            prec: self.prec,
        }
    }

    pub fn one_plus(&self) -> Interval {
        let one = self.unit();
        Interval {
            lo: &one + &self.lo,
            hi: &one + &self.hi,
            prec: self.prec,
        }
    }

    pub fn scale(&self, k: u64) -> Interval {
        Interval {
            lo: &self.lo * k,
            hi: &self.hi * k,
            prec: self.prec,
        }
    }

    pub fn lower_ratio(&self) -> BigRational {
        dyadic(&self.lo, self.prec)
    }

    pub fn upper_ratio(&self) -> BigRational {
        dyadic(&self.hi, self.prec)
    }
}

/// Rigorous enclosure of `e^{-num/den}` at `prec` fractional bits.
pub(crate) fn exp_neg_interval(num: &BigUint, den: &BigUint, prec: u32) -> Interval {
    assert!(!den.is_zero());
    if num.is_zero() {
        return Interval::exact_one(prec);
    }
    // Halve the argument until y = num / (den·2^s) ≤ 1/2.
    let two_num: BigUint = num << 1u32;
    let mut s = (two_num.bits() as i64 - den.bits() as i64).max(0) as u32;
    while (den << s) < two_num {
        s += 1;
    }
    while s > 0 && (den << (s - 1)) >= two_num {
        s -= 1;
    }
    let w = prec + s + 8;
    let d: BigUint = den << s;
    let unit = BigUint::one() << w;

    // Alternating Taylor series with lower/upper term chains.
    let mut t_lo = unit.clone();
    let mut t_hi = unit.clone();
    let mut s_lo = BigInt::from(unit.clone());
    let mut s_hi = BigInt::from(unit.clone());
    let mut k: u64 = 0;
    loop {
        k += 1;
        let dk = &d * k;
        t_lo = (&t_lo * num) / &dk;
        t_hi = ceil_div(&(&t_hi * num), &dk);
        if k % 2 == 1 {
            s_lo -= BigInt::from(t_hi.clone());
            s_hi -= BigInt::from(t_lo.clone());
        } else {
            s_lo += BigInt::from(t_lo.clone());
            s_hi += BigInt::from(t_hi.clone());
        }
        if t_hi <= BigUint::one() {
            let rem = ceil_div(&(&t_hi * num), &(&d * (k + 1)));
            let rem = BigInt::from(rem);
            s_lo -= &rem;
            s_hi += &rem;
            break;
        }
    }
    let clamp = |v: BigInt| -> BigUint {
        if v.is_negative() {
            BigUint::zero()
        } else {
            v.to_biguint().expect("nonnegative").min(unit.clone())
        }
    };
    let mut lo = clamp(s_lo);
    let mut hi = clamp(s_hi);

    for _ in 0..s {
        lo = (&lo * &lo) >> w;
        hi = ceil_shr(&(&hi * &hi), w).min(unit.clone());
    }
    Interval {
        lo: lo >> (w - prec),
        hi: ceil_shr(&hi, w - prec),
        prec,
    }
}

fn exp_neg_param(eps: &RationalParam, t: u64, prec: u32) -> Interval {
    let num = BigUint::from(eps.num) * t;
    exp_neg_interval(&num, &BigUint::from(eps.den), prec)
}

fn exp_neg_rational(x: &BigRational, prec: u32) -> Interval {
    assert!(!x.is_negative(), "exp_neg of a negative argument");
    exp_neg_interval(
        x.numer().magnitude(),
        x.denom().magnitude(),
        prec,
    )
}

/// Truncates the quantity enclosed by `f(prec)` to `ell` bits, doubling the
/// guard bits until the enclosure pins the truncation down.
pub(crate) fn certify_floor<F>(what: &'static str, ell: u32, f: F) -> Result<FixedProb>
where
    F: Fn(u32) -> Interval,
{
    let mut g = GUARD_BITS;
    while g <= MAX_GUARD_BITS {
        let iv = f(ell + g);
        let lo = &iv.lo >> g;
        let hi = &iv.hi >> g;
        if lo == hi {
            return FixedProb::new(lo, ell);
        }
        g *= 2;
    }
    Err(Error::PrecisionExhausted {
        what,
        max_guard_bits: MAX_GUARD_BITS,
    })
}

/// Compares the quantity enclosed by `f` against an exact rational.
pub(crate) fn certify_cmp<F>(what: &'static str, c: &BigRational, f: F) -> Result<Ordering>
where
    F: Fn(u32) -> Interval,
{
    let mut prec = 64u32;
    while prec <= MAX_GUARD_BITS {
        let iv = f(prec);
        let lo = iv.lower_ratio();
        let hi = iv.upper_ratio();
        if hi < *c {
            return Ok(Ordering::Less);
        }
        if lo > *c {
            return Ok(Ordering::Greater);
        }
        if lo == hi && lo == *c {
            return Ok(Ordering::Equal);
        }
        prec *= 2;
    }
    Err(Error::PrecisionExhausted {
        what,
        max_guard_bits: MAX_GUARD_BITS,
    })
}

// ---------------------------------------------------------------------------
// Probability enclosures
// ---------------------------------------------------------------------------

/// `(1−p)/(1+p) · p^{|t|}` with `p = e^{-ε}`.
pub(crate) fn dlap_pmf_interval(eps: &RationalParam, t: i64, prec: u32) -> Interval {
    let p = exp_neg_param(eps, 1, prec);
    let head = p.one_minus().div(&p.one_plus());
    if t == 0 {
        return head;
    }
    head.mul(&exp_neg_param(eps, t.unsigned_abs(), prec))
}

/// `(1−p)/(1−p^{1+u}) · p^t` with `p = e^{-x}`; `u = None` is the infinite support.
pub(crate) fn geo_pmf_interval(x: &RationalParam, t: u64, u: Option<u64>, prec: u32) -> Interval {
    if u == Some(0) {
        return Interval::exact_one(prec);
    }
    let p = exp_neg_param(x, 1, prec);
    let mut head = p.one_minus();
    if let Some(u) = u {
        let tail = exp_neg_param(x, u + 1, prec);
        head = head.div(&tail.one_minus());
    }
    if t == 0 {
        head
    } else {
        head.mul(&exp_neg_param(x, t, prec))
    }
}

/// `2 p^t / (1+p)` with `p = e^{-ε}`.
pub(crate) fn dlap_tail_interval(eps: &RationalParam, t: u64, prec: u32) -> Interval {
    let p = exp_neg_param(eps, 1, prec);
    exp_neg_param(eps, t, prec).scale(2).div(&p.one_plus())
}

/// Law of the block index of a discrete Laplace magnitude.
///
/// With `p = e^{-ε}`, `Z ~ DLap(p)` and blocks of width `r`: the outcome
/// `None` is `Z = 0`, with mass `(1−p)/(1+p)`; the outcome `Some(x)` is
/// `|Z| − 1 ∈ [r·x, r·x + r)`, with mass `2p/(1+p) · (1−p^r) · p^{r·x}`.
pub(crate) fn laplace_block_interval(
    eps: &RationalParam,
    r: u64,
    block: Option<u64>,
    prec: u32,
) -> Interval {
    let p = exp_neg_param(eps, 1, prec);
    match block {
        None => p.one_minus().div(&p.one_plus()),
        Some(x) => {
            let nonzero = p.scale(2).div(&p.one_plus());
            let first = exp_neg_param(eps, r, prec).one_minus();
            let mut v = nonzero.mul(&first);
            if x > 0 {
                v = v.mul(&exp_neg_param(eps, r * x, prec));
            }
            v
        }
    }
}

/// Mass beyond block `x`: `2p/(1+p) · p^{r(x+1)}`.
pub(crate) fn laplace_block_tail_interval(
    eps: &RationalParam,
    r: u64,
    x: u64,
    prec: u32,
) -> Interval {
    let p = exp_neg_param(eps, 1, prec);
    p.scale(2)
        .div(&p.one_plus())
        .mul(&exp_neg_param(eps, r * (x + 1), prec))
}

// ---------------------------------------------------------------------------
// Public oracles
// ---------------------------------------------------------------------------

/// `e^{-ε·t}` truncated toward zero to `ell` fractional bits.
pub fn exp_neg(eps: &RationalParam, t: u64, ell: u32) -> Result<FixedProb> {
    if t == 0 {
        return Ok(FixedProb::one(ell));
    }
    certify_floor("exp_neg", ell, |prec| exp_neg_param(eps, t, prec))
}

/// `e^{-x}` for an arbitrary nonnegative rational, truncated to `ell` bits.
pub fn exp_neg_ratio(x: &BigRational, ell: u32) -> Result<FixedProb> {
    if x.is_negative() {
        return Err(invalid("exp_neg_ratio: negative argument"));
    }
    if x.is_zero() {
        return Ok(FixedProb::one(ell));
    }
    certify_floor("exp_neg", ell, |prec| exp_neg_rational(x, prec))
}

/// `P[DLap(e^{-ε}) = t]` truncated to `ell` bits.
pub fn dlap_pmf(eps: &RationalParam, t: i64, ell: u32) -> Result<FixedProb> {
    certify_floor("dlap_pmf", ell, |prec| dlap_pmf_interval(eps, t, prec))
}

/// `P[Geo(e^{-x}, [0, u]) = t]` truncated to `ell` bits; `u = None` is ∞.
pub fn geo_pmf(x: &RationalParam, t: u64, u: Option<u64>, ell: u32) -> Result<FixedProb> {
    if let Some(u) = u {
        if t > u {
            return Err(invalid(format!("geo_pmf: t = {t} outside [0, {u}]")));
        }
        if u == 0 {
            return Ok(FixedProb::one(ell));
        }
    }
    certify_floor("geo_pmf", ell, |prec| geo_pmf_interval(x, t, u, prec))
}

/// `P[|DLap(e^{-ε})| ≥ t] = 2e^{-εt}/(1+e^{-ε})` truncated to `ell` bits.
pub fn dlap_tail(eps: &RationalParam, t: u64, ell: u32) -> Result<FixedProb> {
    if t == 0 {
        return Err(invalid("dlap_tail requires t ≥ 1"));
    }
    certify_floor("dlap_tail", ell, |prec| dlap_tail_interval(eps, t, prec))
}

/// Block-index mass of a discrete Laplace magnitude, truncated to `ell` bits.
pub fn laplace_block_pmf(
    eps: &RationalParam,
    r: u64,
    block: Option<u64>,
    ell: u32,
) -> Result<FixedProb> {
    certify_floor("laplace_block_pmf", ell, |prec| {
        laplace_block_interval(eps, r, block, prec)
    })
}

/// Compares `e^{-x}` with the rational `c`.
pub fn cmp_exp_neg(x: &BigRational, c: &BigRational) -> Result<Ordering> {
    if x.is_zero() {
        return Ok(BigRational::one().cmp(c));
    }
    certify_cmp("exp_neg comparison", c, |prec| exp_neg_rational(x, prec))
}

/// `e^{-x} ≤ c`.
pub fn exp_neg_at_most(x: &BigRational, c: &BigRational) -> Result<bool> {
    Ok(cmp_exp_neg(x, c)? != Ordering::Greater)
}

/// Smallest `k ≥ lo` with `pred(k)` for a monotone predicate (false…false,
/// true…true). Gallops, then bisects.
pub(crate) fn first_true<P>(lo: u64, mut pred: P) -> Result<u64>
where
    P: FnMut(u64) -> Result<bool>,
{
    if pred(lo)? {
        return Ok(lo);
    }
    let mut bad = lo;
    let mut step = 1u64;
    let mut good = loop {
        let probe = bad
            .checked_add(step)
            .ok_or_else(|| Error::Overflow("monotone search ran past u64".into()))?;
        if pred(probe)? {
            break probe;
        }
        bad = probe;
        step = step.saturating_mul(2);
    };
    while good - bad > 1 {
        let mid = bad + (good - bad) / 2;
        if pred(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

/// Smallest `L ≥ 1` with `2e^{-εL}/(1+e^{-ε}) ≤ bound`, i.e.
/// `⌈(1/ε)·ln(2/((1+e^{-ε})·bound))⌉` computed without logarithms.
pub fn dlap_tail_index(eps: &RationalParam, bound: &BigRational) -> Result<u64> {
    first_true(1, |l| {
        Ok(certify_cmp("dlap tail comparison", bound, |prec| {
            dlap_tail_interval(eps, l, prec)
        })? != Ordering::Greater)
    })
}

/// Smallest `u ≥ 0` with `e^{-x(u+1)} ≤ bound`: the shortest prefix
/// `[0, u]` of `Geo(e^{-x})` leaving at most `bound` mass outside.
pub fn geo_core_bound(x: &RationalParam, bound: &BigRational) -> Result<u64> {
    let xr = x.to_ratio();
    first_true(0, |u| {
        let arg = &xr * BigRational::from_integer(BigInt::from(u + 1));
        exp_neg_at_most(&arg, bound)
    })
}

/// Smallest `u ≥ 0` with the block tail beyond `u` at most `bound`.
pub fn laplace_block_core_bound(eps: &RationalParam, r: u64, bound: &BigRational) -> Result<u64> {
    first_true(0, |u| {
        Ok(certify_cmp("block tail comparison", bound, |prec| {
            laplace_block_tail_interval(eps, r, u, prec)
        })? != Ordering::Greater)
    })
}

/// Lower bound on `(e^ε − 1)/(e^ε + 1) = (1 − e^{-ε})/(1 + e^{-ε})`.
pub fn dlap_center_lower(eps: &RationalParam, prec: u32) -> BigRational {
    let p = exp_neg_param(eps, 1, prec);
    p.one_minus().div(&p.one_plus()).lower_ratio()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rp(a: u64, b: u64) -> RationalParam {
        RationalParam::new(a, b).unwrap()
    }

    fn ratio(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn parse_rationals() {
        assert_eq!("3/10".parse::<RationalParam>().unwrap(), rp(3, 10));
        assert_eq!("7".parse::<RationalParam>().unwrap(), rp(7, 1));
        assert!("0/1".parse::<RationalParam>().is_err());
        assert!("1/0".parse::<RationalParam>().is_err());
        assert!("0.5".parse::<RationalParam>().is_err());
        assert!("-1/2".parse::<RationalParam>().is_err());
        assert_eq!(rp(3, 10).to_string(), "3/10");
    }

    #[test]
    fn rational_word_arithmetic() {
        assert_eq!(rp(1, 1).halved(3).unwrap(), rp(1, 8));
        assert_eq!(rp(2, 3).halved(1).unwrap(), rp(1, 3));
        assert!(rp(1, u64::MAX).halved(1).is_err());
        assert_eq!(rp(1, 4).scaled(8).unwrap(), rp(2, 1));
        assert_eq!(rp(1, 2).product(&rp(2, 3)).unwrap(), rp(1, 3));
        assert_eq!(rp(3, 4).quotient_by(6).unwrap(), rp(1, 8));
    }

    #[test]
    fn ceil_log2_of_rationals() {
        assert_eq!(ceil_log2(&ratio(1000, 1)), 10);
        assert_eq!(ceil_log2(&ratio(1024, 1)), 10);
        assert_eq!(ceil_log2(&ratio(1025, 1)), 11);
        assert_eq!(ceil_log2(&ratio(1, 4)), -2);
        assert_eq!(ceil_log2(&ratio(1, 3)), -1);
        assert_eq!(ceil_log2(&ratio(10, 3)), 2);
        assert_eq!(ceil_log2(&ratio(1, 1)), 0);
    }

    #[test]
    fn exp_neg_of_zero_is_one() {
        let v = exp_neg(&rp(5, 3), 0, 12).unwrap();
        assert_eq!(v.mantissa(), &(BigUint::one() << 12u32));
    }

    #[test]
    fn exp_neg_one_at_sixteen_bits() {
        let v = exp_neg(&rp(1, 1), 1, 16).unwrap().to_f64();
        let e1 = (-1.0f64).exp();
        assert!(v <= e1 && e1 - v <= 2f64.powi(-16), "{v}");
        // Frozen: ⌊e^{-1} · 2^16⌋.
        assert_eq!(exp_neg(&rp(1, 1), 1, 16).unwrap().mantissa(), &BigUint::from(24109u32));
    }

    #[test]
    fn exponent_identity() {
        let a = exp_neg(&rp(2, 1), 3, 20).unwrap();
        let b = exp_neg(&rp(1, 1), 6, 20).unwrap();
        // Both are the truncation of the same real number.
        assert_eq!(a, b);
        let c = exp_neg(&rp(1, 3), 3, 40).unwrap();
        let d = exp_neg(&rp(1, 1), 1, 40).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn dlap_center_mass() {
        let v = dlap_pmf(&rp(7, 10), 0, 40).unwrap().to_f64();
        let p = (-0.7f64).exp();
        let exact = (1.0 - p) / (1.0 + p);
        assert!((v - exact).abs() < 1e-11);
        assert!((v - 0.33638).abs() < 1e-5);
    }

    #[test]
    fn dlap_pmf_symmetric() {
        for t in 1..20 {
            assert_eq!(
                dlap_pmf(&rp(3, 7), t, 33).unwrap(),
                dlap_pmf(&rp(3, 7), -t, 33).unwrap()
            );
        }
    }

    #[test]
    fn dlap_pmf_sums_close_to_one() {
        let eps = rp(1, 1);
        let ell = 30;
        let mut sum = BigRational::zero();
        for t in -40..=40 {
            sum += dlap_pmf(&eps, t, ell).unwrap().to_ratio();
        }
        let e = std::f64::consts::E;
        let tail41 = 2.0 * e.powi(-41) / (1.0 + 1.0 / e);
        let lower = 1.0 - 81.0 * 2f64.powi(-30) - tail41;
        let s = sum.to_f64().unwrap();
        assert!(s <= 1.0 && s >= lower, "{s}");
    }

    #[test]
    fn geo_pmf_cases() {
        assert_eq!(geo_pmf(&rp(7, 10), 0, Some(0), 9).unwrap(), FixedProb::one(9));
        let v = geo_pmf(&rp(7, 10), 0, None, 40).unwrap().to_f64();
        assert!((v - (1.0 - (-0.7f64).exp())).abs() < 1e-11);
        assert!((v - 0.50341).abs() < 1e-5);
        assert!(geo_pmf(&rp(1, 1), 5, Some(3), 9).is_err());
        // Finite support masses sum to just under one.
        let mut sum = BigRational::zero();
        for t in 0..=7 {
            sum += geo_pmf(&rp(1, 3), t, Some(7), 24).unwrap().to_ratio();
        }
        let slack = BigRational::from_integer(8.into()) / BigRational::from_integer(BigInt::one() << 24);
        assert!(sum <= BigRational::one());
        assert!(sum >= BigRational::one() - slack);
    }

    #[test]
    fn dlap_tail_values() {
        let v = dlap_tail(&rp(1, 1), 1, 40).unwrap().to_f64();
        let e1 = (-1.0f64).exp();
        assert!((v - 2.0 * e1 / (1.0 + e1)).abs() < 1e-11);
        assert!((v - 0.53788).abs() < 1e-5);
        let mut prev = dlap_tail(&rp(1, 2), 1, 50).unwrap();
        for t in 2..30 {
            let cur = dlap_tail(&rp(1, 2), t, 50).unwrap();
            assert!(cur.mantissa() < prev.mantissa());
            prev = cur;
        }
        assert!(dlap_tail(&rp(1, 1), 0, 10).is_err());
    }

    #[test]
    fn tail_index_matches_formula() {
        // ε = 1, δ = 1/100: ⌈ln(4/((1+e^{-1})·0.01))⌉ = 6.
        let bound = ratio(1, 200);
        assert_eq!(dlap_tail_index(&rp(1, 1), &bound).unwrap(), 6);
        // Geometric: smallest u with e^{-(u+1)} ≤ 1/300 is 5.
        assert_eq!(geo_core_bound(&rp(1, 1), &ratio(1, 300)).unwrap(), 5);
    }

    #[test]
    fn exp_comparisons() {
        let one = ratio(1, 1);
        assert_eq!(cmp_exp_neg(&one, &ratio(3, 8)).unwrap(), Ordering::Less);
        assert_eq!(cmp_exp_neg(&one, &ratio(3678, 10000)).unwrap(), Ordering::Greater);
        assert_eq!(cmp_exp_neg(&BigRational::zero(), &one).unwrap(), Ordering::Equal);
    }

    #[test]
    fn first_true_finds_boundary() {
        for b in [0u64, 1, 2, 3, 17, 1000, 65_537] {
            assert_eq!(first_true(0, |k| Ok(k >= b)).unwrap(), b);
        }
    }

    #[test]
    fn dyadic_rounding() {
        let x = ratio(1, 3);
        assert_eq!(floor_dyadic(&x, 4), ratio(5, 16));
        assert_eq!(ceil_dyadic(&x, 4), ratio(6, 16));
        assert_eq!(floor_dyadic(&ratio(1, 2), 4), ratio(1, 2));
    }
}
