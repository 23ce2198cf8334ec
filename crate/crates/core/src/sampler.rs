//! Time-oblivious discrete Laplace noise and the purified count mechanism.
//!
//! A sample `Z ~ DLap(e^{-ε})` is assembled from three independent pieces:
//!
//! * `W`, drawn from an alias table over `{zero} ∪ ℕ`: either `Z = 0`, or the
//!   block index of `|Z| − 1` in blocks of width `r`;
//! * a sign bit `S`;
//! * `Y ~ Geo(e^{-ε}, [0, r−1])`, the offset inside the block.
//!
//! `Z = 1{W ≠ zero} · S · (1 + r·W + Y)`. Given `Z ≠ 0`, `|Z| − 1` is
//! geometric, and a geometric variable splits exactly into an independent
//! block index `Geo(e^{-rε})` and an in-block offset, so the only error is the
//! truncation and quantization of the two tables, each held to `δ/2`. All
//! three draws happen on every call and the result is selected by masking.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::alias::{finite_alias_init_ratio, FiniteAlias, Target};
use crate::error::{invalid, Error, Result};
use crate::numerics::{ceil_dyadic, ceil_log2, dlap_center_lower, floor_dyadic, RationalParam};
use crate::rng::BitSource;

/// Extra fractional bits kept when rounding `γ` and `δ` to fixed point.
const ROUNDING_BITS: u32 = 32;

/// `log₂ x` for a positive rational, accurate to double precision.
pub fn log2_ratio(x: &BigRational) -> f64 {
    fn log2_int(v: &BigInt) -> f64 {
        let bits = v.bits();
        let shift = bits.saturating_sub(60);
        let top = (v.magnitude() >> shift).to_f64().unwrap_or(f64::MAX);
        top.log2() + shift as f64
    }
    log2_int(x.numer()) - log2_int(x.denom())
}

/// `log₂((1/ε)·ln(1/δ)) + 2·log₂(1/δ)`: the leading terms of the per-sample
/// bit cost a time-oblivious discrete Laplace sampler is allowed.
pub fn dlap_bit_budget(eps: &RationalParam, delta: &BigRational) -> f64 {
    let inv_delta_log2 = -log2_ratio(delta);
    let ln_inv_delta = inv_delta_log2 * std::f64::consts::LN_2;
    (ln_inv_delta / eps.to_f64()).log2() + 2.0 * inv_delta_log2
}

/// Smallest power of two `r ≥ 1` with `r·ε ≥ 1`.
pub fn block_width(eps: &RationalParam) -> u64 {
    let mut r = 1u64;
    while u128::from(r) * u128::from(eps.num()) < u128::from(eps.den()) {
        r <<= 1;
    }
    r
}

#[derive(Debug, Clone)]
pub struct DLapSampler {
    eps: RationalParam,
    delta: BigRational,
    r: u64,
    high: FiniteAlias,
    low: FiniteAlias,
}

impl DLapSampler {
    pub fn new(eps: RationalParam, delta: RationalParam) -> Result<Self> {
        Self::with_delta(eps, &delta.to_ratio())
    }

    pub fn with_delta(eps: RationalParam, delta: &BigRational) -> Result<Self> {
        if !delta.is_positive() || *delta >= BigRational::one() {
            return Err(invalid(format!("delta = {delta} must lie in (0, 1)")));
        }
        let r = block_width(&eps);
        let half = delta / BigRational::from_integer(BigInt::from(2));
        let high = finite_alias_init_ratio(Target::LaplaceBlock { eps, r }, &half)?;
        let low = finite_alias_init_ratio(
            Target::Geo {
                exponent: eps,
                u: Some(r - 1),
            },
            &half,
        )?;
        Ok(DLapSampler {
            eps,
            delta: delta.clone(),
            r,
            high,
            low,
        })
    }

    /// Assembles a sampler from prebuilt tables. The high table must use the
    /// value `-1` for the zero outcome and `x ≥ 0` for block indices; the low
    /// table must stay inside `[0, r)`.
    pub fn from_tables(
        eps: RationalParam,
        delta: BigRational,
        r: u64,
        high: FiniteAlias,
        low: FiniteAlias,
    ) -> Result<Self> {
        if r == 0 || !r.is_power_of_two() {
            return Err(invalid("block width must be a power of two"));
        }
        if high.map.values().iter().any(|&v| v < -1) {
            return Err(invalid("high table values must be ≥ -1"));
        }
        if low.map.values().iter().any(|&v| v < 0 || v as u64 >= r) {
            return Err(invalid("low table values must lie in [0, r)"));
        }
        Ok(DLapSampler {
            eps,
            delta,
            r,
            high,
            low,
        })
    }

    pub fn eps(&self) -> RationalParam {
        self.eps
    }

    pub fn delta(&self) -> &BigRational {
        &self.delta
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    /// Table for the zero outcome and the block index.
    pub fn high(&self) -> &FiniteAlias {
        &self.high
    }

    /// Table for the offset inside a block.
    pub fn low(&self) -> &FiniteAlias {
        &self.low
    }

    /// Quantized probability of a zero sample.
    pub fn center_mass(&self) -> BigRational {
        let t = &self.high.table;
        let label = self
            .high
            .map
            .values()
            .iter()
            .position(|&v| v == -1)
            .expect("high table carries the zero outcome");
        let units = &t.label_units()[label];
        BigRational::new(BigInt::from(units.clone()), BigInt::one() << t.ell())
    }

    /// Bits consumed by every call to [`sample`](Self::sample).
    pub fn bits_per_sample(&self) -> u32 {
        self.high.table.ell() + 1 + self.low.table.ell()
    }

    #[inline]
    pub fn sample(&self, src: &mut BitSource) -> i64 {
        let w = self.high.sample(src);
        let s = src.draw_bits(1) as i64;
        let y = self.low.sample(src);
        let nonzero = i64::from(w >= 0);
        let sign = 2 * s - 1;
        let magnitude = 1 + self.r as i64 * w.max(0) + y;
        nonzero * sign * magnitude
    }
}

/// Purified noisy counts: a map `[0, n] → [0, n]` that is ε-indistinguishable
/// on adjacent inputs.
///
/// With probability `γ` the output is uniform on `[0, n]`; otherwise it is
/// `clamp(t + Z, 0, n)` with `Z` from a [`DLapSampler`] built at
/// `δ ≤ (e^ε−1)/(e^ε+1) · γ/(1−γ) · 1/(n+1)`. The mixing weight is held as
/// an `ℓ_γ`-bit fraction rounded up from `γ`.
#[derive(Debug, Clone)]
pub struct NoiseMechanism {
    n: u64,
    eps: RationalParam,
    gamma: BigRational,
    gamma_mantissa: u128,
    gamma_bits: u32,
    inner: DLapSampler,
}

impl NoiseMechanism {
    pub fn new(n: u64, eps: RationalParam, gamma: RationalParam) -> Result<Self> {
        Self::with_gamma(n, eps, &gamma.to_ratio())
    }

    pub fn with_gamma(n: u64, eps: RationalParam, gamma: &BigRational) -> Result<Self> {
        if n == 0 {
            return Err(invalid("mechanism range bound n must be ≥ 1"));
        }
        if n == u64::MAX {
            return Err(invalid("mechanism range bound too large"));
        }
        let one = BigRational::one();
        if !gamma.is_positive() || *gamma >= one {
            return Err(invalid(format!("gamma = {gamma} must lie in (0, 1)")));
        }
        let co_gamma = &one - gamma;
        let gamma_bits = u32::try_from(
            ceil_log2(&gamma.recip()) + ceil_log2(&co_gamma.recip()) + i64::from(ROUNDING_BITS),
        )
        .map_err(|_| Error::Overflow("gamma precision".into()))?;
        if gamma_bits > 128 {
            return Err(Error::PrecisionTooWide(gamma_bits));
        }
        let gamma_fixed = ceil_dyadic(gamma, gamma_bits);
        debug_assert!(gamma_fixed < one);
        let gamma_mantissa = (gamma_fixed.numer() * (BigInt::one() << gamma_bits) / gamma_fixed.denom())
            .to_u128()
            .ok_or(Error::PrecisionTooWide(gamma_bits))?;

        let delta = Self::inner_delta(n, &eps, gamma)?;
        let inner = DLapSampler::with_delta(eps, &delta)?;
        Ok(NoiseMechanism {
            n,
            eps,
            gamma: gamma_fixed,
            gamma_mantissa,
            gamma_bits,
            inner,
        })
    }

    /// A dyadic lower bound on `(e^ε−1)/(e^ε+1) · γ/(1−γ) · 1/(n+1)`, capped
    /// at 1/2.
    pub fn inner_delta(n: u64, eps: &RationalParam, gamma: &BigRational) -> Result<BigRational> {
        let one = BigRational::one();
        let extra = (-ceil_log2(&eps.to_ratio())).max(0) as u32;
        let center = dlap_center_lower(eps, 192 + extra);
        if center.is_zero() {
            return Err(Error::PrecisionExhausted {
                what: "purification delta",
                max_guard_bits: 192,
            });
        }
        let factor = gamma / ((&one - gamma) * BigRational::from_integer(BigInt::from(n) + 1));
        let raw = center * factor;
        let bits = u32::try_from(-ceil_log2(&raw) + i64::from(ROUNDING_BITS)).unwrap_or(ROUNDING_BITS);
        let delta = floor_dyadic(&raw, bits.max(ROUNDING_BITS));
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        Ok(delta.min(half))
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn eps(&self) -> RationalParam {
        self.eps
    }

    /// The implemented mixing weight, `γ` rounded up to `ℓ_γ` bits.
    pub fn gamma(&self) -> &BigRational {
        &self.gamma
    }

    pub fn gamma_bits(&self) -> u32 {
        self.gamma_bits
    }

    pub fn inner(&self) -> &DLapSampler {
        &self.inner
    }

    pub fn delta(&self) -> &BigRational {
        self.inner.delta()
    }

    /// Bits per query whose count must not depend on `t`.
    pub fn private_bits_per_query(&self) -> u32 {
        self.gamma_bits + self.inner.bits_per_sample()
    }

    /// Leading-term budget for the private bits of one query.
    pub fn bit_budget(&self) -> f64 {
        dlap_bit_budget(&self.eps, self.inner.delta()) + f64::from(self.gamma_bits)
    }

    /// Noisy version of the count `t ∈ [0, n]`.
    pub fn query(&self, t: u64, src: &mut BitSource) -> Result<u64> {
        if t > self.n {
            return Err(Error::CountOutOfRange { t, n: self.n });
        }
        Ok(self.query_in_range(t, src))
    }

    #[inline]
    pub(crate) fn query_in_range(&self, t: u64, src: &mut BitSource) -> u64 {
        let mix = src.draw_wide(self.gamma_bits) < self.gamma_mantissa;
        let uniform = src.uniform_below(self.n + 1) - 1;
        let z = self.inner.sample(src);
        let noisy = (t as i128 + z as i128).clamp(0, self.n as i128) as u64;
        let mask = 0u64.wrapping_sub(u64::from(mix));
        (uniform & mask) | (noisy & !mask)
    }

    /// Query with the mixing branch forced; test hook.
    #[doc(hidden)]
    pub fn query_forced(&self, t: u64, uniform_branch: bool, src: &mut BitSource) -> u64 {
        src.draw_wide(self.gamma_bits);
        let uniform = src.uniform_below(self.n + 1) - 1;
        let z = self.inner.sample(src);
        let noisy = (t as i128 + z as i128).clamp(0, self.n as i128) as u64;
        if uniform_branch {
            uniform
        } else {
            noisy
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alias::{alias_init, SupportMap};
    use crate::numerics::FixedProb;

    fn rp(a: u64, b: u64) -> RationalParam {
        RationalParam::new(a, b).unwrap()
    }

    fn ratio(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn block_widths() {
        assert_eq!(block_width(&rp(3, 10)), 4);
        assert_eq!(block_width(&rp(1, 1)), 1);
        assert_eq!(block_width(&rp(3, 1)), 1);
        assert_eq!(block_width(&rp(1, 4)), 4);
        assert_eq!(block_width(&rp(1, 5)), 8);
    }

    #[test]
    fn unit_eps_has_trivial_low_table() {
        let s = DLapSampler::new(rp(1, 1), rp(1, 50)).unwrap();
        assert_eq!(s.r(), 1);
        assert_eq!(s.low().table.m(), 1);
        assert_eq!(s.low().table.ell(), 0);
    }

    #[test]
    fn zero_only_table_gives_zero() {
        let high = FiniteAlias {
            table: alias_init(&[FixedProb::one(0)]).unwrap(),
            map: SupportMap::new(vec![-1]).unwrap(),
        };
        let low = FiniteAlias {
            table: alias_init(&[FixedProb::one(0)]).unwrap(),
            map: SupportMap::identity(1),
        };
        let s = DLapSampler::from_tables(rp(1, 1), ratio(1, 2), 1, high, low).unwrap();
        let mut src = BitSource::seeded(3);
        assert!((0..1000).all(|_| s.sample(&mut src) == 0));
        assert_eq!(s.center_mass(), BigRational::one());
    }

    #[test]
    fn constant_bits_per_sample() {
        let s = DLapSampler::new(rp(3, 10), rp(1, 1000)).unwrap();
        let mut src = BitSource::seeded(8);
        let per = u64::from(s.bits_per_sample());
        for i in 1..=1000u64 {
            s.sample(&mut src);
            assert_eq!(src.bits_consumed(), i * per);
        }
    }

    #[test]
    fn empirical_moments() {
        let eps = rp(1, 2);
        let s = DLapSampler::new(eps, rp(1, 100_000)).unwrap();
        let mut src = BitSource::seeded(21);
        let trials = 400_000;
        let (mut zeros, mut sum, mut sq) = (0u64, 0i64, 0f64);
        for _ in 0..trials {
            let z = s.sample(&mut src);
            zeros += u64::from(z == 0);
            sum += z;
            sq += (z * z) as f64;
        }
        let p = (-0.5f64).exp();
        let p0 = (1.0 - p) / (1.0 + p);
        let var = 2.0 * p / ((1.0 - p) * (1.0 - p));
        let f0 = zeros as f64 / trials as f64;
        assert!((f0 - p0).abs() < 4.0 * (p0 * (1.0 - p0) / trials as f64).sqrt());
        assert!((sum as f64 / trials as f64).abs() < 4.0 * (var / trials as f64).sqrt());
        assert!((sq / trials as f64 - var).abs() / var < 0.03);
    }

    #[test]
    fn mechanism_delta_example() {
        // γ = 1/2, n = 1, ε = 1: (e−1)/(e+1) · 1 · 1/2 ≈ 0.2311.
        let m = NoiseMechanism::new(1, rp(1, 1), rp(1, 2)).unwrap();
        let d = m.delta().to_f64().unwrap();
        let e = std::f64::consts::E;
        let exact = (e - 1.0) / (e + 1.0) / 2.0;
        assert!(d <= exact && exact - d < 1e-9, "{d}");
    }

    #[test]
    fn mechanism_delta_monotone_and_below_gamma() {
        for eps in [rp(1, 4), rp(1, 1), rp(3, 1)] {
            for gamma in [rp(1, 1000), rp(1, 10), rp(1, 2)] {
                let mut prev: Option<BigRational> = None;
                for n in [1u64, 2, 5, 16, 100, 1000] {
                    let d = NoiseMechanism::inner_delta(n, &eps, &gamma.to_ratio()).unwrap();
                    assert!(d < gamma.to_ratio());
                    if let Some(p) = prev {
                        assert!(d < p);
                    }
                    prev = Some(d);
                }
            }
        }
    }

    #[test]
    fn gamma_rounds_up_below_one() {
        let m = NoiseMechanism::new(4, rp(1, 1), rp(999_999, 1_000_000)).unwrap();
        assert!(*m.gamma() >= ratio(999_999, 1_000_000));
        assert!(*m.gamma() < BigRational::one());
        assert!(NoiseMechanism::new(4, rp(1, 1), rp(1, 1)).is_err());
        assert!(NoiseMechanism::new(4, rp(1, 1), rp(3, 2)).is_err());
        assert!(NoiseMechanism::new(0, rp(1, 1), rp(1, 2)).is_err());
    }

    #[test]
    fn query_range_and_validation() {
        let m = NoiseMechanism::new(100, rp(1, 2), rp(1, 100)).unwrap();
        let mut src = BitSource::seeded(5);
        for _ in 0..10_000 {
            let v = m.query(50, &mut src).unwrap();
            assert!(v <= 100);
        }
        assert!(matches!(
            m.query(101, &mut src),
            Err(Error::CountOutOfRange { t: 101, n: 100 })
        ));
    }

    #[test]
    fn forced_uniform_branch_is_flat() {
        let m = NoiseMechanism::new(4, rp(1, 1), rp(1, 10)).unwrap();
        let mut src = BitSource::seeded(6);
        let trials = 200_000;
        let mut counts = [0u64; 5];
        for _ in 0..trials {
            counts[m.query_forced(2, true, &mut src) as usize] += 1;
        }
        let sd = (trials as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - trials as f64 * 0.2).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn clamps_at_the_ends() {
        // Large noise relative to a short range pushes mass onto the endpoints.
        let m = NoiseMechanism::new(3, rp(1, 8), rp(1, 100)).unwrap();
        let mut src = BitSource::seeded(10);
        let mut ends = 0;
        for _ in 0..10_000 {
            let v = m.query_forced(0, false, &mut src);
            assert!(v <= 3);
            ends += u32::from(v == 0 || v == 3);
        }
        assert!(ends > 8_000);
    }

    #[test]
    fn private_bits_are_constant_across_inputs() {
        let m = NoiseMechanism::new(64, rp(1, 2), rp(1, 10)).unwrap();
        let mut src = BitSource::seeded(12);
        let per = u64::from(m.private_bits_per_query());
        let mut calls = 0;
        for t in [0u64, 32, 64] {
            for _ in 0..500 {
                m.query(t, &mut src).unwrap();
                calls += 1;
                assert_eq!(src.private_bits(), calls * per);
            }
        }
    }

    #[test]
    fn budget_values() {
        // ε = 1, δ = 1/50: log₂(ln 50) + 2·log₂ 50.
        let b = dlap_bit_budget(&rp(1, 1), &ratio(1, 50));
        assert!((b - 13.2554).abs() < 1e-3, "{b}");
        assert!((log2_ratio(&ratio(1, 1024)) + 10.0).abs() < 1e-12);
    }
}
