//! Exact oracles for the samplers and mechanisms in this crate.
//!
//! Everything here is computed with exact integer or rational arithmetic
//! from the frozen alias tables; nothing draws randomness.

mod audit;
mod selected;
mod symbolic;

pub use audit::{bit_audit, run_suite, BitAuditReport, CheckReport, BIT_SLACK};
pub use selected::{
    classify_neighbors, enumerate_selected_sets, sandwich_check, sandwich_check_with,
    selected_set_pmf, spread, NeighborCase,
    SandwichReport, SelectedSetPmf,
};
pub use symbolic::{
    check_block_decomposition, check_dlap_decomposition, check_geometric_decomposition, Poly,
    RationalFn,
};

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::alias::FiniteAlias;
use crate::error::Result;
use crate::numerics::{certify_floor, dlap_pmf_interval, exp_neg_interval, RationalParam};
use crate::sampler::{DLapSampler, NoiseMechanism};

/// A finitely supported distribution on the integers with exact masses.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExactPmf {
    masses: BTreeMap<i64, BigRational>,
}

impl ExactPmf {
    pub fn from_masses(masses: BTreeMap<i64, BigRational>) -> Self {
        ExactPmf { masses }
    }

    pub fn get(&self, v: i64) -> BigRational {
        self.masses.get(&v).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> BigRational {
        self.masses.values().sum()
    }

    pub fn support(&self) -> impl Iterator<Item = i64> + '_ {
        self.masses
            .iter()
            .filter(|(_, p)| !p.is_zero())
            .map(|(&v, _)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &BigRational)> {
        self.masses.iter().map(|(&v, p)| (v, p))
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

/// A pmf whose masses are integers over a common `2^denom_bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitPmf {
    pub denom_bits: u32,
    pub units: BTreeMap<i64, BigUint>,
}

impl UnitPmf {
    pub fn to_exact(&self) -> ExactPmf {
        let den = BigInt::one() << self.denom_bits;
        ExactPmf::from_masses(
            self.units
                .iter()
                .map(|(&v, u)| (v, BigRational::new(BigInt::from(u.clone()), den.clone())))
                .collect(),
        )
    }

    /// `P[X ≥ c]` in units.
    pub fn units_at_least(&self, c: i64) -> BigUint {
        self.units.range(c..).map(|(_, u)| u).sum()
    }

    /// `P[X ≤ c]` in units.
    pub fn units_at_most(&self, c: i64) -> BigUint {
        self.units.range(..=c).map(|(_, u)| u).sum()
    }

    pub fn units_at(&self, c: i64) -> BigUint {
        self.units.get(&c).cloned().unwrap_or_default()
    }
}

/// Exact output law of a finite alias sampler, pushed through its map.
pub fn table_pmf(fa: &FiniteAlias) -> ExactPmf {
    table_units(fa).to_exact()
}

pub fn table_units(fa: &FiniteAlias) -> UnitPmf {
    let mut units = BTreeMap::new();
    for (label, u) in fa.table.label_units().into_iter().enumerate() {
        *units.entry(fa.map.value(label)).or_insert_with(BigUint::zero) += u;
    }
    UnitPmf {
        denom_bits: fa.table.ell(),
        units,
    }
}

/// Exact output law of a [`DLapSampler`].
pub fn sampler_units(s: &DLapSampler) -> UnitPmf {
    let high = table_units(s.high());
    let low = table_units(s.low());
    let bits = high.denom_bits + low.denom_bits + 1;
    let r = s.r() as i64;
    let mut units = BTreeMap::new();
    for (&w, uw) in &high.units {
        if uw.is_zero() {
            continue;
        }
        if w < 0 {
            *units.entry(0).or_insert_with(BigUint::zero) += uw << (low.denom_bits + 1);
            continue;
        }
        for (&y, uy) in &low.units {
            if uy.is_zero() {
                continue;
            }
            let mag = 1 + r * w + y;
            let p = uw * uy;
            *units.entry(mag).or_insert_with(BigUint::zero) += &p;
            *units.entry(-mag).or_insert_with(BigUint::zero) += p;
        }
    }
    UnitPmf {
        denom_bits: bits,
        units,
    }
}

pub fn sampler_pmf(s: &DLapSampler) -> ExactPmf {
    sampler_units(s).to_exact()
}

/// Exact output law of a mechanism with its noise law precomputed.
#[derive(Debug, Clone)]
pub struct MechLaw {
    n: u64,
    gamma: BigRational,
    noise: UnitPmf,
}

impl MechLaw {
    pub fn new(m: &NoiseMechanism) -> Self {
        MechLaw {
            n: m.n(),
            gamma: m.gamma().clone(),
            noise: sampler_units(m.inner()),
        }
    }

    fn noise_ratio(&self, units: BigUint) -> BigRational {
        BigRational::new(BigInt::from(units), BigInt::one() << self.noise.denom_bits)
    }

    /// `P[clamp(t + Z, 0, n) = v]`, before mixing.
    fn clamped(&self, t: u64, v: u64) -> BigRational {
        let (t, v, n) = (t as i64, v as i64, self.n as i64);
        let units = if v == 0 && n == 0 {
            self.noise.units.values().sum()
        } else if v == 0 {
            self.noise.units_at_most(-t)
        } else if v == n {
            self.noise.units_at_least(n - t)
        } else {
            self.noise.units_at(v - t)
        };
        self.noise_ratio(units)
    }

    /// `P[M(t) = v]`.
    pub fn mass(&self, t: u64, v: u64) -> BigRational {
        let one = BigRational::one();
        let uniform = &self.gamma / BigRational::from_integer(BigInt::from(self.n + 1));
        uniform + (&one - &self.gamma) * self.clamped(t, v)
    }

    pub fn pmf(&self, t: u64) -> ExactPmf {
        ExactPmf::from_masses((0..=self.n).map(|v| (v as i64, self.mass(t, v))).collect())
    }

    /// `P[M(t) ≥ s]`.
    pub fn ccdf(&self, t: u64, s: i64) -> BigRational {
        if s <= 0 {
            return BigRational::one();
        }
        if s as u64 > self.n {
            return BigRational::zero();
        }
        let one = BigRational::one();
        let uniform = &self.gamma
            * BigRational::new(
                BigInt::from(self.n + 1 - s as u64),
                BigInt::from(self.n + 1),
            );
        let tail = self.noise_ratio(self.noise.units_at_least(s - t as i64));
        uniform + (&one - &self.gamma) * tail
    }
}

/// Exact output law of `m` on input `t`.
pub fn mech_pmf(m: &NoiseMechanism, t: u64) -> Result<ExactPmf> {
    if t > m.n() {
        return Err(crate::Error::CountOutOfRange { t, n: m.n() });
    }
    Ok(MechLaw::new(m).pmf(t))
}

/// `½ Σ |a − b|`, exact.
pub fn tv_distance(a: &ExactPmf, b: &ExactPmf) -> BigRational {
    let mut keys: Vec<i64> = a.masses.keys().chain(b.masses.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let sum: BigRational = keys.into_iter().map(|v| (a.get(v) - b.get(v)).abs()).sum();
    sum / BigRational::from_integer(BigInt::from(2))
}

/// Discrete Laplace reference: masses on `[-l, l]` truncated to `bits`
/// bits, with the remaining probability placed on `l + 1`.
pub fn dlap_reference(eps: &RationalParam, l: u64, bits: u32) -> Result<ExactPmf> {
    let mut masses = BTreeMap::new();
    let mut used = BigRational::zero();
    for v in -(l as i64)..=(l as i64) {
        let p = certify_floor("reference pmf", bits, |prec| dlap_pmf_interval(eps, v, prec))?;
        let p = p.to_ratio();
        used += &p;
        masses.insert(v, p);
    }
    masses.insert(l as i64 + 1, BigRational::one() - used);
    Ok(ExactPmf::from_masses(masses))
}

/// Exact TV between a sampler and a `4ℓ`-bit discrete Laplace reference,
/// where `ℓ` is the sampler's per-sample bit count.
pub fn sampler_tv(s: &DLapSampler) -> Result<BigRational> {
    let pmf = sampler_pmf(s);
    let l = pmf.support().map(|v| v.unsigned_abs()).max().unwrap_or(0);
    let reference = dlap_reference(&s.eps(), l, 4 * s.bits_per_sample())?;
    Ok(tv_distance(&pmf, &reference))
}

/// Result of checking every adjacent-input output ratio of a mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct DpRatioReport {
    pub pairs: u64,
    pub values: u64,
    /// Largest observed `max(a/b, b/a)`, as a float for display.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Checks `P[M(t−1) = v] / P[M(t) = v] ∈ [e^{-ε}, e^{ε}]` for all `t, v`.
pub fn dp_ratio_check(m: &NoiseMechanism) -> Result<DpRatioReport> {
    let law = MechLaw::new(m);
    let eps = m.eps();
    let x = eps.to_ratio();
    let enclosure = exp_neg_interval(
        &BigUint::from(eps.num()),
        &BigUint::from(eps.den()),
        256,
    );
    let (lo, hi) = (enclosure.lower_ratio(), enclosure.upper_ratio());
    let n = m.n();
    let mut prev = law.pmf(0);
    let mut pass = true;
    let mut worst = BigRational::one();
    let mut values = 0;
    for t in 1..=n {
        let cur = law.pmf(t);
        for v in 0..=n as i64 {
            values += 1;
            let (a, b) = (prev.get(v), cur.get(v));
            let (small, large) = if a <= b { (a, b) } else { (b, a) };
            if large.is_zero() {
                continue;
            }
            let ratio = &small / &large;
            if ratio.is_zero() {
                pass = false;
                continue;
            }
            let inv = large / &small;
            if inv > worst {
                worst = inv;
            }
            // e^{-ε} ≤ small / large
            let ok = if ratio >= hi {
                true
            } else if ratio < lo {
                false
            } else {
                crate::numerics::cmp_exp_neg(&x, &ratio)? != Ordering::Greater
            };
            pass &= ok;
        }
        prev = cur;
    }
    Ok(DpRatioReport {
        pairs: n,
        values,
        worst_ratio: num_traits::ToPrimitive::to_f64(&worst).unwrap_or(f64::INFINITY),
        pass,
    })
}
