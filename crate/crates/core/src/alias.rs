//! Alias tables over ℓ-bit quantized distributions.
//!
//! A table has `m̄ = 2^b` buckets. Sampling draws `b` bits for a bucket `i`
//! and `f = ℓ − b` bits for a uniform `U ∈ [0, 2^f)`, and returns `i` when
//! `U < thresh[i]`, otherwise `alias[i]`. Both draws always happen, so every
//! call consumes exactly `ℓ` bits.
//!
//! [`finite_alias_init`] builds such a table for a discrete Laplace or
//! geometric target: it truncates the target to a core support carrying all
//! but `δ/2` of the mass, quantizes the remaining masses to `ℓ` bits with
//! `ℓ = ⌈log₂(2m/δ)⌉`, and puts the rounding slack on label 0.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::{
    ceil_log2, certify_floor, dlap_pmf_interval, dlap_tail_index, geo_core_bound,
    geo_pmf_interval, laplace_block_core_bound, laplace_block_interval, FixedProb, RationalParam,
};
use crate::rng::BitSource;

/// Widest threshold mantissa a table can hold.
pub const MAX_FRAC_BITS: u32 = 126;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    m: usize,
    index_bits: u32,
    frac_bits: u32,
    alias: Vec<u32>,
    thresh: Vec<u128>,
}

/// Maps table labels `0..m` to the integers they stand for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SupportMap {
    label_to_value: Vec<i64>,
}

impl SupportMap {
    pub fn new(label_to_value: Vec<i64>) -> Result<Self> {
        let distinct: BTreeSet<i64> = label_to_value.iter().copied().collect();
        if distinct.len() != label_to_value.len() {
            return Err(invalid("support map labels must map to distinct values"));
        }
        Ok(SupportMap { label_to_value })
    }

    pub fn identity(m: usize) -> Self {
        SupportMap {
            label_to_value: (0..m as i64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.label_to_value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label_to_value.is_empty()
    }

    pub fn value(&self, label: usize) -> i64 {
        self.label_to_value[label]
    }

    pub fn values(&self) -> &[i64] {
        &self.label_to_value
    }
}

/// JSON form of a table.
#[derive(Debug, Clone, Serialize)]
pub struct TableDump {
    pub m: usize,
    pub m_bar: usize,
    pub ell: u32,
    pub alias: Vec<u32>,
    pub thresh_mantissa: Vec<u128>,
}

impl AliasTable {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn m_bar(&self) -> usize {
        1usize << self.index_bits
    }

    pub fn index_bits(&self) -> u32 {
        self.index_bits
    }

    /// Fractional bits of each threshold, `ℓ − log₂ m̄`.
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Total precision `ℓ`; also the bits consumed per sample.
    pub fn ell(&self) -> u32 {
        self.index_bits + self.frac_bits
    }

    pub fn alias(&self) -> &[u32] {
        &self.alias
    }

    pub fn thresh_mantissas(&self) -> &[u128] {
        &self.thresh
    }

    pub fn thresh(&self, i: usize) -> FixedProb {
        FixedProb::new(BigUint::from(self.thresh[i]), self.frac_bits)
            .expect("thresholds never exceed one")
    }

    /// Quantized mass of each label in units of `2^{-ℓ}`.
    pub fn label_units(&self) -> Vec<BigUint> {
        let cap = 1u128 << self.frac_bits;
        let mut units = vec![BigUint::zero(); self.m];
        for (i, (&t, &a)) in self.thresh.iter().zip(&self.alias).enumerate() {
            if t > 0 {
                units[i] += BigUint::from(t);
            }
            if t < cap {
                units[a as usize] += BigUint::from(cap - t);
            }
        }
        units
    }

    pub fn dump(&self) -> TableDump {
        TableDump {
            m: self.m,
            m_bar: self.m_bar(),
            ell: self.ell(),
            alias: self.alias.clone(),
            thresh_mantissa: self.thresh.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.dump()).expect("table dump serializes")
    }

    /// Draws a label in `0..m` using exactly `ℓ` bits.
    #[inline]
    pub fn sample(&self, src: &mut BitSource) -> usize {
        let i = src.draw_bits(self.index_bits) as usize;
        let u = src.draw_wide(self.frac_bits);
        let keep = u < self.thresh[i];
        let mask = 0usize.wrapping_sub(keep as usize);
        (i & mask) | (self.alias[i] as usize & !mask)
    }
}

/// Builds an alias table from quantized masses summing to `2^ℓ`.
pub fn alias_init(masses: &[FixedProb]) -> Result<AliasTable> {
    alias_init_traced(masses).map(|(t, _)| t)
}

/// As [`alias_init`], also returning the `(bucket, alias)` pair fixed by each
/// loop iteration, in order.
pub(crate) fn alias_init_traced(masses: &[FixedProb]) -> Result<(AliasTable, Vec<(usize, usize)>)> {
    let m = masses.len();
    if m == 0 {
        return Err(invalid("alias_init needs at least one mass"));
    }
    if m > u32::MAX as usize {
        return Err(invalid("alias_init: support too large"));
    }
    let ell = masses[0].frac_bits();
    if masses.iter().any(|p| p.frac_bits() != ell) {
        return Err(invalid("alias_init: masses must share one precision"));
    }
    let total: BigUint = masses.iter().map(|p| p.mantissa()).sum();
    if total != BigUint::one() << ell {
        return Err(Error::MassMismatch {
            got: total.to_string(),
            ell,
        });
    }

    let index_bits = crate::rng::ceil_log2_u64(m as u64);
    let m_bar = 1usize << index_bits;
    // Too few bits to spread over m̄ buckets: rescale, which is exact.
    let (scale, ell) = if ell < index_bits {
        (index_bits - ell, index_bits)
    } else {
        (0, ell)
    };
    let frac_bits = ell - index_bits;
    if frac_bits > MAX_FRAC_BITS {
        return Err(Error::PrecisionTooWide(frac_bits));
    }
    let cap = 1u128 << frac_bits;

    // Remaining mass per bucket, in units of 2^{-ℓ}; each bucket holds 2^f.
    let mut rest: Vec<u128> = vec![0; m_bar];
    for (i, p) in masses.iter().enumerate() {
        let v = p.mantissa() << scale;
        rest[i] = v.to_u128().ok_or(Error::PrecisionTooWide(ell))?;
    }
    let mut small: BTreeSet<usize> = BTreeSet::new();
    let mut big: BTreeSet<usize> = BTreeSet::new();
    for (i, &w) in rest.iter().enumerate() {
        if w < cap {
            small.insert(i);
        } else {
            big.insert(i);
        }
    }

    let mut alias = vec![0u32; m_bar];
    let mut thresh = vec![0u128; m_bar];
    let mut trace = Vec::with_capacity(m_bar);
    while let Some(&i) = small.iter().next().or_else(|| big.iter().next()) {
        if small.remove(&i) {
            let j = *big
                .iter()
                .next()
                .expect("an underfull bucket always has an overfull partner");
            thresh[i] = rest[i];
            alias[i] = j as u32;
            rest[j] -= cap - rest[i];
            if rest[j] < cap {
                big.remove(&j);
                small.insert(j);
            }
            trace.push((i, j));
        } else {
            big.remove(&i);
            debug_assert_eq!(rest[i], cap);
            thresh[i] = cap;
            alias[i] = i as u32;
            trace.push((i, i));
        }
    }
    debug_assert_eq!(trace.len(), m_bar);

    Ok((
        AliasTable {
            m,
            index_bits,
            frac_bits,
            alias,
            thresh,
        },
        trace,
    ))
}

/// Distributions [`finite_alias_init`] knows how to tabulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `DLap(e^{-ε})` on the integers.
    DLap { eps: RationalParam },
    /// `Geo(e^{-exponent})` on `[0, u]`, or on all of ℕ when `u` is `None`.
    Geo {
        exponent: RationalParam,
        u: Option<u64>,
    },
    /// Block index of a discrete Laplace magnitude with block width `r`.
    /// Value `-1` stands for a zero sample, value `x ≥ 0` for
    /// `|Z| − 1 ∈ [r·x, r·x + r)`.
    LaplaceBlock { eps: RationalParam, r: u64 },
}

/// An alias table together with the values its labels stand for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteAlias {
    pub table: AliasTable,
    pub map: SupportMap,
}

impl FiniteAlias {
    #[inline]
    pub fn sample(&self, src: &mut BitSource) -> i64 {
        self.map.value(self.table.sample(src))
    }
}

/// Label order for the symmetric core `[-L, L]`: `0, 1, −1, 2, −2, …`.
pub fn dlap_label_value(label: usize) -> i64 {
    let k = label.div_ceil(2) as i64;
    if label % 2 == 1 {
        k
    } else {
        -k
    }
}

/// Builds a finite alias sampler within total variation `delta` of `target`.
pub fn finite_alias_init(target: Target, delta: RationalParam) -> Result<FiniteAlias> {
    finite_alias_init_ratio(target, &delta.to_ratio())
}

pub fn finite_alias_init_ratio(target: Target, delta: &BigRational) -> Result<FiniteAlias> {
    if !delta.is_positive() || *delta >= BigRational::one() {
        return Err(invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    let half = delta / BigRational::from_integer(BigInt::from(2));

    let values: Vec<i64> = match target {
        Target::DLap { eps } => {
            let l = dlap_tail_index(&eps, &half)?;
            let m = usize::try_from(2 * l + 1).map_err(|_| Error::Overflow("core size".into()))?;
            (0..m).map(dlap_label_value).collect()
        }
        Target::Geo { exponent, u } => {
            let u = match u {
                Some(u) => u,
                None => geo_core_bound(&exponent, &half)?,
            };
            (0..=u as i64).collect()
        }
        Target::LaplaceBlock { eps, r } => {
            if r == 0 {
                return Err(invalid("block width must be positive"));
            }
            let u = laplace_block_core_bound(&eps, r, &half)?;
            (-1..=u as i64).collect()
        }
    };
    let m = values.len();
    let map = SupportMap::new(values)?;

    if m == 1 {
        let table = alias_init(&[FixedProb::one(0)])?;
        return Ok(FiniteAlias { table, map });
    }

    let two_m = BigRational::from_integer(BigInt::from(2 * m as u64));
    let ell = ceil_log2(&(two_m / delta));
    let ell = u32::try_from(ell).map_err(|_| Error::Overflow("alias precision".into()))?;

    let mut masses = Vec::with_capacity(m);
    masses.push(FixedProb::zero(ell));
    let mut used = BigUint::zero();
    for label in 1..m {
        let v = map.value(label);
        let p = match target {
            Target::DLap { eps } => {
                certify_floor("dlap_pmf", ell, |prec| dlap_pmf_interval(&eps, v, prec))?
            }
            Target::Geo { exponent, u } => certify_floor("geo_pmf", ell, |prec| {
                geo_pmf_interval(&exponent, v as u64, u, prec)
            })?,
            Target::LaplaceBlock { eps, r } => {
                let block = u64::try_from(v).ok();
                certify_floor("laplace_block_pmf", ell, |prec| {
                    laplace_block_interval(&eps, r, block, prec)
                })?
            }
        };
        used += p.mantissa();
        masses.push(p);
    }
    let full = BigUint::one() << ell;
    if used > full {
        return Err(Error::MassMismatch {
            got: used.to_string(),
            ell,
        });
    }
    masses[0] = FixedProb::new(full - used, ell)?;
    let table = alias_init(&masses)?;
    Ok(FiniteAlias { table, map })
}
