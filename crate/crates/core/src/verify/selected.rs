//! Exact law of the selected item set `I` of a sparse release.
//!
//! `I₁` keeps each support item independently with probability
//! `P[M(h[i]) ≥ τ]`; the blanket is a uniform subset of `[d] ∖ I₁` of size
//! `n + k − |I₁|`. Hence `P[I = S]` depends on `S` only through `S ∩ U` for
//! any `U ⊇ supp(h)`:
//!
//! `P[I = S] = Σ_{J ⊆ S ∩ supp(h)} P[I₁ = J] / C(d − |J|, n + k − |J|)`.
//!
//! Probabilities are conditional on the blanket draw not aborting, an event
//! whose probability does not depend on `h`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{invalid, Error, Result};
use crate::histogram::{binomial, HistMechanism, SparseHistogram};
use crate::numerics::cmp_exp_neg;

/// Largest `|supp(h) ∪ supp(h′)|` the class-based oracle accepts.
pub const MAX_UNIVERSE: usize = 8;
/// Largest domain for brute-force subset enumeration.
pub const MAX_ENUM_DOMAIN: u64 = 16;

#[derive(Debug, Clone)]
pub struct SelectedSetPmf {
    pub d: u64,
    pub size: u64,
    /// Sorted items whose membership distinguishes sets.
    pub universe: Vec<u64>,
    /// For each `A ⊆ universe` (as a bitmask over `universe`), the
    /// probability of any single `S` with `S ∩ universe = A`.
    pub per_set: BTreeMap<u32, BigRational>,
}

impl SelectedSetPmf {
    fn members(&self, mask: u32) -> usize {
        mask.count_ones() as usize
    }

    /// Number of size-`n+k` sets `S` with `S ∩ universe = A`.
    pub fn class_size(&self, mask: u32) -> BigUint {
        let free = self.d - self.universe.len() as u64;
        let a = self.members(mask) as u64;
        if a > self.size {
            return BigUint::zero();
        }
        binomial(free, self.size - a)
    }

    /// `P[I = S]` for a sorted set `S`.
    pub fn prob(&self, s: &[u64]) -> BigRational {
        if s.len() as u64 != self.size {
            return BigRational::zero();
        }
        let mask = self
            .universe
            .iter()
            .enumerate()
            .filter(|(_, u)| s.binary_search(u).is_ok())
            .fold(0u32, |m, (i, _)| m | (1 << i));
        self.per_set.get(&mask).cloned().unwrap_or_else(BigRational::zero)
    }

    /// `Σ_S P[I = S]`.
    pub fn total(&self) -> BigRational {
        self.per_set
            .iter()
            .map(|(&mask, p)| p * BigRational::from_integer(BigInt::from(self.class_size(mask))))
            .sum()
    }
}

/// Per-item probabilities of landing in `I₁`, paired with the items.
fn exceedance(hm: &HistMechanism, h: &SparseHistogram) -> Vec<(u64, BigRational)> {
    let tau = hm.tau() as i64;
    h.entries()
        .iter()
        .filter(|e| e.1 > 0)
        .map(|&(i, c)| (i, hm.law().ccdf(c, tau)))
        .collect()
}

/// `P[I₁ = J]` for every `J ⊆ supp`, keyed by bitmask over `supp`.
fn first_stage(exc: &[(u64, BigRational)]) -> Vec<BigRational> {
    let one = BigRational::one();
    (0u32..1 << exc.len())
        .map(|mask| {
            exc.iter()
                .enumerate()
                .map(|(b, (_, e))| if mask >> b & 1 == 1 { e.clone() } else { &one - e })
                .product()
        })
        .collect()
}

/// Exact class-level law of `I` for histogram `h`, distinguishing sets by
/// their intersection with `supp(h) ∪ extra`.
pub fn selected_set_pmf(
    hm: &HistMechanism,
    h: &SparseHistogram,
    extra: &[u64],
) -> Result<SelectedSetPmf> {
    let p = hm.params();
    let size = p.n + p.k;
    let exc = exceedance(hm, h);
    let mut universe: Vec<u64> = exc.iter().map(|e| e.0).chain(extra.iter().copied()).collect();
    universe.sort_unstable();
    universe.dedup();
    if universe.len() > MAX_UNIVERSE {
        return Err(Error::EnumerationLimit(format!(
            "{} distinguished items; at most {MAX_UNIVERSE}",
            universe.len()
        )));
    }
    if universe.iter().any(|&u| u == 0 || u > p.d) {
        return Err(invalid("distinguished items must lie in [1, d]"));
    }
    let stage = first_stage(&exc);
    // Position of each support item inside the universe bitmask.
    let pos: Vec<usize> = exc
        .iter()
        .map(|(i, _)| universe.binary_search(i).expect("support inside universe"))
        .collect();

    let mut per_set = BTreeMap::new();
    let free = p.d - universe.len() as u64;
    for a in 0u32..1 << universe.len() {
        let a_size = a.count_ones() as u64;
        if a_size > size || size - a_size > free {
            continue;
        }
        let mut prob = BigRational::zero();
        for (j, pj) in stage.iter().enumerate() {
            let j_mask = pos
                .iter()
                .enumerate()
                .filter(|(b, _)| j >> b & 1 == 1)
                .fold(0u32, |m, (_, &u)| m | (1 << u));
            if j_mask & !a != 0 || pj.is_zero() {
                continue;
            }
            let js = j_mask.count_ones() as u64;
            let ways = binomial(p.d - js, size - js);
            prob += pj / BigRational::from_integer(BigInt::from(ways));
        }
        per_set.insert(a, prob);
    }
    Ok(SelectedSetPmf {
        d: p.d,
        size,
        universe,
        per_set,
    })
}

/// Brute-force law of `I` by enumerating every first-stage outcome and
/// every blanket subset. Only for `d ≤ 16`.
pub fn enumerate_selected_sets(
    hm: &HistMechanism,
    h: &SparseHistogram,
) -> Result<BTreeMap<Vec<u64>, BigRational>> {
    let p = hm.params();
    if p.d > MAX_ENUM_DOMAIN {
        return Err(Error::EnumerationLimit(format!(
            "d = {} exceeds {MAX_ENUM_DOMAIN}",
            p.d
        )));
    }
    let size = (p.n + p.k) as u32;
    let exc = exceedance(hm, h);
    let stage = first_stage(&exc);
    let mut out: BTreeMap<Vec<u64>, BigRational> = BTreeMap::new();
    for (j, pj) in stage.iter().enumerate() {
        let j_items: u32 = exc
            .iter()
            .enumerate()
            .filter(|(b, _)| j >> b & 1 == 1)
            .fold(0u32, |m, (_, (i, _))| m | (1 << (i - 1)));
        let need = size - j_items.count_ones();
        let pool = (0..p.d as u32).filter(|b| j_items >> b & 1 == 0).count() as u64;
        let each = pj / BigRational::from_integer(BigInt::from(binomial(pool, u64::from(need))));
        for blanket in 0u32..1 << p.d {
            if blanket & j_items != 0 || blanket.count_ones() != need {
                continue;
            }
            let s = blanket | j_items;
            let items: Vec<u64> = (0..p.d).filter(|b| s >> b & 1 == 1).map(|b| b + 1).collect();
            *out.entry(items).or_insert_with(BigRational::zero) += &each;
        }
    }
    Ok(out)
}

/// The four ways replacement neighbors can differ in support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum NeighborCase {
    /// `supp(h) = supp(h′)`.
    SameSupport,
    /// `supp(h) ∪ {i*} = supp(h′)`.
    Gains,
    /// `supp(h) = supp(h′) ∪ {j*}`.
    Loses,
    /// `supp(h) ∪ {i*} = supp(h′) ∪ {j*}`.
    Swaps,
}

/// Checks that `h′` is `h` with one unit moved from `j*` to `i*`, and
/// reports which support case applies along with `(i*, j*)`.
pub fn classify_neighbors(
    h: &SparseHistogram,
    h2: &SparseHistogram,
) -> Result<(NeighborCase, u64, u64)> {
    let mut items: Vec<u64> = h
        .entries()
        .iter()
        .chain(h2.entries())
        .map(|e| e.0)
        .collect();
    items.sort_unstable();
    items.dedup();
    let mut gain = None;
    let mut loss = None;
    for i in items {
        let (a, b) = (h.get(i), h2.get(i));
        if b == a + 1 && gain.is_none() {
            gain = Some(i);
        } else if a == b + 1 && loss.is_none() {
            loss = Some(i);
        } else if a != b {
            return Err(invalid("histograms are not replacement neighbors"));
        }
    }
    let (Some(i_star), Some(j_star)) = (gain, loss) else {
        return Err(invalid("histograms are not replacement neighbors"));
    };
    let case = match (h.get(i_star) == 0, h2.get(j_star) == 0) {
        (false, false) => NeighborCase::SameSupport,
        (true, false) => NeighborCase::Gains,
        (false, true) => NeighborCase::Loses,
        (true, true) => NeighborCase::Swaps,
    };
    Ok((case, i_star, j_star))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SandwichReport {
    pub case: NeighborCase,
    /// Classes of candidate sets compared.
    pub classes: usize,
    /// Lower exponent `max(ε/2 + p_τ, ε)`.
    pub lower_exponent: f64,
    /// Upper exponent `max(ε/2 + p_τ·(d−n−k)/(k+1), ε)`.
    pub upper_exponent: f64,
    /// Largest `|ln(P[I′ = S] / P[I = S])|` seen.
    pub worst_log_ratio: f64,
    pub pass: bool,
}

/// Exact check, for every candidate set `S`, of
/// `e^{-L}·P[I = S] ≤ P[I′ = S] ≤ e^{U}·P[I = S]` with
/// `L = max(ε/2 + p_τ, ε)` and `U = max(ε/2 + p_τ·(d−n−k)/(k+1), ε)`.
pub fn sandwich_check(
    hm: &HistMechanism,
    h: &SparseHistogram,
    h2: &SparseHistogram,
) -> Result<SandwichReport> {
    let p = hm.params();
    let eps = p.eps.to_ratio();
    let half_eps = &eps / BigRational::from_integer(BigInt::from(2));
    let p_tau = hm.p_tau().clone();
    let lower = (&half_eps + &p_tau).max(eps.clone());
    let upper = (&half_eps + &p_tau * spread(hm)).max(eps);
    sandwich_check_with(hm, h, h2, &lower, &upper)
}

/// `(d − n − k)/(k + 1)`.
pub fn spread(hm: &HistMechanism) -> BigRational {
    let p = hm.params();
    BigRational::new(BigInt::from(p.d - p.n - p.k), BigInt::from(p.k + 1))
}

/// [`sandwich_check`] with caller-supplied exponents `L` and `U`.
pub fn sandwich_check_with(
    hm: &HistMechanism,
    h: &SparseHistogram,
    h2: &SparseHistogram,
    lower: &BigRational,
    upper: &BigRational,
) -> Result<SandwichReport> {
    let (case, _, _) = classify_neighbors(h, h2)?;
    let union: Vec<u64> = {
        let mut u: Vec<u64> = h.support().into_iter().chain(h2.support()).collect();
        u.sort_unstable();
        u.dedup();
        u
    };
    let a = selected_set_pmf(hm, h, &union)?;
    let b = selected_set_pmf(hm, h2, &union)?;

    let mut pass = true;
    let mut worst = 0f64;
    for (mask, pa) in &a.per_set {
        let pb = b.per_set.get(mask).cloned().unwrap_or_else(BigRational::zero);
        match (pa.is_zero(), pb.is_zero()) {
            (true, true) => continue,
            (true, false) | (false, true) => {
                pass = false;
                worst = f64::INFINITY;
                continue;
            }
            _ => {}
        }
        let up = pa / &pb; // e^{-U} ≤ P/P′
        let down = &pb / pa; // e^{-L} ≤ P′/P
        pass &= cmp_exp_neg(upper, &up)? != Ordering::Greater;
        pass &= cmp_exp_neg(lower, &down)? != Ordering::Greater;
        let lr = down.to_f64().unwrap_or(f64::NAN).ln().abs();
        worst = worst.max(lr);
    }
    Ok(SandwichReport {
        case,
        classes: a.per_set.len(),
        lower_exponent: lower.to_f64().unwrap_or(f64::NAN),
        upper_exponent: upper.to_f64().unwrap_or(f64::NAN),
        worst_log_ratio: worst,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::HistParams;
    use crate::numerics::RationalParam;

    fn rp(a: u64, b: u64) -> RationalParam {
        RationalParam::new(a, b).unwrap()
    }

    fn hist(d: u64, entries: &[(u64, u64)]) -> SparseHistogram {
        SparseHistogram::new(d, entries.to_vec()).unwrap()
    }

    #[test]
    fn empty_support_is_pure_blanket() {
        let params = HistParams::new(30, 2, rp(1, 2), rp(1, 10)).unwrap().with_k(6).unwrap();
        let hm = HistMechanism::new(params).unwrap();
        let pmf = selected_set_pmf(&hm, &hist(30, &[]), &[]).unwrap();
        let expect = BigRational::new(BigInt::one(), BigInt::from(binomial(30, 8)));
        assert_eq!(pmf.prob(&[1, 2, 3, 4, 5, 6, 7, 8]), expect);
        assert_eq!(pmf.total(), BigRational::one());
    }

    #[test]
    fn totals_are_one() {
        let params = HistParams::new(30, 2, rp(1, 2), rp(1, 10)).unwrap().with_k(6).unwrap();
        let hm = HistMechanism::new(params).unwrap();
        for h in [hist(30, &[(4, 2)]), hist(30, &[(4, 1), (9, 1)])] {
            let pmf = selected_set_pmf(&hm, &h, &[1, 30]).unwrap();
            assert_eq!(pmf.total(), BigRational::one());
        }
    }

    #[test]
    fn class_oracle_matches_brute_force() {
        // A small domain with a low threshold so I₁ is genuinely random.
        let params = HistParams::new(12, 1, rp(1, 1), rp(1, 2)).unwrap().with_k(3).unwrap();
        let hm = HistMechanism::new(params).unwrap();
        let h = hist(12, &[(5, 1)]);
        let brute = enumerate_selected_sets(&hm, &h).unwrap();
        let classes = selected_set_pmf(&hm, &h, &[]).unwrap();
        let total: BigRational = brute.values().sum();
        assert_eq!(total, BigRational::one());
        assert_eq!(brute.len() as u64, 495);
        for (s, p) in &brute {
            assert_eq!(&classes.prob(s), p, "set {s:?}");
        }
    }

    #[test]
    fn release_frequencies_match_oracle() {
        let params = HistParams::new(12, 1, rp(1, 1), rp(1, 2)).unwrap().with_k(3).unwrap();
        let hm = HistMechanism::new(params).unwrap();
        let h = hist(12, &[(5, 1)]);
        let classes = selected_set_pmf(&hm, &h, &[]).unwrap();
        let trials = 200_000u64;
        let mut with_item = 0u64;
        let mut done = 0u64;
        let mut seed = 0;
        while done < trials {
            let r = hm.release(&h, &crate::BitSource::seeded(seed)).unwrap();
            seed += 1;
            if r.aborted {
                continue;
            }
            done += 1;
            with_item += u64::from(r.histogram.entries().iter().any(|e| e.0 == 5));
        }
        let p_in = classes.per_set[&1].clone()
            * BigRational::from_integer(BigInt::from(classes.class_size(1)));
        let p_in = p_in.to_f64().unwrap();
        let sd = (trials as f64 * p_in * (1.0 - p_in)).sqrt();
        assert!((with_item as f64 - trials as f64 * p_in).abs() < 4.0 * sd);
    }

    #[test]
    fn neighbor_classification() {
        let d = 30;
        let two = hist(d, &[(1, 2)]);
        let split = hist(d, &[(1, 1), (2, 1)]);
        let moved = hist(d, &[(1, 1), (3, 1)]);
        assert_eq!(classify_neighbors(&two, &split).unwrap().0, NeighborCase::Gains);
        assert_eq!(classify_neighbors(&split, &two).unwrap().0, NeighborCase::Loses);
        assert_eq!(classify_neighbors(&split, &moved).unwrap().0, NeighborCase::Swaps);
        let a = hist(d, &[(1, 2), (2, 1)]);
        let b = hist(d, &[(1, 1), (2, 2)]);
        assert_eq!(classify_neighbors(&a, &b).unwrap().0, NeighborCase::SameSupport);
        assert!(classify_neighbors(&two, &two).is_err());
        assert!(classify_neighbors(&two, &hist(d, &[(1, 1)])).is_err());
    }
}
