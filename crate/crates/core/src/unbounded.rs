//! Add/remove-model release: privately find an upper bound `n̂` on the
//! dataset size, truncate to it, then run the bounded release with `n = n̂`.
//!
//! Round `k = 1, 2, …` spends `ε_k = ε₁/2^k` and failure mass
//! `β_k = β₁/2^k` on one query of the purified count mechanism over
//! `[0, n̂_k]`, where `n̂_k = ⌈(8/ε_k)·ln(1/β_k)⌉`. The search halts at the
//! first round whose noisy count falls below `n̂_k / 2`.

use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{invalid, Result};
use crate::histogram::{build_histogram, AbortMode, Dataset, HistMechanism, HistParams, Release};
use crate::numerics::{exp_neg_at_most, first_true, RationalParam};
use crate::rng::{BitSource, Stream};
use crate::sampler::NoiseMechanism;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnboundedParams {
    pub d: u64,
    pub eps: RationalParam,
    pub gamma: RationalParam,
    pub eps1: RationalParam,
    pub beta1: RationalParam,
    pub abort_mode: AbortMode,
}

impl UnboundedParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("d must be ≥ 1"));
        }
        if !self.gamma.is_proper_fraction() {
            return Err(invalid(format!("gamma = {} must lie in (0, 1)", self.gamma)));
        }
        if !self.beta1.is_proper_fraction() {
            return Err(invalid(format!("beta1 = {} must lie in (0, 1)", self.beta1)));
        }
        Ok(())
    }
}

/// Per-round parameters of the search.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub k: u32,
    pub eps: RationalParam,
    pub beta: BigRational,
    pub n_hat: u64,
}

/// `⌈(8/ε)·ln(1/β)⌉`, as the smallest `N` with `e^{−Nε/8} ≤ β`.
pub fn n_hat(eps: &RationalParam, beta: &BigRational) -> Result<u64> {
    if !beta.is_positive_proper() {
        return Err(invalid(format!("beta = {beta} must lie in (0, 1)")));
    }
    let rate = eps.to_ratio() / BigRational::from_integer(BigInt::from(8));
    first_true(0, |n| {
        let x = &rate * BigRational::from_integer(BigInt::from(n));
        exp_neg_at_most(&x, beta)
    })
}

trait ProperFraction {
    fn is_positive_proper(&self) -> bool;
}

impl ProperFraction for BigRational {
    fn is_positive_proper(&self) -> bool {
        *self > BigRational::zero() && *self < BigRational::one()
    }
}

/// Running totals of the privacy and failure budgets spent by the search.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    pub eps_spent: BigRational,
    pub beta_spent: BigRational,
    pub rounds: u32,
}

impl BudgetLedger {
    fn new() -> Self {
        BudgetLedger {
            eps_spent: BigRational::zero(),
            beta_spent: BigRational::zero(),
            rounds: 0,
        }
    }

    fn charge(&mut self, round: &Round) {
        self.eps_spent += round.eps.to_ratio();
        self.beta_spent += &round.beta;
        self.rounds += 1;
    }
}

/// Result of the private size search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Halting round.
    pub round: Round,
    /// The noisy count that fell below `n̂_k / 2`.
    pub noisy: u64,
    pub ledger: BudgetLedger,
}

/// The size search with its per-round mechanisms built once and reused.
///
/// Safe to share across threads; rounds are materialised on first use.
#[derive(Debug)]
pub struct UpperBoundSearch {
    eps1: RationalParam,
    beta1: BigRational,
    levels: Mutex<Vec<(Round, Arc<NoiseMechanism>)>>,
}

impl UpperBoundSearch {
    pub fn new(eps1: RationalParam, beta1: RationalParam) -> Result<Self> {
        if !beta1.is_proper_fraction() {
            return Err(invalid(format!("beta1 = {beta1} must lie in (0, 1)")));
        }
        Ok(UpperBoundSearch {
            eps1,
            beta1: beta1.to_ratio(),
            levels: Mutex::new(Vec::new()),
        })
    }

    /// Parameters of round `k ≥ 1`.
    pub fn round(&self, k: u32) -> Result<Round> {
        assert!(k >= 1, "rounds start at 1");
        let eps = self.eps1.halved(k)?;
        let beta = &self.beta1 / BigRational::from_integer(BigInt::one() << k);
        let n_hat = n_hat(&eps, &beta)?;
        Ok(Round { k, eps, beta, n_hat })
    }

    fn level(&self, k: u32) -> Result<(Round, Arc<NoiseMechanism>)> {
        let idx = (k - 1) as usize;
        let mut levels = self.levels.lock().expect("search cache poisoned");
        while levels.len() <= idx {
            let round = self.round(levels.len() as u32 + 1)?;
            let mech = NoiseMechanism::with_gamma(round.n_hat, round.eps, &round.beta)?;
            levels.push((round, Arc::new(mech)));
        }
        Ok(levels[idx].clone())
    }

    /// Runs the search for a dataset of `n ≥ 1` records.
    pub fn search(&self, n: u64, src: &mut BitSource) -> Result<SearchOutcome> {
        if n == 0 {
            return Err(invalid("the size search needs a nonempty dataset"));
        }
        let mut ledger = BudgetLedger::new();
        for k in 1u32.. {
            let (round, mech) = self.level(k)?;
            ledger.charge(&round);
            let noisy = mech.query_in_range(n.min(round.n_hat), src);
            if 2 * u128::from(noisy) < u128::from(round.n_hat) {
                return Ok(SearchOutcome { round, noisy, ledger });
            }
        }
        unreachable!("round counter exhausted")
    }
}

/// Outcome of an add/remove-model release.
#[derive(Debug, Clone, PartialEq)]
pub struct UnboundedRelease {
    pub search: SearchOutcome,
    pub release: Release,
}

impl UnboundedRelease {
    pub fn n_hat(&self) -> u64 {
        self.search.round.n_hat
    }
}

/// Releases `data` without a public size bound.
pub fn release_unbounded(p: &UnboundedParams, data: &Dataset, src: &BitSource) -> Result<UnboundedRelease> {
    let search = UpperBoundSearch::new(p.eps1, p.beta1)?;
    release_unbounded_with(&search, p, data, src)
}

/// As [`release_unbounded`], reusing a prepared search.
pub fn release_unbounded_with(
    search: &UpperBoundSearch,
    p: &UnboundedParams,
    data: &Dataset,
    src: &BitSource,
) -> Result<UnboundedRelease> {
    p.validate()?;
    if data.is_empty() {
        return Err(invalid("dataset is empty"));
    }
    if data.d() != p.d {
        return Err(invalid(format!("dataset domain {} ≠ d = {}", data.d(), p.d)));
    }
    let mut search_src = src.fork(Stream::UpperBound);
    let outcome = search.search(data.len() as u64, &mut search_src)?;
    let n_hat = outcome.round.n_hat;
    let kept = usize::try_from(n_hat).unwrap_or(usize::MAX).min(data.len());
    let h = build_histogram(&data.truncated(kept));
    debug_assert!(h.l1() <= n_hat);
    let params = HistParams::new(p.d, n_hat, p.eps, p.gamma)?.with_abort_mode(p.abort_mode);
    let release = HistMechanism::new(params)?.release_auto(&h, src)?;
    Ok(UnboundedRelease {
        search: outcome,
        release,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn rp(a: u64, b: u64) -> RationalParam {
        RationalParam::new(a, b).unwrap()
    }

    fn ratio(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn first_round_size() {
        let s = UpperBoundSearch::new(rp(1, 1), rp(1, 2)).unwrap();
        let r = s.round(1).unwrap();
        assert_eq!(r.eps, rp(1, 2));
        assert_eq!(r.beta, ratio(1, 4));
        assert_eq!(r.n_hat, 23);
    }

    #[test]
    fn n_hat_matches_float_oracle() {
        // ⌈(8/ε)·ln(1/β)⌉ in f64, away from integer boundaries.
        for (eps, beta) in [(rp(1, 2), ratio(1, 4)), (rp(1, 4), ratio(1, 20)), (rp(1, 64), ratio(1, 640))] {
            let expect = (8.0 / eps.to_f64() * (1.0 / beta_f64(&beta)).ln()).ceil() as u64;
            assert_eq!(n_hat(&eps, &beta).unwrap(), expect);
        }
        // Frozen: ⌈16·ln 20⌉, ⌈32·ln 40⌉, ⌈512·ln 640⌉.
        assert_eq!(n_hat(&rp(1, 2), &ratio(1, 20)).unwrap(), 48);
        assert_eq!(n_hat(&rp(1, 4), &ratio(1, 40)).unwrap(), 119);
        assert_eq!(n_hat(&rp(1, 64), &ratio(1, 640)).unwrap(), 3309);
    }

    fn beta_f64(b: &BigRational) -> f64 {
        use num_traits::ToPrimitive;
        b.to_f64().unwrap()
    }

    #[test]
    fn n_hat_is_never_below_the_real_value() {
        // e^{-N·ε/8} ≤ β must hold at N and fail at N − 1.
        let eps = rp(3, 7);
        let beta = ratio(1, 33);
        let n = n_hat(&eps, &beta).unwrap();
        let at = |m: u64| {
            let x = eps.to_ratio() * ratio(m as i64, 8);
            exp_neg_at_most(&x, &beta).unwrap()
        };
        assert!(at(n));
        assert!(!at(n - 1));
    }

    #[test]
    fn budget_ledger_is_geometric() {
        let s = UpperBoundSearch::new(rp(1, 1), rp(1, 10)).unwrap();
        let mut ledger = BudgetLedger::new();
        for k in 1..=12u32 {
            ledger.charge(&s.round(k).unwrap());
            let left = ratio(1, 1 << k);
            assert_eq!(ledger.eps_spent, ratio(1, 1) * (ratio(1, 1) - &left));
            assert_eq!(ledger.beta_spent, ratio(1, 10) * (ratio(1, 1) - &left));
        }
        assert_eq!(ledger.rounds, 12);
    }

    #[test]
    fn round_sizes_grow() {
        let s = UpperBoundSearch::new(rp(1, 1), rp(1, 10)).unwrap();
        let sizes: Vec<u64> = (1..=8).map(|k| s.round(k).unwrap().n_hat).collect();
        assert!(sizes.windows(2).all(|w| w[1] > 2 * w[0]));
    }

    #[test]
    fn deep_rounds_overflow_cleanly() {
        let s = UpperBoundSearch::new(rp(1, 1 << 40), rp(1, 2)).unwrap();
        assert!(matches!(s.round(30), Err(Error::Overflow(_))));
    }

    #[test]
    fn singleton_halts_in_first_round() {
        // The first round mixes in a uniform draw with weight β₁/2, so
        // β₁ must be small for round one to be near certain.
        let s = UpperBoundSearch::new(rp(1, 1), rp(1, 1000)).unwrap();
        for seed in 0..200 {
            let out = s.search(1, &mut BitSource::seeded(seed)).unwrap();
            assert_eq!(out.round.k, 1);
            assert!(2 * out.noisy < out.round.n_hat);
        }
    }

    #[test]
    fn release_respects_truncation() {
        let p = UnboundedParams {
            d: 100_000,
            eps: rp(1, 1),
            gamma: rp(1, 100),
            eps1: rp(1, 1),
            beta1: rp(1, 10),
            abort_mode: AbortMode::FixedOutput,
        };
        let search = UpperBoundSearch::new(p.eps1, p.beta1).unwrap();
        let items: Vec<u64> = (0..300).map(|i| 1 + (i * 7919) % 5000).collect();
        let data = Dataset::new(p.d, items).unwrap();
        for seed in 0..20 {
            let out = release_unbounded_with(&search, &p, &data, &BitSource::seeded(seed)).unwrap();
            let n_hat = out.n_hat();
            assert!(out.search.ledger.eps_spent < p.eps1.to_ratio());
            assert!(out.search.ledger.beta_spent < p.beta1.to_ratio());
            if !out.release.aborted {
                assert_eq!(out.release.histogram.len() as u64, 4 * n_hat);
            }
        }
    }

    #[test]
    fn release_is_deterministic_per_seed() {
        let p = UnboundedParams {
            d: 50_000,
            eps: rp(1, 2),
            gamma: rp(1, 10),
            eps1: rp(1, 1),
            beta1: rp(1, 10),
            abort_mode: AbortMode::FixedOutput,
        };
        let data = Dataset::new(p.d, (1..=40).collect()).unwrap();
        let a = release_unbounded(&p, &data, &BitSource::seeded(5)).unwrap();
        let b = release_unbounded(&p, &data, &BitSource::seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = UnboundedParams {
            d: 10,
            eps: rp(1, 1),
            gamma: rp(1, 10),
            eps1: rp(1, 1),
            beta1: rp(1, 1),
            abort_mode: AbortMode::Retry,
        };
        let data = Dataset::new(10, vec![1]).unwrap();
        assert!(release_unbounded(&p, &data, &BitSource::seeded(0)).is_err());
        let p = UnboundedParams { beta1: rp(1, 2), ..p };
        let empty = Dataset::new(10, vec![]).unwrap();
        assert!(release_unbounded(&p, &empty, &BitSource::seeded(0)).is_err());
    }
}
