//! Selected-set sandwich on instances where the threshold is reachable
//! (`p_τ > 0`), unlike the small enumeration instance.
//!
//! A replacement neighbor moves one record, so two counts change by one.
//! Each exceedance indicator then shifts by up to `e^{±ε}`, and when both
//! changed items stay in the support the selected-set ratio can exceed
//! `e^{ε}`. These tests pin that down: the single-`ε` exponents fail on
//! same-support neighbors, while exponents that charge `ε` per changed
//! coordinate hold in every case.

use num_bigint::BigInt;
use num_rational::BigRational;

use sparsehist::verify::{sandwich_check, sandwich_check_with, spread, NeighborCase};
use sparsehist::{HistMechanism, HistParams, RationalParam, SparseHistogram};

fn rp(a: u64, b: u64) -> RationalParam {
    RationalParam::new(a, b).unwrap()
}

fn hist(d: u64, e: &[(u64, u64)]) -> SparseHistogram {
    SparseHistogram::new(d, e.to_vec()).unwrap()
}

fn instances() -> Vec<HistMechanism> {
    [(400u64, 40u64, rp(1, 2), rp(1, 10)), (200, 20, rp(1, 1), rp(1, 2)), (100, 10, rp(1, 1), rp(9, 10))]
        .into_iter()
        .map(|(d, n, eps, gamma)| HistMechanism::new(HistParams::new(d, n, eps, gamma).unwrap()).unwrap())
        .collect()
}

/// Neighbor pairs with one count just below the threshold.
fn pairs(hm: &HistMechanism) -> Vec<(SparseHistogram, SparseHistogram)> {
    let (d, n) = (hm.params().d, hm.params().n);
    let c = hm.tau() - 1;
    let rest = n - c;
    vec![
        (hist(d, &[(1, c), (2, rest)]), hist(d, &[(1, c + 1), (2, rest - 1)])),
        (hist(d, &[(1, rest), (2, c)]), hist(d, &[(1, rest - 1), (2, c), (3, 1)])),
        (hist(d, &[(1, rest - 1), (2, c), (3, 1)]), hist(d, &[(1, rest), (2, c)])),
        (hist(d, &[(1, rest - 1), (2, c), (3, 1)]), hist(d, &[(1, rest - 1), (2, c), (4, 1)])),
        (hist(d, &[(1, n - 1), (2, 1)]), hist(d, &[(1, n)])),
        (hist(d, &[(1, n)]), hist(d, &[(1, n - 1), (2, 1)])),
    ]
}

#[test]
fn instances_have_a_live_threshold() {
    for hm in instances() {
        assert!(hm.tau() >= 2 && hm.tau() <= hm.params().n);
        assert!(*hm.p_tau() > BigRational::from_integer(BigInt::from(0)));
    }
}

#[test]
fn same_support_neighbors_exceed_single_epsilon() {
    for hm in instances() {
        let (a, b) = &pairs(&hm)[0];
        let r = sandwich_check(&hm, a, b).unwrap();
        assert_eq!(r.case, NeighborCase::SameSupport);
        assert!(!r.pass, "worst {} within {}", r.worst_log_ratio, r.lower_exponent);
        assert!(r.worst_log_ratio > hm.params().eps.to_f64());
    }
}

#[test]
fn per_coordinate_exponents_hold() {
    for hm in instances() {
        let eps = hm.params().eps.to_ratio();
        let two_eps = &eps * BigRational::from_integer(BigInt::from(2));
        let p_tau = hm.p_tau().clone();
        let lower = (&eps + &p_tau * BigRational::from_integer(BigInt::from(2))).max(two_eps.clone());
        let upper = (&eps + &p_tau * spread(&hm)).max(two_eps);
        for (a, b) in pairs(&hm) {
            let r = sandwich_check_with(&hm, &a, &b, &lower, &upper).unwrap();
            assert!(r.pass, "{:?}: worst {} vs [{}, {}]", r.case, r.worst_log_ratio, r.lower_exponent, r.upper_exponent);
        }
    }
}

#[test]
fn support_changing_neighbors_meet_single_epsilon_here() {
    for hm in instances() {
        for (a, b) in pairs(&hm).iter().skip(1) {
            let r = sandwich_check(&hm, a, b).unwrap();
            assert_ne!(r.case, NeighborCase::SameSupport);
            assert!(r.pass, "{:?}: worst {}", r.case, r.worst_log_ratio);
        }
    }
}
