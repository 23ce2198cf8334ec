//! Bit-consumption audits and the default verification suite.

use std::collections::BTreeSet;

use num_traits::ToPrimitive;
use serde::Serialize;

use super::{
    check_block_decomposition, check_dlap_decomposition, check_geometric_decomposition,
    dp_ratio_check, sampler_tv, sandwich_check,
};
use crate::error::Result;
use crate::histogram::{HistMechanism, HistParams, SparseHistogram};
use crate::numerics::RationalParam;
use crate::rng::BitSource;
use crate::sampler::{dlap_bit_budget, DLapSampler, NoiseMechanism};

/// Additive slack allowed on top of a bit budget's leading terms.
pub const BIT_SLACK: f64 = 8.0;

/// One line of a verification report.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub bound: String,
    pub observed: String,
    pub pass: bool,
}

impl CheckReport {
    fn new(name: impl Into<String>, bound: impl Into<String>, observed: impl Into<String>, pass: bool) -> Self {
        CheckReport {
            name: name.into(),
            bound: bound.into(),
            observed: observed.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitAuditReport {
    pub calls: u64,
    /// Distinct per-call counts of private bits.
    pub distinct: Vec<u64>,
    /// Leading-term budget; the check allows [`BIT_SLACK`] on top.
    pub budget: f64,
    pub pass: bool,
}

impl BitAuditReport {
    /// The per-call count, if every call agreed.
    pub fn constant(&self) -> Option<u64> {
        match self.distinct.as_slice() {
            [c] => Some(*c),
            _ => None,
        }
    }
}

/// Runs `call` `calls` times and records the private bits each call drew.
/// Bits booked as public (uniform draws over a public range) are exempt.
pub fn bit_audit<F>(src: &mut BitSource, calls: u64, budget: f64, mut call: F) -> BitAuditReport
where
    F: FnMut(u64, &mut BitSource),
{
    let mut distinct = BTreeSet::new();
    for i in 0..calls {
        let before = src.private_bits();
        call(i, src);
        distinct.insert(src.private_bits() - before);
    }
    let distinct: Vec<u64> = distinct.into_iter().collect();
    let pass = distinct.len() == 1 && distinct[0] as f64 <= budget + BIT_SLACK;
    BitAuditReport {
        calls,
        distinct,
        budget,
        pass,
    }
}

fn rp(a: u64, b: u64) -> RationalParam {
    RationalParam::new(a, b).expect("positive literal")
}

fn hist(d: u64, entries: &[(u64, u64)]) -> SparseHistogram {
    SparseHistogram::new(d, entries.to_vec()).expect("valid literal histogram")
}

/// The default verification grid. `quick` trims the largest instances.
pub fn run_suite(quick: bool) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();

    for (eps, delta) in [(rp(1, 1), rp(1, 50)), (rp(7, 10), rp(1, 1000)), (rp(1, 4), rp(1, 1_000_000))] {
        let s = DLapSampler::new(eps, delta)?;
        let tv = sampler_tv(&s)?;
        out.push(CheckReport::new(
            format!("sampler_tv eps={eps} delta={delta}"),
            format!("{:.3e}", delta.to_f64()),
            format!("{:.3e}", tv.to_f64().unwrap_or(f64::NAN)),
            tv <= delta.to_ratio(),
        ));
    }

    let ns: &[u64] = if quick { &[4, 16] } else { &[4, 16, 64] };
    for &n in ns {
        for eps in [rp(1, 2), rp(1, 1)] {
            for gamma in [rp(1, 100), rp(1, 10)] {
                let m = NoiseMechanism::new(n, eps, gamma)?;
                let r = dp_ratio_check(&m)?;
                out.push(CheckReport::new(
                    format!("mech_dp_ratio n={n} eps={eps} gamma={gamma}"),
                    format!("{:.6}", eps.to_f64().exp()),
                    format!("{:.6}", r.worst_ratio),
                    r.pass,
                ));
            }
        }
    }

    let params = HistParams::new(30, 2, rp(1, 2), rp(1, 10))?.with_k(6)?;
    let hm = HistMechanism::new(params)?;
    let pairs = [
        (hist(30, &[(1, 2)]), hist(30, &[(1, 1), (2, 1)])),
        (hist(30, &[(1, 1), (2, 1)]), hist(30, &[(1, 2)])),
        (hist(30, &[(1, 1), (2, 1)]), hist(30, &[(1, 1), (3, 1)])),
    ];
    let same = HistMechanism::new(HistParams::new(30, 3, rp(1, 2), rp(1, 10))?.with_k(5)?)?;
    let same_pair = (hist(30, &[(1, 2), (2, 1)]), hist(30, &[(1, 1), (2, 2)]));
    let mut checks: Vec<(&HistMechanism, &SparseHistogram, &SparseHistogram)> =
        pairs.iter().map(|(a, b)| (&hm, a, b)).collect();
    checks.push((&same, &same_pair.0, &same_pair.1));
    for (m, a, b) in checks {
        let r = sandwich_check(m, a, b)?;
        out.push(CheckReport::new(
            format!("selected_set_sandwich {:?} d={} n={} k={}", r.case, m.params().d, m.params().n, m.params().k),
            format!("[-{:.4}, {:.4}]", r.lower_exponent, r.upper_exponent),
            format!("{:.4}", r.worst_log_ratio),
            r.pass,
        ));
    }

    let geo = [1usize, 2, 4].iter().all(|&r| check_geometric_decomposition(r, 64));
    out.push(CheckReport::new("geometric_decomposition", "t in [0, 64], r in {1,2,4}", "symbolic", geo));
    let dlap = check_dlap_decomposition(32);
    out.push(CheckReport::new("dlap_decomposition", "z in [-32, 32]", "symbolic", dlap));
    let block = [1usize, 2, 4].iter().all(|&r| check_block_decomposition(r, 32));
    out.push(CheckReport::new("block_decomposition", "z in [-32, 32], r in {1,2,4}", "symbolic", block));

    let calls = if quick { 1_000 } else { 10_000 };
    for (eps, delta) in [(rp(1, 1), rp(1, 50)), (rp(1, 4), rp(1, 1_000_000))] {
        let s = DLapSampler::new(eps, delta)?;
        let budget = dlap_bit_budget(&eps, &delta.to_ratio());
        let mut src = BitSource::seeded(1);
        let r = bit_audit(&mut src, calls, budget, |_, src| {
            s.sample(src);
        });
        out.push(CheckReport::new(
            format!("dlap_bits eps={eps} delta={delta}"),
            format!("{:.2}", budget + BIT_SLACK),
            format!("{:?}", r.distinct),
            r.pass,
        ));
    }
    let m = NoiseMechanism::new(16, rp(1, 2), rp(1, 100))?;
    let mut src = BitSource::seeded(2);
    let r = bit_audit(&mut src, calls, m.bit_budget(), |i, src| {
        m.query_in_range(i % 17, src);
    });
    out.push(CheckReport::new(
        "mech_bits n=16 eps=1/2 gamma=1/100",
        format!("{:.2}", m.bit_budget() + BIT_SLACK),
        format!("{:?}", r.distinct),
        r.pass,
    ));

    Ok(out)
}
