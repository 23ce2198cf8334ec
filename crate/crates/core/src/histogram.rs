//! Sparse histogram release with a fixed-size privacy blanket.
//!
//! Each item in the support gets a noisy count from the purified mechanism;
//! those reaching the threshold `τ` form `I₁`. The selection is padded to
//! exactly `n + k` items with a uniform subset of `[d] ∖ I₁`, and every item
//! in the final set is released with fresh noise. Set operations use radix
//! sorting and merge joins.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::RationalParam;
use crate::rng::{BitSource, Stream};
use crate::sampler::NoiseMechanism;
use crate::sort::radix_sort_by_key;
use crate::verify::MechLaw;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    d: u64,
    items: Vec<u64>,
}

impl Dataset {
    pub fn new(d: u64, items: Vec<u64>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("domain size d must be ≥ 1"));
        }
        if let Some(&item) = items.iter().find(|&&x| x == 0 || x > d) {
            return Err(Error::ItemOutOfRange { item, d });
        }
        Ok(Dataset { d, items })
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn items(&self) -> &[u64] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The first `len` records.
    pub fn truncated(&self, len: usize) -> Dataset {
        Dataset {
            d: self.d,
            items: self.items[..len.min(self.items.len())].to_vec(),
        }
    }
}

/// `(item, count)` pairs with strictly increasing items; absent items are 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SparseHistogram {
    d: u64,
    entries: Vec<(u64, u64)>,
}

impl SparseHistogram {
    pub fn new(d: u64, entries: Vec<(u64, u64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(invalid("histogram items must be strictly increasing"));
        }
        if let Some(&(item, _)) = entries.iter().find(|(i, _)| *i == 0 || *i > d) {
            return Err(Error::ItemOutOfRange { item, d });
        }
        Ok(SparseHistogram { d, entries })
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn entries(&self) -> &[(u64, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, item: u64) -> u64 {
        self.entries
            .binary_search_by_key(&item, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn l1(&self) -> u64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Number of nonzero counts.
    pub fn l0(&self) -> usize {
        self.entries.iter().filter(|e| e.1 > 0).count()
    }

    pub fn support(&self) -> Vec<u64> {
        self.entries.iter().filter(|e| e.1 > 0).map(|e| e.0).collect()
    }

    /// `max_i |self[i] − other[i]|` over the union of both entry lists.
    pub fn linf_distance(&self, other: &SparseHistogram) -> u64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut worst) = (0, 0, 0);
        while i < a.len() || j < b.len() {
            let diff = match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x.0 == y.0 => {
                    i += 1;
                    j += 1;
                    x.1.abs_diff(y.1)
                }
                (Some(x), Some(y)) if x.0 < y.0 => {
                    i += 1;
                    x.1
                }
                (Some(x), None) => {
                    i += 1;
                    x.1
                }
                (_, Some(y)) => {
                    j += 1;
                    y.1
                }
                (None, None) => unreachable!(),
            };
            worst = worst.max(diff);
        }
        worst
    }
}

/// Exact frequency vector of a dataset.
pub fn build_histogram(data: &Dataset) -> SparseHistogram {
    let mut items = data.items.clone();
    radix_sort_by_key(&mut items, data.d, |&x| x);
    let mut entries: Vec<(u64, u64)> = Vec::new();
    for x in items {
        match entries.last_mut() {
            Some(last) if last.0 == x => last.1 += 1,
            _ => entries.push((x, 1)),
        }
    }
    SparseHistogram { d: data.d, entries }
}

/// What to do when the blanket draw yields too few distinct items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortMode {
    /// Output the fixed histogram `{(1,1), …, (n,1)}`.
    FixedOutput,
    /// Redraw the blanket with fresh randomness.
    Retry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistParams {
    pub d: u64,
    pub n: u64,
    pub k: u64,
    pub eps: RationalParam,
    pub gamma: RationalParam,
    pub abort_mode: AbortMode,
}

impl HistParams {
    /// Parameters with the default padding `k = 3n`.
    pub fn new(d: u64, n: u64, eps: RationalParam, gamma: RationalParam) -> Result<Self> {
        let k = n
            .checked_mul(3)
            .ok_or_else(|| Error::Overflow("padding 3n".into()))?;
        let p = HistParams {
            d,
            n,
            k,
            eps,
            gamma,
            abort_mode: AbortMode::FixedOutput,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_k(mut self, k: u64) -> Result<Self> {
        self.k = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_abort_mode(mut self, mode: AbortMode) -> Self {
        self.abort_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n must be ≥ 1"));
        }
        if self.d == 0 {
            return Err(invalid("d must be ≥ 1"));
        }
        if !self.gamma.is_proper_fraction() {
            return Err(invalid(format!("gamma = {} must lie in (0, 1)", self.gamma)));
        }
        if self.is_sparse() {
            self.check_margin()?;
        }
        Ok(())
    }

    /// Requirements of the sparse path: `d ≥ 10n` and `n + k ≤ d − n`.
    pub fn validate_sparse(&self) -> Result<()> {
        self.validate()?;
        if !self.is_sparse() {
            return Err(invalid(format!(
                "d = {} < 10n: the sparse release needs d ≥ 10n",
                self.d
            )));
        }
        self.check_margin()
    }

    fn check_margin(&self) -> Result<()> {
        let need = self
            .n
            .checked_add(self.k)
            .and_then(|x| x.checked_add(self.n))
            .ok_or_else(|| Error::Overflow("n + k".into()))?;
        if need > self.d {
            return Err(invalid(format!(
                "n + k = {} exceeds d − n = {}",
                self.n + self.k,
                self.d.saturating_sub(self.n)
            )));
        }
        Ok(())
    }

    /// Whether the domain is large enough (`d ≥ 10n`) for the sparse path.
    pub fn is_sparse(&self) -> bool {
        self.n.checked_mul(10).is_some_and(|x| self.d >= x)
    }

    /// Mixing weight `εγ/d` used by the count mechanism.
    pub fn mech_gamma(&self) -> BigRational {
        self.eps.to_ratio() * self.gamma.to_ratio() / BigRational::from_integer(BigInt::from(self.d))
    }
}

/// Smallest `t ≥ 0` with `f(t) ≤ bound`, for `f` nonincreasing with
/// `f(t_max) = 0`; returns `(t, f(t))`.
pub fn compute_tau<F>(bound: &BigRational, t_max: u64, f: F) -> (u64, BigRational)
where
    F: Fn(u64) -> BigRational,
{
    if *bound >= BigRational::one() {
        return (0, f(0));
    }
    let (mut lo, mut hi) = (0u64, t_max);
    // Invariant: f(lo) > bound unless lo is the answer; f(hi) ≤ bound.
    if f(lo) <= *bound {
        return (lo, f(lo));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid) <= *bound {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, f(hi))
}

/// Outcome of one release.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Release {
    pub histogram: SparseHistogram,
    pub aborted: bool,
    pub blanket_attempts: u32,
    /// Threshold used; `None` for the dense path.
    pub tau: Option<u64>,
}

/// A configured release: the count mechanism `M_{n, ε, εγ/d}` plus `τ`.
#[derive(Debug, Clone)]
pub struct HistMechanism {
    params: HistParams,
    mech: NoiseMechanism,
    law: MechLaw,
    tau: u64,
    p_tau: BigRational,
}

impl HistMechanism {
    pub fn new(params: HistParams) -> Result<Self> {
        params.validate()?;
        let gamma = params.mech_gamma();
        if gamma >= BigRational::one() {
            return Err(invalid(
                "εγ/d ≥ 1 leaves no signal in the count mechanism",
            ));
        }
        let mech = NoiseMechanism::with_gamma(params.n, params.eps, &gamma)?;
        let law = MechLaw::new(&mech);
        // P[1 + M(1) ≥ t] = P[M(1) ≥ t − 1].
        let (tau, p_tau) = compute_tau(&gamma, params.n + 2, |t| law.ccdf(1, t as i64 - 1));
        Ok(HistMechanism {
            params,
            mech,
            law,
            tau,
            p_tau,
        })
    }

    pub fn params(&self) -> &HistParams {
        &self.params
    }

    pub fn mech(&self) -> &NoiseMechanism {
        &self.mech
    }

    pub fn law(&self) -> &MechLaw {
        &self.law
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    /// `P[1 + M(1) ≥ τ]`.
    pub fn p_tau(&self) -> &BigRational {
        &self.p_tau
    }

    fn check_input(&self, h: &SparseHistogram) -> Result<()> {
        let p = &self.params;
        if h.d() != p.d {
            return Err(invalid(format!("histogram domain {} ≠ d = {}", h.d(), p.d)));
        }
        if h.l1() > p.n {
            return Err(invalid(format!("histogram mass {} exceeds n = {}", h.l1(), p.n)));
        }
        Ok(())
    }

    /// Sparse release of `h` with `‖h‖₁ ≤ n`.
    pub fn release(&self, h: &SparseHistogram, src: &BitSource) -> Result<Release> {
        self.check_input(h)?;
        let p = &self.params;
        p.validate_sparse()?;
        let mut thresh_src = src.fork(Stream::Threshold);
        let mut blanket_src = src.fork(Stream::Blanket);
        let mut fresh_src = src.fork(Stream::FreshNoise);

        let selected: Vec<u64> = h
            .entries()
            .iter()
            .filter(|&&(_, c)| c > 0)
            .filter_map(|&(i, c)| {
                (self.mech.query_in_range(c, &mut thresh_src) >= self.tau).then_some(i)
            })
            .collect();

        let target = (p.n + p.k) as usize;
        let mut attempts = 0u32;
        let blanket = loop {
            attempts += 1;
            match draw_blanket(p.d, target, &selected, &mut blanket_src) {
                Some(b) => break b,
                None if p.abort_mode == AbortMode::FixedOutput => {
                    let fixed = (1..=p.n).map(|i| (i, 1)).collect();
                    return Ok(Release {
                        histogram: SparseHistogram::new(p.d, fixed)?,
                        aborted: true,
                        blanket_attempts: attempts,
                        tau: Some(self.tau),
                    });
                }
                None => continue,
            }
        };

        let chosen = merge_sorted(&selected, &blanket);
        debug_assert_eq!(chosen.len(), target);
        let mut entries = Vec::with_capacity(chosen.len());
        let mut cursor = 0;
        let src_entries = h.entries();
        for item in chosen {
            while cursor < src_entries.len() && src_entries[cursor].0 < item {
                cursor += 1;
            }
            let count = match src_entries.get(cursor) {
                Some(&(i, c)) if i == item => c,
                _ => 0,
            };
            entries.push((item, self.mech.query_in_range(count, &mut fresh_src)));
        }
        Ok(Release {
            histogram: SparseHistogram { d: p.d, entries },
            aborted: false,
            blanket_attempts: attempts,
            tau: Some(self.tau),
        })
    }

    /// Noisy count for every one of the `d` coordinates.
    pub fn release_dense(&self, h: &SparseHistogram, src: &BitSource) -> Result<Release> {
        self.check_input(h)?;
        let d = self.params.d;
        let mut fresh_src = src.fork(Stream::FreshNoise);
        let mut entries = Vec::with_capacity(d as usize);
        let mut cursor = h.entries().iter().peekable();
        for item in 1..=d {
            let count = match cursor.peek() {
                Some(&&(i, c)) if i == item => {
                    cursor.next();
                    c
                }
                _ => 0,
            };
            entries.push((item, self.mech.query_in_range(count, &mut fresh_src)));
        }
        Ok(Release {
            histogram: SparseHistogram { d, entries },
            aborted: false,
            blanket_attempts: 0,
            tau: None,
        })
    }

    /// Sparse release when `d ≥ 10n`, dense otherwise.
    pub fn release_auto(&self, h: &SparseHistogram, src: &BitSource) -> Result<Release> {
        if self.params.is_sparse() {
            self.release(h, src)
        } else {
            self.release_dense(h, src)
        }
    }
}

/// Uniform subset of `[d] ∖ excluded` of size `target − |excluded|`, sorted.
///
/// Draws `4·target` items with replacement and keeps the first occurrence of
/// each. Returns `None` when fewer than `target` distinct items came up; that
/// event depends only on the collision pattern, not on `excluded`.
fn draw_blanket(d: u64, target: usize, excluded: &[u64], src: &mut BitSource) -> Option<Vec<u64>> {
    let draws = 4 * target;
    let mut tagged: Vec<(u64, u32)> = (0..draws as u32)
        .map(|pos| (src.uniform_below(d), pos))
        .collect();
    // Stable sort by item keeps draw order among duplicates.
    radix_sort_by_key(&mut tagged, d, |e| e.0);
    tagged.dedup_by_key(|e| e.0);
    if tagged.len() < target {
        return None;
    }
    let mut fresh: Vec<(u64, u32)> = Vec::with_capacity(tagged.len());
    let mut ex = excluded.iter().peekable();
    for e in tagged {
        while ex.peek().is_some_and(|&&x| x < e.0) {
            ex.next();
        }
        if ex.peek() != Some(&&e.0) {
            fresh.push(e);
        }
    }
    // Earliest draws first: a uniform ordered sample of [d] ∖ excluded.
    radix_sort_by_key(&mut fresh, draws as u64, |e| u64::from(e.1));
    fresh.truncate(target - excluded.len());
    let mut out: Vec<u64> = fresh.into_iter().map(|e| e.0).collect();
    radix_sort_by_key(&mut out, d, |&x| x);
    Some(out)
}

fn merge_sorted(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Builds the mechanism for `params` and releases `data`, taking the dense
/// path when `d < 10n`.
pub fn release(params: HistParams, data: &Dataset, src: &BitSource) -> Result<Release> {
    if data.len() as u64 != params.n {
        return Err(invalid(format!(
            "dataset has {} records but n = {}",
            data.len(),
            params.n
        )));
    }
    let hm = HistMechanism::new(params)?;
    hm.release_auto(&build_histogram(data), src)
}

/// Dense release of every coordinate regardless of `d`.
pub fn release_dense(params: HistParams, data: &Dataset, src: &BitSource) -> Result<Release> {
    let hm = HistMechanism::new(params)?;
    hm.release_dense(&build_histogram(data), src)
}

/// Exact binomial coefficient `C(u, s)`.
pub fn binomial(u: u64, s: u64) -> num_bigint::BigUint {
    if s > u {
        return num_bigint::BigUint::zero();
    }
    let s = s.min(u - s);
    let mut acc = num_bigint::BigUint::one();
    for i in 0..s {
        acc = acc * (u - i) / (i + 1);
    }
    acc
}
