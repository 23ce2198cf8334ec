//! Stable LSD radix sort on integer keys.

const DIGIT_BITS: u32 = 11;
const BUCKETS: usize = 1 << DIGIT_BITS;

/// Sorts `v` stably by `key`, where every key is at most `max_key`.
///
/// Runs `⌈bits(max_key) / 11⌉` counting passes, so the cost is linear in
/// `v.len()` for keys of bounded width.
pub fn radix_sort_by_key<T, F>(v: &mut Vec<T>, max_key: u64, key: F)
where
    T: Copy,
    F: Fn(&T) -> u64,
{
    if v.len() < 2 {
        return;
    }
    let bits = 64 - max_key.leading_zeros();
    let passes = bits.div_ceil(DIGIT_BITS);
    let mut scratch: Vec<T> = Vec::with_capacity(v.len());
    for pass in 0..passes {
        let shift = pass * DIGIT_BITS;
        let digit = |x: &T| ((key(x) >> shift) as usize) & (BUCKETS - 1);
        let mut offsets = [0usize; BUCKETS + 1];
        for x in v.iter() {
            offsets[digit(x) + 1] += 1;
        }
        for b in 0..BUCKETS {
            offsets[b + 1] += offsets[b];
        }
        scratch.clear();
        scratch.resize(v.len(), v[0]);
        for x in v.iter() {
            let b = digit(x);
            scratch[offsets[b]] = *x;
            offsets[b] += 1;
        }
        std::mem::swap(v, &mut scratch);
    }
}

/// Sorts plain integers.
pub fn radix_sort(v: &mut Vec<u64>) {
    let max = v.iter().copied().max().unwrap_or(0);
    radix_sort_by_key(v, max, |&x| x);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        let mut v: Vec<u64> = vec![];
        radix_sort(&mut v);
        assert!(v.is_empty());
        let mut v = vec![5, 3, 9, 3, 0, u64::MAX, 1 << 40];
        radix_sort(&mut v);
        assert_eq!(v, vec![0, 3, 3, 5, 9, 1 << 40, u64::MAX]);
    }

    #[test]
    fn stable_on_ties() {
        let mut v: Vec<(u64, u32)> = vec![(2, 0), (1, 1), (2, 2), (1, 3), (0, 4)];
        radix_sort_by_key(&mut v, 2, |p| p.0);
        assert_eq!(v, vec![(0, 4), (1, 1), (1, 3), (2, 0), (2, 2)]);
    }

    proptest! {
        #[test]
        fn matches_std_sort(mut v in prop::collection::vec(any::<u64>(), 0..500), cap in 1u64..u64::MAX) {
            for x in v.iter_mut() {
                *x %= cap;
            }
            let mut expect = v.clone();
            expect.sort_unstable();
            radix_sort(&mut v);
            prop_assert_eq!(v, expect);
        }
    }
}
