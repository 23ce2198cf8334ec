//! Unbiased random bits with exact consumption accounting.
//!
//! Every sampler in this crate pulls randomness through a [`BitSource`]. The
//! source hands out bits from a ChaCha20 keystream one bit-field at a time, so
//! `bits_consumed` counts exactly the bits a caller asked for and never the
//! slack left over in a machine word. That counter is what the time-obliviousness
//! audits in [`crate::verify`] look at.
//!
//! Bits spent inside [`BitSource::uniform_below`] are additionally tallied in
//! `public_bits`: the rejection loop there depends only on the public range,
//! so audits exempt it from the constant-consumption check.

use rand_chacha::ChaCha20Rng;
use rand_core::{OsRng, RngCore, SeedableRng, TryRngCore};

/// How a [`BitSource`] was seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    /// Reproducible stream derived from a 64-bit seed.
    Seeded(u64),
    /// Keyed from operating-system entropy.
    SystemEntropy,
}

/// Labels for independent substreams of a seeded source.
///
/// Each label maps to a distinct ChaCha stream id, so a substream's contents
/// depend only on the root seed and the label, not on how much randomness the
/// parent has already handed out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Threshold,
    Blanket,
    FreshNoise,
    UpperBound,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Threshold => 1,
            Stream::Blanket => 2,
            Stream::FreshNoise => 3,
            Stream::UpperBound => 4,
            Stream::Custom(x) => 0x1000 + x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BitSource {
    rng: ChaCha20Rng,
    mode: SourceMode,
    stream: u64,
    buf: u64,
    avail: u32,
    bits_consumed: u64,
    public_bits: u64,
}

impl BitSource {
    pub fn seeded(seed: u64) -> Self {
        Self::from_parts(ChaCha20Rng::seed_from_u64(seed), SourceMode::Seeded(seed), 0)
    }

    pub fn from_entropy() -> Self {
        let mut key = [0u8; 32];
        OsRng
            .try_fill_bytes(&mut key)
            .expect("operating system entropy source unavailable");
        Self::from_parts(ChaCha20Rng::from_seed(key), SourceMode::SystemEntropy, 0)
    }

    fn from_parts(rng: ChaCha20Rng, mode: SourceMode, stream: u64) -> Self {
        BitSource {
            rng,
            mode,
            stream,
            buf: 0,
            avail: 0,
            bits_consumed: 0,
            public_bits: 0,
        }
    }

    pub fn mode(&self) -> SourceMode {
        self.mode
    }

    /// Derives an independent source for `label`.
    ///
    /// Seeded sources derive the child from the root seed and the label only,
    /// so forking is repeatable and does not disturb the parent. Entropy-mode
    /// sources key the child from fresh OS entropy.
    pub fn fork(&self, label: Stream) -> BitSource {
        match self.mode {
            SourceMode::Seeded(seed) => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let stream = self.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ label.id();
                rng.set_stream(stream);
                Self::from_parts(rng, self.mode, stream)
            }
            SourceMode::SystemEntropy => BitSource::from_entropy(),
        }
    }

    /// Total bits handed out so far.
    pub fn bits_consumed(&self) -> u64 {
        self.bits_consumed
    }

    /// Bits handed out by [`uniform_below`](Self::uniform_below) so far.
    pub fn public_bits(&self) -> u64 {
        self.public_bits
    }

    /// Bits whose count must not depend on private data.
    pub fn private_bits(&self) -> u64 {
        self.bits_consumed - self.public_bits
    }

    /// Returns `w` uniform bits as an integer in `[0, 2^w)`.
    ///
    /// `w = 0` returns 0 and consumes nothing.
    pub fn draw_bits(&mut self, w: u32) -> u64 {
        assert!(w <= 64, "draw_bits: width {w} exceeds the 64-bit word");
        if w == 0 {
            return 0;
        }
        self.bits_consumed += u64::from(w);
        if w <= self.avail {
            let out = low_bits(self.buf, w);
            self.buf = shr(self.buf, w);
            self.avail -= w;
            return out;
        }
        // Take what is buffered, then top up from a fresh word.
        let have = self.avail;
        let head = self.buf;
        let word = self.rng.next_u64();
        let need = w - have;
        let tail = low_bits(word, need);
        self.buf = shr(word, need);
        self.avail = 64 - need;
        head | shl(tail, have)
    }

    /// Returns `w ≤ 128` uniform bits.
    pub fn draw_wide(&mut self, w: u32) -> u128 {
        assert!(w <= 128, "draw_wide: width {w} exceeds 128 bits");
        if w <= 64 {
            return u128::from(self.draw_bits(w));
        }
        let lo = u128::from(self.draw_bits(64));
        let hi = u128::from(self.draw_bits(w - 64));
        lo | (hi << 64)
    }

    /// Uniform integer in `[1, d]` by rejection on `⌈log₂ d⌉`-bit draws.
    ///
    /// The number of rounds depends only on `d`; the bits are booked as public.
    pub fn uniform_below(&mut self, d: u64) -> u64 {
        assert!(d >= 1, "uniform_below: empty range");
        let w = ceil_log2_u64(d);
        let before = self.bits_consumed;
        let v = loop {
            let v = self.draw_bits(w);
            if v < d {
                break v;
            }
        };
        self.public_bits += self.bits_consumed - before;
        v + 1
    }

    /// One fair bit.
    pub fn coin(&mut self) -> bool {
        self.draw_bits(1) == 1
    }
}

/// `⌈log₂ d⌉` for `d ≥ 1`.
pub fn ceil_log2_u64(d: u64) -> u32 {
    debug_assert!(d >= 1);
    64 - (d - 1).leading_zeros()
}

#[inline]
fn low_bits(x: u64, w: u32) -> u64 {
    if w >= 64 {
        x
    } else {
        x & ((1u64 << w) - 1)
    }
}

#[inline]
fn shr(x: u64, w: u32) -> u64 {
    if w >= 64 {
        0
    } else {
        x >> w
    }
}

#[inline]
fn shl(x: u64, w: u32) -> u64 {
    if w >= 64 {
        0
    } else {
        x << w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counter_tracks_requested_widths() {
        let mut src = BitSource::seeded(42);
        src.draw_bits(1);
        src.draw_bits(1);
        assert_eq!(src.bits_consumed(), 2);
        src.draw_bits(63);
        src.draw_bits(64);
        src.draw_wide(100);
        assert_eq!(src.bits_consumed(), 2 + 63 + 64 + 100);
    }

    #[test]
    fn byte_draw_in_range() {
        let mut src = BitSource::seeded(1);
        for _ in 0..1000 {
            assert!(src.draw_bits(8) <= 255);
        }
    }

    #[test]
    fn replay_is_identical() {
        let mut a = BitSource::seeded(7);
        let mut b = BitSource::seeded(7);
        let widths = [1u32, 5, 64, 3, 17, 33, 64, 2];
        for &w in widths.iter().cycle().take(200) {
            assert_eq!(a.draw_bits(w), b.draw_bits(w));
        }
        assert_eq!(a.bits_consumed(), b.bits_consumed());
    }

    #[test]
    fn bit_packing_is_a_plain_bitstream() {
        // Drawing 64 single bits must reproduce one 64-bit draw, LSB first.
        let mut a = BitSource::seeded(9);
        let mut b = BitSource::seeded(9);
        let word = a.draw_bits(64);
        let mut rebuilt = 0u64;
        for i in 0..64 {
            rebuilt |= b.draw_bits(1) << i;
        }
        assert_eq!(word, rebuilt);
    }

    #[test]
    fn uniform_below_singleton_is_free() {
        let mut src = BitSource::seeded(3);
        for _ in 0..10 {
            assert_eq!(src.uniform_below(1), 1);
        }
        assert_eq!(src.bits_consumed(), 0);
    }

    #[test]
    fn uniform_below_eight_is_flat() {
        let mut src = BitSource::seeded(11);
        let trials = 1_000_000u64;
        let mut counts = [0u64; 8];
        for _ in 0..trials {
            let v = src.uniform_below(8);
            assert!((1..=8).contains(&v));
            counts[(v - 1) as usize] += 1;
        }
        let p = 1.0 / 8.0;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - trials as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
        // Power-of-two ranges never reject.
        assert_eq!(src.bits_consumed(), 3 * trials);
        assert_eq!(src.public_bits(), 3 * trials);
    }

    #[test]
    fn uniform_below_five_accepts_five_eighths() {
        let mut src = BitSource::seeded(5);
        let calls = 200_000u64;
        for _ in 0..calls {
            let v = src.uniform_below(5);
            assert!((1..=5).contains(&v));
        }
        let rounds = src.bits_consumed() / 3;
        let acc = calls as f64 / rounds as f64;
        // Rounds per call are geometric with success 5/8.
        let sd = (3.0f64 / 5.0 / calls as f64).sqrt();
        assert!((acc - 5.0 / 8.0).abs() < 4.0 * sd * 5.0 / 8.0, "acceptance {acc}");
    }

    #[test]
    fn forks_are_repeatable_and_label_dependent() {
        let root = BitSource::seeded(99);
        let mut a = root.fork(Stream::Blanket);
        let mut b = root.fork(Stream::Blanket);
        let mut c = root.fork(Stream::FreshNoise);
        let xa: Vec<u64> = (0..8).map(|_| a.draw_bits(64)).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.draw_bits(64)).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.draw_bits(64)).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);

        // Forking after the parent consumed bits gives the same child.
        let mut used = BitSource::seeded(99);
        used.draw_bits(64);
        let mut d = used.fork(Stream::Blanket);
        let xd: Vec<u64> = (0..8).map(|_| d.draw_bits(64)).collect();
        assert_eq!(xa, xd);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2_u64(1), 0);
        assert_eq!(ceil_log2_u64(2), 1);
        assert_eq!(ceil_log2_u64(5), 3);
        assert_eq!(ceil_log2_u64(8), 3);
        assert_eq!(ceil_log2_u64(9), 4);
        assert_eq!(ceil_log2_u64(u64::MAX), 64);
    }
}
