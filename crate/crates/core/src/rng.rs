//! Deterministic random streams.
//!
//! Every replication draws from its own [`RngStream`], identified by a
//! `(master_seed, stream_index)` pair. The generator is ChaCha with 8 rounds
//! in counter mode: the 256-bit key is the first four outputs of SplitMix64
//! seeded with `master_seed` (little-endian), and the 64-bit ChaCha stream id
//! is `stream_index`. Both steps are fixed, so the same pair yields the same
//! sequence on every platform, whatever the thread count.
//!
//! Stream indices below [`INNER_STREAM_FLAG`] are reserved for outer
//! replications; simulation-based calibration draws from indices with that
//! bit set (see [`inner_stream_index`]).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// High bit marking the index range used by inner (calibration) simulations.
pub const INNER_STREAM_FLAG: u64 = 1 << 63;

const POINT_BITS: u32 = 22;
const REP_BITS: u32 = 20;

/// Stream index for inner replication `rep` at calibration point `point`
/// within outer replication `outer`.
///
/// Layout: `1 | outer (21 bits) | point (22 bits) | rep (20 bits)`.
pub fn inner_stream_index(outer: u64, point: u64, rep: u64) -> u64 {
    debug_assert!(rep < (1 << REP_BITS));
    debug_assert!(point < (1 << POINT_BITS));
    debug_assert!(outer < (1 << (63 - POINT_BITS - REP_BITS)));
    INNER_STREAM_FLAG | (outer << (POINT_BITS + REP_BITS)) | (point << REP_BITS) | rep
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
}

/// Derives the stream `index` of `master_seed`.
pub fn derive_stream(master_seed: u64, index: u64) -> RngStream {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut inner = ChaCha8Rng::from_seed(key);
    inner.set_stream(index);
    RngStream {
        master_seed,
        stream_index: index,
        inner,
    }
}

impl RngStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    #[inline]
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Draws an index from a probability vector by inverting its cdf.
    ///
    /// Rounding slack in the last cell falls on the last index with positive
    /// mass.
    #[inline]
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}
