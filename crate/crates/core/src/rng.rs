//! Per-sample random streams.
//!
//! Every sample of every batch draws from its own stream, keyed by
//! `(master_seed, epoch, batch_index, sample_index)`. The derivation is:
//!
//! ```text
//! mix(z)   = splitmix64 finalizer of (z + 0x9E3779B97F4A7C15)
//! key      = mix(mix(mix(mix(master_seed ^ DOMAIN) ^ epoch) ^ batch_index) ^ sample_index)
//! seed[i]  = i-th output of a splitmix64 generator started at `key`, i = 0..4,
//!            each written little-endian into bytes 8i..8i+8
//! stream   = ChaCha8 seeded with those 32 bytes
//! ```
//!
//! Integer draws use rejection sampling on raw 64-bit outputs, and unit
//! draws use the top 53 bits, so the mapping from stream words to values
//! does not depend on any particular `rand` release.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const DOMAIN: u64 = 0x7370_6563_6164_6170; // "specadap"

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(z: u64) -> u64 {
    splitmix_finalize(z.wrapping_add(GOLDEN_GAMMA))
}

/// The 64-bit key identifying one sample's stream.
pub fn stream_key(master_seed: u64, epoch: u64, batch_index: u64, sample_index: u64) -> u64 {
    let k = mix(master_seed ^ DOMAIN);
    let k = mix(k ^ epoch);
    let k = mix(k ^ batch_index);
    mix(k ^ sample_index)
}

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    /// Starts a stream directly from a 64-bit key.
    pub fn from_key(key: u64) -> Self {
        let mut seed = [0u8; 32];
        let mut state = key;
        for chunk in seed.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&splitmix_finalize(state).to_le_bytes());
        }
        SampleStream {
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn uniform_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        let span = (hi - lo) as u64;
        if span == u64::MAX {
            return lo + self.next_u64() as usize;
        }
        let range = span + 1;
        let zone = u64::MAX - (u64::MAX - range + 1) % range;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return lo + (v % range) as usize;
            }
        }
    }

    /// Uniform real in `[0, 1)` with 53 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Stream for one sample of one batch.
pub fn derive_sample_stream(
    master_seed: u64,
    epoch: u64,
    batch_index: u64,
    sample_index: u64,
) -> SampleStream {
    SampleStream::from_key(stream_key(master_seed, epoch, batch_index, sample_index))
}
