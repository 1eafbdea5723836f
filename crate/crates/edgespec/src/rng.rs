//! Seeded random-number streams.
//!
//! Every stochastic component draws from its own named stream (`channel`,
//! `tasks`, `policy`, `replay`, `baseline`, ...) derived from one master seed.
//! Perturbing one stream — say, re-rolling the channel — leaves every other
//! source of randomness untouched, which keeps ablations honest and makes
//! whole runs bit-reproducible from `(config, master seed)` alone.
//!
//! Streams are ChaCha12 generators keyed by a hash of `(master, label, index)`.
//! ChaCha output is identical across platforms and Rust versions, unlike
//! `std`'s hasher, so the derivation below hand-rolls FNV-1a + SplitMix64.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice; stable across platforms. Also used to
/// fingerprint configuration text in checkpoint files.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// SplitMix64 finalizer: a cheap, well-mixed 64-bit permutation.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit sub-seed from a master seed, a label, and an index.
///
/// Useful when a component needs raw seed material rather than a generator
/// (for example, per-slot-per-link fading draws).
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = fnv1a(label.as_bytes());
    h ^= splitmix64(master);
    h = h.wrapping_mul(FNV_PRIME);
    h ^= splitmix64(index.wrapping_add(0x51ed_270b));
    splitmix64(h)
}

/// Returns the named stream for `(master, label)`.
pub fn stream(master: u64, label: &str) -> ChaCha12Rng {
    substream(master, label, 0)
}

/// Returns the `index`-th sub-stream of the named stream.
///
/// Sub-streams with distinct `(label, index)` pairs are statistically
/// independent; the same triple always yields the same generator state.
pub fn substream(master: u64, label: &str, index: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    let mut x = derive_seed(master, label, index);
    for chunk in seed.chunks_exact_mut(8) {
        x = splitmix64(x);
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
