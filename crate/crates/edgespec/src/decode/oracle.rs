//! Token oracles: deterministic stand-ins for draft and target language models.
//!
//! The simulator never runs real model weights. Instead, an oracle maps a
//! token prefix to a next-token distribution. [`SyntheticLm`] derives its
//! distribution from a seeded hash of the prefix, so two processes with the
//! same seed agree exactly on every distribution — which makes acceptance
//! statistics reproducible to the bit.
//!
//! A draft/target pair is modeled as two [`SyntheticLm`]s sharing a seed: the
//! target uses `smoothing = 0`, the draft mixes the target distribution with
//! a uniform one (`smoothing` ∈ [0,1] controls the divergence). At
//! `smoothing = 0` the two oracles are identical and every proposal is
//! accepted.

use rand::Rng;

use crate::rng::derive_seed;

/// A next-token distribution source.
///
/// Implementations must be pure: the same prefix always yields the same
/// distribution (a valid probability vector over `vocab_size()` tokens).
pub trait TokenOracle {
    /// Number of tokens in the vocabulary.
    fn vocab_size(&self) -> usize;

    /// Next-token distribution given `prefix` (most recent token last).
    fn distribution(&self, prefix: &[u32]) -> Vec<f64>;
}

/// Index of the largest entry; ties go to the lowest token id.
pub fn argmax(dist: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best as u32
}

/// Inverse-CDF sample from `dist` using one uniform draw from `rng`.
pub fn sample<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        cum += p;
        if u < cum {
            return i as u32;
        }
    }
    // Rounding can leave cum marginally below 1; fall back to the last token.
    (dist.len() - 1) as u32
}

/// Hash-seeded synthetic language model.
///
/// The target distribution for a prefix is `softmax(logits)` where each
/// logit is a uniform value in `[0, LOGIT_SPAN)` derived from
/// `(seed, prefix, token)` by stable integer mixing. `smoothing` blends the
/// result toward uniform: `(1 − s)·target + s/vocab`.
#[derive(Debug, Clone)]
pub struct SyntheticLm {
    seed: u64,
    vocab_size: usize,
    smoothing: f64,
}

/// Spread of the synthetic logits before the softmax. Chosen so desk-scale
/// vocabularies produce peaked but not degenerate distributions (top token
/// typically 5–20% likely at vocab 64).
const LOGIT_SPAN: f64 = 4.0;

/// Default vocabulary size.
pub const DEFAULT_VOCAB: usize = 64;

impl SyntheticLm {
    /// Creates an oracle. `smoothing` must lie in `[0, 1]`.
    ///
    /// # Panics
    /// Panics if `vocab_size == 0` or `smoothing` is outside `[0, 1]`.
    pub fn new(seed: u64, vocab_size: usize, smoothing: f64) -> Self {
        assert!(vocab_size > 0, "vocab_size must be positive");
        assert!(
            (0.0..=1.0).contains(&smoothing),
            "smoothing must be in [0, 1], got {smoothing}"
        );
        Self { seed, vocab_size, smoothing }
    }

    /// Target-model oracle (no smoothing) with the default vocabulary.
    pub fn target(seed: u64) -> Self {
        Self::new(seed, DEFAULT_VOCAB, 0.0)
    }

    /// Draft-model oracle sharing `seed` with the target, diverging by `smoothing`.
    pub fn draft(seed: u64, smoothing: f64) -> Self {
        Self::new(seed, DEFAULT_VOCAB, smoothing)
    }

    /// The divergence knob this oracle was built with.
    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    fn base_distribution(&self, prefix: &[u32]) -> Vec<f64> {
        // Stable hash of (seed, prefix): FNV-1a over little-endian bytes.
        let mut bytes = Vec::with_capacity(8 + prefix.len() * 4);
        bytes.extend_from_slice(&self.seed.to_le_bytes());
        for &t in prefix {
            bytes.extend_from_slice(&t.to_le_bytes());
        }
        let h = fnv_bytes(&bytes);

        let mut logits = Vec::with_capacity(self.vocab_size);
        for v in 0..self.vocab_size as u64 {
            let x = derive_seed(h, "logit", v);
            // Top 53 bits → uniform in [0, 1), scaled to the logit span.
            let u = (x >> 11) as f64 / (1u64 << 53) as f64;
            logits.push(u * LOGIT_SPAN);
        }

        // Softmax with max-subtraction for numerical stability.
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut dist: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = dist.iter().sum();
        for p in &mut dist {
            *p /= sum;
        }
        dist
    }
}

fn fnv_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl TokenOracle for SyntheticLm {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn distribution(&self, prefix: &[u32]) -> Vec<f64> {
        let mut dist = self.base_distribution(prefix);
        if self.smoothing > 0.0 {
            let uniform = 1.0 / self.vocab_size as f64;
            for p in &mut dist {
                *p = (1.0 - self.smoothing) * *p + self.smoothing * uniform;
            }
            // Renormalize to absorb rounding from the blend.
            let sum: f64 = dist.iter().sum();
            for p in &mut dist {
                *p /= sum;
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn distribution_is_a_valid_probability_vector() {
        let lm = SyntheticLm::new(9, 64, 0.0);
        for prefix_len in 0..8 {
            let prefix: Vec<u32> = (0..prefix_len).collect();
            let dist = lm.distribution(&prefix);
            assert_eq!(dist.len(), 64);
            assert!(dist.iter().all(|&p| p >= 0.0));
            let sum: f64 = dist.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum={sum}");
        }
    }

    #[test]
    fn same_seed_same_prefix_is_pure() {
        let a = SyntheticLm::new(3, 32, 0.2);
        let b = SyntheticLm::new(3, 32, 0.2);
        let prefix = [5u32, 1, 44];
        assert_eq!(a.distribution(&prefix), b.distribution(&prefix));
    }

    #[test]
    fn zero_smoothing_draft_matches_target() {
        let target = SyntheticLm::new(11, 64, 0.0);
        let draft = SyntheticLm::new(11, 64, 0.0);
        for p in [vec![], vec![1], vec![1, 2, 3]] {
            assert_eq!(target.distribution(&p), draft.distribution(&p));
        }
    }

    #[test]
    fn smoothing_preserves_argmax_but_changes_mass() {
        let target = SyntheticLm::new(11, 64, 0.0);
        let draft = SyntheticLm::new(11, 64, 0.3);
        let p = target.distribution(&[7, 7]);
        let q = draft.distribution(&[7, 7]);
        assert_eq!(argmax(&p), argmax(&q), "uniform blending is rank-preserving");
        assert!(p[argmax(&p) as usize] > q[argmax(&q) as usize]);
    }

    #[test]
    fn prefix_extension_changes_the_distribution() {
        let lm = SyntheticLm::new(4, 64, 0.0);
        let a = lm.distribution(&[1, 2]);
        let b = lm.distribution(&[1, 2, 3]);
        assert_ne!(a, b);
    }

    #[test]
    fn sampling_follows_the_distribution() {
        let lm = SyntheticLm::new(21, 8, 0.0);
        let dist = lm.distribution(&[]);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 200_000;
        let mut counts = vec![0usize; 8];
        for _ in 0..n {
            counts[sample(&dist, &mut rng) as usize] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - dist[i]).abs() < 0.01,
                "token {i}: freq {freq} vs p {}",
                dist[i]
            );
        }
    }

    #[test]
    fn argmax_ties_go_to_lowest_id() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }
}
