//! Batch verification: the target model's accept/reject rule.
//!
//! A draft batch of γ tokens is checked against γ+1 target distributions
//! (one per drafted position, plus one for the bonus token granted when the
//! whole batch survives). Two modes exist:
//!
//! * **Greedy** — accept a token iff it equals the target distribution's
//!   argmax. Deterministic; used as the exact-equivalence oracle across
//!   decoding engines.
//! * **Stochastic** — accept token `x` with probability
//!   `min(1, p[x]/q[x])` where `p`/`q` are the target/draft probabilities.
//!   Rejected positions are regenerated directly from the target
//!   distribution (no residual-distribution resampling), so only token ids
//!   ever cross the device→server link.

use rand::Rng;

use crate::error::{Error, Result};
use crate::decode::oracle::{argmax, sample};

/// How draft tokens are checked against the target model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    /// Accept iff the draft token equals the target argmax.
    Greedy,
    /// Accept with probability `min(1, p/q)`; regenerate rejections from the target.
    Stochastic,
}

/// Probability of accepting a draft token with target probability `p_val`
/// and draft probability `q_val`: `1` if `p_val ≥ q_val`, else `p_val/q_val`.
///
/// `q_val = 0` is defined as accept (probability 1): the draft sampler can
/// never propose a token it assigns zero mass, so the branch is unreachable
/// in simulation but kept total for direct callers.
pub fn acceptance_probability(p_val: f64, q_val: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_val), "p_val out of range: {p_val}");
    debug_assert!((0.0..=1.0).contains(&q_val), "q_val out of range: {q_val}");
    if q_val == 0.0 || p_val >= q_val {
        1.0
    } else {
        p_val / q_val
    }
}

/// Outcome of verifying one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOutcome {
    /// Number of draft tokens accepted before the first rejection (γ if none).
    pub accepted: usize,
    /// Token emitted after the accepted run: the target's replacement at the
    /// rejected position, or the bonus token when the whole batch survived.
    pub replacement: u32,
}

/// Verifies `draft_tokens` against the target.
///
/// `target_dists` must hold exactly `draft_tokens.len() + 1` distributions:
/// one per drafted position plus the bonus-token distribution used on full
/// acceptance. `draft_dists` holds the draft model's distribution per
/// position (consulted only in stochastic mode, but always required so call
/// sites can't silently drop it).
///
/// Stochastic mode consumes `rng` in a fixed order: one uniform draw per
/// examined position (up to and including the rejected one), then one draw
/// to sample the replacement or bonus token.
pub fn verify_batch<R: Rng + ?Sized>(
    target_dists: &[Vec<f64>],
    draft_tokens: &[u32],
    draft_dists: &[Vec<f64>],
    mode: VerificationMode,
    rng: &mut R,
) -> Result<VerifyOutcome> {
    let gamma = draft_tokens.len();
    if gamma == 0 {
        return Err(Error::Contract("verify_batch: empty draft batch".into()));
    }
    if draft_dists.len() != gamma {
        return Err(Error::Contract(format!(
            "verify_batch: {} draft distributions for {} tokens",
            draft_dists.len(),
            gamma
        )));
    }
    if target_dists.len() != gamma + 1 {
        return Err(Error::Contract(format!(
            "verify_batch: expected {} target distributions (γ + bonus), got {}",
            gamma + 1,
            target_dists.len()
        )));
    }

    for (i, &token) in draft_tokens.iter().enumerate() {
        let p = &target_dists[i];
        let accepted = match mode {
            VerificationMode::Greedy => token == argmax(p),
            VerificationMode::Stochastic => {
                let q = &draft_dists[i];
                let prob = acceptance_probability(p[token as usize], q[token as usize]);
                rng.random::<f64>() < prob
            }
        };
        if !accepted {
            let replacement = match mode {
                VerificationMode::Greedy => argmax(p),
                VerificationMode::Stochastic => sample(p, rng),
            };
            return Ok(VerifyOutcome { accepted: i, replacement });
        }
    }

    // Full acceptance: the bonus token comes from the extra distribution.
    let bonus_dist = &target_dists[gamma];
    let replacement = match mode {
        VerificationMode::Greedy => argmax(bonus_dist),
        VerificationMode::Stochastic => sample(bonus_dist, rng),
    };
    Ok(VerifyOutcome { accepted: gamma, replacement })
}
