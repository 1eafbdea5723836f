//! Stochastic policy head: a squashed Gaussian over `[0, 1]` actions.
//!
//! The trunk network maps an observation to `2A` values — `A` means
//! followed by `A` raw spread values. The raw spread is squashed smoothly
//! into a bounded log-deviation range (so the variance can neither
//! collapse to zero nor explode, and every quantity stays differentiable),
//! then a Gaussian sample is pushed through `tanh` and rescaled from
//! `(-1, 1)` to `(0, 1)`:
//!
//! ```text
//! u = mu + sigma * eps,   eps ~ N(0, 1)
//! a = (tanh(u) + 1) / 2
//! ```
//!
//! The log-density accounts for the change of variables:
//! `log pi(a) = log N(u; mu, sigma) - log(1 - tanh(u)^2) + log 2`.
//! Everything exposes exact gradients for the reparameterized pathwise
//! estimator: the caller supplies `dL/da` and `dL/d log pi`, and gets back
//! trunk parameter gradients.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::sac::mlp::{Mlp, MlpCache, MlpGrads};

/// Lower bound on the log standard deviation (variance floor).
pub const LOG_STD_MIN: f64 = -5.0;
/// Upper bound on the log standard deviation.
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian policy with smoothly bounded spread and `tanh` squashing.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    /// Trunk network: observation -> `2 * action_len` head values.
    pub trunk: Mlp,
    action_len: usize,
}

/// Everything needed to differentiate one sampled action.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    trunk_cache: MlpCache,
    /// Noise the sample was drawn with.
    pub eps: Vec<f64>,
    /// Squashed per-dimension log standard deviations.
    pub log_std: Vec<f64>,
    sigma: Vec<f64>,
    tanh_u: Vec<f64>,
    raw_spread: Vec<f64>,
    /// The `[0, 1]` action.
    pub action: Vec<f64>,
    /// Log-density of the action under the current policy.
    pub log_prob: f64,
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Stable `ln(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))`.
fn ln_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

impl GaussianPolicy {
    /// Policy whose trunk maps `obs_len` inputs through the given hidden
    /// widths to `2 * action_len` head values.
    pub fn new<R: Rng + ?Sized>(
        obs_len: usize,
        hidden: &[usize],
        action_len: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(obs_len);
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_len);
        GaussianPolicy { trunk: Mlp::new(&sizes, rng), action_len }
    }

    /// Dimensionality of the action vector.
    pub fn action_len(&self) -> usize {
        self.action_len
    }

    /// Squash a raw spread value into `[LOG_STD_MIN, LOG_STD_MAX]`.
    fn squash_log_std(raw: f64) -> f64 {
        LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
    }

    /// Deterministic evaluation with caller-provided noise. Sampling is
    /// this with fresh standard-normal noise; finite-difference tests pin
    /// the noise and probe the parameters.
    pub fn evaluate_with_noise(&self, obs: &[f64], eps: &[f64]) -> PolicyCache {
        assert_eq!(eps.len(), self.action_len, "noise width mismatch");
        let trunk_cache = self.trunk.forward_cached(obs);
        let head = trunk_cache.output().to_vec();
        let (mu, raw) = head.split_at(self.action_len);

        let mut log_std = Vec::with_capacity(self.action_len);
        let mut sigma = Vec::with_capacity(self.action_len);
        let mut tanh_u = Vec::with_capacity(self.action_len);
        let mut action = Vec::with_capacity(self.action_len);
        let mut log_prob = 0.0;
        for d in 0..self.action_len {
            let ls = Self::squash_log_std(raw[d]);
            let s = ls.exp();
            let u = mu[d] + s * eps[d];
            let t = u.tanh();
            log_std.push(ls);
            sigma.push(s);
            tanh_u.push(t);
            action.push(0.5 * (t + 1.0));
            log_prob += -ls - HALF_LN_2PI - 0.5 * eps[d] * eps[d] - ln_one_minus_tanh_sq(u)
                + std::f64::consts::LN_2;
        }
        PolicyCache {
            trunk_cache,
            eps: eps.to_vec(),
            log_std,
            sigma,
            tanh_u,
            raw_spread: raw.to_vec(),
            action,
            log_prob,
        }
    }

    /// Draw one action with its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> PolicyCache {
        let eps: Vec<f64> =
            (0..self.action_len).map(|_| rng.sample(StandardNormal)).collect();
        self.evaluate_with_noise(obs, &eps)
    }

    /// Deterministic action for evaluation: the squashed mean.
    pub fn mode(&self, obs: &[f64]) -> Vec<f64> {
        let head = self.trunk.forward(obs);
        head[..self.action_len].iter().map(|m| 0.5 * (m.tanh() + 1.0)).collect()
    }

    /// Log-density of an arbitrary `(0, 1)` action under the current
    /// policy (used by density checks; training differentiates sampled
    /// actions through [`Self::backward`] instead).
    pub fn log_prob_of(&self, obs: &[f64], action: &[f64]) -> f64 {
        assert_eq!(action.len(), self.action_len, "action width mismatch");
        let head = self.trunk.forward(obs);
        let (mu, raw) = head.split_at(self.action_len);
        let mut lp = 0.0;
        for d in 0..self.action_len {
            let ls = Self::squash_log_std(raw[d]);
            let s = ls.exp();
            // Invert the squash: u = atanh(2a - 1), clamped away from the
            // open-interval endpoints for numerical safety.
            let t = (2.0 * action[d] - 1.0).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            let u = t.atanh();
            let z = (u - mu[d]) / s;
            lp += -ls - HALF_LN_2PI - 0.5 * z * z - ln_one_minus_tanh_sq(u)
                + std::f64::consts::LN_2;
        }
        lp
    }

    /// Gradients of `L = d_log_prob * log pi + <d_action, a>` with respect
    /// to the trunk parameters, for the reparameterized sample in `cache`.
    ///
    /// `d_action[d]` is `dL/da_d` (e.g. minus the critic's action
    /// gradient) and `d_log_prob` is the coefficient on the log-density
    /// (e.g. the entropy temperature).
    pub fn backward(&self, cache: &PolicyCache, d_action: &[f64], d_log_prob: f64) -> MlpGrads {
        assert_eq!(d_action.len(), self.action_len, "action gradient width mismatch");
        let a = self.action_len;
        let mut d_head = vec![0.0; 2 * a];
        for d in 0..a {
            let t = cache.tanh_u[d];
            let sech2 = 1.0 - t * t;
            let da_du = 0.5 * sech2;
            // log pi as a function of the head, with eps held fixed:
            // d(log pi)/du = 2 tanh(u); d(log pi)/d(log std) = -1 + 2 tanh(u) eps sigma.
            let dlp_du = 2.0 * t;
            let du_dmu = 1.0;
            let du_dls = cache.sigma[d] * cache.eps[d];

            let d_mu = d_action[d] * da_du * du_dmu + d_log_prob * dlp_du * du_dmu;
            let d_ls = d_action[d] * da_du * du_dls
                + d_log_prob * (-1.0 + dlp_du * du_dls);

            // Chain through the smooth spread squash.
            let raw = cache.raw_spread[d];
            let dls_draw = 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - raw.tanh().powi(2));

            d_head[d] = d_mu;
            d_head[a + d] = d_ls * dls_draw;
        }
        self.trunk.backward(&cache.trunk_cache, &d_head)
    }
}
