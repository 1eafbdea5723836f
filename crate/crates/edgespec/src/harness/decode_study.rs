//! Grid study over decoding engines, speculation depths, and uplink rates.
//!
//! For every (seed, rate, depth) cell the study runs the sequential
//! draft-then-verify engine and the pipelined engine on the same synthetic
//! model pair, plus one server-only reference per (seed, rate). Each run
//! becomes one [`MetricsRow`] carrying job latency, throughput, and (for
//! the pipelined engine) the device-idle fraction.

use crate::decode::{
    run_conventional, run_parallel, target_only_decode, DecodeConfig, LatencyBreakdown,
    LinkTiming, SyntheticLm, VerificationMode,
};
use crate::error::Result;
use crate::harness::metrics::{MetricsRow, METRICS_SCHEMA_VERSION};
use crate::rng::substream;

/// Engine under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    /// Server decodes alone; no drafting, no uplink.
    ServerOnly,
    /// Strictly sequential draft → upload → verify rounds.
    Conventional,
    /// Drafting, uploading, and verifying overlap in a pipeline.
    Parallel,
}

impl EngineKind {
    /// Name used in the metrics `policy` column.
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::ServerOnly => "server-only",
            EngineKind::Conventional => "conventional",
            EngineKind::Parallel => "parallel",
        }
    }
}

/// Full grid specification.
///
/// The defaults describe a balanced regime where device compute, uplink
/// time, and server compute are the same order of magnitude, so neither
/// engine wins by orders of magnitude and the depth/rate trends are
/// visible.
#[derive(Debug, Clone)]
pub struct DecodeStudyParams {
    /// Speculation depths to sweep.
    pub gammas: Vec<usize>,
    /// Uplink rates to sweep, bits/s.
    pub rates_bps: Vec<f64>,
    /// Independent model/acceptance seeds.
    pub seeds: Vec<u64>,
    /// Draft-model divergence from the target, in `[0, 1]`.
    pub smoothing: f64,
    /// Tokens to emit per run.
    pub max_tokens: usize,
    pub vocab_size: usize,
    pub bits_per_token: f64,
    pub draft_flops_per_token: f64,
    pub verify_flops_per_token: f64,
    /// Fixed per-batch framing cost, bits; dominates the uplink time of
    /// small batches.
    pub batch_overhead_bits: f64,
    pub device_flops: f64,
    pub server_flops_effective: f64,
    pub server_queue_delay_s: f64,
    pub verification_mode: VerificationMode,
}

impl Default for DecodeStudyParams {
    fn default() -> Self {
        Self {
            gammas: (1..=8).collect(),
            rates_bps: vec![2e5, 5e5, 1e6, 2e6, 5e6, 1e7, 1e8],
            seeds: (0..10).collect(),
            smoothing: 0.1,
            max_tokens: 96,
            vocab_size: 64,
            bits_per_token: 64.0,
            draft_flops_per_token: 1e8,
            verify_flops_per_token: 1e9,
            batch_overhead_bits: 3e5,
            device_flops: 1e9,
            server_flops_effective: 2e9,
            server_queue_delay_s: 0.0,
            verification_mode: VerificationMode::Stochastic,
        }
    }
}

impl DecodeStudyParams {
    fn decode_config(&self, gamma: usize) -> DecodeConfig {
        DecodeConfig {
            gamma,
            max_tokens: self.max_tokens,
            eos_token: None,
            bits_per_token: self.bits_per_token,
            draft_flops_per_token: self.draft_flops_per_token,
            verify_flops_per_token: self.verify_flops_per_token,
            verification_mode: self.verification_mode,
            batch_overhead_bits: self.batch_overhead_bits,
        }
    }

    fn timing(&self, rate_bps: f64) -> LinkTiming {
        LinkTiming {
            device_flops: self.device_flops,
            server_flops_effective: self.server_flops_effective,
            uplink_rate: rate_bps,
            server_queue_delay: self.server_queue_delay_s,
        }
    }
}

/// Runs one grid cell and returns its latency breakdown.
///
/// Every cell draws from its own seed substream, so results do not depend
/// on grid order. `gamma` is ignored by [`EngineKind::ServerOnly`].
pub fn run_cell(
    params: &DecodeStudyParams,
    engine: EngineKind,
    gamma: usize,
    rate_bps: f64,
    seed: u64,
) -> Result<LatencyBreakdown> {
    let target = SyntheticLm::new(seed, params.vocab_size, 0.0);
    let draft = SyntheticLm::new(seed, params.vocab_size, params.smoothing);
    let cfg = params.decode_config(gamma.max(1));
    let timing = params.timing(rate_bps);

    let breakdown = match engine {
        EngineKind::ServerOnly => target_only_decode(&target, &cfg, &timing)?.1,
        EngineKind::Conventional => {
            let mut rng = substream(seed, "decode", cell_index(1, gamma));
            run_conventional(&draft, &target, &cfg, &timing, &mut rng)?.1
        }
        EngineKind::Parallel => {
            let mut rng = substream(seed, "decode", cell_index(2, gamma));
            run_parallel(&draft, &target, &cfg, &timing, &mut rng)?.1
        }
    };
    Ok(breakdown)
}

/// Stream index for a grid cell. The rate is deliberately excluded: cells
/// that differ only in uplink rate share their acceptance draws, so the
/// latency-vs-rate trend is a paired comparison instead of luck between
/// independent streams.
fn cell_index(engine: u64, gamma: usize) -> u64 {
    (engine << 56) ^ ((gamma as u64) << 48)
}

fn row(
    run_id: &str,
    seed: u64,
    engine: EngineKind,
    gamma: Option<usize>,
    rate_bps: f64,
    b: &LatencyBreakdown,
) -> MetricsRow {
    MetricsRow {
        schema_version: METRICS_SCHEMA_VERSION,
        run_id: run_id.to_string(),
        seed,
        slot: None,
        policy: engine.name().to_string(),
        gamma,
        rate_bps: Some(rate_bps),
        w: None,
        mean_latency_s: b.total_s,
        mean_objective: None,
        mean_energy_j: None,
        energy_high_batt_j: None,
        energy_low_batt_j: None,
        tokens_per_s: Some(b.tokens_per_second()),
        psd_idle_frac: (engine == EngineKind::Parallel).then(|| b.idle_fraction()),
    }
}

/// Runs the full grid and returns one row per run, in deterministic order
/// (seed-major, then rate, then engine, then depth).
pub fn decode_study(params: &DecodeStudyParams, run_id: &str) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &seed in &params.seeds {
        for &rate in &params.rates_bps {
            let b = run_cell(params, EngineKind::ServerOnly, 1, rate, seed)?;
            rows.push(row(run_id, seed, EngineKind::ServerOnly, None, rate, &b));
            for engine in [EngineKind::Conventional, EngineKind::Parallel] {
                for &gamma in &params.gammas {
                    let b = run_cell(params, engine, gamma, rate, seed)?;
                    rows.push(row(run_id, seed, engine, Some(gamma), rate, &b));
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params() -> DecodeStudyParams {
        DecodeStudyParams {
            gammas: vec![2, 4],
            rates_bps: vec![5e5, 1e6, 1e7, 1e8],
            seeds: (0..6).collect(),
            max_tokens: 48,
            ..DecodeStudyParams::default()
        }
    }

    fn mean_latency(
        rows: &[MetricsRow],
        policy: &str,
        gamma: Option<usize>,
        rate: f64,
    ) -> f64 {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.policy == policy && r.gamma == gamma && r.rate_bps == Some(rate))
            .map(|r| r.mean_latency_s)
            .collect();
        assert!(!vals.is_empty());
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn grid_has_one_row_per_cell_in_stable_order() {
        let params = small_params();
        let rows = decode_study(&params, "decode-study").unwrap();
        // Per seed × rate: 1 server-only + 2 engines × 2 depths.
        assert_eq!(rows.len(), 6 * 4 * (1 + 2 * 2));
        let again = decode_study(&params, "decode-study").unwrap();
        assert_eq!(rows, again);

        // Server-only rows carry no depth and no idle fraction.
        let so = rows.iter().find(|r| r.policy == "server-only").unwrap();
        assert_eq!(so.gamma, None);
        assert_eq!(so.psd_idle_frac, None);
        // Pipelined rows carry an idle fraction in [0, 1].
        let par = rows.iter().find(|r| r.policy == "parallel").unwrap();
        let idle = par.psd_idle_frac.unwrap();
        assert!((0.0..=1.0).contains(&idle));
    }

    #[test]
    fn latency_saturates_as_the_uplink_rate_grows() {
        let params = small_params();
        let rows = decode_study(&params, "decode-study").unwrap();
        for policy in ["conventional", "parallel"] {
            let slow = mean_latency(&rows, policy, Some(4), 5e5);
            let mid = mean_latency(&rows, policy, Some(4), 1e6);
            let fast = mean_latency(&rows, policy, Some(4), 1e7);
            let faster = mean_latency(&rows, policy, Some(4), 1e8);
            assert!(
                slow > mid && mid > fast,
                "{policy}: latency should fall with rate: {slow} {mid} {fast}"
            );
            // Past the compute bound another 10x of rate buys almost nothing.
            let gain = (fast - faster) / faster;
            assert!(
                gain < 0.05,
                "{policy}: rate 1e7→1e8 still gained {gain:.3}"
            );
        }
    }

    #[test]
    fn pipelining_beats_sequential_rounds_in_the_balanced_regime() {
        let params = small_params();
        let rows = decode_study(&params, "decode-study").unwrap();
        let conventional = mean_latency(&rows, "conventional", Some(4), 1e6);
        let parallel = mean_latency(&rows, "parallel", Some(4), 1e6);
        assert!(
            parallel < conventional,
            "pipelined {parallel} should beat sequential {conventional}"
        );
    }
}
