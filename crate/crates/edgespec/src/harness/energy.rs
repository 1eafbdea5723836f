//! Energy-weight sweep: how the learned system trades latency for energy.
//!
//! For each weight in the sweep a fresh learner is trained under that
//! weight (the weight shapes rewards, the association stage, and the
//! learned shares alike), then rolled out deterministically. One aggregate
//! row per (weight, seed) pair comes back, carrying the weight in the `w`
//! column so downstream summaries can group by it.

use crate::error::Result;
use crate::harness::metrics::MetricsRow;
use crate::harness::uara::{rollout, PolicyKind};
use crate::net::scenario::ScenarioConfig;
use crate::sac::train;

/// Trains and evaluates the learned policy at one energy weight.
///
/// Returns the aggregate rollout row (the `w` column reflects the weight
/// trained and evaluated under).
pub fn run_at_weight(
    cfg: &ScenarioConfig,
    w: f64,
    master_seed: u64,
    run_id: &str,
) -> Result<MetricsRow> {
    let mut weighted = cfg.clone();
    weighted.objective.energy_weight = w;
    let out = train(&weighted, master_seed)?;
    let rolled = rollout(&weighted, PolicyKind::SwapSac, Some(&out.learner), master_seed, run_id)?;
    Ok(rolled.aggregate)
}

/// Full sweep: weight-major, then seed. Deterministic row order.
pub fn sweep_w(
    cfg: &ScenarioConfig,
    weights: &[f64],
    seeds: &[u64],
    run_id: &str,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::with_capacity(weights.len() * seeds.len());
    for &w in weights {
        for &seed in seeds {
            rows.push(run_at_weight(cfg, w, seed, run_id)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.system.devices = 4;
        cfg.system.servers = 2;
        cfg.system.slots = 6;
        cfg.sac.hidden = vec![8];
        cfg.sac.batch_size = 8;
        cfg.sac.warmup_steps = 8;
        cfg.sac.episodes = 2;
        cfg.objective.compute_energy_coeff = 1e-13;
        cfg.objective.comm_energy_coeff = 1e-12;
        cfg
    }

    #[test]
    fn sweep_emits_one_aggregate_row_per_weight_and_seed() {
        let cfg = tiny_cfg();
        let rows = sweep_w(&cfg, &[1.0, 100.0], &[4, 5], "sweep-w").unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].w, Some(1.0));
        assert_eq!(rows[0].seed, 4);
        assert_eq!(rows[3].w, Some(100.0));
        assert_eq!(rows[3].seed, 5);
        for row in &rows {
            assert_eq!(row.slot, None);
            assert_eq!(row.policy, "swap-sac");
            assert!(row.mean_energy_j.unwrap() > 0.0);
            assert!(row.mean_latency_s > 0.0);
        }

        let again = sweep_w(&cfg, &[1.0, 100.0], &[4, 5], "sweep-w").unwrap();
        assert_eq!(rows, again);
    }
}
