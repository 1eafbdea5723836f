//! Slot-by-slot rollouts of association policies on one scenario episode.
//!
//! Every policy is rolled over the same environment streams, so per-seed
//! comparisons are paired. Each slot yields one [`MetricsRow`]; a final
//! aggregate row averages the episode. The learned policy additionally
//! records the pairwise exchanges its association stage performed.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_allocation, max_compute_assoc, max_sinr_assoc, random_assoc};
use crate::error::{Error, Result};
use crate::net::env::{init_env, step_env};
use crate::net::model::evaluate;
use crate::net::scenario::ScenarioConfig;
use crate::rng::substream;
use crate::sac::Masac;

use crate::harness::metrics::{MetricsRow, METRICS_SCHEMA_VERSION};

/// Battery fraction at or above which a device counts as high-battery.
pub const HIGH_BATTERY_FRACTION: f64 = 0.8;
/// Battery fraction at or below which a device counts as low-battery.
pub const LOW_BATTERY_FRACTION: f64 = 0.2;

/// Interference weight the greedy signal-quality policy is scored with.
pub const SINR_INTERFERENCE_COEFF: f64 = 1.0;

/// Association/allocation policy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Uniform random server per device, equal resource split.
    Random,
    /// Greedy best signal quality per device, equal resource split.
    MaxSinr,
    /// Every device on the fastest server, equal resource split.
    MaxCompute,
    /// Swap-refined association with learned resource shares.
    SwapSac,
}

impl PolicyKind {
    /// All policies, baselines first.
    pub const ALL: [PolicyKind; 4] =
        [PolicyKind::Random, PolicyKind::MaxSinr, PolicyKind::MaxCompute, PolicyKind::SwapSac];

    /// Name used in the metrics `policy` column and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::MaxSinr => "max-sinr",
            PolicyKind::MaxCompute => "max-compute",
            PolicyKind::SwapSac => "swap-sac",
        }
    }

    /// Whether this policy needs a trained learner to act.
    pub fn needs_learner(self) -> bool {
        self == PolicyKind::SwapSac
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = PolicyKind::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!("unknown policy '{s}'; expected one of {names:?}"))
            })
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One accepted pairwise exchange, tagged with the slot it happened in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapTraceRow {
    pub slot: usize,
    /// Accepted-swap counter within the slot, starting at 1.
    pub iteration: usize,
    pub device_a: usize,
    pub server_a: usize,
    pub device_b: usize,
    pub server_b: usize,
    pub objective_before: f64,
    pub objective_after: f64,
}

/// Writes the exchange trace as CSV.
pub fn write_swap_trace_csv(path: &Path, rows: &[SwapTraceRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_swap_trace_csv`].
pub fn read_swap_trace_csv(path: &Path) -> Result<Vec<SwapTraceRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// Everything one policy rollout produces.
#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    /// One row per slot, in slot order.
    pub per_slot: Vec<MetricsRow>,
    /// Episode means with an empty `slot` column.
    pub aggregate: MetricsRow,
    /// Accepted exchanges, learned policy only (empty otherwise).
    pub swap_trace: Vec<SwapTraceRow>,
}

fn tier_mean(energies: &[f64], members: &[usize]) -> Option<f64> {
    if members.is_empty() {
        return None;
    }
    Some(members.iter().map(|&i| energies[i]).sum::<f64>() / members.len() as f64)
}

/// Rolls `policy` over one episode of the scenario.
///
/// `learner` is required by [`PolicyKind::SwapSac`] (deterministic mode
/// actions) and ignored by the baselines. Battery tiers are fixed by the
/// devices' initial levels so later drain cannot move a device between
/// tiers mid-episode.
pub fn rollout(
    cfg: &ScenarioConfig,
    policy: PolicyKind,
    learner: Option<&Masac>,
    master_seed: u64,
    run_id: &str,
) -> Result<RolloutOutcome> {
    cfg.validate()?;
    if policy.needs_learner() && learner.is_none() {
        return Err(Error::Config(format!(
            "policy '{policy}' needs a trained learner; pass a checkpoint"
        )));
    }

    let params = cfg.objective.params();
    let servers = cfg.system.servers;
    let slots = cfg.system.slots;
    // Index 3 of the policy stream: evaluation-time draws (0 seeds
    // networks, 1 is exploration, 2 is reserved for curve evaluation).
    let mut rng = substream(master_seed, "policy", 3);

    let mut state = init_env(cfg, master_seed)?;
    let high: Vec<usize> = (0..state.devices.len())
        .filter(|&i| state.devices[i].battery >= HIGH_BATTERY_FRACTION)
        .collect();
    let low: Vec<usize> = (0..state.devices.len())
        .filter(|&i| state.devices[i].battery <= LOW_BATTERY_FRACTION)
        .collect();

    let mut per_slot = Vec::with_capacity(slots);
    let mut swap_trace = Vec::new();

    for slot in 0..slots {
        let (alloc, swaps) = match policy {
            PolicyKind::Random => {
                (baseline_allocation(&random_assoc(&state, &mut rng), servers), Vec::new())
            }
            PolicyKind::MaxSinr => (
                baseline_allocation(&max_sinr_assoc(&state, SINR_INTERFERENCE_COEFF), servers),
                Vec::new(),
            ),
            PolicyKind::MaxCompute => {
                (baseline_allocation(&max_compute_assoc(&state), servers), Vec::new())
            }
            PolicyKind::SwapSac => {
                let out = learner.unwrap().act(&state, true, &mut rng)?;
                (out.alloc, out.swaps)
            }
        };
        for s in swaps {
            swap_trace.push(SwapTraceRow {
                slot,
                iteration: s.iteration,
                device_a: s.device_a,
                server_a: s.server_a,
                device_b: s.device_b,
                server_b: s.server_b,
                objective_before: s.objective_before,
                objective_after: s.objective_after,
            });
        }

        let eval = evaluate(&state, &alloc, &params)?;
        let m = eval.per_device.len() as f64;
        let energies: Vec<f64> =
            eval.per_device.iter().map(|d| d.compute_energy_j + d.comm_energy_j).collect();
        per_slot.push(MetricsRow {
            schema_version: METRICS_SCHEMA_VERSION,
            run_id: run_id.to_string(),
            seed: master_seed,
            slot: Some(slot),
            policy: policy.name().to_string(),
            gamma: None,
            rate_bps: None,
            w: Some(params.energy_weight),
            mean_latency_s: eval.per_device.iter().map(|d| d.latency_s).sum::<f64>() / m,
            mean_objective: Some(eval.objective),
            mean_energy_j: Some(energies.iter().sum::<f64>() / m),
            energy_high_batt_j: tier_mean(&energies, &high),
            energy_low_batt_j: tier_mean(&energies, &low),
            tokens_per_s: None,
            psd_idle_frac: None,
        });

        if slot + 1 < slots {
            state = step_env(&state, cfg, master_seed, &energies)?;
        }
    }

    let n = per_slot.len() as f64;
    let mean = |f: &dyn Fn(&MetricsRow) -> f64| per_slot.iter().map(|r| f(r)).sum::<f64>() / n;
    let opt_mean = |f: &dyn Fn(&MetricsRow) -> Option<f64>| {
        per_slot.first().and_then(|r| f(r)).map(|_| {
            per_slot.iter().map(|r| f(r).expect("tier set is fixed")).sum::<f64>() / n
        })
    };
    let aggregate = MetricsRow {
        schema_version: METRICS_SCHEMA_VERSION,
        run_id: run_id.to_string(),
        seed: master_seed,
        slot: None,
        policy: policy.name().to_string(),
        gamma: None,
        rate_bps: None,
        w: Some(params.energy_weight),
        mean_latency_s: mean(&|r| r.mean_latency_s),
        mean_objective: Some(mean(&|r| r.mean_objective.expect("set above"))),
        mean_energy_j: Some(mean(&|r| r.mean_energy_j.expect("set above"))),
        energy_high_batt_j: opt_mean(&|r| r.energy_high_batt_j),
        energy_low_batt_j: opt_mean(&|r| r.energy_low_batt_j),
        tokens_per_s: None,
        psd_idle_frac: None,
    };

    Ok(RolloutOutcome { per_slot, aggregate, swap_trace })
}
