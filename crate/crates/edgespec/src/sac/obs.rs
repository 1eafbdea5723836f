//! Observation vectors for the learners.
//!
//! Each server agent sees its own position, compute rate, and queue
//! occupancy, plus every device's position, battery, task description, and
//! the channel-gain column toward this server, plus the slot index. The
//! centralized critic sees the deduplicated union of all agents' views:
//! every device, every server, the full gain matrix, and the slot.
//!
//! All features are min-max normalized to `[-1, 1]` with bounds fixed by
//! the scenario configuration, so the same network can be reused across
//! slots without feature drift. Channel gains span orders of magnitude and
//! are normalized on a `log10` scale over a fixed window instead of raw
//! values (a raw min-max would crush every realistic gain to the bottom of
//! the range).

use crate::net::scenario::ScenarioConfig;
use crate::net::types::EnvState;

/// Fixed `log10` window for channel-gain normalization.
const LOG10_GAIN_MIN: f64 = -12.0;
const LOG10_GAIN_MAX: f64 = -2.0;

/// Normalization bounds derived from a scenario configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBounds {
    area_m: f64,
    server_flops_min: f64,
    server_flops_max: f64,
    queue_max: f64,
    data_bits_max: f64,
    device_flops_max: f64,
    server_task_flops_max: f64,
    horizon: f64,
}

impl ObsBounds {
    /// Bounds implied by the scenario: token budgets bound the task tuple,
    /// compute choices bound the server rate, and the queue bound covers
    /// the arrival distribution's realistic upper tail.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let tok_max = 2.0
            * cfg
                .tasks
                .expected_tokens_code
                .max(cfg.tasks.expected_tokens_summarize)
                .max(cfg.tasks.expected_tokens_chat)
            + 10.0;
        let flops_min =
            cfg.servers.compute_flops_choices.iter().cloned().fold(f64::INFINITY, f64::min);
        let flops_max =
            cfg.servers.compute_flops_choices.iter().cloned().fold(0.0, f64::max);
        ObsBounds {
            area_m: cfg.system.area_m,
            server_flops_min: flops_min,
            server_flops_max: flops_max,
            queue_max: 4.0 * cfg.servers.queue_mean + 8.0,
            data_bits_max: tok_max * cfg.tasks.bits_per_token,
            device_flops_max: tok_max * cfg.tasks.draft_flops_per_token,
            server_task_flops_max: tok_max * cfg.tasks.verify_flops_per_token,
            horizon: cfg.system.slots as f64,
        }
    }
}

/// Map `v` from `[lo, hi]` onto `[-1, 1]`, clamping overshoot. Degenerate
/// bounds (a single-valued feature) map to `0`.
fn norm(v: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        0.0
    } else {
        2.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0) - 1.0
    }
}

fn norm_gain(g: f64) -> f64 {
    norm(g.max(1e-300).log10(), LOG10_GAIN_MIN, LOG10_GAIN_MAX)
}

/// Length of one agent's observation for `m` devices.
pub fn agent_obs_len(m: usize) -> usize {
    5 + 7 * m
}

/// Length of the global (critic) observation for `m` devices, `e` servers.
pub fn global_obs_len(m: usize, e: usize) -> usize {
    1 + 6 * m + 4 * e + m * e
}

fn push_device_block(out: &mut Vec<f64>, state: &EnvState, i: usize, b: &ObsBounds) {
    let dev = &state.devices[i];
    let task = &state.tasks[i];
    out.push(norm(dev.position[0], 0.0, b.area_m));
    out.push(norm(dev.position[1], 0.0, b.area_m));
    out.push(norm(dev.battery, 0.0, 1.0));
    out.push(norm(task.data_bits, 0.0, b.data_bits_max));
    out.push(norm(task.device_flops, 0.0, b.device_flops_max));
    out.push(norm(task.server_flops, 0.0, b.server_task_flops_max));
}

/// Observation for server agent `j`.
pub fn agent_obs(state: &EnvState, j: usize, b: &ObsBounds) -> Vec<f64> {
    let m = state.devices.len();
    let srv = &state.servers[j];
    let mut out = Vec::with_capacity(agent_obs_len(m));
    out.push(norm(state.slot as f64, 0.0, b.horizon));
    out.push(norm(srv.position[0], 0.0, b.area_m));
    out.push(norm(srv.position[1], 0.0, b.area_m));
    out.push(norm(srv.compute_flops, b.server_flops_min, b.server_flops_max));
    out.push(norm(srv.queue_slots as f64, 0.0, b.queue_max));
    for i in 0..m {
        push_device_block(&mut out, state, i, b);
        out.push(norm_gain(state.channel.gains[i][j]));
    }
    debug_assert_eq!(out.len(), agent_obs_len(m));
    out
}

/// Deduplicated global observation for the centralized critic.
pub fn global_obs(state: &EnvState, b: &ObsBounds) -> Vec<f64> {
    let m = state.devices.len();
    let e = state.servers.len();
    let mut out = Vec::with_capacity(global_obs_len(m, e));
    out.push(norm(state.slot as f64, 0.0, b.horizon));
    for i in 0..m {
        push_device_block(&mut out, state, i, b);
    }
    for srv in &state.servers {
        out.push(norm(srv.position[0], 0.0, b.area_m));
        out.push(norm(srv.position[1], 0.0, b.area_m));
        out.push(norm(srv.compute_flops, b.server_flops_min, b.server_flops_max));
        out.push(norm(srv.queue_slots as f64, 0.0, b.queue_max));
    }
    for i in 0..m {
        for j in 0..e {
            out.push(norm_gain(state.channel.gains[i][j]));
        }
    }
    debug_assert_eq!(out.len(), global_obs_len(m, e));
    out
}
