//! Latency/energy evaluation of an allocation: data rates, delays, energy
//! terms, the scalar objective, feasibility checking, and the projection
//! that makes raw allocations feasible.

use crate::error::{Error, Result};
use crate::net::channel::{snr, SnrMode};
use crate::net::types::{Allocation, EdgeServer, EnvState, MobileDevice, Task};

/// Feasibility slack for floating-point dust from projection arithmetic.
const FEASIBILITY_TOL: f64 = 1e-9;
/// Projection only rescales sums strictly above this, which keeps it
/// idempotent under floating-point rounding.
const PROJECTION_GUARD: f64 = 1.0 + 1e-12;

/// Weights and switches of the scalar objective.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ObjectiveParams {
    /// Weight λ on the squared gap between local compute time and upload
    /// time (latency synchronization penalty).
    pub sync_penalty: f64,
    /// Weight w on the battery-normalized energy sum.
    pub energy_weight: f64,
    /// Coefficient turning device FLOPs into computing energy.
    pub compute_energy_coeff: f64,
    /// Coefficient turning allocated band × transmit power into
    /// transmission energy.
    pub comm_energy_coeff: f64,
    /// Noise treatment inside the SNR.
    pub snr_mode: SnrMode,
    /// Use natural log instead of log2 in the rate formula.
    pub natural_log_rate: bool,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            sync_penalty: 1e-2,
            energy_weight: 20.0,
            compute_energy_coeff: 1e9,
            comm_energy_coeff: 2.6,
            snr_mode: SnrMode::FullBand,
            natural_log_rate: false,
        }
    }
}

impl ObjectiveParams {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.sync_penalty >= 0.0)
            || !(self.energy_weight >= 0.0)
            || !(self.compute_energy_coeff >= 0.0)
            || !(self.comm_energy_coeff >= 0.0)
        {
            return Err(Error::Config("objective weights must be ≥ 0".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Elementary quantities
// ---------------------------------------------------------------------------

/// SNR matrix for every device/server pair under the given mode.
pub fn snr_matrix(state: &EnvState, mode: SnrMode) -> Result<Vec<Vec<f64>>> {
    state
        .devices
        .iter()
        .enumerate()
        .map(|(i, dev)| {
            state
                .servers
                .iter()
                .enumerate()
                .map(|(j, srv)| {
                    snr(
                        state.channel.gains[i][j],
                        dev.tx_power_w,
                        state.channel.noise_psd_w_per_hz,
                        srv.bandwidth_hz,
                        mode,
                    )
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Uplink data rate of device `i`, bits/s: the sum over servers of
/// `x·y·W_j·log2(1+SNR)` (or natural log when configured).
pub fn data_rate(
    alloc: &Allocation,
    snr: &[Vec<f64>],
    servers: &[EdgeServer],
    i: usize,
    natural_log: bool,
) -> f64 {
    servers
        .iter()
        .enumerate()
        .filter(|(j, _)| alloc.x[i][*j])
        .map(|(j, srv)| {
            let spectral = if natural_log {
                (1.0 + snr[i][j]).ln()
            } else {
                (1.0 + snr[i][j]).log2()
            };
            alloc.y[i][j] * srv.bandwidth_hz * spectral
        })
        .sum()
}

/// Device-side computing delay, seconds.
pub fn local_delay(task_flops: f64, device_flops: f64) -> Result<f64> {
    if !(device_flops > 0.0) {
        return Err(Error::Contract("device compute must be positive".into()));
    }
    Ok(task_flops / device_flops)
}

/// Server-side delay: queue wait plus computing on the allocated share,
/// seconds. A zero compute share with positive work is infeasible.
pub fn remote_delay(
    task_flops: f64,
    compute_share: f64,
    server_flops: f64,
    queue_slots: u32,
    queue_slot_seconds: f64,
) -> Result<f64> {
    if !(server_flops > 0.0) {
        return Err(Error::Contract("server compute must be positive".into()));
    }
    if compute_share <= 0.0 {
        if task_flops > 0.0 {
            return Err(Error::Infeasible(
                "zero compute share for a device with server-side work".into(),
            ));
        }
        return Ok(queue_slots as f64 * queue_slot_seconds);
    }
    Ok(queue_slots as f64 * queue_slot_seconds + task_flops / (compute_share * server_flops))
}

/// Computing and transmission energy of device `i` for its task, joules
/// (in the configured coefficient units).
///
/// Computing energy is `coeff·device_flops` (allocation-independent);
/// transmission energy is `coeff·P_i·Σ_j x·y·W_j`.
pub fn device_energy(
    device: &MobileDevice,
    task: &Task,
    alloc: &Allocation,
    servers: &[EdgeServer],
    params: &ObjectiveParams,
) -> (f64, f64) {
    let e_cp = params.compute_energy_coeff * task.device_flops;
    let band: f64 = servers
        .iter()
        .enumerate()
        .filter(|(j, _)| alloc.x[device.id][*j])
        .map(|(j, srv)| alloc.y[device.id][j] * srv.bandwidth_hz)
        .sum();
    let e_cm = params.comm_energy_coeff * band * device.tx_power_w;
    (e_cp, e_cm)
}

// ---------------------------------------------------------------------------
// Feasibility
// ---------------------------------------------------------------------------

/// The constraint families an allocation can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Each device must be associated with exactly one server.
    AssociationExactlyOne,
    /// Every `y`/`z` entry must lie in [0, 1].
    EntryRange,
    /// Per device, bandwidth shares across servers must sum to ≤ 1.
    DeviceBandwidthShare,
    /// Per server, bandwidth shares of associated devices must sum to ≤ 1.
    /// This mirrors the compute-capacity form and is checked in addition to
    /// the per-device rule.
    ServerBandwidthCapacity,
    /// Per server, compute shares must sum to ≤ 1.
    ServerComputeCapacity,
}

impl Constraint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Constraint::AssociationExactlyOne => "association-exactly-one",
            Constraint::EntryRange => "entry-range",
            Constraint::DeviceBandwidthShare => "device-bandwidth-share",
            Constraint::ServerBandwidthCapacity => "server-bandwidth-capacity",
            Constraint::ServerComputeCapacity => "server-compute-capacity",
        }
    }
}

/// One concrete constraint violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub device: Option<usize>,
    pub server: Option<usize>,
    /// How far past the bound the offending quantity sits.
    pub excess: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.constraint.as_str())?;
        if let Some(d) = self.device {
            write!(f, " device={d}")?;
        }
        if let Some(s) = self.server {
            write!(f, " server={s}")?;
        }
        write!(f, " excess={:.6e}", self.excess)
    }
}

/// Checks every constraint family; an empty list means feasible.
pub fn feasibility_check(alloc: &Allocation) -> Vec<Violation> {
    let (m, e) = alloc.dims();
    let mut out = Vec::new();

    for i in 0..m {
        let ones = alloc.x[i].iter().filter(|&&v| v).count();
        if ones != 1 {
            out.push(Violation {
                constraint: Constraint::AssociationExactlyOne,
                device: Some(i),
                server: None,
                excess: (ones as f64 - 1.0).abs(),
            });
        }
    }

    for i in 0..m {
        for j in 0..e {
            for (mat, val) in [(&alloc.y, alloc.y[i][j]), (&alloc.z, alloc.z[i][j])] {
                let _ = mat;
                if !(val >= -FEASIBILITY_TOL) || !(val <= 1.0 + FEASIBILITY_TOL) || !val.is_finite()
                {
                    out.push(Violation {
                        constraint: Constraint::EntryRange,
                        device: Some(i),
                        server: Some(j),
                        excess: if val.is_finite() {
                            (val - val.clamp(0.0, 1.0)).abs()
                        } else {
                            f64::INFINITY
                        },
                    });
                }
            }
        }
    }

    for i in 0..m {
        let s: f64 = alloc.y[i].iter().sum();
        if s > 1.0 + FEASIBILITY_TOL {
            out.push(Violation {
                constraint: Constraint::DeviceBandwidthShare,
                device: Some(i),
                server: None,
                excess: s - 1.0,
            });
        }
    }

    for j in 0..e {
        let band: f64 = (0..m).filter(|&i| alloc.x[i][j]).map(|i| alloc.y[i][j]).sum();
        if band > 1.0 + FEASIBILITY_TOL {
            out.push(Violation {
                constraint: Constraint::ServerBandwidthCapacity,
                device: None,
                server: Some(j),
                excess: band - 1.0,
            });
        }
        let compute: f64 = (0..m).map(|i| alloc.z[i][j]).sum();
        if compute > 1.0 + FEASIBILITY_TOL {
            out.push(Violation {
                constraint: Constraint::ServerComputeCapacity,
                device: None,
                server: Some(j),
                excess: compute - 1.0,
            });
        }
    }

    out
}

/// Scales raw share matrices into the feasible set. Idempotent.
///
/// Steps: clamp entries to [0, 1]; normalize device rows of `y` whose sum
/// exceeds 1; when an association is given, scale each server's associated
/// `y` entries so they sum to ≤ 1; scale each `z` column to sum ≤ 1.
/// Unassociated `y` entries keep their row-normalized values so they remain
/// usable as candidates under association changes.
pub fn project_shares(y: &mut [Vec<f64>], z: &mut [Vec<f64>], x: Option<&Vec<Vec<bool>>>) {
    let m = y.len();
    let e = y.first().map_or(0, |r| r.len());

    for row in y.iter_mut().chain(z.iter_mut()) {
        for v in row.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }

    for row in y.iter_mut() {
        let s: f64 = row.iter().sum();
        if s > PROJECTION_GUARD {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
    }

    if let Some(x) = x {
        for j in 0..e {
            let s: f64 = (0..m).filter(|&i| x[i][j]).map(|i| y[i][j]).sum();
            if s > PROJECTION_GUARD {
                for (i, row) in y.iter_mut().enumerate() {
                    if x[i][j] {
                        row[j] /= s;
                    }
                }
            }
        }
    }

    for j in 0..e {
        let s: f64 = (0..m).map(|i| z[i][j]).sum();
        if s > PROJECTION_GUARD {
            for row in z.iter_mut() {
                row[j] /= s;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// Per-device evaluation detail.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeviceEval {
    /// Device-side computing delay, seconds.
    pub local_s: f64,
    /// Server-side queue + computing delay, seconds.
    pub remote_s: f64,
    /// Raw task latency `local_s + remote_s`, seconds.
    pub latency_s: f64,
    /// Uplink rate, bits/s.
    pub rate_bps: f64,
    /// Squared local-compute/upload desynchronization, before weighting.
    pub sync_gap_sq: f64,
    /// Computing energy, joules (coefficient units).
    pub compute_energy_j: f64,
    /// Transmission energy, joules (coefficient units).
    pub comm_energy_j: f64,
}

/// Full evaluation of an allocation against a system snapshot.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// The scalar objective: latency + sync penalty + weighted energy.
    pub objective: f64,
    /// Latency-plus-penalty part of the objective.
    pub latency_term: f64,
    /// Weighted energy part of the objective.
    pub energy_term: f64,
    pub per_device: Vec<DeviceEval>,
}

/// Evaluates the scalar objective and per-device detail.
///
/// The objective sums, over devices, the local delay, the remote delay at
/// the associated server, and `λ·(local_delay − d/R)²`, plus
/// `w·Σ(E_cp+E_cm)/B`. The transmission time `d/R` saturates at the episode
/// span `horizon·slot_seconds`: an upload that cannot finish within the
/// episode is no better than one that never starts, so a zero or vanishing
/// rate yields the same capped gap instead of an unbounded (and, at exactly
/// zero, undefined) one.
///
/// Errors with the full violation list when the allocation is infeasible.
pub fn evaluate(state: &EnvState, alloc: &Allocation, params: &ObjectiveParams) -> Result<Evaluation> {
    params.validate()?;
    let violations = feasibility_check(alloc);
    if !violations.is_empty() {
        let msg = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Infeasible(msg));
    }
    let (m, e) = alloc.dims();
    if m != state.devices.len() || e != state.servers.len() {
        return Err(Error::Contract("allocation shape does not match state".into()));
    }

    let snrs = snr_matrix(state, params.snr_mode)?;
    let horizon_s = state.slot_seconds * state.horizon as f64;

    let mut latency_term = 0.0;
    let mut energy_term = 0.0;
    let mut per_device = Vec::with_capacity(m);
    for (i, dev) in state.devices.iter().enumerate() {
        let task = &state.tasks[i];
        let j = alloc
            .server_of(i)
            .expect("feasibility check guarantees exactly one server");
        let srv = &state.servers[j];

        let local = local_delay(task.device_flops, dev.local_flops)?;
        let remote = remote_delay(
            task.server_flops,
            alloc.z[i][j],
            srv.compute_flops,
            srv.queue_slots,
            srv.slot_seconds,
        )?;
        let rate = data_rate(alloc, &snrs, &state.servers, i, params.natural_log_rate);
        let tx_time = if rate > 0.0 {
            (task.data_bits / rate).min(horizon_s)
        } else {
            horizon_s
        };
        let gap = local - tx_time;
        let sync_gap_sq = gap * gap;
        let (e_cp, e_cm) = device_energy(dev, task, alloc, &state.servers, params);

        latency_term += local + remote + params.sync_penalty * sync_gap_sq;
        energy_term += params.energy_weight * (e_cp + e_cm) / dev.battery;

        per_device.push(DeviceEval {
            local_s: local,
            remote_s: remote,
            latency_s: local + remote,
            rate_bps: rate,
            sync_gap_sq,
            compute_energy_j: e_cp,
            comm_energy_j: e_cm,
        });
    }

    Ok(Evaluation {
        objective: latency_term + energy_term,
        latency_term,
        energy_term,
        per_device,
    })
}

/// The scalar objective alone; see [`evaluate`].
pub fn objective(state: &EnvState, alloc: &Allocation, params: &ObjectiveParams) -> Result<f64> {
    Ok(evaluate(state, alloc, params)?.objective)
}
