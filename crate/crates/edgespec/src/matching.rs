//! User association via two-phase matching: a channel-gain seeding pass,
//! then pairwise-swap local search on the scalar objective.
//!
//! The swap search exchanges the servers of two devices associated with
//! *different* servers, accepts only strict objective decreases, and stops
//! when no pairwise swap improves — the result is 2-swap-stable. The raw
//! bandwidth/compute candidate matrices stay fixed during the search; every
//! candidate association is evaluated by re-projecting those candidates
//! under it, so the whole refinement is a pure function of its inputs.

use crate::error::{Error, Result};
use crate::net::model::{evaluate, project_shares, ObjectiveParams};
use crate::net::types::{Allocation, ChannelState, EnvState};

/// One accepted swap in the refinement trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SwapRecord {
    /// Accepted-swap counter, starting at 1.
    pub iteration: usize,
    pub device_a: usize,
    /// Server device `a` held before the swap (and `b` holds after).
    pub server_a: usize,
    pub device_b: usize,
    pub server_b: usize,
    pub objective_before: f64,
    pub objective_after: f64,
}

/// How the swap scan picks among improving candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwapStrategy {
    /// Accept the first improving swap in lexicographic (device, device)
    /// order, then rescan. Deterministic and cheap.
    #[default]
    FirstImprovement,
    /// Evaluate every swap each pass and accept the single best improvement.
    BestImprovement,
}

/// Phase 1: associate every device with its highest-gain server (ties go to
/// the lowest server id).
pub fn seed_by_gain(channel: &ChannelState) -> Vec<usize> {
    channel
        .gains
        .iter()
        .map(|row| {
            let mut best = 0usize;
            for (j, &g) in row.iter().enumerate() {
                if g > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Objective of a candidate association with the fixed raw share matrices,
/// or `None` when the candidate is infeasible (e.g. a zero compute share).
fn try_candidate(
    assignment: &[usize],
    y_raw: &[Vec<f64>],
    z_raw: &[Vec<f64>],
    state: &EnvState,
    params: &ObjectiveParams,
) -> Result<Option<f64>> {
    let alloc = build_allocation(assignment, y_raw, z_raw, state.servers.len());
    match evaluate(state, &alloc, params) {
        Ok(eval) => Ok(Some(eval.objective)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn build_allocation(
    assignment: &[usize],
    y_raw: &[Vec<f64>],
    z_raw: &[Vec<f64>],
    servers: usize,
) -> Allocation {
    let mut alloc = Allocation::from_assignment(assignment, servers);
    let mut y = y_raw.to_vec();
    let mut z = z_raw.to_vec();
    project_shares(&mut y, &mut z, Some(&alloc.x));
    alloc.y = y;
    alloc.z = z;
    alloc
}

/// Phase 2: pairwise-swap local search from `initial`.
///
/// Returns the refined assignment and the accepted-swap trace. Errors when
/// the initial association is itself infeasible under the given shares.
pub fn refine_by_swaps(
    initial: &[usize],
    y_raw: &[Vec<f64>],
    z_raw: &[Vec<f64>],
    state: &EnvState,
    params: &ObjectiveParams,
    strategy: SwapStrategy,
) -> Result<(Vec<usize>, Vec<SwapRecord>)> {
    let m = initial.len();
    let mut assign = initial.to_vec();
    let mut current = try_candidate(&assign, y_raw, z_raw, state, params)?.ok_or_else(|| {
        Error::Infeasible("initial association is infeasible under the given shares".into())
    })?;
    let mut records = Vec::new();

    loop {
        let mut improved = false;
        match strategy {
            SwapStrategy::FirstImprovement => {
                'scan: for a in 0..m {
                    for b in a + 1..m {
                        if assign[a] == assign[b] {
                            continue;
                        }
                        let mut cand = assign.clone();
                        cand.swap(a, b);
                        if let Some(obj) = try_candidate(&cand, y_raw, z_raw, state, params)? {
                            if obj < current {
                                records.push(SwapRecord {
                                    iteration: records.len() + 1,
                                    device_a: a,
                                    server_a: assign[a],
                                    device_b: b,
                                    server_b: assign[b],
                                    objective_before: current,
                                    objective_after: obj,
                                });
                                assign = cand;
                                current = obj;
                                improved = true;
                                break 'scan;
                            }
                        }
                    }
                }
            }
            SwapStrategy::BestImprovement => {
                let mut best: Option<(usize, usize, f64)> = None;
                for a in 0..m {
                    for b in a + 1..m {
                        if assign[a] == assign[b] {
                            continue;
                        }
                        let mut cand = assign.clone();
                        cand.swap(a, b);
                        if let Some(obj) = try_candidate(&cand, y_raw, z_raw, state, params)? {
                            if obj < current && best.map_or(true, |(_, _, b_obj)| obj < b_obj) {
                                best = Some((a, b, obj));
                            }
                        }
                    }
                }
                if let Some((a, b, obj)) = best {
                    records.push(SwapRecord {
                        iteration: records.len() + 1,
                        device_a: a,
                        server_a: assign[a],
                        device_b: b,
                        server_b: assign[b],
                        objective_before: current,
                        objective_after: obj,
                    });
                    assign.swap(a, b);
                    current = obj;
                    improved = true;
                }
            }
        }
        if !improved {
            return Ok((assign, records));
        }
    }
}

/// Full association: gain seeding, swap refinement, and the final projected
/// allocation built from the raw share candidates.
pub fn associate(
    y_raw: &[Vec<f64>],
    z_raw: &[Vec<f64>],
    state: &EnvState,
    params: &ObjectiveParams,
    strategy: SwapStrategy,
) -> Result<(Allocation, Vec<SwapRecord>)> {
    let seeded = seed_by_gain(&state.channel);
    let (refined, records) = refine_by_swaps(&seeded, y_raw, z_raw, state, params, strategy)?;
    Ok((
        build_allocation(&refined, y_raw, z_raw, state.servers.len()),
        records,
    ))
}
