//! Environment dynamics: trajectory initialization and slot stepping.
//!
//! All randomness is drawn from named substreams of the master seed, with
//! one substream index per slot, so any slot's channel, tasks, and queues
//! can be regenerated independently of how the trajectory was reached:
//! `channel` (index 0 seeds placement and hardware, index 1+t seeds slot
//! t's fades), `mobility` (waypoint draws), `tasks` (workload draws), and
//! `queue` (server queue arrivals).

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::net::channel::path_gain;
use crate::net::scenario::ScenarioConfig;
use crate::net::types::{ChannelState, EdgeServer, EnvState, MobileDevice, Task, TaskKind};
use crate::rng::substream;

/// Batteries are floored here instead of 0 so per-device energy weights
/// (which divide by the battery level) stay finite.
pub const BATTERY_FLOOR: f64 = 1e-3;

/// Builds the slot-0 state: placements, hardware draws, initial channel,
/// queues, and tasks.
pub fn init_env(cfg: &ScenarioConfig, master_seed: u64) -> Result<EnvState> {
    cfg.validate()?;
    let m = cfg.system.devices;
    let e = cfg.system.servers;
    let area = cfg.system.area_m;
    let mut rng = substream(master_seed, "channel", 0);

    let mut devices = Vec::with_capacity(m);
    for i in 0..m {
        let position = [rng.random::<f64>() * area, rng.random::<f64>() * area];
        let waypoint = [rng.random::<f64>() * area, rng.random::<f64>() * area];
        let speed = rng.random_range(cfg.devices.speed_mps_min..=cfg.devices.speed_mps_max);
        let dbm =
            rng.random_range(cfg.radio.tx_power_dbm_min..=cfg.radio.tx_power_dbm_max);
        let flops_idx = rng.random_range(0..cfg.devices.local_flops_choices.len());
        // Spread initial batteries evenly so both low- and high-battery
        // devices exist deterministically.
        let frac = if m > 1 { i as f64 / (m - 1) as f64 } else { 1.0 };
        let battery = cfg.devices.battery_init_min
            + frac * (cfg.devices.battery_init_max - cfg.devices.battery_init_min);
        devices.push(MobileDevice {
            id: i,
            position,
            velocity: velocity_toward(position, waypoint, speed),
            waypoint,
            speed_mps: speed,
            tx_power_w: 10f64.powf((dbm - 30.0) / 10.0),
            local_flops: cfg.devices.local_flops_choices[flops_idx],
            battery,
            battery_capacity_j: cfg.devices.battery_capacity_j,
        });
    }

    let mut servers = Vec::with_capacity(e);
    for j in 0..e {
        let position = [rng.random::<f64>() * area, rng.random::<f64>() * area];
        let flops_idx = rng.random_range(0..cfg.servers.compute_flops_choices.len());
        servers.push(EdgeServer {
            id: j,
            position,
            compute_flops: cfg.servers.compute_flops_choices[flops_idx],
            bandwidth_hz: cfg.bandwidth_per_server_hz(),
            queue_slots: 0,
            slot_seconds: cfg.queue_slot_seconds(),
        });
    }
    draw_queues(&mut servers, cfg, master_seed, 0);

    let channel = regen_channel(&devices, &servers, cfg, master_seed, 0);
    let tasks = draw_tasks(m, cfg, master_seed, 0);

    let state = EnvState {
        slot: 0,
        horizon: cfg.system.slots,
        slot_seconds: cfg.system.slot_seconds,
        devices,
        servers,
        channel,
        tasks,
    };
    state.validate()?;
    Ok(state)
}

/// Advances one slot: moves devices, drains batteries by the energy each
/// spent last slot, redraws queues, channel, and tasks.
///
/// `energy_spent_j` is one entry per device (joules over the elapsed slot);
/// pass zeros when no allocation was evaluated.
pub fn step_env(
    state: &EnvState,
    cfg: &ScenarioConfig,
    master_seed: u64,
    energy_spent_j: &[f64],
) -> Result<EnvState> {
    if state.slot + 1 >= state.horizon {
        return Err(Error::Contract(format!(
            "cannot step past the horizon (slot {} of {})",
            state.slot, state.horizon
        )));
    }
    if energy_spent_j.len() != state.devices.len() {
        return Err(Error::Contract("one energy entry per device required".into()));
    }
    if energy_spent_j.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::Contract("spent energy must be ≥ 0".into()));
    }
    let slot = state.slot + 1;
    let mut wp_rng = substream(master_seed, "mobility", slot as u64);

    let mut devices = state.devices.clone();
    for (dev, &spent) in devices.iter_mut().zip(energy_spent_j) {
        move_device(dev, cfg.system.area_m, state.slot_seconds, &mut wp_rng);
        let drained = dev.battery - spent / dev.battery_capacity_j;
        dev.battery = drained.clamp(BATTERY_FLOOR, 1.0);
    }

    let mut servers = state.servers.clone();
    draw_queues(&mut servers, cfg, master_seed, slot);

    let channel = regen_channel(&devices, &servers, cfg, master_seed, slot);
    let tasks = draw_tasks(devices.len(), cfg, master_seed, slot);

    Ok(EnvState {
        slot,
        horizon: state.horizon,
        slot_seconds: state.slot_seconds,
        devices,
        servers,
        channel,
        tasks,
    })
}

/// Channel matrix for one slot; pure in (positions, seed, slot).
pub fn regen_channel(
    devices: &[MobileDevice],
    servers: &[EdgeServer],
    cfg: &ScenarioConfig,
    master_seed: u64,
    slot: usize,
) -> ChannelState {
    let mut rng = substream(master_seed, "channel", 1 + slot as u64);
    let gains = devices
        .iter()
        .map(|d| {
            servers
                .iter()
                .map(|s| path_gain(d.position, s.position, &cfg.channel, &mut rng))
                .collect()
        })
        .collect();
    ChannelState { gains, noise_psd_w_per_hz: cfg.radio.noise_psd_w_per_hz() }
}

/// One task per device for the slot: kind uniform over the three workload
/// types; loads are per-token costs times the kind's (expected or sampled)
/// token count.
pub fn draw_tasks(m: usize, cfg: &ScenarioConfig, master_seed: u64, slot: usize) -> Vec<Task> {
    let mut rng = substream(master_seed, "tasks", slot as u64);
    (0..m)
        .map(|i| {
            let kind = TaskKind::ALL[rng.random_range(0..TaskKind::ALL.len())];
            let mean = cfg.tasks.expected_tokens(kind);
            let tokens = if cfg.tasks.sample_token_counts {
                Poisson::new(mean).expect("validated positive mean").sample(&mut rng).max(1.0)
            } else {
                mean
            };
            Task {
                owner: i,
                kind,
                data_bits: tokens * cfg.tasks.bits_per_token,
                device_flops: tokens * cfg.tasks.draft_flops_per_token,
                server_flops: tokens * cfg.tasks.verify_flops_per_token,
            }
        })
        .collect()
}

fn draw_queues(servers: &mut [EdgeServer], cfg: &ScenarioConfig, master_seed: u64, slot: usize) {
    let mut rng = substream(master_seed, "queue", slot as u64);
    for s in servers.iter_mut() {
        s.queue_slots = if cfg.servers.queue_mean > 0.0 {
            Poisson::new(cfg.servers.queue_mean)
                .expect("validated positive mean")
                .sample(&mut rng) as u32
        } else {
            0
        };
    }
}

fn velocity_toward(position: [f64; 2], waypoint: [f64; 2], speed: f64) -> [f64; 2] {
    let dx = waypoint[0] - position[0];
    let dy = waypoint[1] - position[1];
    let d = (dx * dx + dy * dy).sqrt();
    if d < 1e-9 {
        [0.0, 0.0]
    } else {
        [speed * dx / d, speed * dy / d]
    }
}

/// Random-waypoint step: walk toward the waypoint at the device's speed,
/// drawing a fresh waypoint upon arrival.
fn move_device<R: Rng + ?Sized>(dev: &mut MobileDevice, area: f64, dt: f64, rng: &mut R) {
    let mut remaining = dev.speed_mps * dt;
    while remaining > 0.0 {
        let dx = dev.waypoint[0] - dev.position[0];
        let dy = dev.waypoint[1] - dev.position[1];
        let dist = (dx * dx + dy * dy).sqrt();
        if dist <= remaining {
            dev.position = dev.waypoint;
            remaining -= dist;
            dev.waypoint = [rng.random::<f64>() * area, rng.random::<f64>() * area];
            if dev.speed_mps <= 0.0 {
                break;
            }
        } else {
            dev.position[0] += remaining * dx / dist;
            dev.position[1] += remaining * dy / dist;
            remaining = 0.0;
        }
    }
    dev.velocity = velocity_toward(dev.position, dev.waypoint, dev.speed_mps);
}
