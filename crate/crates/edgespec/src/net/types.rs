//! Core system-model types: devices, servers, tasks, channel state, and the
//! three-matrix resource allocation.

use crate::error::{Error, Result};

/// A mobile device running the draft side of collaborative decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct MobileDevice {
    pub id: usize,
    /// Position in meters (2-D plane).
    pub position: [f64; 2],
    /// Current velocity vector, m/s.
    pub velocity: [f64; 2],
    /// Random-waypoint target the device walks toward.
    pub waypoint: [f64; 2],
    /// Walking speed, m/s.
    pub speed_mps: f64,
    /// Uplink transmit power, watts.
    pub tx_power_w: f64,
    /// Local compute speed, FLOPS.
    pub local_flops: f64,
    /// Remaining battery as a fraction in (0, 1].
    pub battery: f64,
    /// Battery capacity, joules, used to convert spent energy into drain.
    pub battery_capacity_j: f64,
}

impl MobileDevice {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.tx_power_w > 0.0) {
            return Err(Error::Contract(format!(
                "device {}: tx power must be positive",
                self.id
            )));
        }
        if !(self.local_flops > 0.0) {
            return Err(Error::Contract(format!(
                "device {}: local compute must be positive",
                self.id
            )));
        }
        if !(self.battery > 0.0 && self.battery <= 1.0) {
            return Err(Error::Contract(format!(
                "device {}: battery must lie in (0, 1]",
                self.id
            )));
        }
        if !(self.battery_capacity_j > 0.0) {
            return Err(Error::Contract(format!(
                "device {}: battery capacity must be positive",
                self.id
            )));
        }
        Ok(())
    }
}

/// An edge server hosting the target model.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeServer {
    pub id: usize,
    /// Position in meters.
    pub position: [f64; 2],
    /// Total compute speed, FLOPS.
    pub compute_flops: f64,
    /// Bandwidth slice owned by this server, Hz (total system bandwidth
    /// divided evenly across servers).
    pub bandwidth_hz: f64,
    /// Tasks currently queued ahead of new arrivals.
    pub queue_slots: u32,
    /// Duration of one queue slot, seconds.
    pub slot_seconds: f64,
}

impl EdgeServer {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.compute_flops > 0.0) {
            return Err(Error::Contract(format!(
                "server {}: compute must be positive",
                self.id
            )));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::Contract(format!(
                "server {}: bandwidth must be positive",
                self.id
            )));
        }
        if !(self.slot_seconds >= 0.0) {
            return Err(Error::Contract(format!(
                "server {}: queue slot duration must be ≥ 0",
                self.id
            )));
        }
        Ok(())
    }
}

/// The three workload categories devices draw from each slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Code,
    Summarize,
    Chat,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Code, TaskKind::Summarize, TaskKind::Chat];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Code => "code",
            TaskKind::Summarize => "summarize",
            TaskKind::Chat => "chat",
        }
    }
}

/// One inference task: the payload a device must upload and the compute it
/// demands on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    /// Device that generated the task.
    pub owner: usize,
    pub kind: TaskKind,
    /// Communication load, bits.
    pub data_bits: f64,
    /// FLOPs required on the device (drafting).
    pub device_flops: f64,
    /// FLOPs required on the server (verification).
    pub server_flops: f64,
}

impl Task {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.data_bits > 0.0) || !(self.device_flops > 0.0) || !(self.server_flops > 0.0)
        {
            return Err(Error::Contract(format!(
                "task for device {}: loads must be positive",
                self.owner
            )));
        }
        Ok(())
    }
}

/// Channel power gains between every device/server pair, plus the noise
/// floor.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    /// `gains[i][j]`: linear power gain between device `i` and server `j`.
    pub gains: Vec<Vec<f64>>,
    /// Noise power spectral density, W/Hz.
    pub noise_psd_w_per_hz: f64,
}

impl ChannelState {
    /// Validates shape and entry ranges for an M×E system.
    pub fn validate(&self, devices: usize, servers: usize) -> Result<()> {
        if self.gains.len() != devices {
            return Err(Error::Contract("channel matrix has wrong row count".into()));
        }
        for (i, row) in self.gains.iter().enumerate() {
            if row.len() != servers {
                return Err(Error::Contract(format!(
                    "channel row {i} has wrong column count"
                )));
            }
            if row.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
                return Err(Error::Contract(format!(
                    "channel row {i} has a negative or non-finite gain"
                )));
            }
        }
        if !(self.noise_psd_w_per_hz > 0.0) {
            return Err(Error::Contract("noise density must be positive".into()));
        }
        Ok(())
    }
}

/// Joint decision: which server each device uses (`x`), the bandwidth
/// fraction each pair gets (`y`), and the compute fraction (`z`).
///
/// `x` is an M×E boolean matrix whose rows sum to exactly one; `y` and `z`
/// hold fractions in [0, 1]. Candidate `y`/`z` values exist for every pair
/// (not only associated ones) so association changes can adopt them.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub x: Vec<Vec<bool>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl Allocation {
    /// Builds an association-only allocation (`y`, `z` all zero) from a
    /// per-device server assignment.
    pub fn from_assignment(assignment: &[usize], servers: usize) -> Self {
        let m = assignment.len();
        let mut x = vec![vec![false; servers]; m];
        for (i, &j) in assignment.iter().enumerate() {
            x[i][j] = true;
        }
        Allocation {
            x,
            y: vec![vec![0.0; servers]; m],
            z: vec![vec![0.0; servers]; m],
        }
    }

    /// (devices, servers) shape.
    pub fn dims(&self) -> (usize, usize) {
        let m = self.x.len();
        let e = self.x.first().map_or(0, |r| r.len());
        (m, e)
    }

    /// The server device `i` is associated with, if its row is well-formed.
    pub fn server_of(&self, i: usize) -> Option<usize> {
        let row = self.x.get(i)?;
        let mut found = None;
        for (j, &on) in row.iter().enumerate() {
            if on {
                if found.is_some() {
                    return None;
                }
                found = Some(j);
            }
        }
        found
    }

    /// Per-device assignment vector; errors if any row is not exactly-one.
    pub fn assignment(&self) -> Result<Vec<usize>> {
        (0..self.x.len())
            .map(|i| {
                self.server_of(i).ok_or_else(|| {
                    Error::Contract(format!("device {i} is not associated with exactly one server"))
                })
            })
            .collect()
    }
}

/// Full system snapshot for one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Slot index in `[0, horizon)`.
    pub slot: usize,
    /// Total number of slots in the episode.
    pub horizon: usize,
    /// Slot duration, seconds.
    pub slot_seconds: f64,
    pub devices: Vec<MobileDevice>,
    pub servers: Vec<EdgeServer>,
    pub channel: ChannelState,
    /// One task per device, same order as `devices`.
    pub tasks: Vec<Task>,
}

impl EnvState {
    /// Validates shapes and every component's invariants.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.slot >= self.horizon {
            return Err(Error::Contract("slot index out of range".into()));
        }
        if !(self.slot_seconds > 0.0) {
            return Err(Error::Contract("slot duration must be positive".into()));
        }
        if self.tasks.len() != self.devices.len() {
            return Err(Error::Contract("one task per device required".into()));
        }
        for d in &self.devices {
            d.validate()?;
        }
        for s in &self.servers {
            s.validate()?;
        }
        for t in &self.tasks {
            t.validate()?;
        }
        self.channel.validate(self.devices.len(), self.servers.len())
    }
}
