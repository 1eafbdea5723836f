//! Scenario configuration: one file fully determines a system instance,
//! and together with a master seed, an entire trajectory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decode::VerificationMode;
use crate::error::{Error, Result};
use crate::net::channel::{PathLossParams, SnrMode};
use crate::net::model::ObjectiveParams;

/// Top-level scenario file. Every section has defaults, so a TOML file only
/// needs the keys it overrides.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    pub radio: RadioSection,
    pub channel: PathLossParams,
    pub devices: DeviceSection,
    pub servers: ServerSection,
    pub objective: ObjectiveSection,
    pub tasks: TaskSection,
    pub sac: SacSection,
}

/// Population sizes and the slotted-time frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    /// Number of mobile devices M.
    pub devices: usize,
    /// Number of edge servers E.
    pub servers: usize,
    /// Episode length in slots T.
    pub slots: usize,
    /// Slot duration τ, seconds.
    pub slot_seconds: f64,
    /// Side length of the square deployment area, meters.
    pub area_m: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self { devices: 12, servers: 3, slots: 50, slot_seconds: 1.0, area_m: 200.0 }
    }
}

/// Spectrum and transmit-power configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    /// Total system bandwidth W, Hz; split evenly across servers.
    pub total_bandwidth_hz: f64,
    /// Noise power spectral density, dBm/Hz.
    pub noise_psd_dbm_per_hz: f64,
    /// Device transmit power range, dBm (uniform per device).
    pub tx_power_dbm_min: f64,
    pub tx_power_dbm_max: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            total_bandwidth_hz: 10e6,
            noise_psd_dbm_per_hz: -174.0,
            tx_power_dbm_min: 16.0,
            tx_power_dbm_max: 24.0,
        }
    }
}

impl RadioSection {
    /// Noise density in W/Hz.
    pub fn noise_psd_w_per_hz(&self) -> f64 {
        10f64.powf((self.noise_psd_dbm_per_hz - 30.0) / 10.0)
    }
}

/// Device population profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    /// Compute speeds sampled uniformly from this list, FLOPS.
    pub local_flops_choices: Vec<f64>,
    pub battery_capacity_j: f64,
    /// Initial battery levels are spread evenly across this range so both
    /// low- and high-battery devices exist in every run.
    pub battery_init_min: f64,
    pub battery_init_max: f64,
    /// Walking speed range, m/s (random-waypoint mobility).
    pub speed_mps_min: f64,
    pub speed_mps_max: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            local_flops_choices: vec![5e11, 1e12, 2e12],
            battery_capacity_j: 50.0,
            battery_init_min: 0.1,
            battery_init_max: 0.95,
            speed_mps_min: 0.5,
            speed_mps_max: 2.0,
        }
    }
}

/// Server population profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    /// Compute speeds sampled uniformly from this list, FLOPS.
    pub compute_flops_choices: Vec<f64>,
    /// Mean of the per-slot queue-length draw (Poisson).
    pub queue_mean: f64,
    /// Queue slot duration κ, seconds; defaults to the system slot duration.
    pub queue_slot_seconds: Option<f64>,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            compute_flops_choices: vec![1e13, 2e13, 4e13],
            queue_mean: 1.5,
            queue_slot_seconds: None,
        }
    }
}

/// Objective weights; mirrors [`ObjectiveParams`] in file form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub sync_penalty: f64,
    pub energy_weight: f64,
    pub compute_energy_coeff: f64,
    pub comm_energy_coeff: f64,
    pub snr_mode: SnrMode,
    pub natural_log_rate: bool,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        let p = ObjectiveParams::default();
        Self {
            sync_penalty: p.sync_penalty,
            energy_weight: p.energy_weight,
            compute_energy_coeff: p.compute_energy_coeff,
            comm_energy_coeff: p.comm_energy_coeff,
            snr_mode: p.snr_mode,
            natural_log_rate: p.natural_log_rate,
        }
    }
}

impl ObjectiveSection {
    pub fn params(&self) -> ObjectiveParams {
        ObjectiveParams {
            sync_penalty: self.sync_penalty,
            energy_weight: self.energy_weight,
            compute_energy_coeff: self.compute_energy_coeff,
            comm_energy_coeff: self.comm_energy_coeff,
            snr_mode: self.snr_mode,
            natural_log_rate: self.natural_log_rate,
        }
    }
}

/// Per-slot task generation: three workload kinds with different expected
/// output lengths, costed from per-token decoding parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub bits_per_token: f64,
    pub draft_flops_per_token: f64,
    pub verify_flops_per_token: f64,
    pub expected_tokens_code: f64,
    pub expected_tokens_summarize: f64,
    pub expected_tokens_chat: f64,
    /// Draw actual token counts from a Poisson around the kind mean; when
    /// false, counts equal the means exactly.
    pub sample_token_counts: bool,
    /// Verification rule used when decoding runs are simulated for tasks.
    pub verification_mode: VerificationMode,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            bits_per_token: 64.0,
            draft_flops_per_token: 1e8,
            verify_flops_per_token: 1e9,
            expected_tokens_code: 192.0,
            expected_tokens_summarize: 96.0,
            expected_tokens_chat: 48.0,
            sample_token_counts: true,
            verification_mode: VerificationMode::Greedy,
        }
    }
}

impl TaskSection {
    pub fn expected_tokens(&self, kind: crate::net::types::TaskKind) -> f64 {
        use crate::net::types::TaskKind;
        match kind {
            TaskKind::Code => self.expected_tokens_code,
            TaskKind::Summarize => self.expected_tokens_summarize,
            TaskKind::Chat => self.expected_tokens_chat,
        }
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacSection {
    /// Hidden layer widths shared by policy and critic networks.
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Entropy temperature: weight on the policy's log-density bonus.
    pub temperature: f64,
    /// Discount factor on bootstrapped future value.
    pub discount: f64,
    /// Polyak averaging coefficient for target-network updates.
    pub soft_update: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Environment steps before updates begin.
    pub warmup_steps: usize,
    pub episodes: usize,
    /// Gradient updates per environment step.
    pub updates_per_step: usize,
    /// All server agents share one set of policy parameters.
    pub shared_policy: bool,
    /// Use min-of-two critics instead of the single critic.
    pub twin_critic: bool,
}

impl Default for SacSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            temperature: 0.05,
            discount: 0.99,
            soft_update: 0.01,
            batch_size: 64,
            replay_capacity: 20_000,
            warmup_steps: 200,
            episodes: 300,
            updates_per_step: 1,
            shared_policy: false,
            twin_critic: false,
        }
    }
}

impl ScenarioConfig {
    /// Parses a TOML scenario file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a scenario file from disk.
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Serializes back to TOML (for provenance copies next to results).
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("scenario encode: {e}")))
    }

    /// Validates all sections and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.devices == 0 || s.servers == 0 || s.slots == 0 {
            return Err(Error::Config("system sizes must be positive".into()));
        }
        if !(s.slot_seconds > 0.0) || !(s.area_m > 0.0) {
            return Err(Error::Config("slot duration and area must be positive".into()));
        }
        if !(self.radio.total_bandwidth_hz > 0.0) {
            return Err(Error::Config("total bandwidth must be positive".into()));
        }
        if self.radio.tx_power_dbm_min > self.radio.tx_power_dbm_max {
            return Err(Error::Config("tx power range is inverted".into()));
        }
        self.channel.validate()?;
        if self.devices.local_flops_choices.is_empty()
            || self.devices.local_flops_choices.iter().any(|f| !(*f > 0.0))
        {
            return Err(Error::Config("device compute choices must be positive".into()));
        }
        if !(self.devices.battery_capacity_j > 0.0) {
            return Err(Error::Config("battery capacity must be positive".into()));
        }
        if !(self.devices.battery_init_min > 0.0)
            || self.devices.battery_init_min > self.devices.battery_init_max
            || self.devices.battery_init_max > 1.0
        {
            return Err(Error::Config("battery range must satisfy 0 < min ≤ max ≤ 1".into()));
        }
        if self.devices.speed_mps_min < 0.0
            || self.devices.speed_mps_min > self.devices.speed_mps_max
        {
            return Err(Error::Config("speed range must satisfy 0 ≤ min ≤ max".into()));
        }
        if self.servers.compute_flops_choices.is_empty()
            || self.servers.compute_flops_choices.iter().any(|f| !(*f > 0.0))
        {
            return Err(Error::Config("server compute choices must be positive".into()));
        }
        if !(self.servers.queue_mean >= 0.0) {
            return Err(Error::Config("queue mean must be ≥ 0".into()));
        }
        if let Some(k) = self.servers.queue_slot_seconds {
            if !(k >= 0.0) {
                return Err(Error::Config("queue slot duration must be ≥ 0".into()));
            }
        }
        self.objective.params().validate()?;
        let t = &self.tasks;
        if !(t.bits_per_token > 0.0)
            || !(t.draft_flops_per_token > 0.0)
            || !(t.verify_flops_per_token > 0.0)
            || !(t.expected_tokens_code > 0.0)
            || !(t.expected_tokens_summarize > 0.0)
            || !(t.expected_tokens_chat > 0.0)
        {
            return Err(Error::Config("task cost parameters must be positive".into()));
        }
        let sac = &self.sac;
        if sac.hidden.is_empty() || sac.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(sac.actor_lr >= 0.0 && sac.critic_lr >= 0.0) {
            return Err(Error::Config("learning rates must be ≥ 0".into()));
        }
        if !(sac.temperature >= 0.0) {
            return Err(Error::Config("temperature must be ≥ 0".into()));
        }
        if !(sac.discount >= 0.0 && sac.discount <= 1.0) {
            return Err(Error::Config("discount must lie in [0, 1]".into()));
        }
        if !(sac.soft_update > 0.0 && sac.soft_update <= 1.0) {
            return Err(Error::Config("soft-update coefficient must lie in (0, 1]".into()));
        }
        if sac.batch_size == 0 || sac.replay_capacity == 0 || sac.episodes == 0 {
            return Err(Error::Config("learner sizes must be positive".into()));
        }
        Ok(())
    }

    /// Bandwidth slice per server, Hz.
    pub fn bandwidth_per_server_hz(&self) -> f64 {
        self.radio.total_bandwidth_hz / self.system.servers as f64
    }

    /// Queue slot duration κ (defaults to the system slot duration τ).
    pub fn queue_slot_seconds(&self) -> f64 {
        self.servers.queue_slot_seconds.unwrap_or(self.system.slot_seconds)
    }
}
