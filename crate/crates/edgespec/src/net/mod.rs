//! Wireless and compute system model: channel, rates, latency, energy,
//! the scalar objective, and time-slotted environment dynamics.

pub mod channel;
pub mod env;
pub mod model;
pub mod scenario;
pub mod types;

pub use channel::{path_gain, snr, PathLossParams, SnrMode};
pub use env::{draw_tasks, init_env, regen_channel, step_env, BATTERY_FLOOR};
pub use model::{
    data_rate, device_energy, evaluate, feasibility_check, local_delay, objective,
    project_shares, remote_delay, snr_matrix, Constraint, DeviceEval, Evaluation,
    ObjectiveParams, Violation,
};
pub use scenario::{
    DeviceSection, ObjectiveSection, RadioSection, SacSection, ScenarioConfig, ServerSection,
    SystemSection, TaskSection,
};
pub use types::{Allocation, ChannelState, EdgeServer, EnvState, MobileDevice, Task, TaskKind};
