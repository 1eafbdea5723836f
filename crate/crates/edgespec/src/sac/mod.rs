//! Multi-agent soft actor-critic: policy/critic networks, replay,
//! observation encoding, the learner itself, and the training loop.

pub mod agent;
pub mod checkpoint;
pub mod mlp;
pub mod obs;
pub mod policy;
pub mod replay;
pub mod train;

pub use agent::{masac_from_seed, reward, ActOutcome, CriticStats, Masac, PolicyStats, ACTION_FLOOR};
pub use checkpoint::{config_fingerprint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use mlp::{soft_update, Adam, Mlp, MlpCache, MlpGrads};
pub use obs::{agent_obs, agent_obs_len, global_obs, global_obs_len, ObsBounds};
pub use policy::{GaussianPolicy, PolicyCache, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    evaluate_policy, read_curve_csv, train, write_curve_csv, CurveRow, TrainOutcome,
    DIVERGENCE_LIMIT,
};
