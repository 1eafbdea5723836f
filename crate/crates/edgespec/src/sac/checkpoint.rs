//! Saving and restoring trained learners.
//!
//! A checkpoint is a JSON document holding the flat parameter vectors of
//! every network plus enough shape information to rebuild them, a format
//! version, and a fingerprint of the scenario configuration the learner
//! was trained under. Loading validates both: an unknown version or a
//! fingerprint mismatch is an error rather than a silently wrong learner.
//! Optimizer state is deliberately not persisted — a checkpoint captures
//! the learned functions for evaluation, not a resumable training session.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::scenario::ScenarioConfig;
use crate::rng::fnv1a;
use crate::sac::agent::{masac_from_seed, Masac};

/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    config_hash: u64,
    devices: usize,
    servers: usize,
    hidden: Vec<usize>,
    shared_policy: bool,
    twin_critic: bool,
    policies: Vec<Vec<f64>>,
    critic: Vec<f64>,
    critic_target: Vec<f64>,
    twin: Option<(Vec<f64>, Vec<f64>)>,
}

/// Stable fingerprint of a scenario configuration (hash of its canonical
/// serialized form).
pub fn config_fingerprint(cfg: &ScenarioConfig) -> Result<u64> {
    Ok(fnv1a(cfg.to_toml_string()?.as_bytes()))
}

/// Write the learner's parameters to `path`.
pub fn save_checkpoint(path: &Path, learner: &Masac, cfg: &ScenarioConfig) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config_hash: config_fingerprint(cfg)?,
        devices: learner.devices(),
        servers: learner.servers(),
        hidden: learner.sac.hidden.clone(),
        shared_policy: learner.sac.shared_policy,
        twin_critic: learner.sac.twin_critic,
        policies: learner.policies.iter().map(|p| p.trunk.params.clone()).collect(),
        critic: learner.critic.params.clone(),
        critic_target: learner.critic_target.params.clone(),
        twin: learner
            .twin
            .as_ref()
            .map(|(online, target)| (online.params.clone(), target.params.clone())),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Rebuild a learner from `path`, validating the format version and that
/// the checkpoint was produced under this exact scenario configuration.
pub fn load_checkpoint(path: &Path, cfg: &ScenarioConfig) -> Result<Masac> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let expected = config_fingerprint(cfg)?;
    if file.config_hash != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained under a different configuration \
             (fingerprint {:#018x}, expected {:#018x})",
            file.config_hash, expected
        )));
    }

    // Rebuild with the scenario's shapes, then overwrite every parameter
    // vector. The seed is irrelevant: all randomly initialized values are
    // replaced, and shape mismatches are hard errors.
    let mut learner = masac_from_seed(cfg, 0)?;
    let restore = |target: &mut Vec<f64>, source: &[f64], what: &str| -> Result<()> {
        if target.len() != source.len() {
            return Err(Error::Checkpoint(format!(
                "{what} has {} parameters, checkpoint holds {}",
                target.len(),
                source.len()
            )));
        }
        target.copy_from_slice(source);
        Ok(())
    };

    if learner.policies.len() != file.policies.len() {
        return Err(Error::Checkpoint(format!(
            "scenario expects {} policy networks, checkpoint holds {}",
            learner.policies.len(),
            file.policies.len()
        )));
    }
    for (idx, params) in file.policies.iter().enumerate() {
        restore(&mut learner.policies[idx].trunk.params, params, "policy network")?;
    }
    restore(&mut learner.critic.params, &file.critic, "critic network")?;
    restore(&mut learner.critic_target.params, &file.critic_target, "target critic")?;
    match (&mut learner.twin, &file.twin) {
        (Some((online, target)), Some((saved_online, saved_target))) => {
            restore(&mut online.params, saved_online, "second critic")?;
            restore(&mut target.params, saved_target, "second target critic")?;
        }
        (None, None) => {}
        _ => {
            return Err(Error::Checkpoint(
                "twin-critic setting differs between checkpoint and configuration".into(),
            ));
        }
    }
    Ok(learner)
}
