//! Episode-based training of the multi-agent learner.
//!
//! Each episode replays the scenario from its initial slot: the learner
//! acts every slot, the objective is evaluated, and the reward is the
//! objective normalized by what a reference policy (random association,
//! equal resource split) scores on the very same slot — drawn from its own
//! seed stream so the reference is independent of the learner's
//! exploration noise. Transitions feed a replay buffer; after a warmup
//! period every environment step triggers gradient updates and a target
//! soft update.
//!
//! The loop is single-threaded and deterministic for a fixed master seed.
//! A divergence detector aborts on exploding losses rather than letting a
//! run silently produce garbage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_allocation, random_assoc};
use crate::error::{Error, Result};
use crate::net::env::{init_env, step_env};
use crate::net::model::evaluate;
use crate::net::scenario::ScenarioConfig;
use crate::rng::substream;
use crate::sac::agent::{masac_from_seed, reward, Masac};
use crate::sac::obs::{agent_obs, global_obs};
use crate::sac::replay::{ReplayBuffer, Transition};

/// Absolute loss beyond which training is considered divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Per-episode training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// Episode index, starting at 0.
    pub episode: usize,
    /// Mean per-slot reward over the episode.
    pub mean_reward: f64,
    /// Mean critic loss over the episode's updates (0 if none ran).
    pub critic_loss: f64,
    /// Mean policy loss over the episode's updates (0 if none ran).
    pub policy_loss: f64,
    /// Mean entropy estimate over the episode's updates (0 if none ran).
    pub entropy: f64,
}

/// A trained learner plus its training curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The learner after the final episode.
    pub learner: Masac,
    /// One row per episode.
    pub curve: Vec<CurveRow>,
}

/// Train a fresh learner on the scenario. Deterministic per master seed.
pub fn train(cfg: &ScenarioConfig, master_seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut learner = masac_from_seed(cfg, master_seed)?;
    let bounds = learner.bounds().clone();
    let servers = cfg.system.servers;
    let slots = cfg.system.slots;

    let mut replay = ReplayBuffer::new(cfg.sac.replay_capacity);
    // Index 0 of the policy stream seeded the networks; exploration uses 1.
    let mut act_rng = substream(master_seed, "policy", 1);
    let mut update_rng = substream(master_seed, "replay", 0);

    let mut curve = Vec::with_capacity(cfg.sac.episodes);
    let mut global_step: usize = 0;

    for episode in 0..cfg.sac.episodes {
        let mut state = init_env(cfg, master_seed)?;
        let mut reward_sum = 0.0;
        let mut critic_loss_sum = 0.0;
        let mut policy_loss_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut updates = 0usize;

        for slot in 0..slots {
            let g_obs = global_obs(&state, &bounds);
            let a_obs: Vec<Vec<f64>> =
                (0..servers).map(|j| agent_obs(&state, j, &bounds)).collect();

            let out = if global_step < cfg.sac.warmup_steps {
                learner.random_act(&state, &mut act_rng)?
            } else {
                learner.act(&state, false, &mut act_rng)?
            };
            let eval = evaluate(&state, &out.alloc, &learner.objective)?;

            // Reference objective on the same slot, from its own stream.
            // Indexing by slot (not global step) means a replayed episode
            // meets the same reference roll on the same state, so reward
            // differences across episodes come from the policy rather than
            // from reference luck.
            let mut ref_rng = substream(master_seed, "baseline", slot as u64);
            let ref_assign = random_assoc(&state, &mut ref_rng);
            let ref_alloc = baseline_allocation(&ref_assign, servers);
            let ref_eval = evaluate(&state, &ref_alloc, &learner.objective)?;
            let r = reward(eval.objective, ref_eval.objective)?;
            reward_sum += r;

            let done = slot + 1 == slots;
            let (next_state, next_g_obs, next_a_obs) = if done {
                // Terminal: the stored next observation is never
                // bootstrapped from, so reuse the current one.
                (None, g_obs.clone(), a_obs.clone())
            } else {
                let energy: Vec<f64> = eval
                    .per_device
                    .iter()
                    .map(|d| d.compute_energy_j + d.comm_energy_j)
                    .collect();
                let next = step_env(&state, cfg, master_seed, &energy)?;
                let ng = global_obs(&next, &bounds);
                let na: Vec<Vec<f64>> =
                    (0..servers).map(|j| agent_obs(&next, j, &bounds)).collect();
                (Some(next), ng, na)
            };

            replay.push(Transition {
                global_obs: g_obs,
                agent_obs: a_obs,
                actions: out.raw_actions,
                reward: r,
                next_global_obs: next_g_obs,
                next_agent_obs: next_a_obs,
                done,
            });
            global_step += 1;

            if global_step >= cfg.sac.warmup_steps && replay.len() >= cfg.sac.batch_size {
                for _ in 0..cfg.sac.updates_per_step {
                    let batch = replay.sample(cfg.sac.batch_size, &mut update_rng);
                    let c = learner.critic_update(&batch, &mut update_rng)?;
                    let p = learner.policy_update(&batch, &mut update_rng)?;
                    learner.soft_update_targets();
                    if c.loss.abs() > DIVERGENCE_LIMIT || p.loss.abs() > DIVERGENCE_LIMIT {
                        return Err(Error::Diverged(format!(
                            "training diverged at episode {episode}, slot {slot}: \
                             critic loss {:.3e}, policy loss {:.3e}",
                            c.loss, p.loss
                        )));
                    }
                    critic_loss_sum += c.loss;
                    policy_loss_sum += p.loss;
                    entropy_sum += p.entropy;
                    updates += 1;
                }
            }

            if let Some(next) = next_state {
                state = next;
            }
        }

        let n_updates = updates.max(1) as f64;
        curve.push(CurveRow {
            episode,
            mean_reward: reward_sum / slots as f64,
            critic_loss: if updates == 0 { 0.0 } else { critic_loss_sum / n_updates },
            policy_loss: if updates == 0 { 0.0 } else { policy_loss_sum / n_updates },
            entropy: if updates == 0 { 0.0 } else { entropy_sum / n_updates },
        });
    }

    Ok(TrainOutcome { learner, curve })
}

/// Mean per-slot reward of a deterministic (mode-action) rollout over one
/// episode of the scenario's environment streams.
///
/// Uses the same per-slot reference rolls as [`train`], so the returned
/// mean is on the same scale as the training curve: two learners evaluated
/// under the same master seed see identical states and references, and any
/// difference in the result is the policies' doing.
pub fn evaluate_policy(
    cfg: &ScenarioConfig,
    learner: &Masac,
    master_seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    // Index 2 of the policy stream: 0 seeds networks, 1 is exploration.
    // Mode actions draw nothing, but the slot needs an rng to pass.
    let mut rng = substream(master_seed, "policy", 2);
    let mut state = init_env(cfg, master_seed)?;
    let slots = cfg.system.slots;
    let mut total = 0.0;
    for slot in 0..slots {
        let out = learner.act(&state, true, &mut rng)?;
        let eval = evaluate(&state, &out.alloc, &learner.objective)?;
        let mut ref_rng = substream(master_seed, "baseline", slot as u64);
        let ref_assign = random_assoc(&state, &mut ref_rng);
        let ref_alloc = baseline_allocation(&ref_assign, cfg.system.servers);
        let ref_eval = evaluate(&state, &ref_alloc, &learner.objective)?;
        total += reward(eval.objective, ref_eval.objective)?;
        if slot + 1 < slots {
            let energy: Vec<f64> = eval
                .per_device
                .iter()
                .map(|d| d.compute_energy_j + d.comm_energy_j)
                .collect();
            state = step_env(&state, cfg, master_seed, &energy)?;
        }
    }
    Ok(total / slots as f64)
}

/// Write a training curve as CSV with a fixed header.
pub fn write_curve_csv(path: &Path, curve: &[CurveRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in curve {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Read a training curve written by [`write_curve_csv`].
pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::sac::mlp::{Adam, Mlp};
    use crate::sac::policy::GaussianPolicy;

    fn tiny_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.system.devices = 3;
        cfg.system.servers = 2;
        cfg.system.slots = 10;
        cfg.sac.hidden = vec![8];
        cfg.sac.batch_size = 16;
        cfg.sac.warmup_steps = 20;
        cfg.sac.episodes = 6;
        cfg.objective.compute_energy_coeff = 1e-13;
        cfg.objective.comm_energy_coeff = 1e-12;
        cfg
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let cfg = tiny_cfg();
        let a = train(&cfg, 5).unwrap();
        let b = train(&cfg, 5).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.learner.critic.params, b.learner.critic.params);
        for (pa, pb) in a.learner.policies.iter().zip(b.learner.policies.iter()) {
            assert_eq!(pa.trunk.params, pb.trunk.params);
        }
        // Different seeds genuinely differ.
        let c = train(&cfg, 6).unwrap();
        assert_ne!(a.curve, c.curve);
    }

    #[test]
    fn curve_has_one_row_per_episode_with_finite_stats() {
        let cfg = tiny_cfg();
        let out = train(&cfg, 1).unwrap();
        assert_eq!(out.curve.len(), cfg.sac.episodes);
        for (i, row) in out.curve.iter().enumerate() {
            assert_eq!(row.episode, i);
            assert!(row.mean_reward.is_finite());
            assert!(row.critic_loss.is_finite());
            assert!(row.policy_loss.is_finite());
            assert!(row.entropy.is_finite());
            // Rewards are negated normalized objectives: strictly negative.
            assert!(row.mean_reward < 0.0);
        }
    }

    #[test]
    fn zero_learning_rates_leave_the_reward_curve_flat() {
        let mut cfg = tiny_cfg();
        cfg.sac.actor_lr = 0.0;
        cfg.sac.critic_lr = 0.0;
        cfg.sac.episodes = 30;
        // No warmup: random warmup actions would give the first episode a
        // different reward distribution than the frozen-policy episodes,
        // which a trend test would misread as drift.
        cfg.sac.warmup_steps = 0;
        let out = train(&cfg, 7).unwrap();

        // Parameters must be untouched relative to a fresh learner.
        let fresh = masac_from_seed(&cfg, 7).unwrap();
        assert_eq!(out.learner.critic.params, fresh.critic.params);

        // Ordinary least squares on episode index vs mean reward: the
        // slope's 95% interval must contain zero.
        let n = out.curve.len() as f64;
        let xs: Vec<f64> = (0..out.curve.len()).map(|i| i as f64).collect();
        let ys: Vec<f64> = out.curve.iter().map(|r| r.mean_reward).collect();
        let x_mean = xs.iter().sum::<f64>() / n;
        let y_mean = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
        let sxy: f64 =
            xs.iter().zip(ys.iter()).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
        let slope = sxy / sxx;
        let residual_ss: f64 = xs
            .iter()
            .zip(ys.iter())
            .map(|(x, y)| {
                let fit = y_mean + slope * (x - x_mean);
                (y - fit) * (y - fit)
            })
            .sum();
        let se = (residual_ss / (n - 2.0) / sxx).sqrt();
        // t(0.975, 28) ~ 2.048.
        assert!(
            slope.abs() <= 2.048 * se.max(1e-12),
            "no-update control shows a trend: slope {slope} vs se {se}"
        );
    }

    #[test]
    fn exploding_learning_rates_trip_the_divergence_detector() {
        let mut cfg = tiny_cfg();
        cfg.sac.critic_lr = 1e6;
        cfg.sac.warmup_steps = 16;
        cfg.sac.episodes = 3;
        let err = train(&cfg, 8).unwrap_err();
        assert_eq!(err.kind(), "diverged");
        assert!(err.to_string().contains("episode"));
    }

    #[test]
    fn curve_csv_round_trips_with_the_fixed_header() {
        let curve = vec![
            CurveRow {
                episode: 0,
                mean_reward: -1.25,
                critic_loss: 0.5,
                policy_loss: -0.1,
                entropy: 3.0,
            },
            CurveRow {
                episode: 1,
                mean_reward: -1.0,
                critic_loss: 0.4,
                policy_loss: -0.2,
                entropy: 2.5,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_curve_csv(&path, &curve).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("episode,mean_reward,critic_loss,policy_loss,entropy\n"));
        assert_eq!(read_curve_csv(&path).unwrap(), curve);
    }

    /// Two-option reward landscape with a known optimum: actions below one
    /// half pay 0.3, actions at or above pay 1.0. Stateless, one step per
    /// episode. The learning rule (critic regression + policy ascent) must
    /// steer the deterministic action to the better side.
    #[test]
    fn the_learning_rule_solves_a_two_armed_bandit() {
        for seed in [0u64, 1] {
            let mut rng = substream(seed, "policy", 0);
            let mut policy = GaussianPolicy::new(1, &[16], 1, &mut rng);
            let mut critic = Mlp::new(&[2, 16, 1], &mut rng);
            let mut p_opt = Adam::new(3e-3, policy.trunk.params.len());
            let mut c_opt = Adam::new(3e-3, critic.params.len());
            let obs = [0.0];
            let pay = |a: f64| if a < 0.5 { 0.3 } else { 1.0 };
            let alpha = 0.02;

            let mut history: Vec<(f64, f64)> = Vec::new(); // (action, reward)
            let mut solved_at = None;
            for step in 0..5000 {
                let a = policy.sample(&obs, &mut rng).action[0];
                history.push((a, pay(a)));

                if history.len() >= 32 {
                    // Critic regression toward observed rewards.
                    let mut c_grads = vec![0.0; critic.params.len()];
                    let batch: Vec<(f64, f64)> = (0..32)
                        .map(|_| history[rng.random_range(0..history.len())])
                        .collect();
                    for &(a, r) in &batch {
                        let cache = critic.forward_cached(&[obs[0], a]);
                        let err = cache.output()[0] - r;
                        let g = critic.backward(&cache, &[err / 32.0]);
                        for (acc, gi) in c_grads.iter_mut().zip(g.params.iter()) {
                            *acc += gi;
                        }
                    }
                    c_opt.step(&mut critic.params, &c_grads);

                    // Policy ascent on Q with a small entropy bonus.
                    let mut p_grads = vec![0.0; policy.trunk.params.len()];
                    for _ in 0..32 {
                        let cache = policy.sample(&obs, &mut rng);
                        let c_cache = critic.forward_cached(&[obs[0], cache.action[0]]);
                        let dq_da = critic.backward(&c_cache, &[1.0]).input[1];
                        let g = policy.backward(&cache, &[-dq_da / 32.0], alpha / 32.0);
                        for (acc, gi) in p_grads.iter_mut().zip(g.params.iter()) {
                            *acc += gi;
                        }
                    }
                    p_opt.step(&mut policy.trunk.params, &p_grads);
                }

                if step % 100 == 99 {
                    let mode_reward = pay(policy.mode(&obs)[0]);
                    if mode_reward >= 0.95 {
                        solved_at = Some(step + 1);
                        break;
                    }
                }
            }
            let steps = solved_at.unwrap_or(usize::MAX);
            assert!(
                steps <= 5000,
                "seed {seed}: deterministic action never reached 95% of the optimum"
            );
        }
    }

    /// A scenario where allocation choices carry real weight: no queue
    /// waits and tight server compute, so the per-device compute shares
    /// dominate latency and a better policy is visibly better.
    fn allocation_sensitive_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.system.devices = 12;
        cfg.system.servers = 3;
        cfg.system.slots = 25;
        cfg.servers.queue_mean = 0.0;
        cfg.servers.compute_flops_choices = vec![3e11, 5e11, 8e11];
        cfg.objective.compute_energy_coeff = 1e-13;
        cfg.objective.comm_energy_coeff = 1e-12;
        cfg.sac.hidden = vec![32, 32];
        cfg.sac.temperature = 0.01;
        cfg.sac.actor_lr = 3e-4;
        cfg.sac.critic_lr = 1e-3;
        cfg.sac.batch_size = 64;
        cfg.sac.updates_per_step = 2;
        cfg.sac.warmup_steps = 100;
        cfg.sac.episodes = 80;
        cfg
    }

    /// Training should leave the deterministic (mode-action) policy better
    /// than it started. Fresh and trained learners are rolled out on the
    /// identical environment streams, so each seed is a paired comparison
    /// with no environment noise in the difference.
    #[test]
    fn training_makes_measurable_progress_on_the_reference_scenario() {
        let cfg = allocation_sensitive_cfg();
        let mut improved = 0;
        let mut deltas = Vec::new();
        let seeds = 3;
        for seed in 0..seeds {
            let master = 100 + seed;
            let fresh = masac_from_seed(&cfg, master).unwrap();
            let before = evaluate_policy(&cfg, &fresh, master).unwrap();
            let out = train(&cfg, master).unwrap();
            let after = evaluate_policy(&cfg, &out.learner, master).unwrap();
            if after > before {
                improved += 1;
            }
            deltas.push(after - before);
        }
        let mean_delta = deltas.iter().sum::<f64>() / seeds as f64;
        assert!(
            improved >= 2,
            "training improved on only {improved}/{seeds} seeds: {deltas:?}"
        );
        assert!(
            mean_delta > 0.02,
            "mean improvement {mean_delta} is too small: {deltas:?}"
        );
    }
}
