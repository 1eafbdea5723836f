//! Multi-agent soft actor-critic over the network model.
//!
//! One agent per edge server. Agent `j`'s action is its own pair of
//! allocation columns — bandwidth shares then compute shares for every
//! device, `2M` values in `[0, 1]` — produced by a squashed-Gaussian
//! policy from that agent's observation. Training follows the
//! centralized-training / decentralized-execution recipe: a single critic
//! (optionally twinned) scores the *joint* state and the *joint* action,
//! every agent's policy ascends that critic, and all agents share the
//! global scalar reward.
//!
//! Acting stitches the pieces of the rest of the crate together: sample
//! each agent's columns, clamp them to a small positive floor (a zero
//! compute share would make every association of that device infeasible),
//! hand the raw matrices to the association stage — which seeds by gain,
//! refines by pairwise exchanges, and projects — and return the resulting
//! feasible allocation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matching::{associate, SwapRecord, SwapStrategy};
use crate::net::model::ObjectiveParams;
use crate::net::scenario::{SacSection, ScenarioConfig};
use crate::net::types::{Allocation, EnvState};
use crate::rng::substream;
use crate::sac::mlp::{soft_update, Adam, Mlp};
use crate::sac::obs::{agent_obs, agent_obs_len, global_obs_len, ObsBounds};
use crate::sac::policy::GaussianPolicy;
use crate::sac::replay::Transition;

/// Floor applied to raw action entries before projection.
pub const ACTION_FLOOR: f64 = 1e-6;

/// Shared global reward: the objective normalized by a reference policy's
/// objective on the same slot, negated so that maximizing reward minimizes
/// the objective. A reference value of exactly the objective gives `-1`.
pub fn reward(objective: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::Contract(format!(
            "reward baseline must be positive, got {baseline}"
        )));
    }
    Ok(-objective / baseline)
}

/// Result of one acting step.
#[derive(Debug, Clone)]
pub struct ActOutcome {
    /// Feasible allocation after association and projection.
    pub alloc: Allocation,
    /// Raw per-agent actions (floored, pre-projection) — what the critic
    /// sees and what the replay buffer stores.
    pub raw_actions: Vec<Vec<f64>>,
    /// Pairwise exchanges the association stage performed.
    pub swaps: Vec<SwapRecord>,
}

/// Scalar diagnostics from one critic gradient step.
#[derive(Debug, Clone, Copy)]
pub struct CriticStats {
    /// Half mean squared temporal-difference error.
    pub loss: f64,
}

/// Scalar diagnostics from one policy gradient step.
#[derive(Debug, Clone, Copy)]
pub struct PolicyStats {
    /// Mean over agents of `temperature * log pi - Q`.
    pub loss: f64,
    /// Mean over agents and samples of `-log pi` (entropy estimate).
    pub entropy: f64,
}

/// The full learner: per-server policies plus centralized critic(s).
#[derive(Debug, Clone)]
pub struct Masac {
    devices: usize,
    servers: usize,
    bounds: ObsBounds,
    /// Policy networks: one per server, or a single shared one.
    pub policies: Vec<GaussianPolicy>,
    /// Online critic over (global observation, joint action).
    pub critic: Mlp,
    /// Slowly-tracking copy of the critic used for bootstrap targets.
    pub critic_target: Mlp,
    /// Optional second critic pair (online, target); targets then use the
    /// pairwise minimum, the standard overestimation guard.
    pub twin: Option<(Mlp, Mlp)>,
    policy_opts: Vec<Adam>,
    critic_opt: Adam,
    twin_opt: Option<Adam>,
    /// Hyperparameters.
    pub sac: SacSection,
    /// Objective parameters used when acting.
    pub objective: ObjectiveParams,
    /// Exchange strategy used by the association stage when acting.
    pub strategy: SwapStrategy,
}

impl Masac {
    /// Fresh learner for the scenario's dimensions and hyperparameters.
    pub fn new<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.system.devices;
        let e = cfg.system.servers;
        let sac = cfg.sac.clone();
        let bounds = ObsBounds::from_config(cfg);

        let n_policies = if sac.shared_policy { 1 } else { e };
        let policies: Vec<GaussianPolicy> = (0..n_policies)
            .map(|_| GaussianPolicy::new(agent_obs_len(m), &sac.hidden, 2 * m, rng))
            .collect();
        let policy_opts = policies
            .iter()
            .map(|p| Adam::new(sac.actor_lr, p.trunk.params.len()))
            .collect();

        let critic_in = global_obs_len(m, e) + 2 * m * e;
        let mut critic_sizes = Vec::with_capacity(sac.hidden.len() + 2);
        critic_sizes.push(critic_in);
        critic_sizes.extend_from_slice(&sac.hidden);
        critic_sizes.push(1);
        let critic = Mlp::new(&critic_sizes, rng);
        let critic_target = critic.clone();
        let critic_opt = Adam::new(sac.critic_lr, critic.params.len());
        let (twin, twin_opt) = if sac.twin_critic {
            let c2 = Mlp::new(&critic_sizes, rng);
            let opt = Adam::new(sac.critic_lr, c2.params.len());
            (Some((c2.clone(), c2)), Some(opt))
        } else {
            (None, None)
        };

        Ok(Masac {
            devices: m,
            servers: e,
            bounds,
            policies,
            critic,
            critic_target,
            twin,
            policy_opts,
            critic_opt,
            twin_opt,
            sac,
            objective: cfg.objective.params(),
            strategy: SwapStrategy::FirstImprovement,
        })
    }

    /// Number of devices this learner was built for.
    pub fn devices(&self) -> usize {
        self.devices
    }

    /// Number of server agents.
    pub fn servers(&self) -> usize {
        self.servers
    }

    /// Observation normalization bounds in use.
    pub fn bounds(&self) -> &ObsBounds {
        &self.bounds
    }

    /// The policy acting for server `j`.
    pub fn policy(&self, j: usize) -> &GaussianPolicy {
        if self.sac.shared_policy {
            &self.policies[0]
        } else {
            &self.policies[j]
        }
    }

    fn policy_index(&self, j: usize) -> usize {
        if self.sac.shared_policy {
            0
        } else {
            j
        }
    }

    /// Turn per-agent raw actions into a feasible allocation: floor, hand
    /// to the association stage (gain seeding, pairwise-exchange
    /// refinement, projection), and return the result.
    pub fn realize_actions(
        &self,
        state: &EnvState,
        raw_actions: &[Vec<f64>],
    ) -> Result<ActOutcome> {
        let m = self.devices;
        let e = self.servers;
        let mut y_raw = vec![vec![0.0; e]; m];
        let mut z_raw = vec![vec![0.0; e]; m];
        let mut floored = Vec::with_capacity(e);
        for (j, action) in raw_actions.iter().enumerate() {
            assert_eq!(action.len(), 2 * m, "agent action width mismatch");
            let a: Vec<f64> =
                action.iter().map(|v| v.clamp(ACTION_FLOOR, 1.0)).collect();
            for i in 0..m {
                y_raw[i][j] = a[i];
                z_raw[i][j] = a[m + i];
            }
            floored.push(a);
        }
        let (alloc, swaps) =
            associate(&y_raw, &z_raw, state, &self.objective, self.strategy)?;
        Ok(ActOutcome { alloc, raw_actions: floored, swaps })
    }

    /// Act on a state: sample (or take the mode of) each agent's columns
    /// and realize them into a feasible allocation.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        deterministic: bool,
        rng: &mut R,
    ) -> Result<ActOutcome> {
        let raw: Vec<Vec<f64>> = (0..self.servers)
            .map(|j| {
                let obs = agent_obs(state, j, &self.bounds);
                if deterministic {
                    self.policy(j).mode(&obs)
                } else {
                    self.policy(j).sample(&obs, rng).action
                }
            })
            .collect();
        self.realize_actions(state, &raw)
    }

    /// Uniformly random actions through the same realization pipeline —
    /// the exploration used before updates begin.
    pub fn random_act<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        rng: &mut R,
    ) -> Result<ActOutcome> {
        let raw: Vec<Vec<f64>> = (0..self.servers)
            .map(|_| (0..2 * self.devices).map(|_| rng.random::<f64>()).collect())
            .collect();
        self.realize_actions(state, &raw)
    }

    fn critic_input(&self, global: &[f64], joint_action: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(global.len() + joint_action.len());
        input.extend_from_slice(global);
        input.extend_from_slice(joint_action);
        input
    }

    fn joint_action(actions: &[Vec<f64>]) -> Vec<f64> {
        actions.iter().flat_map(|a| a.iter().copied()).collect()
    }

    /// Online critic's value for a (global observation, joint action) pair.
    pub fn q_value(&self, global: &[f64], joint_action: &[f64]) -> f64 {
        self.critic.forward(&self.critic_input(global, joint_action))[0]
    }

    /// Bootstrap targets for a batch: reward plus discounted target-critic
    /// value of a fresh next action, with the entropy bonus subtracted.
    /// Episode-terminal transitions do not bootstrap.
    pub fn critic_targets<R: Rng + ?Sized>(
        &self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Vec<f64> {
        batch
            .iter()
            .map(|t| {
                if t.done || self.sac.discount == 0.0 {
                    return t.reward;
                }
                let mut next_actions = Vec::with_capacity(self.servers);
                let mut log_prob = 0.0;
                for j in 0..self.servers {
                    let s = self.policy(j).sample(&t.next_agent_obs[j], rng);
                    log_prob += s.log_prob;
                    next_actions.push(s.action);
                }
                let joint = Self::joint_action(&next_actions);
                let input = self.critic_input(&t.next_global_obs, &joint);
                let mut q = self.critic_target.forward(&input)[0];
                if let Some((_, target2)) = &self.twin {
                    q = q.min(target2.forward(&input)[0]);
                }
                t.reward + self.sac.discount * (q - self.sac.temperature * log_prob)
            })
            .collect()
    }

    /// One gradient step of every online critic toward fixed targets.
    /// Returns the loss (half mean squared error) before the step.
    pub fn critic_step(&mut self, batch: &[&Transition], targets: &[f64]) -> Result<CriticStats> {
        assert_eq!(batch.len(), targets.len(), "batch/target length mismatch");
        let n = batch.len() as f64;
        let mut loss = 0.0;

        let inputs: Vec<Vec<f64>> = batch
            .iter()
            .map(|t| self.critic_input(&t.global_obs, &Self::joint_action(&t.actions)))
            .collect();

        let mut all_grads: Vec<(Vec<f64>, bool)> = Vec::new(); // (grads, is_twin)
        {
            let mut grads = vec![0.0; self.critic.params.len()];
            for (input, &y) in inputs.iter().zip(targets.iter()) {
                let cache = self.critic.forward_cached(input);
                let q = cache.output()[0];
                let err = q - y;
                loss += 0.5 * err * err / n;
                let g = self.critic.backward(&cache, &[err / n]);
                for (acc, gi) in grads.iter_mut().zip(g.params.iter()) {
                    *acc += gi;
                }
            }
            all_grads.push((grads, false));
        }
        if let Some((online2, _)) = &self.twin {
            let mut grads = vec![0.0; online2.params.len()];
            for (input, &y) in inputs.iter().zip(targets.iter()) {
                let cache = online2.forward_cached(input);
                let q = cache.output()[0];
                let err = q - y;
                loss += 0.5 * err * err / n;
                let g = online2.backward(&cache, &[err / n]);
                for (acc, gi) in grads.iter_mut().zip(g.params.iter()) {
                    *acc += gi;
                }
            }
            all_grads.push((grads, true));
        }

        if !loss.is_finite() || all_grads.iter().any(|(g, _)| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged(
                "non-finite value in critic update; check rewards and learning rates".into(),
            ));
        }
        for (grads, is_twin) in all_grads {
            if is_twin {
                let (online2, _) = self.twin.as_mut().unwrap();
                self.twin_opt.as_mut().unwrap().step(&mut online2.params, &grads);
            } else {
                self.critic_opt.step(&mut self.critic.params, &grads);
            }
        }
        Ok(CriticStats { loss })
    }

    /// Convenience: targets followed by a critic step.
    pub fn critic_update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<CriticStats> {
        let targets = self.critic_targets(batch, rng);
        self.critic_step(batch, &targets)
    }

    /// Standard-normal noise for one reparameterized policy pass over a
    /// batch (one vector per sample). Kept separate from the gradient
    /// computation so the latter is a deterministic function of parameters
    /// — which is what makes it testable against finite differences.
    pub fn policy_noise<R: Rng + ?Sized>(&self, batch_len: usize, rng: &mut R) -> Vec<Vec<f64>> {
        use rand_distr::StandardNormal;
        (0..batch_len)
            .map(|_| (0..2 * self.devices).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    }

    /// Loss and trunk gradients for agent `j` under fixed noise:
    /// `mean_k [ temperature * log pi(a_k) - Q(s_k, joint with block j = a_k) ]`,
    /// with the other agents' blocks taken from the stored batch actions.
    pub fn policy_loss_and_grads(
        &self,
        j: usize,
        batch: &[&Transition],
        noises: &[Vec<f64>],
    ) -> (f64, Vec<f64>, f64) {
        assert_eq!(batch.len(), noises.len(), "batch/noise length mismatch");
        let n = batch.len() as f64;
        let m = self.devices;
        let policy = self.policy(j);
        let mut grads = vec![0.0; policy.trunk.params.len()];
        let mut loss = 0.0;
        let mut entropy = 0.0;

        for (t, eps) in batch.iter().zip(noises.iter()) {
            let cache = policy.evaluate_with_noise(&t.agent_obs[j], eps);

            let mut joint = Self::joint_action(&t.actions);
            joint[j * 2 * m..(j + 1) * 2 * m].copy_from_slice(&cache.action);
            let input = self.critic_input(&t.global_obs, &joint);

            // Pick the critic the policy ascends: the pairwise minimum when
            // twinned, the single critic otherwise.
            let cache_c1 = self.critic.forward_cached(&input);
            let q1 = cache_c1.output()[0];
            let (q, d_input) = if let Some((online2, _)) = &self.twin {
                let cache_c2 = online2.forward_cached(&input);
                let q2 = cache_c2.output()[0];
                if q2 < q1 {
                    (q2, online2.backward(&cache_c2, &[1.0]).input)
                } else {
                    (q1, self.critic.backward(&cache_c1, &[1.0]).input)
                }
            } else {
                (q1, self.critic.backward(&cache_c1, &[1.0]).input)
            };

            loss += (self.sac.temperature * cache.log_prob - q) / n;
            entropy += -cache.log_prob / n;

            // dL/da = -dQ/da for this agent's block, scaled by 1/n.
            let global_len = t.global_obs.len();
            let block = &d_input[global_len + j * 2 * m..global_len + (j + 1) * 2 * m];
            let d_action: Vec<f64> = block.iter().map(|dq| -dq / n).collect();
            let g = policy.backward(&cache, &d_action, self.sac.temperature / n);
            for (acc, gi) in grads.iter_mut().zip(g.params.iter()) {
                *acc += gi;
            }
        }
        (loss, grads, entropy)
    }

    /// One ascent step for every agent's policy. Returns mean loss and
    /// mean entropy estimate across agents.
    pub fn policy_update<R: Rng + ?Sized>(
        &mut self,
        batch: &[&Transition],
        rng: &mut R,
    ) -> Result<PolicyStats> {
        let e = self.servers;
        let mut total_loss = 0.0;
        let mut total_entropy = 0.0;

        if self.sac.shared_policy {
            let mut acc = vec![0.0; self.policies[0].trunk.params.len()];
            for j in 0..e {
                let noises = self.policy_noise(batch.len(), rng);
                let (loss, grads, entropy) = self.policy_loss_and_grads(j, batch, &noises);
                total_loss += loss / e as f64;
                total_entropy += entropy / e as f64;
                for (a, g) in acc.iter_mut().zip(grads.iter()) {
                    *a += g / e as f64;
                }
            }
            if !total_loss.is_finite() || acc.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged("non-finite value in policy update".into()));
            }
            self.policy_opts[0].step(&mut self.policies[0].trunk.params, &acc);
        } else {
            for j in 0..e {
                let noises = self.policy_noise(batch.len(), rng);
                let (loss, grads, entropy) = self.policy_loss_and_grads(j, batch, &noises);
                if !loss.is_finite() || grads.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged(format!(
                        "non-finite value in policy update for agent {j}"
                    )));
                }
                let idx = self.policy_index(j);
                self.policy_opts[idx].step(&mut self.policies[idx].trunk.params, &grads);
                total_loss += loss / e as f64;
                total_entropy += entropy / e as f64;
            }
        }
        Ok(PolicyStats { loss: total_loss, entropy: total_entropy })
    }

    /// Polyak-average every target critic toward its online critic.
    pub fn soft_update_targets(&mut self) {
        soft_update(&self.critic.params, &mut self.critic_target.params, self.sac.soft_update);
        if let Some((online2, target2)) = &mut self.twin {
            soft_update(&online2.params, &mut target2.params, self.sac.soft_update);
        }
    }
}

/// Build a learner seeded from the scenario's master seed (policy stream).
pub fn masac_from_seed(cfg: &ScenarioConfig, master_seed: u64) -> Result<Masac> {
    let mut rng = substream(master_seed, "policy", 0);
    Masac::new(cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::env::init_env;
    use crate::net::model::feasibility_check;
    use crate::sac::obs::global_obs;
    use crate::sac::replay::ReplayBuffer;

    fn small_cfg(m: usize, e: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.system.devices = m;
        cfg.system.servers = e;
        cfg.sac.hidden = vec![16, 16];
        cfg.objective.compute_energy_coeff = 1e-13;
        cfg.objective.comm_energy_coeff = 1e-12;
        cfg
    }

    fn one_transition(cfg: &ScenarioConfig, seed: u64, reward_value: f64) -> Transition {
        let state = init_env(cfg, seed).unwrap();
        let agent = masac_from_seed(cfg, seed).unwrap();
        let b = agent.bounds().clone();
        let g = global_obs(&state, &b);
        let obs: Vec<Vec<f64>> =
            (0..cfg.system.servers).map(|j| agent_obs(&state, j, &b)).collect();
        let mut rng = substream(seed, "policy", 7);
        let actions: Vec<Vec<f64>> = (0..cfg.system.servers)
            .map(|_| {
                (0..2 * cfg.system.devices)
                    .map(|_| rng.random_range(ACTION_FLOOR..1.0))
                    .collect()
            })
            .collect();
        Transition {
            global_obs: g.clone(),
            agent_obs: obs.clone(),
            actions,
            reward: reward_value,
            next_global_obs: g,
            next_agent_obs: obs,
            done: false,
        }
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(3.0, 3.0).unwrap(), -1.0);
        assert_eq!(reward(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(reward(1.0, 2.0).unwrap(), -0.5);
        assert_eq!(reward(1.0, 0.0).unwrap_err().kind(), "contract");
        assert_eq!(reward(1.0, -2.0).unwrap_err().kind(), "contract");
    }

    #[test]
    fn acting_always_yields_feasible_allocations() {
        let cfg = small_cfg(4, 2);
        let state = init_env(&cfg, 0).unwrap();
        let agent = masac_from_seed(&cfg, 0).unwrap();
        let mut rng = substream(0, "policy", 1);
        for trial in 0..1000 {
            let out = agent.act(&state, false, &mut rng).unwrap();
            assert!(
                feasibility_check(&out.alloc).is_empty(),
                "trial {trial} produced an infeasible allocation"
            );
        }
    }

    #[test]
    fn deterministic_acting_is_reproducible() {
        let cfg = small_cfg(5, 3);
        let state = init_env(&cfg, 1).unwrap();
        let agent = masac_from_seed(&cfg, 1).unwrap();
        let mut rng_a = substream(2, "policy", 0);
        let mut rng_b = substream(99, "policy", 0);
        let a = agent.act(&state, true, &mut rng_a).unwrap();
        let b = agent.act(&state, true, &mut rng_b).unwrap();
        assert_eq!(a.alloc, b.alloc);
        assert_eq!(a.raw_actions, b.raw_actions);
    }

    #[test]
    fn a_single_server_forces_the_association() {
        let cfg = small_cfg(4, 1);
        let state = init_env(&cfg, 2).unwrap();
        let agent = masac_from_seed(&cfg, 2).unwrap();
        let mut rng = substream(3, "policy", 0);
        let out = agent.act(&state, false, &mut rng).unwrap();
        assert_eq!(out.alloc.assignment().unwrap(), vec![0; 4]);
        assert!(out.swaps.is_empty());
    }

    #[test]
    fn myopic_targets_reduce_to_the_reward() {
        let mut cfg = small_cfg(3, 2);
        cfg.sac.discount = 0.0;
        cfg.sac.temperature = 0.0;
        let agent = masac_from_seed(&cfg, 3).unwrap();
        let t = one_transition(&cfg, 3, -0.7);
        let batch = [&t];
        let targets = agent.critic_targets(&batch, &mut substream(3, "replay", 0));
        assert_eq!(targets, vec![-0.7]);
    }

    #[test]
    fn terminal_transitions_do_not_bootstrap() {
        let cfg = small_cfg(3, 2);
        let agent = masac_from_seed(&cfg, 4).unwrap();
        let mut t = one_transition(&cfg, 4, -1.3);
        t.done = true;
        let batch = [&t];
        let targets = agent.critic_targets(&batch, &mut substream(4, "replay", 0));
        assert_eq!(targets, vec![-1.3]);
    }

    #[test]
    fn repeated_updates_regress_q_to_a_fixed_reward() {
        let mut cfg = small_cfg(3, 2);
        cfg.sac.discount = 0.0;
        cfg.sac.temperature = 0.0;
        cfg.sac.critic_lr = 1e-2;
        let mut agent = masac_from_seed(&cfg, 5).unwrap();
        let t = one_transition(&cfg, 5, -0.42);
        let batch = [&t];
        let mut rng = substream(5, "replay", 0);
        for _ in 0..2000 {
            agent.critic_update(&batch, &mut rng).unwrap();
        }
        let joint: Vec<f64> = t.actions.iter().flatten().copied().collect();
        let q = agent.q_value(&t.global_obs, &joint);
        assert!((q + 0.42).abs() < 1e-3, "Q regressed to {q}, wanted -0.42");
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        let cfg = small_cfg(3, 2);
        let mut agent = masac_from_seed(&cfg, 6).unwrap();
        let transitions: Vec<Transition> =
            (0..4).map(|k| one_transition(&cfg, 10 + k, -0.5 - 0.1 * k as f64)).collect();
        let batch: Vec<&Transition> = transitions.iter().collect();
        let targets = agent.critic_targets(&batch, &mut substream(6, "replay", 0));

        // Analytic gradients: replicate critic_step's accumulation without
        // the optimizer step.
        let n = batch.len() as f64;
        let mut grads = vec![0.0; agent.critic.params.len()];
        for (t, &y) in batch.iter().zip(targets.iter()) {
            let joint: Vec<f64> = t.actions.iter().flatten().copied().collect();
            let input = agent.critic_input(&t.global_obs, &joint);
            let cache = agent.critic.forward_cached(&input);
            let err = cache.output()[0] - y;
            let g = agent.critic.backward(&cache, &[err / n]);
            for (acc, gi) in grads.iter_mut().zip(g.params.iter()) {
                *acc += gi;
            }
        }

        let loss_of = |critic: &Mlp| -> f64 {
            let mut loss = 0.0;
            for (t, &y) in batch.iter().zip(targets.iter()) {
                let joint: Vec<f64> = t.actions.iter().flatten().copied().collect();
                let mut input = t.global_obs.clone();
                input.extend_from_slice(&joint);
                let q = critic.forward(&input)[0];
                loss += 0.5 * (q - y) * (q - y) / n;
            }
            loss
        };

        let mut rng = substream(7, "replay", 0);
        for probe in 0..10 {
            let idx = rng.random_range(0..agent.critic.params.len());
            let eps = 1e-5 * agent.critic.params[idx].abs().max(1.0);
            let mut plus = agent.critic.clone();
            plus.params[idx] += eps;
            let mut minus = agent.critic.clone();
            minus.params[idx] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            let an = grads[idx];
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
            assert!(rel <= 1e-4, "probe {probe}: param {idx} fd {fd} vs analytic {an}");
        }

        // The convenience update applies exactly one optimizer step and
        // reports a finite loss.
        let stats = agent.critic_step(&batch, &targets).unwrap();
        assert!(stats.loss.is_finite());
    }

    #[test]
    fn policy_gradients_match_finite_differences_through_the_critic() {
        let cfg = small_cfg(3, 2);
        let agent = masac_from_seed(&cfg, 8).unwrap();
        let transitions: Vec<Transition> =
            (0..3).map(|k| one_transition(&cfg, 20 + k, -0.8)).collect();
        let batch: Vec<&Transition> = transitions.iter().collect();
        let noises = agent.policy_noise(batch.len(), &mut substream(8, "replay", 1));

        let j = 1;
        let (_, grads, _) = agent.policy_loss_and_grads(j, &batch, &noises);

        let loss_of = |agent: &Masac| agent.policy_loss_and_grads(j, &batch, &noises).0;

        let mut rng = substream(9, "replay", 0);
        let n_params = agent.policy(j).trunk.params.len();
        for probe in 0..10 {
            let idx = rng.random_range(0..n_params);
            let base = agent.policy(j).trunk.params[idx];
            let eps = 1e-5 * base.abs().max(1.0);
            let mut plus = agent.clone();
            let pj = plus.policy_index(j);
            plus.policies[pj].trunk.params[idx] += eps;
            let mut minus = agent.clone();
            let mj = minus.policy_index(j);
            minus.policies[mj].trunk.params[idx] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            let an = grads[idx];
            let rel = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
            assert!(rel <= 1e-4, "probe {probe}: param {idx} fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn entropy_dominant_updates_grow_the_policy_spread() {
        // Flat critic: Q identically zero, so only the entropy term drives
        // updates. Note the bounded action space caps this effect: once the
        // spread is large, tanh squashing piles probability mass at the
        // interval ends and the *squashed* entropy falls again, so the
        // entropy-optimal spread is moderate, not infinite. Starting from a
        // deliberately narrow policy, the spread must widen monotonically
        // while the entropy gradient points upward.
        let mut rng = substream(30, "policy", 0);
        let mut policy = GaussianPolicy::new(1, &[], 1, &mut rng);
        let n = policy.trunk.params.len();
        policy.trunk.params[n - 2] = 0.0; // mean head
        policy.trunk.params[n - 1] = -1.5; // raw spread head -> sigma ~ 0.009
        let mut opt = Adam::new(3e-3, n);
        let obs = [0.0];
        let alpha = 0.5;

        let sigma_now = |p: &GaussianPolicy| p.evaluate_with_noise(&obs, &[0.0]).log_std[0].exp();

        let mut checkpoints = vec![sigma_now(&policy)];
        for step in 0..500 {
            // Batch of 8 samples per step to keep the gradient estimate tame.
            let mut grads = vec![0.0; n];
            for _ in 0..8 {
                let cache = policy.sample(&obs, &mut rng);
                let g = policy.backward(&cache, &[0.0], alpha / 8.0);
                for (acc, gi) in grads.iter_mut().zip(g.params.iter()) {
                    *acc += gi;
                }
            }
            opt.step(&mut policy.trunk.params, &grads);
            if (step + 1) % 50 == 0 {
                checkpoints.push(sigma_now(&policy));
            }
        }
        for w in checkpoints.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-6,
                "spread shrank between checkpoints: {checkpoints:?}"
            );
        }
        assert!(
            *checkpoints.last().unwrap() > checkpoints[0] * 5.0,
            "spread did not grow substantially: {checkpoints:?}"
        );
    }

    #[test]
    fn with_zero_temperature_the_mode_climbs_a_quadratic_critic() {
        // Synthetic critic peaked at a known action; policy updates with
        // alpha = 0 must move the mode there and never push the mode's
        // value downhill across checkpoints.
        let target = [0.7, 0.25];
        let q = |a: &[f64]| -> f64 {
            -a.iter().zip(target.iter()).map(|(ai, ti)| (ai - ti) * (ai - ti)).sum::<f64>()
        };
        let dq = |a: &[f64]| -> Vec<f64> {
            a.iter().zip(target.iter()).map(|(ai, ti)| -2.0 * (ai - ti)).collect()
        };

        let mut rng = substream(31, "policy", 0);
        let mut policy = GaussianPolicy::new(1, &[16], 2, &mut rng);
        let mut opt = Adam::new(3e-3, policy.trunk.params.len());
        let obs = [0.0];

        let mode_value = |p: &GaussianPolicy| q(&p.mode(&obs));
        let mut checkpoints = vec![mode_value(&policy)];
        for step in 0..300 {
            // Batch of 8 reparameterized samples per step.
            let mut grads = vec![0.0; policy.trunk.params.len()];
            for _ in 0..8 {
                let cache = policy.sample(&obs, &mut rng);
                let d_action: Vec<f64> = dq(&cache.action).iter().map(|g| -g / 8.0).collect();
                let g = policy.backward(&cache, &d_action, 0.0);
                for (acc, gi) in grads.iter_mut().zip(g.params.iter()) {
                    *acc += gi;
                }
            }
            opt.step(&mut policy.trunk.params, &grads);
            if (step + 1) % 30 == 0 {
                checkpoints.push(mode_value(&policy));
            }
        }
        let mode = policy.mode(&obs);
        for (d, (got, want)) in mode.iter().zip(target.iter()).enumerate() {
            assert!(
                (got - want).abs() <= 0.05,
                "dim {d}: mode {got} vs target {want} (checkpoints {checkpoints:?})"
            );
        }
        for w in checkpoints.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-3,
                "mode value moved downhill: {checkpoints:?}"
            );
        }
    }

    #[test]
    fn soft_target_updates_interpolate_and_converge() {
        let mut cfg = small_cfg(3, 2);
        cfg.sac.soft_update = 0.25;
        let mut agent = masac_from_seed(&cfg, 9).unwrap();
        // Desynchronize the target, then verify the interpolation.
        for p in agent.critic_target.params.iter_mut() {
            *p = 0.0;
        }
        let online = agent.critic.params.clone();
        agent.soft_update_targets();
        for (t, o) in agent.critic_target.params.iter().zip(online.iter()) {
            assert!((t - 0.25 * o).abs() < 1e-12);
        }
        for _ in 0..100 {
            agent.soft_update_targets();
        }
        for (t, o) in agent.critic_target.params.iter().zip(online.iter()) {
            assert!((t - o).abs() < 1e-9 * o.abs().max(1.0));
        }
    }

    #[test]
    fn full_update_cycle_runs_and_stays_finite() {
        let mut cfg = small_cfg(4, 2);
        cfg.sac.batch_size = 8;
        let mut agent = masac_from_seed(&cfg, 12).unwrap();
        let mut buf = ReplayBuffer::new(64);
        for k in 0..16 {
            buf.push(one_transition(&cfg, 40 + k, -1.0 - 0.01 * k as f64));
        }
        let mut rng = substream(12, "replay", 0);
        for _ in 0..20 {
            let batch = buf.sample(8, &mut rng);
            let c = agent.critic_update(&batch, &mut rng).unwrap();
            let p = agent.policy_update(&batch, &mut rng).unwrap();
            agent.soft_update_targets();
            assert!(c.loss.is_finite() && p.loss.is_finite() && p.entropy.is_finite());
        }
    }

    #[test]
    fn twin_critics_track_their_own_targets() {
        let mut cfg = small_cfg(3, 2);
        cfg.sac.twin_critic = true;
        let mut agent = masac_from_seed(&cfg, 13).unwrap();
        assert!(agent.twin.is_some());
        let t = one_transition(&cfg, 13, -0.9);
        let batch = [&t];
        let mut rng = substream(13, "replay", 0);
        for _ in 0..5 {
            agent.critic_update(&batch, &mut rng).unwrap();
            agent.policy_update(&batch, &mut rng).unwrap();
            agent.soft_update_targets();
        }
        let (online2, target2) = agent.twin.as_ref().unwrap();
        assert_ne!(online2.params, agent.critic.params);
        assert!(target2.params.iter().all(|v| v.is_finite()));
    }
}
