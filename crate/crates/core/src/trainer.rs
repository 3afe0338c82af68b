//! PPO training with per-objective clipped surrogates and gradient surgery:
//! rollout collection across parallel environments, per-objective GAE,
//! PCGrad-merged actor updates, and the training loop.

use crate::env::{EpisodeSummary, Observation, VecStepResult, VectorEnv, N_OBJECTIVES, OBS_DIM};
use crate::nn::{adam_step, AdamConfig, AdamState, MlpParams, MlpTrace};
use crate::pcgrad::{cosine, pcgrad_merge, sum_merge};
use crate::policy::{
    actor_architecture, actor_forward_trace, critic_architecture, entropy, head_grad_to_raw,
    log_prob_grad, sample_action, split_head, ACTION_DIM,
};
use crate::rollout::{AdvantageSet, ObjectiveVector, RolloutBuffer, StepRecord};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient during update {update}")]
    NonFiniteGradient { update: usize },
}

/// PPO hyperparameters. Defaults follow the training setup used throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPOConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Environment steps collected per update.
    pub rollout_length: usize,
    /// Environment-step samples per minibatch (each carries all its agents).
    pub minibatch_size: usize,
    pub n_envs: usize,
    pub total_steps_per_env: usize,
    pub pcgrad_enabled: bool,
    /// Checkpoint cadence in updates.
    pub checkpoint_every: usize,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            entropy_coef: 0.01,
            gamma: 0.95,
            gae_lambda: 0.95,
            learning_rate: 1e-3,
            epochs: 4,
            rollout_length: 16,
            minibatch_size: 4,
            n_envs: 4,
            total_steps_per_env: 27_000,
            pcgrad_enabled: true,
            checkpoint_every: 50,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda {} outside [0, 1]", self.gae_lambda));
        }
        if !(self.clip > 0.0) {
            return Err("clip must be positive".into());
        }
        if self.epochs == 0 || self.rollout_length == 0 || self.minibatch_size == 0 {
            return Err("epochs, rollout_length and minibatch_size must be positive".into());
        }
        if self.n_envs == 0 {
            return Err("need at least one environment".into());
        }
        Ok(())
    }
}

/// Mutable training state: networks, optimizer moments, RNG and counters.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub rng: ChaCha8Rng,
    pub updates_done: usize,
    pub steps_per_env: usize,
    pub global_steps: u64,
}

impl TrainerState {
    pub fn new(seed: u64, n_agents: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = MlpParams::orthogonal_init(actor_architecture(), 0.01, &mut rng);
        let critic = MlpParams::orthogonal_init(critic_architecture(n_agents), 1.0, &mut rng);
        let actor_opt = AdamState::new(actor.arch.param_count());
        let critic_opt = AdamState::new(critic.arch.param_count());
        Self {
            actor,
            critic,
            actor_opt,
            critic_opt,
            rng,
            updates_done: 0,
            steps_per_env: 0,
            global_steps: 0,
        }
    }
}

/// Telemetry of one gradient update, averaged over its minibatches.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    /// Per-objective clipped-surrogate losses (progress, energy, smoothness).
    pub actor_loss: ObjectiveVector,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Mean pairwise gradient cosines:
    /// (progress-energy, progress-smooth, energy-smooth).
    pub pair_cosines: [f64; 3],
    /// Most conflicting pairwise cosine seen across minibatches.
    pub min_pair_cosine: f64,
}

/// Observer for the training loop; all hooks default to no-ops.
pub trait TrainHooks {
    fn on_step(
        &mut self,
        _global_step: u64,
        _env_id: usize,
        _episode_index: u64,
        _step_in_episode: usize,
        _mean_rewards: ObjectiveVector,
        _status: &str,
    ) {
    }
    fn on_episode(&mut self, _summary: &EpisodeSummary) {}
    fn on_update(&mut self, _update: usize, _global_step: u64, _stats: &UpdateStats) {}
    fn on_checkpoint(&mut self, _update: usize, _state: &TrainerState) {}
    fn on_post_step(&mut self, _venv: &VectorEnv, _global_step: u64) {}
}

/// Hook implementation that ignores everything.
pub struct NullHooks;
impl TrainHooks for NullHooks {}

/// In-minibatch view of one actor sample.
struct ActorSample {
    obs: Observation,
    action: [f64; ACTION_DIM],
    old_log_prob: f64,
    advantages: ObjectiveVector,
}

/// Normalizes one objective's advantages in place: zero mean, unit variance
/// with a 1e-8 std floor.
pub fn normalize_advantages(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
}

/// Clipped-surrogate loss for one objective over a minibatch. Returns the
/// loss and, per sample, the coefficient `d loss / d new_log_prob` (zero on
/// clipped-and-saturated samples).
pub fn ppo_actor_loss(ratios: &[f64], advantages: &[f64], clip: f64) -> (f64, Vec<f64>) {
    let n = ratios.len() as f64;
    let mut loss = 0.0;
    let mut d_log_prob = Vec::with_capacity(ratios.len());
    for (&r, &a) in ratios.iter().zip(advantages) {
        let unclipped = r * a;
        let clipped = r.clamp(1.0 - clip, 1.0 + clip) * a;
        if unclipped <= clipped {
            loss -= unclipped / n;
            d_log_prob.push(-a * r / n);
        } else {
            loss -= clipped / n;
            // min picked the clipped branch strictly, so r sits outside the
            // clip interval and the gradient is cut.
            d_log_prob.push(0.0);
        }
    }
    (loss, d_log_prob)
}

/// Summed three-head mean-squared error.
pub fn critic_loss(predictions: &[ObjectiveVector], targets: &[ObjectiveVector]) -> f64 {
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        for k in 0..N_OBJECTIVES {
            let e = p[k] - t[k];
            loss += e * e / n;
        }
    }
    loss
}

/// One full PPO update over a collected rollout: per epoch, shuffled
/// env-step minibatches; per minibatch, three per-objective surrogate
/// gradients merged by PCGrad (or summed under the ablation), the entropy
/// bonus added after the merge, and Adam steps on actor and critic.
pub fn train_update(
    buffer: &RolloutBuffer,
    advantage_set: &AdvantageSet,
    state: &mut TrainerState,
    config: &PPOConfig,
) -> Result<UpdateStats, TrainError> {
    let t_len = buffer.len();
    let n_agents = buffer.n_agents;
    let mut env_steps: Vec<(usize, usize)> = (0..t_len)
        .flat_map(|t| (0..buffer.n_envs).map(move |e| (t, e)))
        .collect();

    let mut agg = StatsAccumulator::default();
    let adam = AdamConfig::with_lr(config.learning_rate);
    let actor_len = state.actor.arch.param_count();
    let critic_len = state.critic.arch.param_count();
    let mut objective_grads: Vec<Vec<f64>> =
        (0..N_OBJECTIVES).map(|_| vec![0.0; actor_len]).collect();
    let mut entropy_grad = vec![0.0; actor_len];
    let mut critic_grad = vec![0.0; critic_len];

    for _epoch in 0..config.epochs {
        env_steps.shuffle(&mut state.rng);
        for chunk in env_steps.chunks(config.minibatch_size) {
            // Gather the actor samples of this minibatch.
            let mut samples = Vec::with_capacity(chunk.len() * n_agents);
            for &(t, e) in chunk {
                let record = buffer.step(t, e);
                for agent in 0..n_agents {
                    samples.push(ActorSample {
                        obs: record.obs[agent],
                        action: record.actions[agent],
                        old_log_prob: record.log_probs[agent],
                        advantages: advantage_set.advantages[t][e][agent],
                    });
                }
            }

            // Forward pass and log-prob gradients under the current policy.
            let mut ratios = Vec::with_capacity(samples.len());
            let mut evals = Vec::with_capacity(samples.len());
            let mut lp_grads = Vec::with_capacity(samples.len());
            let mut entropy_sum = 0.0;
            let mut kl_sum = 0.0;
            for sample in &samples {
                let eval = actor_forward_trace(&state.actor, &sample.obs);
                let (lp, d_mean, d_log_std) = log_prob_grad(&eval.head, &sample.action);
                ratios.push((lp - sample.old_log_prob).exp());
                kl_sum += sample.old_log_prob - lp;
                entropy_sum += entropy(&eval.head);
                evals.push(eval);
                lp_grads.push((d_mean, d_log_std));
            }

            // Per-objective normalized advantages and surrogate gradients.
            let mut pair_cosines = [0.0; 3];
            for k in 0..N_OBJECTIVES {
                let mut advantages: Vec<f64> = samples.iter().map(|s| s.advantages[k]).collect();
                normalize_advantages(&mut advantages);
                let (loss, d_lp) = ppo_actor_loss(&ratios, &advantages, config.clip);
                agg.actor_loss[k] += loss;
                let grad = &mut objective_grads[k];
                grad.fill(0.0);
                for ((eval, (d_mean, d_log_std)), coeff) in evals.iter().zip(&lp_grads).zip(&d_lp) {
                    if *coeff == 0.0 {
                        continue;
                    }
                    let d_raw = head_grad_to_raw(
                        eval.trace.output(),
                        d_mean.map(|g| g * coeff),
                        d_log_std.map(|g| g * coeff),
                    );
                    state.actor.backward(&eval.trace, &d_raw, grad);
                }
            }
            let pairs = [(0, 1), (0, 2), (1, 2)];
            for (slot, (i, j)) in pairs.iter().enumerate() {
                let c = cosine(&objective_grads[*i], &objective_grads[*j]);
                pair_cosines[slot] = c;
                agg.pair_cosines[slot] += c;
                agg.min_pair_cosine = agg.min_pair_cosine.min(c);
            }

            let mut merged = if config.pcgrad_enabled {
                pcgrad_merge(&objective_grads, &mut state.rng)
            } else {
                sum_merge(&objective_grads)
            };

            // Entropy bonus, added once after the merge.
            entropy_grad.fill(0.0);
            let ent_coeff = -config.entropy_coef / samples.len() as f64;
            for eval in &evals {
                let d_raw = head_grad_to_raw(
                    eval.trace.output(),
                    [0.0; ACTION_DIM],
                    [ent_coeff; ACTION_DIM],
                );
                state.actor.backward(&eval.trace, &d_raw, &mut entropy_grad);
            }
            for (m, e) in merged.iter_mut().zip(&entropy_grad) {
                *m += e;
            }
            if merged.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGradient {
                    update: state.updates_done,
                });
            }
            adam_step(&mut state.actor.data, &merged, &mut state.actor_opt, adam);

            // Critic regression on the minibatch's env-step samples.
            critic_grad.fill(0.0);
            let mut predictions = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            let inv = 1.0 / chunk.len() as f64;
            for &(t, e) in chunk {
                let record = buffer.step(t, e);
                let mut trace = MlpTrace::default();
                state.critic.forward_trace(&record.joint_obs, &mut trace);
                let out = trace.output();
                let target = advantage_set.critic_targets[t][e];
                let mut d_out = [0.0; N_OBJECTIVES];
                let mut pred = [0.0; N_OBJECTIVES];
                for k in 0..N_OBJECTIVES {
                    pred[k] = out[k];
                    d_out[k] = 2.0 * (out[k] - target[k]) * inv;
                }
                state.critic.backward(&trace, &d_out, &mut critic_grad);
                predictions.push(pred);
                targets.push(target);
            }
            agg.critic_loss += critic_loss(&predictions, &targets);
            if critic_grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGradient {
                    update: state.updates_done,
                });
            }
            adam_step(
                &mut state.critic.data,
                &critic_grad,
                &mut state.critic_opt,
                adam,
            );

            let clipped = ratios
                .iter()
                .filter(|r| (*r - 1.0).abs() > config.clip)
                .count();
            agg.clip_fraction += clipped as f64 / ratios.len() as f64;
            agg.entropy += entropy_sum / samples.len() as f64;
            agg.approx_kl += kl_sum / samples.len() as f64;
            agg.minibatches += 1;
        }
    }
    state.updates_done += 1;
    Ok(agg.finish())
}

#[derive(Debug)]
struct StatsAccumulator {
    actor_loss: ObjectiveVector,
    critic_loss: f64,
    entropy: f64,
    clip_fraction: f64,
    approx_kl: f64,
    pair_cosines: [f64; 3],
    min_pair_cosine: f64,
    minibatches: usize,
}

impl Default for StatsAccumulator {
    fn default() -> Self {
        Self {
            actor_loss: [0.0; N_OBJECTIVES],
            critic_loss: 0.0,
            entropy: 0.0,
            clip_fraction: 0.0,
            approx_kl: 0.0,
            pair_cosines: [0.0; 3],
            min_pair_cosine: f64::INFINITY,

            minibatches: 0,
        }
    }
}

impl StatsAccumulator {
    fn finish(self) -> UpdateStats {
        let n = self.minibatches.max(1) as f64;
        UpdateStats {
            actor_loss: self.actor_loss.map(|v| v / n),
            critic_loss: self.critic_loss / n,
            entropy: self.entropy / n,
            clip_fraction: self.clip_fraction / n,
            approx_kl: self.approx_kl / n,
            pair_cosines: self.pair_cosines.map(|v| v / n),
            min_pair_cosine: self.min_pair_cosine,
        }
    }
}

/// Collects `rollout_length` steps from every environment into the buffer,
/// sampling actions from the current policy, and returns the bootstrap
/// values for the post-rollout states.
pub fn collect_rollout(
    venv: &mut VectorEnv,
    state: &mut TrainerState,
    config: &PPOConfig,
    buffer: &mut RolloutBuffer,
    current_obs: &mut Vec<Vec<Observation>>,
    hooks: &mut dyn TrainHooks,
) -> Vec<ObjectiveVector> {
    buffer.clear();
    let n_envs = venv.n_envs();
    let n_agents = buffer.n_agents;
    for _ in 0..config.rollout_length {
        let mut joint_obs: Vec<Vec<f64>> = Vec::with_capacity(n_envs);
        let mut actions_raw: Vec<Vec<[f64; 2]>> = Vec::with_capacity(n_envs);
        let mut log_probs: Vec<Vec<f64>> = Vec::with_capacity(n_envs);
        let mut values: Vec<ObjectiveVector> = Vec::with_capacity(n_envs);
        let mut exec_actions = Vec::with_capacity(n_envs);
        for env_id in 0..n_envs {
            let joint = flatten_obs(&current_obs[env_id]);
            values.push(crate::policy::critic_forward(&state.critic, &joint));
            joint_obs.push(joint);
            let mut raw = Vec::with_capacity(n_agents);
            let mut lps = Vec::with_capacity(n_agents);
            let mut exec = Vec::with_capacity(n_agents);
            for agent in 0..n_agents {
                let head = split_head(&state.actor.forward(&current_obs[env_id][agent]));
                let (sample, lp) = sample_action(&head, &mut state.rng);
                raw.push([sample.x, sample.y]);
                lps.push(lp);
                exec.push(sample.clamp_components(-1.0, 1.0));
            }
            actions_raw.push(raw);
            log_probs.push(lps);
            exec_actions.push(exec);
        }

        let results: Vec<VecStepResult> = venv.step(&exec_actions);
        state.global_steps += n_envs as u64;
        state.steps_per_env += 1;

        let mut records = Vec::with_capacity(n_envs);
        for (env_id, result) in results.iter().enumerate() {
            let status = result.status;
            let terminated = status.is_true_termination();
            let truncated = status.is_terminal() && !terminated;
            let terminal_value = if truncated {
                let joint = flatten_obs(result.final_observations.as_ref().unwrap());
                crate::policy::critic_forward(&state.critic, &joint)
            } else {
                [0.0; N_OBJECTIVES]
            };
            let rewards: Vec<ObjectiveVector> =
                (0..n_agents).map(|a| result.rewards.row(a)).collect();
            let mean = result.rewards.mean_columns();
            let step_in_episode = if status.is_terminal() {
                result.episode.map(|s| s.length).unwrap_or(0)
            } else {
                venv.envs()[env_id].step_count()
            };
            let episode_index = result
                .episode
                .map(|s| s.episode_index)
                .unwrap_or_else(|| venv.envs()[env_id].episode_index());
            hooks.on_step(
                state.global_steps,
                env_id,
                episode_index,
                step_in_episode,
                mean,
                status.label(),
            );
            if let Some(summary) = &result.episode {
                hooks.on_episode(summary);
            }
            records.push(StepRecord {
                obs: std::mem::take(&mut current_obs[env_id]),
                joint_obs: std::mem::take(&mut joint_obs[env_id]),
                actions: std::mem::take(&mut actions_raw[env_id]),
                log_probs: std::mem::take(&mut log_probs[env_id]),
                rewards,
                value: values[env_id],
                terminated,
                truncated,
                terminal_value,
            });
            current_obs[env_id] = result.observations.clone();
        }
        buffer.push(records);
        hooks.on_post_step(venv, state.global_steps);
    }
    (0..n_envs)
        .map(|e| crate::policy::critic_forward(&state.critic, &flatten_obs(&current_obs[e])))
        .collect()
}

pub fn flatten_obs(obs: &[Observation]) -> Vec<f64> {
    let mut joint = Vec::with_capacity(obs.len() * OBS_DIM);
    for o in obs {
        joint.extend_from_slice(o);
    }
    joint
}

/// Alternates rollouts and updates until every environment has collected its
/// step budget. Checkpoints fire through the hooks every
/// `checkpoint_every` updates and once at the end.
pub fn run_training(
    venv: &mut VectorEnv,
    state: &mut TrainerState,
    config: &PPOConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(), TrainError> {
    let n_agents = venv.envs()[0].n_agents();
    let mut buffer = RolloutBuffer::new(config.rollout_length, venv.n_envs(), n_agents);
    let mut current_obs = venv.reset_all();
    while state.steps_per_env < config.total_steps_per_env {
        let bootstrap = collect_rollout(venv, state, config, &mut buffer, &mut current_obs, hooks);
        let advantage_set = buffer.compute_gae(&bootstrap, config.gamma, config.gae_lambda);
        let stats = train_update(&buffer, &advantage_set, state, config)?;
        hooks.on_update(state.updates_done, state.global_steps, &stats);
        if config.checkpoint_every > 0 && state.updates_done % config.checkpoint_every == 0 {
            hooks.on_checkpoint(state.updates_done, state);
        }
    }
    hooks.on_checkpoint(state.updates_done, state);
    Ok(())
}
