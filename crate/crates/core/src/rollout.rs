//! Rollout storage and per-objective generalized advantage estimation.

use crate::env::{Observation, N_OBJECTIVES};

pub type ObjectiveVector = [f64; N_OBJECTIVES];

/// Everything recorded for one environment at one rollout step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Per-agent observations the policy acted on.
    pub obs: Vec<Observation>,
    /// Joint observation the critic valued.
    pub joint_obs: Vec<f64>,
    /// Raw (unclamped) action samples, for importance ratios.
    pub actions: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<ObjectiveVector>,
    /// Critic value of the acted-on state.
    pub value: ObjectiveVector,
    /// Episode ended this step in a true terminal state (no bootstrap).
    pub terminated: bool,
    /// Episode was cut off this step (bootstraps with `terminal_value`).
    pub truncated: bool,
    /// Critic value of the final observation, valid when `truncated`.
    pub terminal_value: ObjectiveVector,
}

/// Fixed-length rollout of transitions, `[step][env]`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub capacity: usize,
    pub n_envs: usize,
    pub n_agents: usize,
    steps: Vec<Vec<StepRecord>>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize, n_envs: usize, n_agents: usize) -> Self {
        Self {
            capacity,
            n_envs,
            n_agents,
            steps: Vec::with_capacity(capacity),
        }
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() >= self.capacity
    }

    pub fn push(&mut self, records: Vec<StepRecord>) {
        assert_eq!(records.len(), self.n_envs);
        assert!(!self.is_full(), "rollout buffer overflow");
        self.steps.push(records);
    }

    pub fn step(&self, t: usize, env: usize) -> &StepRecord {
        &self.steps[t][env]
    }

    /// Backward GAE recursion per objective, per agent:
    /// `A_t = delta_t + gamma lambda A_{t+1}` gated at episode boundaries,
    /// with `delta_t = r_t + gamma V(s_{t+1}) - V(s_t)`. True terminations
    /// zero the bootstrap; truncations bootstrap with the stored terminal
    /// value; the rollout end bootstraps with `bootstrap[env]`.
    pub fn compute_gae(
        &self,
        bootstrap: &[ObjectiveVector],
        gamma: f64,
        lambda: f64,
    ) -> AdvantageSet {
        assert_eq!(bootstrap.len(), self.n_envs);
        let t_len = self.steps.len();
        let mut advantages =
            vec![vec![vec![[0.0; N_OBJECTIVES]; self.n_agents]; self.n_envs]; t_len];
        let mut critic_targets = vec![vec![[0.0; N_OBJECTIVES]; self.n_envs]; t_len];
        for env in 0..self.n_envs {
            let mut carry = vec![[0.0; N_OBJECTIVES]; self.n_agents];
            for t in (0..t_len).rev() {
                let record = &self.steps[t][env];
                let ended = record.terminated || record.truncated;
                let next_value: ObjectiveVector = if record.terminated {
                    [0.0; N_OBJECTIVES]
                } else if record.truncated {
                    record.terminal_value
                } else if t + 1 == t_len {
                    bootstrap[env]
                } else {
                    self.steps[t + 1][env].value
                };
                let gate = if ended { 0.0 } else { 1.0 };
                let mut target_sum = [0.0; N_OBJECTIVES];
                for agent in 0..self.n_agents {
                    for k in 0..N_OBJECTIVES {
                        let delta =
                            record.rewards[agent][k] + gamma * next_value[k] - record.value[k];
                        let adv = delta + gamma * lambda * gate * carry[agent][k];
                        advantages[t][env][agent][k] = adv;
                        carry[agent][k] = adv;
                        target_sum[k] += adv + record.value[k];
                    }
                }
                for k in 0..N_OBJECTIVES {
                    critic_targets[t][env][k] = target_sum[k] / self.n_agents as f64;
                }
            }
        }
        AdvantageSet {
            advantages,
            critic_targets,
        }
    }
}

/// Per-objective advantages for every actor sample and value-regression
/// targets for every critic sample.
#[derive(Debug, Clone)]
pub struct AdvantageSet {
    /// `[step][env][agent][objective]`
    pub advantages: Vec<Vec<Vec<ObjectiveVector>>>,
    /// `[step][env][objective]`: per-agent targets averaged over agents.
    pub critic_targets: Vec<Vec<ObjectiveVector>>,
}
