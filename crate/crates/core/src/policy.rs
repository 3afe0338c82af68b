//! Actor and critic networks: a shared-torso Gaussian policy over local
//! observations and a centralized three-head value function over the joint
//! observation.

use crate::env::{N_OBJECTIVES, OBS_DIM};
use crate::nn::{Architecture, MlpParams, MlpTrace};
use crate::vec2::{vec2, Vec2};
use rand::Rng;
use rand_distr::StandardNormal;

pub const ACTION_DIM: usize = 2;
pub const HIDDEN: usize = 256;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LOG_2PI: f64 = 1.8378770664093453;

pub fn actor_architecture() -> Architecture {
    Architecture::new(vec![OBS_DIM, HIDDEN, HIDDEN, 2 * ACTION_DIM])
}

pub fn critic_architecture(n_agents: usize) -> Architecture {
    Architecture::new(vec![n_agents * OBS_DIM, HIDDEN, HIDDEN, N_OBJECTIVES])
}

/// Mean and clamped log-std produced by the actor for one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianHead {
    pub mean: [f64; ACTION_DIM],
    pub log_std: [f64; ACTION_DIM],
}

impl GaussianHead {
    pub fn std(&self) -> [f64; ACTION_DIM] {
        self.log_std.map(f64::exp)
    }
}

/// Splits raw network outputs into the head, clamping the log-std range.
pub fn split_head(raw: &[f64]) -> GaussianHead {
    debug_assert_eq!(raw.len(), 2 * ACTION_DIM);
    GaussianHead {
        mean: [raw[0], raw[1]],
        log_std: [
            raw[2].clamp(LOG_STD_MIN, LOG_STD_MAX),
            raw[3].clamp(LOG_STD_MIN, LOG_STD_MAX),
        ],
    }
}

/// Maps gradients w.r.t. (mean, clamped log-std) back to the raw output
/// layer, zeroing the log-std components that sit outside the clamp range.
pub fn head_grad_to_raw(
    raw: &[f64],
    d_mean: [f64; ACTION_DIM],
    d_log_std: [f64; ACTION_DIM],
) -> [f64; 2 * ACTION_DIM] {
    let mut d_raw = [d_mean[0], d_mean[1], 0.0, 0.0];
    for k in 0..ACTION_DIM {
        let pass = raw[2 + k] > LOG_STD_MIN && raw[2 + k] < LOG_STD_MAX;
        d_raw[2 + k] = if pass { d_log_std[k] } else { 0.0 };
    }
    d_raw
}

pub fn actor_forward(params: &MlpParams, obs: &[f64]) -> GaussianHead {
    split_head(&params.forward(obs))
}

/// Draws an action from the factorized Gaussian; the log-probability is
/// evaluated on the raw (unclamped) sample. Executing callers clamp the
/// sample to [-1, 1] separately.
pub fn sample_action<R: Rng>(head: &GaussianHead, rng: &mut R) -> (Vec2, f64) {
    let std = head.std();
    let mut action = [0.0; ACTION_DIM];
    for k in 0..ACTION_DIM {
        let z: f64 = rng.sample(StandardNormal);
        action[k] = head.mean[k] + std[k] * z;
    }
    let lp = log_prob(head, &action);
    (vec2(action[0], action[1]), lp)
}

/// Diagonal-Gaussian log-density of `action`.
pub fn log_prob(head: &GaussianHead, action: &[f64; ACTION_DIM]) -> f64 {
    let std = head.std();
    let mut lp = 0.0;
    for k in 0..ACTION_DIM {
        let z = (action[k] - head.mean[k]) / std[k];
        lp += -0.5 * z * z - head.log_std[k] - 0.5 * LOG_2PI;
    }
    lp
}

/// Log-density together with its gradients w.r.t. mean and log-std.
pub fn log_prob_grad(
    head: &GaussianHead,
    action: &[f64; ACTION_DIM],
) -> (f64, [f64; ACTION_DIM], [f64; ACTION_DIM]) {
    let std = head.std();
    let mut lp = 0.0;
    let mut d_mean = [0.0; ACTION_DIM];
    let mut d_log_std = [0.0; ACTION_DIM];
    for k in 0..ACTION_DIM {
        let z = (action[k] - head.mean[k]) / std[k];
        lp += -0.5 * z * z - head.log_std[k] - 0.5 * LOG_2PI;
        d_mean[k] = z / std[k];
        d_log_std[k] = z * z - 1.0;
    }
    (lp, d_mean, d_log_std)
}

/// Differential entropy of the factorized Gaussian; independent of the mean.
pub fn entropy(head: &GaussianHead) -> f64 {
    head.log_std
        .iter()
        .map(|ls| 0.5 * (LOG_2PI + 1.0) + ls)
        .sum()
}

/// d entropy / d log_std is exactly 1 per dimension.
pub const ENTROPY_D_LOG_STD: f64 = 1.0;

/// Critic forward: three objective values for one joint observation.
pub fn critic_forward(params: &MlpParams, joint_obs: &[f64]) -> [f64; N_OBJECTIVES] {
    let out = params.forward(joint_obs);
    [out[0], out[1], out[2]]
}

/// Convenience wrapper bundling the actor trace with its split head.
pub struct ActorEval {
    pub trace: MlpTrace,
    pub head: GaussianHead,
}

pub fn actor_forward_trace(params: &MlpParams, obs: &[f64]) -> ActorEval {
    let mut trace = MlpTrace::default();
    params.forward_trace(obs, &mut trace);
    let head = split_head(trace.output());
    ActorEval { trace, head }
}
