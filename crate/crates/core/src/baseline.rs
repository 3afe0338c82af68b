//! Fixed reference policies and the episode evaluator.

use crate::env::{Environment, EpisodeStatus, N_OBJECTIVES};
use crate::nn::MlpParams;
use crate::policy::{actor_forward, sample_action};
use crate::vec2::{vec2, Vec2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Maximal thrust directly upstream.
    UpstreamMax,
    /// Diagonal thrust upstream and toward the nearer wall.
    WallHug,
}

impl std::str::FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upstream_max" => Ok(Self::UpstreamMax),
            "wall_hug" => Ok(Self::WallHug),
            other => Err(format!(
                "unknown baseline '{other}' (upstream_max|wall_hug)"
            )),
        }
    }
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::UpstreamMax => "upstream_max",
            Self::WallHug => "wall_hug",
        }
    }
}

/// The fixed action of a baseline for an agent at height `y`.
pub fn baseline_action(kind: BaselineKind, y: f64, channel_width: f64) -> Vec2 {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    match kind {
        BaselineKind::UpstreamMax => vec2(-1.0, 0.0),
        BaselineKind::WallHug => {
            if y >= channel_width / 2.0 {
                vec2(-c, c)
            } else {
                vec2(-c, -c)
            }
        }
    }
}

/// A policy the evaluator can roll out.
pub enum EvalPolicy<'a> {
    Baseline(BaselineKind),
    Actor {
        params: &'a MlpParams,
        deterministic: bool,
    },
}

/// One evaluated episode: length-normalized objective sums plus the raw
/// per-step mean rewards.
#[derive(Debug, Clone)]
pub struct EvalEpisode {
    pub index: usize,
    pub length: usize,
    pub normalized: [f64; N_OBJECTIVES],
    pub status: EpisodeStatus,
    pub step_means: Vec<[f64; N_OBJECTIVES]>,
}

/// Runs `n_episodes` episodes of `policy` on `env`. Stochastic actor rollouts
/// draw from a ChaCha stream seeded with `seed + episode`; baselines and
/// deterministic actors ignore it.
pub fn evaluate(
    env: &mut Environment,
    policy: &EvalPolicy,
    n_episodes: usize,
    seed: u64,
) -> Vec<EvalEpisode> {
    evaluate_with_hook(env, policy, n_episodes, seed, &mut |_, _| {})
}

/// [`evaluate`] with a per-step observer (cumulative step count across the
/// whole evaluation), used for snapshot export.
pub fn evaluate_with_hook(
    env: &mut Environment,
    policy: &EvalPolicy,
    n_episodes: usize,
    seed: u64,
    on_step: &mut dyn FnMut(&Environment, u64),
) -> Vec<EvalEpisode> {
    let mut global_step = 0u64;
    let mut episodes = Vec::with_capacity(n_episodes);
    for index in 0..n_episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
        let mut obs = env.reset();
        let width = env.grid().width;
        let mut sums = [0.0; N_OBJECTIVES];
        let mut step_means = Vec::new();
        loop {
            let actions: Vec<Vec2> = match policy {
                EvalPolicy::Baseline(kind) => env
                    .agents()
                    .iter()
                    .map(|a| baseline_action(*kind, a.pos.y, width))
                    .collect(),
                EvalPolicy::Actor {
                    params,
                    deterministic,
                } => obs
                    .iter()
                    .map(|o| {
                        let head = actor_forward(params, o);
                        let raw = if *deterministic {
                            vec2(head.mean[0], head.mean[1])
                        } else {
                            sample_action(&head, &mut rng).0
                        };
                        raw.clamp_components(-1.0, 1.0)
                    })
                    .collect(),
            };
            let outcome = env.step(&actions);
            global_step += 1;
            on_step(env, global_step);
            let mean = outcome.rewards.mean_columns();
            for (s, m) in sums.iter_mut().zip(mean) {
                *s += m;
            }
            step_means.push(mean);
            obs = outcome.observations;
            if outcome.status.is_terminal() {
                let length = env.step_count();
                episodes.push(EvalEpisode {
                    index,
                    length,
                    normalized: sums.map(|s| s / length.max(1) as f64),
                    status: outcome.status,
                    step_means,
                });
                break;
            }
        }
    }
    episodes
}
