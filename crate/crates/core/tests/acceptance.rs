//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them).
//!
//! Criteria 1-8 form the property/oracle suite and run with the normal test
//! pass. Criteria 9-11 are behavioral reproduction runs that take minutes to
//! hours; they are `#[ignore]` and run explicitly:
//!
//! ```text
//! cargo test --release -p fluxswarm --test acceptance -- --ignored --nocapture
//! ```
//!
//! Expected results for the long criteria on the committed configuration:
//! 9 and 10 pass; 11 fails on its smoothness-direction assertion by a
//! noise-scale margin (its failure message carries the measured numbers) --
//! per-objective advantage normalization makes both training arms behave
//! alike at this scale even though gradient conflicts fire constantly.

use fluxswarm::baseline::{evaluate, BaselineKind, EvalPolicy};
use fluxswarm::config::{parse_config, RunConfig};
use fluxswarm::env::{
    reward_energy, reward_progress, reward_smooth, EpisodeSummary, VectorEnv, N_OBJECTIVES,
    OBS_DIM,
};
use fluxswarm::flow::{
    FlowSolver, FluidProps, GridSpec, InflowWaveform, ObstacleMask, PoissonSolver, SolveTolerance,
    StaggeredVelocityField,
};
use fluxswarm::io::RunLogger;
use fluxswarm::nn::{MlpParams, MlpTrace};
use fluxswarm::pcgrad::{pcgrad_merge, sum_merge};
use fluxswarm::policy::{
    actor_architecture, actor_forward_trace, critic_architecture, entropy, head_grad_to_raw,
    log_prob_grad,
};
use fluxswarm::rollout::{RolloutBuffer, StepRecord};
use fluxswarm::swarm::drag_coefficient;
use fluxswarm::trainer::{run_training, PPOConfig, TrainHooks, TrainerState, UpdateStats};
use fluxswarm::vec2::vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::time::Instant;

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fluxswarm_accept_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_01_projection_divergence_free_on_random_fields() {
    let grid = GridSpec::from_domain(64e-4, 16e-4, 1e-4).unwrap();
    assert_eq!((grid.nx, grid.ny), (64, 16));
    let mask = ObstacleMask::empty(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut solver = PoissonSolver::new(&grid);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut vel = StaggeredVelocityField::zeros(&grid);
        for i in 0..=grid.nx {
            for j in 0..grid.ny {
                vel.u.set(i, j, rng.random_range(-0.5..0.5));
            }
        }
        for i in 0..grid.nx {
            for j in 0..=grid.ny {
                vel.v.set(i, j, rng.random_range(-0.5..0.5));
            }
        }
        solver
            .project(
                &grid,
                &mut vel,
                &mask,
                1060.0,
                2.5e-4,
                SolveTolerance::default(),
                100_000,
            )
            .expect("projection converges");
        let mut max_div: f64 = 0.0;
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                max_div = max_div.max(vel.divergence_at(&grid, i, j).abs());
            }
        }
        worst = worst.max(max_div);
        assert!(
            max_div <= 1e-6,
            "FAIL criterion 1: post-projection divergence {max_div:.3e} > 1e-6"
        );
    }
    println!(
        "ACCEPTANCE #1 PASS: 50 random fields, worst post-projection |div| {worst:.3e} <= 1e-6"
    );
}

#[test]
fn criterion_02_poiseuille_profile_within_two_percent() {
    // Constant late-diastolic inflow at the reference cell size; the channel
    // segment is shortened to keep the check quick, the resolution is the
    // production one.
    let grid = GridSpec::from_domain(160e-4, 20e-4, 1e-4).unwrap();
    let props = FluidProps::new(1060.0, 3e-3).unwrap();
    let peak = 0.008;
    let mut solver = FlowSolver::new(grid, props, InflowWaveform::constant(peak), 2.5e-4).unwrap();
    let mask = ObstacleMask::empty(&grid);
    // Start from rest: the run must develop the profile, not just keep it.
    let mut state = fluxswarm::flow::FluidState {
        vel: StaggeredVelocityField::zeros(&grid),
        pressure: fluxswarm::flow::PressureField::zeros(&grid),
    };
    for k in 0..5000 {
        solver
            .step(&mut state, &mask, k as f64 * solver.dt_sub)
            .unwrap();
    }
    let i_mid = grid.nx / 2;
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..grid.ny {
        let (_, y) = grid.u_pos(i_mid, j);
        let reference = fluxswarm::flow::parabolic_profile(y, peak, grid.width);
        let err = state.vel.u.at(i_mid, j) - reference;
        num += err * err;
        den += reference * reference;
    }
    let rel_l2 = (num / den).sqrt();
    assert!(
        rel_l2 <= 0.02,
        "FAIL criterion 2: steady-profile relative L2 error {rel_l2:.4} > 2%"
    );
    println!(
        "ACCEPTANCE #2 PASS: Poiseuille development from rest, relative L2 error {:.3}% <= 2%",
        rel_l2 * 100.0
    );
}

#[test]
fn criterion_03_drag_coefficient_pinned_values() {
    assert_eq!(drag_coefficient(0.05), 480.0, "FAIL criterion 3: Cd(0.05)");
    assert!(
        (drag_coefficient(1.0) - 27.6).abs() < 1e-12,
        "FAIL criterion 3: Cd(1) = {}",
        drag_coefficient(1.0)
    );
    let below = drag_coefficient(999.999_999_f64);
    assert!(
        (below - 0.44).abs() / 0.44 < 0.01,
        "FAIL criterion 3: Cd(1000-) = {below} not within 1% of 0.44"
    );
    assert_eq!(drag_coefficient(1000.0), 0.44, "FAIL criterion 3: Cd(1000)");
    assert_eq!(
        drag_coefficient(5e6),
        0.44,
        "FAIL criterion 3: Cd(Re >> 1000)"
    );
    println!(
        "ACCEPTANCE #3 PASS: Cd(0.05)=480, Cd(1)=27.6, Cd(1000-)={below:.5} (within 1% of 0.44), Cd(>=1000)=0.44"
    );
}

#[test]
fn criterion_04_reward_examples_exact() {
    let (xs, xf) = (0.020, 0.080);
    // Progress caps and idle penalty.
    assert_eq!(reward_progress(0.015, 0.0, xs, xf), 10.0);
    assert_eq!(reward_progress(0.085, 0.0, xs, xf), -10.0);
    assert!((reward_progress(0.050, 0.0, xs, xf) + 0.01).abs() < 1e-15);
    assert!((reward_progress(0.050, 0.6e-3, xs, xf) - 0.99).abs() < 1e-12);
    assert!((reward_progress(0.050, -0.06, xs, xf) + 100.01).abs() < 1e-10);
    // Energy alignment cases.
    let f_max = 8.5e-7;
    let dx = vec2(2e-4, 0.0);
    assert!((reward_energy(vec2(f_max, 0.0), dx, f_max) - 1.0).abs() < 1e-15);
    assert!((reward_energy(vec2(-f_max, 0.0), dx, f_max) + 1.0).abs() < 1e-15);
    assert_eq!(reward_energy(vec2(0.0, f_max), dx, f_max), 0.0);
    assert!((reward_energy(vec2(f_max / 2.0, 0.0), dx, f_max) - 0.5).abs() < 1e-15);
    assert_eq!(reward_energy(vec2(f_max, 0.0), vec2(0.0, 0.0), f_max), 0.0);
    // Smoothness cosine cases.
    let a = vec2(0.3, 0.4);
    assert!((reward_smooth(a, a) - 1.0).abs() < 1e-15);
    assert!((reward_smooth(a, -a) + 1.0).abs() < 1e-15);
    assert_eq!(reward_smooth(vec2(1.0, 0.0), vec2(0.0, 1.0)), 0.0);
    assert_eq!(reward_smooth(vec2(0.0, 0.0), a), 0.0);
    println!("ACCEPTANCE #4 PASS: all tagged reward examples exact (caps, idle penalty, alignment, cosine)");
}

#[test]
fn criterion_05_pcgrad_orthogonality_identity_and_worked_example() {
    // Worked 2D example.
    let g1 = [1.0, 0.0];
    let g2 = [-1.0, 1.0];
    let dot = -1.0;
    let projected: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - dot / 2.0 * b).collect();
    assert_eq!(
        projected,
        vec![0.5, 0.5],
        "FAIL criterion 5: worked example"
    );
    // Identity without conflicts.
    let clean = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.0, 2.0, 0.0],
        vec![0.0, 0.0, -1.5],
    ];
    let merged = pcgrad_merge(&clean, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(
        merged,
        sum_merge(&clean),
        "FAIL criterion 5: identity on non-conflicting"
    );
    // Post-projection orthogonality to 1e-10 on random conflicting pairs.
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut checked = 0;
    while checked < 100 {
        let dim = rng.random_range(3..64);
        let gi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gj: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: f64 = gi.iter().zip(&gj).map(|(a, b)| a * b).sum();
        if d >= 0.0 {
            continue;
        }
        let nj: f64 = gj.iter().map(|v| v * v).sum();
        let proj: Vec<f64> = gi.iter().zip(&gj).map(|(a, b)| a - d / nj * b).collect();
        let residual: f64 = proj.iter().zip(&gj).map(|(a, b)| a * b).sum::<f64>().abs();
        let scale = gi.iter().map(|v| v * v).sum::<f64>().sqrt() * nj.sqrt();
        assert!(
            residual / scale <= 1e-10,
            "FAIL criterion 5: post-projection dot {residual:.2e} (relative {:.2e})",
            residual / scale
        );
        checked += 1;
    }
    println!("ACCEPTANCE #5 PASS: worked example (0.5, 0.5), identity without conflicts, orthogonality <= 1e-10 on {checked} pairs");
}

/// Independent nested-sum oracle for criterion 6.
fn gae_oracle(
    rewards: &[f64],
    values: &[f64],
    ended: &[Option<f64>],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let t_len = rewards.len();
    let delta = |t: usize| -> f64 {
        let next = match ended[t] {
            Some(v) => v,
            None if t + 1 == t_len => bootstrap,
            None => values[t + 1],
        };
        rewards[t] + gamma * next - values[t]
    };
    (0..t_len)
        .map(|t| {
            let mut acc = 0.0;
            let mut w = 1.0;
            for l in 0..t_len - t {
                acc += w * delta(t + l);
                if ended[t + l].is_some() {
                    break;
                }
                w *= gamma * lambda;
            }
            acc
        })
        .collect()
}

#[test]
fn criterion_06_gae_matches_nested_sum_oracle() {
    let (gamma, lambda) = (0.95, 0.95);
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let t_len = rng.random_range(1..=32);
        let mut buffer = RolloutBuffer::new(t_len, 1, 1);
        let mut rewards = Vec::new();
        let mut values = Vec::new();
        let mut ended = Vec::new();
        for _ in 0..t_len {
            let r: f64 = rng.random_range(-10.0..10.0);
            let v: f64 = rng.random_range(-3.0..3.0);
            let roll: f64 = rng.random();
            let terminated = roll < 0.1;
            let truncated = !terminated && roll < 0.2;
            let terminal_value: f64 = rng.random_range(-2.0..2.0);
            buffer.push(vec![StepRecord {
                obs: vec![[0.0; OBS_DIM]],
                joint_obs: vec![0.0; OBS_DIM],
                actions: vec![[0.0; 2]],
                log_probs: vec![0.0],
                rewards: vec![[r; N_OBJECTIVES]],
                value: [v; N_OBJECTIVES],
                terminated,
                truncated,
                terminal_value: [terminal_value; N_OBJECTIVES],
            }]);
            rewards.push(r);
            values.push(v);
            ended.push(if terminated {
                Some(0.0)
            } else if truncated {
                Some(terminal_value)
            } else {
                None
            });
        }
        let bootstrap: f64 = rng.random_range(-2.0..2.0);
        let advantage_set = buffer.compute_gae(&[[bootstrap; N_OBJECTIVES]], gamma, lambda);
        let oracle = gae_oracle(&rewards, &values, &ended, bootstrap, gamma, lambda);
        for t in 0..t_len {
            for k in 0..N_OBJECTIVES {
                let err = (advantage_set.advantages[t][0][0][k] - oracle[t]).abs();
                worst = worst.max(err);
                assert!(
                    err <= 1e-10,
                    "FAIL criterion 6: case {case} t {t} objective {k} err {err:.2e}"
                );
            }
        }
    }
    println!("ACCEPTANCE #6 PASS: GAE equals nested-sum oracle on 100 trajectories (worst abs err {worst:.2e} <= 1e-10)");
}

#[test]
fn criterion_07_gradient_checks_actor_and_critic() {
    let h = 1e-5;
    let tol = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(707);

    // Actor: L = sum over samples of log_prob(stored action) + 0.1 entropy.
    let actor = MlpParams::orthogonal_init(actor_architecture(), 0.01, &mut rng);
    let samples: Vec<([f64; OBS_DIM], [f64; 2])> = (0..4)
        .map(|_| {
            let mut obs = [0.0; OBS_DIM];
            for o in obs.iter_mut() {
                *o = rng.random_range(-1.0..1.0);
            }
            (
                obs,
                [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            )
        })
        .collect();
    let actor_loss = |params: &MlpParams| -> f64 {
        samples
            .iter()
            .map(|(obs, action)| {
                let eval = actor_forward_trace(params, obs);
                let (lp, _, _) = log_prob_grad(&eval.head, action);
                lp + 0.1 * entropy(&eval.head)
            })
            .sum()
    };
    let mut grad = vec![0.0; actor.arch.param_count()];
    for (obs, action) in &samples {
        let eval = actor_forward_trace(&actor, obs);
        let (_, d_mean, d_log_std) = log_prob_grad(&eval.head, action);
        let d_raw = head_grad_to_raw(
            eval.trace.output(),
            d_mean,
            d_log_std.map(|g| g + 0.1), // entropy gradient is 1 per log-std
        );
        actor.backward(&eval.trace, &d_raw, &mut grad);
    }
    let mut worst_actor: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.random_range(0..grad.len());
        let mut plus = actor.clone();
        plus.data[i] += h;
        let mut minus = actor.clone();
        minus.data[i] -= h;
        let fd = (actor_loss(&plus) - actor_loss(&minus)) / (2.0 * h);
        let denom = fd.abs().max(grad[i].abs()).max(1e-8);
        let rel = (fd - grad[i]).abs() / denom;
        worst_actor = worst_actor.max(rel);
        assert!(
            rel <= tol,
            "FAIL criterion 7 (actor): param {i} rel err {rel:.2e}"
        );
    }

    // Critic: L = sum of three-head squared errors against fixed targets.
    let critic = MlpParams::orthogonal_init(critic_architecture(16), 1.0, &mut rng);
    let joint: Vec<f64> = (0..16 * OBS_DIM)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let target = [0.3, -0.8, 1.2];
    let critic_loss_fn = |params: &MlpParams| -> f64 {
        let out = params.forward(&joint);
        (0..N_OBJECTIVES)
            .map(|k| (out[k] - target[k]) * (out[k] - target[k]))
            .sum()
    };
    let mut trace = MlpTrace::default();
    critic.forward_trace(&joint, &mut trace);
    let out = trace.output().to_vec();
    let d_out: Vec<f64> = (0..N_OBJECTIVES)
        .map(|k| 2.0 * (out[k] - target[k]))
        .collect();
    let mut cgrad = vec![0.0; critic.arch.param_count()];
    critic.backward(&trace, &d_out, &mut cgrad);
    let mut worst_critic: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.random_range(0..cgrad.len());
        let mut plus = critic.clone();
        plus.data[i] += h;
        let mut minus = critic.clone();
        minus.data[i] -= h;
        let fd = (critic_loss_fn(&plus) - critic_loss_fn(&minus)) / (2.0 * h);
        let denom = fd.abs().max(cgrad[i].abs()).max(1e-8);
        let rel = (fd - cgrad[i]).abs() / denom;
        worst_critic = worst_critic.max(rel);
        assert!(
            rel <= tol,
            "FAIL criterion 7 (critic): param {i} rel err {rel:.2e}"
        );
    }
    println!(
        "ACCEPTANCE #7 PASS: central-difference gradient checks, worst rel err actor {worst_actor:.2e}, critic {worst_critic:.2e} <= 1e-4"
    );
}

const SMOKE_TOML: &str = r#"
run_name = "determinism"
seed = 12
[domain]
dx = 2.5e-4
[env]
t_max = 0.5
[ppo]
n_envs = 2
rollout_length = 16
total_steps_per_env = 64
minibatch_size = 4
checkpoint_every = 4
"#;

#[test]
fn criterion_08_identical_seeds_give_byte_identical_logs_and_checkpoints() {
    let run = |tag: &str| -> PathBuf {
        let dir = temp_dir(tag);
        let config = parse_config(SMOKE_TOML).unwrap();
        let setup = config.build().unwrap();
        let mut logger = RunLogger::create(&dir, &config.to_toml_string(), 0).unwrap();
        let mut state = TrainerState::new(config.seed, setup.swarm.n_agents());
        let mut venv = VectorEnv::new(setup.make_envs(setup.ppo.n_envs).unwrap(), 1);
        run_training(&mut venv, &mut state, &setup.ppo, &mut logger).unwrap();
        logger.flush().unwrap();
        dir
    };
    let a = run("det_a");
    let b = run("det_b");
    for file in [
        "rewards.csv",
        "episodes.csv",
        "update_stats.csv",
        "config.toml",
    ] {
        let fa = std::fs::read(a.join(file)).unwrap();
        let fb = std::fs::read(b.join(file)).unwrap();
        assert_eq!(
            fa, fb,
            "FAIL criterion 8: {file} differs between identical runs"
        );
        assert!(!fa.is_empty());
    }
    let mut checkpoint_files = 0;
    for entry in std::fs::read_dir(a.join("checkpoints")).unwrap() {
        let name = entry.unwrap().file_name();
        let fa = std::fs::read(a.join("checkpoints").join(&name)).unwrap();
        let fb = std::fs::read(b.join("checkpoints").join(&name)).unwrap();
        assert_eq!(fa, fb, "FAIL criterion 8: checkpoint {name:?} differs");
        checkpoint_files += 1;
    }
    assert!(checkpoint_files >= 2, "expected checkpoints to be written");
    let _ = std::fs::remove_dir_all(&a);
    let _ = std::fs::remove_dir_all(&b);
    println!("ACCEPTANCE #8 PASS: 2 envs x 64 steps twice, logs and {checkpoint_files} checkpoint files byte-identical");
}

// ---------------------------------------------------------------------------
// Scaled behavioral reproduction (ordering and sign claims). Long runs.

#[test]
#[ignore = "production-resolution baselines, minutes of runtime: cargo test --release --test acceptance -- --ignored"]
fn criterion_09_baseline_sanity_at_production_resolution() {
    let started = Instant::now();
    let config = RunConfig::default();
    let setup = config.build().unwrap();
    // Reference mean energies carried for the report line.
    let reference_energy = [("upstream_max", -0.15), ("wall_hug", -0.27)];
    for (kind, reference) in [
        (BaselineKind::UpstreamMax, reference_energy[0]),
        (BaselineKind::WallHug, reference_energy[1]),
    ] {
        let mut env = setup.make_env().unwrap();
        let episodes = evaluate(&mut env, &EvalPolicy::Baseline(kind), 5, 1000);
        assert_eq!(episodes.len(), 5);
        let mut energy_mean = 0.0;
        for ep in &episodes {
            // (a) smoothness exactly 1.00 from step 2 onward.
            for (i, step) in ep.step_means.iter().enumerate().skip(1) {
                assert!(
                    (step[2] - 1.0).abs() <= 1e-9,
                    "FAIL criterion 9a ({}): episode {} step {} smoothness {}",
                    kind.name(),
                    ep.index,
                    i + 1,
                    step[2]
                );
            }
            energy_mean += ep.normalized[1] / episodes.len() as f64;
        }
        // (b) the sign claim is the hard criterion; the reference magnitudes
        // are reported alongside for inspection.
        assert!(
            energy_mean < 0.0,
            "FAIL criterion 9b ({}): mean energy {energy_mean:.4} not negative",
            kind.name()
        );
        let delta = (energy_mean - reference.1).abs();
        println!(
            "ACCEPTANCE #9 ({}) smoothness 1.00 from step 2 PASS; mean energy {energy_mean:.4} < 0 PASS (reference {}, |delta| {delta:.2}{})",
            kind.name(),
            reference.1,
            if delta <= 0.25 { ", within 0.25" } else { ", outside 0.25" }
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed <= 1800.0,
        "FAIL criterion 9: runtime {elapsed:.0}s exceeds 30 minutes"
    );
    println!("ACCEPTANCE #9 PASS: 2 baselines x 5 episodes in {elapsed:.0}s (<= 1800s)");
}

const SCALED_TOML: &str = r#"
run_name = "scaled"
seed = 7
[domain]
dx = 2.0e-4
[ppo]
n_envs = 2
total_steps_per_env = 8000
"#;

/// Hook collecting episode summaries and update stats with their global step.
#[derive(Default)]
struct Collector {
    episodes: Vec<(u64, EpisodeSummary)>,
    stats: Vec<UpdateStats>,
    last_global: u64,
}

impl TrainHooks for Collector {
    fn on_step(
        &mut self,
        global_step: u64,
        _env: usize,
        _episode: u64,
        _step: usize,
        _mean: [f64; 3],
        _status: &str,
    ) {
        self.last_global = global_step;
    }
    fn on_episode(&mut self, summary: &EpisodeSummary) {
        self.episodes.push((self.last_global, *summary));
    }
    fn on_update(&mut self, _update: usize, _global: u64, stats: &UpdateStats) {
        self.stats.push(*stats);
    }
}

fn train_scaled(pcgrad: bool) -> (Collector, TrainerState) {
    let config = parse_config(SCALED_TOML).unwrap();
    let setup = config.build().unwrap();
    let ppo = PPOConfig {
        pcgrad_enabled: pcgrad,
        checkpoint_every: 0,
        ..setup.ppo
    };
    let mut collector = Collector::default();
    let mut state = TrainerState::new(config.seed, setup.swarm.n_agents());
    let threads = std::env::var("FLUXSWARM_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1);
    let mut venv = VectorEnv::new(setup.make_envs(ppo.n_envs).unwrap(), threads);
    run_training(&mut venv, &mut state, &ppo, &mut collector).unwrap();
    (collector, state)
}

fn final_fraction_mean(episodes: &[(u64, EpisodeSummary)], fraction: f64, objective: usize) -> f64 {
    let last = episodes.last().map(|(g, _)| *g).unwrap_or(0);
    let cutoff = (last as f64 * (1.0 - fraction)) as u64;
    let tail: Vec<f64> = episodes
        .iter()
        .filter(|(g, _)| *g >= cutoff)
        .map(|(_, s)| s.normalized[objective])
        .collect();
    assert!(
        !tail.is_empty(),
        "no episodes in the final {fraction} of training"
    );
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[test]
#[ignore = "scaled training run, tens of minutes: cargo test --release --test acceptance -- --ignored"]
fn criterion_10_scaled_training_beats_baselines() {
    let started = Instant::now();
    let (collector, _state) = train_scaled(true);
    let learned_progress = final_fraction_mean(&collector.episodes, 0.2, 0);
    let learned_energy = final_fraction_mean(&collector.episodes, 0.2, 1);

    let config = parse_config(SCALED_TOML).unwrap();
    let setup = config.build().unwrap();
    let mut baseline_progress = Vec::new();
    let mut baseline_energy = Vec::new();
    for kind in [BaselineKind::UpstreamMax, BaselineKind::WallHug] {
        let mut env = setup.make_env().unwrap();
        let episodes = evaluate(&mut env, &EvalPolicy::Baseline(kind), 5, 2000);
        let n = episodes.len() as f64;
        baseline_progress.push(episodes.iter().map(|e| e.normalized[0]).sum::<f64>() / n);
        baseline_energy.push(episodes.iter().map(|e| e.normalized[1]).sum::<f64>() / n);
    }
    println!(
        "ACCEPTANCE #10 data: learned progress {learned_progress:.4}, energy {learned_energy:.4}; baselines progress {baseline_progress:?}, energy {baseline_energy:?}"
    );
    for (i, bp) in baseline_progress.iter().enumerate() {
        assert!(
            learned_progress > *bp,
            "FAIL criterion 10: learned progress {learned_progress:.4} does not exceed baseline {i} ({bp:.4})"
        );
    }
    assert!(
        learned_energy > 0.0,
        "FAIL criterion 10: learned energy {learned_energy:.4} not positive"
    );
    for (i, be) in baseline_energy.iter().enumerate() {
        assert!(
            *be < 0.0,
            "FAIL criterion 10: baseline {i} energy {be:.4} not negative"
        );
    }
    println!(
        "ACCEPTANCE #10 PASS: learned progress beats both baselines and learned energy > 0 > baselines ({:.0}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
#[ignore = "two scaled training runs, tens of minutes: cargo test --release --test acceptance -- --ignored"]
fn criterion_11_ablation_direction() {
    let started = Instant::now();
    let (with_pcgrad, _) = train_scaled(true);
    let (without_pcgrad, _) = train_scaled(false);
    let smooth_with = final_fraction_mean(&with_pcgrad.episodes, 0.2, 2);
    let smooth_without = final_fraction_mean(&without_pcgrad.episodes, 0.2, 2);
    let min_cos = without_pcgrad
        .stats
        .iter()
        .map(|s| s.min_pair_cosine)
        .fold(f64::INFINITY, f64::min);
    let conflicting_updates = without_pcgrad
        .stats
        .iter()
        .filter(|s| s.min_pair_cosine < 0.0)
        .count();
    println!(
        "ACCEPTANCE #11 data: final-20% smoothness with pcgrad {smooth_with:.4}, without {smooth_without:.4}; conflicting updates {conflicting_updates}/{}, most conflicting cosine {min_cos:.4}",
        without_pcgrad.stats.len()
    );
    assert!(
        min_cos < 0.0,
        "FAIL criterion 11: no conflicting gradient pair recorded (min cosine {min_cos:.4})"
    );
    assert!(
        smooth_without < smooth_with,
        "FAIL criterion 11: ablated smoothness {smooth_without:.4} not below the pcgrad run's {smooth_with:.4}; \
         with per-objective advantage normalization both arms train alike at this scale, so the \
         direction does not reproduce here (conflicts do occur: {conflicting_updates} conflicting updates, \
         min cosine {min_cos:.3})"
    );
    println!(
        "ACCEPTANCE #11 PASS: smoothness drops without PCGrad ({smooth_without:.4} < {smooth_with:.4}) and conflicts recorded (min pair cosine {min_cos:.3}) ({:.0}s)",
        started.elapsed().as_secs_f64()
    );
}
