//! Command-line entry points: training, evaluation, baselines, snapshot
//! rendering and checkpoint inspection.

use clap::{Parser, Subcommand};
use fluxswarm::baseline::{evaluate_with_hook, BaselineKind, EvalEpisode, EvalPolicy};
use fluxswarm::config::{load_config, RunConfig};
use fluxswarm::env::VectorEnv;
use fluxswarm::io::{
    load_checkpoint, read_agent_circles, read_snapshot, render_ppm, write_snapshot,
    CheckpointHeader, RunLogger,
};
use fluxswarm::trainer::{run_training, TrainerState};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fluxswarm",
    about = "Coupled channel-flow micro-swarm simulator and multi-objective PPO trainer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with the configuration's PPO settings.
    Train {
        /// TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Replace the PCGrad merge with a plain gradient sum (ablation).
        #[arg(long)]
        no_pcgrad: bool,
        /// Resume from a checkpoint stem (path without extension).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Roll out a trained policy and report normalized episode rewards.
    Evaluate {
        /// Checkpoint stem (path without extension).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: usize,
        /// Act with the policy mean instead of sampling.
        #[arg(long)]
        deterministic: bool,
        /// Run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Episode summary CSV (default: evaluate_episodes.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll out a scripted baseline policy.
    Baseline {
        /// One of: upstream_max, wall_hug.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Episode summary CSV (default: baseline_<kind>_episodes.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a field snapshot (JSON sidecar path) to a P6 PPM image.
    Render {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a checkpoint's architecture and step counters.
    Inspect {
        /// Checkpoint stem (path without extension).
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Worker-thread cap from FLUXSWARM_THREADS; 1 keeps runs bit-reproducible
/// by default (results are gathered in env order either way).
fn worker_threads() -> usize {
    std::env::var("FLUXSWARM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Train {
            config,
            no_pcgrad,
            resume,
        } => cmd_train(&config, no_pcgrad, resume),
        Command::Evaluate {
            checkpoint,
            episodes,
            deterministic,
            config,
            out,
        } => cmd_evaluate(&checkpoint, episodes, deterministic, config.as_deref(), out),
        Command::Baseline {
            kind,
            episodes,
            config,
            out,
        } => cmd_baseline(&kind, episodes, config.as_deref(), out),
        Command::Render { snapshot, out } => cmd_render(&snapshot, &out),
        Command::Inspect { checkpoint } => cmd_inspect(&checkpoint),
    }
}

fn load_or_default(path: Option<&Path>) -> Result<RunConfig, Box<dyn std::error::Error>> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => {
            let config = RunConfig::default();
            config.build()?;
            Ok(config)
        }
    }
}

fn cmd_train(
    config_path: &Path,
    no_pcgrad: bool,
    resume: Option<PathBuf>,
) -> Result<(), Box<dyn std::error::Error>> {
    let config = load_config(config_path)?;
    let setup = config.build()?;
    let mut ppo = setup.ppo;
    if no_pcgrad {
        ppo.pcgrad_enabled = false;
    }
    let run_dir = Path::new(&config.output_dir).join(&config.run_name);
    let mut logger = RunLogger::create(&run_dir, &config.to_toml_string(), config.snapshot_every)?;
    let mut state = match resume {
        Some(stem) => {
            let state = load_checkpoint(&stem)?;
            println!(
                "resumed from {} at update {} ({} steps/env)",
                stem.display(),
                state.updates_done,
                state.steps_per_env
            );
            state
        }
        None => TrainerState::new(config.seed, setup.swarm.n_agents()),
    };
    let mut venv = VectorEnv::new(setup.make_envs(ppo.n_envs)?, worker_threads());
    println!(
        "training {} envs x {} steps (pcgrad {}) -> {}",
        ppo.n_envs,
        ppo.total_steps_per_env,
        if ppo.pcgrad_enabled { "on" } else { "off" },
        run_dir.display()
    );
    run_training(&mut venv, &mut state, &ppo, &mut logger)?;
    logger.flush()?;
    println!(
        "done: {} updates, {} global steps, logs in {}",
        state.updates_done,
        state.global_steps,
        run_dir.display()
    );
    Ok(())
}

fn write_episode_csv(path: &Path, episodes: &[EvalEpisode]) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(
        w,
        "env_id,episode_id,length,norm_progress,norm_energy,norm_smooth,status"
    )?;
    for ep in episodes {
        writeln!(
            w,
            "0,{},{},{},{},{},{}",
            ep.index,
            ep.length,
            ep.normalized[0],
            ep.normalized[1],
            ep.normalized[2],
            ep.status.label()
        )?;
    }
    w.flush()
}

fn report_episodes(tag: &str, episodes: &[EvalEpisode]) {
    for ep in episodes {
        println!(
            "{tag} episode {}: {} steps, status {}, normalized progress {:.4} energy {:.4} smoothness {:.4}",
            ep.index,
            ep.length,
            ep.status.label(),
            ep.normalized[0],
            ep.normalized[1],
            ep.normalized[2]
        );
    }
    let n = episodes.len().max(1) as f64;
    let mut mean = [0.0; 3];
    for ep in episodes {
        for (m, v) in mean.iter_mut().zip(ep.normalized) {
            *m += v / n;
        }
    }
    println!(
        "{tag} mean over {} episodes: progress {:.4} energy {:.4} smoothness {:.4}",
        episodes.len(),
        mean[0],
        mean[1],
        mean[2]
    );
}

fn snapshot_hook(
    snapshot_every: usize,
    dir: PathBuf,
) -> impl FnMut(&fluxswarm::env::Environment, u64) {
    move |env, step| {
        if snapshot_every > 0 && step % snapshot_every as u64 == 0 {
            if let Err(e) = write_snapshot(&dir, step, env) {
                eprintln!("snapshot write failed: {e}");
            }
        }
    }
}

fn cmd_evaluate(
    checkpoint: &Path,
    episodes: usize,
    deterministic: bool,
    config_path: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<(), Box<dyn std::error::Error>> {
    let config = load_or_default(config_path)?;
    let setup = config.build()?;
    let state = load_checkpoint(checkpoint)?;
    let expected_inputs = setup.swarm.n_agents() * fluxswarm::env::OBS_DIM;
    if state.critic.arch.input_dim() != expected_inputs {
        return Err(format!(
            "checkpoint was trained with {} critic inputs but the config implies {}",
            state.critic.arch.input_dim(),
            expected_inputs
        )
        .into());
    }
    let mut env = setup.make_env()?;
    let policy = EvalPolicy::Actor {
        params: &state.actor,
        deterministic,
    };
    let out = out.unwrap_or_else(|| PathBuf::from("evaluate_episodes.csv"));
    let snap_dir = out.with_extension("snapshots");
    let mut hook = snapshot_hook(config.snapshot_every, snap_dir);
    let results = evaluate_with_hook(&mut env, &policy, episodes, config.seed, &mut hook);
    report_episodes("evaluate", &results);
    write_episode_csv(&out, &results)?;
    println!("episode summaries -> {}", out.display());
    Ok(())
}

fn cmd_baseline(
    kind: &str,
    episodes: usize,
    config_path: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<(), Box<dyn std::error::Error>> {
    let kind: BaselineKind = kind.parse()?;
    let config = load_or_default(config_path)?;
    let setup = config.build()?;
    let mut env = setup.make_env()?;
    let out =
        out.unwrap_or_else(|| PathBuf::from(format!("baseline_{}_episodes.csv", kind.name())));
    let snap_dir = out.with_extension("snapshots");
    let mut hook = snapshot_hook(config.snapshot_every, snap_dir);
    let results = evaluate_with_hook(
        &mut env,
        &EvalPolicy::Baseline(kind),
        episodes,
        config.seed,
        &mut hook,
    );
    report_episodes(kind.name(), &results);
    write_episode_csv(&out, &results)?;
    println!("episode summaries -> {}", out.display());
    Ok(())
}

fn cmd_render(snapshot: &Path, out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let snap = read_snapshot(snapshot)?;
    // Draw agents when the sibling CSV block exists; radius from the default
    // swarm unless a run config sits next to the snapshot.
    let agents_csv = snapshot
        .to_str()
        .and_then(|s| s.strip_suffix(".json"))
        .map(|s| PathBuf::from(format!("{s}_agents.csv")));
    let circles = match agents_csv {
        Some(path) if path.exists() => Some(read_agent_circles(
            &path,
            fluxswarm::swarm::SwarmConfig::default().radius,
        )?),
        _ => None,
    };
    render_ppm(&snap, circles.as_deref(), out)?;
    println!(
        "rendered {} x {} PPM -> {}",
        snap.meta.nx,
        snap.meta.ny,
        out.display()
    );
    Ok(())
}

fn cmd_inspect(checkpoint: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let header_path = checkpoint.with_extension("json");
    let header: CheckpointHeader = serde_json::from_slice(&fs::read(&header_path)?)?;
    let param_count =
        |sizes: &[usize]| -> usize { sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum() };
    println!("checkpoint {}", checkpoint.display());
    println!(
        "actor architecture: {:?} ({} parameters)",
        header.actor_arch,
        param_count(&header.actor_arch)
    );
    println!(
        "critic architecture: {:?} ({} parameters)",
        header.critic_arch,
        param_count(&header.critic_arch)
    );
    println!("updates done: {}", header.updates_done);
    println!("steps per env: {}", header.steps_per_env);
    println!("global steps: {}", header.global_steps);
    println!(
        "adam steps: actor {}, critic {}",
        header.adam_t_actor, header.adam_t_critic
    );
    Ok(())
}
