//! Run configuration: strict TOML with physical defaults, validated into the
//! simulator and trainer parameter sets.

use crate::env::{EnvConfig, Environment};
use crate::flow::{FluidError, FluidProps, GridSpec, InflowWaveform};
use crate::swarm::SwarmConfig;
use crate::trainer::PPOConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
}

impl From<FluidError> for ConfigError {
    fn from(err: FluidError) -> Self {
        ConfigError::Validation(err.to_string())
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DomainToml {
    /// Channel length (m).
    pub lx: f64,
    /// Channel width (m).
    pub width: f64,
    /// Cell size (m), identical in both directions.
    pub dx: f64,
}

impl Default for DomainToml {
    fn default() -> Self {
        Self {
            lx: 0.100,
            width: 0.002,
            dx: 1.0e-4,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FluidToml {
    pub rho: f64,
    pub mu: f64,
}

impl Default for FluidToml {
    fn default() -> Self {
        Self {
            rho: 1060.0,
            mu: 3.0e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformToml {
    /// Ordered (duration s, plateau m/s) pairs.
    pub phases: Vec<[f64; 2]>,
    pub ramp_time: f64,
}

impl Default for WaveformToml {
    fn default() -> Self {
        Self {
            phases: vec![[0.15, 0.400], [0.10, -0.015], [0.75, 0.008]],
            ramp_time: 0.010,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmToml {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub radius: f64,
    pub rho_solid: f64,
    pub f_max: f64,
}

impl Default for SwarmToml {
    fn default() -> Self {
        let d = SwarmConfig::default();
        Self {
            rows: d.rows,
            cols: d.cols,
            spacing: d.spacing,
            radius: d.radius,
            rho_solid: d.rho_solid,
            f_max: d.f_max,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnvToml {
    pub x_success: f64,
    pub x_failure: f64,
    pub dt: f64,
    pub substeps: usize,
    pub t_max: f64,
    pub metric_margin: f64,
}

impl Default for EnvToml {
    fn default() -> Self {
        let d = EnvConfig::default();
        Self {
            x_success: d.x_success,
            x_failure: d.x_failure,
            dt: d.dt,
            substeps: d.substeps,
            t_max: d.t_max,
            metric_margin: d.metric_margin,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PpoToml {
    pub clip: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rollout_length: usize,
    pub minibatch_size: usize,
    pub n_envs: usize,
    pub total_steps_per_env: usize,
    pub pcgrad: bool,
    pub checkpoint_every: usize,
}

impl Default for PpoToml {
    fn default() -> Self {
        let d = PPOConfig::default();
        Self {
            clip: d.clip,
            entropy_coef: d.entropy_coef,
            gamma: d.gamma,
            gae_lambda: d.gae_lambda,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            rollout_length: d.rollout_length,
            minibatch_size: d.minibatch_size,
            n_envs: d.n_envs,
            total_steps_per_env: d.total_steps_per_env,
            pcgrad: d.pcgrad_enabled,
            checkpoint_every: d.checkpoint_every,
        }
    }
}

/// The full run configuration; an empty TOML file yields the physical and
/// training defaults used throughout.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_name: String,
    pub output_dir: String,
    pub seed: u64,
    /// Snapshot cadence in environment steps; 0 disables snapshots.
    pub snapshot_every: usize,
    pub domain: DomainToml,
    pub fluid: FluidToml,
    pub waveform: WaveformToml,
    pub swarm: SwarmToml,
    pub env: EnvToml,
    pub ppo: PpoToml,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_name: "run".into(),
            output_dir: "runs".into(),
            seed: 0,
            snapshot_every: 0,
            domain: DomainToml::default(),
            fluid: FluidToml::default(),
            waveform: WaveformToml::default(),
            swarm: SwarmToml::default(),
            env: EnvToml::default(),
            ppo: PpoToml::default(),
        }
    }
}

/// Validated simulation and training parameters built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: GridSpec,
    pub props: FluidProps,
    pub waveform: InflowWaveform,
    pub swarm: SwarmConfig,
    pub env: EnvConfig,
    pub ppo: PPOConfig,
}

impl RunConfig {
    /// Validates every invariant (grid tiling, stability, lattice fit,
    /// episode geometry) and assembles the typed parameter sets.
    pub fn build(&self) -> Result<Setup, ConfigError> {
        let grid = GridSpec::from_domain(self.domain.lx, self.domain.width, self.domain.dx)?;
        let props = FluidProps::new(self.fluid.rho, self.fluid.mu)?;
        let waveform = InflowWaveform::new(
            self.waveform.phases.iter().map(|p| (p[0], p[1])).collect(),
            self.waveform.ramp_time,
        )?;
        let swarm = SwarmConfig {
            rows: self.swarm.rows,
            cols: self.swarm.cols,
            spacing: self.swarm.spacing,
            radius: self.swarm.radius,
            rho_solid: self.swarm.rho_solid,
            f_max: self.swarm.f_max,
        };
        if swarm.rows == 0 || swarm.cols == 0 {
            return Err(ConfigError::Validation(
                "swarm lattice must be non-empty".into(),
            ));
        }
        if !(swarm.radius > 0.0 && swarm.rho_solid > 0.0 && swarm.f_max > 0.0) {
            return Err(ConfigError::Validation(
                "swarm radius, density and force cap must be positive".into(),
            ));
        }
        // Lattice fit: the grid of agents must sit inside the walls with at
        // least one radius of clearance.
        let half_x = (swarm.cols as f64 - 1.0) / 2.0 * swarm.spacing + swarm.radius;
        let half_y = (swarm.rows as f64 - 1.0) / 2.0 * swarm.spacing + swarm.radius;
        if half_x >= grid.lx / 2.0 || half_y >= grid.width / 2.0 {
            return Err(ConfigError::Validation(format!(
                "swarm lattice ({} x {} at {} m spacing) does not fit the channel",
                swarm.rows, swarm.cols, swarm.spacing
            )));
        }
        let env = EnvConfig {
            x_success: self.env.x_success,
            x_failure: self.env.x_failure,
            dt: self.env.dt,
            substeps: self.env.substeps,
            t_max: self.env.t_max,
            seed: self.seed,
            metric_margin: self.env.metric_margin,
        };
        env.validate().map_err(ConfigError::Validation)?;
        if env.x_failure >= grid.lx || env.x_success <= 0.0 {
            return Err(ConfigError::Validation(
                "episode boundaries must lie inside the channel".into(),
            ));
        }
        if 2.0 * self.env.metric_margin >= grid.lx {
            return Err(ConfigError::Validation(
                "metric margins exceed the channel".into(),
            ));
        }
        // Stability checks happen inside the solver constructor; run them
        // now so a bad config fails at load time.
        crate::flow::FlowSolver::new(grid, props, waveform.clone(), env.dt_sub())?;
        let ppo = PPOConfig {
            clip: self.ppo.clip,
            entropy_coef: self.ppo.entropy_coef,
            gamma: self.ppo.gamma,
            gae_lambda: self.ppo.gae_lambda,
            learning_rate: self.ppo.learning_rate,
            epochs: self.ppo.epochs,
            rollout_length: self.ppo.rollout_length,
            minibatch_size: self.ppo.minibatch_size,
            n_envs: self.ppo.n_envs,
            total_steps_per_env: self.ppo.total_steps_per_env,
            pcgrad_enabled: self.ppo.pcgrad,
            checkpoint_every: self.ppo.checkpoint_every,
        };
        ppo.validate().map_err(ConfigError::Validation)?;
        Ok(Setup {
            grid,
            props,
            waveform,
            swarm,
            env,
            ppo,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

impl Setup {
    pub fn make_env(&self) -> Result<Environment, ConfigError> {
        Ok(Environment::new(
            self.grid,
            self.props,
            self.waveform.clone(),
            self.swarm,
            self.env,
        )?)
    }

    pub fn make_envs(&self, n: usize) -> Result<Vec<Environment>, ConfigError> {
        (0..n).map(|_| self.make_env()).collect()
    }
}

/// Loads and validates a TOML run configuration. Unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.build()?;
    Ok(config)
}
