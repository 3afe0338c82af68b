//! The multi-agent multi-objective control environment: observation assembly,
//! the three reward channels, episode lifecycle and the substep orchestration
//! between fluid and swarm.

use crate::flow::{
    FlowSolver, FluidError, FluidProps, FluidState, GridSpec, InflowWaveform, ObstacleMask,
};
use crate::swarm::{
    ambient_velocity, build_obstacle_mask, compute_forces, integrate_agent_with_drag,
    resolve_overlaps, AgentState, ForceBreakdown, SwarmConfig,
};
use crate::vec2::{vec2, Vec2};

pub const OBS_DIM: usize = 8;
pub const N_OBJECTIVES: usize = 3;
/// Peak systolic speed used to normalize velocity and pressure observations.
pub const U_REF: f64 = 0.4;

/// Episode geometry and timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    /// Mean swarm position at or below this x ends the episode in success (m).
    pub x_success: f64,
    /// Any agent at or beyond this x ends the episode in failure (m).
    pub x_failure: f64,
    /// Control interval (s); forces refresh at this cadence.
    pub dt: f64,
    /// Fluid substeps per control interval.
    pub substeps: usize,
    /// Episode wall-clock limit (s).
    pub t_max: f64,
    pub seed: u64,
    /// Channel length excluded from reported metrics on each side (m).
    pub metric_margin: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            x_success: 0.020,
            x_failure: 0.080,
            dt: 5e-3,
            substeps: 20,
            t_max: 10.0,
            seed: 0,
            metric_margin: 0.020,
        }
    }
}

impl EnvConfig {
    pub fn dt_sub(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    pub fn max_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.x_success < self.x_failure) {
            return Err(format!(
                "x_success ({}) must be below x_failure ({})",
                self.x_success, self.x_failure
            ));
        }
        if self.substeps == 0 || !(self.dt > 0.0) {
            return Err("dt and substeps must be positive".into());
        }
        if !(self.t_max > 0.0) {
            return Err("t_max must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationCause {
    Timeout,
    CfdDivergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeStatus {
    Running,
    Success,
    Failure,
    Truncated(TruncationCause),
}

impl EpisodeStatus {
    pub fn is_terminal(self) -> bool {
        self != EpisodeStatus::Running
    }

    /// True termination (success/failure) as opposed to truncation; decides
    /// whether value bootstrapping applies.
    pub fn is_true_termination(self) -> bool {
        matches!(self, EpisodeStatus::Success | EpisodeStatus::Failure)
    }

    pub fn label(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::Success => "success",
            EpisodeStatus::Failure => "failure",
            EpisodeStatus::Truncated(TruncationCause::Timeout) => "truncated_timeout",
            EpisodeStatus::Truncated(TruncationCause::CfdDivergence) => "truncated_cfd",
        }
    }
}

/// Normalized 8-feature local observation.
pub type Observation = [f64; OBS_DIM];

/// Per-agent rewards for one step: columns (progress, energy, smoothness).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    rows: Vec<[f64; N_OBJECTIVES]>,
}

impl RewardMatrix {
    pub fn zeros(n_agents: usize) -> Self {
        Self {
            rows: vec![[0.0; N_OBJECTIVES]; n_agents],
        }
    }

    pub fn row(&self, agent: usize) -> [f64; N_OBJECTIVES] {
        self.rows[agent]
    }

    pub fn set_row(&mut self, agent: usize, row: [f64; N_OBJECTIVES]) {
        self.rows[agent] = row;
    }

    pub fn n_agents(&self) -> usize {
        self.rows.len()
    }

    /// Column means over agents (the per-step values that get logged).
    pub fn mean_columns(&self) -> [f64; N_OBJECTIVES] {
        let mut mean = [0.0; N_OBJECTIVES];
        for row in &self.rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows.len().max(1) as f64;
        mean.map(|v| v / n)
    }
}

/// Upstream-progress reward. `dx_up` is the upstream displacement over the
/// step, `x_prev - x_now` (positive when moving toward the success boundary).
/// Inside the corridor, upstream motion earns a linear reward and downstream
/// drift a saturating tanh penalty, both with a -0.01 idle offset; outside
/// the corridor the reward caps at +-10.
pub fn reward_progress(x_now: f64, dx_up: f64, x_success: f64, x_failure: f64) -> f64 {
    if x_now < x_success {
        return 10.0;
    }
    if x_now > x_failure {
        return -10.0;
    }
    let delta = dx_up / (x_failure - x_success);
    if dx_up >= 0.0 {
        100.0 * delta - 0.01
    } else {
        100.0 * (3.0 * delta).tanh() / 3.0_f64.tanh() - 0.01
    }
}

/// Work done by the propulsion over the step displacement, as a fraction of
/// the maximum possible work. Zero for vanishing displacement; clamped to
/// [-1, 1] (a diagonal component-capped thrust can exceed the nominal norm
/// cap by sqrt(2)).
pub fn reward_energy(force: Vec2, dx: Vec2, f_max: f64) -> f64 {
    let norm = dx.norm();
    if norm < 1e-12 {
        return 0.0;
    }
    (force.dot(dx) / (f_max * norm)).clamp(-1.0, 1.0)
}

/// Cosine similarity between consecutive actions; zero when either is null.
pub fn reward_smooth(action: Vec2, prev_action: Vec2) -> f64 {
    let na = action.norm();
    let nb = prev_action.norm();
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    action.dot(prev_action) / (na * nb)
}

/// Everything `Environment::step` returns.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub rewards: RewardMatrix,
    pub status: EpisodeStatus,
}

pub struct Environment {
    solver: FlowSolver,
    swarm_config: SwarmConfig,
    config: EnvConfig,
    agents: Vec<AgentState>,
    fluid: FluidState,
    mask: ObstacleMask,
    t: f64,
    step_count: usize,
    status: EpisodeStatus,
    episode_index: u64,
    /// Force breakdown of the most recent step, for trajectory export.
    last_forces: Vec<ForceBreakdown>,
}

impl Environment {
    pub fn new(
        grid: GridSpec,
        props: FluidProps,
        waveform: InflowWaveform,
        swarm_config: SwarmConfig,
        config: EnvConfig,
    ) -> Result<Self, FluidError> {
        config
            .validate()
            .map_err(|reason| FluidError::InvalidGrid { reason })?;
        let solver = FlowSolver::new(grid, props, waveform, config.dt_sub())?;
        let mut env = Self {
            solver,
            swarm_config,
            config,
            agents: Vec::new(),
            fluid: FluidState {
                vel: crate::flow::StaggeredVelocityField::zeros(&grid),
                pressure: crate::flow::PressureField::zeros(&grid),
            },
            mask: ObstacleMask::empty(&grid),
            t: 0.0,
            step_count: 0,
            status: EpisodeStatus::Running,
            episode_index: 0,
            last_forces: Vec::new(),
        };
        env.reset();
        env.episode_index = 0;
        Ok(env)
    }

    /// Deterministic reset: swarm on its lattice in mid-channel, developed
    /// parabolic flow at the t = 0 waveform velocity.
    pub fn reset(&mut self) -> Vec<Observation> {
        let grid = self.solver.grid;
        let center = vec2(grid.lx / 2.0, grid.width / 2.0);
        self.agents = self.swarm_config.lattice(center);
        self.fluid = self.solver.initial_state();
        self.mask = build_obstacle_mask(&self.agents, &grid);
        self.t = 0.0;
        self.step_count = 0;
        self.status = EpisodeStatus::Running;
        self.episode_index += 1;
        self.last_forces = vec![ForceBreakdown::default(); self.agents.len()];
        self.observations()
    }

    pub fn n_agents(&self) -> usize {
        self.swarm_config.n_agents()
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn episode_index(&self) -> u64 {
        self.episode_index
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn fluid(&self) -> &FluidState {
        &self.fluid
    }

    pub fn grid(&self) -> &GridSpec {
        &self.solver.grid
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn swarm_config(&self) -> &SwarmConfig {
        &self.swarm_config
    }

    pub fn last_forces(&self) -> &[ForceBreakdown] {
        &self.last_forces
    }

    /// Largest |div u| over fluid cells of the current state.
    pub fn max_divergence(&self) -> f64 {
        self.solver
            .max_fluid_divergence(&self.fluid.vel, &self.mask)
    }

    /// Normalized local observation of one agent.
    pub fn observe(&self, agent: &AgentState) -> Observation {
        let grid = &self.solver.grid;
        let pressure_scale = self.solver.props.rho * U_REF * U_REF;
        let r = agent.radius;
        let mut obs = [0.0; OBS_DIM];
        obs[0] = agent.pos.x / grid.lx;
        obs[1] = agent.pos.y / grid.width;
        obs[2] = agent.vel.x / U_REF;
        obs[3] = agent.vel.y / U_REF;
        // Pressure at four equispaced circumference angles: 0, pi/2, pi, 3pi/2.
        let samples = [
            (agent.pos.x + r, agent.pos.y),
            (agent.pos.x, agent.pos.y + r),
            (agent.pos.x - r, agent.pos.y),
            (agent.pos.x, agent.pos.y - r),
        ];
        for (k, (x, y)) in samples.into_iter().enumerate() {
            obs[4 + k] = self.fluid.pressure.sample(grid, x, y) / pressure_scale;
        }
        obs
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.agents.iter().map(|a| self.observe(a)).collect()
    }

    /// Concatenated per-agent observations in id order (critic input).
    pub fn joint_observation(&self) -> Vec<f64> {
        let mut joint = Vec::with_capacity(self.n_agents() * OBS_DIM);
        for agent in &self.agents {
            joint.extend_from_slice(&self.observe(agent));
        }
        joint
    }

    /// Advances one control interval with per-component-normalized actions.
    ///
    /// The force breakdown is computed once from the current fields; the
    /// action-driven parts (propulsion, contact) stay frozen while the swarm
    /// and fluid co-advance through the substeps, with the stiff
    /// fluid-coupled forces refreshed each substep. A diverging pressure
    /// solve or field blowup truncates the episode rather than erroring.
    pub fn step(&mut self, actions: &[Vec2]) -> StepOutcome {
        assert_eq!(
            self.status,
            EpisodeStatus::Running,
            "step on a finished episode"
        );
        assert_eq!(actions.len(), self.n_agents());
        let grid = self.solver.grid;
        let clamped: Vec<Vec2> = actions
            .iter()
            .map(|a| a.clamp_components(-1.0, 1.0))
            .collect();
        let before: Vec<Vec2> = self.agents.iter().map(|a| a.pos).collect();

        let forces = compute_forces(
            &self.agents,
            &clamped,
            &self.fluid.pressure,
            &self.fluid.vel,
            &grid,
            &self.solver.props,
            self.swarm_config.f_max,
        );
        self.last_forces = forces.clone();

        // Propulsion and contact stay frozen across the control interval
        // (actions are constant over it); the fluid-coupled forces are
        // refreshed every substep because their relaxation times sit far
        // below dt_sub.
        let frozen: Vec<Vec2> = forces.iter().map(|f| f.internal + f.contact).collect();
        let mut cfd_failed = false;
        let dt_sub = self.config.dt_sub();
        for sub in 0..self.config.substeps {
            for (agent, frozen_force) in self.agents.iter_mut().zip(&frozen) {
                let fluid_v = ambient_velocity(&self.fluid.vel, &self.solver.grid, agent);
                let hydro = crate::swarm::hydrodynamic_force(
                    &self.fluid.pressure,
                    &self.solver.grid,
                    agent.pos,
                    agent.radius,
                );
                integrate_agent_with_drag(
                    agent,
                    fluid_v,
                    hydro,
                    *frozen_force,
                    &self.solver.props,
                    dt_sub,
                );
            }
            resolve_overlaps(&mut self.agents, grid.lx, grid.width);
            self.mask = build_obstacle_mask(&self.agents, &grid);
            let t_sub = self.t + sub as f64 * dt_sub;
            if self
                .solver
                .step(&mut self.fluid, &self.mask, t_sub)
                .is_err()
            {
                cfd_failed = true;
                break;
            }
        }
        self.t += self.config.dt;
        self.step_count += 1;

        let mut rewards = RewardMatrix::zeros(self.n_agents());
        for (i, agent) in self.agents.iter().enumerate() {
            let dx = agent.pos - before[i];
            let dx_up = before[i].x - agent.pos.x;
            rewards.set_row(
                i,
                [
                    reward_progress(
                        agent.pos.x,
                        dx_up,
                        self.config.x_success,
                        self.config.x_failure,
                    ),
                    reward_energy(forces[i].internal, dx, self.swarm_config.f_max),
                    reward_smooth(clamped[i], agent.prev_action),
                ],
            );
        }
        for (agent, action) in self.agents.iter_mut().zip(&clamped) {
            agent.prev_action = *action;
        }

        // Failure dominates, then success, then truncation.
        let any_failed = self.agents.iter().any(|a| a.pos.x >= self.config.x_failure);
        let mean_x = self.agents.iter().map(|a| a.pos.x).sum::<f64>() / self.n_agents() as f64;
        self.status = if any_failed {
            EpisodeStatus::Failure
        } else if mean_x <= self.config.x_success {
            EpisodeStatus::Success
        } else if cfd_failed {
            EpisodeStatus::Truncated(TruncationCause::CfdDivergence)
        } else if self.step_count >= self.config.max_steps() {
            EpisodeStatus::Truncated(TruncationCause::Timeout)
        } else {
            EpisodeStatus::Running
        };

        StepOutcome {
            observations: self.observations(),
            rewards,
            status: self.status,
        }
    }
}

/// What one vectorized step reports for one environment.
#[derive(Debug, Clone)]
pub struct VecStepResult {
    /// Observation to act on next (post-reset when the episode ended).
    pub observations: Vec<Observation>,
    pub rewards: RewardMatrix,
    /// Status the episode ended the step with (`Running` if it continues).
    pub status: EpisodeStatus,
    /// Terminal observation, present when the episode ended this step.
    pub final_observations: Option<Vec<Observation>>,
    /// Episode summary, present when the episode ended this step.
    pub episode: Option<EpisodeSummary>,
}

/// Length-normalized per-objective sums of a finished episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSummary {
    pub env_id: usize,
    pub episode_index: u64,
    pub length: usize,
    pub normalized: [f64; N_OBJECTIVES],
    pub status: EpisodeStatus,
}

/// Steps independent environments together, auto-resetting finished episodes
/// and surfacing terminal observations for bootstrapping. Results always come
/// back in environment order, so runs are reproducible for any thread count.
pub struct VectorEnv {
    envs: Vec<Environment>,
    reward_sums: Vec<[f64; N_OBJECTIVES]>,
    threads: usize,
}

impl VectorEnv {
    pub fn new(envs: Vec<Environment>, threads: usize) -> Self {
        let n = envs.len();
        Self {
            envs,
            reward_sums: vec![[0.0; N_OBJECTIVES]; n],
            threads: threads.max(1),
        }
    }

    pub fn n_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn envs(&self) -> &[Environment] {
        &self.envs
    }

    pub fn env_mut(&mut self, idx: usize) -> &mut Environment {
        &mut self.envs[idx]
    }

    pub fn reset_all(&mut self) -> Vec<Vec<Observation>> {
        for sums in self.reward_sums.iter_mut() {
            *sums = [0.0; N_OBJECTIVES];
        }
        self.envs.iter_mut().map(|env| env.reset()).collect()
    }

    pub fn step(&mut self, actions: &[Vec<Vec2>]) -> Vec<VecStepResult> {
        assert_eq!(actions.len(), self.envs.len());
        let outcomes: Vec<StepOutcome> = if self.threads > 1 && self.envs.len() > 1 {
            let chunk = self.envs.len().div_ceil(self.threads);
            let mut slots: Vec<Option<StepOutcome>> = Vec::new();
            slots.resize_with(self.envs.len(), || None);
            std::thread::scope(|scope| {
                for ((envs, acts), outs) in self
                    .envs
                    .chunks_mut(chunk)
                    .zip(actions.chunks(chunk))
                    .zip(slots.chunks_mut(chunk))
                {
                    scope.spawn(move || {
                        for ((env, act), out) in envs.iter_mut().zip(acts).zip(outs) {
                            *out = Some(env.step(act));
                        }
                    });
                }
            });
            slots.into_iter().map(|s| s.expect("env stepped")).collect()
        } else {
            self.envs
                .iter_mut()
                .zip(actions)
                .map(|(env, act)| env.step(act))
                .collect()
        };

        outcomes
            .into_iter()
            .enumerate()
            .map(|(env_id, outcome)| {
                let mean = outcome.rewards.mean_columns();
                for (sum, m) in self.reward_sums[env_id].iter_mut().zip(mean) {
                    *sum += m;
                }
                if outcome.status.is_terminal() {
                    let env = &mut self.envs[env_id];
                    let length = env.step_count();
                    let normalized = self.reward_sums[env_id].map(|s| s / length.max(1) as f64);
                    let episode = EpisodeSummary {
                        env_id,
                        episode_index: env.episode_index(),
                        length,
                        normalized,
                        status: outcome.status,
                    };
                    self.reward_sums[env_id] = [0.0; N_OBJECTIVES];
                    let fresh = env.reset();
                    VecStepResult {
                        observations: fresh,
                        rewards: outcome.rewards,
                        status: outcome.status,
                        final_observations: Some(outcome.observations),
                        episode: Some(episode),
                    }
                } else {
                    VecStepResult {
                        observations: outcome.observations,
                        rewards: outcome.rewards,
                        status: outcome.status,
                        final_observations: None,
                        episode: None,
                    }
                }
            })
            .collect()
    }
}
