//! Incompressible channel flow on a uniform MAC grid: pulsatile parabolic
//! inflow, explicit diffusion, semi-Lagrangian advection, moving-obstacle
//! direct forcing and pressure projection.

pub mod grid;
pub mod poisson;
pub mod waveform;

pub use grid::{Field2, GridSpec, PressureField, StaggeredVelocityField};
pub use poisson::{PoissonSolver, SolveStats, SolveTolerance};
pub use waveform::{parabolic_profile, InflowWaveform};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },
    #[error("invalid inflow waveform: {reason}")]
    InvalidWaveform { reason: String },
    #[error("diffusion number {number:.4} exceeds the explicit stability limit 0.25")]
    StabilityViolation { number: f64 },
    #[error("inflow Courant number {courant:.3} exceeds 1.1")]
    CourantViolation { courant: f64 },
    #[error("pressure solve stalled after {iterations} iterations (residual {residual:.3e} 1/s)")]
    SolverDivergence { iterations: usize, residual: f64 },
    #[error("velocity field blew up (max speed {max_speed:.3} m/s)")]
    FieldBlowup { max_speed: f64 },
}

/// Newtonian fluid constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidProps {
    /// Density (kg/m^3).
    pub rho: f64,
    /// Dynamic viscosity (Pa s).
    pub mu: f64,
}

impl FluidProps {
    pub fn new(rho: f64, mu: f64) -> Result<Self, FluidError> {
        if !(rho > 0.0 && mu > 0.0) {
            return Err(FluidError::InvalidGrid {
                reason: format!("fluid properties must be positive: rho={rho}, mu={mu}"),
            });
        }
        Ok(Self { rho, mu })
    }

    /// Kinematic viscosity (m^2/s).
    pub fn nu(&self) -> f64 {
        self.mu / self.rho
    }
}

/// Binary solid mask over the cell grid with the solid-body velocity of each
/// covered cell. The inflow and outflow columns are never marked solid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMask {
    nx: usize,
    ny: usize,
    solid: Vec<bool>,
    velocity: Vec<(f64, f64)>,
    solid_count: usize,
}

impl ObstacleMask {
    pub fn empty(grid: &GridSpec) -> Self {
        let n = grid.cell_count();
        Self {
            nx: grid.nx,
            ny: grid.ny,
            solid: vec![false; n],
            velocity: vec![(0.0, 0.0); n],
            solid_count: 0,
        }
    }

    /// Marks a cell solid with the covering body's velocity. Requests on the
    /// inflow/outflow boundary columns are dropped to keep those open.
    pub fn set_solid(&mut self, i: usize, j: usize, vel: (f64, f64)) {
        if i == 0 || i + 1 >= self.nx {
            return;
        }
        let c = i * self.ny + j;
        if !self.solid[c] {
            self.solid_count += 1;
        }
        self.solid[c] = true;
        self.velocity[c] = vel;
    }

    #[inline]
    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.solid[i * self.ny + j]
    }

    #[inline]
    pub fn solid_velocity(&self, i: usize, j: usize) -> (f64, f64) {
        self.velocity[i * self.ny + j]
    }

    pub fn solid_cell_count(&self) -> usize {
        self.solid_count
    }

    pub fn solid_slice(&self) -> &[bool] {
        &self.solid
    }

    /// Direct forcing: every face adjacent to a solid cell takes the solid
    /// velocity (the average where two solid cells meet).
    pub fn enforce_on(&self, vel: &mut StaggeredVelocityField) {
        if self.solid_count == 0 {
            return;
        }
        let (nx, ny) = (self.nx, self.ny);
        for i in 1..nx {
            for j in 0..ny {
                let left = self.is_solid(i - 1, j);
                let right = self.is_solid(i, j);
                if left && right {
                    let a = self.solid_velocity(i - 1, j).0;
                    let b = self.solid_velocity(i, j).0;
                    vel.u.set(i, j, 0.5 * (a + b));
                } else if left {
                    vel.u.set(i, j, self.solid_velocity(i - 1, j).0);
                } else if right {
                    vel.u.set(i, j, self.solid_velocity(i, j).0);
                }
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                let below = self.is_solid(i, j - 1);
                let above = self.is_solid(i, j);
                if below && above {
                    let a = self.solid_velocity(i, j - 1).1;
                    let b = self.solid_velocity(i, j).1;
                    vel.v.set(i, j, 0.5 * (a + b));
                } else if below {
                    vel.v.set(i, j, self.solid_velocity(i, j - 1).1);
                } else if above {
                    vel.v.set(i, j, self.solid_velocity(i, j).1);
                }
            }
        }
    }
}

/// Velocity and pressure fields advanced together.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub vel: StaggeredVelocityField,
    pub pressure: PressureField,
}

/// Channel-flow stepper. One call to [`FlowSolver::step`] advances a single
/// substep through boundary enforcement, explicit diffusion, semi-Lagrangian
/// advection, obstacle forcing and pressure projection.
#[derive(Debug)]
pub struct FlowSolver {
    pub grid: GridSpec,
    pub props: FluidProps,
    pub waveform: InflowWaveform,
    pub dt_sub: f64,
    pub tolerance: SolveTolerance,
    /// Speed (m/s) beyond which the field is declared blown up.
    pub blowup_speed: f64,
    max_iterations: usize,
    poisson: PoissonSolver,
}

impl FlowSolver {
    pub fn new(
        grid: GridSpec,
        props: FluidProps,
        waveform: InflowWaveform,
        dt_sub: f64,
    ) -> Result<Self, FluidError> {
        let number = props.nu() * dt_sub / (grid.dx * grid.dx);
        if number > 0.25 {
            return Err(FluidError::StabilityViolation { number });
        }
        let courant = waveform.peak_speed() * dt_sub / grid.dx;
        if courant > 1.1 {
            return Err(FluidError::CourantViolation { courant });
        }
        let max_iterations = 10 * grid.cell_count();
        Ok(Self {
            poisson: PoissonSolver::new(&grid),
            grid,
            props,
            waveform,
            dt_sub,
            tolerance: SolveTolerance::default(),
            blowup_speed: 10.0,
            max_iterations,
        })
    }

    /// Developed parabolic flow at the t = 0 inflow velocity, zero pressure.
    pub fn initial_state(&mut self) -> FluidState {
        self.poisson.reset_guess();
        let peak = self.waveform.velocity(0.0);
        let grid = &self.grid;
        let mut vel = StaggeredVelocityField::zeros(grid);
        for i in 0..=grid.nx {
            for j in 0..grid.ny {
                let (_, y) = grid.u_pos(i, j);
                vel.u.set(i, j, parabolic_profile(y, peak, grid.width));
            }
        }
        FluidState {
            vel,
            pressure: PressureField::zeros(grid),
        }
    }

    /// Inflow parabola scaled by the waveform, outlet zero-gradient, no-slip
    /// walls and obstacle direct forcing.
    pub fn apply_boundary_conditions(
        &self,
        vel: &mut StaggeredVelocityField,
        mask: &ObstacleMask,
        t: f64,
    ) {
        let grid = &self.grid;
        let peak = self.waveform.velocity(t);
        for j in 0..grid.ny {
            let (_, y) = grid.u_pos(0, j);
            vel.u.set(0, j, parabolic_profile(y, peak, grid.width));
            let outlet = vel.u.at(grid.nx - 1, j);
            vel.u.set(grid.nx, j, outlet);
        }
        for i in 0..grid.nx {
            vel.v.set(i, 0, 0.0);
            vel.v.set(i, grid.ny, 0.0);
        }
        mask.enforce_on(vel);
    }

    /// One explicit viscosity update `u += nu dt Laplacian(u)`. Wall-adjacent
    /// faces see mirrored ghosts (no slip); prescribed boundary faces are
    /// left unchanged.
    pub fn diffuse(&self, vel: &StaggeredVelocityField) -> StaggeredVelocityField {
        let grid = &self.grid;
        let k = self.props.nu() * self.dt_sub / (grid.dx * grid.dx);
        let mut out = vel.clone();
        let (nx, ny) = (grid.nx, grid.ny);
        for i in 1..nx {
            for j in 0..ny {
                let c = vel.u.at(i, j);
                let west = vel.u.at(i - 1, j);
                let east = vel.u.at(i + 1, j);
                let south = if j > 0 { vel.u.at(i, j - 1) } else { -c };
                let north = if j + 1 < ny { vel.u.at(i, j + 1) } else { -c };
                out.u
                    .set(i, j, c + k * (west + east + south + north - 4.0 * c));
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                let c = vel.v.at(i, j);
                let south = vel.v.at(i, j - 1);
                let north = vel.v.at(i, j + 1);
                let west = if i > 0 { vel.v.at(i - 1, j) } else { -c };
                let east = if i + 1 < nx { vel.v.at(i + 1, j) } else { c };
                out.v
                    .set(i, j, c + k * (west + east + south + north - 4.0 * c));
            }
        }
        out
    }

    /// Semi-Lagrangian transport of `advected` along `carrier`: each face
    /// point is backtraced one explicit Euler step and bilinearly sampled.
    /// Backtraces run in grid units so a zero carrier reproduces the field
    /// bit-exactly; positions are clamped to the domain.
    pub fn advect_velocity(
        &self,
        advected: &StaggeredVelocityField,
        carrier: &StaggeredVelocityField,
    ) -> StaggeredVelocityField {
        let grid = &self.grid;
        let step = self.dt_sub / grid.dx;
        let (pnx, pny) = (grid.nx as f64, grid.ny as f64);
        let mut out = advected.clone();
        for i in 1..grid.nx {
            for j in 0..grid.ny {
                let (px, py) = (i as f64, j as f64 + 0.5);
                let cu = carrier.sample_u_units(px, py);
                let cv = carrier.sample_v_units(px, py);
                let bx = (px - cu * step).clamp(0.0, pnx);
                let by = (py - cv * step).clamp(0.0, pny);
                out.u.set(i, j, advected.sample_u_units(bx, by));
            }
        }
        for i in 0..grid.nx {
            for j in 1..grid.ny {
                let (px, py) = (i as f64 + 0.5, j as f64);
                let cu = carrier.sample_u_units(px, py);
                let cv = carrier.sample_v_units(px, py);
                let bx = (px - cu * step).clamp(0.0, pnx);
                let by = (py - cv * step).clamp(0.0, pny);
                out.v.set(i, j, advected.sample_v_units(bx, by));
            }
        }
        out
    }

    /// Semi-Lagrangian transport of a cell-centered scalar field.
    pub fn advect_scalar(&self, field: &Field2, carrier: &StaggeredVelocityField) -> Field2 {
        let grid = &self.grid;
        let step = self.dt_sub / grid.dx;
        let (pnx, pny) = (grid.nx as f64, grid.ny as f64);
        Field2::from_fn(field.nx(), field.ny(), |i, j| {
            let (px, py) = (i as f64 + 0.5, j as f64 + 0.5);
            let cu = carrier.sample_u_units(px, py);
            let cv = carrier.sample_v_units(px, py);
            let bx = (px - cu * step).clamp(0.0, pnx);
            let by = (py - cv * step).clamp(0.0, pny);
            field.sample_index(bx - 0.5, by - 0.5)
        })
    }

    pub fn project(
        &mut self,
        vel: &mut StaggeredVelocityField,
        mask: &ObstacleMask,
    ) -> Result<(PressureField, SolveStats), FluidError> {
        self.poisson.project(
            &self.grid,
            vel,
            mask,
            self.props.rho,
            self.dt_sub,
            self.tolerance,
            self.max_iterations,
        )
    }

    /// Advances one substep at simulation time `t`.
    pub fn step(
        &mut self,
        state: &mut FluidState,
        mask: &ObstacleMask,
        t: f64,
    ) -> Result<SolveStats, FluidError> {
        self.apply_boundary_conditions(&mut state.vel, mask, t);
        state.vel = self.diffuse(&state.vel);
        state.vel = self.advect_velocity(&state.vel, &state.vel);
        mask.enforce_on(&mut state.vel);
        let (pressure, stats) = self.project(&mut state.vel, mask)?;
        state.pressure = pressure;
        let max_speed = state.vel.max_speed();
        if !state.vel.is_finite() || max_speed > self.blowup_speed {
            return Err(FluidError::FieldBlowup { max_speed });
        }
        Ok(stats)
    }

    /// Largest |div u| over non-solid cells.
    pub fn max_fluid_divergence(&self, vel: &StaggeredVelocityField, mask: &ObstacleMask) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                if !mask.is_solid(i, j) {
                    worst = worst.max(vel.divergence_at(&self.grid, i, j).abs());
                }
            }
        }
        worst
    }
}
