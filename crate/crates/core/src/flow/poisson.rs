//! Pressure projection: MIC(0)-preconditioned conjugate gradient on the
//! masked MAC grid.
//!
//! The linear system is `A p = -div(u)` with `A = -(dt/rho) * Laplacian`,
//! assembled per fluid cell. Wall and inflow faces carry Neumann conditions
//! (link dropped), solid faces likewise, and the outlet column couples to a
//! zero-pressure ghost column which anchors the gauge. The residual is in
//! divergence units (1/s), so the post-projection divergence of every fluid
//! cell equals the final residual up to roundoff.

use crate::flow::grid::{Field2, GridSpec, PressureField, StaggeredVelocityField};
use crate::flow::{FluidError, ObstacleMask};

/// Convergence report of one projection solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    /// Max-norm of the final residual (1/s).
    pub residual_inf: f64,
    /// Final residual 2-norm relative to the right-hand side 2-norm.
    pub residual_rel: f64,
}

/// Tolerances of the projection solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveTolerance {
    /// Required drop of the residual 2-norm relative to the RHS.
    pub rel: f64,
    /// Absolute cap on the residual max-norm, i.e. the post-projection
    /// divergence bound (1/s).
    pub max_divergence: f64,
}

impl Default for SolveTolerance {
    fn default() -> Self {
        // One decade of headroom under the 1e-6 1/s divergence contract.
        Self {
            rel: 1e-8,
            max_divergence: 1e-7,
        }
    }
}

const MIC_TUNING: f64 = 0.97;
const MIC_SAFETY: f64 = 0.25;

/// Linear-solve engine behind the projection.
///
/// The channel grid is long and thin, so with x-major ordering the system is
/// banded with half-bandwidth `ny`; a banded Cholesky factorization solves it
/// exactly in O(nx ny^3) per substep, far cheaper at the required tolerance
/// than iterating PCG across the full channel length. PCG with an MIC(0)
/// preconditioner is kept as an alternative engine and as a cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverEngine {
    #[default]
    DirectBanded,
    Pcg,
}

#[derive(Debug)]
pub struct PoissonSolver {
    nx: usize,
    ny: usize,
    fluid: Vec<bool>,
    /// Extra diagonal weight per cell: outlet ghost link or component ground.
    extra_diag: Vec<f64>,
    /// Link coefficient toward the east / north neighbor (`-coef` or 0).
    plusx: Vec<f64>,
    plusy: Vec<f64>,
    adiag: Vec<f64>,
    precon: Vec<f64>,
    rhs: Vec<f64>,
    /// Solution kept across solves as the warm-start guess.
    pressure: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    aux: Vec<f64>,
    visited: Vec<bool>,
    queue: Vec<usize>,
    engine: SolverEngine,
    /// Banded Cholesky factor, `bandwidth + 1` entries per row.
    band: Vec<f64>,
    /// Solid layout + coefficient the matrix was assembled for; `None` when stale.
    assembled_for: Option<(Vec<bool>, f64)>,
    /// Per cell: 1-based id of its outlet-disconnected component, 0 otherwise.
    ungrounded_id: Vec<u32>,
    ungrounded_count: usize,
    comp_sum: Vec<f64>,
    comp_len: Vec<usize>,
}

impl PoissonSolver {
    pub fn new(grid: &GridSpec) -> Self {
        Self::with_engine(grid, SolverEngine::default())
    }

    pub fn with_engine(grid: &GridSpec, engine: SolverEngine) -> Self {
        let n = grid.cell_count();
        Self {
            nx: grid.nx,
            ny: grid.ny,
            fluid: vec![true; n],
            extra_diag: vec![0.0; n],
            plusx: vec![0.0; n],
            plusy: vec![0.0; n],
            adiag: vec![0.0; n],
            precon: vec![0.0; n],
            rhs: vec![0.0; n],
            pressure: vec![0.0; n],
            r: vec![0.0; n],
            z: vec![0.0; n],
            s: vec![0.0; n],
            aux: vec![0.0; n],
            visited: vec![false; n],
            queue: Vec::with_capacity(n),
            engine,
            band: vec![0.0; n * (grid.ny + 1)],
            assembled_for: None,
            ungrounded_id: vec![0; n],
            ungrounded_count: 0,
            comp_sum: Vec::new(),
            comp_len: Vec::new(),
        }
    }

    /// Drops the warm-start guess (used when starting a fresh episode).
    pub fn reset_guess(&mut self) {
        self.pressure.fill(0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Projects `vel` onto its divergence-free part and returns the pressure.
    ///
    /// Faces adjacent to solid cells, walls and the inflow column are treated
    /// as prescribed and left untouched; the outlet faces are corrected
    /// against the zero-pressure ghost column.
    pub fn project(
        &mut self,
        grid: &GridSpec,
        vel: &mut StaggeredVelocityField,
        mask: &ObstacleMask,
        rho: f64,
        dt: f64,
        tol: SolveTolerance,
        max_iterations: usize,
    ) -> Result<(PressureField, SolveStats), FluidError> {
        let (nx, ny) = (self.nx, self.ny);
        debug_assert_eq!((grid.nx, grid.ny), (nx, ny));
        let coef = dt / (rho * grid.dx * grid.dx);

        // The matrix depends only on the solid layout and coef, so the
        // banded factorization is reused while agents stay within the same
        // cells.
        let stale = match &self.assembled_for {
            Some((solid, c)) => solid.as_slice() != mask.solid_slice() || *c != coef,
            None => true,
        };
        if stale {
            self.assemble_matrix(mask, coef);
            self.find_components(coef);
            if self.engine == SolverEngine::DirectBanded {
                self.factor_banded()?;
            }
            self.assembled_for = Some((mask.solid_slice().to_vec(), coef));
        }
        self.assemble_rhs(grid, vel);
        if self.ungrounded_count > 0 {
            self.balance_ungrounded_rhs();
        }
        let stats = match self.engine {
            SolverEngine::DirectBanded => self.run_direct(tol)?,
            SolverEngine::Pcg => self.run_pcg(tol, max_iterations)?,
        };

        // Subtract the pressure gradient from every non-prescribed face.
        let scale = dt / (rho * grid.dx);
        for i in 1..nx {
            for j in 0..ny {
                let left = self.idx(i - 1, j);
                let right = self.idx(i, j);
                if self.fluid[left] && self.fluid[right] {
                    let du = scale * (self.pressure[right] - self.pressure[left]);
                    vel.u.add(i, j, -du);
                }
            }
        }
        for j in 0..ny {
            // Outlet boundary face against the ghost column at p = 0.
            let cell = self.idx(nx - 1, j);
            let du = scale * (0.0 - self.pressure[cell]);
            vel.u.add(nx, j, -du);
        }
        for i in 0..nx {
            for j in 1..ny {
                let below = self.idx(i, j - 1);
                let above = self.idx(i, j);
                if self.fluid[below] && self.fluid[above] {
                    let dv = scale * (self.pressure[above] - self.pressure[below]);
                    vel.v.add(i, j, -dv);
                }
            }
        }

        let mut field = Field2::zeros(nx, ny);
        for i in 0..nx {
            for j in 0..ny {
                field.set(i, j, self.pressure[self.idx(i, j)]);
            }
        }
        let mut pressure = PressureField(field);
        fill_solid_pressure(&mut pressure, mask);
        Ok((pressure, stats))
    }

    fn assemble_matrix(&mut self, mask: &ObstacleMask, coef: f64) {
        let (nx, ny) = (self.nx, self.ny);
        for c in 0..nx * ny {
            self.fluid[c] = !mask.solid_slice()[c];
        }
        for i in 0..nx {
            for j in 0..ny {
                let c = self.idx(i, j);
                self.plusx[c] = 0.0;
                self.plusy[c] = 0.0;
                self.extra_diag[c] = 0.0;
                self.adiag[c] = 0.0;
                if !self.fluid[c] {
                    self.pressure[c] = 0.0;
                    continue;
                }
                let mut diag = 0.0;
                // West: inflow boundary (i == 0) is Neumann.
                if i > 0 && self.fluid[self.idx(i - 1, j)] {
                    diag += coef;
                }
                // East: outlet couples to the zero-pressure ghost column.
                if i + 1 < nx {
                    if self.fluid[self.idx(i + 1, j)] {
                        diag += coef;
                        self.plusx[c] = -coef;
                    }
                } else {
                    diag += coef;
                    self.extra_diag[c] = coef;
                }
                // South / north walls are Neumann.
                if j > 0 && self.fluid[self.idx(i, j - 1)] {
                    diag += coef;
                }
                if j + 1 < ny && self.fluid[self.idx(i, j + 1)] {
                    diag += coef;
                    self.plusy[c] = -coef;
                }
                self.adiag[c] = diag;
            }
        }
    }

    fn assemble_rhs(&mut self, grid: &GridSpec, vel: &StaggeredVelocityField) {
        for i in 0..self.nx {
            for j in 0..self.ny {
                let c = self.idx(i, j);
                self.rhs[c] = if self.fluid[c] {
                    -vel.divergence_at(grid, i, j)
                } else {
                    0.0
                };
            }
        }
    }

    /// Fluid regions cut off from the outlet column have a pure-Neumann
    /// (singular) block. Each gets one cell tied to a zero ghost to pin the
    /// gauge, and is tagged so the RHS can be mean-balanced per solve.
    fn find_components(&mut self, coef: f64) {
        let (nx, ny) = (self.nx, self.ny);
        self.visited.fill(false);
        self.ungrounded_id.fill(0);
        self.ungrounded_count = 0;
        for start in 0..nx * ny {
            if self.visited[start] || !self.fluid[start] {
                continue;
            }
            self.queue.clear();
            self.queue.push(start);
            self.visited[start] = true;
            let mut grounded = false;
            let mut head = 0;
            while head < self.queue.len() {
                let c = self.queue[head];
                head += 1;
                let (i, j) = (c / ny, c % ny);
                if i == nx - 1 {
                    grounded = true;
                }
                let push = |solver: &mut Self, nb: usize| {
                    if !solver.visited[nb] {
                        solver.visited[nb] = true;
                        solver.queue.push(nb);
                    }
                };
                if self.plusx[c] != 0.0 {
                    push(self, c + ny);
                }
                if self.plusy[c] != 0.0 {
                    push(self, c + 1);
                }
                if i > 0 && self.plusx[c - ny] != 0.0 {
                    push(self, c - ny);
                }
                if j > 0 && self.plusy[c - 1] != 0.0 {
                    push(self, c - 1);
                }
            }
            if !grounded {
                self.ungrounded_count += 1;
                let id = self.ungrounded_count as u32;
                for t in 0..self.queue.len() {
                    self.ungrounded_id[self.queue[t]] = id;
                }
                let pin = self.queue[0];
                self.adiag[pin] += coef;
                self.extra_diag[pin] += coef;
            }
        }
    }

    /// Removes the mean RHS of every outlet-disconnected component so its
    /// block is consistent. Incompatible flux into a sealed pocket then shows
    /// up as a uniform residual divergence over that pocket instead of a
    /// stalled solve.
    fn balance_ungrounded_rhs(&mut self) {
        self.comp_sum.clear();
        self.comp_sum.resize(self.ungrounded_count + 1, 0.0);
        self.comp_len.clear();
        self.comp_len.resize(self.ungrounded_count + 1, 0);
        for c in 0..self.rhs.len() {
            let id = self.ungrounded_id[c] as usize;
            if id > 0 {
                self.comp_sum[id] += self.rhs[c];
                self.comp_len[id] += 1;
            }
        }
        for c in 0..self.rhs.len() {
            let id = self.ungrounded_id[c] as usize;
            if id > 0 {
                self.rhs[c] -= self.comp_sum[id] / self.comp_len[id] as f64;
            }
        }
    }

    fn build_preconditioner(&mut self) {
        let ny = self.ny;
        for c in 0..self.fluid.len() {
            if !self.fluid[c] {
                self.precon[c] = 0.0;
                continue;
            }
            let (i, j) = (c / ny, c % ny);
            let mut e = self.adiag[c];
            if i > 0 {
                let w = c - ny;
                let px = self.plusx[w] * self.precon[w];
                e -= px * px
                    + MIC_TUNING * self.plusx[w] * self.plusy[w] * self.precon[w] * self.precon[w];
            }
            if j > 0 {
                let s = c - 1;
                let py = self.plusy[s] * self.precon[s];
                e -= py * py
                    + MIC_TUNING * self.plusy[s] * self.plusx[s] * self.precon[s] * self.precon[s];
            }
            if e < MIC_SAFETY * self.adiag[c] {
                e = self.adiag[c];
            }
            self.precon[c] = if e > 0.0 { 1.0 / e.sqrt() } else { 0.0 };
        }
    }

    fn apply_preconditioner(&mut self) {
        let ny = self.ny;
        let n = self.fluid.len();
        // Forward solve L q = r (q stored in aux).
        for c in 0..n {
            if !self.fluid[c] {
                self.aux[c] = 0.0;
                continue;
            }
            let (i, j) = (c / ny, c % ny);
            let mut t = self.r[c];
            if i > 0 {
                let w = c - ny;
                t -= self.plusx[w] * self.precon[w] * self.aux[w];
            }
            if j > 0 {
                let s = c - 1;
                t -= self.plusy[s] * self.precon[s] * self.aux[s];
            }
            self.aux[c] = t * self.precon[c];
        }
        // Backward solve L^T z = q.
        for c in (0..n).rev() {
            if !self.fluid[c] {
                self.z[c] = 0.0;
                continue;
            }
            let (i, j) = (c / ny, c % ny);
            let mut t = self.aux[c];
            if i + 1 < self.nx && self.plusx[c] != 0.0 {
                t -= self.plusx[c] * self.precon[c] * self.z[c + ny];
            }
            if j + 1 < ny && self.plusy[c] != 0.0 {
                t -= self.plusy[c] * self.precon[c] * self.z[c + 1];
            }
            self.z[c] = t * self.precon[c];
        }
    }

    /// `aux = A * s`.
    fn apply_matrix(&mut self) {
        let ny = self.ny;
        for c in 0..self.fluid.len() {
            if !self.fluid[c] {
                self.aux[c] = 0.0;
                continue;
            }
            let (i, j) = (c / ny, c % ny);
            let mut t = self.adiag[c] * self.s[c];
            if self.plusx[c] != 0.0 {
                t += self.plusx[c] * self.s[c + ny];
            }
            if self.plusy[c] != 0.0 {
                t += self.plusy[c] * self.s[c + 1];
            }
            if i > 0 && self.plusx[c - ny] != 0.0 {
                t += self.plusx[c - ny] * self.s[c - ny];
            }
            if j > 0 && self.plusy[c - 1] != 0.0 {
                t += self.plusy[c - 1] * self.s[c - 1];
            }
            self.aux[c] = t;
        }
    }

    /// Banded Cholesky factor-and-solve with iterative refinement. Solid
    /// cells become identity rows so the factorization stays positive
    /// definite and their pressure is exactly zero.
    fn run_direct(&mut self, tol: SolveTolerance) -> Result<SolveStats, FluidError> {
        let n = self.fluid.len();
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let rhs_norm = norm2(&self.rhs);
        if rhs_norm == 0.0 {
            self.pressure.fill(0.0);
            return Ok(SolveStats {
                iterations: 0,
                residual_inf: 0.0,
                residual_rel: 0.0,
            });
        }
        self.solve_banded_into_pressure();
        // Refinement loop doubles as the convergence check.
        let mut r_inf = f64::INFINITY;
        for refinement in 0..4 {
            self.s.copy_from_slice(&self.pressure);
            self.apply_matrix();
            for c in 0..n {
                self.r[c] = if self.fluid[c] {
                    self.rhs[c] - self.aux[c]
                } else {
                    0.0
                };
            }
            r_inf = norm_inf(&self.r);
            let r_two = norm2(&self.r);
            if r_inf <= tol.max_divergence && r_two <= tol.rel * rhs_norm {
                return Ok(SolveStats {
                    iterations: refinement,
                    residual_inf: r_inf,
                    residual_rel: r_two / rhs_norm,
                });
            }
            // p += A^{-1} r
            self.aux.copy_from_slice(&self.r);
            self.refine_banded();
        }
        Err(FluidError::SolverDivergence {
            iterations: 4,
            residual: r_inf,
        })
    }

    fn factor_banded(&mut self) -> Result<(), FluidError> {
        let n = self.fluid.len();
        let b = self.ny;
        let w = b + 1;
        // Load A's bands: d = 0 diagonal, d = 1 south link, d = b west link.
        self.band.fill(0.0);
        for c in 0..n {
            let row = c * w;
            if !self.fluid[c] {
                self.band[row] = 1.0;
                continue;
            }
            self.band[row] = self.adiag[c];
            if c % b != 0 && c >= 1 {
                self.band[row + 1] = self.plusy[c - 1];
            }
            if c >= b {
                self.band[row + b] = self.plusx[c - b];
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(b);
            for j in lo..i {
                let mut sum = self.band[i * w + (i - j)];
                let m0 = lo.max(j.saturating_sub(b));
                for m in m0..j {
                    sum -= self.band[i * w + (i - m)] * self.band[j * w + (j - m)];
                }
                self.band[i * w + (i - j)] = sum / self.band[j * w];
            }
            let mut sum = self.band[i * w];
            for m in lo..i {
                let l = self.band[i * w + (i - m)];
                sum -= l * l;
            }
            if !(sum > 0.0) {
                return Err(FluidError::SolverDivergence {
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
            self.band[i * w] = sum.sqrt();
        }
        Ok(())
    }

    /// Forward/backward substitution of `rhs` into `pressure`.
    fn solve_banded_into_pressure(&mut self) {
        self.aux.copy_from_slice(&self.rhs);
        self.refine_banded_from_aux_into_pressure(false);
    }

    /// Solves `A delta = aux` and adds delta to `pressure`.
    fn refine_banded(&mut self) {
        self.refine_banded_from_aux_into_pressure(true);
    }

    fn refine_banded_from_aux_into_pressure(&mut self, accumulate: bool) {
        let n = self.fluid.len();
        let b = self.ny;
        let w = b + 1;
        // Forward solve L y = aux, y stored in z.
        for i in 0..n {
            let mut sum = self.aux[i];
            let lo = i.saturating_sub(b);
            for m in lo..i {
                sum -= self.band[i * w + (i - m)] * self.z[m];
            }
            self.z[i] = sum / self.band[i * w];
        }
        // Backward solve L^T x = y, x stored in z.
        for i in (0..n).rev() {
            let mut sum = self.z[i];
            let hi = (i + b).min(n - 1);
            for m in (i + 1)..=hi {
                sum -= self.band[m * w + (m - i)] * self.z[m];
            }
            self.z[i] = sum / self.band[i * w];
        }
        if accumulate {
            for i in 0..n {
                self.pressure[i] += self.z[i];
            }
        } else {
            self.pressure.copy_from_slice(&self.z);
        }
    }

    fn run_pcg(
        &mut self,
        tol: SolveTolerance,
        max_iterations: usize,
    ) -> Result<SolveStats, FluidError> {
        let n = self.fluid.len();
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let rhs_norm = norm2(&self.rhs);
        if rhs_norm == 0.0 {
            self.pressure.fill(0.0);
            return Ok(SolveStats {
                iterations: 0,
                residual_inf: 0.0,
                residual_rel: 0.0,
            });
        }

        // Warm start from the previous pressure.
        self.s.copy_from_slice(&self.pressure);
        self.apply_matrix();
        for c in 0..n {
            self.r[c] = if self.fluid[c] {
                self.rhs[c] - self.aux[c]
            } else {
                0.0
            };
        }
        let converged =
            |r_inf: f64, r_two: f64| r_inf <= tol.max_divergence && r_two <= tol.rel * rhs_norm;
        let mut r_inf = norm_inf(&self.r);
        let mut r_two = norm2(&self.r);
        if converged(r_inf, r_two) {
            return Ok(SolveStats {
                iterations: 0,
                residual_inf: r_inf,
                residual_rel: r_two / rhs_norm,
            });
        }

        self.build_preconditioner();
        self.apply_preconditioner();
        self.s.copy_from_slice(&self.z);
        let mut sigma: f64 = self.z.iter().zip(&self.r).map(|(a, b)| a * b).sum();

        for iteration in 1..=max_iterations {
            self.apply_matrix();
            let s_dot_as: f64 = self.s.iter().zip(&self.aux).map(|(a, b)| a * b).sum();
            if s_dot_as == 0.0 || !s_dot_as.is_finite() {
                return Err(FluidError::SolverDivergence {
                    iterations: iteration,
                    residual: r_inf,
                });
            }
            let alpha = sigma / s_dot_as;
            for c in 0..n {
                self.pressure[c] += alpha * self.s[c];
                self.r[c] -= alpha * self.aux[c];
            }
            r_inf = norm_inf(&self.r);
            r_two = norm2(&self.r);
            if converged(r_inf, r_two) {
                return Ok(SolveStats {
                    iterations: iteration,
                    residual_inf: r_inf,
                    residual_rel: r_two / rhs_norm,
                });
            }
            self.apply_preconditioner();
            let sigma_new: f64 = self.z.iter().zip(&self.r).map(|(a, b)| a * b).sum();
            let beta = sigma_new / sigma;
            for c in 0..n {
                self.s[c] = self.z[c] + beta * self.s[c];
            }
            sigma = sigma_new;
        }
        Err(FluidError::SolverDivergence {
            iterations: max_iterations,
            residual: r_inf,
        })
    }
}

/// Extends pressure into solid cells by repeated neighbor averaging so that
/// circumference samples near an agent surface interpolate smooth values
/// instead of zeros. Three passes cover the deepest cells of a 2.5-cell-radius
/// disk.
fn fill_solid_pressure(pressure: &mut PressureField, mask: &ObstacleMask) {
    if mask.solid_cell_count() == 0 {
        return;
    }
    let nx = pressure.0.nx();
    let ny = pressure.0.ny();
    let mut known: Vec<bool> = (0..nx * ny)
        .map(|c| !mask.is_solid(c / ny, c % ny))
        .collect();
    for _ in 0..3 {
        let snapshot = pressure.0.clone();
        let known_before = known.clone();
        for i in 0..nx {
            for j in 0..ny {
                let c = i * ny + j;
                if known_before[c] {
                    continue;
                }
                let mut sum = 0.0;
                let mut count = 0;
                let mut take = |ii: usize, jj: usize| {
                    if known_before[ii * ny + jj] {
                        sum += snapshot.at(ii, jj);
                        count += 1;
                    }
                };
                if i > 0 {
                    take(i - 1, j);
                }
                if i + 1 < nx {
                    take(i + 1, j);
                }
                if j > 0 {
                    take(i, j - 1);
                }
                if j + 1 < ny {
                    take(i, j + 1);
                }
                if count > 0 {
                    pressure.0.set(i, j, sum / count as f64);
                    known[c] = true;
                }
            }
        }
    }
}
