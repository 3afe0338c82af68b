//! Uniform MAC-grid geometry and field storage.
//!
//! Velocity components live on cell faces (`u` on x-faces, `v` on y-faces),
//! pressure at cell centers. All fields are stored x-major: `idx = i * ny + j`.

use crate::flow::FluidError;

/// Geometry of the uniform staggered grid covering the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in both directions (m); the grid is square-celled.
    pub dx: f64,
    /// Channel length `nx * dx` (m).
    pub lx: f64,
    /// Channel width `ny * dx` (m).
    pub width: f64,
}

impl GridSpec {
    /// Builds the grid from the physical domain, rounding to whole cells.
    pub fn from_domain(lx: f64, width: f64, dx: f64) -> Result<Self, FluidError> {
        if !(dx > 0.0 && lx > 0.0 && width > 0.0) {
            return Err(FluidError::InvalidGrid {
                reason: format!("non-positive dimensions: lx={lx}, width={width}, dx={dx}"),
            });
        }
        let nx = (lx / dx).round() as usize;
        let ny = (width / dx).round() as usize;
        let spec = Self {
            nx,
            ny,
            dx,
            lx,
            width,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), FluidError> {
        if self.nx < 4 || self.ny < 4 {
            return Err(FluidError::InvalidGrid {
                reason: format!(
                    "grid too small: {}x{} (need at least 4x4)",
                    self.nx, self.ny
                ),
            });
        }
        let fit_x = (self.nx as f64 * self.dx - self.lx).abs() / self.lx;
        let fit_y = (self.ny as f64 * self.dx - self.width).abs() / self.width;
        if fit_x > 1e-9 || fit_y > 1e-9 {
            return Err(FluidError::InvalidGrid {
                reason: format!(
                    "cell size {} does not tile the {} x {} domain",
                    self.dx, self.lx, self.width
                ),
            });
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Center of cell (i, j).
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dx)
    }

    /// Position of the u-face (i, j): x on the face, y at the cell-row center.
    pub fn u_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx, (j as f64 + 0.5) * self.dx)
    }

    /// Position of the v-face (i, j).
    pub fn v_pos(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, j as f64 * self.dx)
    }
}

/// Dense 2D array of f64, x-major (`idx = i * ny + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut field = Self::zeros(nx, ny);
        for i in 0..nx {
            for j in 0..ny {
                field.data[i * ny + j] = f(i, j);
            }
        }
        field
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nx && j < self.ny);
        self.data[i * self.ny + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.nx && j < self.ny);
        self.data[i * self.ny + j] = value;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.ny + j] += value;
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation with the field's sample points on a lattice of
    /// spacing `h` anchored at `origin`. Query points outside the lattice are
    /// clamped, giving constant extrapolation.
    pub fn sample_bilinear(&self, origin: (f64, f64), h: f64, x: f64, y: f64) -> f64 {
        self.sample_index((x - origin.0) / h, (y - origin.1) / h)
    }

    /// Clamped bilinear interpolation in index space: sample point k sits at
    /// index coordinate k. Exact at integer coordinates.
    pub fn sample_index(&self, gx: f64, gy: f64) -> f64 {
        let gx = gx.clamp(0.0, (self.nx - 1) as f64);
        let gy = gy.clamp(0.0, (self.ny - 1) as f64);
        let i0 = (gx.floor() as usize).min(self.nx.saturating_sub(2));
        let j0 = (gy.floor() as usize).min(self.ny.saturating_sub(2));
        let fx = (gx - i0 as f64).clamp(0.0, 1.0);
        let fy = (gy - j0 as f64).clamp(0.0, 1.0);
        let v00 = self.at(i0, j0);
        let v10 = self.at(i0 + 1, j0);
        let v01 = self.at(i0, j0 + 1);
        let v11 = self.at(i0 + 1, j0 + 1);
        let bottom = v00 + (v10 - v00) * fx;
        let top = v01 + (v11 - v01) * fx;
        bottom + (top - bottom) * fy
    }
}

/// MAC-grid velocity: `u` is (nx+1) x ny on x-faces, `v` is nx x (ny+1) on y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredVelocityField {
    pub u: Field2,
    pub v: Field2,
}

impl StaggeredVelocityField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            u: Field2::zeros(grid.nx + 1, grid.ny),
            v: Field2::zeros(grid.nx, grid.ny + 1),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn max_speed(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }

    /// Interpolated x-velocity at an arbitrary point.
    pub fn sample_u(&self, grid: &GridSpec, x: f64, y: f64) -> f64 {
        self.u.sample_bilinear((0.0, 0.5 * grid.dx), grid.dx, x, y)
    }

    /// Interpolated y-velocity at an arbitrary point.
    pub fn sample_v(&self, grid: &GridSpec, x: f64, y: f64) -> f64 {
        self.v.sample_bilinear((0.5 * grid.dx, 0.0), grid.dx, x, y)
    }

    pub fn sample_velocity(&self, grid: &GridSpec, x: f64, y: f64) -> (f64, f64) {
        (self.sample_u(grid, x, y), self.sample_v(grid, x, y))
    }

    /// x-velocity at a point given in grid units (position / dx).
    #[inline]
    pub fn sample_u_units(&self, px: f64, py: f64) -> f64 {
        self.u.sample_index(px, py - 0.5)
    }

    /// y-velocity at a point given in grid units.
    #[inline]
    pub fn sample_v_units(&self, px: f64, py: f64) -> f64 {
        self.v.sample_index(px - 0.5, py)
    }

    /// Divergence of cell (i, j).
    #[inline]
    pub fn divergence_at(&self, grid: &GridSpec, i: usize, j: usize) -> f64 {
        (self.u.at(i + 1, j) - self.u.at(i, j)) / grid.dx
            + (self.v.at(i, j + 1) - self.v.at(i, j)) / grid.dx
    }
}

/// Cell-centered pressure (Pa), gauge anchored at the outlet.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField(pub Field2);

impl PressureField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self(Field2::zeros(grid.nx, grid.ny))
    }

    /// Bilinear pressure sample from the four surrounding cell centers.
    pub fn sample(&self, grid: &GridSpec, x: f64, y: f64) -> f64 {
        self.0
            .sample_bilinear((0.5 * grid.dx, 0.5 * grid.dx), grid.dx, x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_16x8() -> GridSpec {
        GridSpec::from_domain(16e-4, 8e-4, 1e-4).unwrap()
    }

    #[test]
    fn from_domain_rounds_to_cells() {
        let g = grid_16x8();
        assert_eq!((g.nx, g.ny), (16, 8));
        assert!((g.nx as f64 * g.dx - g.lx).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(GridSpec::from_domain(3e-4, 8e-4, 1e-4).is_err());
    }

    #[test]
    fn rejects_non_tiling_cell_size() {
        assert!(GridSpec::from_domain(1e-3, 2e-3, 3e-4).is_err());
    }

    #[test]
    fn bilinear_is_exact_on_linear_fields() {
        let g = grid_16x8();
        let p = PressureField(Field2::from_fn(g.nx, g.ny, |i, j| {
            let (x, y) = g.cell_center(i, j);
            3.0 * x + 2.0 * y
        }));
        // Interior points reproduce the linear field exactly.
        for &(x, y) in &[(3.7e-4, 2.2e-4), (8.05e-4, 4.75e-4), (12.5e-4, 6.5e-4)] {
            let expect = 3.0 * x + 2.0 * y;
            assert!((p.sample(&g, x, y) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn bilinear_returns_stored_value_at_sample_points() {
        let g = grid_16x8();
        let f = Field2::from_fn(g.nx, g.ny, |i, j| (i * 31 + j * 7) as f64);
        let (x, y) = g.cell_center(5, 3);
        let p = PressureField(f.clone());
        assert_eq!(p.sample(&g, x, y), f.at(5, 3));
    }

    #[test]
    fn uniform_field_samples_everywhere_to_constant() {
        let g = grid_16x8();
        let mut f = Field2::zeros(g.nx, g.ny);
        f.fill(42.0);
        let p = PressureField(f);
        // Including points outside the lattice (clamped).
        for &(x, y) in &[(0.0, 0.0), (-1.0, 5e-4), (2e-3, 1e-2), (7.3e-4, 3.1e-4)] {
            assert_eq!(p.sample(&g, x, y), 42.0);
        }
    }

    #[test]
    fn divergence_of_linear_velocity() {
        let g = grid_16x8();
        // u = x, v = -y has zero divergence; u = x alone has div 1.
        let mut vel = StaggeredVelocityField::zeros(&g);
        for i in 0..=g.nx {
            for j in 0..g.ny {
                let (x, _) = g.u_pos(i, j);
                vel.u.set(i, j, x);
            }
        }
        for i in 0..g.nx {
            for j in 0..g.ny {
                assert!((vel.divergence_at(&g, i, j) - 1.0).abs() < 1e-9);
            }
        }
        for i in 0..g.nx {
            for j in 0..=g.ny {
                let (_, y) = g.v_pos(i, j);
                vel.v.set(i, j, -y);
            }
        }
        for i in 0..g.nx {
            for j in 0..g.ny {
                assert!(vel.divergence_at(&g, i, j).abs() < 1e-9);
            }
        }
    }
}
