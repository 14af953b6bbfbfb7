//! Uniform periodic grid on `[-L, L)`, discrete calculus and the field
//! container shared by the solver, the characteristics engine and the
//! blow-up certifier.
//!
//! The Helmholtz operator `1 - d²/dx²` is discretised with the 3-point
//! Laplacian and inverted exactly by a cyclic tridiagonal solve, so that
//! `dx * sum(u) == dx * sum(m)` holds to roundoff on the grid.

use crate::error::{ensure_finite, Result, SqqError};

/// Smallest admissible number of cells.
pub const MIN_CELLS: usize = 16;

#[derive(Debug, Clone)]
pub struct Grid {
    half_length: f64,
    cells: usize,
    dx: f64,
    helmholtz: HelmholtzFactor,
}

impl Grid {
    pub fn new(half_length: f64, cells: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(SqqError::InvalidGrid(format!(
                "half length must be positive and finite, got {half_length}"
            )));
        }
        if cells < MIN_CELLS || !cells.is_multiple_of(2) {
            return Err(SqqError::InvalidGrid(format!(
                "cell count must be even and >= {MIN_CELLS}, got {cells}"
            )));
        }
        let dx = 2.0 * half_length / cells as f64;
        Ok(Self {
            half_length,
            cells,
            dx,
            helmholtz: HelmholtzFactor::new(cells, dx),
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn period(&self) -> f64 {
        2.0 * self.half_length
    }

    /// Node coordinate `x_j = -L + j dx`.
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.cells).map(|j| self.x(j)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.cells).map(|j| f(self.x(j))).collect()
    }

    /// Maps any coordinate into the fundamental period `[-L, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let p = self.period();
        let y = (x + self.half_length).rem_euclid(p) - self.half_length;
        if y >= self.half_length {
            -self.half_length
        } else {
            y
        }
    }

    /// Index of the node nearest to `x` (periodic).
    pub fn nearest_node(&self, x: f64) -> usize {
        let s = (self.wrap(x) + self.half_length) / self.dx;
        (s.round() as usize) % self.cells
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.cells {
            return Err(SqqError::LengthMismatch {
                expected: self.cells,
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Solves `(I - D2) u = m` on the periodic grid.
    pub fn helmholtz_invert(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.check_len(m)?;
        ensure_finite("helmholtz input", m)?;
        Ok(self.helmholtz.solve(m))
    }

    /// Applies `(I - D2)` to `u`; the exact discrete inverse of
    /// [`Grid::helmholtz_invert`].
    pub fn helmholtz_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        ensure_finite("helmholtz input", u)?;
        let n = self.cells;
        let inv = 1.0 / (self.dx * self.dx);
        Ok((0..n)
            .map(|j| {
                let l = u[(j + n - 1) % n];
                let r = u[(j + 1) % n];
                u[j] - (r - 2.0 * u[j] + l) * inv
            })
            .collect())
    }

    pub fn derivative(&self, f: &[f64], stencil: Stencil<'_>) -> Result<Vec<f64>> {
        self.check_len(f)?;
        ensure_finite("derivative input", f)?;
        let n = self.cells;
        match stencil {
            Stencil::Centered => Ok(self.centered_unchecked(f)),
            Stencil::Upwind(velocity) => {
                self.check_len(velocity)?;
                ensure_finite("upwind velocity", velocity)?;
                let inv = 1.0 / self.dx;
                Ok((0..n)
                    .map(|j| {
                        if velocity[j] >= 0.0 {
                            (f[j] - f[(j + n - 1) % n]) * inv
                        } else {
                            (f[(j + 1) % n] - f[j]) * inv
                        }
                    })
                    .collect())
            }
        }
    }

    pub(crate) fn centered_unchecked(&self, f: &[f64]) -> Vec<f64> {
        let n = self.cells;
        let inv = 0.5 / self.dx;
        (0..n).map(|j| (f[(j + 1) % n] - f[(j + n - 1) % n]) * inv).collect()
    }

    /// Periodic trapezoid rule, `dx * sum(f)`.
    pub fn quadrature(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.cells);
        self.dx * f.iter().sum::<f64>()
    }

    /// Monotone (Fritsch-Butland) cubic Hermite interpolation of periodic
    /// node data at an arbitrary coordinate.
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        let n = self.cells;
        let s = (self.wrap(x) + self.half_length) / self.dx;
        let j0 = (s.floor() as usize).min(n - 1);
        let t = s - j0 as f64;
        let at = |k: isize| f[(j0 as isize + k).rem_euclid(n as isize) as usize];
        let (fm, f0, f1, f2) = (at(-1), at(0), at(1), at(2));
        let d0 = monotone_slope(f0 - fm, f1 - f0);
        let d1 = monotone_slope(f1 - f0, f2 - f1);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * f0 + h10 * d0 + h01 * f1 + h11 * d1
    }
}

/// Node slope (in units of one cell) from the two adjacent secants.
#[inline]
fn monotone_slope(left: f64, right: f64) -> f64 {
    if left * right <= 0.0 {
        0.0
    } else {
        2.0 * left * right / (left + right)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Stencil<'a> {
    /// Second-order central difference.
    Centered,
    /// First-order one-sided difference taken from the side the velocity
    /// comes from (backward where `velocity >= 0`).
    Upwind(&'a [f64]),
}

/// Exact factorisation of the cyclic system
/// `(1 + 2/dx²) u_j - (u_{j-1} + u_{j+1})/dx² = m_j` into two cyclic
/// first-order recurrences, `(1 - λS)(1 - λS⁻¹) u = dx² λ m` with `S` the
/// shift and `λ + 1/λ = 2 + dx²`.
///
/// Forming `2 + dx²` explicitly (as plain tridiagonal elimination does)
/// costs a relative accuracy of `eps / dx²`; the recurrences keep `O(eps)`.
#[derive(Debug, Clone)]
struct HelmholtzFactor {
    lambda: f64,
    scale: f64,
    // 1 / (1 - λ^N), the periodic closure of one sweep
    closure: f64,
}

impl HelmholtzFactor {
    fn new(n: usize, dx: f64) -> Self {
        let kappa = 2.0 * (0.5 * dx).asinh();
        let lambda = (-kappa).exp();
        Self {
            lambda,
            scale: dx * dx * lambda,
            closure: -1.0 / (-(n as f64) * kappa).exp_m1(),
        }
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let lam = self.lambda;
        // forward: y_j = r_j + λ y_{j-1}, periodic
        let mut seed = 0.0;
        let mut w = 1.0;
        for k in 0..n {
            seed += w * r[(n - k) % n];
            w *= lam;
        }
        let mut y = vec![0.0; n];
        y[0] = seed * self.closure;
        for j in 1..n {
            y[j] = r[j] + lam * y[j - 1];
        }
        // backward: z_j = y_j + λ z_{j+1}, periodic
        let mut seed = 0.0;
        let mut w = 1.0;
        for k in 0..n {
            seed += w * y[(n - 1 + k) % n];
            w *= lam;
        }
        let mut z = y;
        z[n - 1] = seed * self.closure;
        for j in (0..n - 1).rev() {
            z[j] += lam * z[j + 1];
        }
        for zj in &mut z {
            *zj *= self.scale;
        }
        z
    }
}

/// Momentum densities and the fields derived from them at one instant.
///
/// `transport` is `W = (uv - ux vx) - (u vx - ux v)`, the velocity carrying
/// both densities; `slope` is `M = (ux n + vx m) + (u n - v m)`, its
/// x-derivative along solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub ux: Vec<f64>,
    pub vx: Vec<f64>,
    pub transport: Vec<f64>,
    pub slope: Vec<f64>,
    fresh: bool,
}

impl FieldState {
    /// A state holding only the densities; derived arrays are stale until
    /// [`FieldState::assemble`] runs.
    pub fn from_densities(t: f64, m: Vec<f64>, n: Vec<f64>) -> Self {
        let len = m.len();
        Self {
            t,
            m,
            n,
            u: vec![0.0; len],
            v: vec![0.0; len],
            ux: vec![0.0; len],
            vx: vec![0.0; len],
            transport: vec![0.0; len],
            slope: vec![0.0; len],
            fresh: false,
        }
    }

    /// Builds a fresh state from densities in one call.
    pub fn new(grid: &Grid, t: f64, m: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        let mut s = Self::from_densities(t, m, n);
        s.assemble(grid)?;
        Ok(s)
    }

    pub fn is_fresh(&self) -> bool {
        self.fresh
    }

    /// Recomputes `u, v` by Helmholtz inversion, `ux, vx` by centred
    /// differences and `W, M` pointwise.
    pub fn assemble(&mut self, grid: &Grid) -> Result<()> {
        grid.check_len(&self.m)?;
        grid.check_len(&self.n)?;
        ensure_finite("m", &self.m)?;
        ensure_finite("n", &self.n)?;
        self.u = grid.helmholtz.solve(&self.m);
        self.v = grid.helmholtz.solve(&self.n);
        self.ux = grid.centered_unchecked(&self.u);
        self.vx = grid.centered_unchecked(&self.v);
        let len = self.m.len();
        self.transport.resize(len, 0.0);
        self.slope.resize(len, 0.0);
        for j in 0..len {
            let (u, v, ux, vx) = (self.u[j], self.v[j], self.ux[j], self.vx[j]);
            let (m, n) = (self.m[j], self.n[j]);
            self.transport[j] = transport_velocity(u, v, ux, vx);
            self.slope[j] = slope_field(u, v, ux, vx, m, n);
        }
        ensure_finite("W", &self.transport)?;
        ensure_finite("M", &self.slope)?;
        self.fresh = true;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Free-function form of the derived-field assembly.
pub fn assemble_derived(state: &FieldState, grid: &Grid) -> Result<FieldState> {
    let mut s = state.clone();
    s.assemble(grid)?;
    Ok(s)
}

#[inline]
pub fn transport_velocity(u: f64, v: f64, ux: f64, vx: f64) -> f64 {
    (u * v - ux * vx) - (u * vx - ux * v)
}

#[inline]
pub fn slope_field(u: f64, v: f64, ux: f64, vx: f64, m: f64, n: f64) -> f64 {
    (ux * n + vx * m) + (u * n - v * m)
}
