//! Dirichlet Laplacian on a uniform grid.
//!
//! The stencil is `(y[i-1] - 2 y[i] + y[i+1]) / h^2` with zero ghost values
//! outside the interior. The backward-Euler operator `I - dt * Lap` is a
//! symmetric M-matrix for every `dt > 0`, so its inverse is a contraction in
//! both the discrete L2 and max norms.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{SpatialGrid, StateField};

pub fn apply_laplacian(y: &StateField) -> StateField {
    let grid = *y.grid();
    let v = y.values();
    let n = v.len();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let out = (0..n)
        .map(|i| {
            let left = if i > 0 { v[i - 1] } else { 0.0 };
            let right = if i + 1 < n { v[i + 1] } else { 0.0 };
            (left - 2.0 * v[i] + right) * inv_h2
        })
        .collect();
    StateField::from_raw(grid, out)
}

/// Cached Thomas factorization of `I - dt * Lap` for one `(grid, dt)` pair.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusionOp {
    grid: SpatialGrid,
    dt: f64,
    /// `dt / h^2`; the off-diagonals are `-r`.
    r: f64,
    c_prime: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ImplicitDiffusionOp {
    pub fn new(grid: SpatialGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let n = grid.n_interior();
        let r = dt / (grid.h() * grid.h());
        let diag = 1.0 + 2.0 * r;
        let mut c_prime = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            // pivot = diag - (-r) * c'[i-1]
            let pivot = diag + r * prev_c;
            inv_pivot[i] = 1.0 / pivot;
            c_prime[i] = -r * inv_pivot[i];
            prev_c = c_prime[i];
        }
        Ok(Self {
            grid,
            dt,
            r,
            c_prime,
            inv_pivot,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Overwrites `buf` (the right-hand side) with the solution.
    pub fn solve_in_place(&self, buf: &mut [f64]) {
        let n = buf.len();
        assert_eq!(
            n,
            self.grid.n_interior(),
            "buffer length does not match grid"
        );
        let mut prev = 0.0;
        for (v, inv) in buf.iter_mut().zip(&self.inv_pivot) {
            *v = (*v + self.r * prev) * inv;
            prev = *v;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            buf[i] -= self.c_prime[i] * buf[i + 1];
        }
    }

    pub fn solve(&self, rhs: &StateField) -> Result<StateField> {
        if rhs.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let mut buf = rhs.values().to_vec();
        self.solve_in_place(&mut buf);
        Ok(StateField::from_raw(self.grid, buf))
    }

    /// `(I - dt * Lap) y`, used to check residuals.
    pub fn apply(&self, y: &StateField) -> StateField {
        let lap = apply_laplacian(y);
        let out = y
            .values()
            .iter()
            .zip(lap.values())
            .map(|(v, l)| v - self.dt * l)
            .collect();
        StateField::from_raw(self.grid, out)
    }
}

/// One backward-Euler step of the heat equation: solves `(I - dt Lap) y = rhs`.
pub fn solve_implicit_diffusion(rhs: &StateField, dt: f64) -> Result<StateField> {
    ImplicitDiffusionOp::new(*rhs.grid(), dt)?.solve(rhs)
}

/// Continuous eigenpair `(-(j pi)^2, sqrt(2) sin(j pi x))` of the Dirichlet
/// Laplacian on `(0, 1)`, sampled on the grid.
pub fn eigenmode(j: usize, grid: &SpatialGrid) -> Result<(f64, StateField)> {
    if !grid.is_unit_interval() {
        return Err(Error::InvalidParameter(format!(
            "eigenmodes are tabulated on (0, 1), grid spans ({}, {})",
            grid.x_lo(),
            grid.x_hi()
        )));
    }
    if j == 0 || j > grid.n_interior() {
        return Err(Error::InvalidParameter(format!(
            "mode index {j} outside 1..={}",
            grid.n_interior()
        )));
    }
    let k = j as f64 * PI;
    let mode = StateField::from_fn(*grid, |x| 2.0_f64.sqrt() * (k * x).sin())?;
    Ok((-k * k, mode))
}

/// Magnitude `(4/h^2) sin^2(j pi h / 2)` of the j-th eigenvalue of the
/// 3-point stencil on `(0, 1)`.
pub fn discrete_eigenvalue(j: usize, grid: &SpatialGrid) -> f64 {
    let h = grid.h();
    let s = (j as f64 * PI * h / 2.0).sin();
    4.0 / (h * h) * s * s
}
