//! Uniform 1D grids, sampled state fields and gain profiles.
//!
//! Only interior nodes are stored. The Dirichlet boundary values at `x_lo`
//! and `x_hi` are identically zero and never materialized. Norms use the
//! midpoint rule with weight `h` per interior node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    n_interior: usize,
    x_lo: f64,
    x_hi: f64,
    h: f64,
}

impl SpatialGrid {
    pub fn new(n_interior: usize, x_lo: f64, x_hi: f64) -> Result<Self> {
        if n_interior == 0 {
            return Err(Error::InvalidGrid("need at least one interior node".into()));
        }
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_hi <= x_lo {
            return Err(Error::InvalidGrid(format!(
                "degenerate interval ({x_lo}, {x_hi})"
            )));
        }
        let h = (x_hi - x_lo) / (n_interior as f64 + 1.0);
        Ok(Self {
            n_interior,
            x_lo,
            x_hi,
            h,
        })
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    /// Mesh width.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    /// Position of the interior node with zero-based index `i`.
    pub fn node(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 1.0) * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_interior).map(move |i| self.node(i))
    }

    pub fn is_unit_interval(&self) -> bool {
        self.x_lo == 0.0 && self.x_hi == 1.0
    }
}

pub fn build_grid(n_interior: usize, x_lo: f64, x_hi: f64) -> Result<SpatialGrid> {
    SpatialGrid::new(n_interior, x_lo, x_hi)
}

/// Values of the state on the interior nodes of a grid. Every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: SpatialGrid,
    values: Vec<f64>,
}

impl StateField {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior() {
            return Err(Error::LengthMismatch {
                expected: grid.n_interior(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Skips validation; callers guarantee the length matches.
    pub(crate) fn from_raw(grid: SpatialGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_interior());
        Self { grid, values }
    }

    pub fn zeros(grid: SpatialGrid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.n_interior()])
    }

    pub fn from_fn(grid: SpatialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    /// `sqrt(h * sum(y_i^2))`.
    pub fn norm_l2(&self) -> f64 {
        (self.grid.h() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Discrete inner product `h * sum(y_i z_i)`.
    pub fn inner(&self, other: &StateField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.grid.h()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }

    pub fn scaled(&self, factor: f64) -> StateField {
        Self::from_raw(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> StateField {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// How a gain profile is about to be used, which fixes the admissible sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainRole {
    /// Sign feedback divides by `a`; any nonzero value is allowed.
    SignFeedback,
    /// The fractional-power feedback takes `sqrt(a)`; `a` must be positive.
    Nonlinear,
}

/// Control-channel weight `a(x)` sampled on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GainProfile {
    values: Vec<f64>,
    inf_bound: f64,
    analytic_inf: Option<f64>,
}

impl GainProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProfile("empty profile".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite sample".into()));
        }
        let inf_bound = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            values,
            inf_bound,
            analytic_inf: None,
        })
    }

    pub fn constant(grid: &SpatialGrid, value: f64) -> Result<Self> {
        Self::new(vec![value; grid.n_interior()])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Minimum over the nodes.
    pub fn inf_bound(&self) -> f64 {
        self.inf_bound
    }

    /// Infimum over the whole interval when the profile came from a closed form.
    pub fn analytic_inf(&self) -> Option<f64> {
        self.analytic_inf
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_role(&self, role: GainRole) -> Result<()> {
        match role {
            GainRole::SignFeedback => {
                if let Some(i) = self.values.iter().position(|&v| v == 0.0) {
                    return Err(Error::InvalidProfile(format!(
                        "sign feedback divides by a(x), but a = 0 at node {i}"
                    )));
                }
            }
            GainRole::Nonlinear => {
                if let Some(i) = self.values.iter().position(|&v| v <= 0.0) {
                    return Err(Error::InvalidProfile(format!(
                        "nonlinear feedback needs a(x) > 0, got {} at node {i}",
                        self.values[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Description of a gain profile as it appears in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    /// `a(x) = x^2 + offset`.
    QuadraticPlus {
        #[serde(default = "default_quadratic_offset")]
        offset: f64,
    },
    Constant {
        #[serde(default = "default_constant_gain")]
        value: f64,
    },
    /// Explicit node samples, one per interior node.
    Samples { values: Vec<f64> },
}

fn default_quadratic_offset() -> f64 {
    0.01
}

fn default_constant_gain() -> f64 {
    1.0
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Constant { value: 1.0 }
    }
}

pub fn sample_profile(
    spec: &ProfileSpec,
    grid: &SpatialGrid,
    role: GainRole,
) -> Result<GainProfile> {
    let profile = match spec {
        ProfileSpec::QuadraticPlus { offset } => {
            let mut p = GainProfile::new(grid.nodes().map(|x| x * x + offset).collect())?;
            let (lo, hi) = (grid.x_lo(), grid.x_hi());
            let min_sq = if lo <= 0.0 && hi >= 0.0 {
                0.0
            } else {
                (lo * lo).min(hi * hi)
            };
            p.analytic_inf = Some(min_sq + offset);
            p
        }
        ProfileSpec::Constant { value } => {
            let mut p = GainProfile::constant(grid, *value)?;
            p.analytic_inf = Some(*value);
            p
        }
        ProfileSpec::Samples { values } => {
            if values.len() != grid.n_interior() {
                return Err(Error::LengthMismatch {
                    expected: grid.n_interior(),
                    got: values.len(),
                });
            }
            GainProfile::new(values.clone())?
        }
    };
    profile.check_role(role)?;
    Ok(profile)
}
