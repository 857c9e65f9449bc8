//! Simulation configuration: a TOML document with the sections `grid`,
//! `time`, `control`, `disturbance`, `profile`, `initial` and `output`.
//!
//! Every section except `control` may be omitted. After [`SimConfig::from_toml_str`]
//! all defaults are filled in explicitly, so [`SimConfig::to_toml_string`]
//! echoes the complete effective configuration.

use serde::{Deserialize, Serialize};

use crate::diffusion::eigenmode;
use crate::error::{Error, Result};
use crate::feedback::{default_zero_tol, ControlSpec, DisturbanceSpec};
use crate::field::{sample_profile, GainProfile, GainRole, ProfileSpec, SpatialGrid, StateField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    /// `false` switches to the pure ODE system (no Laplacian).
    pub diffusion: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 200,
            x_lo: 0.0,
            x_hi: 1.0,
            diffusion: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    /// The fractional-power loop snaps to zero once `|y|_2 <= settle_tol`.
    pub settle_tol: f64,
    pub record_every: usize,
    /// Stop as soon as the origin is provably invariant for the rest of the run.
    pub stop_when_settled: bool,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_end: 5.0,
            settle_tol: 1e-12,
            record_every: 1,
            stop_when_settled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DisturbanceConfig {
    #[serde(flatten)]
    pub signal: DisturbanceSpec,
    /// Optional per-node multiplier; the signal is spatially uniform without it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<f64>>,
}

impl DisturbanceConfig {
    pub fn sup_bound(&self) -> f64 {
        let scale = self
            .shape
            .as_ref()
            .map_or(1.0, |s| s.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        self.signal.sup_bound() * scale
    }
}

/// Initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    /// `5 x (1 - x)`.
    #[default]
    Parabola5,
    /// `amplitude * sqrt(2) sin(j pi x)` on `(0, 1)`.
    Mode {
        j: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Single-node spike of unit discrete L2 norm at the node nearest `center`.
    Spike {
        #[serde(default = "half")]
        center: f64,
    },
    /// Constant value on every node (useful in pure ODE mode).
    Constant {
        value: f64,
    },
    Samples {
        values: Vec<f64>,
    },
    Zero,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl InitialSpec {
    pub fn build(&self, grid: &SpatialGrid) -> Result<StateField> {
        match self {
            InitialSpec::Parabola5 => StateField::from_fn(*grid, |x| 5.0 * x * (1.0 - x)),
            InitialSpec::Mode { j, amplitude } => Ok(eigenmode(*j, grid)?.1.scaled(*amplitude)),
            InitialSpec::Spike { center } => {
                let h = grid.h();
                let idx = ((center - grid.x_lo()) / h - 1.0).round();
                let idx = idx.clamp(0.0, (grid.n_interior() - 1) as f64) as usize;
                let mut v = vec![0.0; grid.n_interior()];
                v[idx] = 1.0 / h.sqrt();
                StateField::new(*grid, v)
            }
            InitialSpec::Constant { value } => StateField::from_fn(*grid, |_| *value),
            InitialSpec::Samples { values } => StateField::new(*grid, values.clone()),
            InitialSpec::Zero => Ok(StateField::zeros(*grid)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Times at which full state profiles are written to `snapshots.csv`.
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    pub control: ControlSpec,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub profile: ProfileSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub output: OutputConfig,
}

impl SimConfig {
    pub fn new(control: ControlSpec) -> Self {
        Self {
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            control,
            disturbance: DisturbanceConfig::default(),
            profile: ProfileSpec::default(),
            initial: InitialSpec::default(),
            output: OutputConfig::default(),
        }
    }

    /// Parses, fills defaults and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Makes implicit defaults explicit so the echoed config is complete.
    pub fn fill_defaults(&mut self) {
        let len = self.grid.x_hi - self.grid.x_lo;
        if let ControlSpec::Nonlinear { zero_tol, .. } = &mut self.control {
            if zero_tol.is_none() {
                *zero_tol = Some(default_zero_tol(len));
            }
        }
        self.output.snapshot_times.sort_by(f64::total_cmp);
    }

    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.grid.n, self.grid.x_lo, self.grid.x_hi)
    }

    pub fn gain_role(&self) -> GainRole {
        match self.control {
            ControlSpec::Nonlinear { .. } => GainRole::Nonlinear,
            _ => GainRole::SignFeedback,
        }
    }

    pub fn gain_profile(&self) -> Result<GainProfile> {
        sample_profile(&self.profile, &self.grid()?, self.gain_role())
    }

    pub fn initial_state(&self) -> Result<StateField> {
        self.initial.build(&self.grid()?)
    }

    pub fn zero_tol(&self) -> f64 {
        match self.control {
            ControlSpec::Nonlinear {
                zero_tol: Some(t), ..
            } => t,
            _ => default_zero_tol(self.grid.x_hi - self.grid.x_lo),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(Error::Config(format!(
                "time.dt must be positive, got {}",
                t.dt
            )));
        }
        if !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return Err(Error::Config(format!(
                "time.t_end must be positive, got {}",
                t.t_end
            )));
        }
        if !(t.settle_tol > 0.0) {
            return Err(Error::Config(format!(
                "time.settle_tol must be positive, got {}",
                t.settle_tol
            )));
        }
        if t.record_every == 0 {
            return Err(Error::Config("time.record_every must be at least 1".into()));
        }
        self.control.validate()?;
        if let Some(shape) = &self.disturbance.shape {
            if shape.len() != grid.n_interior() {
                return Err(Error::Config(format!(
                    "disturbance.shape has {} entries, grid has {} interior nodes",
                    shape.len(),
                    grid.n_interior()
                )));
            }
        }
        match self.control {
            ControlSpec::Sign { rho, .. } => {
                let sup = self.disturbance.sup_bound();
                if rho <= sup {
                    return Err(Error::Hypothesis(format!(
                        "rho must exceed the disturbance sup bound for finite-time \
                         sign feedback (rho = {rho}, sup|f| = {sup})"
                    )));
                }
            }
            ControlSpec::Nonlinear { .. } => {
                if !self.disturbance.signal.is_zero() {
                    return Err(Error::Config(
                        "the fractional-power loop is simulated without an external disturbance"
                            .into(),
                    ));
                }
            }
            ControlSpec::OpenLoop => {}
        }
        self.gain_profile()?;
        self.initial_state()?;
        if self
            .output
            .snapshot_times
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::Config(
                "snapshot times must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}
