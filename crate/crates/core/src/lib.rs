//! Finite-time stabilization of the 1D heat equation on a uniform grid.
//!
//! * [`field`]: grids, state vectors, discrete norms, gain profiles
//! * [`diffusion`]: 3-point Laplacian and backward-Euler solves
//! * [`feedback`]: sign and fractional-power feedback laws
//! * [`stepper`]: closed-loop time steppers and scalar references
//! * [`simulate`], [`certify`], [`bench`]: runs, settling-time bounds, output files

// Parameter checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod certify;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod feedback;
pub mod field;
pub mod simulate;
pub mod stepper;

pub use bench::{load_config, run_experiment, sweep_mu, RunSummary};
pub use certify::{BoundKind, BoundReport};
pub use config::{InitialSpec, SimConfig};
pub use error::{Error, Result};
pub use feedback::{ControlSpec, DisturbanceSpec};
pub use field::{build_grid, GainProfile, ProfileSpec, SpatialGrid, StateField};
pub use simulate::{simulate, TrajectoryRecord, TrajectorySeries};
