//! Feedback laws and disturbance signals.
//!
//! The control channel acts through multiplication by `sqrt(a)`, which is
//! self-adjoint, so `B` and `B*` coincide and `B B* y = a y`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GainProfile, StateField};

/// Choice of controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlSpec {
    /// `u = -(rho / a) sign(y)`, switched on for `t > theta`.
    Sign {
        rho: f64,
        #[serde(default)]
        theta: f64,
    },
    /// `u = -|B* y|^(-mu) B* y`, zero when `|B* y| <= zero_tol`.
    Nonlinear {
        mu: f64,
        /// Include the dissipative reaction term `f(y) y` of the heat model.
        #[serde(default = "default_true")]
        reaction: bool,
        /// Filled from the domain length when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        zero_tol: Option<f64>,
    },
    OpenLoop,
}

fn default_true() -> bool {
    true
}

/// Default threshold below which `|B* y|` counts as zero.
pub fn default_zero_tol(domain_length: f64) -> f64 {
    1e-14 * domain_length
}

impl ControlSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ControlSpec::Sign { rho, theta } => {
                if !(rho > 0.0 && rho.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "sign feedback gain rho must be positive, got {rho}"
                    )));
                }
                if !(theta >= 0.0 && theta.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "activation delay theta must be nonnegative, got {theta}"
                    )));
                }
            }
            ControlSpec::Nonlinear { mu, zero_tol, .. } => {
                check_mu(mu)?;
                if let Some(tol) = zero_tol {
                    if !(tol >= 0.0 && tol.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "zero_tol must be nonnegative, got {tol}"
                        )));
                    }
                }
            }
            ControlSpec::OpenLoop => {}
        }
        Ok(())
    }
}

/// Spatially uniform disturbance signal `f(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    Constant {
        d: f64,
    },
    /// `amplitude * sin(2 pi frequency t + phase)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    #[default]
    Zero,
}

impl DisturbanceSpec {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            DisturbanceSpec::Constant { d } => d,
            DisturbanceSpec::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (2.0 * PI * frequency * t + phase).sin(),
            DisturbanceSpec::Zero => 0.0,
        }
    }

    /// `sup_t |f(t)|`.
    pub fn sup_bound(&self) -> f64 {
        match *self {
            DisturbanceSpec::Constant { d } => d.abs(),
            DisturbanceSpec::Sinusoid { amplitude, .. } => amplitude.abs(),
            DisturbanceSpec::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup_bound() == 0.0
    }
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "mu must lie in (0, 1), got {mu}"
        )))
    }
}

fn check_lengths(y: &StateField, a: &GainProfile) -> Result<()> {
    if y.values().len() != a.len() {
        return Err(Error::LengthMismatch {
            expected: y.values().len(),
            got: a.len(),
        });
    }
    Ok(())
}

fn check_positive(a: &GainProfile) -> Result<()> {
    if a.inf_bound() <= 0.0 {
        return Err(Error::InvalidProfile(format!(
            "gain must be positive, minimum is {}",
            a.inf_bound()
        )));
    }
    Ok(())
}

/// Explicit evaluation of `-(rho/a) sign(y)` with `sign(0) := 0`.
///
/// Diagnostic only: the time steppers never sample the sign directly.
pub fn sign_gain_control(y: &StateField, a: &GainProfile, rho: f64) -> Result<StateField> {
    check_lengths(y, a)?;
    if a.values().contains(&0.0) {
        return Err(Error::InvalidProfile("a(x) vanishes at a node".into()));
    }
    let u = y
        .values()
        .iter()
        .zip(a.values())
        .map(|(&yi, &ai)| {
            let s = if yi > 0.0 {
                1.0
            } else if yi < 0.0 {
                -1.0
            } else {
                0.0
            };
            -rho / ai * s
        })
        .collect();
    Ok(StateField::from_raw(*y.grid(), u))
}

/// Two-phase activation: the control is off on `[0, theta]` and on afterwards.
pub fn delayed_gate(t: f64, theta: f64) -> bool {
    t > theta
}

/// `(B* y)_i = sqrt(a_i) y_i`.
pub fn b_star(y: &StateField, a: &GainProfile) -> Result<StateField> {
    check_lengths(y, a)?;
    check_positive(a)?;
    let out = y
        .values()
        .iter()
        .zip(a.values())
        .map(|(yi, ai)| ai.sqrt() * yi)
        .collect();
    Ok(StateField::from_raw(*y.grid(), out))
}

/// `|B* y|` in the discrete L2 norm.
pub fn b_star_norm(y: &StateField, a: &GainProfile) -> Result<f64> {
    check_lengths(y, a)?;
    check_positive(a)?;
    Ok(weighted_norm(y.values(), a.values(), y.grid().h()))
}

pub(crate) fn weighted_norm(y: &[f64], a: &[f64], h: f64) -> f64 {
    (h * y.iter().zip(a).map(|(yi, ai)| ai * yi * yi).sum::<f64>()).sqrt()
}

/// Fractional-power feedback `u = -s^(-mu) sqrt(a) y` with `s = |B* y|`.
///
/// Evaluated as `s^(1-mu)` times the unit vector `-sqrt(a) y / s`, so the
/// magnitude `s^(1-mu)` goes to zero with the state.
pub fn nonlinear_control(
    y: &StateField,
    a: &GainProfile,
    mu: f64,
    zero_tol: f64,
) -> Result<StateField> {
    check_mu(mu)?;
    let bs = b_star(y, a)?;
    let s = bs.norm_l2();
    if s <= zero_tol {
        return Ok(StateField::zeros(*y.grid()));
    }
    let magnitude = s.powf(1.0 - mu);
    Ok(bs.map(|v| -magnitude * (v / s)))
}

/// `G(y) = s^(-mu) a y`, zero when `s <= zero_tol`.
pub fn g_operator(y: &StateField, a: &GainProfile, mu: f64, zero_tol: f64) -> Result<StateField> {
    check_mu(mu)?;
    let s = b_star_norm(y, a)?;
    if s <= zero_tol {
        return Ok(StateField::zeros(*y.grid()));
    }
    let coef = s.powf(-mu);
    let out = y
        .values()
        .iter()
        .zip(a.values())
        .map(|(yi, ai)| coef * ai * yi)
        .collect();
    Ok(StateField::from_raw(*y.grid(), out))
}

/// Scalar factor `-s^(-mu) / (1 + s^2)` of the heat model's reaction term.
///
/// The reaction contribution at node `i` is this factor times `a_i y_i`.
pub fn reaction_f(y: &StateField, a: &GainProfile, mu: f64, zero_tol: f64) -> Result<f64> {
    check_mu(mu)?;
    let s = b_star_norm(y, a)?;
    Ok(reaction_scalar(s, mu, zero_tol))
}

pub(crate) fn reaction_scalar(s: f64, mu: f64, zero_tol: f64) -> f64 {
    if s <= zero_tol {
        0.0
    } else {
        -s.powf(-mu) / (1.0 + s * s)
    }
}

/// Reaction term `f(y) y` assembled on the nodes.
pub fn reaction_term(
    y: &StateField,
    a: &GainProfile,
    mu: f64,
    zero_tol: f64,
) -> Result<StateField> {
    let scalar = reaction_f(y, a, mu, zero_tol)?;
    let out = y
        .values()
        .iter()
        .zip(a.values())
        .map(|(yi, ai)| scalar * ai * yi)
        .collect();
    Ok(StateField::from_raw(*y.grid(), out))
}
