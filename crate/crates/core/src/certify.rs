//! Settling-time bounds and trajectory certificates.
//!
//! * Sign feedback, active from `t = 0`: `T <= |y0|_inf / (rho - sup|f|)`.
//! * Sign feedback switched on after `theta`: `T <= theta + |y(theta)|_inf / (rho - sup|f|)`.
//! * Fractional-power feedback: `T <= |y0|_2^mu / (beta^(1 - mu/2) mu)`.
//!
//! The sign bounds come from the comparison barrier
//! `|y(t, x)| <= max(|y0|_inf - (rho - sup|f|) t, 0)`; the last one from the
//! Lyapunov envelope `V(t)^(mu/2) <= V(0)^(mu/2) - beta^(1 - mu/2) mu t`
//! with `V = |y|_2^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{check_mu, ControlSpec};
use crate::field::GainProfile;
use crate::simulate::{TrajectoryRecord, TrajectorySeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Sign feedback active from the start.
    SignImmediate,
    /// Sign feedback switched on after an open-loop phase.
    SignDelayed,
    /// Fractional-power feedback.
    FractionalPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub t_bound: f64,
    pub t_numeric: Option<f64>,
    pub satisfied: bool,
    /// `t_bound - t_numeric`.
    pub margin: Option<f64>,
}

impl BoundReport {
    pub fn new(kind: BoundKind, t_bound: f64, t_numeric: Option<f64>) -> Self {
        Self {
            kind,
            t_bound,
            t_numeric,
            satisfied: t_numeric.is_some_and(|t| t <= t_bound),
            margin: t_numeric.map(|t| t_bound - t),
        }
    }
}

fn check_gain_margin(rho: f64, f_inf: f64) -> Result<()> {
    if !(f_inf >= 0.0) || rho <= f_inf {
        return Err(Error::Hypothesis(format!(
            "rho must exceed the disturbance sup bound (rho = {rho}, sup|f| = {f_inf})"
        )));
    }
    Ok(())
}

pub fn bound_sign(y0_inf: f64, rho: f64, f_inf: f64) -> Result<f64> {
    check_gain_margin(rho, f_inf)?;
    if !(y0_inf >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "|y0|_inf must be nonnegative, got {y0_inf}"
        )));
    }
    Ok(y0_inf / (rho - f_inf))
}

/// `y_theta_inf` is the sup-norm of the simulated state at `t = theta`.
pub fn bound_sign_delayed(theta: f64, y_theta_inf: f64, rho: f64, f_inf: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "theta must be positive, got {theta}"
        )));
    }
    Ok(theta + bound_sign(y_theta_inf, rho, f_inf)?)
}

pub fn bound_fractional(y0_l2: f64, beta: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if !(beta > 0.0) {
        return Err(Error::Hypothesis(format!(
            "coercivity constant beta must be positive, got {beta}"
        )));
    }
    Ok(y0_l2.powf(mu) / (beta.powf(1.0 - mu / 2.0) * mu))
}

/// Coercivity constant of `B B* = a`: the analytic infimum when the profile
/// came from a closed form, the node minimum otherwise.
pub fn beta_from_profile(a: &GainProfile) -> Result<f64> {
    let beta = a.analytic_inf().unwrap_or(a.inf_bound());
    if !(beta > 0.0) {
        return Err(Error::Hypothesis(format!(
            "gain infimum must be positive, got {beta}"
        )));
    }
    Ok(beta)
}

/// Earliest recorded time from which `norm_l2 <= tol` holds through the last
/// record. With `tol = 0` this is the first time the state is exactly zero
/// and stays there.
pub fn detect_settling(series: &TrajectorySeries, tol: f64) -> Option<f64> {
    let last_outside = series.norm_l2.iter().rposition(|&n| n > tol);
    let first_inside = match last_outside {
        None => 0,
        Some(i) => i + 1,
    };
    series.times.get(first_inside).copied()
}

/// Smallest gap between the comparison barrier and the recorded sup-norm.
/// Nonnegative means `|y(t, x)| <= max(y0_inf - (rho - f_inf) t, 0)` at every record.
pub fn barrier_margin(times: &[f64], norm_linf: &[f64], rho: f64, f_inf: f64, y0_inf: f64) -> f64 {
    times
        .iter()
        .zip(norm_linf)
        .map(|(&t, &n)| (y0_inf - (rho - f_inf) * t).max(0.0) - n)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub passed: bool,
    /// Largest value of `V(t)^(mu/2) - envelope(t)`; negative means slack.
    pub worst_violation: f64,
    pub slack: f64,
}

/// Checks `V(t)^(mu/2) <= V(0)^(mu/2) - beta^(1 - mu/2) mu t + eps` at every
/// record up to settling, with `eps = 1e-6 + 10 dt`.
pub fn lyapunov_envelope_check(
    series: &TrajectorySeries,
    dt: f64,
    beta: f64,
    mu: f64,
) -> EnvelopeCheck {
    let slack = 1e-6 + 10.0 * dt;
    let Some(&v0) = series.v.first() else {
        return EnvelopeCheck {
            passed: true,
            worst_violation: f64::NEG_INFINITY,
            slack,
        };
    };
    let rate = beta.powf(1.0 - mu / 2.0) * mu;
    let w0 = v0.powf(mu / 2.0);
    let mut worst = f64::NEG_INFINITY;
    for (&t, &v) in series.times.iter().zip(&series.v) {
        if v == 0.0 {
            break;
        }
        worst = worst.max(v.powf(mu / 2.0) - (w0 - rate * t));
    }
    EnvelopeCheck {
        passed: worst <= slack,
        worst_violation: worst,
        slack,
    }
}

/// Bound reports for every settling result that applies to the run.
pub fn bound_reports(record: &TrajectoryRecord) -> Result<Vec<BoundReport>> {
    let cfg = &record.config;
    let f_inf = cfg.disturbance.sup_bound();
    let mut reports = Vec::new();
    match cfg.control {
        ControlSpec::Sign { rho, theta } => {
            if theta == 0.0 {
                let bound = bound_sign(record.initial_state.norm_linf(), rho, f_inf)?;
                reports.push(BoundReport::new(
                    BoundKind::SignImmediate,
                    bound,
                    record.settled_at,
                ));
            } else if let Some(gate) = record.gate_open {
                let bound = bound_sign_delayed(theta, gate.linf, rho, f_inf)?;
                reports.push(BoundReport::new(
                    BoundKind::SignDelayed,
                    bound,
                    record.settled_at,
                ));
            }
        }
        ControlSpec::Nonlinear { mu, .. } => {
            let beta = beta_from_profile(&cfg.gain_profile()?)?;
            let bound = bound_fractional(record.initial_state.norm_l2(), beta, mu)?;
            reports.push(BoundReport::new(
                BoundKind::FractionalPower,
                bound,
                record.settled_at,
            ));
        }
        ControlSpec::OpenLoop => {}
    }
    Ok(reports)
}
