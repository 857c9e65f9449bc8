//! Time steppers for the closed loops, plus scalar closed-form references.
//!
//! Every step is a Lie splitting over `[t, t + dt]`:
//!
//! 1. the disturbance `f(t)` is added explicitly (left endpoint),
//! 2. the feedback acts (sign loop: after diffusion, as a proximal map;
//!    fractional-power loop: before diffusion, as an explicit update),
//! 3. diffusion is solved implicitly with backward Euler.
//!
//! The set-valued sign is never evaluated pointwise. Its resolvent
//! `(I + dt rho sign)^{-1}` is soft thresholding with threshold `dt rho`, which
//! maps small values to exactly zero and therefore reaches the origin in
//! finitely many steps without chattering.

use crate::diffusion::ImplicitDiffusionOp;
use crate::error::{Error, Result};
use crate::feedback::{check_mu, delayed_gate, weighted_norm, DisturbanceSpec};
use crate::field::{GainProfile, SpatialGrid, StateField};

/// Soft thresholding: `sgn(v) * max(|v| - tau, 0)`.
pub fn shrink(v: f64, tau: f64) -> f64 {
    let m = v.abs() - tau;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: StateField,
    /// The selection `w` with `w_i` in `sign(y_i)`, present while the sign
    /// feedback is active.
    pub selection: Option<StateField>,
    pub control_l2: f64,
}

/// Disturbance plus implicit diffusion: the part shared by every loop.
#[derive(Debug, Clone)]
pub struct LinearPart {
    grid: SpatialGrid,
    dt: f64,
    diffusion: Option<ImplicitDiffusionOp>,
    disturbance: DisturbanceSpec,
    shape: Option<Vec<f64>>,
}

impl LinearPart {
    /// `diffusion = false` gives the pure ODE system `y' = f(t) + feedback`.
    pub fn new(
        grid: SpatialGrid,
        dt: f64,
        diffusion: bool,
        disturbance: DisturbanceSpec,
        shape: Option<Vec<f64>>,
    ) -> Result<Self> {
        let op = ImplicitDiffusionOp::new(grid, dt)?;
        if let Some(s) = &shape {
            if s.len() != grid.n_interior() {
                return Err(Error::LengthMismatch {
                    expected: grid.n_interior(),
                    got: s.len(),
                });
            }
        }
        Ok(Self {
            grid,
            dt,
            diffusion: diffusion.then_some(op),
            disturbance,
            shape,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn disturbance(&self) -> &DisturbanceSpec {
        &self.disturbance
    }

    /// Upper bound on `|f(t) shape_i|` over all times and nodes.
    pub fn disturbance_sup(&self) -> f64 {
        let scale = self
            .shape
            .as_ref()
            .map_or(1.0, |s| s.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        self.disturbance.sup_bound() * scale
    }

    fn add_disturbance(&self, buf: &mut [f64], t: f64) {
        let f = self.disturbance.value(t);
        if f == 0.0 {
            return;
        }
        match &self.shape {
            Some(shape) => {
                for (v, s) in buf.iter_mut().zip(shape) {
                    *v += self.dt * f * s;
                }
            }
            None => {
                for v in buf.iter_mut() {
                    *v += self.dt * f;
                }
            }
        }
    }

    fn diffuse(&self, buf: &mut [f64]) {
        if let Some(op) = &self.diffusion {
            op.solve_in_place(buf);
        }
    }

    /// Open-loop step: `y -> (I - dt Lap)^{-1} (y + dt f(t))`.
    pub fn step(&self, y: &StateField, t: f64) -> StateField {
        let mut buf = y.values().to_vec();
        self.add_disturbance(&mut buf, t);
        self.diffuse(&mut buf);
        StateField::from_raw(self.grid, buf)
    }
}

/// Differential inclusion `y' - Lap y + rho sign(y) - f(t) ∋ 0`, with the
/// feedback off on `[0, theta]`.
#[derive(Debug, Clone)]
pub struct SignClosedLoop {
    linear: LinearPart,
    gain: GainProfile,
    rho: f64,
    theta: f64,
}

impl SignClosedLoop {
    pub fn new(linear: LinearPart, gain: GainProfile, rho: f64, theta: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rho must be positive, got {rho}"
            )));
        }
        if gain.len() != linear.grid.n_interior() {
            return Err(Error::LengthMismatch {
                expected: linear.grid.n_interior(),
                got: gain.len(),
            });
        }
        gain.check_role(crate::field::GainRole::SignFeedback)?;
        Ok(Self {
            linear,
            gain,
            rho,
            theta,
        })
    }

    pub fn linear(&self) -> &LinearPart {
        &self.linear
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Whether the step ending at `t_next` applies the feedback. The proximal
    /// substep is implicit, so the gate is read at the right endpoint.
    pub fn active_on_step_to(&self, t_next: f64) -> bool {
        delayed_gate(t_next, self.theta)
    }

    /// Advances from `t` to `t + dt`.
    pub fn step(&self, y: &StateField, t: f64) -> StepOutcome {
        self.step_between(y, t, t + self.linear.dt)
    }

    /// Like [`step`](Self::step) with the right endpoint given explicitly, so
    /// callers using `t_k = k dt` gate on exactly the same instants.
    pub fn step_between(&self, y: &StateField, t: f64, t_next: f64) -> StepOutcome {
        let dt = self.linear.dt;
        let mut buf = y.values().to_vec();
        self.linear.add_disturbance(&mut buf, t);
        self.linear.diffuse(&mut buf);
        if !self.active_on_step_to(t_next) {
            return StepOutcome {
                state: StateField::from_raw(self.linear.grid, buf),
                selection: None,
                control_l2: 0.0,
            };
        }
        let tau = dt * self.rho;
        let mut w = Vec::with_capacity(buf.len());
        for v in buf.iter_mut() {
            let pre = *v;
            let post = shrink(pre, tau);
            // Off zero the selection is the sign itself; at zero it is the
            // resolvent residual, which lies in [-1, 1].
            w.push(if post != 0.0 {
                post.signum()
            } else {
                pre / tau
            });
            *v = post;
        }
        let grid = self.linear.grid;
        // Matched gain: u = -(rho / a) w, so a u = -rho w for any a.
        let control_sq: f64 = w
            .iter()
            .zip(self.gain.values())
            .map(|(wi, ai)| {
                let u = self.rho / ai * wi;
                u * u
            })
            .sum();
        StepOutcome {
            state: StateField::from_raw(grid, buf),
            selection: Some(StateField::from_raw(grid, w)),
            control_l2: (grid.h() * control_sq).sqrt(),
        }
    }
}

/// Convenience wrapper building the loop for a single step with diffusion on
/// and the control weight `a = 1`.
pub fn step_sign_closed_loop(
    y: &StateField,
    t: f64,
    dt: f64,
    rho: f64,
    theta: f64,
    dist: &DisturbanceSpec,
) -> Result<StepOutcome> {
    let grid = *y.grid();
    let linear = LinearPart::new(grid, dt, true, dist.clone(), None)?;
    let lp = SignClosedLoop::new(linear, GainProfile::constant(&grid, 1.0)?, rho, theta)?;
    Ok(lp.step(y, t))
}

const MAX_HALVINGS: u32 = 40;
const MAX_SUBSTEPS: usize = 1_000_000;

/// Closed loop `y' = Lap y + f(y) y - |sqrt(a) y|^(-mu) a y`.
///
/// Reaction and feedback are advanced explicitly with a trapezoidal
/// predictor-corrector, then diffusion implicitly. A trial substep is
/// accepted only if no node changes sign or grows, which keeps `|y|_2`
/// nonincreasing; otherwise the substep is halved.
#[derive(Debug, Clone)]
pub struct NonlinearClosedLoop {
    grid: SpatialGrid,
    dt: f64,
    diffusion: Option<ImplicitDiffusionOp>,
    gain: GainProfile,
    gain_max: f64,
    mu: f64,
    zero_tol: f64,
    reaction: bool,
    settle_tol: f64,
}

impl NonlinearClosedLoop {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: SpatialGrid,
        dt: f64,
        diffusion: bool,
        gain: GainProfile,
        mu: f64,
        zero_tol: f64,
        reaction: bool,
        settle_tol: f64,
    ) -> Result<Self> {
        check_mu(mu)?;
        if gain.len() != grid.n_interior() {
            return Err(Error::LengthMismatch {
                expected: grid.n_interior(),
                got: gain.len(),
            });
        }
        gain.check_role(crate::field::GainRole::Nonlinear)?;
        let op = ImplicitDiffusionOp::new(grid, dt)?;
        Ok(Self {
            grid,
            dt,
            diffusion: diffusion.then_some(op),
            gain_max: gain.max(),
            gain,
            mu,
            zero_tol,
            reaction,
            settle_tol,
        })
    }

    pub fn gain(&self) -> &GainProfile {
        &self.gain
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero_tol
    }

    /// Coefficient `k(y) <= 0` such that reaction plus feedback equals `k a y`.
    fn coefficient(&self, y: &[f64]) -> f64 {
        let s = weighted_norm(y, self.gain.values(), self.grid.h());
        if s <= self.zero_tol {
            return 0.0;
        }
        let c = s.powf(-self.mu);
        if self.reaction {
            -c - c / (1.0 + s * s)
        } else {
            -c
        }
    }

    fn advance_feedback(&self, y: &mut [f64], t: f64) -> Result<()> {
        let a = self.gain.values();
        let mut pred = vec![0.0; y.len()];
        let mut factors = vec![0.0; y.len()];
        let mut remaining = self.dt;
        let mut trial = self.dt;
        let mut substeps = 0;
        while remaining > 0.0 {
            let k0 = self.coefficient(y);
            if k0 == 0.0 {
                break;
            }
            let mut h = trial.min(remaining);
            let mut halvings = 0;
            loop {
                if 1.0 + h * k0 * self.gain_max >= 0.0 {
                    for ((p, yi), ai) in pred.iter_mut().zip(y.iter()).zip(a) {
                        *p = yi * (1.0 + h * k0 * ai);
                    }
                    let k1 = self.coefficient(&pred);
                    let mut ok = true;
                    for (f, ai) in factors.iter_mut().zip(a) {
                        let p = 1.0 + h * k0 * ai;
                        *f = 1.0 + 0.5 * h * ai * (k0 + k1 * p);
                        ok &= *f >= 0.0;
                    }
                    if ok {
                        break;
                    }
                }
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    return Err(Error::StepRejected { t, halvings });
                }
                h *= 0.5;
            }
            for (yi, f) in y.iter_mut().zip(&factors) {
                *yi *= f;
            }
            remaining -= h;
            trial = 2.0 * h;
            substeps += 1;
            if self.l2(y) <= self.settle_tol {
                y.fill(0.0);
                break;
            }
            if substeps >= MAX_SUBSTEPS {
                return Err(Error::StepRejected { t, halvings: 0 });
            }
        }
        Ok(())
    }

    fn l2(&self, y: &[f64]) -> f64 {
        (self.grid.h() * y.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Advances one step of length `dt`; `t` is only used in error reports.
    pub fn step_at(&self, y: &StateField, t: f64) -> Result<StateField> {
        if y.is_zero() {
            return Ok(y.clone());
        }
        let mut buf = y.values().to_vec();
        self.advance_feedback(&mut buf, t)?;
        if let Some(op) = &self.diffusion {
            op.solve_in_place(&mut buf);
        }
        if self.l2(&buf) <= self.settle_tol {
            buf.fill(0.0);
        }
        Ok(StateField::from_raw(self.grid, buf))
    }

    pub fn step(&self, y: &StateField) -> Result<StateField> {
        self.step_at(y, f64::NAN)
    }
}

/// One step of the fractional-power loop with diffusion on and the default
/// snap tolerance `1e-12`.
pub fn step_nonlinear_closed_loop(
    y: &StateField,
    dt: f64,
    mu: f64,
    a: &GainProfile,
    zero_tol: f64,
    with_reaction: bool,
) -> Result<StateField> {
    NonlinearClosedLoop::new(
        *y.grid(),
        dt,
        true,
        a.clone(),
        mu,
        zero_tol,
        with_reaction,
        1e-12,
    )?
    .step(y)
}

/// Exact solution of `y' ∈ -rho sign(y) + d` for constant `|d| < rho`.
pub fn scalar_oracle_sign(y0: f64, rho: f64, d: f64, t: f64) -> Result<f64> {
    check_sign_oracle(rho, d)?;
    Ok(if y0 > 0.0 {
        (y0 - (rho - d) * t).max(0.0)
    } else if y0 < 0.0 {
        (y0 + (rho + d) * t).min(0.0)
    } else {
        0.0
    })
}

/// Settling time `|y0| / (rho - d sgn(y0))` of [`scalar_oracle_sign`].
pub fn scalar_sign_settling_time(y0: f64, rho: f64, d: f64) -> Result<f64> {
    check_sign_oracle(rho, d)?;
    if y0 == 0.0 {
        return Ok(0.0);
    }
    Ok(y0.abs() / (rho - d * y0.signum()))
}

fn check_sign_oracle(rho: f64, d: f64) -> Result<()> {
    if d.abs() >= rho {
        return Err(Error::Hypothesis(format!(
            "scalar sign dynamics need |d| < rho (got d = {d}, rho = {rho})"
        )));
    }
    Ok(())
}

/// Exact solution of `y' = -|y|^(-mu) y`: `|y(t)|^mu = max(|y0|^mu - mu t, 0)`.
pub fn scalar_oracle_nonlinear(y0: f64, mu: f64, t: f64) -> Result<f64> {
    check_mu(mu)?;
    if y0 == 0.0 {
        return Ok(0.0);
    }
    let w = (y0.abs().powf(mu) - mu * t).max(0.0);
    Ok(w.powf(1.0 / mu).copysign(y0))
}

/// Settling time `|y0|^mu / mu` of [`scalar_oracle_nonlinear`].
pub fn scalar_nonlinear_settling_time(y0: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    Ok(y0.abs().powf(mu) / mu)
}
