//! Runs a configured closed loop and records norms, control effort and
//! state snapshots.

use serde::{Deserialize, Serialize};

use crate::certify::detect_settling;
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::feedback::{nonlinear_control, sign_gain_control, ControlSpec};
use crate::field::StateField;
use crate::stepper::{LinearPart, NonlinearClosedLoop, SignClosedLoop};

/// Aligned per-record series. `v` is the Lyapunov value `|y|_2^2`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySeries {
    pub times: Vec<f64>,
    pub norm_l2: Vec<f64>,
    pub norm_linf: Vec<f64>,
    pub v: Vec<f64>,
    pub control_l2: Vec<f64>,
    /// State is the exact zero vector.
    pub settled: Vec<bool>,
}

impl TrajectorySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, y: &StateField, control_l2: f64) {
        let l2 = y.norm_l2();
        self.times.push(t);
        self.norm_l2.push(l2);
        self.norm_linf.push(y.norm_linf());
        self.v.push(l2 * l2);
        self.control_l2.push(control_l2);
        self.settled.push(y.is_zero());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
}

/// State sup-norm at the last instant before a delayed sign feedback engages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateSample {
    pub t: f64,
    pub linf: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub series: TrajectorySeries,
    pub settled_at: Option<f64>,
    pub gate_open: Option<GateSample>,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub initial_state: StateField,
    pub final_state: StateField,
    pub config: SimConfig,
}

enum Loop {
    Open(LinearPart),
    Sign(SignClosedLoop),
    Nonlinear(NonlinearClosedLoop),
}

/// Tolerance used to decide settling from the recorded norms.
pub fn settle_tolerance(config: &SimConfig) -> f64 {
    match config.control {
        ControlSpec::Nonlinear { .. } => config.time.settle_tol,
        _ => 0.0,
    }
}

pub fn simulate(config: &SimConfig) -> Result<TrajectoryRecord> {
    config.validate()?;
    let grid = config.grid()?;
    let dt = config.time.dt;
    let gain = config.gain_profile()?;
    let y0 = config.initial_state()?;
    let linear = LinearPart::new(
        grid,
        dt,
        config.grid.diffusion,
        config.disturbance.signal.clone(),
        config.disturbance.shape.clone(),
    )?;
    let sup_f = linear.disturbance_sup();

    let lp = match config.control {
        ControlSpec::OpenLoop => Loop::Open(linear),
        ControlSpec::Sign { rho, theta } => {
            Loop::Sign(SignClosedLoop::new(linear, gain.clone(), rho, theta)?)
        }
        ControlSpec::Nonlinear { mu, reaction, .. } => Loop::Nonlinear(NonlinearClosedLoop::new(
            grid,
            dt,
            config.grid.diffusion,
            gain.clone(),
            mu,
            config.zero_tol(),
            reaction,
            config.time.settle_tol,
        )?),
    };

    let n_steps = (config.time.t_end / dt).round().max(1.0) as usize;
    let mut snapshot_times = config.output.snapshot_times.iter().copied().peekable();
    let mut snapshots = Vec::new();
    let mut series = TrajectorySeries::default();
    let mut gate_open = None;

    let initial_control = match &lp {
        Loop::Sign(s) if s.theta() == 0.0 => sign_gain_control(&y0, &gain, s.rho())?.norm_l2(),
        Loop::Nonlinear(nl) => nonlinear_control(&y0, &gain, nl.mu(), nl.zero_tol())?.norm_l2(),
        _ => 0.0,
    };
    series.push(0.0, &y0, initial_control);
    take_snapshots(&mut snapshot_times, &mut snapshots, 0.0, dt, &y0);

    let mut y = y0.clone();
    let mut steps = 0;
    let already_settled =
        config.time.stop_when_settled && origin_is_invariant(&lp, &y0, 0.0, sup_f);
    for k in (0..n_steps).take_while(|_| !already_settled) {
        let t = k as f64 * dt;
        let t_next = (k + 1) as f64 * dt;
        let (next, control_l2) = match &lp {
            Loop::Open(lin) => (lin.step(&y, t), 0.0),
            Loop::Sign(s) => {
                if gate_open.is_none() && s.theta() > 0.0 && s.active_on_step_to(t_next) {
                    gate_open = Some(GateSample {
                        t,
                        linf: y.norm_linf(),
                    });
                }
                let out = s.step_between(&y, t, t_next);
                (out.state, out.control_l2)
            }
            Loop::Nonlinear(nl) => {
                let next = nl.step_at(&y, t)?;
                let u = nonlinear_control(&next, &gain, nl.mu(), nl.zero_tol())?.norm_l2();
                (next, u)
            }
        };
        if let Some(index) = next.first_non_finite() {
            return Err(Error::NumericalAbort {
                step: k + 1,
                reason: format!("non-finite state at node {index}"),
            });
        }
        y = next;
        steps = k + 1;

        let done = config.time.stop_when_settled && origin_is_invariant(&lp, &y, t_next, sup_f);
        if (k + 1) % config.time.record_every == 0 || k + 1 == n_steps || done {
            series.push(t_next, &y, control_l2);
        }
        take_snapshots(&mut snapshot_times, &mut snapshots, t_next, dt, &y);
        if done {
            break;
        }
    }
    // Anything requested past an early stop sits at the invariant origin.
    for t in snapshot_times {
        snapshots.push(Snapshot {
            t,
            values: vec![0.0; grid.n_interior()],
        });
    }

    let settled_at = detect_settling(&series, settle_tolerance(config));
    Ok(TrajectoryRecord {
        series,
        settled_at,
        gate_open,
        snapshots,
        steps,
        initial_state: y0,
        final_state: y,
        config: config.clone(),
    })
}

fn take_snapshots(
    pending: &mut std::iter::Peekable<impl Iterator<Item = f64>>,
    out: &mut Vec<Snapshot>,
    t: f64,
    dt: f64,
    y: &StateField,
) {
    while let Some(&ts) = pending.peek() {
        if ts > t + 0.5 * dt {
            break;
        }
        out.push(Snapshot {
            t,
            values: y.values().to_vec(),
        });
        pending.next();
    }
}

/// True when `y = 0` and every later step provably keeps it there.
fn origin_is_invariant(lp: &Loop, y: &StateField, t: f64, sup_f: f64) -> bool {
    if !y.is_zero() {
        return false;
    }
    match lp {
        Loop::Open(_) | Loop::Nonlinear(_) => sup_f == 0.0,
        Loop::Sign(s) => {
            sup_f == 0.0 || (s.active_on_step_to(t + s.linear().dt()) && sup_f < s.rho())
        }
    }
}
