//! Browser bindings. Each export takes a JSON parameter object and returns a
//! JSON result (or a JSON `{"error": ...}` object). The plain functions
//! below the bindings do the work and are tested natively.

use fts_core::certify::{beta_from_profile, bound_fractional, bound_sign, bound_sign_delayed};
use fts_core::config::InitialSpec;
use fts_core::{simulate, ControlSpec, DisturbanceSpec, ProfileSpec, SimConfig, TrajectoryRecord};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Cap on plotted points per curve.
const MAX_POINTS: usize = 400;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SignParams {
    pub rho: f64,
    pub d: f64,
    pub theta: f64,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for SignParams {
    fn default() -> Self {
        Self {
            rho: 2.0,
            d: 0.5,
            theta: 0.0,
            n: 100,
            dt: 1e-4,
            t_end: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct NonlinearParams {
    pub mu: f64,
    pub reaction: bool,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for NonlinearParams {
    fn default() -> Self {
        Self {
            mu: 0.8,
            reaction: true,
            n: 100,
            dt: 1e-4,
            t_end: 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SweepParams {
    pub mus: Vec<f64>,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            mus: vec![0.2, 0.35, 0.5, 0.65, 0.8],
            n: 50,
            dt: 2e-4,
            t_end: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunView {
    pub t: Vec<f64>,
    pub norm_l2: Vec<f64>,
    pub norm_linf: Vec<f64>,
    pub control_l2: Vec<f64>,
    pub profiles: Vec<Profile>,
    pub settled_at: Option<f64>,
    pub t_bound: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub t_numeric: Option<f64>,
    pub t_bound: f64,
}

fn base_config(control: ControlSpec, n: usize, dt: f64, t_end: f64) -> SimConfig {
    let mut cfg = SimConfig::new(control);
    cfg.grid.n = n;
    cfg.time.dt = dt;
    cfg.time.t_end = t_end;
    cfg.initial = InitialSpec::Parabola5;
    cfg
}

fn with_snapshots(mut cfg: SimConfig, count: usize) -> SimConfig {
    let t_end = cfg.time.t_end;
    cfg.output.snapshot_times = (0..count)
        .map(|k| t_end * k as f64 / count as f64)
        .collect();
    cfg.time.record_every = ((t_end / cfg.time.dt) as usize / MAX_POINTS).max(1);
    cfg
}

fn view(rec: &TrajectoryRecord, t_bound: Option<f64>) -> fts_core::Result<RunView> {
    let grid = rec.config.grid()?;
    let mut x = vec![grid.x_lo()];
    x.extend(grid.nodes());
    x.push(grid.x_hi());
    let profiles = rec
        .snapshots
        .iter()
        .map(|s| {
            let mut y = Vec::with_capacity(x.len());
            y.push(0.0);
            y.extend_from_slice(&s.values);
            y.push(0.0);
            Profile {
                t: s.t,
                x: x.clone(),
                y,
            }
        })
        .collect();
    let s = &rec.series;
    Ok(RunView {
        t: s.times.clone(),
        norm_l2: s.norm_l2.clone(),
        norm_linf: s.norm_linf.clone(),
        control_l2: s.control_l2.clone(),
        profiles,
        settled_at: rec.settled_at,
        t_bound,
        steps: rec.steps,
    })
}

pub fn sign_run(p: &SignParams) -> fts_core::Result<RunView> {
    let mut cfg = base_config(
        ControlSpec::Sign {
            rho: p.rho,
            theta: p.theta,
        },
        p.n,
        p.dt,
        p.t_end,
    );
    cfg.disturbance.signal = DisturbanceSpec::Constant { d: p.d };
    let rec = simulate(&with_snapshots(cfg, 6))?;
    let f_inf = p.d.abs();
    let bound = match rec.gate_open {
        Some(g) => Some(bound_sign_delayed(p.theta, g.linf, p.rho, f_inf)?),
        None if p.theta == 0.0 => Some(bound_sign(rec.initial_state.norm_linf(), p.rho, f_inf)?),
        None => None,
    };
    view(&rec, bound)
}

fn nonlinear_config(mu: f64, reaction: bool, n: usize, dt: f64, t_end: f64) -> SimConfig {
    let mut cfg = base_config(
        ControlSpec::Nonlinear {
            mu,
            reaction,
            zero_tol: None,
        },
        n,
        dt,
        t_end,
    );
    cfg.profile = ProfileSpec::QuadraticPlus { offset: 0.01 };
    cfg.fill_defaults();
    cfg
}

pub fn nonlinear_run(p: &NonlinearParams) -> fts_core::Result<RunView> {
    let cfg = nonlinear_config(p.mu, p.reaction, p.n, p.dt, p.t_end);
    let rec = simulate(&with_snapshots(cfg, 6))?;
    let beta = beta_from_profile(&rec.config.gain_profile()?)?;
    let bound = bound_fractional(rec.initial_state.norm_l2(), beta, p.mu)?;
    view(&rec, Some(bound))
}

pub fn settling_sweep(p: &SweepParams) -> fts_core::Result<Vec<SweepPoint>> {
    p.mus
        .iter()
        .map(|&mu| {
            let mut cfg = nonlinear_config(mu, true, p.n, p.dt, p.t_end);
            cfg.time.record_every = 10;
            let rec = simulate(&cfg)?;
            let beta = beta_from_profile(&cfg.gain_profile()?)?;
            Ok(SweepPoint {
                mu,
                t_numeric: rec.settled_at,
                t_bound: bound_fractional(rec.initial_state.norm_l2(), beta, mu)?,
            })
        })
        .collect()
}

fn call<P, R>(params: &str, f: impl Fn(&P) -> fts_core::Result<R>) -> String
where
    P: for<'de> Deserialize<'de> + Default,
    R: Serialize,
{
    let parsed = if params.trim().is_empty() {
        Ok(P::default())
    } else {
        serde_json::from_str::<P>(params)
    };
    let out = match parsed {
        Ok(p) => f(&p).map_err(|e| e.to_string()),
        Err(e) => Err(format!("bad parameters: {e}")),
    };
    match out {
        Ok(r) => serde_json::to_string(&r).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(msg) => error_json(&msg),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen]
pub fn run_sign(params: &str) -> String {
    call(params, sign_run)
}

#[wasm_bindgen]
pub fn run_nonlinear(params: &str) -> String {
    call(params, nonlinear_run)
}

#[wasm_bindgen]
pub fn settling_vs_mu(params: &str) -> String {
    call(params, settling_sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_defaults_settle_within_bound() {
        let v = sign_run(&SignParams::default()).unwrap();
        let t = v.settled_at.unwrap();
        assert!(t <= v.t_bound.unwrap());
        assert!(v.t.len() <= MAX_POINTS + 2);
        assert_eq!(v.profiles[0].x.len(), 102);
        assert_eq!(v.profiles[0].y.first(), Some(&0.0));
    }

    #[test]
    fn delayed_sign_reports_bound() {
        let v = sign_run(&SignParams {
            theta: 0.1,
            ..SignParams::default()
        })
        .unwrap();
        assert!(v.settled_at.unwrap() > 0.1);
        assert!(v.settled_at.unwrap() <= v.t_bound.unwrap());
    }

    #[test]
    fn nonlinear_run_settles() {
        let v = nonlinear_run(&NonlinearParams::default()).unwrap();
        assert!(v.settled_at.unwrap() <= v.t_bound.unwrap());
    }

    #[test]
    fn sweep_is_faster_for_larger_mu() {
        let pts = settling_sweep(&SweepParams {
            mus: vec![0.2, 0.8],
            ..SweepParams::default()
        })
        .unwrap();
        assert!(pts[1].t_numeric.unwrap() < pts[0].t_numeric.unwrap());
    }

    #[test]
    fn json_wrappers() {
        let out = run_sign(r#"{"rho": 0.4, "d": 0.5}"#);
        assert!(out.contains("\"error\""), "{out}");
        assert!(out.contains("rho must exceed"));
        let out = run_sign("{not json");
        assert!(out.contains("bad parameters"));
        let out = settling_vs_mu(r#"{"mus": [0.5], "n": 20, "dt": 1e-3}"#);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v[0]["mu"], 0.5);
        assert!(v[0]["t_numeric"].is_number());
    }
}
