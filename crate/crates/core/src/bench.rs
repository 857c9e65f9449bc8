//! Experiment orchestration and persistence.
//!
//! A run directory contains:
//!
//! * `trajectory.csv` with header `t,norm_l2,norm_linf,V,control_l2,settled`
//! * `snapshots.csv` with header `t,x,y` (boundary zeros included)
//! * `config.toml`, the echoed effective configuration
//! * `summary.json`, a [`RunSummary`]
//!
//! A sweep directory additionally holds `sweep.csv` with header
//! `mu,t_numeric,t_bound_thm4,satisfied` and one `mu_<value>` run directory
//! per entry. Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{
    barrier_margin, beta_from_profile, bound_fractional, bound_reports, lyapunov_envelope_check,
    BoundKind, BoundReport, EnvelopeCheck,
};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::feedback::ControlSpec;
use crate::simulate::{simulate, GateSample, TrajectoryRecord, TrajectorySeries};

pub const TRAJECTORY_HEADER: &str = "t,norm_l2,norm_linf,V,control_l2,settled";
pub const SNAPSHOT_HEADER: &str = "t,x,y";
pub const SWEEP_HEADER: &str = "mu,t_numeric,t_bound_thm4,satisfied";

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SimConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn config_hash(config: &SimConfig) -> String {
    hex::encode(Sha256::digest(config.to_toml_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub bounds: Vec<BoundReport>,
    pub wall_clock_s: f64,
    pub steps: usize,
    pub final_l2: f64,
    pub final_linf: f64,
    pub settled_at: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_open: Option<GateSample>,
    /// Comparison-barrier margin for sign feedback active from `t = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<EnvelopeCheck>,
}

impl RunSummary {
    pub fn all_bounds_satisfied(&self) -> bool {
        self.bounds.iter().all(|b| b.satisfied)
    }
}

pub fn summarize(record: &TrajectoryRecord, wall_clock_s: f64) -> Result<RunSummary> {
    let cfg = &record.config;
    let s = &record.series;
    let (barrier, lyapunov) = match cfg.control {
        ControlSpec::Sign { rho, theta: 0.0 } => (
            Some(barrier_margin(
                &s.times,
                &s.norm_linf,
                rho,
                cfg.disturbance.sup_bound(),
                record.initial_state.norm_linf(),
            )),
            None,
        ),
        ControlSpec::Nonlinear { mu, .. } => {
            let beta = beta_from_profile(&cfg.gain_profile()?)?;
            (
                None,
                Some(lyapunov_envelope_check(s, cfg.time.dt, beta, mu)),
            )
        }
        _ => (None, None),
    };
    Ok(RunSummary {
        config_hash: config_hash(cfg),
        bounds: bound_reports(record)?,
        wall_clock_s,
        steps: record.steps,
        final_l2: record.final_state.norm_l2(),
        final_linf: record.final_state.norm_linf(),
        settled_at: record.settled_at,
        gate_open: record.gate_open,
        barrier_margin: barrier,
        lyapunov,
    })
}

fn fmt_f(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").unwrap();
}

pub fn trajectory_csv(series: &TrajectorySeries) -> String {
    let mut out = String::with_capacity(series.len() * 120);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for i in 0..series.len() {
        for v in [
            series.times[i],
            series.norm_l2[i],
            series.norm_linf[i],
            series.v[i],
            series.control_l2[i],
        ] {
            fmt_f(&mut out, v);
            out.push(',');
        }
        out.push(if series.settled[i] { '1' } else { '0' });
        out.push('\n');
    }
    out
}

pub fn snapshots_csv(record: &TrajectoryRecord) -> Result<String> {
    let grid = record.config.grid()?;
    let mut out = String::from(SNAPSHOT_HEADER);
    out.push('\n');
    for snap in &record.snapshots {
        let boundary = [(grid.x_lo(), 0.0)];
        let interior = snap
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| (grid.node(i), v));
        let end = [(grid.x_hi(), 0.0)];
        for (x, y) in boundary.into_iter().chain(interior).chain(end) {
            fmt_f(&mut out, snap.t);
            out.push(',');
            fmt_f(&mut out, x);
            out.push(',');
            fmt_f(&mut out, y);
            out.push('\n');
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn emit_plot_data(record: &TrajectoryRecord, dir: &Path) -> Result<()> {
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(&record.series))?;
    write_file(&dir.join("snapshots.csv"), &snapshots_csv(record)?)
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<TrajectorySeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(Error::Config(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut s = TrajectorySeries::default();
    for (lineno, line) in lines.enumerate() {
        let bad = || Error::Config(format!("{}: malformed line {}", path.display(), lineno + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| cols[i].parse::<f64>().map_err(|_| bad());
        s.times.push(num(0)?);
        s.norm_l2.push(num(1)?);
        s.norm_linf.push(num(2)?);
        s.v.push(num(3)?);
        s.control_l2.push(num(4)?);
        s.settled.push(match cols[5] {
            "1" => true,
            "0" => false,
            _ => return Err(bad()),
        });
    }
    Ok(s)
}

/// Simulates `config` and writes the run directory `out_dir`.
pub fn run_experiment(
    config: &SimConfig,
    out_dir: impl AsRef<Path>,
) -> Result<(TrajectoryRecord, RunSummary)> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let start = Instant::now();
    let record = simulate(config)?;
    let summary = summarize(&record, start.elapsed().as_secs_f64())?;
    write_file(&out_dir.join("config.toml"), &config.to_toml_string())?;
    emit_plot_data(&record, out_dir)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out_dir.join("summary.json"), &json)?;
    Ok((record, summary))
}

#[derive(Debug)]
pub struct SweepRow {
    pub mu: f64,
    pub dir: PathBuf,
    pub outcome: Result<SweepResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub t_numeric: Option<f64>,
    pub t_bound: f64,
    pub satisfied: bool,
}

fn sweep_one(base: &SimConfig, mu: f64, dir: &Path) -> Result<SweepResult> {
    let mut cfg = base.clone();
    match &mut cfg.control {
        ControlSpec::Nonlinear { mu: m, .. } => *m = mu,
        _ => {
            return Err(Error::Config(
                "mu sweeps need a nonlinear control config".into(),
            ))
        }
    }
    cfg.validate()?;
    let (record, summary) = run_experiment(&cfg, dir)?;
    let report = summary
        .bounds
        .iter()
        .find(|b| b.kind == BoundKind::FractionalPower)
        .cloned();
    let t_bound = match report {
        Some(r) => r.t_bound,
        None => {
            let beta = beta_from_profile(&cfg.gain_profile()?)?;
            bound_fractional(record.initial_state.norm_l2(), beta, mu)?
        }
    };
    Ok(SweepResult {
        t_numeric: record.settled_at,
        t_bound,
        satisfied: record.settled_at.is_some_and(|t| t <= t_bound),
    })
}

pub fn sweep_dir_name(mu: f64) -> String {
    format!("mu_{mu}")
}

/// One run per `mu`, in parallel when the `parallel` feature is on. A failed
/// run does not stop the others; its row carries the error.
pub fn sweep_mu(base: &SimConfig, mus: &[f64], out_dir: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let out_dir = out_dir.as_ref();
    if !matches!(base.control, ControlSpec::Nonlinear { .. }) {
        return Err(Error::Config(
            "mu sweeps need a nonlinear control config".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let job = |&mu: &f64| {
        let dir = out_dir.join(sweep_dir_name(mu));
        let outcome = sweep_one(base, mu, &dir);
        SweepRow { mu, dir, outcome }
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<SweepRow> = {
        use rayon::prelude::*;
        mus.par_iter().map(job).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<SweepRow> = mus.iter().map(job).collect();

    write_file(&out_dir.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        fmt_f(&mut out, row.mu);
        out.push(',');
        match &row.outcome {
            Ok(r) => {
                if let Some(t) = r.t_numeric {
                    fmt_f(&mut out, t);
                }
                out.push(',');
                fmt_f(&mut out, r.t_bound);
                out.push(',');
                out.push_str(if r.satisfied { "true" } else { "false" });
            }
            Err(_) => out.push_str(",,false"),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitialSpec;

    #[test]
    fn trajectory_csv_format() {
        let mut cfg = SimConfig::new(ControlSpec::OpenLoop);
        cfg.grid.n = 5;
        cfg.time.dt = 0.01;
        cfg.time.t_end = 0.02;
        let rec = simulate(&cfg).unwrap();
        let csv = trajectory_csv(&rec.series);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("t,norm_l2,norm_linf,V,control_l2,settled")
        );
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.0000000000000000e0,"), "{first}");
        assert!(first.ends_with(",0"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let mut cfg = SimConfig::new(ControlSpec::Sign {
            rho: 2.0,
            theta: 0.0,
        });
        cfg.grid.n = 15;
        cfg.time.dt = 1e-3;
        cfg.time.t_end = 1.0;
        let rec = simulate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, trajectory_csv(&rec.series)).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back, rec.series);
    }

    #[test]
    fn snapshot_header_and_boundaries() {
        let mut cfg = SimConfig::new(ControlSpec::OpenLoop);
        cfg.grid.n = 3;
        cfg.time.dt = 0.01;
        cfg.time.t_end = 0.02;
        cfg.output.snapshot_times = vec![0.0];
        let rec = simulate(&cfg).unwrap();
        let csv = snapshots_csv(&rec).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,y");
        assert_eq!(lines.len(), 1 + 5);
        assert!(lines[1].ends_with(",0.0000000000000000e0"));
    }

    #[test]
    fn zero_state_run() {
        let mut cfg = SimConfig::new(ControlSpec::Sign {
            rho: 1.0,
            theta: 0.0,
        });
        cfg.initial = InitialSpec::Zero;
        let dir = tempfile::tempdir().unwrap();
        let (_, summary) = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(summary.settled_at, Some(0.0));
        assert!(summary.all_bounds_satisfied());
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join("config.toml").exists());
    }

    #[test]
    fn sweep_requires_nonlinear_config() {
        let cfg = SimConfig::new(ControlSpec::OpenLoop);
        let dir = tempfile::tempdir().unwrap();
        assert!(sweep_mu(&cfg, &[0.5], dir.path()).is_err());
    }

    #[test]
    fn sweep_keeps_going_after_a_bad_mu() {
        let mut cfg = SimConfig::new(ControlSpec::Nonlinear {
            mu: 0.5,
            reaction: false,
            zero_tol: Some(1e-14),
        });
        cfg.grid.n = 10;
        cfg.time.dt = 1e-3;
        cfg.time.t_end = 2.0;
        let dir = tempfile::tempdir().unwrap();
        let rows = sweep_mu(&cfg, &[1.5, 0.5], dir.path()).unwrap();
        assert!(rows[0].outcome.is_err());
        assert!(rows[1].outcome.as_ref().unwrap().satisfied);
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert!(lines[1].ends_with(",,false"));
        assert!(lines[2].ends_with(",true"));
    }
}
