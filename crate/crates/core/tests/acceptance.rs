//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; the process exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use fts_core::certify::{
    barrier_margin, beta_from_profile, bound_fractional, bound_sign, bound_sign_delayed,
    lyapunov_envelope_check,
};
use fts_core::config::InitialSpec;
use fts_core::diffusion::{apply_laplacian, ImplicitDiffusionOp};
use fts_core::feedback::b_star_norm;
use fts_core::stepper::{shrink, step_sign_closed_loop};
use fts_core::{
    build_grid, load_config, simulate, ControlSpec, DisturbanceSpec, GainProfile, SimConfig,
    StateField,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestCaseError, TestRunner};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn sign_config(theta: f64, stop_when_settled: bool) -> SimConfig {
    let mut cfg = SimConfig::new(ControlSpec::Sign { rho: 2.0, theta });
    cfg.grid.n = 200;
    cfg.time.dt = 1e-4;
    cfg.time.t_end = 1.0;
    cfg.time.stop_when_settled = stop_when_settled;
    cfg.disturbance.signal = DisturbanceSpec::Constant { d: 0.5 };
    cfg.initial = InitialSpec::Parabola5;
    cfg
}

fn scalar_sign_config(dt: f64) -> SimConfig {
    let mut cfg = SimConfig::new(ControlSpec::Sign {
        rho: 1.0,
        theta: 0.0,
    });
    cfg.grid.n = 1;
    cfg.grid.x_lo = 0.0;
    cfg.grid.x_hi = 2.0;
    cfg.grid.diffusion = false;
    cfg.time.dt = dt;
    cfg.time.t_end = 2.0;
    cfg.time.stop_when_settled = false;
    cfg.disturbance.signal = DisturbanceSpec::Constant { d: 0.25 };
    cfg.initial = InitialSpec::Constant { value: 1.0 };
    cfg
}

/// Exact scalar solution of `y' = -sign(y) + 1/4` from `y0 = 1`.
fn scalar_sign_exact(t: f64) -> f64 {
    (1.0 - 0.75 * t).max(0.0)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut cfg = SimConfig::new(ControlSpec::OpenLoop);
    cfg.grid.n = 200;
    cfg.time.dt = 1e-4;
    cfg.time.t_end = 0.1;
    cfg.initial = InitialSpec::Mode {
        j: 1,
        amplitude: 1.0,
    };
    let rec = simulate(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let t_last = *rec.series.times.last().unwrap();
    ensure(
        (t_last - 0.1).abs() < 1e-12,
        format!("last record at t = {t_last}"),
    )?;
    let ratio = rec.final_state.norm_l2() / rec.initial_state.norm_l2();
    let expected = (-PI * PI * 0.1).exp();
    let rel = (ratio - expected).abs() / expected;
    ensure(
        rel <= 0.01,
        format!("ratio {ratio:.6} vs {expected:.6} (rel err {rel:.2e})"),
    )?;
    within_time(elapsed, 1.0)?;
    Ok(format!(
        "ratio {ratio:.6} vs exp(-pi^2/10) = {expected:.6}, rel err {rel:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_2() -> Check {
    let t_exact = 4.0 / 3.0;
    let start = Instant::now();
    let mut errors = Vec::new();
    for dt in [1e-4, 5e-5] {
        let rec = simulate(&scalar_sign_config(dt)).map_err(|e| e.to_string())?;
        let ts = rec.settled_at.ok_or("scalar sign run never settled")?;
        let err = (ts - t_exact).abs();
        ensure(
            err <= 5.0 * dt,
            format!("dt = {dt}: settling {ts} outside 4/3 +- 5 dt"),
        )?;
        let s = &rec.series;
        for (i, &t) in s.times.iter().enumerate() {
            if t >= ts {
                ensure(
                    s.norm_l2[i] == 0.0,
                    format!("dt = {dt}: nonzero state at t = {t} after settling"),
                )?;
            }
            let y = rec.series.norm_l2[i];
            ensure(
                (y - scalar_sign_exact(t)).abs() <= 1e-9,
                format!(
                    "dt = {dt}: state {y} vs exact {} at t = {t}",
                    scalar_sign_exact(t)
                ),
            )?;
        }
        errors.push(err);
    }
    let elapsed = start.elapsed();
    ensure(
        errors[1] <= 0.5 * errors[0],
        format!(
            "settling error {:.3e} -> {:.3e} does not halve",
            errors[0], errors[1]
        ),
    )?;
    within_time(elapsed, 1.0)?;
    Ok(format!(
        "settling error {:.3e} (dt=1e-4) -> {:.3e} (dt=5e-5), {:.2}s",
        errors[0],
        errors[1],
        elapsed.as_secs_f64()
    ))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let cfg = sign_config(0.0, false);
    let dt = cfg.time.dt;
    let rec = simulate(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ts = rec.settled_at.ok_or("desk run never settled")?;
    let limit = bound_sign(1.25, 2.0, 0.5).map_err(|e| e.to_string())? + 2.0 * dt;
    ensure(ts <= limit, format!("settling {ts} exceeds {limit}"))?;
    let s = &rec.series;
    ensure(s.len() == rec.steps + 1, "not every step was recorded")?;
    let margin = barrier_margin(
        &s.times,
        &s.norm_linf,
        2.0,
        0.5,
        rec.initial_state.norm_linf(),
    );
    ensure(
        margin >= -1e-10,
        format!("barrier violated by {:.3e}", -margin),
    )?;
    for (i, &t) in s.times.iter().enumerate() {
        if t >= ts {
            ensure(s.settled[i], format!("state leaves zero at t = {t}"))?;
        }
    }
    ensure(
        rec.final_state.is_zero(),
        "final state is not the zero vector",
    )?;
    within_time(elapsed, 10.0)?;
    Ok(format!(
        "settling {ts:.4} <= {limit:.5}, barrier margin {margin:.3e}, zero through t = {:.1}, {:.2}s",
        s.times.last().unwrap(),
        elapsed.as_secs_f64()
    ))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let theta = 0.05;
    let rec = simulate(&sign_config(theta, true)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let gate = rec.gate_open.ok_or("gate never opened")?;
    ensure(
        (gate.t - theta).abs() < 1e-12,
        format!("gate sampled at t = {}", gate.t),
    )?;
    let ts = rec.settled_at.ok_or("delayed run never settled")?;
    ensure(ts > theta, "settled before the feedback engaged")?;
    let bound = bound_sign_delayed(theta, gate.linf, 2.0, 0.5).map_err(|e| e.to_string())?;
    ensure(
        ts <= bound,
        format!("settling {ts} exceeds theta + |y(theta)|/1.5 = {bound}"),
    )?;
    within_time(elapsed, 10.0)?;
    Ok(format!(
        "|y(theta)|_inf = {:.5}, settling {ts:.4} <= {bound:.5}, {:.2}s",
        gate.linf,
        elapsed.as_secs_f64()
    ))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let mut cfg = load_config(config_path("scalar_nonlinear.toml")).map_err(|e| e.to_string())?;
    cfg.time.record_every = 1;
    let dt = cfg.time.dt;
    let rec = simulate(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let ts = rec.settled_at.ok_or("scalar nonlinear run never settled")?;
    let beta = beta_from_profile(&cfg.gain_profile().unwrap()).map_err(|e| e.to_string())?;
    let bound = bound_fractional(1.0, beta, 0.5).map_err(|e| e.to_string())?;
    ensure(bound == 2.0, format!("bound {bound} != 2"))?;
    ensure(
        (ts - 2.0).abs() <= 5.0 * dt,
        format!("settling {ts} outside 2 +- 5 dt"),
    )?;
    let env = lyapunov_envelope_check(&rec.series, dt, beta, 0.5);
    ensure(
        env.passed,
        format!("envelope violated by {:.3e}", env.worst_violation),
    )?;
    ensure(
        env.worst_violation >= -env.slack,
        format!("envelope not tight: worst gap {:.3e}", env.worst_violation),
    )?;
    Ok(format!(
        "settling {ts:.4}, bound {bound}, envelope worst {:.2e} (slack {:.2e}), {:.2}s",
        env.worst_violation,
        env.slack,
        elapsed.as_secs_f64()
    ))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let base = load_config(config_path("heat_nonlinear.toml")).map_err(|e| e.to_string())?;
    ensure(
        base.grid.n == 200 && base.time.dt == 1e-4,
        "shipped config is not n = 200, dt = 1e-4",
    )?;
    let mut settle = Vec::new();
    let mut notes = Vec::new();
    for mu in [0.2, 0.8] {
        let mut cfg = base.clone();
        if let ControlSpec::Nonlinear { mu: m, .. } = &mut cfg.control {
            *m = mu;
        }
        cfg.time.record_every = 1;
        let rec = simulate(&cfg).map_err(|e| e.to_string())?;
        let y0 = rec.initial_state.norm_l2();
        ensure((y0 - 0.91287).abs() < 1e-3, format!("|y0|_2 = {y0}"))?;
        let ts = rec
            .settled_at
            .ok_or(format!("mu = {mu}: no settling within t_end"))?;
        let beta = beta_from_profile(&cfg.gain_profile().unwrap()).map_err(|e| e.to_string())?;
        ensure(beta == 0.01, format!("beta = {beta}"))?;
        let bound = bound_fractional(0.91287, 0.01, mu).map_err(|e| e.to_string())?;
        ensure(
            ts <= bound,
            format!("mu = {mu}: settling {ts} exceeds bound {bound}"),
        )?;
        if let Some(i) = rec.series.v.windows(2).position(|w| w[1] > w[0]) {
            return Err(format!(
                "mu = {mu}: V increases at t = {}",
                rec.series.times[i + 1]
            ));
        }
        notes.push(format!("mu={mu}: T={ts:.4} <= {bound:.3}"));
        settle.push(ts);
    }
    let elapsed = start.elapsed();
    ensure(
        settle[1] < settle[0],
        format!(
            "mu = 0.8 settles at {} not before mu = 0.2 at {}",
            settle[1], settle[0]
        ),
    )?;
    within_time(elapsed, 60.0)?;
    Ok(format!(
        "{}; V nonincreasing; {:.2}s",
        notes.join(", "),
        elapsed.as_secs_f64()
    ))
}

fn run_prop<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    runner
        .run(&strategy, test)
        .map_err(|e| format!("{name}: {e}"))
}

fn field_strategy(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 1..=max_n)
}

fn criterion_7() -> Check {
    let start = Instant::now();
    run_prop(
        "shrink",
        (-10.0..10.0f64, -10.0..10.0f64, 0.0..5.0f64),
        |(a, b, tau)| {
            prop_assert_eq!(shrink(-a, tau), -shrink(a, tau));
            // Nonexpansive up to the rounding of the two subtractions.
            let ulps = 4.0 * f64::EPSILON * a.abs().max(b.abs());
            prop_assert!((shrink(a, tau) - shrink(b, tau)).abs() <= (a - b).abs() + ulps);
            if a <= b {
                prop_assert!(shrink(a, tau) <= shrink(b, tau));
            }
            Ok(())
        },
    )?;

    run_prop(
        "laplacian",
        (2usize..120).prop_flat_map(|n| {
            (
                prop::collection::vec(-1.0..1.0f64, n),
                prop::collection::vec(-1.0..1.0f64, n),
            )
        }),
        |(u, v)| {
            let g = build_grid(u.len(), 0.0, 1.0).unwrap();
            let u = StateField::new(g, u).unwrap();
            let v = StateField::new(g, v).unwrap();
            let lu = apply_laplacian(&u);
            let lv = apply_laplacian(&v);
            let a = lu.inner(&v).unwrap();
            let b = u.inner(&lv).unwrap();
            let scale = lu.norm_l2() * v.norm_l2() + u.norm_l2() * lv.norm_l2();
            prop_assert!((a - b).abs() <= 1e-12 * scale.max(1.0), "{} vs {}", a, b);
            prop_assert!(lu.inner(&u).unwrap() <= 1e-12 * scale.max(1.0));
            Ok(())
        },
    )?;

    run_prop(
        "implicit solve",
        (field_strategy(200), 1e-6..1e-2f64),
        |(rhs, dt)| {
            let g = build_grid(rhs.len(), 0.0, 1.0).unwrap();
            let rhs = StateField::new(g, rhs).unwrap();
            let op = ImplicitDiffusionOp::new(g, dt).unwrap();
            let x = op.solve(&rhs).unwrap();
            let back = op.apply(&x);
            let res = back
                .values()
                .iter()
                .zip(rhs.values())
                .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            prop_assert!(res <= 1e-12, "residual {}", res);
            Ok(())
        },
    )?;

    run_prop(
        "sign selection",
        (
            field_strategy(60),
            1e-5..1e-1f64,
            0.1..5.0f64,
            -0.99..0.99f64,
            0.0..1.0f64,
        ),
        |(y, dt, rho, dfrac, t)| {
            let g = build_grid(y.len(), 0.0, 1.0).unwrap();
            let y = StateField::new(g, y).unwrap();
            let dist = DisturbanceSpec::Constant { d: dfrac * rho };
            let out = step_sign_closed_loop(&y, t, dt, rho, 0.0, &dist).unwrap();
            let w = out.selection.expect("feedback active");
            for (wi, yi) in w.values().iter().zip(out.state.values()) {
                prop_assert!(wi.abs() <= 1.0 + 1e-12, "selection {}", wi);
                if *yi != 0.0 {
                    prop_assert_eq!(*wi, yi.signum());
                }
            }
            Ok(())
        },
    )?;

    run_prop(
        "coercivity",
        (1usize..100).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(1e-3..10.0f64, n),
            )
        }),
        |(y, a)| {
            let g = build_grid(y.len(), 0.0, 1.0).unwrap();
            let y = StateField::new(g, y).unwrap();
            let a = GainProfile::new(a).unwrap();
            let beta = GainProfile::constant(&g, a.inf_bound()).unwrap();
            prop_assert!(b_star_norm(&y, &a).unwrap() >= b_star_norm(&y, &beta).unwrap());
            Ok(())
        },
    )?;

    let elapsed = start.elapsed();
    within_time(elapsed, 10.0)?;
    Ok(format!(
        "5 suites x 1000 cases, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let mut cfg = SimConfig::new(ControlSpec::OpenLoop);
    cfg.grid.n = 200;
    cfg.time.dt = 1e-5;
    cfg.time.t_end = 0.1;
    cfg.initial = InitialSpec::Spike { center: 0.5 };
    let rec = simulate(&cfg).map_err(|e| e.to_string())?;
    let s = &rec.series;
    // Log-spaced samples over [1e-3, 1e-1].
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..=40 {
        let target = 10f64.powf(-3.0 + 2.0 * k as f64 / 40.0);
        let i = s.times.partition_point(|&t| t < target - 0.5 * cfg.time.dt);
        xs.push(s.times[i].ln());
        ys.push(s.norm_linf[i].ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    ensure(
        (slope + 0.5).abs() <= 0.1,
        format!("slope {slope:.4} outside -0.5 +- 0.1"),
    )?;
    Ok(format!(
        "log-log slope {slope:.4}, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 spectral decay of the first mode", criterion_1),
        ("2 scalar sign oracle", criterion_2),
        ("3 sign feedback desk run", criterion_3),
        ("4 delayed sign feedback", criterion_4),
        ("5 scalar fractional-power oracle", criterion_5),
        (
            "6 heat equation with fractional-power feedback",
            criterion_6,
        ),
        ("7 property suites", criterion_7),
        ("8 sup-norm smoothing rate", criterion_8),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match run() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
