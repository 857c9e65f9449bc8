use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fts_core::stepper::{
    scalar_nonlinear_settling_time, scalar_oracle_nonlinear, scalar_oracle_sign,
    scalar_sign_settling_time,
};
use fts_core::{load_config, run_experiment, sweep_mu, Error, RunSummary, SimConfig};

/// Finite-time stabilization experiments for the 1D heat equation.
#[derive(Parser)]
#[command(name = "fts-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one config and write trajectory, snapshots and summary.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Repeat a fractional-power config for several values of mu.
    Sweep {
        config: PathBuf,
        /// Comma-separated exponents in (0, 1).
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print a table of a closed-form scalar solution.
    Oracle {
        kind: OracleKind,
        #[arg(long, default_value_t = 1.0)]
        y0: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.25)]
        d: f64,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    /// `y' = -rho sign(y) + d`
    Scalar,
    /// `y' = -|y|^(-mu) y`
    Nonlinear,
}

#[derive(Args)]
struct RunOpts {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    /// Number of interior grid nodes.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Exit with status 3 when a settling-time bound is violated.
    #[arg(long)]
    strict: bool,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_BOUND: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NumericalAbort { .. } | Error::StepRejected { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(err))
}

fn prepare(path: &PathBuf, opts: &RunOpts) -> Result<SimConfig, Error> {
    let mut cfg = load_config(path)?;
    if let Some(dt) = opts.dt {
        cfg.time.dt = dt;
    }
    if let Some(n) = opts.n {
        cfg.grid.n = n;
    }
    if let Some(t) = opts.t_end {
        cfg.time.t_end = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_opt(t: Option<f64>) -> String {
    t.map_or_else(|| "none".to_string(), |t| format!("{t:.6}"))
}

fn print_summary(s: &RunSummary) {
    println!("steps        {}", s.steps);
    println!("settled at   {}", fmt_opt(s.settled_at));
    println!("final |y|_2  {:.6e}", s.final_l2);
    println!("final |y|_oo {:.6e}", s.final_linf);
    for b in &s.bounds {
        println!(
            "bound {:<16} T <= {:.6}  numeric {}  {}",
            format!("{:?}", b.kind),
            b.t_bound,
            fmt_opt(b.t_numeric),
            if b.satisfied { "ok" } else { "VIOLATED" }
        );
    }
    if let Some(m) = s.barrier_margin {
        println!("barrier margin {m:.3e}");
    }
    if let Some(e) = &s.lyapunov {
        println!(
            "lyapunov envelope {} (worst {:.3e}, slack {:.3e})",
            if e.passed { "ok" } else { "VIOLATED" },
            e.worst_violation,
            e.slack
        );
    }
    println!("wall clock   {:.3}s", s.wall_clock_s);
}

fn run(config: PathBuf, opts: RunOpts) -> ExitCode {
    let cfg = match prepare(&config, &opts) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    match run_experiment(&cfg, &opts.out) {
        Ok((_, summary)) => {
            print_summary(&summary);
            println!("wrote {}", opts.out.display());
            if opts.strict && !summary.all_bounds_satisfied() {
                return ExitCode::from(EXIT_BOUND);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn sweep(config: PathBuf, mus: Vec<f64>, opts: RunOpts) -> ExitCode {
    let cfg = match prepare(&config, &opts) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let rows = match sweep_mu(&cfg, &mus, &opts.out) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    println!("{:>8} {:>12} {:>12}  status", "mu", "t_numeric", "t_bound");
    let mut worst = 0;
    for row in &rows {
        match &row.outcome {
            Ok(r) => {
                println!(
                    "{:>8} {:>12} {:>12.6}  {}",
                    row.mu,
                    fmt_opt(r.t_numeric),
                    r.t_bound,
                    if r.satisfied { "ok" } else { "VIOLATED" }
                );
                if opts.strict && !r.satisfied {
                    worst = worst.max(EXIT_BOUND);
                }
            }
            Err(e) => {
                println!("{:>8} {:>12} {:>12}  error: {e}", row.mu, "-", "-");
                worst = worst.max(exit_code(e));
            }
        }
    }
    println!("wrote {}", opts.out.join("sweep.csv").display());
    ExitCode::from(worst)
}

fn oracle(kind: OracleKind, y0: f64, rho: f64, d: f64, mu: f64, samples: usize) -> ExitCode {
    let samples = samples.max(1);
    let (t_settle, eval): (f64, Box<dyn Fn(f64) -> fts_core::Result<f64>>) = match kind {
        OracleKind::Scalar => match scalar_sign_settling_time(y0, rho, d) {
            Ok(t) => (t, Box::new(move |t| scalar_oracle_sign(y0, rho, d, t))),
            Err(e) => return fail(&e),
        },
        OracleKind::Nonlinear => match scalar_nonlinear_settling_time(y0, mu) {
            Ok(t) => (t, Box::new(move |t| scalar_oracle_nonlinear(y0, mu, t))),
            Err(e) => return fail(&e),
        },
    };
    println!("# settling time {t_settle:.12}");
    println!("t,y");
    let horizon = 1.25 * t_settle.max(f64::MIN_POSITIVE);
    for k in 0..=samples {
        let t = horizon * k as f64 / samples as f64;
        match eval(t) {
            Ok(y) => println!("{t:.12e},{y:.12e}"),
            Err(e) => return fail(&e),
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, opts } => run(config, opts),
        Command::Sweep { config, mu, opts } => sweep(config, mu, opts),
        Command::Oracle {
            kind,
            y0,
            rho,
            d,
            mu,
            samples,
        } => oracle(kind, y0, rho, d, mu, samples),
    }
}
