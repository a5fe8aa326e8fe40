//! `pcd`: optimize, simulate and track pendulum capsule drive controls.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use capsule_drive::analysis::{
    average_speed, average_speed_cm_per_s, per_period_rmse, relative_difference, rmse,
    stick_slip_segments, SignalSeries,
};
use capsule_drive::fourier::ControlLaw;
use capsule_drive::model::FrictionMode;
use capsule_drive::parallel::{configure_workers, Execution};
use capsule_drive::pipeline::{
    run_optimize, run_simulate, run_track, Artifacts, ParamsInput, PipelineError, RunConfig,
};
use capsule_drive::simulator::Trajectory;
use capsule_drive::tracking::TrackingMode;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Exit code for results that violate a constraint.
const EXIT_INFEASIBLE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pcd",
    version,
    about = "Fourier-series control optimization for a pendulum capsule drive"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration (JSON) or a run manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Optimizer seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of optimization stages to run.
    #[arg(long, global = true)]
    stages: Option<usize>,
    /// Horizon length in periods of the control.
    #[arg(long, global = true)]
    horizon_periods: Option<usize>,
    /// Integration step of the dimensionless simulator.
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Evaluate sequentially instead of in parallel.
    #[arg(long, global = true)]
    sequential: bool,
    /// Worker threads for parallel evaluation.
    #[arg(long, global = true, env = "PCD_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the staged optimization and write all artifacts.
    Optimize,
    /// Simulate a stored control and check its constraints.
    Simulate {
        /// Stage result, control parameters or control law (JSON).
        params: PathBuf,
    },
    /// Simulate closed-loop tracking of a stored control.
    Track(TrackArgs),
    /// Compute metrics from artifacts.
    #[command(subcommand)]
    Analyze(Analyze),
}

#[derive(Debug, Args)]
struct TrackArgs {
    /// Stage result, control parameters or control law (JSON).
    #[arg(required_unless_present = "zero_reference")]
    params: Option<PathBuf>,
    /// Track the constant zero angle instead of a stored control.
    #[arg(long)]
    zero_reference: bool,
    /// Proportional gain (N m/rad)
    #[arg(long)]
    kp: Option<f64>,
    /// Integral gain (N m/(rad s))
    #[arg(long)]
    ki: Option<f64>,
    /// Derivative gain (N m s/rad)
    #[arg(long)]
    kd: Option<f64>,
    /// Friction compensation torque (N m).
    #[arg(long)]
    u_f: Option<f64>,
    /// Gravity compensation torque (N m).
    #[arg(long)]
    u_0: Option<f64>,
    /// Controller frequency (Hz).
    #[arg(long)]
    loop_rate: Option<f64>,
    /// Simulated time (s); overrides --horizon-periods.
    #[arg(long)]
    duration: Option<f64>,
    /// Impose the reference angle exactly instead of running the controller.
    #[arg(long)]
    ideal: bool,
    /// Drop the capsule acceleration term from the pendulum equation.
    #[arg(long)]
    no_coupling: bool,
    /// Quantize the measured angle with an encoder of this many bits.
    #[arg(long)]
    encoder_bits: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Analyze {
    /// RMSE between two series read from CSV files.
    Rmse {
        reference: PathBuf,
        measured: PathBuf,
        /// Time column (default `t`, `tau` or the first column).
        #[arg(long)]
        time_col: Option<String>,
        /// Value column of the reference file.
        #[arg(long)]
        ref_col: Option<String>,
        /// Value column of the measured file.
        #[arg(long)]
        meas_col: Option<String>,
        /// Also report the RMSE of each whole period of this length.
        #[arg(long)]
        period: Option<f64>,
    },
    /// Relative difference in percent between a numerical and an experimental value.
    Delta { v_num: f64, v_exp: f64 },
    /// Stick and slip phases of a trajectory CSV.
    Segments { trajectory: PathBuf },
    /// Average speed of a covered distance.
    Speed {
        distance: f64,
        duration: f64,
        /// Interpret the inputs as dimensionless distance and time and report cm/s.
        #[arg(long)]
        dimensionless: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage_error { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    if let Some(n) = g.workers {
        configure_workers(n).map_err(|e| anyhow::anyhow!("configuring worker threads: {e}"))?;
    }
    match cli.command {
        Command::Optimize => optimize(g),
        Command::Simulate { ref params } => simulate(g, params),
        Command::Track(ref args) => track(g, args),
        Command::Analyze(ref a) => analyze(g, a),
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut config = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.de.seed = seed;
    }
    if let Some(n) = g.stages {
        if n == 0 || n > config.plan.stages.len() {
            return Err(PipelineError::Config(format!(
                "--stages must be between 1 and {}",
                config.plan.stages.len()
            ))
            .into());
        }
        config.plan = config.plan.truncated(n);
    }
    if let Some(step) = g.step {
        config.step = step;
    }
    if let Some(out) = &g.out {
        config.output_dir = out.clone();
    }
    if g.sequential {
        config.execution = Execution::Sequential;
    }
    config.validate()?;
    Ok(config)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn optimize(g: &GlobalArgs) -> Result<u8> {
    let mut config = load_config(g)?;
    if let Some(n) = g.horizon_periods {
        config.plan.validation_periods = n;
        config.validate()?;
    }
    let run = run_optimize(&config)?;
    run.artifacts.write(&config.output_dir, &config)?;
    print_json(&run.summary)?;
    Ok(if run.summary.feasible {
        0
    } else {
        EXIT_INFEASIBLE
    })
}

fn read_params(path: &Path) -> Result<(Vec<u8>, ControlLaw)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone())
        .with_context(|| format!("{} is not UTF-8", path.display()))?;
    let law = ParamsInput::from_json(&text)?.law()?;
    Ok((bytes, law))
}

fn simulate(g: &GlobalArgs, params: &Path) -> Result<u8> {
    let config = load_config(g)?;
    let (input, law) = read_params(params)?;
    let run = run_simulate(&law, &config, g.horizon_periods)?;
    let mut artifacts = Artifacts::default();
    artifacts.insert("params.json", input);
    artifacts.insert("trajectory.csv", run.trajectory);
    artifacts.insert_json("simulation.json", &run.report);
    artifacts.write(&config.output_dir, &config)?;
    print_json(&run.report)?;
    Ok(if run.report.feasible {
        0
    } else {
        EXIT_INFEASIBLE
    })
}

fn track(g: &GlobalArgs, args: &TrackArgs) -> Result<u8> {
    let config = load_config(g)?;
    let (input, law) = match &args.params {
        Some(path) if !args.zero_reference => read_params(path)?,
        _ => {
            let law = ControlLaw::zero(1.0);
            (serde_json::to_vec_pretty(&law)?, law)
        }
    };
    let mut tracking = config.tracking.clone();
    let gains = &mut tracking.gains;
    for (slot, value) in [
        (&mut gains.kp, args.kp),
        (&mut gains.ki, args.ki),
        (&mut gains.kd, args.kd),
        (&mut gains.u_f, args.u_f),
        (&mut gains.u_0, args.u_0),
        (&mut gains.loop_rate, args.loop_rate),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    let opts = &mut tracking.options;
    if let Some(d) = args.duration {
        opts.duration = d;
    } else if let Some(n) = g.horizon_periods {
        opts.duration = n as f64 * law.period / (tracking.physical.g / tracking.physical.l).sqrt();
    }
    if args.ideal {
        opts.mode = TrackingMode::Ideal;
    }
    if args.no_coupling {
        opts.coupling = false;
    }
    if args.encoder_bits.is_some() {
        opts.encoder_bits = args.encoder_bits;
    }
    let run = run_track(&law, &tracking)?;
    let mut artifacts = Artifacts::default();
    artifacts.insert("params.json", input);
    artifacts.insert("tracking.csv", run.csv);
    let summary = json!({
        "gains": tracking.gains,
        "rmse_full": run.summary.rmse_full,
        "rmse_per_period": run.summary.rmse_per_period,
        "period_s": run.summary.period,
        "distance_m": run.summary.distance,
        "max_torque_ratio": run.summary.max_torque_ratio,
    });
    artifacts.insert_json("tracking_summary.json", &summary);
    let mut manifest_config = config.clone();
    manifest_config.tracking = tracking;
    artifacts.write(&config.output_dir, &manifest_config)?;
    print_json(&summary)?;
    Ok(0)
}

fn read_series(
    path: &Path,
    time_col: Option<&str>,
    value_col: Option<&str>,
) -> Result<SignalSeries> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    SignalSeries::from_csv(file, time_col, value_col)
        .with_context(|| format!("reading {}", path.display()))
}

fn analyze(g: &GlobalArgs, a: &Analyze) -> Result<u8> {
    match a {
        Analyze::Rmse {
            reference,
            measured,
            time_col,
            ref_col,
            meas_col,
            period,
        } => {
            let r = read_series(reference, time_col.as_deref(), ref_col.as_deref())?;
            let m = read_series(measured, time_col.as_deref(), meas_col.as_deref())?;
            let full = rmse(&r, &m)?;
            let per = match period {
                Some(p) => Some(per_period_rmse(&r, &m, *p)?),
                None => None,
            };
            print_json(&json!({ "rmse": full, "rmse_per_period": per }))?;
        }
        Analyze::Delta { v_num, v_exp } => {
            let d = relative_difference(*v_num, *v_exp)?;
            print_json(&json!({ "v_num": v_num, "v_exp": v_exp, "delta_percent": d }))?;
        }
        Analyze::Segments { trajectory } => {
            let file = std::fs::File::open(trajectory)
                .with_context(|| format!("opening {}", trajectory.display()))?;
            let traj = Trajectory::read_csv(file)
                .map_err(|e| anyhow::anyhow!("{}: {e}", trajectory.display()))?;
            if traj.records.is_empty() {
                bail!("{} has no records", trajectory.display());
            }
            let seg = stick_slip_segments(&traj);
            print_json(&json!({
                "segments": seg.segments,
                "total_duration": seg.total_duration(),
                "stick_time": seg.time_in(FrictionMode::Stick),
                "slip_time": seg.time_in(FrictionMode::Slip),
            }))?;
        }
        Analyze::Speed {
            distance,
            duration,
            dimensionless,
        } => {
            if !(*duration > 0.0) {
                bail!("duration must be positive");
            }
            if *dimensionless {
                let config = load_config(g)?;
                let v = average_speed_cm_per_s(*distance, *duration, &config.scaling);
                print_json(&json!({ "speed_cm_per_s": v }))?;
            } else {
                print_json(&json!({ "speed": average_speed(*distance, *duration) }))?;
            }
        }
    }
    Ok(0)
}
