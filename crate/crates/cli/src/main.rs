use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use windplan::env::{load_scenario, EnvError, Scenario};
use windplan::flightsim::FlightLog;
use windplan::lbm::validation::{poiseuille, uniform_inlet};
use windplan::metrics::{displacement, ComparisonReport, MetricsReport, PlannerComparison};
use windplan::pipeline::{self, Mode, PipelineError, RunManifest};
use windplan::{BezierTrajectory, WindField};

#[derive(Parser)]
#[command(name = "windplan", version, about = "Wind-aware UAV path planning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "params", value_name = "K=V")]
    params: Vec<String>,
    /// Seed for replay noise.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Wespr,
    Base,
}

#[derive(Subcommand)]
enum Command {
    /// Run the lattice-Boltzmann solver and write the steady field.
    SimulateWind {
        #[command(flatten)]
        common: Common,
    },
    /// Cost map, A* and Bézier refinement in one mode.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "wespr")]
        mode: ModeArg,
        /// Plan on the plain base cost while keeping the WESPR objective.
        #[arg(long)]
        no_flow_aware: bool,
        /// Use a field written by `simulate-wind` instead of solving again.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Plan both modes, replay with wind on and off, and score.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long)]
        no_flow_aware: bool,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Score externally supplied flight logs against a trajectory.
    Evaluate {
        /// Flight log CSV (t,x,y[,vx,vy[,ax_cmd,ay_cmd]]).
        #[arg(long)]
        log: PathBuf,
        /// Control polygon CSV written by `plan`.
        #[arg(long)]
        reference: PathBuf,
        /// Wind-off log of the same plan, for Δ and the wind penalties.
        #[arg(long)]
        no_wind_log: Option<PathBuf>,
        /// Scenario whose obstacles are used for collision checks.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        jerk_window: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Analytic solver checks: Poiseuille channel and uniform inlet.
    Validate {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(common: &Common, no_flow_aware: bool) -> Result<Scenario, PipelineError> {
    let mut s = load_scenario(&common.scenario)?;
    for kv in &common.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| EnvError::Parse { path: "--params".into(), msg: format!("expected key=value, got {kv:?}") })?;
        s.params.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        s.params.seed = seed;
    }
    if no_flow_aware {
        s.params.flow_aware = false;
    }
    s.validate()?;
    Ok(s)
}

fn obtain_field(
    s: &Scenario,
    path: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<WindField, PipelineError> {
    let t = Instant::now();
    let field = match path {
        Some(p) => WindField::read_csv(p)?,
        None => {
            let run = pipeline::simulate_wind(s)?;
            manifest.wind = Some(run.summary());
            run.field
        }
    };
    manifest.time("simulate", t.elapsed().as_secs_f64());
    Ok(field)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::SimulateWind { common } => {
            let t = Instant::now();
            let s = load(&common, false)?;
            let mut m = RunManifest::new("simulate-wind", &s);
            m.time("load", t.elapsed().as_secs_f64());
            let t = Instant::now();
            let run = pipeline::simulate_wind(&s)?;
            m.time("simulate", t.elapsed().as_secs_f64());
            pipeline::ensure_dir(&common.out)?;
            m.outputs = pipeline::write_wind_artifacts(&common.out, &run.field)?;
            m.wind = Some(run.summary());
            m.write(&common.out)?;
            println!(
                "wind: {} steps, max speed {:.3} m/s, converged {:?}",
                run.steps,
                run.field.max_speed(),
                run.converged
            );
        }
        Command::Plan { common, mode, no_flow_aware, field } => {
            let t = Instant::now();
            let s = load(&common, no_flow_aware)?;
            let mut m = RunManifest::new("plan", &s);
            m.time("load", t.elapsed().as_secs_f64());
            let mode = match mode {
                ModeArg::Wespr => Mode::Wespr,
                ModeArg::Base => Mode::Base,
            };
            let needs_field = mode == Mode::Wespr && s.params.flow_aware;
            let wind = if needs_field { Some(obtain_field(&s, field.as_deref(), &mut m)?) } else { None };
            let out = pipeline::plan(&s, mode, wind.as_ref())?;
            m.time("plan", out.plan_seconds);
            m.time("optimize", out.optimize_seconds);
            pipeline::ensure_dir(&common.out)?;
            m.outputs = pipeline::write_plan_artifacts(&common.out, &out, "", s.params.sim_dt)?;
            m.write(&common.out)?;
            let traj = out.trajectory();
            println!(
                "{}: A* cost {:.4}, {} waypoints, T = {:.3} s, J {:.6} -> {:.6}",
                mode.name(),
                out.path.total_cost,
                out.reference.len(),
                traj.duration(),
                out.optimized.history[0],
                out.optimized.history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Compare { common, trials, no_flow_aware, field } => {
            let t = Instant::now();
            let s = load(&common, no_flow_aware)?;
            let mut m = RunManifest::new("compare", &s);
            m.time("load", t.elapsed().as_secs_f64());
            let wind = obtain_field(&s, field.as_deref(), &mut m)?;
            let out = pipeline::compare(&s, &wind, trials)?;
            for runs in [&out.base, &out.wespr] {
                m.time("plan", runs.plan.plan_seconds);
                m.time("optimize", runs.plan.optimize_seconds);
            }
            m.time("replay", out.replay_seconds);
            m.time("metrics", out.metrics_seconds);
            pipeline::ensure_dir(&common.out)?;
            m.outputs = pipeline::write_compare_artifacts(&common.out, &out, &s)?;
            m.write(&common.out)?;
            print_comparison(&out.report);
            println!(
                "ablation: mean jerk bezier {:.4}, polyline {:.4}",
                out.ablation.bezier_mean_jerk, out.ablation.polyline_mean_jerk
            );
        }
        Command::Evaluate { log, reference, no_wind_log, scenario, jerk_window, out } => {
            let traj = BezierTrajectory::read_control_csv(&reference)?;
            let actual = FlightLog::read_csv(&log)?;
            let grid = match &scenario {
                Some(p) => load_scenario(p)?.grid,
                None => windplan::OccupancyGrid::new(1, 1, 1e9)?,
            };
            let rep = MetricsReport::compute(&actual, &traj, &grid, jerk_window)?;
            pipeline::ensure_dir(&out)?;
            let mut text = serde_json::to_string_pretty(&rep).expect("serializes");
            if let Some(calm) = no_wind_log {
                let calm = FlightLog::read_csv(&calm)?;
                let calm_rep = MetricsReport::compute(&calm, &traj, &grid, jerk_window)?;
                let cmp = PlannerComparison::new(calm_rep, rep, displacement(&actual, &calm)?);
                text = serde_json::to_string_pretty(&cmp).expect("serializes");
            }
            let path = out.join("metrics.json");
            std::fs::write(&path, text.clone() + "\n")
                .map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })?;
            println!("{text}");
        }
        Command::Validate { out } => {
            let p = poiseuille(64, 32, 0.9_f64, 0.05, 100_000)?;
            let u = uniform_inlet(80, 40, 1.0_f64, 6000)?;
            let ok = p.rel_l2_error < 0.02 && u.max_abs_error < 1e-2;
            pipeline::ensure_dir(&out)?;
            let text = serde_json::to_string_pretty(&serde_json::json!({
                "poiseuille": p, "uniform_inlet": u, "pass": ok
            }))
            .expect("serializes");
            let path = out.join("validation.json");
            std::fs::write(&path, text + "\n")
                .map_err(|e| EnvError::Io { path: path.display().to_string(), source: e })?;
            println!("poiseuille 64x32 tau=0.9: rel L2 error {:.3e} after {} steps", p.rel_l2_error, p.steps);
            println!("uniform inlet 80x40: max error {:.3e} m/s after {} steps", u.max_abs_error, u.steps);
            if !ok {
                return Err(windplan::lbm::LbmError::InvalidParameter("validation tolerance exceeded".into()).into());
            }
        }
    }
    Ok(())
}

fn print_comparison(r: &ComparisonReport<f64>) {
    for (name, c) in [("base", &r.base), ("wespr", &r.wespr)] {
        let pct = |p: Option<f64>| p.map_or("n/a".to_string(), |v| format!("{v:+.1}%"));
        println!(
            "{name:>5}: max dev {:.4} -> {:.4} m ({}), mean jerk {:.3} -> {:.3} ({}), collided {}, Δ {:.4} m",
            c.max_dev.no_wind,
            c.max_dev.wind,
            pct(c.max_dev.penalty_pct),
            c.mean_jerk.no_wind,
            c.mean_jerk.wind,
            pct(c.mean_jerk.penalty_pct),
            c.wind.collided,
            c.displacement
        );
    }
    if let Some(eta) = r.relative_reduction_pct {
        println!("relative reduction of Δ: {eta:.1}%");
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("WINDPLAN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Only fails if a pool already exists, which cannot happen this early.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
