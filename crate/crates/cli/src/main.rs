use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use trifield::metrics::{self, ComparisonReport};
use trifield::sim::{self, CurvePair, Outcome, SimMode, TrajectoryPair, DEFAULT_CURVE_STEP};
use trifield::{
    blend, qp::Method, triangulate, Environment, Error, GuidanceField, Point2, SimConfig, TriMesh,
};

#[derive(Parser)]
#[command(name = "trifield", version, about = "Guidance fields on triangulated free space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Triangulate an environment's free space.
    Mesh {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan and assign cell vectors, writing a field file.
    Field {
        #[arg(long)]
        env: PathBuf,
        /// Mesh file; triangulates the environment when omitted.
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long, default_value = "qp")]
        method: Method,
        #[arg(long, default_value_t = blend::DEFAULT_BLEND_WIDTH)]
        blend_width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop run; writes trajectory.csv and summary.json into `out`.
    Simulate {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integral curve of the field from one start, as `x,y` CSV.
    Trace {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        field: PathBuf,
        /// `x,y`
        #[arg(long, value_parser = parse_point)]
        start: Point2,
        #[arg(long, default_value_t = DEFAULT_CURVE_STEP)]
        step: f64,
        #[arg(long, default_value_t = 200_000)]
        budget: usize,
        #[arg(long, default_value_t = 0.05)]
        goal_radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired QP vs baseline batch from seeded starts.
    Compare {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "curves")]
        mode: CompareMode,
        /// Simulation config for closed-loop mode; `start` may be omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CURVE_STEP)]
        step: f64,
        #[arg(long, default_value_t = 200_000)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Field vectors on a regular grid over the free space.
    SampleField {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 50)]
        grid_n: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CompareMode {
    Curves,
    Closedloop,
}

fn parse_point(s: &str) -> Result<Point2, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y: {e}"))?;
    Ok(Point2::new(x, y))
}

enum Failure {
    Lib(Error),
    Write(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Write(..) => 4,
            Failure::Lib(e) => match e {
                Error::Parse { .. } | Error::Io(_) => 2,
                Error::InvalidEnvironment(_)
                | Error::DegenerateInput(_)
                | Error::MeshInvalid(_)
                | Error::GoalOutsideMesh(_)
                | Error::OutsideFreeSpace(_)
                | Error::VertexSingularity(_)
                | Error::AtGoal(_)
                | Error::StartNotFree(_)
                | Error::LengthMismatch(..)
                | Error::InvalidConfig(_) => 3,
                Error::TriangulationFailure(_)
                | Error::EmptyPlan
                | Error::NotConverged { .. }
                | Error::SamplingExhausted(_)
                | Error::DegeneratePath { .. }
                | Error::NotArrived => 4,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Write(p, e) => write!(f, "cannot write {}: {e}", p.display()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn write(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::Write(path.to_path_buf(), e))
}

fn load_env(path: &Path) -> CliResult<Environment> {
    let env = Environment::load(path)?;
    env.ensure_valid()?;
    Ok(env)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Mesh { env, out } => {
            let env = load_env(&env)?;
            let t0 = Instant::now();
            let mesh = triangulate(&env)?;
            let elapsed = ms(t0);
            write(&out, &mesh.to_json())?;
            println!("triangles: {}", mesh.len());
            println!("build_ms: {elapsed:.3}");
        }
        Command::Field {
            env,
            mesh,
            method,
            blend_width,
            out,
        } => {
            let env = load_env(&env)?;
            let mesh = match mesh {
                Some(path) => TriMesh::load(path, &env)?,
                None => triangulate(&env)?,
            };
            let t0 = Instant::now();
            let field = GuidanceField::build(mesh, env.goal, method, blend_width)?;
            let elapsed = ms(t0);
            write(&out, &field.to_json())?;
            println!("planned_cells: {}", field.plan.cells().count());
            println!("objective: {}", field.cells.objective);
            println!("solve_ms: {elapsed:.3}");
        }
        Command::Simulate {
            env,
            field,
            config,
            out,
        } => {
            let env = load_env(&env)?;
            let field = GuidanceField::load(field, &env)?;
            let config = SimConfig::from_json(&read(&config)?)?;
            fs::create_dir_all(&out).map_err(|e| Failure::Write(out.clone(), e))?;
            match config.mode {
                SimMode::Unicycle => {
                    let traj = sim::simulate(&env, &field, &config)?;
                    write(&out.join("trajectory.csv"), &traj.to_csv())?;
                    write(&out.join("summary.json"), &traj.summary_json())?;
                    println!("outcome: {}", outcome_name(traj.outcome));
                    println!("final_time: {}", traj.last().t);
                }
                SimMode::IntegralCurve => {
                    let start = Point2::new(config.start[0], config.start[1]);
                    let budget = (config.t_max / config.dt).ceil() as usize;
                    let curve = sim::trace_integral_curve(
                        &env,
                        &field,
                        start,
                        config.dt,
                        budget,
                        config.goal_radius,
                    )?;
                    write(&out.join("trajectory.csv"), &points_csv(&curve.points))?;
                    let summary = json!({
                        "outcome": curve.outcome,
                        "steps": curve.points.len() - 1,
                        "min_obstacle_distance": curve.min_obstacle_distance,
                        "error": curve.error,
                    });
                    write(&out.join("summary.json"), &pretty(&summary))?;
                    println!("outcome: {}", outcome_name(curve.outcome));
                }
            }
        }
        Command::Trace {
            env,
            field,
            start,
            step,
            budget,
            goal_radius,
            out,
        } => {
            let env = load_env(&env)?;
            let field = GuidanceField::load(field, &env)?;
            if !(step > 0.0) {
                return Err(Error::InvalidConfig(format!("step {step} must be positive")).into());
            }
            let curve = sim::trace_integral_curve(&env, &field, start, step, budget, goal_radius)?;
            write(&out, &points_csv(&curve.points))?;
            println!("outcome: {}", outcome_name(curve.outcome));
            println!("points: {}", curve.points.len());
        }
        Command::Compare {
            env,
            n,
            seed,
            mode,
            config,
            step,
            budget,
            out,
        } => {
            let env = load_env(&env)?;
            let t0 = Instant::now();
            let mesh = triangulate(&env)?;
            let width = blend::DEFAULT_BLEND_WIDTH;
            let qp = GuidanceField::build(mesh.clone(), env.goal, Method::Qp, width)?;
            let baseline = GuidanceField::build(mesh, env.goal, Method::Baseline, width)?;
            let names = ["qp", "baseline"];
            let (report, outcomes, mode_name) = match mode {
                CompareMode::Curves => {
                    if !(step > 0.0) {
                        return Err(Error::InvalidConfig(format!("step {step} must be positive")).into());
                    }
                    let goal_radius = 0.05;
                    let pairs =
                        sim::batch_curves(&env, &qp, &baseline, n, seed, step, budget, goal_radius)?;
                    (curve_report(names, &pairs)?, curve_outcomes(&pairs), "curves")
                }
                CompareMode::Closedloop => {
                    let template = match config {
                        Some(path) => compare_config(&read(&path)?)?,
                        None => SimConfig::new(trifield::Pose::new(0.0, 0.0, 0.0), Default::default()),
                    };
                    template.validate()?;
                    let pairs = sim::batch_closed_loop(&env, &qp, &baseline, n, seed, &template)?;
                    (control_report(names, &pairs)?, run_outcomes(&pairs), "closedloop")
                }
            };
            let doc = json!({
                "mode": mode_name,
                "n": n,
                "seed": seed,
                "outcomes": outcomes,
                "pairs": report.pairs,
                "excluded": report.excluded,
                "metrics": report.metrics,
            });
            write(&out, &pretty(&doc))?;
            for m in &report.metrics {
                println!(
                    "{:<20} improvement {:>7.2}%  win rate {:>6.2}%",
                    m.metric,
                    m.improvement_pct(),
                    m.win_rate_pct()
                );
            }
            println!("elapsed_ms: {:.1}", ms(t0));
        }
        Command::SampleField {
            env,
            field,
            grid_n,
            out,
        } => {
            let env = load_env(&env)?;
            let field = GuidanceField::load(field, &env)?;
            let samples = field.sample_grid(&env, grid_n);
            write(&out, &blend::grid_csv(&samples))?;
            println!("samples: {}", samples.len());
        }
    }
    Ok(())
}

fn read(path: &Path) -> CliResult<String> {
    Ok(fs::read_to_string(path).map_err(Error::Io)?)
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes")
}

fn points_csv(points: &[Point2]) -> String {
    let mut s = String::from("x,y\n");
    for p in points {
        s.push_str(&format!("{},{}\n", p.x, p.y));
    }
    s
}

fn outcome_name(o: Outcome) -> String {
    serde_json::to_value(o)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Batch configs carry no start; each run gets its own.
fn compare_config(text: &str) -> CliResult<SimConfig> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|source| Error::Parse { what: "config", source })?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("start").or_insert(json!([0.0, 0.0, 0.0]));
    }
    Ok(SimConfig::from_json(&value.to_string())?)
}

fn tally(outcomes: impl Iterator<Item = Outcome>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for o in outcomes {
        *counts.entry(outcome_name(o)).or_insert(0) += 1;
    }
    counts
}

fn curve_outcomes(pairs: &[CurvePair]) -> serde_json::Value {
    json!({
        "qp": tally(pairs.iter().map(|p| p.a.outcome)),
        "baseline": tally(pairs.iter().map(|p| p.b.outcome)),
    })
}

fn run_outcomes(pairs: &[TrajectoryPair]) -> serde_json::Value {
    json!({
        "qp": tally(pairs.iter().map(|p| p.a.outcome)),
        "baseline": tally(pairs.iter().map(|p| p.b.outcome)),
    })
}

fn curve_report(names: [&'static str; 2], pairs: &[CurvePair]) -> CliResult<ComparisonReport> {
    let measure = |c: &sim::IntegralCurve| {
        (c.outcome == Outcome::Goal)
            .then(|| metrics::path_metrics(&c.points, metrics::DEFAULT_RESAMPLE_DS).ok())
            .flatten()
    };
    let a: Vec<_> = pairs.iter().map(|p| measure(&p.a)).collect();
    let b: Vec<_> = pairs.iter().map(|p| measure(&p.b)).collect();
    Ok(metrics::compare_paths(names, &a, &b)?)
}

fn control_report(names: [&'static str; 2], pairs: &[TrajectoryPair]) -> CliResult<ComparisonReport> {
    let a: Vec<_> = pairs.iter().map(|p| metrics::control_metrics(&p.a).ok()).collect();
    let b: Vec<_> = pairs.iter().map(|p| metrics::control_metrics(&p.b).ok()).collect();
    Ok(metrics::compare_controls(names, &a, &b)?)
}
