//! Closed-loop unicycle simulation, integral-curve tracing and paired batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blend::GuidanceField;
use crate::controller::{self, ControllerParams, Pose};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geometry::{segments_cross, Point2};

/// Consecutive stopped steps (away from the goal) that count as a stall.
pub const STALL_STEPS: usize = 100;
pub const MAX_SAMPLING_ATTEMPTS: usize = 1_000_000;
/// Start positions this close to a mesh vertex are nudged away.
const VERTEX_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SimMode {
    #[default]
    Unicycle,
    IntegralCurve,
}

fn default_dt() -> f64 {
    0.01
}
fn default_t_max() -> f64 {
    200.0
}
fn default_goal_radius() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// `[x, y, theta]`.
    pub start: [f64; 3],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default)]
    pub controller: ControllerParams,
    #[serde(default)]
    pub mode: SimMode,
    #[serde(default)]
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn new(start: Pose, controller: ControllerParams) -> Self {
        Self {
            start: [start.x, start.y, start.theta],
            dt: default_dt(),
            t_max: default_t_max(),
            goal_radius: default_goal_radius(),
            controller,
            mode: SimMode::Unicycle,
            rng_seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse { what: "config", source })
    }

    pub fn validate(&self) -> Result<()> {
        self.controller.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0) || !(self.goal_radius > 0.0) {
            return Err(Error::InvalidConfig("t_max and goal_radius must be non-negative/positive".into()));
        }
        if self.start.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("start pose must be finite".into()));
        }
        let c = &self.controller;
        let limit = 0.1 * (1.0 / c.k).min(1.0 / c.omega_max);
        if self.dt > limit {
            log::warn!("dt = {} exceeds the explicit-integration guideline {limit}", self.dt);
        }
        Ok(())
    }

    pub fn start_pose(&self) -> Pose {
        Pose::new(self.start[0], self.start[1], self.start[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Goal,
    Collision,
    Timeout,
    Stall,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub phi: f64,
    pub theta_d: f64,
    pub cell: Option<usize>,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// One row per step; inputs in a row are held over `[t, t + dt)`. The
    /// last row is the terminal state.
    pub rows: Vec<TrajRow>,
    pub outcome: Outcome,
    pub dt: f64,
    pub goal: Point2,
    pub min_obstacle_distance: f64,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct Summary<'a> {
    outcome: Outcome,
    steps: usize,
    final_time: f64,
    final_pose: [f64; 3],
    final_distance_to_goal: f64,
    min_obstacle_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajRow {
        self.rows.last().expect("trajectory has at least one row")
    }

    pub fn final_distance_to_goal(&self) -> f64 {
        let r = self.last();
        Point2::new(r.x, r.y).distance(self.goal)
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.rows.iter().map(|r| Point2::new(r.x, r.y)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y,theta,v,omega,phi,theta_d,cell,saturated\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                r.x,
                r.y,
                r.theta,
                r.v,
                r.omega,
                r.phi,
                r.theta_d,
                r.cell.map_or(-1, |c| c as i64),
                u8::from(r.saturated)
            ));
        }
        s
    }

    pub fn summary_json(&self) -> String {
        let r = self.last();
        serde_json::to_string_pretty(&Summary {
            outcome: self.outcome,
            steps: self.rows.len().saturating_sub(1),
            final_time: r.t,
            final_pose: [r.x, r.y, r.theta],
            final_distance_to_goal: self.final_distance_to_goal(),
            min_obstacle_distance: self.min_obstacle_distance,
            error: self.error.as_deref(),
        })
        .expect("summary serializes")
    }
}

/// One classical Runge-Kutta step of the unicycle with inputs held constant.
pub fn rk4_unicycle(pose: Pose, v: f64, omega: f64, dt: f64) -> Pose {
    let f = |theta: f64| (v * theta.cos(), v * theta.sin());
    let th = pose.theta;
    let (k1x, k1y) = f(th);
    let (k2x, k2y) = f(th + 0.5 * dt * omega);
    let (k3x, k3y) = f(th + 0.5 * dt * omega);
    let (k4x, k4y) = f(th + dt * omega);
    Pose::new(
        pose.x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        pose.y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        pose.theta + dt * omega,
    )
}

/// True if the step from `a` to `b` stays in free space, including a check
/// that the chord does not cut through an obstacle corner.
pub fn step_is_free(env: &Environment, a: Point2, b: Point2) -> bool {
    env.is_free(b) && !env.boundary_segments().any(|(p, q)| segments_cross(a, b, p, q))
}

fn jitter_off_vertices(field: &GuidanceField, p: Point2) -> Point2 {
    let near = field.mesh.vertices().iter().find(|v| v.distance(p) <= VERTEX_JITTER);
    match near {
        Some(&v) => {
            log::warn!("start ({}, {}) is on a mesh vertex; nudging by {VERTEX_JITTER} m", p.x, p.y);
            let tri = (0..field.mesh.len())
                .find(|&t| field.mesh.triangles()[t].iter().any(|&i| field.mesh.vertices()[i] == v))
                .expect("vertex belongs to a triangle");
            let dir = crate::geometry::UnitVec2::new(field.mesh.centroid(tri) - v).unwrap();
            v + dir.vec() * (2.0 * VERTEX_JITTER)
        }
        None => p,
    }
}

/// Holds the caller-supplied inputs in place of the feedback law.
pub type InputOverride<'a> = &'a dyn Fn(f64, Pose) -> (f64, f64);

/// Integrates the closed loop from `config.start`.
pub fn simulate(env: &Environment, field: &GuidanceField, config: &SimConfig) -> Result<Trajectory> {
    simulate_with(env, field, config, None)
}

/// Like [`simulate`], optionally replacing the controller by fixed inputs.
pub fn simulate_with(
    env: &Environment,
    field: &GuidanceField,
    config: &SimConfig,
    inputs: Option<InputOverride<'_>>,
) -> Result<Trajectory> {
    config.validate()?;
    let mut pose = config.start_pose();
    if !env.is_free(pose.position()) {
        return Err(Error::StartNotFree(pose.position()));
    }
    let p0 = jitter_off_vertices(field, pose.position());
    pose.x = p0.x;
    pose.y = p0.y;
    if config.mode == SimMode::IntegralCurve {
        return simulate_holonomic(env, field, config, pose);
    }

    let goal = field.goal();
    let params = &config.controller;
    let mut rows = Vec::new();
    let mut hint = None;
    let mut stalled = 0;
    let mut min_dist = env.distance_to_obstacles(pose.position());
    let mut step = 0usize;
    let outcome;
    let mut error = None;
    loop {
        let t = step as f64 * config.dt;
        let p = pose.position();
        let ctrl = match inputs {
            Some(f) => {
                let (v, omega) = f(t, pose);
                Ok(controller::ControlOutput {
                    v,
                    omega,
                    phi: 0.0,
                    theta_d: pose.theta,
                    theta_d_dot: 0.0,
                    saturated: false,
                    triangle: None,
                    fault: false,
                })
            }
            None => controller::compute(pose, field, params, hint),
        };
        let ctrl = match ctrl {
            Ok(c) => c,
            Err(_) if p.distance(goal) < config.goal_radius => {
                // the field is singular at the goal itself
                rows.push(row(t, pose, None));
                outcome = Outcome::Goal;
                break;
            }
            Err(e) => {
                rows.push(row(t, pose, None));
                outcome = Outcome::Error;
                error = Some(e.to_string());
                break;
            }
        };
        hint = ctrl.triangle.or(hint);
        let done = if p.distance(goal) < config.goal_radius {
            Some(Outcome::Goal)
        } else if t >= config.t_max - 1e-9 * config.dt {
            Some(Outcome::Timeout)
        } else {
            None
        };
        if let Some(o) = done {
            rows.push(row(t, pose, Some(&ctrl)));
            outcome = o;
            break;
        }
        rows.push(row(t, pose, Some(&ctrl)));

        let next = rk4_unicycle(pose, ctrl.v, ctrl.omega, config.dt);
        step += 1;
        if !step_is_free(env, p, next.position()) {
            rows.push(row(step as f64 * config.dt, next, None));
            outcome = Outcome::Collision;
            break;
        }
        min_dist = min_dist.min(env.distance_to_obstacles(next.position()));
        pose = next;
        if ctrl.v == 0.0 && ctrl.omega.abs() < 1e-9 {
            stalled += 1;
            if stalled >= STALL_STEPS {
                rows.push(row(step as f64 * config.dt, pose, None));
                outcome = Outcome::Stall;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(Trajectory {
        rows,
        outcome,
        dt: config.dt,
        goal,
        min_obstacle_distance: min_dist,
        error,
    })
}

fn row(t: f64, pose: Pose, ctrl: Option<&controller::ControlOutput>) -> TrajRow {
    TrajRow {
        t,
        x: pose.x,
        y: pose.y,
        theta: pose.theta,
        v: ctrl.map_or(0.0, |c| c.v),
        omega: ctrl.map_or(0.0, |c| c.omega),
        phi: ctrl.map_or(0.0, |c| c.phi),
        theta_d: ctrl.map_or(pose.theta, |c| c.theta_d),
        cell: ctrl.and_then(|c| c.triangle),
        saturated: ctrl.is_some_and(|c| c.saturated),
    }
}

fn simulate_holonomic(
    env: &Environment,
    field: &GuidanceField,
    config: &SimConfig,
    start: Pose,
) -> Result<Trajectory> {
    let v = config.controller.v_max;
    let budget = (config.t_max / config.dt).ceil() as usize;
    let curve = trace_integral_curve(env, field, start.position(), v * config.dt, budget, config.goal_radius)?;
    let rows = curve
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let theta = field.target_heading(p, None).map_or(0.0, |x| x.0);
            TrajRow {
                t: i as f64 * config.dt,
                x: p.x,
                y: p.y,
                theta,
                v,
                omega: 0.0,
                phi: 0.0,
                theta_d: theta,
                cell: field.mesh.locate(p, None),
                saturated: false,
            }
        })
        .collect();
    Ok(Trajectory {
        rows,
        outcome: curve.outcome,
        dt: config.dt,
        goal: field.goal(),
        min_obstacle_distance: curve.min_obstacle_distance,
        error: curve.error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralCurve {
    pub points: Vec<Point2>,
    pub outcome: Outcome,
    pub min_obstacle_distance: f64,
    pub error: Option<String>,
}

pub const DEFAULT_CURVE_STEP: f64 = 1e-3;

/// Follows `p' = V(p)` with fixed arclength RK4 steps until the goal radius,
/// the step budget, or a field error.
pub fn trace_integral_curve(
    env: &Environment,
    field: &GuidanceField,
    start: Point2,
    step: f64,
    budget: usize,
    goal_radius: f64,
) -> Result<IntegralCurve> {
    if !env.is_free(start) {
        return Err(Error::StartNotFree(start));
    }
    let start = jitter_off_vertices(field, start);
    let goal = field.goal();
    let mut points = vec![start];
    let mut p = start;
    let mut hint = None;
    let mut min_dist = env.distance_to_obstacles(p);
    let mut outcome = Outcome::Timeout;
    let mut error = None;
    for _ in 0..=budget {
        if p.distance(goal) < goal_radius {
            outcome = Outcome::Goal;
            break;
        }
        if points.len() > budget {
            break;
        }
        let k1 = match field.eval(p, hint) {
            Ok(s) => {
                hint = Some(s.triangle);
                s.vector.vec()
            }
            Err(e) => {
                outcome = Outcome::Error;
                error = Some(e.to_string());
                break;
            }
        };
        let stage = |q: Point2| field.eval(q, hint).map(|s| s.vector.vec());
        let rk = (|| {
            let k2 = stage(p + k1 * (0.5 * step))?;
            let k3 = stage(p + k2 * (0.5 * step))?;
            let k4 = stage(p + k3 * step)?;
            Ok::<_, Error>((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0))
        })();
        // stages can fall outside the mesh near reflex corners; Euler is
        // always defined there
        let delta = rk.unwrap_or(k1 * step);
        let next = p + delta;
        if !step_is_free(env, p, next) {
            points.push(next);
            outcome = Outcome::Collision;
            break;
        }
        min_dist = min_dist.min(env.distance_to_obstacles(next));
        p = next;
        points.push(p);
    }
    Ok(IntegralCurve {
        points,
        outcome,
        min_obstacle_distance: min_dist,
        error,
    })
}

/// Draws `n` start positions uniformly from the strict interior of the
/// free space.
pub fn sample_starts(env: &Environment, n: usize, seed: u64) -> Result<Vec<Point2>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = env.bounds();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts >= MAX_SAMPLING_ATTEMPTS {
            return Err(Error::SamplingExhausted(attempts));
        }
        attempts += 1;
        let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if env.in_interior(p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Same-start integral curves under two fields.
#[derive(Debug, Clone)]
pub struct CurvePair {
    pub start: Point2,
    pub a: IntegralCurve,
    pub b: IntegralCurve,
}

/// Traces integral curves of both fields from the same seeded starts.
pub fn batch_curves(
    env: &Environment,
    field_a: &GuidanceField,
    field_b: &GuidanceField,
    n_starts: usize,
    seed: u64,
    step: f64,
    budget: usize,
    goal_radius: f64,
) -> Result<Vec<CurvePair>> {
    let starts = sample_starts(env, n_starts, seed)?;
    starts
        .into_par_iter()
        .map(|start| {
            Ok(CurvePair {
                start,
                a: trace_integral_curve(env, field_a, start, step, budget, goal_radius)?,
                b: trace_integral_curve(env, field_b, start, step, budget, goal_radius)?,
            })
        })
        .collect()
}

/// Same-start closed-loop runs under two fields.
#[derive(Debug, Clone)]
pub struct TrajectoryPair {
    pub start: Point2,
    pub a: Trajectory,
    pub b: Trajectory,
}

/// Initial heading opposite the field at `p`, so the run starts with
/// `phi = pi`.
pub fn reversed_heading(field: &GuidanceField, p: Point2) -> Result<f64> {
    let (theta_d, _) = field.target_heading(p, None)?;
    Ok(controller::wrap(theta_d + std::f64::consts::PI))
}

/// Closed-loop runs of both fields from the same seeded starts, each
/// starting opposite its own field direction.
pub fn batch_closed_loop(
    env: &Environment,
    field_a: &GuidanceField,
    field_b: &GuidanceField,
    n_starts: usize,
    seed: u64,
    template: &SimConfig,
) -> Result<Vec<TrajectoryPair>> {
    let starts = sample_starts(env, n_starts, seed)?;
    starts
        .into_par_iter()
        .map(|start| {
            let run = |field: &GuidanceField| {
                let mut cfg = template.clone();
                cfg.start = [start.x, start.y, reversed_heading(field, start)?];
                simulate(env, field, &cfg)
            };
            Ok(TrajectoryPair {
                start,
                a: run(field_a)?,
                b: run(field_b)?,
            })
        })
        .collect()
}
