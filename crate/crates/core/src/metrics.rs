//! Path-quality and control metrics, and paired method comparisons.

use serde::Serialize;

use crate::blend::wrap_angle;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::sim::{Outcome, Trajectory};

pub const DEFAULT_RESAMPLE_DS: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathMetrics {
    pub path_length: f64,
    pub max_curvature: f64,
    pub total_bending: f64,
    pub total_turning: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlMetrics {
    pub arrival_time: f64,
    pub path_length: f64,
    pub average_speed: f64,
    pub angular_effort: f64,
    pub time_saturated_pct: f64,
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Points at uniform arclength spacing `length / round(length / ds)`,
/// including both endpoints.
pub fn resample(points: &[Point2], ds: f64) -> Vec<Point2> {
    let length = polyline_length(points);
    let m = ((length / ds).round() as usize).max(1);
    let step = length / m as f64;
    let mut out = Vec::with_capacity(m + 1);
    out.push(points[0]);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for i in 1..m {
        let s = i as f64 * step;
        while seg + 2 < points.len() && seg_start + points[seg].distance(points[seg + 1]) < s {
            seg_start += points[seg].distance(points[seg + 1]);
            seg += 1;
        }
        let len = points[seg].distance(points[seg + 1]);
        let u = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg].lerp(points[seg + 1], u));
    }
    out.push(*points.last().unwrap());
    out
}

/// Curvature statistics from heading differences of the uniformly
/// resampled polyline.
pub fn path_metrics(points: &[Point2], ds: f64) -> Result<PathMetrics> {
    let path_length = polyline_length(points);
    if points.len() < 2 || !(path_length >= 2.0 * ds) {
        return Err(Error::DegeneratePath {
            length: path_length,
            min: 2.0 * ds,
        });
    }
    let r = resample(points, ds);
    let h = path_length / (r.len() - 1) as f64;
    let headings: Vec<f64> = r
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d.y.atan2(d.x)
        })
        .collect();
    let (mut bending, mut turning, mut max_k) = (0.0, 0.0, 0.0f64);
    for w in headings.windows(2) {
        let k = wrap_angle(w[1] - w[0]) / h;
        bending += k * k * h;
        turning += k.abs() * h;
        max_k = max_k.max(k.abs());
    }
    Ok(PathMetrics {
        path_length,
        max_curvature: max_k,
        total_bending: bending,
        total_turning: turning,
    })
}

/// Effort and timing of a run that reached the goal. Saturation is counted
/// over the control steps, excluding the terminal row.
pub fn control_metrics(traj: &Trajectory) -> Result<ControlMetrics> {
    if traj.outcome != Outcome::Goal {
        return Err(Error::NotArrived);
    }
    let rows = &traj.rows;
    let arrival_time = traj.last().t;
    let path_length = polyline_length(&traj.positions());
    let angular_effort = rows
        .windows(2)
        .map(|w| 0.5 * (w[0].omega.powi(2) + w[1].omega.powi(2)) * (w[1].t - w[0].t))
        .sum();
    let steps = rows.len().saturating_sub(1);
    let saturated = rows[..steps].iter().filter(|r| r.saturated).count();
    Ok(ControlMetrics {
        arrival_time,
        path_length,
        average_speed: if arrival_time > 0.0 { path_length / arrival_time } else { 0.0 },
        angular_effort,
        time_saturated_pct: if steps > 0 { 100.0 * saturated as f64 / steps as f64 } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodStats {
    pub method: &'static str,
    pub mean: f64,
    pub std: f64,
    /// Relative improvement of this method over the other one; zero for the
    /// reference row.
    pub improvement_pct: f64,
    pub win_rate_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: String,
    pub higher_is_better: bool,
    pub rows: [MethodStats; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub pairs: usize,
    /// Pairs dropped because at least one run did not reach the goal.
    pub excluded: usize,
    pub metrics: Vec<MetricComparison>,
}

impl ComparisonReport {
    pub fn metric(&self, name: &str) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl MetricComparison {
    /// Improvement of the first method over the second, in percent.
    pub fn improvement_pct(&self) -> f64 {
        self.rows[0].improvement_pct
    }

    pub fn win_rate_pct(&self) -> f64 {
        self.rows[0].win_rate_pct
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Paired comparison of `a` (candidate) against `b` (reference) on one
/// metric. Ties count half a win.
pub fn compare_metric(
    name: &str,
    names: [&'static str; 2],
    a: &[f64],
    b: &[f64],
    higher_is_better: bool,
) -> Result<MetricComparison> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let mut wins = 0.0;
    for (x, y) in a.iter().zip(b) {
        let better = if higher_is_better { x > y } else { x < y };
        if x == y {
            wins += 0.5;
        } else if better {
            wins += 1.0;
        }
    }
    let n = a.len() as f64;
    let win_a = if a.is_empty() { f64::NAN } else { 100.0 * wins / n };
    let sign = if higher_is_better { -1.0 } else { 1.0 };
    let improvement = |own: f64, other: f64| sign * (other - own) / other * 100.0;
    Ok(MetricComparison {
        metric: name.to_string(),
        higher_is_better,
        rows: [
            MethodStats {
                method: names[0],
                mean: ma,
                std: sa,
                improvement_pct: improvement(ma, mb),
                win_rate_pct: win_a,
            },
            MethodStats {
                method: names[1],
                mean: mb,
                std: sb,
                improvement_pct: 0.0,
                win_rate_pct: 100.0 - win_a,
            },
        ],
    })
}

pub const PATH_METRICS: [&str; 4] = ["total_bending", "total_turning", "path_length", "max_curvature"];
pub const CONTROL_METRICS: [&str; 5] = [
    "arrival_time",
    "path_length",
    "average_speed",
    "angular_effort",
    "time_saturated_pct",
];

fn path_value(m: &PathMetrics, name: &str) -> f64 {
    match name {
        "total_bending" => m.total_bending,
        "total_turning" => m.total_turning,
        "path_length" => m.path_length,
        "max_curvature" => m.max_curvature,
        _ => unreachable!("unknown path metric {name}"),
    }
}

fn control_value(m: &ControlMetrics, name: &str) -> f64 {
    match name {
        "arrival_time" => m.arrival_time,
        "path_length" => m.path_length,
        "average_speed" => m.average_speed,
        "angular_effort" => m.angular_effort,
        "time_saturated_pct" => m.time_saturated_pct,
        _ => unreachable!("unknown control metric {name}"),
    }
}

/// Compares paired path metrics. `None` entries (runs that did not reach
/// the goal or were too short to measure) drop their pair.
pub fn compare_paths(
    names: [&'static str; 2],
    a: &[Option<PathMetrics>],
    b: &[Option<PathMetrics>],
) -> Result<ComparisonReport> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let kept: Vec<(PathMetrics, PathMetrics)> =
        a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    let metrics = PATH_METRICS
        .iter()
        .map(|&name| {
            let xa: Vec<f64> = kept.iter().map(|(x, _)| path_value(x, name)).collect();
            let xb: Vec<f64> = kept.iter().map(|(_, y)| path_value(y, name)).collect();
            compare_metric(name, names, &xa, &xb, false)
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonReport {
        pairs: kept.len(),
        excluded: a.len() - kept.len(),
        metrics,
    })
}

/// Compares paired control metrics; average speed is higher-is-better.
pub fn compare_controls(
    names: [&'static str; 2],
    a: &[Option<ControlMetrics>],
    b: &[Option<ControlMetrics>],
) -> Result<ComparisonReport> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let kept: Vec<(ControlMetrics, ControlMetrics)> =
        a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    let metrics = CONTROL_METRICS
        .iter()
        .map(|&name| {
            let xa: Vec<f64> = kept.iter().map(|(x, _)| control_value(x, name)).collect();
            let xb: Vec<f64> = kept.iter().map(|(_, y)| control_value(y, name)).collect();
            compare_metric(name, names, &xa, &xb, name == "average_speed")
        })
        .collect::<Result<_>>()?;
    Ok(ComparisonReport {
        pairs: kept.len(),
        excluded: a.len() - kept.len(),
        metrics,
    })
}
