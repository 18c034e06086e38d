//! Workspace, obstacles and goal; validation and free-space queries.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    classify_point, point_segment_distance, polygon_edges, polygon_is_simple,
    polygon_signed_area, segments_intersect, Containment, Point2,
};

/// Polygonal workspace with polygonal obstacles and a goal point.
///
/// Polygons are stored counterclockwise regardless of the input orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawEnvironment")]
pub struct Environment {
    pub workspace: Vec<Point2>,
    pub obstacles: Vec<Vec<Point2>>,
    pub goal: Point2,
}

#[derive(Deserialize)]
struct RawEnvironment {
    workspace: Vec<Point2>,
    #[serde(default)]
    obstacles: Vec<Vec<Point2>>,
    goal: Point2,
}

impl From<RawEnvironment> for Environment {
    fn from(raw: RawEnvironment) -> Self {
        Environment::new(raw.workspace, raw.obstacles, raw.goal)
    }
}

fn make_ccw(mut poly: Vec<Point2>) -> Vec<Point2> {
    if polygon_signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Which polygon a validation issue refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum PolygonRef {
    Workspace,
    Obstacle(usize),
    Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub polygon: PolygonRef,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.polygon {
            PolygonRef::Workspace => write!(f, "workspace: {}", self.message),
            PolygonRef::Obstacle(i) => write!(f, "obstacle {i}: {}", self.message),
            PolygonRef::Goal => write!(f, "goal: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, polygon: PolygonRef, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            polygon,
            message: message.into(),
        });
    }

    pub fn has_message(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, issue) in self.issues.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl Environment {
    pub fn new(workspace: Vec<Point2>, obstacles: Vec<Vec<Point2>>, goal: Point2) -> Self {
        Self {
            workspace: make_ccw(workspace),
            obstacles: obstacles.into_iter().map(make_ccw).collect(),
            goal,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "environment",
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let finite = |poly: &[Point2]| poly.iter().all(|p| p.is_finite());

        if !finite(&self.workspace) {
            report.push(PolygonRef::Workspace, "non-finite coordinate");
        } else if !polygon_is_simple(&self.workspace) {
            report.push(PolygonRef::Workspace, "workspace not simple");
        }

        let mut simple = vec![false; self.obstacles.len()];
        for (i, obs) in self.obstacles.iter().enumerate() {
            if !finite(obs) {
                report.push(PolygonRef::Obstacle(i), "non-finite coordinate");
            } else if !polygon_is_simple(obs) {
                report.push(PolygonRef::Obstacle(i), "obstacle not simple");
            } else {
                simple[i] = true;
            }
        }

        for (i, obs) in self.obstacles.iter().enumerate() {
            if !simple[i] {
                continue;
            }
            let inside = obs
                .iter()
                .all(|&p| classify_point(&self.workspace, p) == Containment::Inside)
                && !polygon_edges(obs).any(|(a, b)| {
                    polygon_edges(&self.workspace).any(|(c, d)| segments_intersect(a, b, c, d))
                });
            if !inside {
                report.push(PolygonRef::Obstacle(i), "obstacle not inside workspace interior");
            }
        }

        for i in 0..self.obstacles.len() {
            for j in (i + 1)..self.obstacles.len() {
                if !(simple[i] && simple[j]) {
                    continue;
                }
                if polygons_overlap(&self.obstacles[i], &self.obstacles[j]) {
                    report.push(
                        PolygonRef::Obstacle(j),
                        format!("obstacle intersects obstacle {i}"),
                    );
                }
            }
        }

        if !self.goal.is_finite() {
            report.push(PolygonRef::Goal, "non-finite goal");
        } else if !self.in_interior(self.goal) {
            report.push(PolygonRef::Goal, "goal not in free space");
        }
        report
    }

    /// Validates and converts a failing report into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidEnvironment(report.to_string()))
        }
    }

    /// Closed free-space membership: boundary points are free.
    pub fn is_free(&self, p: Point2) -> bool {
        classify_point(&self.workspace, p) != Containment::Outside
            && self
                .obstacles
                .iter()
                .all(|o| classify_point(o, p) != Containment::Inside)
    }

    /// Strict interior of the free space.
    pub fn in_interior(&self, p: Point2) -> bool {
        classify_point(&self.workspace, p) == Containment::Inside
            && self
                .obstacles
                .iter()
                .all(|o| classify_point(o, p) == Containment::Outside)
    }

    /// Distance to the nearest obstacle or workspace boundary segment.
    pub fn distance_to_obstacles(&self, p: Point2) -> f64 {
        self.boundary_segments()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// All workspace and obstacle boundary segments.
    pub fn boundary_segments(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        polygon_edges(&self.workspace).chain(self.obstacles.iter().flat_map(|o| polygon_edges(o)))
    }

    /// Area of the free space.
    pub fn free_area(&self) -> f64 {
        polygon_signed_area(&self.workspace)
            - self
                .obstacles
                .iter()
                .map(|o| polygon_signed_area(o))
                .sum::<f64>()
    }

    /// Axis-aligned bounding box of the workspace as `(min, max)`.
    pub fn bounds(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.workspace {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }
}

fn polygons_overlap(a: &[Point2], b: &[Point2]) -> bool {
    polygon_edges(a).any(|(p, q)| polygon_edges(b).any(|(r, s)| segments_intersect(p, q, r, s)))
        || classify_point(a, b[0]) != Containment::Outside
        || classify_point(b, a[0]) != Containment::Outside
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cx: f64, cy: f64, half: f64) -> Vec<Point2> {
        vec![
            Point2::new(cx - half, cy - half),
            Point2::new(cx + half, cy - half),
            Point2::new(cx + half, cy + half),
            Point2::new(cx - half, cy + half),
        ]
    }

    #[test]
    fn empty_room_is_valid() {
        let env = Environment::new(square(0.0, 0.0, 5.0), vec![], Point2::new(1.0, 1.0));
        assert!(env.validate().is_valid());
    }

    #[test]
    fn goal_inside_obstacle_is_reported() {
        let env = Environment::new(
            square(0.0, 0.0, 5.0),
            vec![square(1.0, 1.0, 0.5)],
            Point2::new(1.0, 1.0),
        );
        let report = env.validate();
        assert!(report.has_message("goal not in free space"));
        assert_eq!(report.issues[0].polygon, PolygonRef::Goal);
    }

    #[test]
    fn bowtie_obstacle_is_reported() {
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let env = Environment::new(square(0.0, 0.0, 5.0), vec![bowtie], Point2::new(-3.0, -3.0));
        let report = env.validate();
        assert!(report.has_message("obstacle not simple"));
        assert_eq!(report.issues[0].polygon, PolygonRef::Obstacle(0));
    }

    #[test]
    fn overlapping_and_escaping_obstacles_are_reported() {
        let env = Environment::new(
            square(0.0, 0.0, 5.0),
            vec![square(0.0, 0.0, 1.0), square(0.5, 0.5, 1.0), square(5.0, 0.0, 1.0)],
            Point2::new(-3.0, -3.0),
        );
        let report = env.validate();
        assert!(report.has_message("intersects obstacle 0"));
        assert!(report
            .issues
            .iter()
            .any(|i| i.polygon == PolygonRef::Obstacle(2) && i.message.contains("inside workspace")));
    }

    #[test]
    fn validate_is_idempotent() {
        let env = Environment::new(square(0.0, 0.0, 5.0), vec![square(0.0, 0.0, 1.0)], Point2::new(0.0, 0.0));
        assert_eq!(env.validate(), env.validate());
    }

    #[test]
    fn clockwise_input_is_normalized() {
        let mut ws = square(0.0, 0.0, 5.0);
        ws.reverse();
        let env = Environment::new(ws, vec![], Point2::new(0.0, 0.0));
        assert!(polygon_signed_area(&env.workspace) > 0.0);
    }

    #[test]
    fn free_space_membership() {
        let env = Environment::new(square(0.0, 0.0, 5.0), vec![square(0.0, 0.0, 0.5)], Point2::new(3.0, 3.0));
        assert!(!env.is_free(Point2::new(0.0, 0.0)));
        assert!(env.is_free(Point2::new(0.5, 0.1)));
        assert!(env.is_free(Point2::new(2.0, 2.0)));
        assert!(!env.is_free(Point2::new(6.0, 0.0)));
        let empty = Environment::new(square(0.0, 0.0, 5.0), vec![], Point2::new(3.0, 3.0));
        assert!(empty.is_free(Point2::new(0.0, 0.0)));
    }

    #[test]
    fn distance_examples() {
        let env = Environment::new(square(0.0, 0.0, 50.0), vec![square(0.0, 0.0, 0.5)], Point2::new(3.0, 3.0));
        assert!((env.distance_to_obstacles(Point2::new(1.5, 0.0)) - 1.0).abs() < 1e-12);
        assert_eq!(env.distance_to_obstacles(Point2::new(0.5, 0.2)), 0.0);
    }

    #[test]
    fn parses_json() {
        let env = Environment::from_json(
            r#"{"workspace": [[0,0],[4,0],[4,4],[0,4]], "obstacles": [[[1,1],[1,2],[2,2],[2,1]]], "goal": [3,3]}"#,
        )
        .unwrap();
        assert_eq!(env.obstacles.len(), 1);
        assert!(polygon_signed_area(&env.obstacles[0]) > 0.0);
        assert!(Environment::from_json("{").is_err());
    }
}
