use thiserror::Error;

use crate::geometry::Point2;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("triangulation failed: {0}")]
    TriangulationFailure(String),
    #[error("mesh invalid: {0}")]
    MeshInvalid(String),
    #[error("goal ({}, {}) is not inside the mesh", .0.x, .0.y)]
    GoalOutsideMesh(Point2),
    #[error("plan has no cells besides the goal cell")]
    EmptyPlan,
    #[error("QP solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("point ({}, {}) is outside the free space", .0.x, .0.y)]
    OutsideFreeSpace(Point2),
    #[error("point ({}, {}) coincides with a mesh vertex", .0.x, .0.y)]
    VertexSingularity(Point2),
    #[error("point ({}, {}) is the goal itself; the goal-cell direction is undefined", .0.x, .0.y)]
    AtGoal(Point2),
    #[error("start ({}, {}) is not in free space", .0.x, .0.y)]
    StartNotFree(Point2),
    #[error("rejection sampling exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error("path too short for resampling ({length} m < {min} m)")]
    DegeneratePath { length: f64, min: f64 },
    #[error("trajectory did not reach the goal")]
    NotArrived,
    #[error("paired result lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
