//! Guidance vector fields over triangulated polygonal free space and a
//! saturated unicycle controller that follows them.

pub mod blend;
pub mod bundled;
pub mod controller;
pub mod env;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod metrics;
pub mod plan;
pub mod qp;
pub mod sim;

pub use blend::{bump, wrap_angle, GuidanceField};
pub use env::Environment;
pub use error::{Error, Result};
pub use geometry::{Point2, UnitVec2};
pub use mesh::{triangulate, TriMesh};
pub use plan::{plan, DiscretePlan};
pub use qp::Method;
pub use controller::{ControllerParams, Pose, VLaw};
pub use sim::{simulate, Outcome, SimConfig, Trajectory};
