//! Reference environments shipped with the crate.

use crate::env::Environment;

pub const CLUTTERED_JSON: &str = include_str!("../envs/cluttered.json");
pub const CORRIDOR_JSON: &str = include_str!("../envs/corridor.json");

/// 10 m room with eight convex obstacles.
pub fn cluttered() -> Environment {
    Environment::from_json(CLUTTERED_JSON).expect("bundled environment parses")
}

/// Serpentine 16 m x 5 m passage with three obstacles.
pub fn corridor() -> Environment {
    Environment::from_json(CORRIDOR_JSON).expect("bundled environment parses")
}

/// Both reference environments with their names.
pub fn all() -> [(&'static str, Environment); 2] {
    [("cluttered", cluttered()), ("corridor", corridor())]
}
