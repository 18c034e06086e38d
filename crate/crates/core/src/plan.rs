//! Shortest-path successor map over the triangle adjacency graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point2, UnitVec2};
use crate::mesh::TriMesh;

/// Per-cell exit data for a non-goal triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitData {
    pub successor: usize,
    /// Edge index (0..3) of the exit face within the triangle.
    pub edge: usize,
    /// Exit face vertex indices, lower index first.
    pub face: (usize, usize),
    pub opposite_vertex: usize,
    /// Unit vectors from the opposite vertex toward `face.0` and `face.1`.
    pub boundary: (UnitVec2, UnitVec2),
    /// Unit normal of the exit face pointing into the successor.
    pub outward_normal: UnitVec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlan {
    pub goal: Point2,
    pub goal_triangle: usize,
    /// Centroid-graph distance to the goal triangle; infinite if unreachable.
    pub distance: Vec<f64>,
    exits: Vec<Option<ExitData>>,
    /// Triangles with no path to the goal triangle.
    pub unreachable: Vec<usize>,
}

#[derive(Serialize)]
struct PlanFile {
    goal_triangle: usize,
    successor: Vec<i64>,
    exit_faces: Vec<Option<[usize; 2]>>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on distance, then on index
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Unit vectors from `apex` toward the two exit-face vertices, lower vertex
/// index first.
pub fn boundary_vectors_of(
    mesh: &TriMesh,
    apex: usize,
    face: (usize, usize),
) -> (UnitVec2, UnitVec2) {
    let (a, b) = (face.0.min(face.1), face.0.max(face.1));
    let v = mesh.vertices();
    (
        UnitVec2::new(v[a] - v[apex]).expect("distinct vertices"),
        UnitVec2::new(v[b] - v[apex]).expect("distinct vertices"),
    )
}

/// Outward unit normal of edge `k` of the counterclockwise triangle `t`.
pub fn outward_normal(mesh: &TriMesh, t: usize, k: usize) -> UnitVec2 {
    let (p, q) = mesh.edge_points(t, k);
    let d = q - p;
    UnitVec2::new(Point2::new(d.y, -d.x)).expect("non-degenerate edge")
}

/// Computes the successor map toward the triangle containing `goal`.
pub fn plan(mesh: &TriMesh, goal: Point2) -> Result<DiscretePlan> {
    let goal_triangle = mesh.locate(goal, None).ok_or(Error::GoalOutsideMesh(goal))?;
    let n = mesh.len();
    let centroids: Vec<Point2> = (0..n).map(|t| mesh.centroid(t)).collect();
    let mut distance = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    distance[goal_triangle] = 0.0;
    heap.push(Entry(0.0, goal_triangle));
    while let Some(Entry(d, t)) = heap.pop() {
        if done[t] {
            continue;
        }
        done[t] = true;
        for nb in mesh.neighbors(t).into_iter().flatten() {
            let nd = d + centroids[t].distance(centroids[nb]);
            if nd < distance[nb] {
                distance[nb] = nd;
                heap.push(Entry(nd, nb));
            }
        }
    }

    let mut exits = vec![None; n];
    let mut unreachable = Vec::new();
    for t in 0..n {
        if t == goal_triangle {
            continue;
        }
        if !distance[t].is_finite() {
            unreachable.push(t);
            continue;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for k in 0..3 {
            if let Some(nb) = mesh.neighbor(t, k) {
                let via = distance[nb] + centroids[t].distance(centroids[nb]);
                let better = match best {
                    None => true,
                    Some((bd, bn, _)) => via < bd || (via == bd && nb < bn),
                };
                if better {
                    best = Some((via, nb, k));
                }
            }
        }
        let (_, successor, edge) = best.expect("reachable cell has a neighbor");
        let (a, b) = mesh.edge_vertices(t, edge);
        let face = (a.min(b), a.max(b));
        let opposite_vertex = mesh.triangles()[t][(edge + 2) % 3];
        exits[t] = Some(ExitData {
            successor,
            edge,
            face,
            opposite_vertex,
            boundary: boundary_vectors_of(mesh, opposite_vertex, face),
            outward_normal: outward_normal(mesh, t, edge),
        });
    }
    if !unreachable.is_empty() {
        log::warn!(
            "free space is disconnected: {} triangles cannot reach the goal",
            unreachable.len()
        );
    }
    Ok(DiscretePlan {
        goal,
        goal_triangle,
        distance,
        exits,
        unreachable,
    })
}

impl DiscretePlan {
    pub fn len(&self) -> usize {
        self.exits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exits.is_empty()
    }

    pub fn exit(&self, t: usize) -> Option<&ExitData> {
        self.exits[t].as_ref()
    }

    pub fn successor(&self, t: usize) -> Option<usize> {
        self.exits[t].map(|e| e.successor)
    }

    /// True for the goal triangle and every triangle with a successor.
    pub fn is_planned(&self, t: usize) -> bool {
        t == self.goal_triangle || self.exits[t].is_some()
    }

    /// Non-goal planned cells in increasing index order.
    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.exits.len()).filter(|&t| self.exits[t].is_some())
    }

    /// Follows successors from `t` to the goal triangle.
    pub fn path(&self, mut t: usize) -> Vec<usize> {
        let mut out = vec![t];
        while let Some(s) = self.successor(t) {
            t = s;
            out.push(t);
            if out.len() > self.exits.len() + 1 {
                break;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let file = PlanFile {
            goal_triangle: self.goal_triangle,
            successor: (0..self.len())
                .map(|t| self.successor(t).map_or(-1, |s| s as i64))
                .collect(),
            exit_faces: (0..self.len())
                .map(|t| self.exits[t].map(|e| [e.face.0, e.face.1]))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("plan serializes")
    }
}
