//! Face vector assignment and the blended guidance field.
//!
//! Inside triangle `t` with edge distances `d_j` and blend band `w = beta * r`
//! (`r` the inradius), let `eta_j = d_j / w`. The cell weight is
//! `P = prod_j bump(eta_j)` and the face mixture is
//! `F = sum_j mu_j V_f,j` with `mu_j` proportional to `(1 - bump(eta_j)) / d_j`.
//! The field is `normalize(P * V_c + (1 - P) * F)`: exactly the cell vector
//! wherever every edge is at least one band away, exactly the face vector on
//! an edge, and continuous across shared plan faces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geometry::{Point2, UnitVec2};
use crate::mesh::TriMesh;
use crate::plan::{self, outward_normal, DiscretePlan};
use crate::qp::{self, AssignmentFile, CellFieldAssignment, Method};

/// Distance (m) below which a point is treated as a mesh vertex.
pub const VERTEX_EPS: f64 = 1e-12;
pub const DEFAULT_BLEND_WIDTH: f64 = 1.0;

fn lambda(eta: f64) -> f64 {
    (-1.0 / eta).exp() / eta
}

/// Smooth step: 0 for `eta <= 0`, 1 for `eta >= 1`.
pub fn bump(eta: f64) -> f64 {
    if eta <= 0.0 {
        0.0
    } else if eta >= 1.0 {
        1.0
    } else {
        let a = lambda(eta);
        a / (a + lambda(1.0 - eta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaceKind {
    /// The triangle's own exit face.
    Exit,
    /// A neighbor's exit face leading into this non-goal triangle; shares
    /// the neighbor's exit vector.
    Entry,
    NonExit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceField {
    pub vector: UnitVec2,
    pub kind: FaceKind,
}

/// Face vectors per triangle, indexed like the mesh edges.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFieldAssignment {
    pub faces: Vec<[FaceField; 3]>,
}

/// Vector carried by the exit face of non-goal cell `t`.
///
/// The QP field averages the two cell vectors across the face; the baseline
/// uses the face's outward normal, as do faces into the goal cell.
fn exit_vector(plan: &DiscretePlan, cells: &CellFieldAssignment, t: usize) -> UnitVec2 {
    let e = plan.exit(t).expect("planned cell");
    match cells.method {
        Method::Baseline => e.outward_normal,
        // the goal cell keeps inward normals on all its edges, so faces
        // leading into it carry the matching normal
        _ if e.successor == plan.goal_triangle => e.outward_normal,
        Method::Qp => {
            let vi = cells.cell_vector(t).expect("planned cell has a vector");
            let vj = cells.cell_vector(e.successor).expect("successor has a vector");
            UnitVec2::new(vi.vec() + vj.vec()).unwrap_or(e.outward_normal)
        }
    }
}

pub fn assign_faces(mesh: &TriMesh, plan: &DiscretePlan, cells: &CellFieldAssignment) -> FaceFieldAssignment {
    let faces = (0..mesh.len())
        .map(|t| {
            std::array::from_fn(|k| {
                if plan.exit(t).is_some_and(|e| e.edge == k) {
                    return FaceField {
                        vector: exit_vector(plan, cells, t),
                        kind: FaceKind::Exit,
                    };
                }
                // goal-cell edges keep inward normals: shared exit vectors
                // there can lean into a corner and trap the flow
                if let Some(n) = mesh.neighbor(t, k).filter(|_| t != plan.goal_triangle) {
                    if plan.exit(n).is_some_and(|e| e.successor == t) {
                        return FaceField {
                            vector: exit_vector(plan, cells, n),
                            kind: FaceKind::Entry,
                        };
                    }
                }
                let out = outward_normal(mesh, t, k);
                FaceField {
                    vector: UnitVec2::new(-out.vec()).unwrap(),
                    kind: FaceKind::NonExit,
                }
            })
        })
        .collect();
    FaceFieldAssignment { faces }
}

/// Result of one field evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub vector: UnitVec2,
    pub triangle: usize,
}

#[derive(Debug, Clone)]
pub struct GuidanceField {
    pub mesh: TriMesh,
    pub plan: DiscretePlan,
    pub cells: CellFieldAssignment,
    pub faces: FaceFieldAssignment,
    pub blend_width: f64,
    bands: Vec<[f64; 3]>,
    /// Per-triangle edge line data: unit inward normal and offset.
    lines: Vec<[(Point2, f64); 3]>,
}

#[derive(Serialize, Deserialize)]
struct FieldFile {
    blend_width: f64,
    goal: Point2,
    mesh: serde_json::Value,
    #[serde(flatten)]
    assignment: AssignmentFile,
}

impl GuidanceField {
    pub fn new(
        mesh: TriMesh,
        plan: DiscretePlan,
        cells: CellFieldAssignment,
        blend_width: f64,
    ) -> Result<Self> {
        if !(blend_width > 0.0 && blend_width <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "blend width {blend_width} outside (0, 1]"
            )));
        }
        let faces = assign_faces(&mesh, &plan, &cells);
        let lines: Vec<[(Point2, f64); 3]> = (0..mesh.len())
            .map(|t| {
                std::array::from_fn(|k| {
                    let (a, _) = mesh.edge_points(t, k);
                    let n = -outward_normal(&mesh, t, k).vec();
                    (n, n.dot(a))
                })
            })
            .collect();
        let bands = (0..mesh.len())
            .map(|t| {
                let band = blend_width * mesh.inradius(t);
                std::array::from_fn(|k| {
                    if t == plan.goal_triangle {
                        // keep each band clear of the goal so the goal
                        // direction alone governs its neighborhood
                        let (n, c) = lines[t][k];
                        band.min(0.5 * (n.dot(plan.goal) - c))
                    } else {
                        band
                    }
                })
            })
            .collect();
        Ok(Self {
            mesh,
            plan,
            cells,
            faces,
            blend_width,
            bands,
            lines,
        })
    }

    /// Plans on `mesh`, assigns cell vectors with `method` and blends.
    pub fn build(mesh: TriMesh, goal: Point2, method: Method, blend_width: f64) -> Result<Self> {
        let plan = plan::plan(&mesh, goal)?;
        let cells = qp::assign(method, &plan, &mesh)?;
        Self::new(mesh, plan, cells, blend_width)
    }

    pub fn goal(&self) -> Point2 {
        self.plan.goal
    }

    pub fn method(&self) -> Method {
        self.cells.method
    }

    /// Blend band width (m) of edge `k` of triangle `t`.
    pub fn band(&self, t: usize, k: usize) -> f64 {
        self.bands[t][k]
    }

    fn cell_vector_at(&self, t: usize, p: Point2) -> Result<UnitVec2> {
        if t == self.plan.goal_triangle {
            UnitVec2::new(self.plan.goal - p).ok_or(Error::AtGoal(p))
        } else {
            self.cells.cell_vector(t).ok_or(Error::OutsideFreeSpace(p))
        }
    }

    /// Evaluates the unit guidance vector at `p`, returning the containing
    /// triangle for use as the next hint.
    pub fn eval(&self, p: Point2, hint: Option<usize>) -> Result<FieldSample> {
        let t = self.mesh.locate(p, hint).ok_or(Error::OutsideFreeSpace(p))?;
        self.eval_in(t, p)
    }

    /// Evaluates with the formula of triangle `t` (which should contain `p`).
    pub fn eval_in(&self, t: usize, p: Point2) -> Result<FieldSample> {
        if !self.plan.is_planned(t) {
            return Err(Error::OutsideFreeSpace(p));
        }
        if self.mesh.corners(t).iter().any(|c| c.distance(p) <= VERTEX_EPS) {
            return Err(Error::VertexSingularity(p));
        }
        let mut cell_weight = 1.0;
        let mut on_edge = None;
        let mut mix = Point2::default();
        let mut mix_total = 0.0;
        for (k, (n, c)) in self.lines[t].iter().enumerate() {
            let d = (n.dot(p) - c).max(0.0);
            let b = bump(d / self.bands[t][k]);
            cell_weight *= b;
            if d == 0.0 {
                on_edge = Some(k);
            } else if b < 1.0 {
                let w = (1.0 - b) / d;
                mix = mix + self.faces.faces[t][k].vector.vec() * w;
                mix_total += w;
            }
        }
        let face_mix = match on_edge {
            Some(k) => self.faces.faces[t][k].vector.vec(),
            None if mix_total > 0.0 => mix * (1.0 / mix_total),
            None => Point2::default(),
        };
        let raw = if cell_weight > 0.0 {
            self.cell_vector_at(t, p)?.vec() * cell_weight + face_mix * (1.0 - cell_weight)
        } else {
            face_mix
        };
        let vector = UnitVec2::new(raw).ok_or(Error::VertexSingularity(p))?;
        Ok(FieldSample { vector, triangle: t })
    }

    /// Desired heading `atan2(V_y, V_x)` in (-pi, pi].
    pub fn target_heading(&self, p: Point2, hint: Option<usize>) -> Result<(f64, usize)> {
        let s = self.eval(p, hint)?;
        Ok((s.vector.angle(), s.triangle))
    }

    /// Finite-difference step used by [`Self::heading_gradient`] in triangle `t`.
    pub fn gradient_step(&self, t: usize) -> f64 {
        (1e-4 * self.mesh.inradius(t)).max(1e-5)
    }

    /// `(d theta_d / dx, d theta_d / dy)` by central differences of wrapped
    /// headings, one-sided where an offset point leaves the free space.
    pub fn heading_gradient(&self, p: Point2, hint: Option<usize>) -> Result<[f64; 2]> {
        let (center, t) = self.target_heading(p, hint)?;
        let h = self.gradient_step(t);
        let mut grad = [0.0; 2];
        for (axis, g) in grad.iter_mut().enumerate() {
            let e = if axis == 0 { Point2::new(h, 0.0) } else { Point2::new(0.0, h) };
            let fwd = self.target_heading(p + e, Some(t)).ok().map(|x| x.0);
            let bwd = self.target_heading(p - e, Some(t)).ok().map(|x| x.0);
            *g = match (fwd, bwd) {
                (Some(f), Some(b)) => wrap_angle(f - b) / (2.0 * h),
                (Some(f), None) => wrap_angle(f - center) / h,
                (None, Some(b)) => wrap_angle(center - b) / h,
                (None, None) => 0.0,
            };
        }
        Ok(grad)
    }

    pub fn to_json(&self) -> String {
        let file = FieldFile {
            blend_width: self.blend_width,
            goal: self.plan.goal,
            mesh: serde_json::from_str(&self.mesh.to_json()).expect("mesh json"),
            assignment: self.cells.to_file(),
        };
        serde_json::to_string_pretty(&file).expect("field serializes")
    }

    /// Restores a field file, re-validating its mesh against `env` and
    /// recomputing the plan.
    pub fn from_json(text: &str, env: &Environment) -> Result<Self> {
        let file: FieldFile =
            serde_json::from_str(text).map_err(|source| Error::Parse { what: "field", source })?;
        let mesh = TriMesh::import(&file.mesh.to_string(), env)?;
        let plan = plan::plan(&mesh, file.goal)?;
        let cells = CellFieldAssignment::from_file(file.assignment)?;
        if cells.cell_vectors.len() != mesh.len() {
            return Err(Error::InvalidConfig(format!(
                "field has {} cell vectors for {} triangles",
                cells.cell_vectors.len(),
                mesh.len()
            )));
        }
        Self::new(mesh, plan, cells, file.blend_width)
    }

    pub fn load(path: impl AsRef<Path>, env: &Environment) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, env)
    }

    /// Samples the field on a `grid_n x grid_n` lattice over the workspace
    /// bounding box, skipping points outside the field's domain.
    pub fn sample_grid(&self, env: &Environment, grid_n: usize) -> Vec<GridSample> {
        let (lo, hi) = env.bounds();
        let mut out = Vec::new();
        let mut hint = None;
        for iy in 0..grid_n {
            for ix in 0..grid_n {
                let fx = (ix as f64 + 0.5) / grid_n as f64;
                let fy = (iy as f64 + 0.5) / grid_n as f64;
                let p = Point2::new(lo.x + fx * (hi.x - lo.x), lo.y + fy * (hi.y - lo.y));
                if !env.is_free(p) {
                    continue;
                }
                if let Ok(s) = self.eval(p, hint) {
                    hint = Some(s.triangle);
                    out.push(GridSample {
                        p,
                        vector: s.vector,
                        triangle: s.triangle,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    pub p: Point2,
    pub vector: UnitVec2,
    pub triangle: usize,
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    if r <= -PI {
        r += TAU;
    }
    r
}

/// Writes grid samples as `x,y,Vx,Vy,theta_d,cell` CSV.
pub fn grid_csv(samples: &[GridSample]) -> String {
    let mut s = String::from("x,y,Vx,Vy,theta_d,cell\n");
    for g in samples {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            g.p.x,
            g.p.y,
            g.vector.x(),
            g.vector.y(),
            g.vector.angle(),
            g.triangle
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::triangulate;

    #[test]
    fn bump_examples() {
        assert_eq!(bump(0.0), 0.0);
        assert_eq!(bump(1.0), 1.0);
        assert_eq!(bump(-3.0), 0.0);
        assert_eq!(bump(7.0), 1.0);
        assert!((bump(0.5) - 0.5).abs() < 1e-15);
        // lambda(0.25) = 4 e^-4, lambda(0.75) = (4/3) e^(-4/3)
        let l1 = 4.0 * (-4.0f64).exp();
        let l2 = 4.0 / 3.0 * (-4.0f64 / 3.0).exp();
        let expected = l1 / (l1 + l2);
        assert!((bump(0.25) - expected).abs() < 1e-15);
        assert!((bump(0.25) - 0.172_493_932_444_661).abs() < 1e-12);
        assert!((bump(0.25) + bump(0.75) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_examples() {
        use std::f64::consts::PI;
        assert!((wrap_angle(1.5 * PI) + 0.5 * PI).abs() < 1e-15);
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    fn room() -> (Environment, GuidanceField) {
        let env = Environment::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(4.0, 0.0),
                Point2::new(4.0, 4.0),
                Point2::new(0.0, 4.0),
            ],
            vec![vec![
                Point2::new(1.5, 1.5),
                Point2::new(2.5, 1.5),
                Point2::new(2.5, 2.5),
                Point2::new(1.5, 2.5),
            ]],
            Point2::new(3.5, 3.3),
        );
        let mesh = triangulate(&env).unwrap();
        let field = GuidanceField::build(mesh, env.goal, Method::Qp, 1.0).unwrap();
        (env, field)
    }

    #[test]
    fn incenter_gives_cell_vector() {
        let (_, field) = room();
        for t in field.plan.cells() {
            let p = field.mesh.incenter(t);
            let v = field.eval(p, None).unwrap();
            if v.triangle != t {
                continue;
            }
            let c = field.cells.cell_vector(t).unwrap();
            assert!((v.vector.x() - c.x()).abs() < 1e-9 && (v.vector.y() - c.y()).abs() < 1e-9);
        }
    }

    #[test]
    fn obstacle_edge_gives_inward_normal() {
        let (_, field) = room();
        for t in 0..field.mesh.len() {
            for k in 0..3 {
                let (a, b) = field.mesh.edge_vertices(t, k);
                if !field.mesh.is_constrained(a, b) {
                    continue;
                }
                let (pa, pb) = field.mesh.edge_points(t, k);
                let p = pa.lerp(pb, 0.5);
                let v = field.eval_in(t, p).unwrap().vector;
                let n = -outward_normal(&field.mesh, t, k).vec();
                assert!((v.vec() - n).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn goal_triangle_points_at_goal_near_goal() {
        let (_, field) = room();
        let g = field.goal();
        let p = g + Point2::new(0.01, -0.02);
        let v = field.eval(p, None).unwrap().vector;
        let want = UnitVec2::new(g - p).unwrap();
        assert!((v.vec() - want.vec()).norm() < 1e-12);
        assert!(matches!(field.eval(g, None), Err(Error::AtGoal(_))));
    }

    #[test]
    fn vertex_is_singular_and_outside_is_error() {
        let (_, field) = room();
        let v0 = field.mesh.vertices()[0];
        assert!(matches!(field.eval(v0, None), Err(Error::VertexSingularity(_))));
        assert!(matches!(field.eval(Point2::new(2.0, 2.0), None), Err(Error::OutsideFreeSpace(_))));
    }

    #[test]
    fn field_round_trips_through_json() {
        let (env, field) = room();
        let back = GuidanceField::from_json(&field.to_json(), &env).unwrap();
        assert_eq!(back.cells.cell_vectors, field.cells.cell_vectors);
        assert_eq!(back.to_json(), field.to_json());
    }

    #[test]
    fn grid_csv_has_header_only_for_empty_grid() {
        let (env, field) = room();
        let rows = field.sample_grid(&env, 0);
        assert_eq!(grid_csv(&rows), "x,y,Vx,Vy,theta_d,cell\n");
        let rows = field.sample_grid(&env, 20);
        assert!(rows.iter().all(|r| env.is_free(r.p)));
        assert!(rows.iter().all(|r| (r.vector.vec().norm() - 1.0).abs() < 1e-9));
    }
}
