//! Cell-vector assignment as a box-constrained convex QP.
//!
//! Each non-goal cell `i` carries one variable `alpha_i` in `[0, 1]` and the
//! direction `alpha_i * b1 + (1 - alpha_i) * b2 = b2 + D_i * alpha_i` with
//! `D_i = b1 - b2`. The objective sums `|V_i - V_s(i)|^2` over every cell and
//! its successor; cells whose successor is the goal cell are pulled toward
//! the fixed direction from their centroid to the goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, UnitVec2};
use crate::mesh::TriMesh;
use crate::plan::DiscretePlan;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50_000;
/// Solved `alpha` values are kept this far inside the box.
pub const INTERIOR_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qp,
    Baseline,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "qp" => Ok(Method::Qp),
            "baseline" => Ok(Method::Baseline),
            other => Err(format!("unknown method '{other}' (expected qp or baseline)")),
        }
    }
}

/// One `(i, s(i))` term of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub i: usize,
    /// Variable of the successor; `None` when the successor is the goal cell.
    pub j: Option<usize>,
    pub d_i: Point2,
    pub d_j: Point2,
    pub c: Point2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Triangle index of each variable, increasing.
    pub cells: Vec<usize>,
    /// Dense row-major Hessian, `m x m`.
    pub hessian: Vec<f64>,
    pub linear: Vec<f64>,
    /// Constant term, so that `J = 0.5 a'Ha + f'a + constant`.
    pub constant: f64,
    pub pairs: Vec<Pair>,
    rows: Vec<Vec<usize>>,
}

/// Fixed direction used in place of the goal cell's vector for a
/// predecessor `t`.
pub fn goal_direction(mesh: &TriMesh, plan: &DiscretePlan, t: usize) -> UnitVec2 {
    UnitVec2::new(plan.goal - mesh.centroid(t)).expect("centroid differs from goal")
}

/// Builds `H` and `f` by summing the 2x2 block contribution of every pair.
pub fn assemble(plan: &DiscretePlan, mesh: &TriMesh) -> Result<QpProblem> {
    let cells: Vec<usize> = plan.cells().collect();
    if cells.is_empty() {
        return Err(Error::EmptyPlan);
    }
    let mut var_of = vec![usize::MAX; plan.len()];
    for (v, &t) in cells.iter().enumerate() {
        var_of[t] = v;
    }
    let pairs: Vec<Pair> = cells
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let e = plan.exit(t).expect("planned cell");
            let (b1, b2) = e.boundary;
            let d_i = b1.vec() - b2.vec();
            if e.successor == plan.goal_triangle {
                let g = goal_direction(mesh, plan, t);
                Pair {
                    i,
                    j: None,
                    d_i,
                    d_j: Point2::default(),
                    c: b2.vec() - g.vec(),
                }
            } else {
                let s = plan.exit(e.successor).expect("successor is planned");
                let (sb1, sb2) = s.boundary;
                Pair {
                    i,
                    j: Some(var_of[e.successor]),
                    d_i,
                    d_j: sb1.vec() - sb2.vec(),
                    c: b2.vec() - sb2.vec(),
                }
            }
        })
        .collect();
    Ok(QpProblem::from_pairs(cells, pairs))
}

impl QpProblem {
    pub fn from_pairs(cells: Vec<usize>, pairs: Vec<Pair>) -> Self {
        let m = cells.len();
        let mut hessian = vec![0.0; m * m];
        let mut linear = vec![0.0; m];
        let mut constant = 0.0;
        for p in &pairs {
            hessian[p.i * m + p.i] += 2.0 * p.d_i.dot(p.d_i);
            linear[p.i] += 2.0 * p.d_i.dot(p.c);
            constant += p.c.dot(p.c);
            if let Some(j) = p.j {
                let cross = -2.0 * p.d_i.dot(p.d_j);
                hessian[p.i * m + j] += cross;
                hessian[j * m + p.i] += cross;
                hessian[j * m + j] += 2.0 * p.d_j.dot(p.d_j);
                linear[j] += -2.0 * p.d_j.dot(p.c);
            }
        }
        let rows = (0..m)
            .map(|r| (0..m).filter(|&c| hessian[r * m + c] != 0.0).collect())
            .collect();
        Self {
            cells,
            hessian,
            linear,
            constant,
            pairs,
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn h(&self, r: usize, c: usize) -> f64 {
        self.hessian[r * self.dim() + c]
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        let m = self.dim();
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.rows[r].iter().map(|&c| self.hessian[r * m + c] * x[c]).sum();
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.mul(x, &mut g);
        for (gi, fi) in g.iter_mut().zip(&self.linear) {
            *gi += fi;
        }
        g
    }

    /// `0.5 x'Hx + f'x + constant`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; self.dim()];
        self.mul(x, &mut hx);
        0.5 * dot(x, &hx) + dot(&self.linear, x) + self.constant
    }

    /// Power-iteration estimate of the largest eigenvalue of `H`.
    pub fn spectral_norm_estimate(&self) -> f64 {
        let m = self.dim();
        let mut v: Vec<f64> = (0..m).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let mut w = vec![0.0; m];
        let mut lambda = 0.0;
        for _ in 0..200 {
            let n = dot(&v, &v).sqrt();
            if n == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= n);
            self.mul(&v, &mut w);
            let next = dot(&v, &w);
            std::mem::swap(&mut v, &mut w);
            if (next - lambda).abs() <= 1e-12 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda
    }

    /// Projected-gradient optimality residual `|x - clip(x - grad)|_inf`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        x.iter()
            .zip(&g)
            .map(|(xi, gi)| (xi - (xi - gi).clamp(0.0, 1.0)).abs())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw optimizer output before the interior nudge.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Objective after every accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
}

/// Conjugate-gradient minimization over the variables strictly inside the
/// box, followed by a projected backtracking search. Returns the new point
/// only if it lowers the objective.
fn subspace_step(qp: &QpProblem, x: &[f64], g: &[f64], fx: f64) -> Option<(Vec<f64>, f64)> {
    let m = qp.dim();
    let free: Vec<bool> = (0..m).map(|k| x[k] > 0.0 && x[k] < 1.0).collect();
    let mask = |v: &mut [f64]| {
        for (vi, &f) in v.iter_mut().zip(&free) {
            if !f {
                *vi = 0.0;
            }
        }
    };
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    mask(&mut r);
    let r0 = dot(&r, &r);
    if r0 == 0.0 {
        return None;
    }
    let mut d = vec![0.0; m];
    let mut p = r.clone();
    let mut hp = vec![0.0; m];
    let mut rr = r0;
    for _ in 0..2 * m {
        qp.mul(&p, &mut hp);
        mask(&mut hp);
        let php = dot(&p, &hp);
        if php <= 1e-300 {
            break;
        }
        let a = rr / php;
        for k in 0..m {
            d[k] += a * p[k];
            r[k] -= a * hp[k];
        }
        let next = dot(&r, &r);
        if next <= 1e-28 * r0 {
            break;
        }
        for k in 0..m {
            p[k] = r[k] + next / rr * p[k];
        }
        rr = next;
    }
    let mut t = 1.0;
    for _ in 0..40 {
        let cand: Vec<f64> = (0..m).map(|k| (x[k] + t * d[k]).clamp(0.0, 1.0)).collect();
        let fc = qp.objective(&cand);
        if fc < fx {
            return Some((cand, fc));
        }
        t *= 0.5;
    }
    None
}

/// Projected gradient with Barzilai-Borwein steps and a `1/L` fallback that
/// keeps the objective non-increasing. Each step is followed by a
/// subspace phase on the free variables.
pub fn minimize(qp: &QpProblem, start: &[f64], tol: f64, max_iter: usize) -> Result<SolveReport> {
    let m = qp.dim();
    let lipschitz = (qp.spectral_norm_estimate() * 1.05).max(1e-12);
    let mut x: Vec<f64> = start.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut g = qp.gradient(&x);
    let mut fx = qp.objective(&x);
    let mut history = vec![fx];
    let mut step = 1.0 / lipschitz;
    let project = |x: &[f64], g: &[f64], s: f64| -> Vec<f64> {
        x.iter().zip(g).map(|(xi, gi)| (xi - s * gi).clamp(0.0, 1.0)).collect()
    };
    for it in 0..max_iter {
        let residual = qp.residual(&x);
        if residual <= tol {
            return Ok(SolveReport {
                alpha: x,
                iterations: it,
                residual,
                history,
            });
        }
        let mut cand = project(&x, &g, step);
        let mut fc = qp.objective(&cand);
        if fc > fx {
            let mut s = 1.0 / lipschitz;
            cand = project(&x, &g, s);
            fc = qp.objective(&cand);
            while fc > fx && s > 1e-20 {
                s *= 0.5;
                cand = project(&x, &g, s);
                fc = qp.objective(&cand);
            }
            if fc > fx {
                break;
            }
        }
        let gc = qp.gradient(&cand);
        let sx: Vec<f64> = (0..m).map(|k| cand[k] - x[k]).collect();
        let sg: Vec<f64> = (0..m).map(|k| gc[k] - g[k]).collect();
        let curv = dot(&sx, &sg);
        step = if curv > 0.0 {
            (dot(&sx, &sx) / curv).clamp(1e-3 / lipschitz, 1e6 / lipschitz)
        } else {
            1.0 / lipschitz
        };
        x = cand;
        g = gc;
        fx = fc;
        history.push(fx);
        if let Some((xs, fs)) = subspace_step(qp, &x, &g, fx) {
            x = xs;
            g = qp.gradient(&x);
            fx = fs;
            history.push(fx);
        }
    }
    let residual = qp.residual(&x);
    if residual <= tol {
        return Ok(SolveReport {
            alpha: x,
            iterations: max_iter,
            residual,
            history,
        });
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
        best: x,
    })
}

/// Constant unit direction per cell plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFieldAssignment {
    pub method: Method,
    /// Per triangle; `None` for the goal cell, unreachable cells, and in
    /// baseline mode.
    pub alpha: Vec<Option<f64>>,
    /// Per triangle; `None` for the goal cell (its field is position
    /// dependent) and unreachable cells.
    pub cell_vectors: Vec<Option<UnitVec2>>,
    /// `sum |V_i - V_s(i)|^2`, evaluated before unit normalization.
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct AssignmentFile {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Option<f64>>>,
    pub cell_vectors: Vec<Option<[f64; 2]>>,
    pub objective: f64,
}

impl CellFieldAssignment {
    pub(crate) fn to_file(&self) -> AssignmentFile {
        AssignmentFile {
            method: self.method,
            alpha: (self.method == Method::Qp).then(|| self.alpha.clone()),
            cell_vectors: self.cell_vectors.iter().map(|v| v.map(Into::into)).collect(),
            objective: self.objective,
        }
    }

    pub(crate) fn from_file(file: AssignmentFile) -> Result<Self> {
        let n = file.cell_vectors.len();
        let cell_vectors = file
            .cell_vectors
            .into_iter()
            .map(|v| {
                v.map(|a| UnitVec2::try_from(a).map_err(Error::InvalidConfig))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            method: file.method,
            alpha: file.alpha.unwrap_or_else(|| vec![None; n]),
            cell_vectors,
            objective: file.objective,
            iterations: 0,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("assignment serializes")
    }

    pub fn cell_vector(&self, t: usize) -> Option<UnitVec2> {
        self.cell_vectors[t]
    }
}

/// Solves the assembled problem and converts the minimizer into unit cell
/// vectors.
pub fn solve(qp: &QpProblem, plan: &DiscretePlan, tol: f64) -> Result<CellFieldAssignment> {
    let start = vec![0.5; qp.dim()];
    let report = minimize(qp, &start, tol, MAX_ITERATIONS)?;
    let objective = qp.objective(&report.alpha);
    let n = plan.len();
    let mut alpha = vec![None; n];
    let mut cell_vectors = vec![None; n];
    for (v, &t) in qp.cells.iter().enumerate() {
        let a = report.alpha[v].clamp(INTERIOR_MARGIN, 1.0 - INTERIOR_MARGIN);
        let (b1, b2) = plan.exit(t).expect("planned cell").boundary;
        alpha[t] = Some(a);
        cell_vectors[t] = UnitVec2::new(b1.vec() * a + b2.vec() * (1.0 - a));
    }
    Ok(CellFieldAssignment {
        method: Method::Qp,
        alpha,
        cell_vectors,
        objective,
        iterations: report.iterations,
    })
}

/// Assembles and solves in one call.
pub fn qp_assign(plan: &DiscretePlan, mesh: &TriMesh) -> Result<CellFieldAssignment> {
    match assemble(plan, mesh) {
        Ok(qp) => solve(&qp, plan, DEFAULT_TOL),
        Err(Error::EmptyPlan) => Ok(CellFieldAssignment {
            method: Method::Qp,
            alpha: vec![None; plan.len()],
            cell_vectors: vec![None; plan.len()],
            objective: 0.0,
            iterations: 0,
        }),
        Err(e) => Err(e),
    }
}

/// Each cell points from its centroid toward the midpoint of its exit face.
pub fn baseline_assign(plan: &DiscretePlan, mesh: &TriMesh) -> CellFieldAssignment {
    let n = plan.len();
    let mut cell_vectors = vec![None; n];
    for t in plan.cells() {
        let e = plan.exit(t).expect("planned cell");
        let v = mesh.vertices();
        let mid = v[e.face.0].lerp(v[e.face.1], 0.5);
        cell_vectors[t] = UnitVec2::new(mid - mesh.centroid(t));
    }
    let objective = plan
        .cells()
        .map(|t| {
            let e = plan.exit(t).unwrap();
            let vi = cell_vectors[t].unwrap().vec();
            let vj = if e.successor == plan.goal_triangle {
                goal_direction(mesh, plan, t).vec()
            } else {
                cell_vectors[e.successor].unwrap().vec()
            };
            (vi - vj).dot(vi - vj)
        })
        .sum();
    CellFieldAssignment {
        method: Method::Baseline,
        alpha: vec![None; n],
        cell_vectors,
        objective,
        iterations: 0,
    }
}

/// Dispatches on `method`.
pub fn assign(method: Method, plan: &DiscretePlan, mesh: &TriMesh) -> Result<CellFieldAssignment> {
    match method {
        Method::Qp => qp_assign(plan, mesh),
        Method::Baseline => Ok(baseline_assign(plan, mesh)),
    }
}
