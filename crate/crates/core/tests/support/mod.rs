//! Random environments and independent oracles shared by the integration
//! tests and the acceptance harness.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trifield::plan::DiscretePlan;
use trifield::qp::{Pair, QpProblem};
use trifield::{Environment, Point2, TriMesh};

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ]
}

/// Rectangular room with up to three separated obstacles (boxes or
/// triangles) and a goal with clearance from every boundary.
pub fn random_env(rng: &mut ChaCha8Rng) -> Environment {
    let w = rng.gen_range(4.0..8.0);
    let h = rng.gen_range(4.0..8.0);
    let count = rng.gen_range(0..=3);
    let mut boxes: Vec<[f64; 4]> = Vec::new();
    let mut obstacles = Vec::new();
    let mut tries = 0;
    while obstacles.len() < count && tries < 200 {
        tries += 1;
        let bw = rng.gen_range(0.5..1.8);
        let bh = rng.gen_range(0.5..1.8);
        let x0 = rng.gen_range(0.5..w - 0.5 - bw);
        let y0 = rng.gen_range(0.5..h - 0.5 - bh);
        let bb = [x0, y0, x0 + bw, y0 + bh];
        let clear = boxes
            .iter()
            .all(|o| bb[0] > o[2] + 0.4 || bb[2] < o[0] - 0.4 || bb[1] > o[3] + 0.4 || bb[3] < o[1] - 0.4);
        if !clear {
            continue;
        }
        boxes.push(bb);
        if rng.gen_bool(0.5) {
            obstacles.push(rect(bb[0], bb[1], bb[2], bb[3]));
        } else {
            let apex = rng.gen_range(bb[0]..bb[2]);
            obstacles.push(vec![
                Point2::new(bb[0], bb[1]),
                Point2::new(bb[2], bb[1]),
                Point2::new(apex, bb[3]),
            ]);
        }
    }
    let mut env = Environment::new(rect(0.0, 0.0, w, h), obstacles, Point2::new(0.0, 0.0));
    loop {
        let g = Point2::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h));
        if env.in_interior(g) && env.distance_to_obstacles(g) > 0.2 {
            env.goal = g;
            return env;
        }
    }
}

pub fn random_envs(n: usize, seed: u64) -> Vec<Environment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_env(&mut rng)).collect()
}

/// Each planned cell followed by up to two successors, stopping before the
/// goal cell.
pub fn chains(plan: &DiscretePlan) -> Vec<Vec<usize>> {
    plan.cells()
        .map(|t| {
            let mut chain = vec![t];
            while chain.len() < 3 {
                let s = plan.successor(*chain.last().unwrap()).unwrap();
                if s == plan.goal_triangle {
                    break;
                }
                chain.push(s);
            }
            chain
        })
        .collect()
}

fn goal_dir(mesh: &TriMesh, plan: &DiscretePlan, t: usize) -> Point2 {
    let d = plan.goal - mesh.centroid(t);
    d * (1.0 / d.norm())
}

fn cone_vector(plan: &DiscretePlan, t: usize, a: f64) -> Point2 {
    let (b1, b2) = plan.exit(t).unwrap().boundary;
    b1.vec() * a + b2.vec() * (1.0 - a)
}

/// Restriction of the cell-vector objective to one chain: every pair whose
/// cell lies on the chain and whose successor is either on the chain or the
/// goal cell.
pub fn chain_qp(mesh: &TriMesh, plan: &DiscretePlan, chain: &[usize]) -> QpProblem {
    let mut pairs = Vec::new();
    for (i, &t) in chain.iter().enumerate() {
        let (b1, b2) = plan.exit(t).unwrap().boundary;
        let d_i = b1.vec() - b2.vec();
        let s = plan.successor(t).unwrap();
        if s == plan.goal_triangle {
            pairs.push(Pair {
                i,
                j: None,
                d_i,
                d_j: Point2::default(),
                c: b2.vec() - goal_dir(mesh, plan, t),
            });
        } else if let Some(j) = chain.iter().position(|&c| c == s) {
            let (s1, s2) = plan.exit(s).unwrap().boundary;
            pairs.push(Pair {
                i,
                j: Some(j),
                d_i,
                d_j: s1.vec() - s2.vec(),
                c: b2.vec() - s2.vec(),
            });
        }
    }
    QpProblem::from_pairs(chain.to_vec(), pairs)
}

/// Chain objective evaluated directly from the cone vectors.
pub fn chain_objective(mesh: &TriMesh, plan: &DiscretePlan, chain: &[usize], alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &t) in chain.iter().enumerate() {
        let v = cone_vector(plan, t, alpha[i]);
        let s = plan.successor(t).unwrap();
        let w = if s == plan.goal_triangle {
            goal_dir(mesh, plan, t)
        } else if let Some(j) = chain.iter().position(|&c| c == s) {
            cone_vector(plan, s, alpha[j])
        } else {
            continue;
        };
        total += (v - w).dot(v - w);
    }
    total
}

/// Exact minimum of the chain objective over the lattice `{k / (n - 1)}`
/// per variable, by min-sum dynamic programming along the chain.
pub fn lattice_min(mesh: &TriMesh, plan: &DiscretePlan, chain: &[usize], n: usize) -> f64 {
    let grid: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let vectors: Vec<Vec<Point2>> = chain
        .iter()
        .map(|&t| grid.iter().map(|&a| cone_vector(plan, t, a)).collect())
        .collect();
    let last = *chain.last().unwrap();
    // cost-to-go of the last variable: its goal term, if any
    let mut cost: Vec<f64> = if plan.successor(last) == Some(plan.goal_triangle) {
        let g = goal_dir(mesh, plan, last);
        vectors[chain.len() - 1].iter().map(|&v| (v - g).dot(v - g)).collect()
    } else {
        vec![0.0; n]
    };
    for i in (0..chain.len() - 1).rev() {
        cost = vectors[i]
            .iter()
            .map(|&v| {
                vectors[i + 1]
                    .iter()
                    .zip(&cost)
                    .map(|(&w, &c)| (v - w).dot(v - w) + c)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
    }
    cost.into_iter().fold(f64::INFINITY, f64::min)
}

/// Dense Hessian as a nalgebra matrix.
pub fn hessian_matrix(qp: &QpProblem) -> nalgebra::DMatrix<f64> {
    let m = qp.dim();
    nalgebra::DMatrix::from_fn(m, m, |r, c| qp.h(r, c))
}

/// `(min eigenvalue, spectral norm)` of the Hessian.
pub fn hessian_spectrum(qp: &QpProblem) -> (f64, f64) {
    let eig = nalgebra::SymmetricEigen::new(hessian_matrix(qp)).eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm = eig.iter().map(|e| e.abs()).fold(0.0, f64::max);
    (min, norm)
}

/// Fourth-order central difference of the target heading.
pub fn stencil_gradient(field: &trifield::GuidanceField, p: Point2, h: f64) -> [f64; 2] {
    let theta = |q: Point2| field.target_heading(q, None).unwrap().0;
    let diff = |e: Point2| {
        let t0 = theta(p);
        let at = |s: f64| t0 + trifield::wrap_angle(theta(p + e * s) - t0);
        (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
    };
    [diff(Point2::new(1.0, 0.0)), diff(Point2::new(0.0, 1.0))]
}

/// Distance from `p` to the closest edge line of triangle `t`.
pub fn edge_clearance(mesh: &TriMesh, t: usize, p: Point2) -> f64 {
    (0..3)
        .map(|k| {
            let (a, b) = mesh.edge_points(t, k);
            let d = b - a;
            (d.cross(p - a) / d.norm()).abs()
        })
        .fold(f64::INFINITY, f64::min)
}
