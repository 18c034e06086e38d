//! Constrained Delaunay triangulation of the free space, adjacency and point
//! location.
//!
//! Triangles are stored counterclockwise. Edge `k` of triangle `t` joins
//! `triangles[t][k]` and `triangles[t][(k + 1) % 3]`; `neighbors[t][k]` is the
//! triangle on the other side of that edge, if any.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geometry::{
    incircle, on_segment, orient2d, point_segment_distance, segments_cross,
    triangle_signed_area, Point2, BOUNDARY_EPS,
};

/// Smallest admissible triangle area (m^2).
pub const AREA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    neighbors: Vec<[Option<usize>; 3]>,
    constrained: BTreeSet<(usize, usize)>,
}

/// An undirected mesh edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub constrained: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    constrained_edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adjacency: Option<Vec<[Option<usize>; 3]>>,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl TriMesh {
    /// Assembles a mesh, recomputing adjacency and checking the local
    /// invariants (orientation, minimum area, manifold edges, constrained
    /// edges being boundary edges).
    pub fn from_parts(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        constrained_edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::MeshInvalid(format!("triangle {t} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let area = triangle_signed_area(a, b, c);
            if area < AREA_EPS {
                return Err(Error::MeshInvalid(format!(
                    "triangle {t} has area {area:e} (must be counterclockwise and at least {AREA_EPS:e})"
                )));
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if directed.insert(e, t).is_some() {
                    return Err(Error::MeshInvalid(format!(
                        "adjacency not symmetric: edge ({}, {}) is shared by more than two triangles or inconsistently oriented",
                        e.0, e.1
                    )));
                }
            }
        }
        let neighbors = triangles
            .iter()
            .map(|tri| {
                let mut n = [None; 3];
                for (k, slot) in n.iter_mut().enumerate() {
                    *slot = directed.get(&(tri[(k + 1) % 3], tri[k])).copied();
                }
                n
            })
            .collect();
        let constrained: BTreeSet<_> = constrained_edges.into_iter().map(|(a, b)| key(a, b)).collect();
        let mesh = Self {
            vertices,
            triangles,
            neighbors,
            constrained,
        };
        for &(a, b) in &mesh.constrained {
            let incident = directed.contains_key(&(a, b)) as usize + directed.contains_key(&(b, a)) as usize;
            if incident != 1 {
                return Err(Error::MeshInvalid(format!(
                    "constrained edge ({a}, {b}) has {incident} incident triangles (expected 1)"
                )));
            }
        }
        for (t, n) in mesh.neighbors.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = mesh.edge_vertices(t, k);
                if n[k].is_none() && !mesh.constrained.contains(&key(a, b)) {
                    return Err(Error::MeshInvalid(format!(
                        "unconstrained edge ({a}, {b}) has only one incident triangle"
                    )));
                }
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn neighbors(&self, t: usize) -> [Option<usize>; 3] {
        self.neighbors[t]
    }

    pub fn neighbor(&self, t: usize, k: usize) -> Option<usize> {
        self.neighbors[t][k]
    }

    pub fn edge_vertices(&self, t: usize, k: usize) -> (usize, usize) {
        let tri = self.triangles[t];
        (tri[k], tri[(k + 1) % 3])
    }

    pub fn edge_points(&self, t: usize, k: usize) -> (Point2, Point2) {
        let (a, b) = self.edge_vertices(t, k);
        (self.vertices[a], self.vertices[b])
    }

    pub fn corners(&self, t: usize) -> [Point2; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn is_constrained(&self, a: usize, b: usize) -> bool {
        self.constrained.contains(&key(a, b))
    }

    /// Index of the edge of `t` that joins `a` and `b` (either order).
    pub fn edge_index(&self, t: usize, a: usize, b: usize) -> Option<usize> {
        (0..3).find(|&k| key(self.edge_vertices(t, k).0, self.edge_vertices(t, k).1) == key(a, b))
    }

    /// Edge of `t` shared with neighbor `n`.
    pub fn shared_edge(&self, t: usize, n: usize) -> Option<usize> {
        (0..3).find(|&k| self.neighbors[t][k] == Some(n))
    }

    /// Every undirected edge once, sorted by vertex pair.
    pub fn edges(&self) -> Vec<Edge> {
        let mut set = BTreeSet::new();
        for t in 0..self.len() {
            for k in 0..3 {
                let (a, b) = self.edge_vertices(t, k);
                set.insert(key(a, b));
            }
        }
        set.into_iter()
            .map(|(a, b)| Edge {
                a,
                b,
                constrained: self.constrained.contains(&(a, b)),
            })
            .collect()
    }

    pub fn constrained_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.constrained.iter().copied()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        triangle_signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [a, b, c] = self.corners(t);
        Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    /// Radius of the inscribed circle, area / semiperimeter.
    pub fn inradius(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        let s = 0.5 * (a.distance(b) + b.distance(c) + c.distance(a));
        self.area(t) / s
    }

    pub fn incenter(&self, t: usize) -> Point2 {
        let [a, b, c] = self.corners(t);
        let (la, lb, lc) = (b.distance(c), c.distance(a), a.distance(b));
        let s = la + lb + lc;
        Point2::new(
            (la * a.x + lb * b.x + lc * c.x) / s,
            (la * a.y + lb * b.y + lc * c.y) / s,
        )
    }

    pub fn total_area(&self) -> f64 {
        (0..self.len()).map(|t| self.area(t)).sum()
    }

    /// True if `p` lies in the closed triangle `t` (exact predicates).
    pub fn contains(&self, t: usize, p: Point2) -> bool {
        let [a, b, c] = self.corners(t);
        orient2d(a, b, p) >= 0.0 && orient2d(b, c, p) >= 0.0 && orient2d(c, a, p) >= 0.0
    }

    /// Finds the lowest-index triangle containing `p` (boundary inclusive).
    ///
    /// With a hint, walks from the hint triangle toward `p` and only falls
    /// back to a linear scan when the walk hits the mesh boundary or `p` lies
    /// on a triangle boundary.
    pub fn locate(&self, p: Point2, hint: Option<usize>) -> Option<usize> {
        if let Some(start) = hint.filter(|&h| h < self.len()) {
            let mut t = start;
            for _ in 0..=self.len() {
                let corners = self.corners(t);
                let mut next = None;
                let mut on_boundary = false;
                for k in 0..3 {
                    let o = orient2d(corners[k], corners[(k + 1) % 3], p);
                    if o < 0.0 {
                        next = Some(k);
                        break;
                    }
                    on_boundary |= o == 0.0;
                }
                match next {
                    None if !on_boundary => return Some(t),
                    None => break,
                    Some(k) => match self.neighbors[t][k] {
                        Some(n) => t = n,
                        None => break,
                    },
                }
            }
        }
        (0..self.len()).find(|&t| self.contains(t, p))
    }

    /// Checks the global invariants against the environment the mesh claims
    /// to decompose.
    pub fn validate_against(&self, env: &Environment) -> Result<()> {
        let segments: Vec<_> = env.boundary_segments().collect();
        let scale = {
            let (lo, hi) = env.bounds();
            (hi - lo).norm().max(1.0)
        };
        let tol = 1e-9 * scale;
        for &(a, b) in &self.constrained {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let on_boundary = segments.iter().any(|&(s, e)| {
                point_segment_distance(pa, s, e) <= tol && point_segment_distance(pb, s, e) <= tol
            });
            if !on_boundary {
                return Err(Error::MeshInvalid(format!(
                    "constrained edge ({a}, {b}) does not lie on an environment boundary segment"
                )));
            }
        }
        for t in 0..self.len() {
            for k in 0..3 {
                let (p, q) = self.edge_points(t, k);
                for &(a, b) in &self.constrained {
                    if segments_cross(p, q, self.vertices[a], self.vertices[b]) {
                        return Err(Error::MeshInvalid(format!(
                            "triangle {t} crosses constrained edge ({a}, {b})"
                        )));
                    }
                }
                if self.neighbors[t][k].is_none() {
                    let mid = p.lerp(q, 0.5);
                    if env.distance_to_obstacles(mid) > tol {
                        return Err(Error::MeshInvalid(format!(
                            "triangle {t} has a boundary edge off the free-space boundary"
                        )));
                    }
                }
            }
            if !env.in_interior(self.centroid(t)) {
                return Err(Error::MeshInvalid(format!("triangle {t} lies outside the free space")));
            }
        }
        let (covered, free) = (self.total_area(), env.free_area());
        if ((covered - free) / free).abs() > 1e-9 {
            return Err(Error::MeshInvalid(format!(
                "triangles cover {covered} m^2 but the free space has {free} m^2"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = MeshFile {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            constrained_edges: self.constrained.iter().map(|&(a, b)| [a, b]).collect(),
            adjacency: None,
        };
        serde_json::to_string_pretty(&file).expect("mesh serializes")
    }

    /// Parses a mesh file without consulting an environment.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: MeshFile = serde_json::from_str(text).map_err(|source| Error::Parse { what: "mesh", source })?;
        let mesh = Self::from_parts(
            file.vertices,
            file.triangles,
            file.constrained_edges.into_iter().map(|[a, b]| (a, b)),
        )?;
        if let Some(adjacency) = file.adjacency {
            if adjacency != mesh.neighbors {
                return Err(Error::MeshInvalid(
                    "adjacency not symmetric: stored adjacency disagrees with triangle connectivity".into(),
                ));
            }
        }
        Ok(mesh)
    }

    /// Parses a mesh file and re-validates it against `env`.
    pub fn import(text: &str, env: &Environment) -> Result<Self> {
        let mesh = Self::from_json(text)?;
        mesh.validate_against(env)?;
        Ok(mesh)
    }

    pub fn load(path: impl AsRef<Path>, env: &Environment) -> Result<Self> {
        Self::import(&std::fs::read_to_string(path)?, env)
    }
}

/// Scratch triangulation used while building the constrained Delaunay mesh.
struct Builder {
    pts: Vec<Point2>,
    tris: Vec<[usize; 3]>,
    alive: Vec<bool>,
    directed: HashMap<(usize, usize), usize>,
    constrained: BTreeSet<(usize, usize)>,
}

impl Builder {
    fn add_tri(&mut self, tri: [usize; 3]) -> usize {
        let id = self.tris.len();
        self.tris.push(tri);
        self.alive.push(true);
        for k in 0..3 {
            self.directed.insert((tri[k], tri[(k + 1) % 3]), id);
        }
        id
    }

    fn kill_tri(&mut self, t: usize) {
        self.alive[t] = false;
        let tri = self.tris[t];
        for k in 0..3 {
            let e = (tri[k], tri[(k + 1) % 3]);
            if self.directed.get(&e) == Some(&t) {
                self.directed.remove(&e);
            }
        }
    }

    fn third(&self, t: usize, a: usize, b: usize) -> usize {
        let tri = self.tris[t];
        tri.into_iter().find(|&v| v != a && v != b).expect("triangle has three vertices")
    }

    fn insert_point(&mut self, p: usize) {
        let pt = self.pts[p];
        let bad: Vec<usize> = (0..self.tris.len())
            .filter(|&t| {
                self.alive[t] && {
                    let [a, b, c] = self.tris[t].map(|v| self.pts[v]);
                    incircle(a, b, c, pt) > 0.0
                }
            })
            .collect();
        let bad_set: BTreeSet<usize> = bad.iter().copied().collect();
        let mut rim = Vec::new();
        for &t in &bad {
            let tri = self.tris[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let outside = self.directed.get(&(b, a)).map_or(true, |n| !bad_set.contains(n));
                if outside {
                    rim.push((a, b));
                }
            }
        }
        for &t in &bad {
            self.kill_tri(t);
        }
        for (a, b) in rim {
            self.add_tri([a, b, p]);
        }
    }

    /// Flips the diagonal `a-b` of the quad formed by its two triangles.
    fn flip(&mut self, a: usize, b: usize) -> (usize, usize) {
        let t1 = self.directed[&(a, b)];
        let t2 = self.directed[&(b, a)];
        let c = self.third(t1, a, b);
        let d = self.third(t2, a, b);
        self.kill_tri(t1);
        self.kill_tri(t2);
        self.add_tri([a, d, c]);
        self.add_tri([d, b, c]);
        (c, d)
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.directed.contains_key(&(a, b)) || self.directed.contains_key(&(b, a))
    }

    fn recover(&mut self, u: usize, v: usize) -> Result<()> {
        let (pu, pv) = (self.pts[u], self.pts[v]);
        // vertices lying on the segment split it into sub-constraints
        let mut splits: Vec<(f64, usize)> = (0..self.pts.len())
            .filter(|&w| w != u && w != v && on_segment(self.pts[w], pu, pv))
            .map(|w| ((self.pts[w] - pu).norm(), w))
            .collect();
        if !splits.is_empty() {
            splits.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut prev = u;
            for (_, w) in splits.into_iter().chain(std::iter::once((0.0, v))) {
                self.recover(prev, w)?;
                prev = w;
            }
            return Ok(());
        }
        let cap = 100 * self.tris.len().max(16);
        for _ in 0..cap {
            if self.has_edge(u, v) {
                self.constrained.insert(key(u, v));
                return Ok(());
            }
            let mut crossing: Vec<(usize, usize)> = self
                .directed
                .keys()
                .filter(|&&(a, b)| a < b && segments_cross(self.pts[a], self.pts[b], pu, pv))
                .copied()
                .collect();
            crossing.sort_unstable();
            if let Some(&(a, b)) = crossing.iter().find(|&&(a, b)| self.constrained.contains(&key(a, b))) {
                return Err(Error::TriangulationFailure(format!(
                    "boundary segments ({u}, {v}) and ({a}, {b}) intersect"
                )));
            }
            let convex = crossing.into_iter().find(|&(a, b)| {
                let c = self.third(self.directed[&(a, b)], a, b);
                let d = self.third(self.directed[&(b, a)], a, b);
                segments_cross(self.pts[a], self.pts[b], self.pts[c], self.pts[d])
            });
            match convex {
                Some((a, b)) => {
                    self.flip(a, b);
                }
                None => {
                    return Err(Error::TriangulationFailure(format!(
                        "no flippable edge while recovering segment ({u}, {v})"
                    )))
                }
            }
        }
        Err(Error::TriangulationFailure(format!(
            "segment ({u}, {v}) not recovered within {cap} flips"
        )))
    }

    /// Lawson flips until every unconstrained edge is locally Delaunay.
    fn legalize(&mut self) {
        let mut stack: Vec<(usize, usize)> = self.directed.keys().filter(|&&(a, b)| a < b).copied().collect();
        stack.sort_unstable();
        while let Some((a, b)) = stack.pop() {
            if self.constrained.contains(&key(a, b)) {
                continue;
            }
            let (Some(&t1), Some(&t2)) = (self.directed.get(&(a, b)), self.directed.get(&(b, a))) else {
                continue;
            };
            let c = self.third(t1, a, b);
            let d = self.third(t2, a, b);
            let [pa, pb, pc, pd] = [a, b, c, d].map(|v| self.pts[v]);
            if incircle(pa, pb, pc, pd) > 0.0 && segments_cross(pa, pb, pc, pd) {
                self.flip(a, b);
                stack.extend([key(a, d), key(d, b), key(b, c), key(c, a)]);
            }
        }
    }
}

/// Builds a constrained Delaunay triangulation of the environment's free
/// space using only the boundary vertices.
pub fn triangulate(env: &Environment) -> Result<TriMesh> {
    let mut pts: Vec<Point2> = Vec::new();
    let mut segments = Vec::new();
    let mut push_ring = |ring: &[Point2], pts: &mut Vec<Point2>| {
        let base = pts.len();
        let n = ring.len();
        pts.extend_from_slice(ring);
        for i in 0..n {
            segments.push((base + i, base + (i + 1) % n));
        }
    };
    push_ring(&env.workspace, &mut pts);
    for obs in &env.obstacles {
        push_ring(obs, &mut pts);
    }
    let n = pts.len();
    if n < 3 {
        return Err(Error::DegenerateInput("fewer than three boundary vertices".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if pts[i].distance(pts[j]) <= BOUNDARY_EPS {
                return Err(Error::DegenerateInput(format!(
                    "boundary vertices {i} and {j} coincide"
                )));
            }
        }
    }

    let (lo, hi) = env.bounds();
    let center = lo.lerp(hi, 0.5);
    let span = (hi - lo).norm().max(1.0) * 100.0;
    pts.push(center + Point2::new(-span, -span));
    pts.push(center + Point2::new(span, -span));
    pts.push(center + Point2::new(0.0, span));

    let mut b = Builder {
        pts,
        tris: Vec::new(),
        alive: Vec::new(),
        directed: HashMap::new(),
        constrained: BTreeSet::new(),
    };
    b.add_tri([n, n + 1, n + 2]);
    for p in 0..n {
        b.insert_point(p);
    }
    for &(u, v) in &segments {
        b.recover(u, v)?;
    }
    b.legalize();

    // Classify by the number of boundary segments crossed from the outside.
    let live: Vec<usize> = (0..b.tris.len()).filter(|&t| b.alive[t]).collect();
    let mut depth: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    for &t in &live {
        if b.tris[t].iter().any(|&v| v >= n) {
            depth.insert(t, 0);
            queue.push_back(t);
        }
    }
    while let Some(t) = queue.pop_front() {
        let d = depth[&t];
        let tri = b.tris[t];
        for k in 0..3 {
            let (u, v) = (tri[k], tri[(k + 1) % 3]);
            let Some(&nb) = b.directed.get(&(v, u)) else { continue };
            let step = usize::from(b.constrained.contains(&key(u, v)));
            let nd = d + step;
            match depth.get(&nb) {
                Some(&old) if old <= nd => {}
                _ => {
                    depth.insert(nb, nd);
                    if step == 0 {
                        queue.push_front(nb);
                    } else {
                        queue.push_back(nb);
                    }
                }
            }
        }
    }

    let mut triangles: Vec<[usize; 3]> = live
        .into_iter()
        .filter(|t| depth.get(t).copied() == Some(1))
        .map(|t| {
            let tri = b.tris[t];
            let m = (0..3).min_by_key(|&k| tri[k]).unwrap();
            [tri[m], tri[(m + 1) % 3], tri[(m + 2) % 3]]
        })
        .collect();
    triangles.sort_unstable();
    let vertices: Vec<Point2> = b.pts[..n].to_vec();
    for (t, tri) in triangles.iter().enumerate() {
        let [p, q, r] = tri.map(|v| vertices[v]);
        if triangle_signed_area(p, q, r) < AREA_EPS {
            return Err(Error::DegenerateInput(format!(
                "triangle {t} has area below {AREA_EPS:e}"
            )));
        }
    }
    let constrained: Vec<(usize, usize)> = b.constrained.iter().copied().collect();
    TriMesh::from_parts(vertices, triangles, constrained).map_err(|e| match e {
        Error::MeshInvalid(msg) => Error::TriangulationFailure(msg),
        other => other,
    })
}
