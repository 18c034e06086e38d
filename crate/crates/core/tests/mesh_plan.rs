mod support;

use trifield::geometry::{incircle, orient2d};
use trifield::{plan, triangulate, Point2};

#[test]
fn random_meshes_tile_free_space() {
    for env in support::random_envs(30, 1) {
        let mesh = triangulate(&env).unwrap();
        let area: f64 = (0..mesh.len()).map(|t| mesh.area(t)).sum();
        assert!((area - env.free_area()).abs() < 1e-9 * env.free_area());
        for t in 0..mesh.len() {
            let [a, b, c] = mesh.corners(t);
            assert!(orient2d(a, b, c) > 0.0);
            assert!(env.in_interior(mesh.centroid(t)));
            for k in 0..3 {
                if let Some(n) = mesh.neighbor(t, k) {
                    assert!(mesh.neighbors(n).contains(&Some(t)));
                }
            }
        }
    }
}

#[test]
fn boundary_edges_are_constrained_and_rest_is_delaunay() {
    for env in support::random_envs(30, 2) {
        let mesh = triangulate(&env).unwrap();
        for t in 0..mesh.len() {
            for k in 0..3 {
                let (a, b) = mesh.edge_vertices(t, k);
                match mesh.neighbor(t, k) {
                    None => assert!(mesh.is_constrained(a, b)),
                    Some(n) if !mesh.is_constrained(a, b) => {
                        let [p, q, r] = mesh.corners(t);
                        let far = mesh.triangles()[n]
                            .iter()
                            .find(|&&v| v != a && v != b)
                            .map(|&v| mesh.vertices()[v])
                            .unwrap();
                        assert!(incircle(p, q, r, far) <= 0.0, "edge ({a}, {b}) is not locally Delaunay");
                    }
                    Some(_) => {}
                }
            }
        }
    }
}

/// Bellman-Ford over the centroid graph as an independent shortest-path
/// oracle.
fn bellman_ford(mesh: &trifield::TriMesh, source: usize) -> Vec<f64> {
    let n = mesh.len();
    let mut dist = vec![f64::INFINITY; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for t in 0..n {
            for k in 0..3 {
                let Some(u) = mesh.neighbor(t, k) else { continue };
                let (a, b) = mesh.edge_vertices(t, k);
                if mesh.is_constrained(a, b) {
                    continue;
                }
                let w = mesh.centroid(t).distance(mesh.centroid(u));
                if dist[u] + w < dist[t] {
                    dist[t] = dist[u] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

#[test]
fn plan_distances_match_bellman_ford() {
    for env in support::random_envs(30, 3) {
        let mesh = triangulate(&env).unwrap();
        let plan = plan(&mesh, env.goal).unwrap();
        let oracle = bellman_ford(&mesh, plan.goal_triangle);
        for t in 0..mesh.len() {
            assert!((plan.distance[t] - oracle[t]).abs() <= 1e-9 * (1.0 + oracle[t]));
            if let Some(s) = plan.successor(t) {
                let step = mesh.centroid(t).distance(mesh.centroid(s));
                assert!((plan.distance[s] + step - plan.distance[t]).abs() <= 1e-9 * (1.0 + oracle[t]));
            }
        }
    }
}

#[test]
fn successor_chains_reach_goal_within_n_steps() {
    for env in support::random_envs(30, 4) {
        let mesh = triangulate(&env).unwrap();
        let plan = plan(&mesh, env.goal).unwrap();
        assert!(plan.unreachable.is_empty());
        for t in plan.cells() {
            let path = plan.path(t);
            assert!(path.len() <= mesh.len());
            assert_eq!(*path.last().unwrap(), plan.goal_triangle);
        }
    }
}

#[test]
fn exit_normals_point_into_successor() {
    for env in support::random_envs(20, 5) {
        let mesh = triangulate(&env).unwrap();
        let plan = plan(&mesh, env.goal).unwrap();
        for t in plan.cells() {
            let e = plan.exit(t).unwrap();
            let v = mesh.vertices();
            let mid = v[e.face.0].lerp(v[e.face.1], 0.5);
            let into = mesh.centroid(e.successor) - mid;
            assert!(e.outward_normal.vec().dot(into) > 0.0);
            let apex: Point2 = v[e.opposite_vertex];
            assert!(e.outward_normal.vec().dot(mid - apex) > 0.0);
        }
    }
}
