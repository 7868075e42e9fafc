use ehi_core::metric::qs_distortion;
use ehi_core::FinitePointMetric;
use proptest::prelude::*;

fn ids(n: usize) -> Vec<i64> {
    (0..n as i64).collect()
}

fn path(n: usize) -> FinitePointMetric {
    let edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
    FinitePointMetric::graph(ids(n), None, &edges).unwrap()
}

/// Floyd–Warshall on an edge list.
fn floyd(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(u, v, l) in edges {
        d[u][v] = d[u][v].min(l);
        d[v][u] = d[v][u].min(l);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// A random tree plus extra edges: always connected.
fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..24).prop_flat_map(|n| {
        let tree = proptest::collection::vec((any::<prop::sample::Index>(), 1u32..5), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n, 1u32..5), 0..n);
        (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
            let mut e: Vec<(usize, usize, f64)> =
                tree.iter().enumerate().map(|(i, (p, l))| (p.index(i + 1), i + 1, *l as f64)).collect();
            e.extend(extra.into_iter().filter(|(u, v, _)| u != v).map(|(u, v, l)| (u, v, l as f64)));
            (n, e)
        })
    })
}

#[test]
fn balls_are_open_and_closed_balls_closed() {
    let p = path(10);
    assert_eq!(p.ball(3, 2.0), vec![2, 3, 4]);
    assert_eq!(p.closed_ball(3, 2.0), vec![1, 2, 3, 4, 5]);
    assert_eq!(p.ball(0, 0.5), vec![0]);
    assert_eq!(p.ball_by_id(9, 1.5).unwrap(), vec![8, 9]);
    assert!(p.ball_by_id(42, 1.0).is_err());
    assert_eq!(p.diam(), 9.0);
    assert_eq!(p.resolution(), 1.0);
}

#[test]
fn disconnected_graph_is_rejected() {
    assert!(FinitePointMetric::graph(ids(3), None, &[(0, 1, 1.0)]).is_err());
    assert!(FinitePointMetric::graph(ids(2), None, &[(0, 1, -1.0)]).is_err());
}

#[test]
fn non_metric_matrices_are_rejected() {
    // triangle inequality fails: d(0,2) > d(0,1) + d(1,2)
    let bad = vec![0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0];
    assert!(FinitePointMetric::new(ids(3), None, bad).is_err());
    let asym = vec![0.0, 1.0, 2.0, 0.0];
    assert!(FinitePointMetric::new(ids(2), None, asym).is_err());
    let zero = vec![0.0, 0.0, 0.0, 0.0];
    assert!(FinitePointMetric::new(ids(2), None, zero).is_err());
}

#[test]
fn euclidean_unit_square() {
    let pos = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let m = FinitePointMetric::euclidean(ids(4), pos).unwrap();
    assert_eq!(m.d(0, 1), 1.0);
    assert!((m.d(0, 3) - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn doubling_constant_of_a_path_is_small() {
    let md = path(200).md_constant(20);
    assert!((2..=4).contains(&md), "{md}");
}

#[test]
fn rbc_chain_on_a_path() {
    let p = path(40);
    let c = p.rbc_chain(20, 8.0, 14, 26, 0.25, 2.0).unwrap().unwrap();
    assert!(c.is_valid(&p));
    assert_eq!(c.centers.first(), Some(&14));
    assert_eq!(c.centers.last(), Some(&26));
    // steps shorter than 2 on the integer lattice: one unit at a time
    assert_eq!(c.len(), 12);
    assert!(p.rbc_chain(20, 8.0, 0, 26, 0.25, 2.0).unwrap().is_none());
    assert!(p.rbc_chain(20, 8.0, 14, 26, 1.5, 2.0).is_err());
}

#[test]
fn uniform_perfectness_of_path_and_star() {
    assert!(path(64).uniform_perfectness(4.0).holds);
    // two clusters far apart leave an empty annulus
    let pos = vec![vec![0.0], vec![1.0], vec![1000.0], vec![1001.0]];
    let m = FinitePointMetric::euclidean(ids(4), pos).unwrap();
    assert!(!m.uniform_perfectness(2.0).holds);
}

#[test]
fn snowflake_distortion_envelope() {
    let p = path(30);
    let snow = FinitePointMetric::new(
        ids(30),
        None,
        (0..30).flat_map(|x| (0..30).map(move |y| ((x as f64) - (y as f64)).abs().sqrt())).collect(),
    )
    .unwrap();
    let env = qs_distortion(&p, &snow, 0).unwrap();
    assert!(env.is_finite);
    for &(t, e) in &env.sample_ratios {
        assert!((e - t.sqrt()).abs() < 1e-12, "η({t}) = {e}");
    }
    let id = qs_distortion(&p, &p, 0).unwrap();
    assert!(id.sample_ratios.iter().all(|&(t, e)| t == e));
}

proptest! {
    #[test]
    fn graph_metric_matches_floyd((n, edges) in connected_graph()) {
        let m = FinitePointMetric::graph(ids(n), None, &edges).unwrap();
        let d = floyd(n, &edges);
        for x in 0..n {
            for y in 0..n {
                prop_assert_eq!(m.d(x, y), d[x][y]);
            }
        }
    }

    #[test]
    fn chain_metric_is_a_metric_below_q(q in proptest::collection::vec(0.1f64..10.0, 36)) {
        let n = 6;
        let mut w = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    w[x * n + y] = q[x.min(y) * n + x.max(y)];
                }
            }
        }
        let m = FinitePointMetric::chain_metric(ids(n), None, &w).unwrap();
        for x in 0..n {
            for y in 0..n {
                prop_assert!(m.d(x, y) <= w[x * n + y] + 1e-12);
                for z in 0..n {
                    prop_assert!(m.d(x, z) <= m.d(x, y) + m.d(y, z) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn ball_nesting((n, edges) in connected_graph(), r in 0.5f64..20.0, x in any::<prop::sample::Index>()) {
        let m = FinitePointMetric::graph(ids(n), None, &edges).unwrap();
        let x = x.index(n);
        let open = m.ball(x, r);
        let closed = m.closed_ball(x, r);
        prop_assert!(open.contains(&x));
        prop_assert!(open.iter().all(|p| closed.contains(p)));
        prop_assert!(closed.iter().all(|&p| m.d(x, p) <= r));
        prop_assert!(open.iter().all(|&p| m.d(x, p) < r));
        let net = m.greedy_net(&(0..n).collect::<Vec<_>>(), r, &[]);
        for (i, &a) in net.iter().enumerate() {
            for &b in &net[..i] {
                prop_assert!(m.d(a, b) >= r);
            }
        }
        // maximality: every point is within r of the net
        prop_assert!((0..n).all(|p| net.iter().any(|&q| m.d(p, q) < r)));
    }
}
