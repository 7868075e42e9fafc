use ehi_core::Network;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn path(n: usize) -> Network {
    Network::new(n, (1..n).map(|i| (i - 1, i, 1.0)).collect(), vec![1.0; n]).unwrap()
}

/// Connected random network with positive conductances and masses.
fn network() -> impl Strategy<Value = Network> {
    (3usize..16).prop_flat_map(|n| {
        let tree = proptest::collection::vec((any::<prop::sample::Index>(), 0.1f64..10.0), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n, 0.1f64..10.0), 0..2 * n);
        let mass = proptest::collection::vec(0.1f64..5.0, n);
        (Just(n), tree, extra, mass).prop_map(|(n, tree, extra, mass)| {
            let mut e: Vec<(usize, usize, f64)> =
                tree.iter().enumerate().map(|(i, (p, c))| (p.index(i + 1), i + 1, *c)).collect();
            for (u, v, c) in extra {
                if u != v && !e.iter().any(|&(a, b, _)| (a, b) == (u, v) || (a, b) == (v, u)) {
                    e.push((u, v, c));
                }
            }
            Network::new(n, e, mass).unwrap()
        })
    })
}

/// Proper subset: every vertex with bit set, never all of them.
fn domain_of(n: usize, bits: u32) -> Vec<usize> {
    let mut d: Vec<usize> = (0..n).filter(|&x| bits >> (x % 32) & 1 == 1).collect();
    if d.len() == n {
        d.pop();
    }
    if d.is_empty() {
        d.push(0);
    }
    d
}

/// Dense K_D = (degree − conductance) restricted to D.
fn killed_laplacian(net: &Network, d: &[usize]) -> DMatrix<f64> {
    let k = d.len();
    let mut m = DMatrix::zeros(k, k);
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = net.degree(x);
        for &(y, c) in net.neighbors(x) {
            if let Some(j) = d.iter().position(|&z| z == y) {
                m[(i, j)] -= c;
            }
        }
    }
    m
}

#[test]
fn green_function_of_a_short_path() {
    let g = path(5).green_matrix(&[1, 2, 3]).unwrap();
    let want = [[3.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 3.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((g.get(i, j) - want[i][j] / 4.0).abs() < 1e-12);
        }
    }
}

#[test]
fn whole_space_is_recurrent() {
    assert!(path(4).green_matrix(&[0, 1, 2, 3]).is_err());
    assert!(path(4).cap(&[0, 1, 2], &[3]).is_err());
}

#[test]
fn capacity_of_a_path_segment() {
    assert_eq!(path(5).cap(&[1, 2, 3], &[2]).unwrap(), 1.0);
    // series resistance: Cap_{[1,n-1]}({1}) with the far end grounded
    let p = path(11);
    let d: Vec<usize> = (1..10).collect();
    let c = p.cap(&d, &[1]).unwrap();
    assert!((c - (1.0 + 1.0 / 9.0)).abs() < 1e-12, "{c}");
}

#[test]
fn exit_time_of_a_path() {
    // E τ from x on 0..n with unit weights is x(n − x)
    let n = 12;
    let p = path(n + 1);
    let d: Vec<usize> = (1..n).collect();
    let u = p.exit_time(&d).unwrap();
    for (i, &x) in d.iter().enumerate() {
        let want = (x * (n - x)) as f64 / 2.0;
        assert!((u[i] - want).abs() < 1e-9, "{x}: {} vs {want}", u[i]);
    }
}

#[test]
fn effective_resistance_series_and_parallel() {
    let p = path(6);
    assert!((p.effective_resistance(0, 5).unwrap() - 5.0).abs() < 1e-12);
    // square 0-1-2-3-0: two parallel branches of resistance 2
    let sq = Network::new(4, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)], vec![1.0; 4]).unwrap();
    assert!((sq.effective_resistance(0, 2).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(sq.effective_resistance(1, 1).unwrap(), 0.0);
}

#[test]
fn invalid_networks() {
    assert!(Network::new(2, vec![(0, 1, 0.0)], vec![1.0, 1.0]).is_err());
    assert!(Network::new(2, vec![(0, 2, 1.0)], vec![1.0, 1.0]).is_err());
    assert!(Network::new(2, vec![(0, 1, 1.0)], vec![1.0, -1.0]).is_err());
    assert!(Network::new(2, vec![(0, 1, 1.0)], vec![1.0]).is_err());
}

#[test]
fn hitting_probability_on_the_path() {
    let p = path(9);
    let h = p.hitting_probability(&[1, 2, 3, 4, 5, 6, 7], &[4]).unwrap();
    assert!((h[2] - 0.5).abs() < 1e-12);
    assert_eq!(h[4], 1.0);
    assert_eq!(h[0], 0.0);
    assert!(p.hitting_probability(&[1, 2], &[5]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn green_is_the_inverse_of_the_killed_laplacian(net in network(), bits in any::<u32>()) {
        let d = domain_of(net.len(), bits);
        let g = net.green_matrix(&d).unwrap();
        let inv = killed_laplacian(&net, &d).try_inverse().unwrap();
        let scale = inv.amax();
        for i in 0..d.len() {
            for j in 0..d.len() {
                prop_assert!((g.get(i, j) - inv[(i, j)]).abs() <= 1e-9 * scale);
            }
        }
        prop_assert!(g.max_asymmetry() <= 1e-10 * scale);
    }

    #[test]
    fn capacity_is_the_dirichlet_minimum(net in network(), bits in any::<u32>(), abits in any::<u32>(), bump in -1.0f64..1.0) {
        let d = domain_of(net.len(), bits);
        let a: Vec<usize> = d.iter().copied().filter(|&x| abits >> (x % 32) & 1 == 1).collect();
        prop_assume!(!a.is_empty());
        let c = net.capacity(&d, &a).unwrap();
        prop_assert!((net.energy(&c.potential) - c.value).abs() <= 1e-9 * c.value.max(1.0));
        prop_assert!(c.potential.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // any admissible competitor has at least as much energy
        let free: Vec<usize> = d.iter().copied().filter(|x| !a.contains(x)).collect();
        if let Some(&z) = free.first() {
            let mut f = c.potential.clone();
            f[z] += bump;
            prop_assert!(net.energy(&f) >= c.value - 1e-9);
        }
        // the equilibrium measure has total mass Cap
        let total: f64 = c.eq_measure.iter().map(|e| e.1).sum();
        prop_assert!((total - c.value).abs() <= 1e-8 * c.value.max(1.0));
    }

    #[test]
    fn capacity_is_monotone(net in network(), bits in any::<u32>(), extra in any::<prop::sample::Index>()) {
        let d = domain_of(net.len(), bits);
        let a = vec![d[0]];
        let c = net.cap(&d, &a).unwrap();
        // adding a vertex to the domain lowers capacity
        let outside: Vec<usize> = (0..net.len()).filter(|x| !d.contains(x)).collect();
        let mut bigger = d.clone();
        bigger.push(outside[extra.index(outside.len())]);
        bigger.sort_unstable();
        if bigger.len() < net.len() {
            prop_assert!(net.cap(&bigger, &a).unwrap() <= c * (1.0 + 1e-10));
        }
        // and enlarging the condenser plate raises it
        prop_assert!(net.cap(&d, &d).unwrap() >= c * (1.0 - 1e-10));
    }

    #[test]
    fn harmonic_measure_is_a_probability(net in network(), bits in any::<u32>()) {
        let d = domain_of(net.len(), bits);
        let h = net.harmonic_measure(&d).unwrap();
        for i in 0..h.domain.len() {
            let s: f64 = (0..h.boundary.len()).map(|j| h.get(i, j)).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!((0..h.boundary.len()).all(|j| h.get(i, j) >= -1e-12));
        }
    }

    #[test]
    fn energy_measure_totals_twice_the_energy(net in network(), f in proptest::collection::vec(-5.0f64..5.0, 16)) {
        let f = &f[..net.len()];
        let mu = net.energy_measure(f);
        let e = net.energy(f);
        prop_assert!((mu.iter().sum::<f64>() - 2.0 * e).abs() <= 1e-9 * e.max(1.0));
        prop_assert!((net.bilinear(f, f) - e).abs() <= 1e-9 * e.max(1.0));
    }

    #[test]
    fn time_change_keeps_harmonic_objects(net in network(), bits in any::<u32>(), m in proptest::collection::vec(0.1f64..9.0, 16)) {
        let d = domain_of(net.len(), bits);
        let t = net.time_change(m[..net.len()].to_vec()).unwrap();
        let a = vec![d[d.len() - 1]];
        prop_assert_eq!(net.cap(&d, &a).unwrap(), t.cap(&d, &a).unwrap());
        let (h1, h2) = (net.harmonic_measure(&d).unwrap(), t.harmonic_measure(&d).unwrap());
        prop_assert_eq!(h1.omega, h2.omega);
        // exit times follow the new measure: E τ = g_D m
        let g = t.green_matrix(&d).unwrap();
        let u = t.exit_time(&d).unwrap();
        for i in 0..d.len() {
            let want: f64 = d.iter().enumerate().map(|(j, &y)| g.get(i, j) * m[y]).sum();
            prop_assert!((u[i] - want).abs() <= 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn harmonic_extension_solves_the_dirichlet_problem(net in network(), bits in any::<u32>(), b in proptest::collection::vec(-3.0f64..3.0, 16)) {
        let d = domain_of(net.len(), bits);
        let n = net.len();
        let u = net.harmonic_extend(&d, &b[..n]).unwrap();
        for x in 0..n {
            if d.contains(&x) {
                let lap: f64 = net.neighbors(x).iter().map(|&(y, c)| c * (u[y] - u[x])).sum();
                prop_assert!(lap.abs() < 1e-9);
            } else {
                prop_assert_eq!(u[x], b[x]);
            }
        }
    }
}
