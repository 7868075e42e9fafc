use ehi_core::spaces::{gasket_corners, generate, perturb, subdivide, Kind, MeasureScheme, MetricChoice, SpaceSpec};
use proptest::prelude::*;

fn counts(kind: Kind, size: u32) -> (usize, usize) {
    let s = generate(&SpaceSpec::new(kind, size)).unwrap();
    (s.net.len(), s.net.edges().len())
}

#[test]
fn vertex_and_edge_counts() {
    for n in 0..6u32 {
        let v = (3usize.pow(n + 1) + 3) / 2;
        assert_eq!(counts(Kind::Gasket, n), (v, 3usize.pow(n + 1)), "gasket {n}");
    }
    for n in 0..4u32 {
        // a tree of 4·5ⁿ edges
        assert_eq!(counts(Kind::Vicsek, n), (4 * 5usize.pow(n) + 1, 4 * 5usize.pow(n)), "vicsek {n}");
    }
    assert_eq!(counts(Kind::Path, 17), (17, 16));
    assert_eq!(counts(Kind::Grid, 7), (49, 2 * 7 * 6));
}

#[test]
fn gasket_corner_resistance_scales_by_five_thirds() {
    let mut prev: Option<f64> = None;
    for n in 0..5u32 {
        let s = generate(&SpaceSpec::new(Kind::Gasket, n)).unwrap();
        let [a, b, _] = gasket_corners(n);
        let r = s.net.effective_resistance(a, b).unwrap();
        if n == 0 {
            assert!((r - 2.0 / 3.0).abs() < 1e-12);
        }
        if let Some(p) = prev {
            assert!((r / p - 5.0 / 3.0).abs() < 1e-9, "level {n}: {}", r / p);
        }
        prev = Some(r);
    }
}

#[test]
fn gasket_diameter_doubles() {
    for n in 0..5u32 {
        let s = generate(&SpaceSpec::new(Kind::Gasket, n)).unwrap();
        assert_eq!(s.metric.diam(), 2f64.powi(n as i32));
    }
}

#[test]
fn measure_schemes() {
    let mut spec = SpaceSpec::new(Kind::Path, 5);
    spec.measure = MeasureScheme::Degree;
    let s = generate(&spec).unwrap();
    assert_eq!(s.net.measure(), &[1.0, 2.0, 2.0, 2.0, 1.0]);
    spec.measure = MeasureScheme::Counting;
    assert!(generate(&spec).unwrap().net.measure().iter().all(|&m| m == 1.0));
}

#[test]
fn euclidean_grid_matches_coordinates() {
    let mut spec = SpaceSpec::new(Kind::Grid, 4);
    spec.metric = MetricChoice::Euclidean;
    let s = generate(&spec).unwrap();
    let p = s.metric.positions().unwrap();
    let d = |a: usize, b: usize| p[a].iter().zip(&p[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    assert_eq!(s.metric.d(0, 15), d(0, 15));
}

#[test]
fn joined_spaces_are_connected() {
    let mut spec = SpaceSpec::new(Kind::JoinedGsq, 2);
    spec.aux = 9;
    let s = generate(&spec).unwrap();
    assert!(s.metric.diam().is_finite());
    let mut spec = SpaceSpec::new(Kind::VicsekInterval, 2);
    spec.aux = 8;
    let s = generate(&spec).unwrap();
    assert_eq!(s.net.len(), 4 * 25 + 1 + 7);
}

#[test]
fn oversized_requests_are_refused() {
    assert!(generate(&SpaceSpec::new(Kind::Gasket, 20)).is_err());
    assert!(generate(&SpaceSpec::new(Kind::Path, 0)).is_err());
}

#[test]
fn subdivision_preserves_resistance() {
    let s = generate(&SpaceSpec::new(Kind::Gasket, 2)).unwrap();
    let t = subdivide(&s, 3).unwrap();
    assert_eq!(t.net.len(), s.net.len() + 2 * s.net.edges().len());
    let [a, b, c] = gasket_corners(2);
    for (x, y) in [(a, b), (b, c), (a, 7)] {
        let r0 = s.net.effective_resistance(x, y).unwrap();
        let r1 = t.net.effective_resistance(x, y).unwrap();
        assert!((r0 - r1).abs() < 1e-12 * r0);
    }
    // graph distances between old vertices are unchanged
    for x in 0..s.net.len() {
        for y in 0..s.net.len() {
            assert!((s.metric.d(x, y) - t.metric.d(x, y)).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn perturbation_stays_in_the_band(lambda in 1.0f64..20.0, seed in any::<u64>(), stream in 0u64..8) {
        let s = generate(&SpaceSpec::new(Kind::Grid, 6)).unwrap();
        let (p, cert) = perturb(&s.net, lambda, seed, stream).unwrap();
        prop_assert!(cert.holds());
        for (a, b) in s.net.edges().iter().zip(p.edges()) {
            prop_assert_eq!((a.0, a.1), (b.0, b.1));
            prop_assert!(b.2 / a.2 <= lambda && b.2 / a.2 >= 1.0 / lambda);
        }
        prop_assert_eq!(p.measure(), s.net.measure());
        // the draw is a function of (seed, stream)
        let (q, _) = perturb(&s.net, lambda, seed, stream).unwrap();
        prop_assert_eq!(q.edges(), p.edges());
    }

    #[test]
    fn paths_and_grids_of_any_size(n in 2u32..60) {
        let s = generate(&SpaceSpec::new(Kind::Path, n)).unwrap();
        prop_assert_eq!(s.metric.diam(), (n - 1) as f64);
        let g = generate(&SpaceSpec::new(Kind::Grid, n.min(20))).unwrap();
        let k = n.min(20) as f64;
        prop_assert_eq!(g.metric.diam(), 2.0 * (k - 1.0));
    }
}

#[test]
fn unit_lambda_is_the_identity() {
    let s = generate(&SpaceSpec::new(Kind::Vicsek, 1)).unwrap();
    let (p, cert) = perturb(&s.net, 1.0, 9, 0).unwrap();
    assert_eq!(p.edges(), s.net.edges());
    assert_eq!((cert.max_ratio, cert.min_ratio), (1.0, 1.0));
    assert!(perturb(&s.net, 0.5, 9, 0).is_err());
}
