use ehi_core::dyadic::{build_decomposition, cube_capacities};
use ehi_core::format::Space;
use ehi_core::spaces::{generate, Kind, SpaceSpec};
use ehi_core::vk::{audit_ledger, build_measure, verify_capacity_good, verify_doubling, Ledger, VkResult};
use proptest::prelude::*;

fn space(kind: Kind, size: u32) -> Space {
    generate(&SpaceSpec::new(kind, size)).unwrap()
}

fn run(s: &Space) -> VkResult {
    let dec = build_decomposition(&s.metric, 0, 8.0).unwrap();
    let caps = cube_capacities(&dec, &s.metric, &s.net).unwrap();
    build_measure(&dec, &caps, &s.metric, dec.k0().unwrap() - 1).unwrap()
}

#[test]
fn path_measure_is_a_probability_with_a_clean_ledger() {
    let s = space(Kind::Path, 300);
    let r = run(&s);
    assert!((r.measure.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(r.measure.iter().all(|&m| m > 0.0));
    assert!(!r.ledger.steps.is_empty());
    let replay = Ledger::from_json(r.ledger.to_json().as_bytes()).unwrap();
    assert_eq!(replay, r.ledger);
    let audit = audit_ledger(&replay);
    assert!(audit.pass(), "{audit:?}");
    let d = verify_doubling(&r.measure, &s.metric, 32);
    assert!(d.pass && d.doubling.value() < 10.0, "{d:?}");
}

#[test]
fn audit_catches_edits() {
    let s = space(Kind::Path, 300);
    let l = run(&s).ledger;
    let mut bad = l.clone();
    bad.steps[0].final_masses[0].1 *= 1.001;
    assert!(!audit_ledger(&bad).pass());
    let mut bad = l.clone();
    bad.start[0].1 *= 2.0;
    assert!(!audit_ledger(&bad).pass());
    let mut bad = l.clone();
    bad.c_big = 1.0;
    assert!(!audit_ledger(&bad).pass());
    let mut bad = l;
    bad.steps[0].stage1[0].1 += 1e-9;
    assert!(!audit_ledger(&bad).pass());
}

#[test]
fn start_level_beyond_the_tree_is_refused() {
    let s = space(Kind::Gasket, 2);
    let dec = build_decomposition(&s.metric, 0, 8.0).unwrap();
    let caps = cube_capacities(&dec, &s.metric, &s.net).unwrap();
    assert!(build_measure(&dec, &caps, &s.metric, dec.k_max()).is_err());
}

#[test]
fn counting_measure_on_the_grid_is_capacity_good() {
    let s = space(Kind::Grid, 24);
    let c = verify_capacity_good(s.net.measure(), &s.net, &s.metric, 2.0, 32, None).unwrap();
    assert!(c.pass, "{c:?}");
    // two-dimensional: mass grows like r², capacity of an annulus is flat
    assert!(c.beta1 > 1.0 && c.beta2 < 3.5, "{} {}", c.beta1, c.beta2);
    let d = verify_doubling(s.net.measure(), &s.metric, 32);
    assert!(d.pass && d.doubling.value() <= 8.0);
}

#[test]
fn malformed_ledgers_are_rejected() {
    assert!(Ledger::from_json(b"[]").is_err());
    assert!(Ledger::from_json(b"{\"c_big\": 1.0}").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn paths_of_any_length(n in 60u32..400) {
        let s = space(Kind::Path, n);
        let r = run(&s);
        prop_assert!((r.measure.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let audit = audit_ledger(&Ledger::from_json(r.ledger.to_json().as_bytes()).unwrap());
        prop_assert!(audit.pass(), "{:?}", audit);
    }
}
