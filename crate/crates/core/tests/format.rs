use ehi_core::dyadic::DyadicDecomposition;
use ehi_core::format::{canonical_json, fmt_f64, parse_space, space_to_json, MetricKind};
use ehi_core::vk::{audit_ledger, Ledger};
use proptest::prelude::*;
use serde_json::{json, Value};
use std::path::PathBuf;

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus {target}");
    out
}

// the same checks the fuzz targets run
fn space_check(data: &[u8]) -> bool {
    match parse_space(data) {
        Ok(space) => {
            let text = space_to_json(&space);
            let again = parse_space(text.as_bytes()).expect("serialized space parses");
            assert_eq!(space_to_json(&again), text);
            true
        }
        Err(_) => false,
    }
}

fn ledger_check(data: &[u8]) -> bool {
    match Ledger::from_json(data) {
        Ok(l) => {
            let _ = audit_ledger(&l);
            assert_eq!(Ledger::from_json(l.to_json().as_bytes()).unwrap(), l);
            true
        }
        Err(_) => false,
    }
}

fn decomposition_check(data: &[u8]) -> bool {
    match DyadicDecomposition::from_json(data) {
        Ok(d) => {
            for k in d.k_min..=d.k_max() {
                let _ = d.cubes(k);
            }
            assert_eq!(DyadicDecomposition::from_json(d.to_json().as_bytes()).unwrap(), d);
            true
        }
        Err(_) => false,
    }
}

fn mutations(seed: &[u8], rounds: usize) -> Vec<Vec<u8>> {
    let mut out = vec![];
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        x
    };
    for _ in 0..rounds {
        let mut b = seed.to_vec();
        for _ in 0..1 + next() % 4 {
            let i = (next() % b.len() as u64) as usize;
            match next() % 3 {
                0 => b[i] = b"0123456789-.,:{}[]\"e"[(next() % 20) as usize],
                1 => {
                    b.remove(i);
                }
                _ => b.truncate(i),
            }
            if b.is_empty() {
                break;
            }
        }
        out.push(b);
    }
    out
}

#[test]
fn seeds_parse_and_round_trip() {
    for (name, data) in corpus("space_json") {
        assert!(space_check(&data), "{name}");
    }
    for (name, data) in corpus("ledger_json") {
        assert!(ledger_check(&data), "{name}");
        assert!(audit_ledger(&Ledger::from_json(&data).unwrap()).pass(), "{name}");
    }
    for (name, data) in corpus("decomposition_json") {
        assert!(decomposition_check(&data), "{name}");
    }
}

#[test]
fn mutated_seeds_never_panic() {
    for (_, data) in corpus("space_json") {
        for m in mutations(&data, 300) {
            space_check(&m);
        }
    }
    for (_, data) in corpus("decomposition_json") {
        for m in mutations(&data, 100) {
            decomposition_check(&m);
        }
    }
    for (_, data) in corpus("ledger_json") {
        for m in mutations(&data, 40) {
            ledger_check(&m);
        }
    }
}

fn base() -> Value {
    json!({
        "points": [{"id": 0, "pos": [0.0]}, {"id": 1, "pos": [1.0]}, {"id": 2, "pos": [3.0]}],
        "edges": [{"u": 0, "v": 1, "c": 1.0}, {"u": 1, "v": 2, "c": 0.5}],
        "measure": [{"id": 0, "m": 1.0}, {"id": 1, "m": 1.0}, {"id": 2, "m": 2.0}],
        "metric": "graph"
    })
}

fn parses(v: &Value) -> bool {
    parse_space(v.to_string().as_bytes()).is_ok()
}

#[test]
fn graph_metric_uses_resistance_lengths() {
    let s = parse_space(base().to_string().as_bytes()).unwrap();
    assert_eq!(s.decl, MetricKind::Graph);
    assert_eq!(s.metric.d(0, 2), 3.0);
    let mut v = base();
    v["metric"] = "euclidean".into();
    let s = parse_space(v.to_string().as_bytes()).unwrap();
    assert_eq!(s.metric.d(0, 2), 3.0);
    assert_eq!(s.metric.ids(), &[0, 1, 2]);
}

#[test]
fn invalid_files_are_rejected() {
    assert!(parses(&base()));
    let cases: Vec<Box<dyn Fn(&mut Value)>> = vec![
        Box::new(|v| v["points"][1]["id"] = 0.into()),
        Box::new(|v| v["edges"][0]["v"] = 7.into()),
        Box::new(|v| v["edges"][0]["c"] = 0.0.into()),
        Box::new(|v| v["edges"][0]["c"] = (-1.0).into()),
        Box::new(|v| v["measure"].as_array_mut().unwrap().truncate(2)),
        Box::new(|v| v["measure"][1]["id"] = 0.into()),
        Box::new(|v| v["measure"][0]["m"] = 0.0.into()),
        Box::new(|v| v["extra"] = true.into()),
        Box::new(|v| v["edges"][0]["w"] = 1.into()),
        Box::new(|v| v["metric"] = "taxicab".into()),
        Box::new(|v| v["metric"] = json!({"matrix": [[0.0, 1.0], [1.0, 0.0]]})),
        Box::new(|v| v["metric"] = json!({"matrix": [[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]]})),
        Box::new(|v| v["metric"] = json!({"matrix": [[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.5, 0.0]]})),
        Box::new(|v| {
            v["metric"] = "euclidean".into();
            v["points"][2].as_object_mut().unwrap().remove("pos");
        }),
        Box::new(|v| v["points"][2]["pos"] = json!([1.0, 2.0])),
        Box::new(|v| {
            v["points"] = json!([]);
            v["edges"] = json!([]);
            v["measure"] = json!([]);
        }),
        // disconnected
        Box::new(|v| v["edges"].as_array_mut().unwrap().truncate(1)),
    ];
    for (i, edit) in cases.iter().enumerate() {
        let mut v = base();
        edit(&mut v);
        assert!(!parses(&v), "case {i} accepted: {v}");
    }
    assert!(parse_space(b"{\"points\": [").is_err());
    assert!(parse_space(b"").is_err());
}

#[test]
fn canonical_json_sorts_keys_and_fixes_floats() {
    let v = json!({"b": [1, 2.5, {"z": null, "a": true}], "a": "x\"y", "c": 0.0});
    assert_eq!(canonical_json(&v), r#"{"a":"x\"y","b":[1,2.5000000000000000e0,{"a":true,"z":null}],"c":0.0}"#);
    assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt_f64(-0.0), "0.0");
}

proptest! {
    #[test]
    fn floats_survive_formatting(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert_eq!(back, if x == 0.0 { 0.0 } else { x });
        let v: Value = serde_json::from_str(&fmt_f64(x)).unwrap();
        prop_assert_eq!(v.as_f64().unwrap(), back);
    }

    #[test]
    fn random_spaces_round_trip(
        ids in proptest::collection::hash_set(-1000i64..1000, 1..20),
        cs in proptest::collection::vec(1e-3f64..1e3, 20),
        ms in proptest::collection::vec(1e-3f64..1e3, 20),
        with_pos in any::<bool>(),
    ) {
        let ids: Vec<i64> = ids.into_iter().collect();
        let n = ids.len();
        let points: Vec<Value> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| if with_pos { json!({"id": id, "pos": [i as f64 * 0.7, (i * i) as f64]}) } else { json!({"id": id}) })
            .collect();
        let edges: Vec<Value> = (1..n).map(|i| json!({"u": ids[i - 1], "v": ids[i], "c": cs[i]})).collect();
        let measure: Vec<Value> = ids.iter().zip(&ms).map(|(&id, &m)| json!({"id": id, "m": m})).collect();
        let metric = if with_pos { "euclidean" } else { "graph" };
        let file = json!({"points": points, "edges": edges, "measure": measure, "metric": metric});
        let s = parse_space(file.to_string().as_bytes()).unwrap();
        let text = space_to_json(&s);
        let again = parse_space(text.as_bytes()).unwrap();
        prop_assert_eq!(space_to_json(&again), text);
        prop_assert_eq!(again.net.measure(), s.net.measure());
        prop_assert_eq!(again.net.edges(), s.net.edges());
        for x in 0..n {
            prop_assert_eq!(again.metric.row(x), s.metric.row(x));
        }
    }
}
