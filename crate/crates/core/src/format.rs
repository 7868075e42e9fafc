//! The JSON space format and canonical report serialization.
//!
//! ```json
//! {"points": [{"id": 0, "pos": [0.0, 0.0]}, ...],
//!  "edges": [{"u": 0, "v": 1, "c": 1.0}, ...],
//!  "measure": [{"id": 0, "m": 1.0}, ...],
//!  "metric": "graph" | "euclidean" | {"matrix": [[...]]}}
//! ```

use crate::error::{Error, Result};
use crate::metric::FinitePointMetric;
use crate::network::Network;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRec {
    pub id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRec {
    pub u: i64,
    pub v: i64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureRec {
    pub id: i64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricDecl {
    Named(String),
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub points: Vec<PointRec>,
    pub edges: Vec<EdgeRec>,
    pub measure: Vec<MeasureRec>,
    pub metric: MetricDecl,
}

/// A metric space and a network on the same points (same index order).
#[derive(Debug, Clone)]
pub struct Space {
    pub metric: FinitePointMetric,
    pub net: Network,
    pub decl: MetricKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Graph,
    Euclidean,
    Matrix,
}

/// Parses and validates a space file.
pub fn parse_space(bytes: &[u8]) -> Result<Space> {
    let file: SpaceFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
    space_from_file(&file)
}

pub fn space_from_file(file: &SpaceFile) -> Result<Space> {
    let n = file.points.len();
    if n == 0 {
        return Err(Error::Parse("no points".into()));
    }
    let ids: Vec<i64> = file.points.iter().map(|p| p.id).collect();
    let mut index = HashMap::with_capacity(n);
    for (i, &id) in ids.iter().enumerate() {
        if index.insert(id, i).is_some() {
            return Err(Error::Parse(format!("duplicate point id {id}")));
        }
    }
    let look = |id: i64| index.get(&id).copied().ok_or_else(|| Error::Parse(format!("unknown point id {id}")));
    let mut edges = Vec::with_capacity(file.edges.len());
    for e in &file.edges {
        if !(e.c > 0.0) || !e.c.is_finite() {
            return Err(Error::Parse("conductance must be positive and finite".into()));
        }
        edges.push((look(e.u)?, look(e.v)?, e.c));
    }
    let mut m = vec![f64::NAN; n];
    for r in &file.measure {
        let i = look(r.id)?;
        if !m[i].is_nan() {
            return Err(Error::Parse(format!("duplicate measure entry for {}", r.id)));
        }
        if !(r.m > 0.0) || !r.m.is_finite() {
            return Err(Error::Parse("measure must be positive and finite".into()));
        }
        m[i] = r.m;
    }
    if m.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse("measure must cover every point".into()));
    }
    let positions: Option<Vec<Vec<f64>>> = if file.points.iter().all(|p| p.pos.is_some()) {
        Some(file.points.iter().map(|p| p.pos.clone().unwrap()).collect())
    } else {
        None
    };
    if let Some(p) = &positions {
        let dim = p[0].len();
        if p.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Parse("positions must share a dimension and be finite".into()));
        }
    }
    let net = Network::new(n, edges.clone(), m).map_err(|e| Error::Parse(e.to_string()))?;
    let (metric, decl) = match &file.metric {
        MetricDecl::Named(s) if s == "graph" => {
            let lens: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v, c)| (u, v, 1.0 / c)).collect();
            (FinitePointMetric::graph(ids, positions, &lens)?, MetricKind::Graph)
        }
        MetricDecl::Named(s) if s == "euclidean" => {
            let p = positions.ok_or_else(|| Error::Parse("euclidean metric needs positions on all points".into()))?;
            (FinitePointMetric::euclidean(ids, p)?, MetricKind::Euclidean)
        }
        MetricDecl::Named(s) => return Err(Error::Parse(format!("unknown metric kind {s:?}"))),
        MetricDecl::Matrix { matrix } => {
            if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                return Err(Error::Parse("metric matrix must be n×n".into()));
            }
            (FinitePointMetric::new(ids, positions, matrix.concat())?, MetricKind::Matrix)
        }
    };
    Ok(Space { metric, net, decl })
}

/// Serializes a space back to the file schema.
pub fn space_to_file(space: &Space) -> SpaceFile {
    let ids = space.metric.ids();
    let pos = space.metric.positions();
    let points = ids.iter().enumerate().map(|(i, &id)| PointRec { id, pos: pos.map(|p| p[i].clone()) }).collect();
    let edges = space.net.edges().iter().map(|&(u, v, c)| EdgeRec { u: ids[u], v: ids[v], c }).collect();
    let measure = space.net.measure().iter().enumerate().map(|(i, &m)| MeasureRec { id: ids[i], m }).collect();
    let metric = match space.decl {
        MetricKind::Graph => MetricDecl::Named("graph".into()),
        MetricKind::Euclidean => MetricDecl::Named("euclidean".into()),
        MetricKind::Matrix => {
            let n = space.metric.len();
            MetricDecl::Matrix { matrix: (0..n).map(|x| space.metric.row(x).to_vec()).collect() }
        }
    };
    SpaceFile { points, edges, measure, metric }
}

pub fn space_to_json(space: &Space) -> String {
    canonical_json(&serde_json::to_value(space_to_file(space)).expect("space serializes"))
}

/// 17 significant digits, shortest exponent form accepted by JSON.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    // "d.dddde±x" is valid JSON as is
    format!("{:.16e}", v)
}

/// Serializes a JSON value with sorted keys and fixed float formatting.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, &mut out);
    out
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt_f64(n.as_f64().unwrap()));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(x, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                write_value(&m[k], out);
            }
            out.push('}');
        }
    }
}

/// CSV table with header `x,y,value`.
pub fn xy_csv(rows: &[(i64, i64, f64)]) -> String {
    let mut s = String::from("x,y,value\n");
    for &(x, y, v) in rows {
        s.push_str(&format!("{x},{y},{}\n", fmt_f64(v)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATH: &str = r#"{"points":[{"id":0,"pos":[0.0]},{"id":1,"pos":[1.0]},{"id":2,"pos":[2.0]}],
        "edges":[{"u":0,"v":1,"c":1.0},{"u":1,"v":2,"c":1.0}],
        "measure":[{"id":0,"m":1.0},{"id":1,"m":1.0},{"id":2,"m":1.0}],"metric":"graph"}"#;

    #[test]
    fn roundtrip() {
        let s = parse_space(PATH.as_bytes()).unwrap();
        let again = parse_space(space_to_json(&s).as_bytes()).unwrap();
        assert_eq!(space_to_file(&s), space_to_file(&again));
        assert_eq!(s.metric.d(0, 2), 2.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(parse_space(b"{}").is_err());
        assert!(parse_space(PATH.replace("\"c\":1.0}", "\"c\":-1.0}").as_bytes()).is_err());
        assert!(parse_space(PATH.replace("\"graph\"", "\"taxicab\"").as_bytes()).is_err());
        assert!(parse_space(PATH.replace("{\"id\":2,\"m\":1.0}", "{\"id\":1,\"m\":1.0}").as_bytes()).is_err());
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let v: f64 = fmt_f64(1.0 / 3.0).parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
    }
}
