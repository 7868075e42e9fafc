//! Deterministic test spaces and conductance perturbations.

use crate::error::{Error, Result};
use crate::format::{MetricKind, Space};
use crate::metric::FinitePointMetric;
use crate::network::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest point count for which a dense distance matrix is built.
pub const MAX_POINTS: usize = 12_000;
pub const MAX_LEVEL: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Path,
    Grid,
    Gasket,
    Vicsek,
    JoinedGsq,
    VicsekInterval,
}

impl Kind {
    /// How a generator departs from the continuum construction it stands in for.
    pub fn note(self) -> Option<&'static str> {
        match self {
            Kind::JoinedGsq => Some(
                "square glued to the gasket along the shared bottom-row vertices; \
                 segment from the apex to the middle of the square's right side",
            ),
            Kind::VicsekInterval => Some("interval attached at one Vicsek corner"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Graph,
    Euclidean,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureScheme {
    Counting,
    Degree,
    /// 3^{-n} per incident level-n triangle (gasket); counting elsewhere.
    Fractal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub kind: Kind,
    /// Fractal level, or vertex count for paths / side for grids.
    pub size: u32,
    /// Second size parameter: square side (joined_gsq), interval length (vicsek_interval).
    #[serde(default)]
    pub aux: u32,
    pub metric: MetricChoice,
    pub measure: MeasureScheme,
    #[serde(default = "one")]
    pub subdivide: u32,
}

fn one() -> u32 {
    1
}

impl SpaceSpec {
    pub fn new(kind: Kind, size: u32) -> SpaceSpec {
        SpaceSpec { kind, size, aux: 0, metric: MetricChoice::Graph, measure: MeasureScheme::Counting, subdivide: 1 }
    }
}

/// Raw geometry before metric assembly.
struct Raw {
    pos: Vec<Vec<f64>>,
    edges: Vec<(usize, usize, f64)>,
    /// optional per-vertex mass overriding the measure scheme
    mass: Option<Vec<f64>>,
}

pub fn generate(spec: &SpaceSpec) -> Result<Space> {
    let raw = match spec.kind {
        Kind::Path => raw_path(spec.size as usize)?,
        Kind::Grid => raw_grid(spec.size as usize)?,
        Kind::Gasket => {
            guard(spec.size)?;
            raw_gasket(spec.size)
        }
        Kind::Vicsek => {
            guard(spec.size)?;
            raw_vicsek(spec.size)
        }
        Kind::JoinedGsq => {
            guard(spec.size)?;
            raw_joined(spec.size, spec.aux.max(2) as usize)?
        }
        Kind::VicsekInterval => {
            guard(spec.size)?;
            raw_vicsek_interval(spec.size, spec.aux.max(2) as usize)
        }
    };
    if raw.pos.len() > MAX_POINTS {
        return Err(Error::InvalidArgument(format!(
            "{} points exceed the dense-metric limit {MAX_POINTS}",
            raw.pos.len()
        )));
    }
    let space = assemble(raw, spec.metric, spec.measure)?;
    if spec.subdivide > 1 {
        subdivide(&space, spec.subdivide)
    } else {
        Ok(space)
    }
}

fn guard(level: u32) -> Result<()> {
    if level > MAX_LEVEL {
        return Err(Error::InvalidArgument(format!("level {level} exceeds guard {MAX_LEVEL}")));
    }
    Ok(())
}

fn assemble(raw: Raw, metric: MetricChoice, scheme: MeasureScheme) -> Result<Space> {
    let n = raw.pos.len();
    let ids: Vec<i64> = (0..n as i64).collect();
    let mut deg = vec![0.0; n];
    for &(u, v, c) in &raw.edges {
        deg[u] += c;
        deg[v] += c;
    }
    let m = match (scheme, raw.mass) {
        (MeasureScheme::Counting, _) => vec![1.0; n],
        (MeasureScheme::Degree, _) => deg,
        (MeasureScheme::Fractal, Some(m)) => m,
        (MeasureScheme::Fractal, None) => vec![1.0; n],
    };
    let net = Network::new(n, raw.edges.clone(), m)?;
    let (fm, decl) = match metric {
        MetricChoice::Graph => {
            let lens: Vec<(usize, usize, f64)> = raw.edges.iter().map(|&(u, v, c)| (u, v, 1.0 / c)).collect();
            (FinitePointMetric::graph(ids, Some(raw.pos), &lens)?, MetricKind::Graph)
        }
        MetricChoice::Euclidean => (FinitePointMetric::euclidean(ids, raw.pos)?, MetricKind::Euclidean),
        MetricChoice::Linf => {
            let mut d = vec![0.0; n * n];
            for x in 0..n {
                for y in 0..n {
                    d[x * n + y] = raw.pos[x].iter().zip(&raw.pos[y]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                }
            }
            (FinitePointMetric::new(ids, Some(raw.pos), d)?, MetricKind::Matrix)
        }
    };
    Ok(Space { metric: fm, net, decl })
}

fn raw_path(n: usize) -> Result<Raw> {
    if n < 1 {
        return Err(Error::InvalidArgument("path needs at least one vertex".into()));
    }
    if n == 1 {
        return Err(Error::InvalidArgument("a network needs an edge".into()));
    }
    Ok(Raw {
        pos: (0..n).map(|i| vec![i as f64]).collect(),
        edges: (0..n - 1).map(|i| (i, i + 1, 1.0)).collect(),
        mass: None,
    })
}

fn raw_grid(k: usize) -> Result<Raw> {
    if k < 2 {
        return Err(Error::InvalidArgument("grid side must be at least 2".into()));
    }
    let id = |i: usize, j: usize| i * k + j;
    let mut edges = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if j + 1 < k {
                edges.push((id(i, j), id(i, j + 1), 1.0));
            }
            if i + 1 < k {
                edges.push((id(i, j), id(i + 1, j), 1.0));
            }
        }
    }
    Ok(Raw { pos: (0..k * k).map(|p| vec![(p % k) as f64, (p / k) as f64]).collect(), edges, mass: None })
}

/// Lattice coordinates (a, b) of the level-n gasket, ids sorted by (b, a).
fn gasket_lattice(level: u32) -> (Vec<(i64, i64)>, Vec<(usize, usize)>, Vec<usize>) {
    let s = 1i64 << level;
    let mut tris = vec![(0i64, 0i64)];
    let mut size = s;
    while size > 1 {
        let h = size / 2;
        tris = tris.iter().flat_map(|&(a, b)| [(a, b), (a + h, b), (a, b + h)]).collect();
        size = h;
    }
    let mut verts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for &(a, b) in &tris {
        for v in [(b, a), (b, a + 1), (b + 1, a)] {
            verts.insert(v, 0);
        }
    }
    for (i, v) in verts.values_mut().enumerate() {
        *v = i;
    }
    let lattice: Vec<(i64, i64)> = verts.keys().map(|&(b, a)| (a, b)).collect();
    let mut edges = Vec::new();
    let mut tri_count = vec![0usize; lattice.len()];
    for &(a, b) in &tris {
        let p = verts[&(b, a)];
        let q = verts[&(b, a + 1)];
        let r = verts[&(b + 1, a)];
        edges.extend([(p, q), (q, r), (p, r)]);
        for v in [p, q, r] {
            tri_count[v] += 1;
        }
    }
    (lattice, edges, tri_count)
}

fn raw_gasket(level: u32) -> Raw {
    let (lat, edges, tri) = gasket_lattice(level);
    let s = (1u64 << level) as f64;
    let pos =
        lat.iter().map(|&(a, b)| vec![(a as f64 + b as f64 / 2.0) / s, b as f64 * 3f64.sqrt() / 2.0 / s]).collect();
    let w = 3f64.powi(-(level as i32));
    Raw {
        pos,
        edges: edges.into_iter().map(|(u, v)| (u, v, 1.0)).collect(),
        mass: Some(tri.into_iter().map(|t| t as f64 * w).collect()),
    }
}

/// Indices of the three corners (bottom-left, bottom-right, top) of the level-n gasket.
pub fn gasket_corners(level: u32) -> [usize; 3] {
    let s = 1usize << level;
    let n = 3 * (3usize.pow(level) + 1) / 2;
    [0, s, n - 1]
}

fn raw_vicsek(level: u32) -> Raw {
    // cells in doubled lattice coordinates; each cell is an X joining its
    // four corners through the centre
    let mut cells = vec![(0i64, 0i64)];
    let mut size = 1i64;
    for _ in 0..level {
        let step = 2 * size;
        cells = [(0, 0), (2, 0), (1, 1), (0, 2), (2, 2)]
            .iter()
            .flat_map(|&(dx, dy)| cells.iter().map(move |&(x, y)| (x + dx * step, y + dy * step)))
            .collect();
        size *= 3;
    }
    let mut verts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for &(x, y) in &cells {
        for v in [(y, x), (y, x + 2), (y + 2, x), (y + 2, x + 2), (y + 1, x + 1)] {
            verts.insert(v, 0);
        }
    }
    for (i, v) in verts.values_mut().enumerate() {
        *v = i;
    }
    let mut edges = Vec::new();
    for &(x, y) in &cells {
        let c = verts[&(y + 1, x + 1)];
        for v in [(y, x), (y, x + 2), (y + 2, x), (y + 2, x + 2)] {
            edges.push((c, verts[&v], 1.0));
        }
    }
    let scale = 2.0 * size as f64;
    let pos = verts.keys().map(|&(y, x)| vec![x as f64 / scale, y as f64 / scale]).collect();
    Raw { pos, edges, mass: None }
}

fn raw_vicsek_interval(level: u32, len: usize) -> Raw {
    let mut r = raw_vicsek(level);
    // corner (0,0) is index 0; the interval runs to the left
    let h = 1.0 / (2.0 * 3f64.powi(level as i32)) * 2f64.sqrt();
    let mut prev = 0usize;
    for i in 1..len {
        r.pos.push(vec![-(i as f64) * h, 0.0]);
        let cur = r.pos.len() - 1;
        r.edges.push((prev, cur, 1.0));
        prev = cur;
    }
    r
}

fn raw_joined(level: u32, k: usize) -> Result<Raw> {
    let g = raw_gasket(level);
    let mut pos = g.pos.clone();
    let mut edges = g.edges.clone();
    let ng = pos.len();
    // k×k square grid on [0,1]×[-1,0]; top row glued to gasket bottom row
    let h = 1.0 / (k - 1) as f64;
    let mut sq = vec![usize::MAX; k * k];
    for i in 0..k {
        for j in 0..k {
            let p = vec![j as f64 * h, -(i as f64) * h];
            let glued = if i == 0 {
                (0..ng).find(|&v| pos[v][1].abs() < 1e-12 && (pos[v][0] - p[0]).abs() < 1e-9)
            } else {
                None
            };
            sq[i * k + j] = match glued {
                Some(v) => v,
                None => {
                    pos.push(p);
                    pos.len() - 1
                }
            };
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for &(u, v, _) in &edges {
        seen.insert((u.min(v), u.max(v)));
    }
    for i in 0..k {
        for j in 0..k {
            let mut nb = vec![];
            if j + 1 < k {
                nb.push(sq[i * k + j + 1]);
            }
            if i + 1 < k {
                nb.push(sq[(i + 1) * k + j]);
            }
            for v in nb {
                let u = sq[i * k + j];
                if seen.insert((u.min(v), u.max(v))) {
                    edges.push((u, v, 1.0));
                }
            }
        }
    }
    // segment from the gasket apex A3 to the midpoint A4 of the square's right side
    let apex = ng - 1;
    let a4 = sq[(k / 2) * k + (k - 1)];
    let steps = (1usize << level).max(2);
    let (p0, p1) = (pos[apex].clone(), pos[a4].clone());
    let mut prev = apex;
    for s in 1..steps {
        let t = s as f64 / steps as f64;
        // bow outward so the drawn segment does not overlap the gasket
        pos.push(vec![p0[0] + t * (p1[0] - p0[0]) + 0.5 * (t * (1.0 - t)), p0[1] + t * (p1[1] - p0[1])]);
        let cur = pos.len() - 1;
        edges.push((prev, cur, 1.0));
        prev = cur;
    }
    edges.push((prev, a4, 1.0));
    Ok(Raw { pos, edges, mass: None })
}

/// Replaces every edge of conductance c by a chain of `factor` edges of
/// conductance c·factor. New vertices get measure equal to their share of
/// the edge's resistance length, (1/c)/factor.
pub fn subdivide(space: &Space, factor: u32) -> Result<Space> {
    if factor < 1 {
        return Err(Error::InvalidArgument("factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(space.clone());
    }
    let f = factor as usize;
    let mut ids: Vec<i64> = space.metric.ids().to_vec();
    let mut next_id = ids.iter().copied().max().unwrap() + 1;
    let mut pos: Option<Vec<Vec<f64>>> = space.metric.positions().map(|p| p.to_vec());
    let mut m = space.net.measure().to_vec();
    let mut edges = Vec::new();
    for &(u, v, c) in space.net.edges() {
        let mut prev = u;
        for s in 1..f {
            let id = ids.len();
            ids.push(next_id);
            next_id += 1;
            m.push(1.0 / c / f as f64);
            if let Some(p) = pos.as_mut() {
                let t = s as f64 / f as f64;
                let q: Vec<f64> = p[u].iter().zip(&p[v]).map(|(a, b)| a + t * (b - a)).collect();
                p.push(q);
            }
            edges.push((prev, id, c * f as f64));
            prev = id;
        }
        edges.push((prev, v, c * f as f64));
    }
    if ids.len() > MAX_POINTS {
        return Err(Error::InvalidArgument("subdivision exceeds the dense-metric limit".into()));
    }
    let net = Network::new(ids.len(), edges.clone(), m)?;
    let (metric, decl) = match (space.decl, pos) {
        (MetricKind::Euclidean, Some(p)) => (FinitePointMetric::euclidean(ids, p)?, MetricKind::Euclidean),
        (_, p) => {
            let lens: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v, c)| (u, v, 1.0 / c)).collect();
            (FinitePointMetric::graph(ids, p, &lens)?, MetricKind::Graph)
        }
    };
    Ok(Space { metric, net, decl })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbCertificate {
    pub lambda: f64,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

impl PerturbCertificate {
    pub fn holds(&self) -> bool {
        self.max_ratio <= self.lambda && self.min_ratio >= 1.0 / self.lambda
    }
}

/// Multiplies each conductance by an independent log-uniform draw on
/// [1/λ, λ]; the stream is ChaCha8 seeded by `seed` on stream `stream`.
pub fn perturb(net: &Network, lambda: f64, seed: u64, stream: u64) -> Result<(Network, PerturbCertificate)> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument("lambda must be at least 1".into()));
    }
    if lambda == 1.0 {
        return Ok((net.clone(), PerturbCertificate { lambda, max_ratio: 1.0, min_ratio: 1.0 }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let l = lambda.ln();
    let mut cmax = 0.0f64;
    let mut cmin = f64::INFINITY;
    let mut cs = Vec::with_capacity(net.edges().len());
    for &(_, _, c) in net.edges() {
        let f = rng.gen_range(-l..=l).exp().clamp(1.0 / lambda, lambda);
        let c2 = c * f;
        cmax = cmax.max(c2 / c);
        cmin = cmin.min(c2 / c);
        cs.push(c2);
    }
    Ok((net.with_conductances(&cs)?, PerturbCertificate { lambda, max_ratio: cmax, min_ratio: cmin }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gasket_counts() {
        for n in 0..5u32 {
            let s = generate(&SpaceSpec::new(Kind::Gasket, n)).unwrap();
            assert_eq!(s.net.len(), 3 * (3usize.pow(n) + 1) / 2);
            assert_eq!(s.net.edges().len(), 3usize.pow(n + 1));
        }
    }

    #[test]
    fn gasket_corners_are_corners() {
        let s = generate(&SpaceSpec { metric: MetricChoice::Euclidean, ..SpaceSpec::new(Kind::Gasket, 3) }).unwrap();
        let c = gasket_corners(3);
        for &x in &c {
            assert_eq!(s.net.neighbors(x).len(), 2);
        }
        assert!((s.metric.d(c[0], c[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vicsek_counts() {
        let s = generate(&SpaceSpec::new(Kind::Vicsek, 2)).unwrap();
        assert_eq!(s.net.edges().len(), 4 * 25);
        assert_eq!(s.net.len(), 4 * 25 + 1);
    }

    #[test]
    fn path_and_grid() {
        let p = generate(&SpaceSpec::new(Kind::Path, 5)).unwrap();
        assert_eq!((p.net.len(), p.net.edges().len()), (5, 4));
        let g = generate(&SpaceSpec::new(Kind::Grid, 4)).unwrap();
        assert_eq!(g.net.edges().len(), 24);
    }

    #[test]
    fn joined_space_is_connected() {
        let s = generate(&SpaceSpec { aux: 9, ..SpaceSpec::new(Kind::JoinedGsq, 3) }).unwrap();
        assert!(s.net.len() > 42 + 72);
        let v = generate(&SpaceSpec { aux: 10, ..SpaceSpec::new(Kind::VicsekInterval, 2) }).unwrap();
        assert_eq!(v.net.len(), 101 + 9);
    }

    #[test]
    fn perturb_identity_and_determinism() {
        let s = generate(&SpaceSpec::new(Kind::Gasket, 2)).unwrap();
        let (a, ca) = perturb(&s.net, 1.0, 3, 0).unwrap();
        assert_eq!(a.edges(), s.net.edges());
        assert!(ca.holds());
        let (b, cb) = perturb(&s.net, 2.0, 3, 0).unwrap();
        let (c, _) = perturb(&s.net, 2.0, 3, 0).unwrap();
        assert_eq!(b.edges(), c.edges());
        assert!(cb.holds());
    }
}
