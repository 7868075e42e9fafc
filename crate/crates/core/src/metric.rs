//! Finite metric spaces: balls, doubling, chains, perfectness, distortion.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

const TRIANGLE_TOL: f64 = 1e-9;
const EXHAUSTIVE_LIMIT: usize = 2000;
const SAMPLED_TRIPLES: usize = 1_000_000;

/// A finite point set with a validated metric. Points are addressed by
/// index `0..n`; `ids` carries the external identifiers.
#[derive(Debug, Clone)]
pub struct FinitePointMetric {
    ids: Vec<i64>,
    positions: Option<Vec<Vec<f64>>>,
    dist: Vec<f64>,
    n: usize,
    diam: f64,
    resolution: f64,
}

impl FinitePointMetric {
    /// Builds and validates from a full distance matrix (row-major, n×n).
    pub fn new(ids: Vec<i64>, positions: Option<Vec<Vec<f64>>>, dist: Vec<f64>) -> Result<Self> {
        let m = Self::unchecked(ids, positions, dist)?;
        m.validate()?;
        Ok(m)
    }

    fn unchecked(ids: Vec<i64>, positions: Option<Vec<Vec<f64>>>, dist: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::InvalidMetric("empty point set".into()));
        }
        if dist.len() != n * n {
            return Err(Error::InvalidMetric("distance matrix has wrong size".into()));
        }
        if let Some(p) = &positions {
            if p.len() != n {
                return Err(Error::InvalidMetric("positions length mismatch".into()));
            }
        }
        let mut sorted = ids.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidMetric("duplicate point id".into()));
        }
        let mut diam = 0.0f64;
        let mut resolution = f64::INFINITY;
        for &v in &dist {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidMetric("distances must be finite and nonnegative".into()));
            }
            diam = diam.max(v);
            if v > 0.0 {
                resolution = resolution.min(v);
            }
        }
        if n == 1 {
            resolution = 0.0;
        }
        Ok(FinitePointMetric { ids, positions, dist, n, diam, resolution })
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        for x in 0..n {
            if self.d(x, x) != 0.0 {
                return Err(Error::InvalidMetric(format!("d(x,x) != 0 at {}", self.ids[x])));
            }
            for y in 0..x {
                if self.d(x, y) != self.d(y, x) {
                    return Err(Error::InvalidMetric(format!("asymmetric at ({}, {})", self.ids[x], self.ids[y])));
                }
                if self.d(x, y) <= 0.0 {
                    return Err(Error::InvalidMetric(format!(
                        "zero distance between {} and {}",
                        self.ids[x], self.ids[y]
                    )));
                }
            }
        }
        let bad = |x: usize, y: usize, z: usize| self.d(x, z) > (self.d(x, y) + self.d(y, z)) * (1.0 + TRIANGLE_TOL);
        let witness = if n <= EXHAUSTIVE_LIMIT {
            (0..n).into_par_iter().find_map_first(|x| {
                for y in 0..n {
                    let dxy = self.d(x, y);
                    let row_y = &self.dist[y * n..(y + 1) * n];
                    let row_x = &self.dist[x * n..(x + 1) * n];
                    for z in 0..n {
                        if row_x[z] > (dxy + row_y[z]) * (1.0 + TRIANGLE_TOL) {
                            return Some((x, y, z));
                        }
                    }
                }
                None
            })
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut w = None;
            for _ in 0..SAMPLED_TRIPLES {
                let (x, y, z) = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
                if bad(x, y, z) {
                    w = Some((x, y, z));
                    break;
                }
            }
            w
        };
        if let Some((x, y, z)) = witness {
            return Err(Error::InvalidMetric(format!(
                "triangle inequality fails for ({}, {}, {})",
                self.ids[x], self.ids[y], self.ids[z]
            )));
        }
        Ok(())
    }

    /// Euclidean metric from coordinates.
    pub fn euclidean(ids: Vec<i64>, positions: Vec<Vec<f64>>) -> Result<Self> {
        let n = ids.len();
        let mut dist = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                let s: f64 = positions[x].iter().zip(&positions[y]).map(|(a, b)| (a - b) * (a - b)).sum();
                dist[x * n + y] = s.sqrt();
            }
        }
        Self::new(ids, Some(positions), dist)
    }

    /// Shortest-path metric over edges `(u, v, length)` given by index.
    pub fn graph(ids: Vec<i64>, positions: Option<Vec<Vec<f64>>>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = ids.len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(u, v, l) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidMetric("edge endpoint out of range".into()));
            }
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidMetric("edge lengths must be positive and finite".into()));
            }
            adj[u].push((v, l));
            adj[v].push((u, l));
        }
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(&adj, s)).collect();
        if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidMetric("graph is disconnected".into()));
        }
        let mut dist = rows.concat();
        // the two directions may sum the same path in a different order
        for x in 0..n {
            for y in 0..x {
                let v = dist[x * n + y].min(dist[y * n + x]);
                dist[x * n + y] = v;
                dist[y * n + x] = v;
            }
        }
        Self::new(ids, positions, dist)
    }

    /// Builds a shortest-path metric from a dense symmetric weight matrix
    /// (complete graph), exact chain infimum.
    pub fn chain_metric(ids: Vec<i64>, positions: Option<Vec<Vec<f64>>>, q: &[f64]) -> Result<Self> {
        let n = ids.len();
        let mut d = q.to_vec();
        for k in 0..n {
            let row_k: Vec<f64> = d[k * n..(k + 1) * n].to_vec();
            d.par_chunks_mut(n).for_each(|row| {
                let dik = row[k];
                for j in 0..n {
                    let c = dik + row_k[j];
                    if c < row[j] {
                        row[j] = c;
                    }
                }
            });
        }
        for x in 0..n {
            d[x * n + x] = 0.0;
        }
        // symmetrize exactly
        for x in 0..n {
            for y in 0..x {
                let v = d[x * n + y].min(d[y * n + x]);
                d[x * n + y] = v;
                d[y * n + x] = v;
            }
        }
        Self::new(ids, positions, d)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn ids(&self) -> &[i64] {
        &self.ids
    }

    pub fn positions(&self) -> Option<&[Vec<f64>]> {
        self.positions.as_deref()
    }

    pub fn index_of(&self, id: i64) -> Result<usize> {
        self.ids.iter().position(|&v| v == id).ok_or(Error::UnknownPoint(id.max(0) as usize))
    }

    #[inline]
    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.n + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.dist[x * self.n..(x + 1) * self.n]
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    /// Minimum positive distance (0 for a single point).
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Open ball `{y : d(x,y) < r}`.
    pub fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        self.row(x).iter().enumerate().filter(|(_, &v)| v < r).map(|(i, _)| i).collect()
    }

    /// Closed ball `{y : d(x,y) ≤ r}`.
    pub fn closed_ball(&self, x: usize, r: f64) -> Vec<usize> {
        self.row(x).iter().enumerate().filter(|(_, &v)| v <= r).map(|(i, _)| i).collect()
    }

    /// Ball by external id.
    pub fn ball_by_id(&self, id: i64, r: f64) -> Result<Vec<i64>> {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument("radius must be positive".into()));
        }
        let x = self.index_of(id)?;
        Ok(self.ball(x, r).into_iter().map(|i| self.ids[i]).collect())
    }

    /// Dyadic radii `diam·2^{-j}`, j = 0..⌈log2(diam/resolution)⌉.
    pub fn dyadic_radii(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![];
        }
        let jmax = (self.diam / self.resolution).log2().ceil().max(0.0) as i32;
        (0..=jmax).map(|j| self.diam * 2f64.powi(-j)).collect()
    }

    /// Greedy maximal `sep`-separated subset of `set`, ties by index order.
    pub fn greedy_net(&self, set: &[usize], sep: f64, seed: &[usize]) -> Vec<usize> {
        let mut net: Vec<usize> = seed.to_vec();
        for &p in set {
            if net.contains(&p) {
                continue;
            }
            if net.iter().all(|&q| self.d(p, q) >= sep) {
                net.push(p);
            }
        }
        net
    }

    /// Largest greedy R/2-separated subset of B(x,R) over sampled centres
    /// (every `stride`-th point, where the stride makes ≈`samples` centres)
    /// and all dyadic radii.
    pub fn md_constant(&self, samples: usize) -> usize {
        let stride = (self.n / samples.max(1)).max(1);
        let radii = self.dyadic_radii();
        (0..self.n)
            .step_by(stride)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&x| {
                let mut best = 1;
                for &r in &radii {
                    let b = self.ball(x, r);
                    best = best.max(self.greedy_net(&b, r / 2.0, &[]).len());
                }
                best
            })
            .max()
            .unwrap_or(1)
    }

    /// Shortest chain of εR-steps from x to y through points whose εR-ball
    /// stays in B(x0, KR). `Ok(None)` when no chain exists.
    pub fn rbc_chain(&self, x0: usize, r: f64, x: usize, y: usize, eps: f64, k: f64) -> Result<Option<ChainOfBalls>> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument("epsilon must lie in (0,1)".into()));
        }
        if !(k > 1.0) {
            return Err(Error::InvalidArgument("K must exceed 1".into()));
        }
        let step = eps * r;
        let host = k * r;
        let allowed: Vec<bool> =
            (0..self.n).map(|z| (0..self.n).all(|w| self.d(z, w) >= step || self.d(x0, w) < host)).collect();
        let chain =
            |centers: Vec<usize>| ChainOfBalls { centers, step_radius: step, host_center: x0, host_radius: host };
        if !allowed[x] || !allowed[y] {
            return Ok(None);
        }
        if x == y {
            return Ok(Some(chain(vec![x])));
        }
        let mut prev = vec![usize::MAX; self.n];
        let mut q = VecDeque::new();
        prev[x] = x;
        q.push_back(x);
        while let Some(u) = q.pop_front() {
            if u == y {
                break;
            }
            for v in 0..self.n {
                if allowed[v] && prev[v] == usize::MAX && self.d(u, v) < step {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        if prev[y] == usize::MAX {
            return Ok(None);
        }
        let mut path = vec![y];
        let mut cur = y;
        while cur != x {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Ok(Some(chain(path)))
    }

    /// Scans dyadic (x, r) with nonempty complement and r/C above the
    /// resolution; the annulus B(x,r) ∖ B(x,r/C) must be nonempty.
    pub fn uniform_perfectness(&self, c: f64) -> PerfectnessReport {
        let radii = self.dyadic_radii();
        let mut checked = 0;
        let mut worst = None;
        for x in 0..self.n {
            for &r in &radii {
                if r / c <= self.resolution || self.ball(x, r).len() == self.n {
                    continue;
                }
                checked += 1;
                let annulus = self.row(x).iter().any(|&v| v < r && v >= r / c);
                if !annulus && worst.is_none() {
                    worst = Some((self.ids[x], r));
                }
            }
        }
        PerfectnessReport { holds: worst.is_none(), checked, witness: worst }
    }

    /// Annulus check at an explicit (x, r), used where the dyadic grid is too coarse.
    pub fn annulus_nonempty(&self, x: usize, r: f64, c: f64) -> bool {
        self.row(x).iter().any(|&v| v < r && v >= r / c)
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], s: usize) -> Vec<f64> {
    #[derive(PartialEq)]
    struct St(f64, usize);
    impl Eq for St {}
    impl PartialOrd for St {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for St {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.partial_cmp(&self.0).unwrap().then(o.1.cmp(&self.1))
        }
    }
    let mut d = vec![f64::INFINITY; adj.len()];
    let mut h = BinaryHeap::new();
    d[s] = 0.0;
    h.push(St(0.0, s));
    while let Some(St(du, u)) = h.pop() {
        if du > d[u] {
            continue;
        }
        for &(v, l) in &adj[u] {
            let nd = du + l;
            if nd < d[v] {
                d[v] = nd;
                h.push(St(nd, v));
            }
        }
    }
    d
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainOfBalls {
    pub centers: Vec<usize>,
    pub step_radius: f64,
    pub host_center: usize,
    pub host_radius: f64,
}

impl ChainOfBalls {
    /// Number of steps N.
    pub fn len(&self) -> usize {
        self.centers.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Re-evaluates the type invariants directly.
    pub fn is_valid(&self, space: &FinitePointMetric) -> bool {
        let steps = self.centers.windows(2).all(|w| space.d(w[0], w[1]) < self.step_radius);
        let inside = self
            .centers
            .iter()
            .all(|&z| space.ball(z, self.step_radius).iter().all(|&w| space.d(self.host_center, w) < self.host_radius));
        steps && inside
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerfectnessReport {
    pub holds: bool,
    pub checked: usize,
    pub witness: Option<(i64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistortionEnvelope {
    /// Upper envelope points (t, η̂(t)), t increasing, η̂ nondecreasing.
    pub sample_ratios: Vec<(f64, f64)>,
    pub is_finite: bool,
}

impl DistortionEnvelope {
    /// η̂ evaluated at t (envelope value at the smallest sampled t' ≥ t).
    pub fn eta(&self, t: f64) -> f64 {
        self.sample_ratios.iter().find(|p| p.0 >= t).map(|p| p.1).unwrap_or(f64::INFINITY)
    }
}

/// Samples triples (x, a, b) and records d2(x,a)/d2(x,b) against
/// t = d1(x,a)/d1(x,b). Exhaustive for n ≤ 50. The envelope is flagged
/// infinite when it does not decay at small t (η̂(t) ≥ 1/2 for some t ≤ 1/16).
pub fn qs_distortion(d1: &FinitePointMetric, d2: &FinitePointMetric, budget: usize) -> Result<DistortionEnvelope> {
    if d1.len() != d2.len() {
        return Err(Error::InvalidArgument("metrics live on different point sets".into()));
    }
    let n = d1.len();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut push = |x: usize, a: usize, b: usize| {
        if x == a || x == b {
            return;
        }
        pts.push((d1.d(x, a) / d1.d(x, b), d2.d(x, a) / d2.d(x, b)));
    };
    if n <= 50 {
        for x in 0..n {
            for a in 0..n {
                for b in 0..n {
                    push(x, a, b);
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..budget {
            push(rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n));
        }
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    // monotone upper envelope: η̂(t) = max over samples with t' ≤ t
    let mut env: Vec<(f64, f64)> = Vec::new();
    let mut run = 0.0f64;
    for (t, e) in pts {
        run = run.max(e);
        match env.last_mut() {
            Some(last) if last.0 == t => last.1 = run,
            _ => env.push((t, run)),
        }
    }
    let is_finite = !env.iter().any(|&(t, e)| t <= 1.0 / 16.0 && e >= 0.5);
    Ok(DistortionEnvelope { sample_ratios: env, is_finite })
}
