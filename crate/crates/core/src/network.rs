//! The discrete Dirichlet form E(f,f) = Σ_edges c (Δf)² and its potential theory.

use crate::error::{Error, Result};
use crate::linalg::{Factor, SymMatrix};
use serde::Serialize;
use std::collections::VecDeque;

/// Weighted connected graph with a positive vertex measure.
#[derive(Debug, Clone)]
pub struct Network {
    adj: Vec<Vec<(usize, f64)>>,
    edges: Vec<(usize, usize, f64)>,
    m: Vec<f64>,
}

impl Network {
    /// `edges` are `(u, v, c)` by vertex index; each unordered pair at most once.
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, measure: Vec<f64>) -> Result<Network> {
        if n == 0 {
            return Err(Error::InvalidNetwork("no vertices".into()));
        }
        if measure.len() != n {
            return Err(Error::InvalidNetwork("measure length mismatch".into()));
        }
        if measure.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidNetwork("vertex measure must be positive and finite".into()));
        }
        let mut norm: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for (u, v, c) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidNetwork("edge endpoint out of range".into()));
            }
            if u == v {
                return Err(Error::InvalidNetwork("self loop".into()));
            }
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidNetwork("conductances must be positive and finite".into()));
            }
            norm.push((u.min(v), u.max(v), c));
        }
        norm.sort_by_key(|a| (a.0, a.1));
        if norm.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::InvalidNetwork("duplicate edge".into()));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v, c) in &norm {
            adj[u].push((v, c));
            adj[v].push((u, c));
        }
        for a in &mut adj {
            a.sort_by_key(|p| p.0);
        }
        let net = Network { adj, edges: norm, m: measure };
        if net.components(&(0..n).collect::<Vec<_>>()).len() != 1 {
            return Err(Error::InvalidNetwork("graph is disconnected".into()));
        }
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.adj[x]
    }

    pub fn measure(&self) -> &[f64] {
        &self.m
    }

    /// Total conductance at x.
    pub fn degree(&self, x: usize) -> f64 {
        self.adj[x].iter().map(|p| p.1).sum()
    }

    pub fn energy(&self, f: &[f64]) -> f64 {
        self.edges.iter().map(|&(u, v, c)| c * (f[u] - f[v]) * (f[u] - f[v])).sum()
    }

    /// E(f, g).
    pub fn bilinear(&self, f: &[f64], g: &[f64]) -> f64 {
        self.edges.iter().map(|&(u, v, c)| c * (f[u] - f[v]) * (g[u] - g[v])).sum()
    }

    /// μ_⟨f⟩(x) = Σ_y c_xy (f(x) − f(y))².
    pub fn energy_measure(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|x| self.adj[x].iter().map(|&(y, c)| c * (f[x] - f[y]) * (f[x] - f[y])).sum()).collect()
    }

    /// Same conductances, new vertex measure.
    pub fn time_change(&self, new_measure: Vec<f64>) -> Result<Network> {
        if new_measure.len() != self.len() {
            return Err(Error::InvalidNetwork("measure length mismatch".into()));
        }
        if new_measure.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidNetwork("vertex measure must be positive".into()));
        }
        Ok(Network { adj: self.adj.clone(), edges: self.edges.clone(), m: new_measure })
    }

    /// Replaces conductances edge by edge (same edge order as [`Network::edges`]).
    pub fn with_conductances(&self, c: &[f64]) -> Result<Network> {
        let edges = self.edges.iter().zip(c).map(|(&(u, v, _), &c)| (u, v, c)).collect();
        Network::new(self.len(), edges, self.m.clone())
    }

    /// Vertices outside `set` with a neighbour in `set`, sorted.
    pub fn boundary(&self, set: &[usize]) -> Vec<usize> {
        let mask = self.mask(set);
        let mut out: Vec<usize> =
            set.iter().flat_map(|&x| self.adj[x].iter().map(|p| p.0)).filter(|&y| !mask[y]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `set ∪ boundary(set)`, sorted.
    pub fn closure(&self, set: &[usize]) -> Vec<usize> {
        let mut out = set.to_vec();
        out.extend(self.boundary(set));
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn mask(&self, set: &[usize]) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for &x in set {
            m[x] = true;
        }
        m
    }

    /// Connected components of the induced subgraph on `set`, each sorted.
    pub fn components(&self, set: &[usize]) -> Vec<Vec<usize>> {
        let mask = self.mask(set);
        let mut seen = vec![false; self.len()];
        let mut sorted = set.to_vec();
        sorted.sort_unstable();
        let mut out = Vec::new();
        for &s in &sorted {
            if seen[s] {
                continue;
            }
            let mut comp = vec![];
            let mut q = VecDeque::from([s]);
            seen[s] = true;
            while let Some(u) = q.pop_front() {
                comp.push(u);
                for &(v, _) in &self.adj[u] {
                    if mask[v] && !seen[v] {
                        seen[v] = true;
                        q.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Factorizes K_D for the vertex set `d`.
    pub fn domain(&self, d: &[usize]) -> Result<Domain> {
        Domain::new(self, d)
    }

    /// Dirichlet problem on D with data on D^c (full-length vector; values
    /// inside D are ignored).
    pub fn harmonic_extend(&self, d: &[usize], boundary_values: &[f64]) -> Result<Vec<f64>> {
        if boundary_values.len() != self.len() || boundary_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("boundary values must be finite and cover all vertices".into()));
        }
        let dom = self.domain(d)?;
        Ok(dom.extend(self, boundary_values))
    }

    pub fn green_matrix(&self, d: &[usize]) -> Result<GreenTable> {
        let dom = self.domain(d)?;
        let k = dom.verts.len();
        let mut g = vec![0.0; k * k];
        for j in 0..k {
            let col = dom.green_column(j);
            for i in 0..k {
                g[i * k + j] = col[i];
            }
        }
        Ok(GreenTable { domain: dom.verts.clone(), g })
    }

    pub fn capacity(&self, d: &[usize], a: &[usize]) -> Result<CapacityResult> {
        let dmask = self.mask(d);
        if a.iter().any(|&x| !dmask[x]) {
            return Err(Error::NotContained);
        }
        if d.len() >= self.len() {
            return Err(Error::RecurrentDomain);
        }
        let amask = self.mask(a);
        let free: Vec<usize> = d.iter().copied().filter(|&x| !amask[x]).collect();
        let mut f = vec![0.0; self.len()];
        for &x in a {
            f[x] = 1.0;
        }
        if !free.is_empty() {
            let dom = Domain::new(self, &free)?;
            let rhs: Vec<f64> =
                dom.verts.iter().map(|&x| self.adj[x].iter().filter(|p| amask[p.0]).map(|p| p.1).sum()).collect();
            let sol = dom.solve(&rhs);
            for (i, &x) in dom.verts.iter().enumerate() {
                f[x] = sol[i].clamp(0.0, 1.0);
            }
        }
        let mut sorted_a = a.to_vec();
        sorted_a.sort_unstable();
        sorted_a.dedup();
        let eq: Vec<(usize, f64)> = sorted_a
            .iter()
            .map(|&x| (x, self.adj[x].iter().map(|&(y, c)| c * (f[x] - f[y])).sum::<f64>().max(0.0)))
            .collect();
        let value = self.energy(&f);
        Ok(CapacityResult { value, potential: f, eq_measure: eq })
    }

    /// Cap_D(A) only.
    pub fn cap(&self, d: &[usize], a: &[usize]) -> Result<f64> {
        Ok(self.capacity(d, a)?.value)
    }

    pub fn harmonic_measure(&self, d: &[usize]) -> Result<HarmonicMeasure> {
        let dom = self.domain(d)?;
        let boundary = self.boundary(&dom.verts);
        let k = dom.verts.len();
        let mut omega = vec![0.0; k * boundary.len()];
        for (j, &z) in boundary.iter().enumerate() {
            let col = dom.omega_column(self, z);
            for i in 0..k {
                omega[i * boundary.len() + j] = col[i];
            }
        }
        Ok(HarmonicMeasure { domain: dom.verts, boundary, omega })
    }

    /// u = Σ_y g(x,y) m(y), i.e. K_D u = m|_D; returned in sorted domain order.
    pub fn exit_time(&self, d: &[usize]) -> Result<Vec<f64>> {
        let dom = self.domain(d)?;
        let rhs: Vec<f64> = dom.verts.iter().map(|&x| self.m[x]).collect();
        Ok(dom.solve(&rhs))
    }

    /// P^x(σ_target < τ_B) as a full-length vector.
    pub fn hitting_probability(&self, b: &[usize], target: &[usize]) -> Result<Vec<f64>> {
        let bmask = self.mask(b);
        if target.iter().any(|&x| !bmask[x]) {
            return Err(Error::NotContained);
        }
        if b.len() >= self.len() {
            // recurrent: the walk reaches any nonempty target surely
            let v = if target.is_empty() { 0.0 } else { 1.0 };
            return Ok(vec![v; self.len()]);
        }
        Ok(self.capacity(b, target)?.potential)
    }

    /// Effective resistance between two vertices.
    pub fn effective_resistance(&self, a: usize, b: usize) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let d: Vec<usize> = (0..self.len()).filter(|&x| x != b).collect();
        Ok(1.0 / self.cap(&d, &[a])?)
    }
}

/// A factorized K_D.
#[derive(Debug, Clone)]
pub struct Domain {
    pub verts: Vec<usize>,
    local: Vec<usize>,
    factor: Factor,
}

impl Domain {
    pub fn new(net: &Network, d: &[usize]) -> Result<Domain> {
        let mut verts = d.to_vec();
        verts.sort_unstable();
        verts.dedup();
        if verts.iter().any(|&x| x >= net.len()) {
            return Err(Error::UnknownPoint(*verts.last().unwrap()));
        }
        if verts.len() >= net.len() {
            return Err(Error::RecurrentDomain);
        }
        let mut local = vec![usize::MAX; net.len()];
        for (i, &x) in verts.iter().enumerate() {
            local[x] = i;
        }
        let mut t = Vec::new();
        for (i, &x) in verts.iter().enumerate() {
            t.push((i, i, net.degree(x)));
            for &(y, c) in &net.adj[x] {
                if local[y] != usize::MAX {
                    t.push((i, local[y], -c));
                }
            }
        }
        let factor = Factor::new(SymMatrix::from_triplets(verts.len(), t))?;
        Ok(Domain { verts, local, factor })
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verts.is_empty()
    }

    /// Local index of a vertex, if inside.
    pub fn local(&self, x: usize) -> Option<usize> {
        let i = self.local[x];
        (i != usize::MAX).then_some(i)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.factor.solve(rhs)
    }

    /// g_D(·, verts[j]).
    pub fn green_column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.verts.len()];
        e[j] = 1.0;
        self.solve(&e)
    }

    /// ω(·, z) for a boundary vertex z, local order.
    pub fn omega_column(&self, net: &Network, z: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.verts.len()];
        for &(y, c) in &net.adj[z] {
            if let Some(i) = self.local(y) {
                b[i] = c;
            }
        }
        self.solve(&b)
    }

    pub fn extend(&self, net: &Network, boundary_values: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = self
            .verts
            .iter()
            .map(|&x| {
                net.adj[x].iter().filter(|p| self.local[p.0] == usize::MAX).map(|&(y, c)| c * boundary_values[y]).sum()
            })
            .collect();
        let sol = self.solve(&rhs);
        let mut h = boundary_values.to_vec();
        for (i, &x) in self.verts.iter().enumerate() {
            h[x] = sol[i];
        }
        h
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenTable {
    pub domain: Vec<usize>,
    /// Row-major |D|×|D|.
    pub g: Vec<f64>,
}

impl GreenTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.domain.len() + j]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let k = self.domain.len();
        let mut w = 0.0f64;
        for i in 0..k {
            for j in 0..i {
                w = w.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        w
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityResult {
    pub value: f64,
    pub potential: Vec<f64>,
    pub eq_measure: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarmonicMeasure {
    pub domain: Vec<usize>,
    pub boundary: Vec<usize>,
    /// Row-major |D|×|∂D|.
    pub omega: Vec<f64>,
}

impl HarmonicMeasure {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.omega[i * self.boundary.len() + j]
    }
}
