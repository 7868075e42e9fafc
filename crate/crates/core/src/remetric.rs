//! Scale functions Ψ, regularity, the remetrized d_Ψ, and the PI / CS / cap
//! verifiers.

use crate::error::{Error, Result};
use crate::fit::{slope_fit, SlopeFit};
use crate::harnack::{ehi_scan, TrendWindow};
use crate::linalg::max_generalized_eigen;
use crate::metric::{qs_distortion, DistortionEnvelope, FinitePointMetric};
use crate::network::Network;
use crate::{sample_indices, Ratio};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Which capacity window enters Ψ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiWindow {
    /// Cap_{B(x, r/A⁴)}(B̄(x, r/A⁵)).
    Printed,
    /// Cap_{B(x, r)}(B̄(x, r/A)).
    Unshifted,
}

/// Ψ(x, r) sampled on ascending radii.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleTable {
    pub a: f64,
    pub window: PsiWindow,
    pub radii: Vec<f64>,
    /// values[x][j] = Ψ(x, radii[j]).
    pub values: Vec<Vec<f64>>,
    /// Entries whose capacity domain was the whole space and carry the
    /// previous value instead.
    pub clamped: Vec<Vec<bool>>,
    pub diam: f64,
}

impl ScaleTable {
    /// Tabulates an explicit function on `radii`.
    pub fn from_fn(space: &FinitePointMetric, radii: Vec<f64>, f: impl Fn(usize, f64) -> f64) -> ScaleTable {
        let values: Vec<Vec<f64>> = (0..space.len()).map(|x| radii.iter().map(|&r| f(x, r)).collect()).collect();
        let clamped = vec![vec![false; radii.len()]; space.len()];
        ScaleTable { a: 2.0, window: PsiWindow::Unshifted, radii, values, clamped, diam: space.diam() }
    }

    /// Log-log interpolation, constant beyond the last radius, power
    /// extrapolation below the first.
    pub fn value(&self, x: usize, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let (rs, vs) = (&self.radii, &self.values[x]);
        let m = rs.len();
        if r >= rs[m - 1] {
            return vs[m - 1];
        }
        if m == 1 {
            return vs[0] * (r / rs[0]).powi(2);
        }
        let j = rs.partition_point(|&t| t <= r).max(1).min(m - 1);
        let (r0, r1, v0, v1) = (rs[j - 1], rs[j], vs[j - 1], vs[j]);
        let slope = (v1 / v0).ln() / (r1 / r0).ln();
        v0 * (r / r0).powf(slope)
    }

    /// Slope fit of log Ψ(x,·) vs log r over unclamped entries with r ≤ `r_max`.
    pub fn slope_at(&self, x: usize, r_max: f64) -> Option<SlopeFit> {
        let pts: Vec<(f64, f64)> = self
            .radii
            .iter()
            .zip(&self.values[x])
            .zip(&self.clamped[x])
            .filter(|((&r, _), &c)| !c && r <= r_max * (1.0 + 1e-12))
            .map(|((&r, &v), _)| (r.ln(), v.ln()))
            .collect();
        slope_fit(&pts)
    }
}

/// Ψ as consumed by the verifiers.
#[derive(Debug, Clone)]
pub enum ScaleFn {
    Table(ScaleTable),
    /// Ψ(x, r) = r^β.
    Power(f64),
}

impl ScaleFn {
    pub fn eval(&self, x: usize, r: f64) -> f64 {
        match self {
            ScaleFn::Table(t) => t.value(x, r),
            ScaleFn::Power(b) => r.powf(*b),
        }
    }
}

fn ball_mass(mu: &[f64], space: &FinitePointMetric, x: usize, r: f64) -> f64 {
    space.row(x).iter().zip(mu).filter(|(d, _)| **d < r).map(|(_, m)| m).sum()
}

/// Ψ(x, r) = μ(B(x,r)) / Cap over dyadic radii at which the capacity's
/// inner ball reaches the resolution.
pub fn build_psi(
    net: &Network,
    mu: &[f64],
    space: &FinitePointMetric,
    a: f64,
    window: PsiWindow,
) -> Result<ScaleTable> {
    if !(a > 1.0) {
        return Err(Error::InvalidArgument("A must exceed 1".into()));
    }
    if mu.len() != space.len() || mu.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::InvalidArgument("measure must be positive on every point".into()));
    }
    let (inner_div, outer_div) = match window {
        PsiWindow::Printed => (a.powi(5), a.powi(4)),
        PsiWindow::Unshifted => (a, 1.0),
    };
    let res = space.resolution();
    let mut radii: Vec<f64> =
        space.dyadic_radii().into_iter().filter(|&r| r / inner_div >= res * (1.0 - 1e-12)).collect();
    radii.reverse();
    if radii.is_empty() {
        return Err(Error::Precondition("no radius above the resolution window".into()));
    }
    let n = space.len();
    let rows: Vec<(Vec<f64>, Vec<bool>)> = (0..n)
        .into_par_iter()
        .map(|x| -> Result<(Vec<f64>, Vec<bool>)> {
            let mut vals = Vec::with_capacity(radii.len());
            let mut cl = Vec::with_capacity(radii.len());
            for &r in &radii {
                let dom = space.ball(x, r / outer_div);
                if dom.len() == n {
                    let prev = vals.last().copied().unwrap_or(f64::INFINITY);
                    vals.push(prev);
                    cl.push(true);
                    continue;
                }
                let inner: Vec<usize> = space
                    .closed_ball(x, r / inner_div)
                    .into_iter()
                    .filter(|&y| space.d(x, y) < r / outer_div)
                    .collect();
                let cap = net.cap(&dom, &inner)?;
                vals.push(ball_mass(mu, space, x, r) / cap);
                cl.push(false);
            }
            Ok((vals, cl))
        })
        .collect::<Result<_>>()?;
    let (values, clamped) = rows.into_iter().unzip();
    Ok(ScaleTable { a, window, radii, values, clamped, diam: space.diam() })
}

#[derive(Debug, Clone, Serialize)]
pub struct Regularity {
    pub c1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Largest C1 accepted as "finite" by the regularity check.
pub const REGULARITY_MAX: f64 = 100.0;

/// Exponents from the extreme per-point slopes between consecutive radii,
/// then the smallest C1 making both sides of the regularity inequality hold
/// on every sampled (x, y, r ≥ s).
pub fn verify_regular_scale(psi: &ScaleTable, space: &FinitePointMetric, pairs: usize) -> Regularity {
    let n = space.len();
    let valid = |x: usize| -> Vec<(f64, f64)> {
        psi.radii
            .iter()
            .zip(&psi.values[x])
            .zip(&psi.clamped[x])
            .filter(|(_, &c)| !c)
            .map(|((&r, &v), _)| (r, v))
            .filter(|p| p.1.is_finite() && p.1 > 0.0)
            .collect()
    };
    let (mut b1, mut b2) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in 0..n {
        let v = valid(x);
        for w in v.windows(2) {
            let k = (w[1].1 / w[0].1).ln() / (w[1].0 / w[0].0).ln();
            b1 = b1.min(k);
            b2 = b2.max(k);
        }
    }
    if !b1.is_finite() {
        return Regularity { c1: f64::INFINITY, beta1: 0.0, beta2: 0.0, samples: 0, pass: false };
    }
    let mut xy: Vec<(usize, usize)> = vec![];
    if n * n <= pairs.max(1) {
        for x in 0..n {
            for y in 0..n {
                xy.push((x, y));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        xy.extend((0..n).map(|x| (x, x)));
        for _ in 0..pairs {
            xy.push((rng.gen_range(0..n), rng.gen_range(0..n)));
        }
    }
    let tables: Vec<Vec<(f64, f64)>> = (0..n).map(valid).collect();
    let (c, count) = xy
        .par_iter()
        .map(|&(x, y)| {
            let rr = space.d(x, y);
            let mut c = 0.0f64;
            let mut count = 0usize;
            for &(r, px) in &tables[x] {
                for &(s, py) in &tables[y] {
                    if s > r {
                        continue;
                    }
                    let m = rr.max(r);
                    let (u, v) = ((r / m).ln(), (m / s).ln());
                    let l = (px / py).ln();
                    c = c.max(-l + b2 * u + b1 * v).max(l - b1 * u - b2 * v);
                    count += 1;
                }
            }
            (c, count)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    let c1 = c.exp();
    Regularity { c1, beta1: b1, beta2: b2, samples: count, pass: c1 <= REGULARITY_MAX && b1 > 0.0 }
}

/// Sandwich constants above this count as failure of a β0 candidate.
pub const SANDWICH_MAX: f64 = 10.0;

#[derive(Debug, Clone, Serialize)]
pub struct RemetricResult {
    #[serde(skip)]
    pub d_psi: FinitePointMetric,
    pub beta: f64,
    pub sandwich_constant: f64,
    /// (β0 tried, sandwich constant).
    pub tried: Vec<(f64, f64)>,
    /// Worst two-sided ratio Ψ(x,r)/s^β over annulus-matched balls.
    pub ball_constant: f64,
    pub distortion: DistortionEnvelope,
}

fn sandwich(psi: &ScaleFn, space: &FinitePointMetric, dpsi: &FinitePointMetric, beta: f64) -> f64 {
    let n = space.len();
    (0..n)
        .into_par_iter()
        .map(|x| {
            let mut c = 1.0f64;
            for y in 0..n {
                if y != x {
                    let p = psi.eval(x, space.d(x, y));
                    let q = dpsi.d(x, y).powf(beta);
                    c = c.max(p / q).max(q / p);
                }
            }
            c
        })
        .reduce(|| 1.0, f64::max)
}

/// Chain metrization of max(Ψ(x,d), Ψ(y,d))^{1/β0} over β0 = β2·1.25^k ≤ 8β2.
pub fn build_dpsi(
    psi: &ScaleFn,
    beta2: f64,
    space: &FinitePointMetric,
    distortion_budget: usize,
) -> Result<RemetricResult> {
    if !(beta2 > 0.0) {
        return Err(Error::InvalidArgument("β2 must be positive".into()));
    }
    let n = space.len();
    let mut tried = vec![];
    let mut k = 0;
    loop {
        let b0 = beta2 * 1.25f64.powi(k);
        if b0 > 8.0 * beta2 * (1.0 + 1e-12) {
            break;
        }
        k += 1;
        let mut q = vec![0.0; n * n];
        q.par_chunks_mut(n).enumerate().for_each(|(x, row)| {
            for y in 0..n {
                if y != x {
                    let d = space.d(x, y);
                    row[y] = psi.eval(x, d).max(psi.eval(y, d)).powf(1.0 / b0);
                }
            }
        });
        let dpsi =
            match FinitePointMetric::chain_metric(space.ids().to_vec(), space.positions().map(|p| p.to_vec()), &q) {
                Ok(m) => m,
                Err(_) => {
                    tried.push((b0, f64::INFINITY));
                    continue;
                }
            };
        let c = sandwich(psi, space, &dpsi, b0);
        tried.push((b0, c));
        if c <= SANDWICH_MAX {
            let ball_constant = ball_comparison(psi, space, &dpsi, b0);
            let distortion = qs_distortion(space, &dpsi, distortion_budget)?;
            return Ok(RemetricResult {
                d_psi: dpsi,
                beta: b0,
                sandwich_constant: c,
                tried,
                ball_constant,
                distortion,
            });
        }
    }
    Err(Error::Precondition(format!("no β0 on the grid gives a finite sandwich; tried {tried:?}")))
}

/// s(x,r) = largest s with B_Ψ(x,s) ⊆ B(x,r); returns max of Ψ(x,r)/s^β and its inverse.
fn ball_comparison(psi: &ScaleFn, space: &FinitePointMetric, dpsi: &FinitePointMetric, beta: f64) -> f64 {
    let radii = space.dyadic_radii();
    (0..space.len())
        .into_par_iter()
        .map(|x| {
            let mut c = 1.0f64;
            for &r in &radii {
                let s = (0..space.len())
                    .filter(|&y| space.d(x, y) >= r)
                    .map(|y| dpsi.d(x, y))
                    .fold(f64::INFINITY, f64::min);
                if s.is_finite() && s > 0.0 {
                    let ratio = psi.eval(x, r) / s.powf(beta);
                    c = c.max(ratio).max(1.0 / ratio);
                }
            }
            c
        })
        .reduce(|| 1.0, f64::max)
}

/// Restricts quadratic forms to the complement of constants on k variables.
fn drop_constants(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    // basis e_i − e_{k−1}
    let mut p = DMatrix::zeros(k, k - 1);
    for i in 0..k - 1 {
        p[(i, i)] = 1.0;
        p[(k - 1, i)] = -1.0;
    }
    p.transpose() * m * p
}

/// Schur complement of a dense symmetric matrix onto the first `k` indices.
fn schur(full: &DMatrix<f64>, k: usize) -> Option<DMatrix<f64>> {
    let n = full.nrows();
    if n == k {
        return Some(full.clone());
    }
    let a = full.view((0, 0), (k, k));
    let b = full.view((0, k), (k, n - k));
    let d = full.view((k, k), (n - k, n - k)).into_owned();
    let chol = d.cholesky()?;
    let x = chol.solve(&b.transpose());
    Some(a - b * x)
}

/// Largest dimension handled by the dense eigen solver.
pub const DENSE_LIMIT: usize = 4000;

/// Optimal C in Σ_B m(f − f̄)² ≤ C·μ_⟨f⟩(B1) (B ⊆ B1).
pub fn poincare_ratio(net: &Network, mu: &[f64], b: &[usize], b1: &[usize]) -> Result<Ratio> {
    if b.len() <= 1 {
        return Ok(Ratio::Finite(0.0));
    }
    let bmask = net.mask(b);
    let b1mask = net.mask(b1);
    // variables: B first, then the vertices of closure(B1) reachable from B
    // through energy edges (edges with an endpoint in B1, weighted per endpoint)
    let k = b.len();
    let mut order: Vec<usize> = b.to_vec();
    {
        let mut seen = bmask.clone();
        let mut stack: Vec<usize> = b.to_vec();
        while let Some(x) = stack.pop() {
            for &(y, _) in net.neighbors(x) {
                if !seen[y] && (b1mask[x] || b1mask[y]) {
                    seen[y] = true;
                    order.push(y);
                    stack.push(y);
                }
            }
        }
    }
    if order.len() > DENSE_LIMIT {
        return Err(Error::Precondition(format!("ball of {} vertices exceeds the dense limit", order.len())));
    }
    let mut local = vec![usize::MAX; net.len()];
    for (i, &x) in order.iter().enumerate() {
        local[x] = i;
    }
    let dim = order.len();
    let mut q = DMatrix::zeros(dim, dim);
    for &(u, v, c) in net.edges() {
        let w = c * (b1mask[u] as u8 + b1mask[v] as u8) as f64;
        if w == 0.0 || local[u] == usize::MAX || local[v] == usize::MAX {
            continue;
        }
        let (i, j) = (local[u], local[v]);
        q[(i, i)] += w;
        q[(j, j)] += w;
        q[(i, j)] -= w;
        q[(j, i)] -= w;
    }
    let qs = match schur(&q, k) {
        Some(s) => s,
        None => return Ok(Ratio::Infinite),
    };
    let total: f64 = b.iter().map(|&x| mu[x]).sum();
    let mut m = DMatrix::zeros(k, k);
    for (i, &x) in b.iter().enumerate() {
        m[(i, i)] += mu[x];
        for (j, &y) in b.iter().enumerate() {
            m[(i, j)] -= mu[x] * mu[y] / total;
        }
    }
    let (mr, qr) = (drop_constants(&m), drop_constants(&qs));
    Ok(match max_generalized_eigen(&mr, &qr) {
        Some(l) => Ratio::from_f64(l.max(0.0)),
        None => Ratio::Infinite,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BallEntry {
    pub center: i64,
    pub radius: f64,
    pub raw: Ratio,
    pub normalized: Ratio,
}

#[derive(Debug, Clone, Serialize)]
pub struct IneqReport {
    pub a1: f64,
    pub a2: f64,
    pub balls: Vec<BallEntry>,
    /// PI: max normalized; cap: max(ratio, 1/ratio).
    pub constant: Ratio,
}

fn ball_jobs(space: &FinitePointMetric, a2: f64, centres: Option<usize>) -> Vec<(usize, f64)> {
    let res = space.resolution();
    let radii: Vec<f64> =
        space.dyadic_radii().into_iter().filter(|&r| r < space.diam() / a2 && r >= res * (1.0 - 1e-12)).collect();
    sample_indices(space.len(), centres).into_iter().flat_map(|x| radii.iter().map(move |&r| (x, r))).collect()
}

/// PI(Ψ): per ball the optimal Poincaré constant divided by Ψ(x,R), for R < diam/A2.
pub fn check_pi(
    net: &Network,
    mu: &[f64],
    space: &FinitePointMetric,
    psi: &ScaleFn,
    a1: f64,
    a2: f64,
    centres: Option<usize>,
) -> Result<IneqReport> {
    let mut balls: Vec<BallEntry> = ball_jobs(space, a2, centres)
        .par_iter()
        .map(|&(x, r)| -> Result<BallEntry> {
            let raw = poincare_ratio(net, mu, &space.ball(x, r), &space.ball(x, a1 * r))?;
            let normalized = Ratio::from_f64(raw.value() / psi.eval(x, r));
            Ok(BallEntry { center: space.ids()[x], radius: r, raw, normalized })
        })
        .collect::<Result<_>>()?;
    balls.retain(|b| b.raw != Ratio::Finite(0.0) || b.normalized.is_finite());
    let constant = balls.iter().fold(Ratio::Finite(0.0), |a, b| a.max(b.normalized));
    Ok(IneqReport { a1, a2, balls, constant })
}

/// cap(Ψ): per ball Cap_{B(x,A1R)}(B̄(x,R)) · Ψ(x,R) / μ(B(x,R)).
pub fn check_cap_psi(
    net: &Network,
    mu: &[f64],
    space: &FinitePointMetric,
    psi: &ScaleFn,
    a1: f64,
    a2: f64,
    centres: Option<usize>,
) -> Result<IneqReport> {
    let n = space.len();
    let balls: Vec<Option<BallEntry>> = ball_jobs(space, a2, centres)
        .par_iter()
        .map(|&(x, r)| -> Result<Option<BallEntry>> {
            let dom = space.ball(x, a1 * r);
            if dom.len() == n {
                return Ok(None);
            }
            let inner: Vec<usize> = space.closed_ball(x, r).into_iter().filter(|&y| space.d(x, y) < a1 * r).collect();
            let cap = net.cap(&dom, &inner)?;
            let raw = Ratio::from_f64(cap);
            let normalized = Ratio::from_f64(cap * psi.eval(x, r) / ball_mass(mu, space, x, r));
            Ok(Some(BallEntry { center: space.ids()[x], radius: r, raw, normalized }))
        })
        .collect::<Result<_>>()?;
    let balls: Vec<BallEntry> = balls.into_iter().flatten().collect();
    let constant = balls.iter().fold(Ratio::Finite(1.0), |a, b| {
        let v = b.normalized.value();
        a.max(Ratio::from_f64(v.max(1.0 / v)))
    });
    Ok(IneqReport { a1, a2, balls, constant })
}

#[derive(Debug, Clone, Serialize)]
pub struct CsBall {
    pub center: i64,
    pub radius: f64,
    /// (C1, C2) frontier with C2 already multiplied by Ψ(x,R).
    pub frontier: Vec<(f64, Ratio)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CsReport {
    pub a1: f64,
    pub balls: Vec<CsBall>,
    pub skipped_empty_annulus: usize,
    /// Per C1, the max C2 over balls.
    pub frontier: Vec<(f64, Ratio)>,
}

pub const CS_GRID: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Optimal C2(C1) for the equilibrium-potential cutoff of B1 = B(x,R) in B2 = B(x,A1R).
pub fn cs_frontier(
    net: &Network,
    mu: &[f64],
    space: &FinitePointMetric,
    psi_val: f64,
    x: usize,
    r: f64,
    a1: f64,
) -> Result<Option<Vec<(f64, Ratio)>>> {
    let n = space.len();
    let b1 = space.ball(x, r);
    let b2 = space.ball(x, a1 * r);
    if b2.len() == n {
        // φ ≡ 1: left side vanishes
        return Ok(Some(CS_GRID.iter().map(|&c| (c, Ratio::Finite(0.0))).collect()));
    }
    let b1m = net.mask(&b1);
    let ann: Vec<usize> = b2.iter().copied().filter(|&y| !b1m[y]).collect();
    if ann.is_empty() {
        return Ok(None);
    }
    let phi = net.capacity(&b2, &b1)?.potential;
    let mphi = net.energy_measure(&phi);
    let annm = net.mask(&ann);
    // variables: annulus first, then every other vertex where either form is nonzero
    let mut order = ann.clone();
    let mut seen = annm.clone();
    for &y in &net.closure(&ann) {
        if !seen[y] {
            seen[y] = true;
            order.push(y);
        }
    }
    for y in 0..n {
        if !seen[y] && mphi[y] > 0.0 {
            seen[y] = true;
            order.push(y);
        }
    }
    if order.len() > DENSE_LIMIT {
        return Err(Error::Precondition("annulus exceeds the dense limit".into()));
    }
    let mut local = vec![usize::MAX; n];
    for (i, &y) in order.iter().enumerate() {
        local[y] = i;
    }
    let dim = order.len();
    let k = ann.len();
    let mut energy = DMatrix::zeros(dim, dim);
    for &(u, v, c) in net.edges() {
        let w = c * (annm[u] as u8 + annm[v] as u8) as f64;
        if w == 0.0 {
            continue;
        }
        let (i, j) = (local[u], local[v]);
        energy[(i, i)] += w;
        energy[(j, j)] += w;
        energy[(i, j)] -= w;
        energy[(j, i)] -= w;
    }
    let mut mass = DMatrix::zeros(k, k);
    for (i, &y) in ann.iter().enumerate() {
        mass[(i, i)] = mu[y];
    }
    let mut out = vec![];
    for &c1 in &CS_GRID {
        let mut nmat = -&energy * c1;
        for (i, &y) in order.iter().enumerate() {
            nmat[(i, i)] += mphi[y];
        }
        let c2 = if dim == k {
            max_generalized_eigen(&nmat, &mass)
        } else {
            // maximize over the free variables: needs a negative definite block
            let neg = -nmat.view((k, k), (dim - k, dim - k)).into_owned();
            match neg.cholesky() {
                None => None,
                Some(ch) => {
                    let b = nmat.view((0, k), (k, dim - k)).into_owned();
                    let s = nmat.view((0, 0), (k, k)).into_owned() + &b * ch.solve(&b.transpose());
                    max_generalized_eigen(&s, &mass)
                }
            }
        };
        out.push((c1, c2.map_or(Ratio::Infinite, |l| Ratio::from_f64(l.max(0.0) * psi_val))));
    }
    Ok(Some(out))
}

pub fn check_cs(
    net: &Network,
    mu: &[f64],
    space: &FinitePointMetric,
    psi: &ScaleFn,
    a1: f64,
    a2: f64,
    centres: Option<usize>,
) -> Result<CsReport> {
    let per: Vec<(usize, f64, Option<Vec<(f64, Ratio)>>)> = ball_jobs(space, a2, centres)
        .par_iter()
        .map(|&(x, r)| Ok((x, r, cs_frontier(net, mu, space, psi.eval(x, r), x, r, a1)?)))
        .collect::<Result<_>>()?;
    let mut balls = vec![];
    let mut skipped = 0;
    for (x, r, f) in per {
        match f {
            None => skipped += 1,
            Some(frontier) => balls.push(CsBall { center: space.ids()[x], radius: r, frontier }),
        }
    }
    let frontier = CS_GRID
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, balls.iter().fold(Ratio::Finite(0.0), |a, b| a.max(b.frontier[i].1))))
        .collect();
    Ok(CsReport { a1, balls, skipped_empty_annulus: skipped, frontier })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantSet {
    pub pi: Ratio,
    /// CS C2 at C1 = 1.
    pub cs: Ratio,
    pub cap: Ratio,
    pub ehi: Ratio,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossReport {
    pub in_d: ConstantSet,
    pub in_d_psi: ConstantSet,
    pub beta: f64,
    /// Agreement of finiteness per property, and all finite.
    pub pi_agrees: bool,
    pub cs_agrees: bool,
    pub cap_agrees: bool,
    pub ehi_finite: bool,
    pub pass: bool,
}

/// Constants above this are treated as unbounded at desk scale.
pub const FINITE_MAX: f64 = 1e4;

fn bounded(r: Ratio) -> bool {
    r.is_finite() && r.value() <= FINITE_MAX
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossConfig {
    pub a1: f64,
    pub a2: f64,
    pub delta: f64,
    pub centres: Option<usize>,
}

impl Default for CrossConfig {
    fn default() -> Self {
        CrossConfig { a1: 2.0, a2: 4.0, delta: 0.5, centres: Some(16) }
    }
}

/// PI, CS, cap in (d, Ψ) and in (d_Ψ, r^β), plus the EHI scan in both metrics.
pub fn cross_metric_check(
    net: &Network,
    mu: &[f64],
    space: &FinitePointMetric,
    psi: &ScaleFn,
    rem: &RemetricResult,
    cfg: &CrossConfig,
) -> Result<CrossReport> {
    let set = |m: &FinitePointMetric, p: &ScaleFn| -> Result<ConstantSet> {
        Ok(ConstantSet {
            pi: check_pi(net, mu, m, p, cfg.a1, cfg.a2, cfg.centres)?.constant,
            cs: check_cs(net, mu, m, p, cfg.a1, cfg.a2, cfg.centres)?.frontier[0].1,
            cap: check_cap_psi(net, mu, m, p, cfg.a1, cfg.a2, cfg.centres)?.constant,
            ehi: ehi_scan(net, m, cfg.delta, cfg.centres, TrendWindow::default())?.global_max,
        })
    };
    let in_d = set(space, psi)?;
    let in_d_psi = set(&rem.d_psi, &ScaleFn::Power(rem.beta))?;
    let pi_agrees = bounded(in_d.pi) == bounded(in_d_psi.pi);
    let cs_agrees = bounded(in_d.cs) == bounded(in_d_psi.cs);
    let cap_agrees = bounded(in_d.cap) == bounded(in_d_psi.cap);
    let ehi_finite = bounded(in_d.ehi) && bounded(in_d_psi.ehi);
    let all = [in_d.pi, in_d.cap, in_d_psi.pi, in_d_psi.cap].iter().all(|&r| bounded(r));
    let pass = pi_agrees && cs_agrees && cap_agrees && ehi_finite && all;
    Ok(CrossReport { in_d, in_d_psi, beta: rem.beta, pi_agrees, cs_agrees, cap_agrees, ehi_finite, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> (Network, FinitePointMetric) {
        let net = Network::new(n, (0..n - 1).map(|i| (i, i + 1, 1.0)).collect(), vec![1.0; n]).unwrap();
        let m =
            FinitePointMetric::euclidean((0..n as i64).collect(), (0..n).map(|i| vec![i as f64]).collect()).unwrap();
        (net, m)
    }

    #[test]
    fn two_vertex_poincare() {
        let (net, _) = path(2);
        let r = poincare_ratio(&net, &[1.0, 1.0], &[0, 1], &[0, 1]).unwrap();
        assert!((r.value() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn power_law_remetric_is_identity() {
        let (_, m) = path(12);
        let rem = build_dpsi(&ScaleFn::Power(2.0), 2.0, &m, 1000).unwrap();
        assert!((rem.sandwich_constant - 1.0).abs() < 1e-9);
        assert_eq!(rem.beta, 2.0);
        for x in 0..12 {
            for y in 0..12 {
                assert!((rem.d_psi.d(x, y) - m.d(x, y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_power_table_is_regular() {
        let (_, m) = path(16);
        let t = ScaleTable::from_fn(&m, vec![1.0, 2.0, 4.0, 8.0], |_, r| r * r);
        let reg = verify_regular_scale(&t, &m, 10_000);
        assert!((reg.c1 - 1.0).abs() < 1e-9 && (reg.beta1 - 2.0).abs() < 1e-12 && (reg.beta2 - 2.0).abs() < 1e-12);
        assert!((t.value(0, 3.0) - 9.0).abs() < 1e-9);
    }
}
