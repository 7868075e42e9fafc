//! Harnack constants on balls, EHI scans, and the Green / capacity lemma
//! verifiers. Balls are open, B(x,r) = {d < r}; inner sets of condensers and
//! Harnack comparisons are closed balls {d ≤ r}; boundaries are exterior
//! vertex boundaries.

use crate::dyadic::DyadicDecomposition;
use crate::error::{Error, Result};
use crate::fit::{slope_fit, SlopeFit};
use crate::metric::FinitePointMetric;
use crate::network::Network;
use crate::remetric::{check_cap_psi, check_pi, ScaleFn};
use crate::spaces::{perturb, PerturbCertificate};
use crate::{sample_indices, Ratio};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

const UNCOND_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct BallRecord {
    pub center: i64,
    pub radius: f64,
    pub delta: f64,
    pub c_h: Ratio,
    pub inner: usize,
    pub boundary: usize,
}

/// Exact Harnack constant of B(x,R) on the closed inner ball of radius δR:
/// max over boundary vertices z of max_u ω(u,z) / min_v ω(v,z).
pub fn harnack_constant(net: &Network, space: &FinitePointMetric, x: usize, r: f64, delta: f64) -> Result<BallRecord> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument("delta must lie in (0,1)".into()));
    }
    let ball = space.ball(x, r);
    let inner = space.closed_ball(x, delta * r);
    let rec = |c_h, b| BallRecord { center: space.ids()[x], radius: r, delta, c_h, inner: inner.len(), boundary: b };
    if ball.len() == space.len() {
        return Ok(rec(Ratio::Finite(1.0), 0));
    }
    let dom = net.domain(&ball)?;
    let boundary = net.boundary(&ball);
    // structural reachability: component of each ball vertex touching z
    let comps = net.components(&ball);
    let mut comp_of = vec![usize::MAX; net.len()];
    for (ci, c) in comps.iter().enumerate() {
        for &v in c {
            comp_of[v] = ci;
        }
    }
    let touches = |ci: usize, z: usize| net.neighbors(z).iter().any(|&(y, _)| comp_of[y] == ci);
    let inner_local: Vec<usize> = inner.iter().map(|&u| dom.local(u).unwrap()).collect();
    // ω restricted to inner rows: |inner| × |boundary|
    let mut omega = vec![0.0; inner.len() * boundary.len()];
    if boundary.len() <= inner.len() {
        for (j, &z) in boundary.iter().enumerate() {
            let col = dom.omega_column(net, z);
            for (i, &li) in inner_local.iter().enumerate() {
                omega[i * boundary.len() + j] = col[li];
            }
        }
    } else {
        for (i, &li) in inner_local.iter().enumerate() {
            let g = dom.green_column(li);
            for (j, &z) in boundary.iter().enumerate() {
                let mut s = 0.0;
                for &(y, c) in net.neighbors(z) {
                    if let Some(ly) = dom.local(y) {
                        s += g[ly] * c;
                    }
                }
                omega[i * boundary.len() + j] = s;
            }
        }
    }
    let mut ch = 1.0f64;
    for (j, &z) in boundary.iter().enumerate() {
        let reach: Vec<bool> = inner.iter().map(|&u| touches(comp_of[u], z)).collect();
        if !reach.iter().any(|&b| b) {
            continue;
        }
        if reach.iter().any(|&b| !b) {
            return Ok(rec(Ratio::Infinite, boundary.len()));
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..inner.len() {
            let w = omega[i * boundary.len() + j];
            lo = lo.min(w);
            hi = hi.max(w);
        }
        ch = ch.max(hi / lo);
    }
    Ok(rec(Ratio::from_f64(ch), boundary.len()))
}

/// Window of radii used for the scale-trend statistic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrendWindow {
    /// Smallest admissible δR as a multiple of the resolution.
    pub min_inner_over_resolution: f64,
    /// Largest admissible R as a fraction of the diameter.
    pub max_radius_over_diam: f64,
}

impl Default for TrendWindow {
    fn default() -> Self {
        TrendWindow { min_inner_over_resolution: 2.0, max_radius_over_diam: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleMax {
    pub radius: f64,
    pub c_h: Ratio,
    pub in_window: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    pub delta: f64,
    pub records: Vec<BallRecord>,
    pub global_max: Ratio,
    pub per_scale: Vec<ScaleMax>,
    /// Slope of log per-scale max against log R inside the window.
    pub trend: Option<f64>,
    pub trend_scales: usize,
    pub window: TrendWindow,
}

/// Harnack constants over sampled centres (≈`centres`, all if `None`) and dyadic radii.
pub fn ehi_scan(
    net: &Network,
    space: &FinitePointMetric,
    delta: f64,
    centres: Option<usize>,
    window: TrendWindow,
) -> Result<HarnackReport> {
    let n = space.len();
    let xs = sample_indices(n, centres);
    let radii = space.dyadic_radii();
    let jobs: Vec<(usize, f64)> = xs.iter().flat_map(|&x| radii.iter().map(move |&r| (x, r))).collect();
    let records: Vec<BallRecord> = jobs
        .par_iter()
        .filter(|&&(x, r)| space.ball(x, r).len() < n)
        .map(|&(x, r)| harnack_constant(net, space, x, r, delta))
        .collect::<Result<_>>()?;
    let mut per_scale = vec![];
    for &r in &radii {
        let vals: Vec<Ratio> = records.iter().filter(|b| b.radius == r).map(|b| b.c_h).collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().fold(Ratio::Finite(1.0), |a, &b| a.max(b));
        let in_window = delta * r >= window.min_inner_over_resolution * space.resolution() * (1.0 - 1e-12)
            && r <= window.max_radius_over_diam * space.diam() * (1.0 + 1e-12);
        per_scale.push(ScaleMax { radius: r, c_h: m, in_window });
    }
    let global_max = records.iter().fold(Ratio::Finite(1.0), |a, b| a.max(b.c_h));
    let win: Vec<(f64, Ratio)> = per_scale.iter().filter(|s| s.in_window).map(|s| (s.radius, s.c_h)).collect();
    let trend = if win.iter().all(|s| s.1.is_finite()) {
        let pts: Vec<(f64, f64)> = win.iter().map(|s| (s.0.ln(), s.1.value().ln())).collect();
        if pts.len() >= 2 {
            crate::fit::ls_slope(&pts)
        } else {
            Some(0.0)
        }
    } else {
        None
    };
    Ok(HarnackReport { delta, records, global_max, per_scale, trend, trend_scales: win.len(), window })
}

#[derive(Debug, Clone, Serialize)]
pub struct HgReport {
    pub center: i64,
    pub radius: f64,
    pub k_g: f64,
    pub c_g: Ratio,
}

/// sup_{D∖B(x0,R)} g_D(x0,·) / inf_{(B ∪ ∂B)∖{x0}} g_D(x0,·).
pub fn check_hg(
    net: &Network,
    space: &FinitePointMetric,
    x0: usize,
    r: f64,
    d: &[usize],
    k_g: f64,
) -> Result<HgReport> {
    let dmask = net.mask(d);
    if space.ball(x0, k_g * r).iter().any(|&y| !dmask[y]) {
        return Err(Error::Precondition("B(x0, K_G R) is not contained in D".into()));
    }
    let dom = net.domain(d)?;
    let g = dom.green_column(dom.local(x0).unwrap());
    let gv = |y: usize| dom.local(y).map(|l| g[l]).unwrap_or(0.0);
    let ball = space.ball(x0, r);
    let bmask = net.mask(&ball);
    let sup = dom.verts.iter().filter(|&&y| !bmask[y]).map(|&y| gv(y)).fold(0.0, f64::max);
    let inf = net.closure(&ball).into_iter().filter(|&y| y != x0).map(gv).fold(f64::INFINITY, f64::min);
    let c_g = if inf == f64::INFINITY {
        Ratio::Finite(0.0)
    } else if inf == 0.0 {
        if sup > 0.0 {
            Ratio::Infinite
        } else {
            Ratio::Finite(0.0)
        }
    } else {
        Ratio::from_f64(sup / inf)
    };
    Ok(HgReport { center: space.ids()[x0], radius: r, k_g, c_g })
}

/// Maximum principle for g_D(x0,·) with x0 ∈ U and U ∪ ∂U ⊆ D: the max over
/// D∖U and the min over (U ∪ ∂U)∖{x0} are both attained on ∂U.
/// Returns (max holds, min holds).
pub fn check_max_principle(net: &Network, d: &[usize], u: &[usize], x0: usize) -> Result<(bool, bool)> {
    let dom = net.domain(d)?;
    let g = dom.green_column(dom.local(x0).ok_or(Error::NotContained)?);
    let gv = |y: usize| dom.local(y).map(|l| g[l]).unwrap_or(0.0);
    let bd = net.boundary(u);
    if bd.iter().any(|&y| dom.local(y).is_none()) {
        return Err(Error::Precondition("U ∪ ∂U must lie in D".into()));
    }
    let umask = net.mask(u);
    let max_out = dom.verts.iter().filter(|&&y| !umask[y]).map(|&y| gv(y)).fold(0.0, f64::max);
    let max_bd = bd.iter().map(|&y| gv(y)).fold(0.0, f64::max);
    let min_cl = u.iter().chain(&bd).filter(|&&y| y != x0).map(|&y| gv(y)).fold(f64::INFINITY, f64::min);
    let min_bd = bd.iter().map(|&y| gv(y)).fold(f64::INFINITY, f64::min);
    Ok((max_out <= max_bd * (1.0 + UNCOND_TOL), min_bd <= min_cl * (1.0 + UNCOND_TOL) || bd.is_empty()))
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenLemmaConfig {
    /// RBC constant K; domains are B(x0, (2K+3)R).
    pub k: f64,
    pub delta: f64,
    pub centres: usize,
}

impl Default for GreenLemmaConfig {
    fn default() -> Self {
        GreenLemmaConfig { k: 2.0, delta: 0.5, centres: 16 }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GreenLemmaReport {
    pub cases: usize,
    pub skipped: usize,
    /// g(x0,·) comparison constant on annuli.
    pub c_annulus: f64,
    /// max g(x1,y1) / min g(x2,y2) over well-separated pairs.
    pub c0: f64,
    /// Upper constant of g against the inverse ball capacity.
    pub c_g_capacity: f64,
    /// HG constant with K_G = 2K+1.
    pub c_g: f64,
    /// g_{2B} ≤ C g_B near the centre.
    pub c1_doubling: f64,
    /// Decay exponent (supremum of pointwise decay slopes).
    pub theta: f64,
    pub lower_capacity_violations: usize,
    pub max_principle_violations: usize,
    pub domain_monotone_violations: usize,
    pub infinite: usize,
}

impl GreenLemmaReport {
    pub fn unconditional_violations(&self) -> usize {
        self.lower_capacity_violations + self.max_principle_violations + self.domain_monotone_violations
    }
}

/// min over the exterior boundary of the closed ball of g_D(x0,·).
fn g_sphere(
    net: &Network,
    space: &FinitePointMetric,
    dom: &crate::network::Domain,
    g: &[f64],
    x0: usize,
    r: f64,
) -> f64 {
    let cb = space.closed_ball(x0, r);
    net.boundary(&cb).into_iter().map(|y| dom.local(y).map(|l| g[l]).unwrap_or(0.0)).fold(f64::INFINITY, f64::min)
}

pub fn check_green_lemmas(
    net: &Network,
    space: &FinitePointMetric,
    cfg: &GreenLemmaConfig,
) -> Result<GreenLemmaReport> {
    let n = space.len();
    let res = space.resolution();
    let kd = 2.0 * cfg.k + 3.0;
    let radii = space.dyadic_radii();
    let jobs: Vec<(usize, f64)> =
        sample_indices(n, Some(cfg.centres)).into_iter().flat_map(|x| radii.iter().map(move |&r| (x, r))).collect();
    let parts: Vec<Option<GreenLemmaReport>> = jobs
        .par_iter()
        .map(|&(x0, r)| -> Result<Option<GreenLemmaReport>> {
            let d = space.ball(x0, kd * r);
            if d.len() == n || r < 2.0 * res {
                return Ok(None);
            }
            let mut rep = GreenLemmaReport { cases: 1, ..Default::default() };
            let dom = net.domain(&d)?;
            let gcol = dom.green_column(dom.local(x0).unwrap());
            let gx = |y: usize| dom.local(y).map(|l| gcol[l]).unwrap_or(0.0);
            // comparison on the annulus
            let ann: Vec<usize> = space.ball(x0, r).into_iter().filter(|&y| space.d(x0, y) >= cfg.delta * r).collect();
            if !ann.is_empty() {
                let hi = ann.iter().map(|&y| gx(y)).fold(0.0, f64::max);
                let lo = ann.iter().map(|&y| gx(y)).fold(f64::INFINITY, f64::min);
                if lo > 0.0 {
                    rep.c_annulus = hi / lo;
                } else {
                    rep.infinite += 1;
                }
            }
            // pairs at distance ≥ R/4 inside B(x0,R)
            let b = space.ball(x0, r);
            let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
            for &x in &b {
                let cx = dom.green_column(dom.local(x).unwrap());
                for &y in &b {
                    if space.d(x, y) >= r / 4.0 {
                        let v = cx[dom.local(y).unwrap()];
                        hi = hi.max(v);
                        lo = lo.min(v);
                    }
                }
            }
            if lo.is_finite() {
                if lo > 0.0 {
                    rep.c0 = hi / lo;
                } else {
                    rep.infinite += 1;
                }
            }
            // g against capacity, both sides
            let cb = space.closed_ball(x0, r);
            let cap = net.cap(&d, &cb)?;
            let gs = g_sphere(net, space, &dom, &gcol, x0, r);
            if gs > (1.0 / cap) * (1.0 + UNCOND_TOL) {
                rep.lower_capacity_violations += 1;
            }
            if gs > 0.0 {
                rep.c_g_capacity = (1.0 / cap) / gs;
            } else {
                rep.infinite += 1;
            }
            // maximum principle on U = B(x0, R)
            if net.closure(&b).iter().all(|&y| dom.local(y).is_some()) {
                let (a, c) = check_max_principle(net, &d, &b, x0)?;
                rep.max_principle_violations += (!a) as usize + (!c) as usize;
            }
            // HG with K_G = 2K+1
            let hg = check_hg(net, space, x0, r, &d, 2.0 * cfg.k + 1.0)?;
            match hg.c_g {
                Ratio::Finite(v) => rep.c_g = v,
                Ratio::Infinite => rep.infinite += 1,
            }
            // g_B ≤ g_2B ≤ C1 g_B on B(x0, R/(8K))
            let b1 = space.ball(x0, r);
            let b2 = space.ball(x0, 2.0 * r);
            if b2.len() < n {
                let d1 = net.domain(&b1)?;
                let d2 = net.domain(&b2)?;
                let small = space.ball(x0, r / (8.0 * cfg.k));
                for &x in &small {
                    let c1 = d1.green_column(d1.local(x).unwrap());
                    let c2 = d2.green_column(d2.local(x).unwrap());
                    for &y in &small {
                        if y == x {
                            continue;
                        }
                        let (v1, v2) = (c1[d1.local(y).unwrap()], c2[d2.local(y).unwrap()]);
                        if v1 > v2 * (1.0 + UNCOND_TOL) {
                            rep.domain_monotone_violations += 1;
                        }
                        if v1 > 0.0 {
                            rep.c1_doubling = rep.c1_doubling.max(v2 / v1);
                        }
                    }
                }
            }
            // decay exponent over s < r' < R/(K+1)
            let top = r / (cfg.k + 1.0);
            let rs: Vec<f64> = radii.iter().copied().filter(|&s| s < top && s >= res).collect();
            for i in 0..rs.len() {
                for j in 0..rs.len() {
                    let (rr, s) = (rs[i], rs[j]);
                    if s < rr {
                        let (gr, gs) =
                            (g_sphere(net, space, &dom, &gcol, x0, rr), g_sphere(net, space, &dom, &gcol, x0, s));
                        if gr > 0.0 && gs > 0.0 {
                            rep.theta = rep.theta.max((gr / gs).ln() / (s / rr).ln());
                        }
                    }
                }
            }
            Ok(Some(rep))
        })
        .collect::<Result<_>>()?;
    let mut out = GreenLemmaReport::default();
    for p in parts {
        match p {
            None => out.skipped += 1,
            Some(r) => {
                out.cases += r.cases;
                out.c_annulus = out.c_annulus.max(r.c_annulus);
                out.c0 = out.c0.max(r.c0);
                out.c_g_capacity = out.c_g_capacity.max(r.c_g_capacity);
                out.c_g = out.c_g.max(r.c_g);
                out.c1_doubling = out.c1_doubling.max(r.c1_doubling);
                out.theta = out.theta.max(r.theta);
                out.lower_capacity_violations += r.lower_capacity_violations;
                out.max_principle_violations += r.max_principle_violations;
                out.domain_monotone_violations += r.domain_monotone_violations;
                out.infinite += r.infinite;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct CapLemmaConfig {
    /// Ratio between consecutive chain radii.
    pub a: f64,
    /// Chain length.
    pub n: usize,
    pub centres: usize,
    pub a1: f64,
    pub a2: f64,
}

impl Default for CapLemmaConfig {
    fn default() -> Self {
        CapLemmaConfig { a: 2.0, n: 3, centres: 16, a1: 2.0, a2: 4.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CapLemmaReport {
    pub chains: usize,
    pub skipped_overlapping: usize,
    pub skipped_window: usize,
    pub series_violations: usize,
    pub domain_monotone_violations: usize,
    pub subset_monotone_violations: usize,
    /// Worst Cap_{B_n}(B_0)^{-1} / Σ Cap_{B_{i+1}}(B_i)^{-1}.
    pub series_upper: f64,
    /// Capacity comparability of neighbouring balls, d(x,y) ≤ r.
    pub neighbour_c2: f64,
    /// Capacity ratio constant between A1 and A2 windows.
    pub ratio_c2: f64,
    /// Per-centre fitted slopes of log Cap_{B(x,2r)}(B(x,r)) vs log r.
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// δ measured on dyadic cube families.
    pub cube_delta: Option<f64>,
}

impl CapLemmaReport {
    pub fn unconditional_violations(&self) -> usize {
        self.series_violations + self.domain_monotone_violations + self.subset_monotone_violations
    }
}

/// Edges along which the potential of condenser (E, F) can vary.
fn condenser_edges(net: &Network, e: &[usize], f: &[usize]) -> Vec<(usize, usize)> {
    let em = net.mask(e);
    let fm = net.mask(f);
    net.edges()
        .iter()
        .filter(|&&(u, v, _)| {
            let free = |x: usize| fm[x] && !em[x];
            free(u) || free(v) || (em[u] && !fm[v]) || (em[v] && !fm[u])
        })
        .map(|&(u, v, _)| (u, v))
        .collect()
}

/// Cap_{B(x, factor·r)}(closed B(x, r)), `None` if the domain is everything.
pub fn ball_capacity(net: &Network, space: &FinitePointMetric, x: usize, r: f64, factor: f64) -> Result<Option<f64>> {
    let dom = space.ball(x, factor * r);
    if dom.len() == space.len() {
        return Ok(None);
    }
    let inner: Vec<usize> = space.closed_ball(x, r).into_iter().filter(|&y| space.d(x, y) < factor * r).collect();
    Ok(Some(net.cap(&dom, &inner)?))
}

/// (r, Cap_{B(x,2r)}(closed B(x,r))) over dyadic r ≥ resolution with nonempty complement.
pub fn capacity_profile(net: &Network, space: &FinitePointMetric, x: usize) -> Result<Vec<(f64, f64)>> {
    let mut out = vec![];
    for r in space.dyadic_radii() {
        if r < space.resolution() {
            continue;
        }
        if let Some(c) = ball_capacity(net, space, x, r, 2.0)? {
            out.push((r, c));
        }
    }
    out.reverse();
    Ok(out)
}

/// Slope of log capacity against log r for [`capacity_profile`], radii ≥ `min_radius`.
pub fn capacity_slope(net: &Network, space: &FinitePointMetric, x: usize, min_radius: f64) -> Result<Option<SlopeFit>> {
    let prof = capacity_profile(net, space, x)?;
    let pts: Vec<(f64, f64)> =
        prof.iter().filter(|p| p.0 >= min_radius * (1.0 - 1e-12)).map(|&(r, c)| (r.ln(), c.ln())).collect();
    Ok(slope_fit(&pts))
}

pub fn check_capacity_lemmas(
    net: &Network,
    space: &FinitePointMetric,
    cfg: &CapLemmaConfig,
    dec: Option<&DyadicDecomposition>,
) -> Result<CapLemmaReport> {
    let n = space.len();
    let res = space.resolution();
    let radii = space.dyadic_radii();
    let centres = sample_indices(n, Some(cfg.centres));
    let mut rep = CapLemmaReport { gamma_min: f64::INFINITY, gamma_max: f64::NEG_INFINITY, ..Default::default() };
    let per: Vec<CapLemmaReport> = centres
        .par_iter()
        .map(|&x| -> Result<CapLemmaReport> {
            let mut r = CapLemmaReport::default();
            for &r0 in &radii {
                // series law chain E_i = closed B(x, a^i r0), F_{i+1} = B(x, a^{i+1} r0)
                let rad = |i: usize| r0 * cfg.a.powi(i as i32);
                let outer = space.ball(x, rad(cfg.n));
                if outer.len() == n || r0 < res / cfg.a {
                    r.skipped_window += 1;
                    continue;
                }
                let es: Vec<Vec<usize>> = (0..cfg.n).map(|i| space.closed_ball(x, rad(i))).collect();
                let fs: Vec<Vec<usize>> = (1..=cfg.n).map(|i| space.ball(x, rad(i))).collect();
                let sets: Vec<Vec<(usize, usize)>> = (0..cfg.n).map(|i| condenser_edges(net, &es[i], &fs[i])).collect();
                let mut overlap = false;
                for i in 0..cfg.n {
                    for j in i + 1..cfg.n {
                        if sets[i].iter().any(|e| sets[j].contains(e)) {
                            overlap = true;
                        }
                    }
                }
                if overlap {
                    r.skipped_overlapping += 1;
                    continue;
                }
                r.chains += 1;
                let mut sum = 0.0;
                for i in 0..cfg.n {
                    let inner: Vec<usize> = es[i].iter().copied().filter(|y| fs[i].contains(y)).collect();
                    sum += 1.0 / net.cap(&fs[i], &inner)?;
                }
                let total = 1.0 / net.cap(&fs[cfg.n - 1], &es[0])?;
                if sum > total * (1.0 + UNCOND_TOL) {
                    r.series_violations += 1;
                }
                r.series_upper = r.series_upper.max(total / sum);
                // domain and subset monotonicity
                let inner = &es[0];
                let d_small = space.ball(x, cfg.a * r0);
                let d_big = space.ball(x, 2.0 * cfg.a * r0);
                if d_big.len() < n {
                    let inner_s: Vec<usize> = inner.iter().copied().filter(|y| d_small.contains(y)).collect();
                    let c_small = net.cap(&d_small, &inner_s)?;
                    let c_big = net.cap(&d_big, &inner_s)?;
                    if c_big > c_small * (1.0 + UNCOND_TOL) {
                        r.domain_monotone_violations += 1;
                    }
                }
                if cfg.n >= 2 {
                    let dd = &fs[1];
                    let a0: Vec<usize> = es[0].iter().copied().filter(|y| dd.contains(y)).collect();
                    let a1: Vec<usize> = es[1].iter().copied().filter(|y| dd.contains(y)).collect();
                    if net.cap(dd, &a0)? > net.cap(dd, &a1)? * (1.0 + UNCOND_TOL) {
                        r.subset_monotone_violations += 1;
                    }
                }
                // window ratio and neighbour comparability
                if let (Some(c1), Some(c2)) =
                    (ball_capacity(net, space, x, r0, cfg.a1)?, ball_capacity(net, space, x, r0, cfg.a2)?)
                {
                    r.ratio_c2 = r.ratio_c2.max(c1 / c2);
                }
                if let Some(cx) = ball_capacity(net, space, x, r0, cfg.a)? {
                    for y in space.ball(x, r0 * (1.0 + 1e-12)) {
                        if y != x && space.d(x, y) <= r0 {
                            if let Some(cy) = ball_capacity(net, space, y, r0, cfg.a)? {
                                r.neighbour_c2 = r.neighbour_c2.max(cx / cy).max(cy / cx);
                            }
                        }
                    }
                }
            }
            if let Some(f) = capacity_slope(net, space, x, 2.0 * res)? {
                r.gamma_min = f.fitted;
                r.gamma_max = f.fitted;
            } else {
                r.gamma_min = f64::INFINITY;
                r.gamma_max = f64::NEG_INFINITY;
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    for r in per {
        rep.chains += r.chains;
        rep.skipped_overlapping += r.skipped_overlapping;
        rep.skipped_window += r.skipped_window;
        rep.series_violations += r.series_violations;
        rep.domain_monotone_violations += r.domain_monotone_violations;
        rep.subset_monotone_violations += r.subset_monotone_violations;
        rep.series_upper = rep.series_upper.max(r.series_upper);
        rep.neighbour_c2 = rep.neighbour_c2.max(r.neighbour_c2);
        rep.ratio_c2 = rep.ratio_c2.max(r.ratio_c2);
        rep.gamma_min = rep.gamma_min.min(r.gamma_min);
        rep.gamma_max = rep.gamma_max.max(r.gamma_max);
    }
    if let Some(dec) = dec {
        let mut worst = f64::NEG_INFINITY;
        if let Some(k0) = dec.k0() {
            for k in (k0 + 1)..dec.k_max() {
                for &x in dec.net(k) {
                    let dom = space.ball(x, dec.scale(k - 1));
                    if dom.len() == n {
                        continue;
                    }
                    let q = dec.cube(k, x);
                    let whole = net.cap(&dom, &q)?;
                    let mut sum = 0.0;
                    for y in dec.successors(k, x) {
                        sum += net.cap(&dom, &dec.cube(k + 1, y))?;
                    }
                    worst = worst.max(whole / sum);
                }
            }
        }
        rep.cube_delta = (worst > f64::NEG_INFINITY).then_some(1.0 - worst);
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainCheck {
    pub steps: usize,
    pub direct: f64,
    pub product: f64,
    pub holds: bool,
}

/// Compares P^y(σ_{B_n} < τ_D) with the product of per-step minima along a
/// chain z_0..z_n with balls B_i = B(z_i, ρ) and D_i = B(z_{i−1}, outer).
pub fn check_chaining(
    net: &Network,
    space: &FinitePointMetric,
    chain: &[usize],
    rho: f64,
    start_radius: f64,
    outer: f64,
) -> Result<Option<ChainCheck>> {
    if chain.len() < 2 {
        return Ok(None);
    }
    let n = space.len();
    let mut d: Vec<usize> = vec![];
    for &z in &chain[..chain.len() - 1] {
        d.extend(space.ball(z, outer));
    }
    d.sort_unstable();
    d.dedup();
    if d.len() == n {
        return Ok(None);
    }
    let dmask = net.mask(&d);
    let target: Vec<usize> = space.ball(*chain.last().unwrap(), rho).into_iter().filter(|&y| dmask[y]).collect();
    let direct_all = net.hitting_probability(&d, &target)?;
    let mut product = 1.0;
    for w in chain.windows(2) {
        let di = space.ball(w[0], outer);
        let bi: Vec<usize> = space.ball(w[1], rho).into_iter().filter(|y| di.contains(y)).collect();
        let h = net.hitting_probability(&di, &bi)?;
        let p = space.ball(w[0], start_radius).into_iter().map(|y| h[y]).fold(f64::INFINITY, f64::min);
        product *= p;
    }
    let direct = space.ball(chain[0], start_radius).into_iter().map(|y| direct_all[y]).fold(f64::INFINITY, f64::min);
    Ok(Some(ChainCheck { steps: chain.len() - 1, direct, product, holds: direct >= product - 1e-12 }))
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityConfig {
    pub delta: f64,
    pub centres: Option<usize>,
    pub window: TrendWindow,
    pub a1: f64,
    pub a2: f64,
    pub energy_tests: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            delta: 0.5,
            centres: None,
            window: TrendWindow::default(),
            a1: 2.0,
            a2: 4.0,
            energy_tests: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub c_h: Ratio,
    pub c_g: Ratio,
    pub pi: Ratio,
    pub cap: Ratio,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub certificate: PerturbCertificate,
    pub energy_measure_exact: bool,
    pub constants: Constants,
    pub ratio_c_h: Ratio,
    pub ratio_c_g: Ratio,
    pub ratio_pi: Ratio,
    pub ratio_cap: Ratio,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub lambda: f64,
    pub seed: u64,
    pub baseline: Constants,
    pub trials: Vec<TrialRecord>,
    pub max_ratio: Ratio,
    pub certificates_exact: bool,
}

fn up_down(a: Ratio, b: Ratio) -> Ratio {
    match (a, b) {
        (Ratio::Finite(x), Ratio::Finite(y)) => {
            if x == y {
                Ratio::Finite(1.0)
            } else if x > 0.0 && y > 0.0 {
                Ratio::Finite((x / y).max(y / x))
            } else {
                Ratio::Infinite
            }
        }
        (Ratio::Infinite, Ratio::Infinite) => Ratio::Finite(1.0),
        _ => Ratio::Infinite,
    }
}

fn constants(
    net: &Network,
    space: &FinitePointMetric,
    mu: &[f64],
    psi: &ScaleFn,
    cfg: &StabilityConfig,
) -> Result<Constants> {
    let ehi = ehi_scan(net, space, cfg.delta, cfg.centres, cfg.window)?;
    // HG at the root with the largest radius whose 5R-ball misses something
    let mut c_g = Ratio::Finite(0.0);
    for r in space.dyadic_radii() {
        let d = space.ball(0, 5.0 * r);
        if d.len() < space.len() && r >= space.resolution() {
            c_g = c_g.max(check_hg(net, space, 0, r, &d, 5.0)?.c_g);
        }
    }
    let pi = check_pi(net, mu, space, psi, cfg.a1, cfg.a2, cfg.centres)?.constant;
    let cap = check_cap_psi(net, mu, space, psi, cfg.a1, cfg.a2, cfg.centres)?.constant;
    Ok(Constants { c_h: ehi.global_max, c_g, pi, cap })
}

/// Perturbs conductances log-uniformly in [1/λ, λ] and compares constants.
pub fn stability_experiment(
    net: &Network,
    space: &FinitePointMetric,
    mu: &[f64],
    psi: &ScaleFn,
    lambda: f64,
    seed: u64,
    trials: u64,
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    let baseline = constants(net, space, mu, psi, cfg)?;
    let mut out = vec![];
    let mut all_exact = true;
    for t in 0..trials {
        let (p, cert) = perturb(net, lambda, seed, t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(t);
        let mut exact = cert.holds();
        for _ in 0..cfg.energy_tests {
            let f: Vec<f64> = (0..net.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m0 = net.energy_measure(&f);
            let m1 = p.energy_measure(&f);
            for (a, b) in m0.iter().zip(&m1) {
                if *b > lambda * a * (1.0 + 1e-12) || *b < a / lambda * (1.0 - 1e-12) {
                    exact = false;
                }
            }
            let (e0, e1) = (net.energy(&f), p.energy(&f));
            if e1 > lambda * e0 * (1.0 + 1e-12) || e1 < e0 / lambda * (1.0 - 1e-12) {
                exact = false;
            }
        }
        all_exact &= exact;
        let c = constants(&p, space, mu, psi, cfg)?;
        out.push(TrialRecord {
            trial: t,
            certificate: cert,
            energy_measure_exact: exact,
            ratio_c_h: up_down(baseline.c_h, c.c_h),
            ratio_c_g: up_down(baseline.c_g, c.c_g),
            ratio_pi: up_down(baseline.pi, c.pi),
            ratio_cap: up_down(baseline.cap, c.cap),
            constants: c,
        });
    }
    let max_ratio =
        out.iter().flat_map(|t| [t.ratio_c_h, t.ratio_pi, t.ratio_cap]).fold(Ratio::Finite(1.0), Ratio::max);
    Ok(StabilityReport { lambda, seed, baseline, trials: out, max_ratio, certificates_exact: all_exact })
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
    fn path_harnack_examples() {
        let (net, m) = path(5);
        // B(2, 2) = {1,2,3}
        let one = harnack_constant(&net, &m, 2, 2.0, 0.4).unwrap();
        assert_eq!(one.c_h, Ratio::Finite(1.0));
        let three = harnack_constant(&net, &m, 2, 2.0, 0.5).unwrap();
        assert!((three.c_h.value() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_edge_is_trivial() {
        let (net, m) = path(2);
        let rep = ehi_scan(&net, &m, 0.5, None, TrendWindow::default()).unwrap();
        assert_eq!(rep.global_max, Ratio::Finite(1.0));
    }

    #[test]
    fn hg_path_example() {
        let (net, m) = path(11);
        let d: Vec<usize> = (1..10).collect();
        let r = check_hg(&net, &m, 5, 2.0, &d, 2.0).unwrap();
        assert!((r.c_g.value() - 1.0).abs() < 1e-12);
    }
}
