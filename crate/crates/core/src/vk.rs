//! Capacity-good doubling measures: the level-by-level Volberg–Konyagin
//! construction, its audit ledger, and the capacity-good / doubling verifiers.

use crate::dyadic::{CapacityTable, DyadicDecomposition};
use crate::error::{Error, Result};
use crate::fit::ls_slope;
use crate::metric::FinitePointMetric;
use crate::network::Network;
use crate::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMeasure {
    pub k: i32,
    pub masses: BTreeMap<usize, f64>,
}

impl LevelMeasure {
    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: usize,
    pub to: usize,
    pub alpha: f64,
    pub dist: f64,
}

/// Everything needed to replay one step without recomputing capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLedger {
    pub k: i32,
    pub scale_next: f64,
    pub parent_masses: Vec<(usize, f64)>,
    pub c_k: Vec<(usize, f64)>,
    pub c_next: Vec<(usize, f64)>,
    /// (child, parent)
    pub parent_of: Vec<(usize, usize)>,
    /// Enumerated stage-2 pairs (lower index first) in processing order.
    pub pairs: Vec<(usize, usize)>,
    pub stage1: Vec<(usize, f64)>,
    pub transfers: Vec<Transfer>,
    pub final_masses: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub c_big: f64,
    pub delta_hat: f64,
    pub a: f64,
    pub start_level: i32,
    pub start: Vec<(usize, f64)>,
    pub steps: Vec<StepLedger>,
}

impl Ledger {
    pub fn to_json(&self) -> String {
        crate::format::canonical_json(&serde_json::to_value(self).unwrap())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Ledger> {
        let l: Ledger = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        if !(l.c_big >= 1.0) || !l.c_big.is_finite() || !l.delta_hat.is_finite() || !l.a.is_finite() {
            return Err(Error::Parse("ledger constants out of range".into()));
        }
        Ok(l)
    }
}

fn ratio_ok(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + REL_TOL) + f64::MIN_POSITIVE
}

/// Close net pairs at level k (0 < d ≤ 4·scale(k)), lexicographic by index.
fn close_pairs(net: &[usize], space: &FinitePointMetric, r: f64) -> Vec<(usize, usize)> {
    let mut pts = net.to_vec();
    pts.sort_unstable();
    let mut out = vec![];
    for (i, &p) in pts.iter().enumerate() {
        for &q in &pts[i + 1..] {
            let d = space.d(p, q);
            if d > 0.0 && d <= r {
                out.push((p, q));
            }
        }
    }
    out
}

/// One Volberg–Konyagin step from level k to k+1.
pub fn vk_step(
    mu: &LevelMeasure,
    dec: &DyadicDecomposition,
    caps: &CapacityTable,
    space: &FinitePointMetric,
    c_big: f64,
) -> Result<(LevelMeasure, StepLedger)> {
    let k = mu.k;
    let ck = caps.levels.get(&k).ok_or_else(|| Error::Precondition(format!("no capacities at level {k}")))?;
    let cn =
        caps.levels.get(&(k + 1)).ok_or_else(|| Error::Precondition(format!("no capacities at level {}", k + 1)))?;
    let c2 = c_big * c_big;
    // the incoming level must satisfy the ratio condition
    for (p, q) in close_pairs(dec.net(k), space, 4.0 * dec.scale(k)) {
        let (rp, rq) = (mu.masses[&p] / ck[&p], mu.masses[&q] / ck[&q]);
        if !ratio_ok(rp, c2 * rq) || !ratio_ok(rq, c2 * rp) {
            return Err(Error::Precondition(format!("level {k} ratio condition fails for pair ({p}, {q})")));
        }
    }
    let mut f: BTreeMap<usize, f64> = BTreeMap::new();
    let mut parent_of = vec![];
    for (&e, &m) in &mu.masses {
        let succ = dec.successors(k, e);
        let sum: f64 = succ.iter().map(|g| cn[g]).sum();
        for g in succ {
            f.insert(g, cn[&g] / sum * m);
            parent_of.push((g, e));
        }
    }
    parent_of.sort_unstable();
    let stage1: Vec<(usize, f64)> = f.iter().map(|(&g, &v)| (g, v)).collect();
    let scale_next = dec.scale(k + 1);
    let pairs = close_pairs(dec.net(k + 1), space, 4.0 * scale_next);
    let mut transfers = vec![];
    for &(p, q) in &pairs {
        for (g1, g2) in [(p, q), (q, p)] {
            let (a1, a2) = (f[&g1] / cn[&g1], f[&g2] / cn[&g2]);
            if a1 > c2 * a2 {
                let alpha = (a1 - c2 * a2) / (c2 / cn[&g2] + 1.0 / cn[&g1]);
                *f.get_mut(&g1).unwrap() -= alpha;
                *f.get_mut(&g2).unwrap() += alpha;
                transfers.push(Transfer { from: g1, to: g2, alpha, dist: space.d(g1, g2) });
            }
        }
    }
    let led = StepLedger {
        k,
        scale_next,
        parent_masses: mu.masses.iter().map(|(&p, &v)| (p, v)).collect(),
        c_k: ck.iter().map(|(&p, &v)| (p, v)).collect(),
        c_next: cn.iter().map(|(&p, &v)| (p, v)).collect(),
        parent_of,
        pairs,
        stage1,
        transfers,
        final_masses: f.iter().map(|(&p, &v)| (p, v)).collect(),
    };
    Ok((LevelMeasure { k: k + 1, masses: f }, led))
}

#[derive(Debug, Clone, Serialize)]
pub struct VkResult {
    /// Mass per vertex (index order), total 1.
    pub measure: Vec<f64>,
    pub ledger: Ledger,
    pub c1: f64,
    pub successor_max: usize,
}

/// Runs the construction from `root_level + 3` to the finest level.
pub fn build_measure(
    dec: &DyadicDecomposition,
    caps: &CapacityTable,
    space: &FinitePointMetric,
    root_level: i32,
) -> Result<VkResult> {
    let start = root_level + 3;
    let kmax = dec.k_max();
    if start > kmax {
        return Err(Error::Precondition(format!("start level {start} is beyond the finest level {kmax}")));
    }
    for k in start..=kmax {
        if !caps.levels.contains_key(&k) {
            return Err(Error::Precondition(format!("capacity table misses level {k}")));
        }
    }
    let successor_max = (start..kmax)
        .flat_map(|k| dec.net(k).iter().map(move |&x| dec.successors(k, x).len()))
        .max()
        .unwrap_or(1)
        .max(1);
    let c1 = caps.c1();
    let c_big = c1 * successor_max as f64;
    let delta_hat = caps.delta_hat.unwrap_or(0.0);
    if start < kmax && !(delta_hat > 0.0) {
        return Err(Error::Aborted(format!("measured δ̂ = {delta_hat} is not positive")));
    }
    let c0 = &caps.levels[&start];
    let total: f64 = c0.values().sum();
    let mut mu = LevelMeasure { k: start, masses: c0.iter().map(|(&x, &c)| (x, c / total)).collect() };
    let start_masses: Vec<(usize, f64)> = mu.masses.iter().map(|(&p, &v)| (p, v)).collect();
    let mut steps = vec![];
    while mu.k < kmax {
        let (next, led) = vk_step(&mu, dec, caps, space, c_big)?;
        steps.push(led);
        mu = next;
    }
    let mut measure = vec![0.0; space.len()];
    for p in 0..space.len() {
        measure[p] = mu.masses[&dec.cube_of(kmax, p)];
    }
    Ok(VkResult {
        measure,
        ledger: Ledger { c_big, delta_hat, a: dec.a, start_level: start, start: start_masses, steps },
        c1,
        successor_max,
    })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LedgerAudit {
    pub steps: usize,
    pub transfers: usize,
    pub stage1_exact: bool,
    pub replay_exact: bool,
    pub mass_conserved: bool,
    pub bounds_hold: bool,
    pub ratio_condition: bool,
    pub transport_local: bool,
    pub no_chaining: bool,
    pub correction_monotone: bool,
    pub worst_lower: f64,
    pub worst_upper: f64,
    pub violations: Vec<String>,
}

impl LedgerAudit {
    pub fn pass(&self) -> bool {
        self.stage1_exact
            && self.replay_exact
            && self.mass_conserved
            && self.bounds_hold
            && self.ratio_condition
            && self.transport_local
            && self.correction_monotone
    }
}

/// Replays a ledger using only the recorded numbers.
pub fn audit_ledger(l: &Ledger) -> LedgerAudit {
    let mut a = LedgerAudit {
        stage1_exact: true,
        replay_exact: true,
        mass_conserved: true,
        bounds_hold: true,
        ratio_condition: true,
        transport_local: true,
        no_chaining: true,
        correction_monotone: true,
        worst_lower: f64::INFINITY,
        worst_upper: f64::INFINITY,
        ..Default::default()
    };
    let c2 = l.c_big * l.c_big;
    let total0: f64 = l.start.iter().map(|p| p.1).sum();
    if (total0 - 1.0).abs() > 1e-9 {
        a.mass_conserved = false;
        a.violations.push(format!("start mass {total0}"));
    }
    let mut prev: BTreeMap<usize, f64> = l.start.iter().copied().collect();
    for s in &l.steps {
        a.steps += 1;
        a.transfers += s.transfers.len();
        let pm: BTreeMap<usize, f64> = s.parent_masses.iter().copied().collect();
        if pm != prev {
            a.replay_exact = false;
            a.violations.push(format!("level {}: parent masses differ from previous step", s.k));
        }
        let ck: BTreeMap<usize, f64> = s.c_k.iter().copied().collect();
        let cn: BTreeMap<usize, f64> = s.c_next.iter().copied().collect();
        let par: BTreeMap<usize, usize> = s.parent_of.iter().copied().collect();
        let consistent = par.keys().all(|g| cn.contains_key(g))
            && par.values().all(|e| ck.contains_key(e) && pm.contains_key(e))
            && s.pairs.iter().all(|(p, q)| cn.contains_key(p) && cn.contains_key(q));
        if !consistent {
            a.replay_exact = false;
            a.violations.push(format!("level {}: inconsistent tables", s.k));
            continue;
        }
        // stage 1
        let mut f: BTreeMap<usize, f64> = BTreeMap::new();
        for (&e, &m) in &pm {
            let kids: Vec<usize> = par.iter().filter(|(_, &p)| p == e).map(|(&g, _)| g).collect();
            let sum: f64 = kids.iter().map(|g| cn[g]).sum();
            for g in kids {
                f.insert(g, cn[&g] / sum * m);
            }
        }
        let s1: BTreeMap<usize, f64> = s.stage1.iter().copied().collect();
        if s1 != f {
            a.stage1_exact = false;
            a.violations.push(format!("level {}: stage-1 masses do not replay", s.k));
        }
        // stage 2 replay with monotonicity tracking
        let band = |f: &BTreeMap<usize, f64>, p: usize, q: usize| {
            let (rp, rq) = (f[&p] / cn[&p], f[&q] / cn[&q]);
            ratio_ok(rp, c2 * rq) && ratio_ok(rq, c2 * rp)
        };
        let mut ti = 0;
        let mut done: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        let mut senders = std::collections::BTreeSet::new();
        let mut receivers = std::collections::BTreeSet::new();
        for &(p, q) in &s.pairs {
            if !f.contains_key(&p) || !f.contains_key(&q) {
                a.replay_exact = false;
                break;
            }
            for (g1, g2) in [(p, q), (q, p)] {
                let (a1, a2) = (f[&g1] / cn[&g1], f[&g2] / cn[&g2]);
                if a1 > c2 * a2 {
                    let alpha = (a1 - c2 * a2) / (c2 / cn[&g2] + 1.0 / cn[&g1]);
                    match s.transfers.get(ti) {
                        Some(t) if t.from == g1 && t.to == g2 && t.alpha == alpha => {
                            if t.dist > 4.0 * s.scale_next * (1.0 + REL_TOL) {
                                a.transport_local = false;
                                a.violations.push(format!("level {}: transfer over {}", s.k, t.dist));
                            }
                        }
                        _ => {
                            a.replay_exact = false;
                            a.violations.push(format!("level {}: transfer {ti} does not replay", s.k));
                        }
                    }
                    ti += 1;
                    *f.get_mut(&g1).unwrap() -= alpha;
                    *f.get_mut(&g2).unwrap() += alpha;
                    senders.insert(g1);
                    receivers.insert(g2);
                    for g in [g1, g2] {
                        for &(u, v) in done.get(&g).map(|v| v.as_slice()).unwrap_or(&[]) {
                            if !band(&f, u, v) {
                                a.correction_monotone = false;
                                a.violations.push(format!("level {}: pair ({u},{v}) left the band", s.k));
                            }
                        }
                    }
                }
            }
            done.entry(p).or_default().push((p, q));
            done.entry(q).or_default().push((p, q));
        }
        if ti != s.transfers.len() {
            a.replay_exact = false;
        }
        if senders.intersection(&receivers).next().is_some() {
            a.no_chaining = false;
        }
        let fin: BTreeMap<usize, f64> = s.final_masses.iter().copied().collect();
        if fin != f {
            a.replay_exact = false;
            a.violations.push(format!("level {}: final masses do not replay", s.k));
        }
        let t0: f64 = pm.values().sum();
        let t1: f64 = fin.values().sum();
        if (t0 - t1).abs() > 1e-12 {
            a.mass_conserved = false;
            a.violations.push(format!("level {}: mass {t0} → {t1}", s.k));
        }
        // ratio condition at the new level over all enumerated pairs
        for &(p, q) in &s.pairs {
            if fin.contains_key(&p) && fin.contains_key(&q) && !band(&fin, p, q) {
                a.ratio_condition = false;
                a.violations.push(format!("level {}: pair ({p},{q}) outside C² band", s.k + 1));
            }
        }
        // ledger bounds
        for (&g, &e) in &par {
            let (Some(&mg), Some(&me)) = (fin.get(&g), pm.get(&e)) else { continue };
            let child = mg / cn[&g];
            let parent = me / ck[&e];
            let lower = child / (parent / l.c_big);
            let upper = (1.0 - l.delta_hat) * parent / child;
            a.worst_lower = a.worst_lower.min(lower);
            a.worst_upper = a.worst_upper.min(upper);
            if !ratio_ok(parent / l.c_big, child) || !ratio_ok(child, (1.0 - l.delta_hat) * parent) {
                a.bounds_hold = false;
                a.violations.push(format!("level {}: child {g} of {e} outside the ledger bounds", s.k + 1));
            }
        }
        prev = fin;
    }
    a
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityGoodCertificate {
    pub c0: f64,
    pub a: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub samples: usize,
    pub window: (f64, f64),
    pub radii: Vec<f64>,
    /// Worst (x id, s1, s2, ratio) below and above the fitted envelope.
    pub worst_low: Option<(i64, f64, f64, f64)>,
    pub worst_high: Option<(i64, f64, f64, f64)>,
    pub beta1_target: Option<f64>,
    pub beta2_target: Option<f64>,
    pub pass: bool,
}

/// Theory constants from the construction, used for targets.
#[derive(Debug, Clone, Copy)]
pub struct VkTheory {
    pub delta_hat: f64,
    pub c_big: f64,
    pub a_dec: f64,
}

fn ball_mass(mu: &[f64], space: &FinitePointMetric, x: usize, r: f64) -> f64 {
    space.row(x).iter().zip(mu).filter(|(d, _)| **d < r).map(|(_, m)| m).sum()
}

/// Evaluates ν(B(x,s2))·Cap(s1) / (ν(B(x,s1))·Cap(s2)) with
/// Cap(s) = Cap_{B(x,As)}(closed B(x,s)) over the window (resolution, diam/A).
pub fn verify_capacity_good(
    mu: &[f64],
    net: &Network,
    space: &FinitePointMetric,
    a: f64,
    samples: usize,
    theory: Option<VkTheory>,
) -> Result<CapacityGoodCertificate> {
    if mu.len() != space.len() || mu.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Precondition("measure must have full support".into()));
    }
    if !(a > 1.0) {
        return Err(Error::InvalidArgument("A must exceed 1".into()));
    }
    let lo = space.resolution();
    // A^{-4}·diam leaves no dyadic scales on desk-sized spaces; the capacity
    // domains only need a nonempty complement
    let hi = space.diam() / a;
    let radii: Vec<f64> = space.dyadic_radii().into_iter().filter(|&s| s > lo && s < hi).rev().collect();
    if radii.len() < 2 {
        return Err(Error::Precondition("insufficient scales in the capacity-good window".into()));
    }
    let n = space.len();
    let stride = (n / samples.max(1)).max(1);
    let centres: Vec<usize> = (0..n).step_by(stride).collect();
    // per centre: (ν(B(x,s)), Cap(s)) for each radius, None if the domain is everything
    let table: Vec<Vec<Option<(f64, f64)>>> = centres
        .par_iter()
        .map(|&x| {
            radii
                .iter()
                .map(|&s| {
                    let dom = space.ball(x, a * s);
                    if dom.len() == n {
                        return None;
                    }
                    let inner = space.closed_ball(x, s);
                    let inner: Vec<usize> = inner.into_iter().filter(|p| dom.contains(p)).collect();
                    let c = net.cap(&dom, &inner).ok()?;
                    Some((ball_mass(mu, space, x, s), c))
                })
                .collect()
        })
        .collect();
    let mut pts = vec![]; // (x id, s1, s2, t, y)
    for (ci, &x) in centres.iter().enumerate() {
        for i in 0..radii.len() {
            for j in i + 1..radii.len() {
                if let (Some((m1, c1)), Some((m2, c2))) = (table[ci][i], table[ci][j]) {
                    let y = (m2 * c1 / (m1 * c2)).ln();
                    pts.push((space.ids()[x], radii[i], radii[j], (radii[j] / radii[i]).ln(), y));
                }
            }
        }
    }
    if pts.is_empty() {
        return Err(Error::Precondition("insufficient scales in the capacity-good window".into()));
    }
    let long: Vec<_> = pts.iter().filter(|p| p.3 >= 4f64.ln() - 1e-12).collect();
    let fit_set: Vec<_> = if long.is_empty() { pts.iter().collect() } else { long };
    let beta1 = fit_set.iter().map(|p| p.4 / p.3).fold(f64::INFINITY, f64::min);
    let beta2 = fit_set.iter().map(|p| p.4 / p.3).fold(f64::NEG_INFINITY, f64::max);
    let mut logc = 0.0f64;
    let mut worst_low = None;
    let mut worst_high = None;
    let (mut wl, mut wh) = (0.0f64, 0.0f64);
    for p in &pts {
        let low = beta1 * p.3 - p.4;
        let high = p.4 - beta2 * p.3;
        if low > wl {
            wl = low;
            worst_low = Some((p.0, p.1, p.2, p.4.exp()));
        }
        if high > wh {
            wh = high;
            worst_high = Some((p.0, p.1, p.2, p.4.exp()));
        }
        logc = logc.max(low).max(high);
    }
    let c0 = logc.exp();
    let pass = c0.is_finite() && beta1.is_finite() && beta2.is_finite() && beta1 > 0.0;
    Ok(CapacityGoodCertificate {
        c0,
        a,
        beta1,
        beta2,
        samples: pts.len(),
        window: (lo, hi),
        radii,
        worst_low,
        worst_high,
        beta1_target: theory.filter(|t| t.delta_hat > 0.0).map(|t| -(1.0 - t.delta_hat).ln() / t.a_dec.ln()),
        beta2_target: theory.map(|t| t.c_big.ln() / t.a_dec.ln()),
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingReport {
    pub doubling: Ratio,
    pub alpha: Option<f64>,
    pub c0: Option<f64>,
    pub pass: bool,
}

/// Doubling constant over dyadic radii and a reverse-doubling fit.
pub fn verify_doubling(mu: &[f64], space: &FinitePointMetric, samples: usize) -> DoublingReport {
    let n = space.len();
    let stride = (n / samples.max(1)).max(1);
    let radii: Vec<f64> = space.dyadic_radii();
    let per: Vec<(f64, Option<f64>, Vec<(f64, f64)>)> = (0..n)
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&x| {
            let mut dbl = 1.0f64;
            for &r in &radii {
                let (m1, m2) = (ball_mass(mu, space, x, r), ball_mass(mu, space, x, 2.0 * r));
                if m1 > 0.0 {
                    dbl = dbl.max(m2 / m1);
                } else if m2 > 0.0 {
                    dbl = f64::INFINITY;
                }
            }
            let pts: Vec<(f64, f64)> = radii
                .iter()
                .filter(|&&r| space.ball(x, r).len() < n)
                .map(|&r| (r, ball_mass(mu, space, x, r)))
                .filter(|p| p.1 > 0.0)
                .collect();
            let logs: Vec<(f64, f64)> = pts.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
            (dbl, ls_slope(&logs), pts)
        })
        .collect();
    let doubling = per.iter().map(|p| p.0).fold(1.0, f64::max);
    let alpha = per.iter().filter_map(|p| p.1).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))));
    let c0 = alpha.map(|al| {
        let mut c = f64::INFINITY;
        for (_, _, pts) in &per {
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if pts[j].0 > pts[i].0 {
                        c = c.min(pts[j].1 / pts[i].1 / (pts[j].0 / pts[i].0).powf(al));
                    }
                }
            }
        }
        c
    });
    DoublingReport { doubling: Ratio::from_f64(doubling), alpha, c0, pass: doubling.is_finite() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::build_decomposition;

    #[test]
    fn equal_capacity_split_is_halving() {
        // path 0..4: level 0 cubes {0,1,2}, {3,4}; hand-made capacity table
        let p = FinitePointMetric::euclidean((0..5).collect(), (0..5).map(|i| vec![i as f64]).collect()).unwrap();
        let dec = build_decomposition(&p, 0, 8.0).unwrap();
        let mut levels = BTreeMap::new();
        levels.insert(0, BTreeMap::from([(0usize, 1.0), (4usize, 1.0)]));
        levels.insert(1, (0..5).map(|x| (x, 1.0)).collect());
        let caps = CapacityTable {
            levels,
            skipped_levels: vec![],
            c1_within: 1.0,
            c1_parent: 1.0,
            delta_hat: Some(0.5),
            esp_ratio: BTreeMap::new(),
        };
        let mu = LevelMeasure { k: 0, masses: BTreeMap::from([(0, 0.5), (4, 0.5)]) };
        let (next, led) = vk_step(&mu, &dec, &caps, &p, 3.0).unwrap();
        assert!((next.masses[&3] - 0.25).abs() < 1e-15);
        assert!((next.masses[&0] - 0.5 / 3.0).abs() < 1e-15);
        assert!(led.transfers.is_empty());
        assert!((next.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_fails_doubling() {
        let p = FinitePointMetric::euclidean((0..8).collect(), (0..8).map(|i| vec![i as f64]).collect()).unwrap();
        let mut mu = vec![0.0; 8];
        mu[0] = 1.0;
        assert!(!verify_doubling(&mu, &p, 8).pass);
    }
}
