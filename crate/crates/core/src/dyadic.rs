//! Nested nets, parent maps and cube partitions at scales diam·A^{-k}.

use crate::error::{Error, Result};
use crate::metric::FinitePointMetric;
use crate::network::Network;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicDecomposition {
    pub a: f64,
    pub diam: f64,
    pub root: usize,
    /// Level of `nets[0]`; always −1 (the whole space as one cube).
    pub k_min: i32,
    pub nets: Vec<Vec<usize>>,
    /// `parent[l][p]` for net points p of level `k_min + l` (l ≥ 1); `usize::MAX` elsewhere.
    pub parent: Vec<Vec<usize>>,
    /// `member[l][p]` = centre of the level-(k_min + l) cube containing p.
    pub member: Vec<Vec<usize>>,
    pub ids: Vec<i64>,
}

pub fn c_a(a: f64) -> f64 {
    0.5 - 1.0 / (a - 1.0)
}

pub fn big_c_a(a: f64) -> f64 {
    a / (a - 1.0)
}

impl DyadicDecomposition {
    pub fn k_max(&self) -> i32 {
        self.k_min + self.nets.len() as i32 - 1
    }

    fn li(&self, k: i32) -> usize {
        (k - self.k_min) as usize
    }

    pub fn scale(&self, k: i32) -> f64 {
        self.diam * self.a.powi(-k)
    }

    pub fn net(&self, k: i32) -> &[usize] {
        &self.nets[self.li(k)]
    }

    pub fn cube_of(&self, k: i32, p: usize) -> usize {
        self.member[self.li(k)][p]
    }

    pub fn parent_of(&self, k: i32, p: usize) -> usize {
        self.parent[self.li(k)][p]
    }

    /// First level with more than one cube; `None` for a single point.
    pub fn k0(&self) -> Option<i32> {
        (self.k_min..=self.k_max()).find(|&k| self.net(k).len() > 1)
    }

    /// Successors S_k(x): level-(k+1) net points whose parent is x.
    pub fn successors(&self, k: i32, x: usize) -> Vec<usize> {
        if k >= self.k_max() {
            return vec![];
        }
        let mut s: Vec<usize> = self.net(k + 1).iter().copied().filter(|&y| self.parent_of(k + 1, y) == x).collect();
        s.sort_unstable();
        s
    }

    /// Points of the cube Q_k(x).
    pub fn cube(&self, k: i32, x: usize) -> Vec<usize> {
        let row = &self.member[self.li(k)];
        (0..row.len()).filter(|&p| row[p] == x).collect()
    }

    /// All cubes of level k as centre → members.
    pub fn cubes(&self, k: i32) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (p, &c) in self.member[self.li(k)].iter().enumerate() {
            m.entry(c).or_default().push(p);
        }
        m
    }

    pub fn to_json(&self) -> String {
        let f = DecompFile {
            a: self.a,
            diam: self.diam,
            root: self.ids[self.root],
            k_min: self.k_min,
            points: self.ids.clone(),
            levels: (0..self.nets.len())
                .map(|l| LevelFile {
                    k: self.k_min + l as i32,
                    net: self.nets[l].iter().map(|&p| self.ids[p]).collect(),
                    parents: if l == 0 {
                        vec![]
                    } else {
                        self.nets[l].iter().map(|&p| [self.ids[p], self.ids[self.parent[l][p]]]).collect()
                    },
                    cubes: self.member[l].iter().map(|&c| self.ids[c]).collect(),
                })
                .collect(),
        };
        crate::format::canonical_json(&serde_json::to_value(f).unwrap())
    }

    /// Parses the serialized form with structural validation only; geometric
    /// properties are checked by [`verify_decomposition`].
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let f: DecompFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))?;
        let n = f.points.len();
        if n == 0 || f.levels.is_empty() {
            return Err(Error::Parse("empty decomposition".into()));
        }
        if !(f.a >= 8.0) || !f.a.is_finite() || !(f.diam >= 0.0) || !f.diam.is_finite() {
            return Err(Error::Parse("bad A or diameter".into()));
        }
        let mut index = BTreeMap::new();
        for (i, &id) in f.points.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::Parse("duplicate point id".into()));
            }
        }
        let look = |id: i64| index.get(&id).copied().ok_or_else(|| Error::Parse(format!("unknown id {id}")));
        let mut nets = vec![];
        let mut parent = vec![];
        let mut member = vec![];
        for (l, lev) in f.levels.iter().enumerate() {
            if lev.k != f.k_min + l as i32 {
                return Err(Error::Parse("levels must be contiguous".into()));
            }
            let net: Vec<usize> = lev.net.iter().map(|&id| look(id)).collect::<Result<_>>()?;
            let mut par = vec![usize::MAX; n];
            for &[c, p] in &lev.parents {
                par[look(c)?] = look(p)?;
            }
            if lev.cubes.len() != n {
                return Err(Error::Parse("cube membership must cover every point".into()));
            }
            let mem: Vec<usize> = lev.cubes.iter().map(|&id| look(id)).collect::<Result<_>>()?;
            nets.push(net);
            parent.push(par);
            member.push(mem);
        }
        Ok(DyadicDecomposition {
            a: f.a,
            diam: f.diam,
            root: look(f.root)?,
            k_min: f.k_min,
            nets,
            parent,
            member,
            ids: f.points,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecompFile {
    #[serde(rename = "A")]
    a: f64,
    diam: f64,
    root: i64,
    k_min: i32,
    points: Vec<i64>,
    levels: Vec<LevelFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelFile {
    k: i32,
    net: Vec<i64>,
    parents: Vec<[i64; 2]>,
    cubes: Vec<i64>,
}

pub fn build_decomposition(space: &FinitePointMetric, x0: usize, a: f64) -> Result<DyadicDecomposition> {
    if !(a >= 8.0) || !a.is_finite() {
        return Err(Error::InvalidArgument("A must be at least 8".into()));
    }
    let n = space.len();
    if x0 >= n {
        return Err(Error::UnknownPoint(x0));
    }
    let diam = space.diam();
    let all: Vec<usize> = (0..n).collect();
    let k_min = -1;
    let mut nets = vec![vec![x0]];
    let mut k = k_min;
    while nets.last().unwrap().len() < n {
        k += 1;
        let sep = diam * a.powi(-k);
        let prev = nets.last().unwrap().clone();
        nets.push(space.greedy_net(&all, sep, &prev));
    }
    if n == 1 {
        nets.push(vec![x0]);
    }
    let levels = nets.len();
    let mut parent = vec![vec![usize::MAX; n]; levels];
    for l in 1..levels {
        let mut coarse = nets[l - 1].clone();
        coarse.sort_unstable();
        for &p in &nets[l] {
            let mut best = coarse[0];
            for &q in &coarse {
                if space.d(p, q) < space.d(p, best) {
                    best = q;
                }
            }
            parent[l][p] = best;
        }
    }
    let mut member = vec![vec![0usize; n]; levels];
    member[levels - 1] = (0..n).collect();
    for l in (0..levels - 1).rev() {
        for p in 0..n {
            member[l][p] = parent[l + 1][member[l + 1][p]];
        }
    }
    Ok(DyadicDecomposition { a, diam, root: x0, k_min, nets, parent, member, ids: space.ids().to_vec() })
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub pass: bool,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub properties: Vec<PropertyCheck>,
    pub c_m: usize,
    pub min_successors_from_k0: Option<usize>,
    pub k0: Option<i32>,
    pub k_max: i32,
}

impl DecompositionReport {
    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Checks partition, nesting, inner/outer balls, net nesting, parent
/// consistency, successor bounds, the k0 estimate and root persistence.
pub fn verify_decomposition(dec: &DyadicDecomposition, space: &FinitePointMetric) -> DecompositionReport {
    let n = space.len();
    let ca = c_a(dec.a);
    let cca = big_c_a(dec.a);
    let mut props = vec![];
    let mut check =
        |name: &'static str, w: Option<String>| props.push(PropertyCheck { name, pass: w.is_none(), witness: w });
    let levels: Vec<i32> = (dec.k_min..=dec.k_max()).collect();
    let in_net = |k: i32| {
        let mut m = vec![false; n];
        for &p in dec.net(k) {
            if p < n {
                m[p] = true;
            }
        }
        m
    };
    let shape_ok = dec.member.iter().all(|r| r.len() == n && r.iter().all(|&c| c < n))
        && dec.parent.iter().all(|r| r.len() == n)
        && dec.nets.iter().all(|r| r.iter().all(|&p| p < n))
        && dec.root < n;
    if !shape_ok {
        check("a_partition", Some("arrays do not match the point set".into()));
        return DecompositionReport {
            properties: props,
            c_m: 0,
            min_successors_from_k0: None,
            k0: None,
            k_max: dec.k_max(),
        };
    }

    // (a) partition: every point in a cube whose centre is a net point of that level,
    // and every centre lies in its own cube
    let mut w = None;
    for &k in &levels {
        let nm = in_net(k);
        for p in 0..n {
            let c = dec.cube_of(k, p);
            if !nm[c] {
                w = Some(format!("level {k}: point {} assigned to non-net centre {}", dec.ids[p], dec.ids[c]));
                break;
            }
        }
        for &x in dec.net(k) {
            if dec.cube_of(k, x) != x {
                w = Some(format!("level {k}: centre {} not in its own cube", dec.ids[x]));
            }
        }
        if w.is_some() {
            break;
        }
    }
    check("a_partition", w);

    // (b) nesting through the parent map
    let mut w = None;
    'b: for &k in &levels[..levels.len() - 1] {
        for p in 0..n {
            let fine = dec.cube_of(k + 1, p);
            let par = dec.parent_of(k + 1, fine);
            if par != dec.cube_of(k, p) {
                let shown = if par == usize::MAX { "none".to_string() } else { dec.ids[par].to_string() };
                w = Some(format!(
                    "level {} cube {} (parent {}) meets level {k} cube {}",
                    k + 1,
                    dec.ids[fine],
                    shown,
                    dec.ids[dec.cube_of(k, p)]
                ));
                break 'b;
            }
        }
    }
    check("b_nesting", w);

    // (c) inner and outer balls
    let mut w = None;
    'c: for &k in &levels {
        let s = dec.scale(k);
        for &x in dec.net(k) {
            for y in 0..n {
                let d = space.d(x, y);
                let inside = dec.cube_of(k, y) == x;
                if d < ca * s && !inside {
                    w = Some(format!("level {k}: inner ball of {} misses {}", dec.ids[x], dec.ids[y]));
                    break 'c;
                }
                if inside && d > cca * s {
                    w = Some(format!("level {k}: cube {} reaches {} beyond C_A", dec.ids[x], dec.ids[y]));
                    break 'c;
                }
            }
        }
    }
    check("c_inner_outer_ball", w);

    // (d) nested nets containing the root
    let mut w = None;
    for &k in &levels {
        if !dec.net(k).contains(&dec.root) {
            w = Some(format!("root missing at level {k}"));
            break;
        }
        if k > dec.k_min {
            let nm = in_net(k);
            if let Some(&p) = dec.net(k - 1).iter().find(|&&p| !nm[p]) {
                w = Some(format!("net point {} of level {} missing at level {k}", dec.ids[p], k - 1));
                break;
            }
        }
    }
    check("d_nested_nets", w);

    // (e) partial order: coarse net points are their own parents
    let mut w = None;
    'e: for &k in &levels[1..] {
        for &p in dec.net(k) {
            let par = dec.parent_of(k, p);
            if par == usize::MAX || !in_net(k - 1)[par] {
                w = Some(format!("level {k}: point {} has no valid parent", dec.ids[p]));
                break 'e;
            }
        }
        for &p in dec.net(k - 1) {
            if dec.parent_of(k, p) != p {
                w = Some(format!("level {k}: coarse point {} not its own parent", dec.ids[p]));
                break 'e;
            }
        }
    }
    check("e_partial_order", w);

    // (f), (g) successor counts and distances
    let k0 = dec.k0();
    let mut c_m = 0;
    let mut min_from_k0: Option<usize> = None;
    let mut wf = None;
    let mut wg = None;
    for &k in &levels[..levels.len() - 1] {
        let s = dec.scale(k);
        for &x in dec.net(k) {
            let succ = dec.successors(k, x);
            c_m = c_m.max(succ.len());
            if let Some(&y) = succ.iter().find(|&&y| y != x && space.d(x, y) >= s) {
                wf.get_or_insert(format!("level {k}: successor {} of {} too far", dec.ids[y], dec.ids[x]));
            }
            // a singleton cube refines to itself; (g) concerns cubes that can split
            if let Some(k0) = k0.filter(|_| dec.cube(k, x).len() > 1) {
                if k >= k0 {
                    min_from_k0 = Some(min_from_k0.map_or(succ.len(), |m: usize| m.min(succ.len())));
                    if succ.len() < 2 {
                        wg.get_or_insert(format!("level {k}: cube {} has {} successor(s)", dec.ids[x], succ.len()));
                    }
                }
            }
        }
    }
    check("f_successor_bound", wf);
    check("g_two_successors", wg);

    let w = match k0 {
        Some(k0) => {
            let lo = ca * dec.diam * dec.a.powi(-k0);
            let hi = 2.0 * cca * dec.diam * dec.a.powi(1 - k0);
            (!(lo <= dec.diam && dec.diam <= hi)).then(|| format!("k0 = {k0} violates the diameter estimate"))
        }
        None => None,
    };
    check("k0_estimate", w);

    let w = levels
        .iter()
        .find(|&&k| dec.cube_of(k, dec.root) != dec.root)
        .map(|k| format!("level {k}: root cube not centred at the root"));
    check("h_root_cube", w);

    DecompositionReport { properties: props, c_m, min_successors_from_k0: min_from_k0, k0, k_max: dec.k_max() }
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityTable {
    /// level → (net point → c_k)
    pub levels: BTreeMap<i32, BTreeMap<usize, f64>>,
    pub skipped_levels: Vec<i32>,
    /// Within-level comparability over pairs at distance ≤ 4·scale(k).
    pub c1_within: f64,
    /// Parent/child comparability.
    pub c1_parent: f64,
    /// 1 − max c_k(x)/Σ_{S_k(x)} c_{k+1}; `None` without two consecutive levels.
    pub delta_hat: Option<f64>,
    /// Per level k: max c_k(x)/Σ c_{k+1}(y).
    pub esp_ratio: BTreeMap<i32, f64>,
}

impl CapacityTable {
    pub fn c(&self, k: i32, x: usize) -> Option<f64> {
        self.levels.get(&k).and_then(|l| l.get(&x)).copied()
    }

    pub fn c1(&self) -> f64 {
        self.c1_within.max(self.c1_parent)
    }
}

/// c_k(x) = Cap_{B(x, scale(k−1))}(Q_k(x)) for k ≥ k0 + 2.
pub fn cube_capacities(dec: &DyadicDecomposition, space: &FinitePointMetric, net: &Network) -> Result<CapacityTable> {
    let n = space.len();
    let mut levels = BTreeMap::new();
    let mut skipped = vec![];
    if let Some(k0) = dec.k0() {
        for k in (k0 + 2)..=dec.k_max() {
            let cubes = dec.cubes(k);
            let r = dec.scale(k - 1);
            let vals: Vec<Option<(usize, f64)>> = cubes
                .par_iter()
                .map(|(&x, q)| {
                    let ball = space.ball(x, r);
                    if ball.len() == n {
                        return None;
                    }
                    net.cap(&ball, q).ok().map(|c| (x, c))
                })
                .collect();
            if vals.iter().any(|v| v.is_none()) {
                skipped.push(k);
                continue;
            }
            levels.insert(k, vals.into_iter().map(|v| v.unwrap()).collect::<BTreeMap<_, _>>());
        }
    }
    let mut c1w = 1.0f64;
    for (&k, tab) in &levels {
        let s = dec.scale(k);
        for (&x, &cx) in tab {
            for (&y, &cy) in tab {
                if space.d(x, y) <= 4.0 * s {
                    c1w = c1w.max(cx / cy);
                }
            }
        }
    }
    let mut c1p = 1.0f64;
    let mut worst = f64::NEG_INFINITY;
    let mut esp = BTreeMap::new();
    for (&k, tab) in &levels {
        let Some(next) = levels.get(&(k + 1)) else { continue };
        let mut lvl = f64::NEG_INFINITY;
        for (&x, &cx) in tab {
            let succ = dec.successors(k, x);
            let sum: f64 = succ.iter().map(|y| next[y]).sum();
            for y in &succ {
                c1p = c1p.max(next[y] / cx).max(cx / next[y]);
            }
            lvl = lvl.max(cx / sum);
        }
        esp.insert(k, lvl);
        worst = worst.max(lvl);
    }
    let delta_hat = (worst > f64::NEG_INFINITY).then_some(1.0 - worst);
    Ok(CapacityTable { levels, skipped_levels: skipped, c1_within: c1w, c1_parent: c1p, delta_hat, esp_ratio: esp })
}
