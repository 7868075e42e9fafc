//! Sparse symmetric positive definite solves.
//!
//! Direct path: reverse Cuthill–McKee ordering followed by an envelope
//! (skyline) Cholesky factorization. Above [`DIRECT_LIMIT`] unknowns a Jacobi
//! preconditioned conjugate gradient is used instead.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use std::collections::VecDeque;

pub const DIRECT_LIMIT: usize = 50_000;
pub const CG_TOL: f64 = 1e-12;

/// Symmetric matrix in CSR form with both triangles stored.
#[derive(Debug, Clone)]
pub struct SymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl SymMatrix {
    /// Builds from (row, col, value) triplets; only one triangle (or both,
    /// consistently) may be given for off-diagonal entries. Duplicates are summed.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> SymMatrix {
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *val.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col.push(j);
            val.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SymMatrix { n, row_ptr, col, val }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col[p], self.val[p]))
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.row(i).find(|&(j, _)| j == i).map(|(_, v)| v).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v * x[j];
            }
            y[i] = s;
        }
    }
}

/// Reverse Cuthill–McKee ordering. Returns `perm` with `perm[new] = old`.
pub fn rcm(a: &SymMatrix) -> Vec<usize> {
    let n = a.dim();
    let deg: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_levels = |start: usize, visited: &Vec<bool>| -> (Vec<usize>, usize) {
        // returns (vertices in BFS order, eccentricity)
        let mut dist = vec![usize::MAX; n];
        let mut q = VecDeque::new();
        let mut out = Vec::new();
        dist[start] = 0;
        q.push_back(start);
        let mut ecc = 0;
        while let Some(u) = q.pop_front() {
            out.push(u);
            ecc = ecc.max(dist[u]);
            for (v, _) in a.row(u) {
                if v != u && !visited[v] && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        let last_level: Vec<usize> = out.iter().copied().filter(|&u| dist[u] == ecc).collect();
        (last_level, ecc)
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start (George–Liu)
        let mut start = seed;
        let (mut last, mut ecc) = bfs_levels(start, &visited);
        for _ in 0..8 {
            let cand = *last.iter().min_by_key(|&&u| (deg[u], u)).unwrap();
            let (l2, e2) = bfs_levels(cand, &visited);
            if e2 > ecc {
                start = cand;
                last = l2;
                ecc = e2;
            } else {
                break;
            }
        }
        let mut q = VecDeque::new();
        visited[start] = true;
        q.push_back(start);
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = a.row(u).map(|(v, _)| v).filter(|&v| v != u && !visited[v]).collect();
            nb.sort_by_key(|&v| (deg[v], v));
            for v in nb {
                visited[v] = true;
                q.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Skyline {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl Skyline {
    pub fn factor(a: &SymMatrix) -> Result<Skyline> {
        let n = a.dim();
        let perm = rcm(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0usize; n];
        for i in 0..n {
            let old = perm[i];
            let mut f = i;
            for (j, _) in a.row(old) {
                f = f.min(inv[j]);
            }
            first[i] = f;
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jn = inv[j];
                if jn <= i {
                    data[start[i] + jn - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let ri = start[i];
            for j in fi..=i {
                let fj = first[j];
                let rj = start[j];
                let k0 = fi.max(fj);
                let mut s = data[ri + j - fi];
                for k in k0..j {
                    s -= data[ri + k - fi] * data[rj + k - fj];
                }
                if j < i {
                    data[ri + j - fi] = s / data[rj + j - fj];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::InvalidArgument("matrix is not positive definite".into()));
                    }
                    data[ri + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Skyline { perm, first, start, data })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.start[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[ri + k - fi] * y[k];
            }
            y[i] = s / self.data[ri + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.start[i];
            y[i] /= self.data[ri + i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= self.data[ri + k - fi] * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradient.
pub fn cg(a: &SymMatrix, b: &[f64], tol: f64) -> Vec<f64> {
    let n = a.dim();
    let dinv: Vec<f64> = (0..n).map(|i| 1.0 / a.diag(i)).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return x;
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..(10 * n + 100) {
        a.matvec(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= tol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// A factorization reusable across right-hand sides.
#[derive(Debug, Clone)]
pub enum Factor {
    Direct(Skyline),
    Iterative(SymMatrix),
}

impl Factor {
    pub fn new(a: SymMatrix) -> Result<Factor> {
        if a.dim() <= DIRECT_LIMIT {
            Ok(Factor::Direct(Skyline::factor(&a)?))
        } else {
            Ok(Factor::Iterative(a))
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            Factor::Direct(s) => s.solve(b),
            Factor::Iterative(a) => cg(a, b, CG_TOL),
        }
    }
}

/// Largest eigenvalue λ of `M v = λ Q v` where `Q` is positive definite
/// (dense). Returns `None` when `Q` is not positive definite.
pub fn max_generalized_eigen(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    if n == 0 {
        return Some(0.0);
    }
    if n == 1 {
        return (q[(0, 0)] > 0.0).then(|| m[(0, 0)] / q[(0, 0)]);
    }
    let chol = q.clone().cholesky()?;
    let l = chol.l();
    // C = L⁻¹ M L⁻ᵀ
    let linv_m = l.solve_lower_triangular(m)?;
    let c = l.solve_lower_triangular(&linv_m.transpose())?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    eig.eigenvalues.iter().cloned().fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
}

/// Largest eigenvalue of a symmetric dense matrix.
pub fn max_eigen(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let c = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(c).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}
