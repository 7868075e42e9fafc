//! Small log-log fitting helpers.

use serde::Serialize;

/// Least-squares slope of y against x. `None` with fewer than two distinct x.
pub fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SlopeFit {
    pub fitted: f64,
    pub min_pointwise: f64,
    pub max_pointwise: f64,
}

/// Least-squares fit plus min/max slopes between consecutive points (sorted by x).
pub fn slope_fit(pts: &[(f64, f64)]) -> Option<SlopeFit> {
    let fitted = ls_slope(pts)?;
    let mut s = pts.to_vec();
    s.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in s.windows(2) {
        if w[1].0 > w[0].0 {
            let k = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            lo = lo.min(k);
            hi = hi.max(k);
        }
    }
    Some(SlopeFit { fitted, min_pointwise: lo, max_pointwise: hi })
}
