//! Least-squares convergence orders from error tables.

use crate::error::{Error, Result};

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("need at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Fit("values must be positive and finite".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    Ok(sxy / sxx)
}

/// Convergence order of `error` against `n_h`, fitted on the last
/// `max(4, ⌈len/2⌉)` rows.
pub fn fit_order(n_h: &[f64], error: &[f64]) -> Result<f64> {
    if n_h.len() != error.len() {
        return Err(Error::Fit("columns differ in length".into()));
    }
    if n_h.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 rows, got {}", n_h.len())));
    }
    let take = 4.max(n_h.len().div_ceil(2));
    let start = n_h.len() - take;
    loglog_slope(&n_h[start..], &error[start..])
}
