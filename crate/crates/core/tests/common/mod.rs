//! Reference computations that avoid the library's own evaluation paths.
#![allow(dead_code)]

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n).unwrap());
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

pub fn integrate(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    gauss(n, a, b).into_iter().map(|(x, w)| w * f(x)).sum()
}

/// Sum of `n`-point rules over consecutive breakpoints.
pub fn integrate_pieces(n: usize, breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    breaks
        .windows(2)
        .filter(|p| p[1] > p[0])
        .map(|p| integrate(n, p[0], p[1], &f))
        .sum()
}

/// Textbook Cox–de Boor recursion for `B_{i,d}` on `knots`, right
/// continuous, with the last nonempty span closed on the right.
pub fn bspline(knots: &[f64], d: usize, i: usize, t: f64) -> f64 {
    let last = *knots.last().unwrap();
    if d == 0 {
        let (a, b) = (knots[i], knots[i + 1]);
        if a < b && ((a <= t && t < b) || (t == last && b == last)) {
            return 1.0;
        }
        return 0.0;
    }
    let mut v = 0.0;
    let den = knots[i + d] - knots[i];
    if den > 0.0 {
        v += (t - knots[i]) / den * bspline(knots, d - 1, i, t);
    }
    let den = knots[i + d + 1] - knots[i + 1];
    if den > 0.0 {
        v += (knots[i + d + 1] - t) / den * bspline(knots, d - 1, i + 1, t);
    }
    v
}

/// `∫_a^b f(t) log|t − σ| dt`, split at `breaks` and at `σ`, with the
/// pieces next to `σ` graded towards it by `t = σ ± r v⁶`.
pub fn log_integral(f: impl Fn(f64) -> f64, breaks: &[f64], sigma: f64) -> f64 {
    const N: usize = 64;
    const Q: i32 = 6;
    let mut pts: Vec<f64> = breaks.to_vec();
    let (a, b) = (pts[0], *pts.last().unwrap());
    if sigma > a && sigma < b {
        pts.push(sigma);
    }
    pts.sort_by(|x, y| x.total_cmp(y));
    pts.dedup();
    let mut total = 0.0;
    for p in pts.windows(2) {
        let (lo, hi) = (p[0], p[1]);
        let len = hi - lo;
        let touches_lo = lo == sigma || (sigma < lo && lo - sigma < len);
        let touches_hi = hi == sigma || (sigma > hi && sigma - hi < len);
        total += if touches_lo {
            // distance measured from σ keeps the logarithm accurate
            let gap = lo - sigma;
            integrate(N, 0.0, 1.0, |v| {
                let r = len * v.powi(Q);
                let dr = len * Q as f64 * v.powi(Q - 1);
                dr * f(lo + r) * (gap + r).ln()
            })
        } else if touches_hi {
            let gap = sigma - hi;
            integrate(N, 0.0, 1.0, |v| {
                let r = len * v.powi(Q);
                let dr = len * Q as f64 * v.powi(Q - 1);
                dr * f(hi - r) * (gap + r).ln()
            })
        } else {
            integrate(N, lo, hi, |t| f(t) * (t - sigma).abs().ln())
        };
    }
    total
}

/// Least-squares slope of `log y` against `log x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Outward normal of a counter-clockwise curve from its tangent.
pub fn rotate_cw(v: [f64; 2]) -> [f64; 2] {
    [v[1], -v[0]]
}
