//! Quasi-interpolation quadrature rules on the support of a B-spline, for
//! smooth integrands and for integrands with a logarithmic factor.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::{DMatrix, DVector};

use super::moments::{log_monomial_moments, Precision};
use crate::error::Result;
use crate::hierarchy::{BasisFunction, LevelLadder, MAX_LEVEL};
use crate::quasi_interp::{coefficient_matrix, QISpace};
use crate::splines::{product_knots, spline_product, KnotKind, KnotVector, SplineFunction};

/// Knot pattern (grid offsets), node count and QI degree.
pub type ShapeKey = (Vec<i64>, usize, usize);

/// Polynomial piece of the product basis on one span, as Taylor
/// coefficients in the local variable `v ∈ [0, 1]`.
#[derive(Debug, Clone)]
struct SpanPiece {
    x0: f64,
    dx: f64,
    first: usize,
    coefs: Vec<Vec<f64>>,
}

/// Rule for a B-spline with a given knot pattern, normalised to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct NormalizedRule {
    key: ShapeKey,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Maps integrals of the product basis to node weights (`Cᵀ Gᵀ`).
    ctgt: DMatrix<f64>,
    pieces: Vec<SpanPiece>,
    product: KnotVector,
    product_dim: usize,
    product_degree: usize,
}

/// The B-spline with local knots `u` as a function on `[u_0, u_last]`.
fn local_bspline(u: &[f64], d: usize) -> Result<SplineFunction> {
    let lo = u[0];
    let hi = *u.last().unwrap();
    let m0 = u.iter().filter(|&&x| x == lo).count();
    let mut knots = vec![lo; d + 1];
    knots.extend(u.iter().copied().filter(|&x| x > lo && x < hi));
    knots.extend(std::iter::repeat_n(hi, d + 1));
    let kv = KnotVector::new(knots, d, KnotKind::Open)?;
    let mut coefs = vec![0.0; kv.dim()];
    coefs[d + 1 - m0] = 1.0;
    SplineFunction::new(kv, coefs)
}

impl NormalizedRule {
    pub fn new(pattern: &[i64], n: usize, p: usize) -> Result<Self> {
        let d = pattern.len() - 2;
        let total = *pattern.last().unwrap() as f64;
        let u: Vec<f64> = pattern.iter().map(|&k| k as f64 / total).collect();
        let b = local_bspline(&u, d)?;
        let space = QISpace::new(p, n, 0.0, 1.0)?;
        let qi_kv = space.knot_vector();
        let pi = product_knots(b.knots(), &qi_kv)?;
        let pdim = pi.dim();
        let qdim = space.dim();

        let mut g = DMatrix::zeros(pdim, qdim);
        let mut unit = vec![0.0; qdim];
        for q in 0..qdim {
            unit[q] = 1.0;
            let psi = SplineFunction::new(qi_kv.clone(), unit.clone())?;
            let prod = spline_product(&b, &psi)?;
            g.set_column(q, &DVector::from_column_slice(prod.coefs()));
            unit[q] = 0.0;
        }
        let k = DVector::from_iterator(pdim, (0..pdim).map(|r| pi.integrate_basis(r).unwrap()));
        let c = coefficient_matrix(&space);
        let ctgt = c.transpose() * g.transpose();
        let weights = (&ctgt * k).iter().copied().collect();

        let deg = pi.degree();
        let knots = pi.knots();
        let mut pieces = Vec::new();
        for span in deg..pdim {
            let (x0, x1) = (knots[span], knots[span + 1]);
            if x1 <= x0 {
                continue;
            }
            let dx = x1 - x0;
            let ders = pi.basis_derivatives(span, x0, deg);
            let coefs = (0..=deg)
                .map(|j| {
                    let mut fact = 1.0;
                    let mut scale = 1.0;
                    (0..=deg)
                        .map(|m| {
                            if m > 0 {
                                fact *= m as f64;
                                scale *= dx;
                            }
                            ders[m][j] * scale / fact
                        })
                        .collect()
                })
                .collect();
            pieces.push(SpanPiece {
                x0,
                dx,
                first: span - deg,
                coefs,
            });
        }

        Ok(Self {
            key: (pattern.to_vec(), n, p),
            nodes: space.nodes(),
            weights,
            ctgt,
            pieces,
            product: pi.clone(),
            product_dim: pdim,
            product_degree: deg,
        })
    }

    pub fn key(&self) -> &ShapeKey {
        &self.key
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for `∫_0^1 B(u) g(u) du`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Knot vector of the product space on `[0, 1]`.
    pub fn product_space(&self) -> &KnotVector {
        &self.product
    }

    pub fn product_dim(&self) -> usize {
        self.product_dim
    }

    /// `∫_0^1 π_r(u) log|u − σ| du` for every product basis function.
    pub fn product_moments(&self, sigma: f64, precision: Precision) -> (Vec<f64>, bool) {
        let mut mu = vec![0.0; self.product_dim];
        let mut flagged = false;
        let deg = self.product_degree;
        for piece in &self.pieces {
            let local = (sigma - piece.x0) / piece.dx;
            let (mm, f) = log_monomial_moments(deg, local, precision);
            flagged |= f;
            let ld = piece.dx.ln();
            for (j, c) in piece.coefs.iter().enumerate() {
                let mut acc = 0.0;
                for (m, cm) in c.iter().enumerate() {
                    acc += cm * (ld / (m + 1) as f64 + mm[m]);
                }
                mu[piece.first + j] += piece.dx * acc;
            }
        }
        (mu, flagged)
    }

    /// Weights for `∫_0^1 B(u) g(u) log|u − σ| du`.
    pub fn log_weights(&self, sigma: f64, precision: Precision) -> (Vec<f64>, bool) {
        let (mu, flagged) = self.product_moments(sigma, precision);
        let eta = &self.ctgt * DVector::from_vec(mu);
        (eta.iter().copied().collect(), flagged)
    }
}

/// Shared cache of normalised rules.
#[derive(Debug, Default)]
pub struct RuleCache {
    map: DashMap<ShapeKey, Arc<NormalizedRule>>,
}

impl RuleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, pattern: &[i64], n: usize, p: usize) -> Result<Arc<NormalizedRule>> {
        let key = (pattern.to_vec(), n, p);
        if let Some(r) = self.map.get(&key) {
            return Ok(r.clone());
        }
        let rule = Arc::new(NormalizedRule::new(pattern, n, p)?);
        Ok(self.map.entry(key).or_insert(rule).clone())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Exact rational location `num / den` of a source relative to a support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RationalSigma {
    pub num: i128,
    pub den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl RationalSigma {
    pub fn new(num: i128, den: i128) -> Self {
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Self {
            num: s * num / g,
            den: s * den / g,
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn shifted(&self, num: i128, den: i128) -> Self {
        Self::new(self.num * den + num * self.den, self.den * den)
    }
}

/// Memo of normalised log weights keyed by rule shape and exact source
/// position.
#[derive(Debug)]
pub struct MomentTable {
    precision: Precision,
    map: DashMap<(ShapeKey, RationalSigma), Arc<(Vec<f64>, bool)>>,
    flagged: AtomicUsize,
}

impl MomentTable {
    pub fn new(precision: Precision) -> Self {
        Self {
            precision,
            map: DashMap::new(),
            flagged: AtomicUsize::new(0),
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Number of distinct entries whose error estimate was flagged.
    pub fn flagged(&self) -> usize {
        self.flagged.load(Ordering::Relaxed)
    }

    pub fn log_weights(&self, rule: &NormalizedRule, sigma: RationalSigma) -> Arc<(Vec<f64>, bool)> {
        let key = (rule.key().clone(), sigma);
        if let Some(v) = self.map.get(&key) {
            return v.clone();
        }
        let (eta, flag) = rule.log_weights(sigma.value(), self.precision);
        if flag {
            self.flagged.fetch_add(1, Ordering::Relaxed);
        }
        self.map.entry(key).or_insert(Arc::new((eta, flag))).clone()
    }
}

/// A rule placed on the support `[lo, lo + L]` of a basis function.
#[derive(Debug, Clone)]
pub struct SupportRule {
    rule: Arc<NormalizedRule>,
    lo: f64,
    len: f64,
    int_lo: i64,
    int_len: i64,
    period: Option<(f64, i64)>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// A source point `s`, with its exact position `num / den` in integer
/// coordinates when it is grid-aligned.
#[derive(Debug, Clone, Copy)]
pub struct Source {
    pub s: f64,
    pub exact: Option<(i128, i128)>,
}

impl Source {
    pub fn float(s: f64) -> Self {
        Self { s, exact: None }
    }

    /// Node `k` of `n` on a support starting at `int_lo` of length `int_len`.
    pub fn node(s: f64, int_lo: i64, int_len: i64, k: usize, n: usize) -> Self {
        Self {
            s,
            exact: Some((
                n as i128 * int_lo as i128 + k as i128 * int_len as i128,
                n as i128,
            )),
        }
    }
}

impl SupportRule {
    pub fn new(f: &BasisFunction, ladder: &LevelLadder, n: usize, p: usize, cache: &RuleCache) -> Result<Self> {
        let rule = cache.get(&f.shape(), n, p)?;
        let (lo, hi) = f.support();
        let len = hi - lo;
        let nodes = rule.nodes().iter().map(|&u| lo + len * u).collect();
        let weights = rule.weights().iter().map(|&w| len * w).collect();
        let period = ladder.is_periodic().then(|| {
            let (a, b) = ladder.domain();
            (b - a, (ladder.base_cells() as i64) << MAX_LEVEL)
        });
        Ok(Self {
            rule,
            lo,
            len,
            int_lo: f.int_start(),
            int_len: f.int_end() - f.int_start(),
            period,
            nodes,
            weights,
        })
    }

    pub fn rule(&self) -> &NormalizedRule {
        &self.rule
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.lo + self.len)
    }

    pub fn center(&self) -> f64 {
        self.lo + 0.5 * self.len
    }

    pub fn len(&self) -> f64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0.0
    }

    pub fn int_start(&self) -> i64 {
        self.int_lo
    }

    pub fn int_len(&self) -> i64 {
        self.int_len
    }

    /// Nodes `lo + L k / n`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for `∫ B g`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of periods by which the support is moved to lie closest to
    /// `target` (always zero on open curves).
    pub fn wraps_towards(&self, target: f64) -> i64 {
        match self.period {
            Some((g, _)) => ((target - self.center()) / g).round() as i64,
            None => 0,
        }
    }

    /// Relative position `(s − lo − wγ) / L` of a source.
    pub fn sigma(&self, s: f64, wraps: i64) -> f64 {
        let shift = self.period.map_or(0.0, |(g, _)| wraps as f64 * g);
        (s - self.lo - shift) / self.len
    }

    /// Whether some source image lies within one support length of the
    /// support moved by `wraps` periods.
    pub fn is_near(&self, s: f64, wraps: i64) -> bool {
        let sigma = self.sigma(s, wraps);
        let near = |x: f64| (-1.0..=2.0).contains(&x);
        match self.period {
            Some((g, _)) => [-1.0, 0.0, 1.0].iter().any(|m| near(sigma + m * g / self.len)),
            None => near(sigma),
        }
    }

    /// Weights for `∫ B(t) g(t) log δ(s, t) dt` over the support moved by
    /// `wraps` periods. On closed curves `δ` carries the extra factors
    /// `|x ∓ γ| / γ`, which add two more sources.
    pub fn log_weights(
        &self,
        src: Source,
        wraps: i64,
        table: Option<&MomentTable>,
        precision: Precision,
    ) -> (Vec<f64>, bool) {
        let l = self.len;
        let sigma = self.sigma(src.s, wraps);
        let exact = src.exact.map(|(num, den)| {
            let base = self.int_lo as i128 + self.period.map_or(0, |(_, gi)| wraps as i128 * gi as i128);
            RationalSigma::new(num - den * base, den * self.int_len as i128)
        });
        let mut sources = vec![(sigma, exact)];
        let mut constant = l.ln();
        if let Some((g, gi)) = self.period {
            constant = 3.0 * l.ln() - 2.0 * g.ln();
            for m in [-1i128, 1] {
                sources.push((
                    sigma + m as f64 * g / l,
                    exact.map(|e| e.shifted(m * gi as i128, self.int_len as i128)),
                ));
            }
        }
        let mut out: Vec<f64> = self.rule.weights().iter().map(|w| constant * w).collect();
        let mut flagged = false;
        for (sg, key) in sources {
            let (eta, f) = match (key, table) {
                (Some(key), Some(t)) => {
                    let v = t.log_weights(&self.rule, key);
                    (v.0.clone(), v.1)
                }
                _ => self.rule.log_weights(sg, precision),
            };
            flagged |= f;
            for (o, e) in out.iter_mut().zip(&eta) {
                *o += e;
            }
        }
        for o in out.iter_mut() {
            *o *= l;
        }
        (out, flagged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss;
    use crate::splines::eval_local_bspline;
    use approx::assert_abs_diff_eq;

    /// Graded Gauss on the pieces between knots and the singularity.
    fn log_oracle(u: &[f64], g: impl Fn(f64) -> f64, sigma: f64) -> f64 {
        let mut cuts: Vec<f64> = u.to_vec();
        if sigma > 0.0 && sigma < 1.0 {
            cuts.push(sigma);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            for (end, other) in [(lo, mid), (hi, mid)] {
                total += gauss::integrate(48, 0.0, 1.0, |v| {
                    let q = 6;
                    let len = (other - end).abs();
                    let r = len * v.powi(q);
                    let dr = len * q as f64 * v.powi(q - 1);
                    let x = end + (other - end).signum() * r;
                    let dist = if end == sigma { r } else { (x - sigma).abs() };
                    dr * eval_local_bspline(u, x) * g(x) * dist.ln()
                });
            }
        }
        total
    }

    #[test]
    fn smooth_weights_integrate_quadratics() {
        for (pattern, d) in [(vec![0, 1, 2, 3], 2), (vec![0, 0, 0, 1], 2), (vec![0, 1, 2, 3, 4], 3)] {
            let rule = NormalizedRule::new(&pattern, 6, 2).unwrap();
            let total = *pattern.last().unwrap() as f64;
            let u: Vec<f64> = pattern.iter().map(|&k| k as f64 / total).collect();
            for m in 0..=2 {
                let approx: f64 = rule
                    .nodes()
                    .iter()
                    .zip(rule.weights())
                    .map(|(x, w)| w * x.powi(m))
                    .sum();
                let exact: f64 = u
                    .windows(2)
                    .filter(|w| w[1] > w[0])
                    .map(|w| gauss::integrate(8, w[0], w[1], |x| eval_local_bspline(&u, x) * x.powi(m)))
                    .sum();
                assert_abs_diff_eq!(approx, exact, epsilon = 1e-14);
            }
            let sum: f64 = rule.weights().iter().sum();
            assert_abs_diff_eq!(sum, 1.0 / (d + 1) as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn log_weights_exact_for_quadratics() {
        let pattern = vec![0, 1, 2, 3];
        let u = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for p in [2, 3] {
            let rule = NormalizedRule::new(&pattern, 6, p).unwrap();
            for &sigma in &[0.0, 0.2, 1.0 / 3.0, 0.5, 1.0, 1.4, -0.7, 2.0, 3.5] {
                for prec in [Precision::Double, Precision::Extended] {
                    let (eta, flag) = rule.log_weights(sigma, prec);
                    assert!(!flag);
                    for m in 0..=2 {
                        let approx: f64 = rule.nodes().iter().zip(&eta).map(|(x, e)| e * x.powi(m)).sum();
                        let exact = log_oracle(&u, |x| x.powi(m), sigma);
                        assert_abs_diff_eq!(approx, exact, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rational_sigma_is_reduced() {
        let s = RationalSigma::new(6, -4);
        assert_eq!((s.num, s.den), (-3, 2));
        assert_eq!(s.shifted(1, 2), RationalSigma::new(-1, 1));
    }

    #[test]
    fn table_matches_direct_and_caches() {
        let table = MomentTable::new(Precision::Extended);
        let rule = NormalizedRule::new(&[0, 1, 2, 3], 5, 2).unwrap();
        let key = RationalSigma::new(2, 5);
        let a = table.log_weights(&rule, key);
        let b = table.log_weights(&rule, key);
        assert_eq!(table.len(), 1);
        assert_eq!(a.0, b.0);
        let (direct, _) = rule.log_weights(0.4, Precision::Extended);
        for (x, y) in a.0.iter().zip(&direct) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }
}
