//! Derivative-free spline quasi-interpolation on uniform nodes and the
//! quadrature rule obtained by integrating the quasi-interpolant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::splines::{KnotKind, KnotVector, SplineFunction};

/// Degree-`p` spline space on `n` uniform cells of `[a, b]` with open knots.
/// The `n + 1` breakpoints are the quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QISpace {
    p: usize,
    n: usize,
    a: f64,
    b: f64,
}

impl QISpace {
    pub fn new(p: usize, n: usize, a: f64, b: f64) -> Result<Self> {
        if p == 0 || n < p {
            return Err(Error::TooFewNodes { n, p });
        }
        if !(b > a) {
            return Err(Error::InvalidInput("empty interval".into()));
        }
        Ok(Self { p, n, a, b })
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Number of B-splines, `n + p`.
    pub fn dim(&self) -> usize {
        self.n + self.p
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n {
            self.b
        } else {
            self.a + (self.b - self.a) * (k as f64 / self.n as f64)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.node(k)).collect()
    }

    /// Extended knot `τ_k`, `k = -p..=n+p`.
    fn tau(&self, k: i64) -> f64 {
        self.node(k.clamp(0, self.n as i64) as usize)
    }

    pub fn knot_vector(&self) -> KnotVector {
        KnotVector::new(
            (-(self.p as i64)..=(self.n + self.p) as i64)
                .map(|k| self.tau(k))
                .collect(),
            self.p,
            KnotKind::Open,
        )
        .expect("open uniform knots are valid")
    }

    /// `∫ B_j` for all `n + p` B-splines.
    pub fn basis_integrals(&self) -> Vec<f64> {
        let p = self.p as i64;
        (0..self.dim() as i64)
            .map(|jj| {
                let j = jj - p;
                (self.tau(j + p + 1) - self.tau(j)) / (p + 1) as f64
            })
            .collect()
    }
}

/// Second-order finite-difference derivatives at uniform nodes.
pub fn fd_derivatives(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len() - 1;
    (0..=n)
        .map(|k| {
            if k == 0 {
                (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
            } else if k == n {
                (3.0 * values[n] - 4.0 * values[n - 1] + values[n - 2]) / (2.0 * h)
            } else {
                (values[k + 1] - values[k - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Spline coefficients `λ_{-p}(g) .. λ_{n-1}(g)` of the quasi-interpolant.
///
/// For `p = 2` the two-point Hermite formulas are used, with `derivs` when
/// given and finite differences otherwise. Other degrees are derivative-free
/// and reject `derivs`.
pub fn qi_coefficients(space: &QISpace, values: &[f64], derivs: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = space.n;
    if values.len() != n + 1 {
        return Err(Error::InvalidInput(format!(
            "expected {} node values, got {}",
            n + 1,
            values.len()
        )));
    }
    if let Some(d) = derivs {
        if space.p != 2 {
            return Err(Error::InvalidInput(
                "derivative data is only used by the quadratic scheme".into(),
            ));
        }
        if d.len() != n + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} derivative values, got {}",
                n + 1,
                d.len()
            )));
        }
    }
    if space.p == 2 {
        let fd;
        let dg = match derivs {
            Some(d) => d,
            None => {
                fd = fd_derivatives(values, space.h());
                &fd
            }
        };
        Ok(quadratic_hermite(space, values, dg))
    } else {
        Ok(blossom_coefficients(space, values))
    }
}

fn quadratic_hermite(space: &QISpace, g: &[f64], dg: &[f64]) -> Vec<f64> {
    let n = space.n;
    let mut lam = Vec::with_capacity(n + 2);
    lam.push(g[0]);
    for j in -1..=(n as i64 - 2) {
        let k = (j + 1) as usize;
        let span = space.tau(j + 2) - space.tau(j + 1);
        lam.push(0.5 * (g[k] + g[k + 1]) - span / 4.0 * (-dg[k] + dg[k + 1]));
    }
    lam.push(g[n]);
    lam
}

/// Coefficients from the blossoms of local interpolating polynomials. Each
/// `λ_j` averages the two degree-`p` interpolants on the node windows
/// starting at `j` and `j + 1` (moved inside `[0, n]`), which keeps the
/// scheme symmetric on uniform nodes.
fn blossom_coefficients(space: &QISpace, g: &[f64]) -> Vec<f64> {
    let p = space.p as i64;
    let n = space.n as i64;
    let h = space.h();
    (0..n + p)
        .map(|jj| {
            let j = jj - p;
            let center = 0.5 * (space.tau(j) + space.tau(j + p + 1));
            let args: Vec<f64> = (j + 1..=j + p).map(|k| (space.tau(k) - center) / h).collect();
            let w1 = j.clamp(0, n - p);
            let w2 = (j + 1).clamp(0, n - p);
            let b1 = window_blossom(space, g, w1, center, &args);
            if w1 == w2 {
                b1
            } else {
                0.5 * (b1 + window_blossom(space, g, w2, center, &args))
            }
        })
        .collect()
}

/// Blossom at `args` of the interpolant to `g` on nodes `w..=w+p`, with
/// the polynomial written in the scaled variable `x = (t - center) / h`.
fn window_blossom(space: &QISpace, g: &[f64], w: i64, center: f64, args: &[f64]) -> f64 {
    let p = space.p;
    let h = space.h();
    let xs: Vec<f64> = (0..=p)
        .map(|m| (space.node((w as usize) + m) - center) / h)
        .collect();
    let vals: Vec<f64> = (0..=p).map(|m| g[w as usize + m]).collect();
    let coefs = monomial_interpolant(&xs, &vals);
    let e = elementary_symmetric(args);
    let mut binom = 1.0;
    let mut out = 0.0;
    for (r, c) in coefs.iter().enumerate() {
        out += c * e[r] / binom;
        binom = binom * (p - r) as f64 / (r + 1) as f64;
    }
    out
}

/// Monomial coefficients of the polynomial interpolating `(xs, ys)`, via
/// Newton divided differences.
fn monomial_interpolant(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let m = xs.len();
    let mut dd = ys.to_vec();
    for lvl in 1..m {
        for k in (lvl..m).rev() {
            dd[k] = (dd[k] - dd[k - 1]) / (xs[k] - xs[k - lvl]);
        }
    }
    // expand Newton form by Horner
    let mut c = vec![0.0; m];
    c[0] = dd[m - 1];
    for k in (0..m - 1).rev() {
        // c <- c * (x - xs[k]) + dd[k]
        for r in (1..m).rev() {
            c[r] = c[r - 1] - xs[k] * c[r];
        }
        c[0] = dd[k] - xs[k] * c[0];
    }
    c
}

fn elementary_symmetric(x: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; x.len() + 1];
    e[0] = 1.0;
    for (k, &v) in x.iter().enumerate() {
        for r in (1..=k + 1).rev() {
            e[r] += v * e[r - 1];
        }
    }
    e
}

/// The `(n + p) × (n + 1)` matrix mapping node values to QI coefficients.
pub fn coefficient_matrix(space: &QISpace) -> DMatrix<f64> {
    let cols = space.n + 1;
    let mut c = DMatrix::zeros(space.dim(), cols);
    let mut unit = vec![0.0; cols];
    for k in 0..cols {
        unit[k] = 1.0;
        let lam = qi_coefficients(space, &unit, None).expect("sizes match");
        c.set_column(k, &DVector::from_vec(lam));
        unit[k] = 0.0;
    }
    c
}

/// The quasi-interpolant as a spline function.
pub fn qi_spline(space: &QISpace, values: &[f64], derivs: Option<&[f64]>) -> Result<SplineFunction> {
    let coefs = qi_coefficients(space, values, derivs)?;
    SplineFunction::new(space.knot_vector(), coefs)
}

/// Quadrature rule `∫_a^b g ≈ φᵀ g(τ)` with `φ = Cᵀ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct QIRule {
    pub space: QISpace,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QIRule {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, g)| w * g).sum()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, w)| w * f(t))
            .sum()
    }
}

pub fn qi_quadrature(space: &QISpace) -> QIRule {
    let c = coefficient_matrix(space);
    let k = DVector::from_vec(space.basis_integrals());
    let weights = (c.transpose() * k).iter().copied().collect();
    QIRule {
        space: space.clone(),
        nodes: space.nodes(),
        weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_too_few_nodes() {
        assert_eq!(
            QISpace::new(3, 2, 0.0, 1.0),
            Err(Error::TooFewNodes { n: 2, p: 3 })
        );
    }

    #[test]
    fn constants_are_reproduced() {
        for p in 1..=4 {
            let s = QISpace::new(p, 7, 0.0, 1.0).unwrap();
            let lam = qi_coefficients(&s, &[2.5; 8], None).unwrap();
            assert_eq!(lam.len(), 7 + p);
            for l in lam {
                assert_abs_diff_eq!(l, 2.5, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn quadratic_with_exact_derivatives_reproduces_identity() {
        let s = QISpace::new(2, 4, 0.0, 1.0).unwrap();
        let g = s.nodes();
        let dg = vec![1.0; 5];
        let sp = qi_spline(&s, &g, Some(&dg)).unwrap();
        for k in 0..100 {
            let t = k as f64 / 99.0;
            assert_abs_diff_eq!(sp.eval(t).unwrap(), t, epsilon = 1e-13);
        }
    }

    #[test]
    fn derivative_data_only_for_quadratics() {
        let s = QISpace::new(3, 4, 0.0, 1.0).unwrap();
        assert!(qi_coefficients(&s, &[0.0; 5], Some(&[0.0; 5])).is_err());
    }

    #[test]
    fn quadratic_rule_monomials_and_cubic() {
        let s = QISpace::new(2, 6, 0.0, 1.0).unwrap();
        let rule = qi_quadrature(&s);
        for (m, exact) in [(0, 1.0), (1, 0.5), (2, 1.0 / 3.0), (3, 0.25)] {
            assert_abs_diff_eq!(rule.integrate(|t| t.powi(m)), exact, epsilon = 1e-13);
        }
        let w = &rule.weights;
        for j in 0..=6 {
            assert_abs_diff_eq!(w[j], w[6 - j], epsilon = 1e-15);
        }
    }

    #[test]
    fn locality_of_coefficients() {
        let s = QISpace::new(3, 12, 0.0, 1.0).unwrap();
        let c = coefficient_matrix(&s);
        for r in 0..c.nrows() {
            let nz: Vec<usize> = (0..c.ncols()).filter(|&k| c[(r, k)] != 0.0).collect();
            if let (Some(lo), Some(hi)) = (nz.first(), nz.last()) {
                assert!(hi - lo <= s.degree() + 1);
            }
        }
    }
}
