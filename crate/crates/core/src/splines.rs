//! Univariate B-spline spaces, B-form curves, spline products and
//! closed-form B-spline integrals.
//!
//! Indices are zero based: a knot vector `t[0..N+d+1]` of degree `d` spans
//! `N` B-splines `B_0..B_{N-1}`, and `B_i` is supported on `[t[i], t[i+d+1]]`.
//! The parametric domain is `[t[d], t[N]]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which two knots are considered equal.
pub const KNOT_TOL: f64 = 1e-14;

/// Speed below which a curve is treated as degenerate.
pub const REGULARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotKind {
    /// End knots repeated `d + 1` times; the curve interpolates its end points.
    Open,
    /// End knot differences repeat periodically; used for closed curves.
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
    kind: KnotKind,
}

/// Distinct interior breakpoints of a knot vector with their multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointPartition {
    /// `a = θ_1 < θ_2 < ... < θ_L = b`.
    pub breakpoints: Vec<f64>,
    /// Multiplicities of `θ_2 .. θ_{L-1}`.
    pub multiplicities: Vec<usize>,
}

impl KnotVector {
    /// Builds and validates a knot vector.
    pub fn new(knots: Vec<f64>, degree: usize, kind: KnotKind) -> Result<Self> {
        let kv = Self::from_raw(knots, degree, kind);
        kv.validate()?;
        Ok(kv)
    }

    /// Builds a knot vector without validation. Used for internally derived
    /// spaces whose structure is correct by construction.
    pub(crate) fn from_raw(knots: Vec<f64>, degree: usize, kind: KnotKind) -> Self {
        Self { knots, degree, kind }
    }

    /// Open knot vector on `[a, b]` with `cells` uniform cells and simple
    /// interior knots.
    pub fn open_uniform(a: f64, b: f64, cells: usize, degree: usize) -> Result<Self> {
        if cells == 0 || b <= a {
            return Err(Error::InvalidKnots("need b > a and at least one cell".into()));
        }
        let h = (b - a) / cells as f64;
        let mut knots = vec![a; degree + 1];
        knots.extend((1..cells).map(|k| a + k as f64 * h));
        knots.extend(std::iter::repeat_n(b, degree + 1));
        Self::new(knots, degree, KnotKind::Open)
    }

    /// Periodic knot vector on `[a, b]` with `cells` uniform cells; the `d`
    /// auxiliary knots on each side continue the uniform spacing.
    pub fn periodic_uniform(a: f64, b: f64, cells: usize, degree: usize) -> Result<Self> {
        if cells == 0 || b <= a {
            return Err(Error::InvalidKnots("need b > a and at least one cell".into()));
        }
        let h = (b - a) / cells as f64;
        let d = degree as i64;
        let knots = (-d..=(cells as i64 + d))
            .map(|k| {
                if k == cells as i64 {
                    b
                } else {
                    a + k as f64 * h
                }
            })
            .collect();
        Self::new(knots, degree, KnotKind::Periodic)
    }

    fn validate(&self) -> Result<()> {
        let d = self.degree;
        let t = &self.knots;
        if t.len() < 2 * d + 2 {
            return Err(Error::InvalidKnots(format!(
                "{} knots cannot carry a degree-{d} space",
                t.len()
            )));
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if t.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let n = self.dim();
        let (a, b) = (t[d], t[n]);
        if b <= a {
            return Err(Error::InvalidKnots("empty parametric domain".into()));
        }
        let tol = KNOT_TOL * (b - a);
        if n > d + 1 && (t[d + 1] - a <= tol || b - t[n - 1] <= tol) {
            return Err(Error::InvalidKnots(
                "interior knot coincides with a domain end".into(),
            ));
        }
        let part = self.breakpoints();
        if let Some(m) = part.multiplicities.iter().find(|&&m| m > d + 1) {
            return Err(Error::InvalidKnots(format!(
                "interior multiplicity {m} exceeds d + 1"
            )));
        }
        if n != d + 1 + part.multiplicities.iter().sum::<usize>() {
            return Err(Error::InvalidKnots("dimension identity violated".into()));
        }
        match self.kind {
            KnotKind::Open => {
                let clamped = t[..d].iter().all(|&x| (x - a).abs() <= tol)
                    && t[n + 1..].iter().all(|&x| (x - b).abs() <= tol);
                if !clamped {
                    return Err(Error::InvalidKnots(
                        "open knot vector must repeat its end knots d + 1 times".into(),
                    ));
                }
            }
            KnotKind::Periodic => {
                for i in 0..2 * d {
                    let left = t[i + 1] - t[i];
                    let right = t[i + n - d + 1] - t[i + n - d];
                    if (left - right).abs() > 1e-12 * (b - a) {
                        return Err(Error::InvalidKnots(format!(
                            "periodic knot differences differ at position {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> KnotKind {
        self.kind
    }

    /// Number of B-splines `N`.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Parametric domain `[a, b] = [t_d, t_N]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.dim()])
    }

    pub fn breakpoints(&self) -> BreakpointPartition {
        let (a, b) = self.domain();
        let tol = KNOT_TOL * (b - a);
        let mut breakpoints = vec![a];
        let mut multiplicities = Vec::new();
        for &x in &self.knots[self.degree + 1..self.dim()] {
            let last = *breakpoints.last().unwrap();
            if breakpoints.len() > 1 && (x - last).abs() <= tol {
                *multiplicities.last_mut().unwrap() += 1;
            } else {
                breakpoints.push(x);
                multiplicities.push(1);
            }
        }
        breakpoints.push(b);
        BreakpointPartition {
            breakpoints,
            multiplicities,
        }
    }

    /// Knot span index `k` with `t_k <= t < t_{k+1}`, `d <= k < N`. The right
    /// end of the domain belongs to the last non-empty span; parameters
    /// outside the domain are clamped.
    pub fn find_span(&self, t: f64) -> usize {
        let d = self.degree;
        let n = self.dim();
        let (a, b) = self.domain();
        if t >= b {
            let mut k = n - 1;
            while k > d && self.knots[k] >= b {
                k -= 1;
            }
            return k;
        }
        if t <= a {
            let mut k = d;
            while k < n - 1 && self.knots[k + 1] <= a {
                k += 1;
            }
            return k;
        }
        // first index with knots[idx] > t, minus one
        let idx = self.knots[..=n].partition_point(|&x| x <= t);
        idx.saturating_sub(1).clamp(d, n - 1)
    }

    /// Like [`Self::find_span`], but a knot belongs to the span on its left.
    pub fn find_span_left(&self, t: f64) -> usize {
        let d = self.degree;
        let n = self.dim();
        if t <= self.domain().0 {
            return self.find_span(t);
        }
        let idx = self.knots[..=n].partition_point(|&x| x < t);
        idx.saturating_sub(1).clamp(d, n - 1)
    }

    fn check_param(&self, t: f64) -> Result<()> {
        let (a, b) = self.domain();
        let tol = KNOT_TOL * (b - a);
        if t.is_nan() || t < a - tol || t > b + tol {
            return Err(Error::OutsideDomain { t, a, b });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        Ok(())
    }

    /// `B_{i,d}(t)` by the Cox–de Boor recursion, with `0/0 := 0` in the
    /// blending weights.
    pub fn eval_basis(&self, i: usize, t: f64) -> Result<f64> {
        self.check_index(i)?;
        self.check_param(t)?;
        let span = self.find_span(t);
        Ok(cox_de_boor(&self.knots, self.degree, i, span, t))
    }

    /// Number of shape functions once the periodic pairs are merged.
    pub fn merged_dim(&self) -> usize {
        match self.kind {
            KnotKind::Open => self.dim(),
            KnotKind::Periodic => self.dim() - self.degree,
        }
    }

    /// Shape function `i` of the merged periodic basis: `B_i + B_{N-d+i}`
    /// for `i < d`, `B_i` otherwise. Identical to [`Self::eval_basis`] for open
    /// knot vectors.
    pub fn eval_merged_basis(&self, i: usize, t: f64) -> Result<f64> {
        if i >= self.merged_dim() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.merged_dim(),
            });
        }
        let mut v = self.eval_basis(i, t)?;
        if self.kind == KnotKind::Periodic && i < self.degree {
            v += self.eval_basis(self.dim() - self.degree + i, t)?;
        }
        Ok(v)
    }

    /// The `d + 1` B-splines that do not vanish on the span containing `t`,
    /// i.e. `B_{k-d}..B_k` for the returned span `k`.
    pub fn basis_values(&self, t: f64) -> (usize, Vec<f64>) {
        let span = self.find_span(t);
        (span, self.basis_values_in_span(span, t))
    }

    /// Values of `B_{span-d}..B_span` at `t`, using the polynomial pieces of
    /// the given span (also outside of it).
    pub fn basis_values_in_span(&self, span: usize, t: f64) -> Vec<f64> {
        let d = self.degree;
        let k = &self.knots;
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = t - k[span + 1 - j];
            right[j] = k[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Derivatives up to order `nder` of `B_{span-d}..B_span` at `t`,
    /// using the polynomial pieces of `span`. Returns `ders[order][j]`.
    pub fn basis_derivatives(&self, span: usize, t: f64, nder: usize) -> Vec<Vec<f64>> {
        let d = self.degree;
        let k = &self.knots;
        let mut ndu = vec![vec![0.0; d + 1]; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        ndu[0][0] = 1.0;
        for j in 1..=d {
            left[j] = t - k[span + 1 - j];
            right[j] = k[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = if ndu[j][r] != 0.0 {
                    ndu[r][j - 1] / ndu[j][r]
                } else {
                    0.0
                };
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; d + 1]; nder + 1];
        for j in 0..=d {
            ders[0][j] = ndu[j][d];
        }
        let inv = |x: f64| if x != 0.0 { 1.0 / x } else { 0.0 };
        let mut a = vec![vec![0.0; d + 1]; 2];
        for r in 0..=d {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=nder.min(d) {
                let mut dsum = 0.0;
                let rk = r as i64 - kk as i64;
                let pk = d - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] * inv(ndu[pk + 1][rk as usize]);
                    dsum = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as i64 - 1 <= pk as i64 { kk - 1 } else { d - r };
                for j in j1..=j2 {
                    let idx = (rk + j as i64) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) * inv(ndu[pk + 1][idx]);
                    dsum += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] * inv(ndu[pk + 1][r]);
                    dsum += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = dsum;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = d as f64;
        for kk in 1..=nder.min(d) {
            for v in ders[kk].iter_mut() {
                *v *= factor;
            }
            factor *= (d - kk) as f64;
        }
        ders
    }

    /// Support `[t_i, t_{i+d+1}]` of `B_i`.
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + self.degree + 1])
    }

    /// `∫ B_{i,d} = L_s / (d + 1)` with `L_s` the support length.
    pub fn integrate_basis(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        let (lo, hi) = self.support(i);
        Ok((hi - lo) / (self.degree + 1) as f64)
    }

    /// Greville abscissa of `B_i`.
    pub fn greville(&self, i: usize) -> f64 {
        let d = self.degree;
        if d == 0 {
            return 0.5 * (self.knots[i] + self.knots[i + 1]);
        }
        let inner = &self.knots[i + 1..=i + d];
        (inner.iter().sum::<f64>() / d as f64).clamp(inner[0], inner[d - 1])
    }

    /// Knot vector of the derivative space (degree `d - 1`).
    fn derivative_knots(&self) -> KnotVector {
        KnotVector::from_raw(
            self.knots[1..self.knots.len() - 1].to_vec(),
            self.degree - 1,
            self.kind,
        )
    }
}

/// Literal Cox–de Boor recursion for a single B-spline; `span` selects the
/// unique degree-0 function equal to one at `t`.
fn cox_de_boor(knots: &[f64], d: usize, i: usize, span: usize, t: f64) -> f64 {
    let omega = |j: usize, r: usize| {
        let den = knots[j + r] - knots[j];
        if den > 0.0 {
            (t - knots[j]) / den
        } else {
            0.0
        }
    };
    let mut vals: Vec<f64> = (i..=i + d)
        .map(|j| if j == span { 1.0 } else { 0.0 })
        .collect();
    for r in 1..=d {
        for (off, j) in (i..=i + d - r).enumerate() {
            vals[off] = omega(j, r) * vals[off] + (1.0 - omega(j + 1, r)) * vals[off + 1];
        }
    }
    vals[0]
}

/// Value of the single B-spline with local knots `knots` (length `d + 2`)
/// at `t`; zero outside `[knots[0], knots[d+1])`. At the right end of the
/// support the left limit is returned when it is nonzero (clamped end).
pub fn eval_local_bspline(knots: &[f64], t: f64) -> f64 {
    let d = knots.len() - 2;
    let (lo, hi) = (knots[0], knots[d + 1]);
    if t < lo || t > hi {
        return 0.0;
    }
    let span = if t >= hi {
        // right end: take the last non-empty interval
        let mut k = d;
        while k > 0 && knots[k] >= hi {
            k -= 1;
        }
        k
    } else {
        knots.partition_point(|&x| x <= t).saturating_sub(1).min(d)
    };
    cox_de_boor(knots, d, 0, span, t)
}

/// Scalar spline in B-form.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFunction {
    knots: KnotVector,
    coefs: Vec<f64>,
}

impl SplineFunction {
    pub fn new(knots: KnotVector, coefs: Vec<f64>) -> Result<Self> {
        if coefs.len() != knots.dim() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a space of dimension {}",
                coefs.len(),
                knots.dim()
            )));
        }
        Ok(Self { knots, coefs })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.knots.check_param(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        let (span, vals) = self.knots.basis_values(t);
        self.combine(span, &vals)
    }

    /// Limit from the left at `t`.
    pub(crate) fn eval_left(&self, t: f64) -> f64 {
        let span = self.knots.find_span_left(t);
        self.combine(span, &self.knots.basis_values_in_span(span, t))
    }

    fn combine(&self, span: usize, vals: &[f64]) -> f64 {
        let d = self.knots.degree;
        vals.iter()
            .enumerate()
            .map(|(j, v)| v * self.coefs[span - d + j])
            .sum()
    }

    /// Derivative as a spline of degree `d - 1`.
    pub fn derivative(&self) -> SplineFunction {
        let d = self.knots.degree;
        if d == 0 {
            let coefs = vec![0.0; self.coefs.len()];
            return SplineFunction {
                knots: self.knots.clone(),
                coefs,
            };
        }
        let t = &self.knots.knots;
        let coefs = (0..self.coefs.len() - 1)
            .map(|i| {
                let den = t[i + d + 1] - t[i + 1];
                if den > 0.0 {
                    d as f64 * (self.coefs[i + 1] - self.coefs[i]) / den
                } else {
                    0.0
                }
            })
            .collect();
        SplineFunction {
            knots: self.knots.derivative_knots(),
            coefs,
        }
    }

    /// `∫_a^b` for open knot vectors; for general vectors, the sum of the
    /// full B-spline integrals weighted by the coefficients.
    pub fn integral(&self) -> f64 {
        self.coefs
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.knots.integrate_basis(i).unwrap_or(0.0))
            .sum()
    }
}

/// Planar spline curve `F(t) = Σ d_i B_{i,d}(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCurve {
    knots: KnotVector,
    control: Vec<[f64; 2]>,
}

impl SplineCurve {
    pub fn new(knots: KnotVector, control: Vec<[f64; 2]>) -> Result<Self> {
        if control.len() != knots.dim() {
            return Err(Error::InvalidControlPoints(format!(
                "{} control points for a space of dimension {}",
                control.len(),
                knots.dim()
            )));
        }
        if knots.kind == KnotKind::Periodic {
            let d = knots.degree;
            let n = control.len();
            for i in 0..d {
                let (p, q) = (control[i], control[n - d + i]);
                if (p[0] - q[0]).abs() > 1e-12 || (p[1] - q[1]).abs() > 1e-12 {
                    return Err(Error::InvalidControlPoints(format!(
                        "periodic curve: control point {i} differs from {}",
                        n - d + i
                    )));
                }
            }
        }
        Ok(Self { knots, control })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.control
    }

    pub fn degree(&self) -> usize {
        self.knots.degree
    }

    pub fn domain(&self) -> (f64, f64) {
        self.knots.domain()
    }

    pub fn is_closed(&self) -> bool {
        self.knots.kind == KnotKind::Periodic
    }

    pub fn eval(&self, t: f64) -> Result<[f64; 2]> {
        self.knots.check_param(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> [f64; 2] {
        let d = self.knots.degree;
        let (span, vals) = self.knots.basis_values(t);
        let mut p = [0.0; 2];
        for (j, v) in vals.iter().enumerate() {
            let c = self.control[span - d + j];
            p[0] += v * c[0];
            p[1] += v * c[1];
        }
        p
    }

    /// Hodograph `F'` as a curve of degree `d - 1`.
    pub fn derivative(&self) -> SplineCurve {
        let d = self.knots.degree;
        let t = &self.knots.knots;
        let control = (0..self.control.len() - 1)
            .map(|i| {
                let den = t[i + d + 1] - t[i + 1];
                let f = if den > 0.0 { d as f64 / den } else { 0.0 };
                [
                    f * (self.control[i + 1][0] - self.control[i][0]),
                    f * (self.control[i + 1][1] - self.control[i][1]),
                ]
            })
            .collect();
        SplineCurve {
            knots: self.knots.derivative_knots(),
            control,
        }
    }

    /// Parametric speed `J(t) = ‖F'(t)‖`.
    pub fn parametric_speed(&self, t: f64) -> Result<f64> {
        self.knots.check_param(t)?;
        let v = self.derivative().eval_unchecked(t);
        let speed = v[0].hypot(v[1]);
        if speed < REGULARITY_TOL {
            return Err(Error::Irregular { t, speed });
        }
        Ok(speed)
    }

    /// Checks `J > 0` on a uniform grid of `samples + 1` parameters.
    pub fn check_regular(&self, samples: usize) -> Result<()> {
        let (a, b) = self.domain();
        let deriv = self.derivative();
        for k in 0..=samples {
            let t = a + (b - a) * k as f64 / samples as f64;
            let v = deriv.eval_unchecked(t);
            let speed = v[0].hypot(v[1]);
            if speed < REGULARITY_TOL {
                return Err(Error::Irregular { t, speed });
            }
        }
        Ok(())
    }
}

/// Interpolation in a spline space at its Greville abscissae. Exact for
/// functions that lie in the space.
#[derive(Debug, Clone)]
pub struct GrevilleInterpolator {
    knots: KnotVector,
    points: Vec<f64>,
    /// Rows taken as limits from the left: the point sits on a jump at the
    /// right end of the function's support.
    left: Vec<bool>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl GrevilleInterpolator {
    pub fn new(knots: KnotVector) -> Self {
        let n = knots.dim();
        let d = knots.degree;
        let points: Vec<f64> = (0..n).map(|i| knots.greville(i)).collect();
        let b = knots.domain().1;
        let left: Vec<bool> = (0..n)
            .map(|i| d > 0 && points[i] < b && knots.knots[i + 1] == knots.knots[i + d + 1])
            .collect();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (row, &x) in points.iter().enumerate() {
            let span = if left[row] { knots.find_span_left(x) } else { knots.find_span(x) };
            let vals = knots.basis_values_in_span(span, x);
            for (j, v) in vals.into_iter().enumerate() {
                m[(row, span - d + j)] = v;
            }
        }
        Self {
            knots,
            points,
            left,
            lu: m.lu(),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn left_limits(&self) -> &[bool] {
        &self.left
    }

    /// B-spline coefficients of the interpolant of the given point values.
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(values);
        self.lu
            .solve(&rhs)
            .expect("Greville collocation matrix is nonsingular")
            .iter()
            .copied()
            .collect()
    }
}

/// Knot vector of the product space of two spline spaces on the same
/// domain. At every breakpoint the multiplicity is `(p + d)` minus the
/// smaller of the two local smoothness orders; the ends are clamped.
pub fn product_knots(f: &KnotVector, g: &KnotVector) -> Result<KnotVector> {
    let (a, b) = f.domain();
    let (ga, gb) = g.domain();
    let tol = KNOT_TOL * (b - a);
    if (a - ga).abs() > tol || (b - gb).abs() > tol {
        return Err(Error::DomainMismatch);
    }
    let deg = f.degree + g.degree;
    let pf = f.breakpoints();
    let pg = g.breakpoints();
    // (position, smoothness) pairs, merged
    let mut pts: Vec<(f64, i64)> = Vec::new();
    let mut push = |x: f64, smooth: i64| {
        if let Some(e) = pts.iter_mut().find(|e| (e.0 - x).abs() <= tol) {
            e.1 = e.1.min(smooth);
        } else {
            pts.push((x, smooth));
        }
    };
    let n_f = pf.breakpoints.len();
    for (k, &m) in pf.multiplicities.iter().enumerate() {
        debug_assert!(k + 1 < n_f);
        push(pf.breakpoints[k + 1], f.degree as i64 - m as i64);
    }
    for (k, &m) in pg.multiplicities.iter().enumerate() {
        push(pg.breakpoints[k + 1], g.degree as i64 - m as i64);
    }
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut knots = vec![a; deg + 1];
    for (x, smooth) in pts {
        let mult = (deg as i64 - smooth).clamp(1, deg as i64 + 1) as usize;
        knots.extend(std::iter::repeat_n(x, mult));
    }
    knots.extend(std::iter::repeat_n(b, deg + 1));
    Ok(KnotVector::from_raw(knots, deg, KnotKind::Open))
}

/// Exact product of two splines on the same domain, expressed in the B-form
/// of the product space.
pub fn spline_product(f: &SplineFunction, g: &SplineFunction) -> Result<SplineFunction> {
    let knots = product_knots(&f.knots, &g.knots)?;
    let interp = GrevilleInterpolator::new(knots.clone());
    let values: Vec<f64> = interp
        .points()
        .iter()
        .zip(interp.left_limits())
        .map(|(&x, &left)| {
            if left {
                f.eval_left(x) * g.eval_left(x)
            } else {
                f.eval_unchecked(x) * g.eval_unchecked(x)
            }
        })
        .collect();
    let coefs = interp.coefficients(&values);
    SplineFunction::new(knots, coefs)
}
