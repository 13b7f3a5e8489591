//! Boundary geometry and the split of the log kernel into a smooth part
//! `K₁` and an explicit singular part `K₂ = log δ`.

use crate::error::{Error, Result};
use crate::gauss;
use crate::splines::SplineCurve;

/// Boundary curve with cached derivative curves and kernel helpers.
///
/// Parameters passed to the evaluators may lie outside `[a, b]` for closed
/// curves; they are reduced periodically.
#[derive(Debug, Clone)]
pub struct Geometry {
    curve: SplineCurve,
    d1: SplineCurve,
    d2: Option<SplineCurve>,
    closed: bool,
    a: f64,
    b: f64,
    gamma: f64,
    orientation: f64,
    breaks: Vec<f64>,
    near: f64,
}

/// Position and derivatives of the curve at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGeom {
    /// Parameter as supplied (possibly outside `[a, b]`).
    pub t: f64,
    /// `F(t)`.
    pub point: [f64; 2],
    /// `F^{(k)}(t)` for `k = 1..=d`.
    pub derivs: Vec<[f64; 2]>,
    /// Geometry span containing `t`, in the same frame as `t`.
    pub span: (f64, f64),
    /// Parametric speed `J(t)`.
    pub speed: f64,
    /// Outward unit normal (closed curves); left normal for open curves.
    pub normal: [f64; 2],
}

impl Geometry {
    pub fn new(curve: SplineCurve) -> Result<Self> {
        let (a, b) = curve.domain();
        curve.check_regular(2000)?;
        let d1 = curve.derivative();
        let d2 = (curve.degree() >= 2).then(|| d1.derivative());
        let closed = curve.is_closed();
        let breaks = curve.knots().breakpoints().breakpoints;
        let min_span = breaks
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let mut g = Self {
            curve,
            d1,
            d2,
            closed,
            a,
            b,
            gamma: b - a,
            orientation: 1.0,
            breaks,
            near: 0.05 * min_span,
        };
        if closed {
            let area = g.signed_area();
            if area == 0.0 {
                return Err(Error::InvalidControlPoints("closed curve encloses no area".into()));
            }
            g.orientation = area.signum();
        }
        Ok(g)
    }

    pub fn curve(&self) -> &SplineCurve {
        &self.curve
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Period `γ = b - a`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `+1` for counterclockwise closed curves, `-1` for clockwise ones.
    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// Reduces a parameter into `[a, b]` for closed curves and clamps it for
    /// open ones.
    pub fn wrap(&self, t: f64) -> f64 {
        if self.closed {
            if t >= self.a && t <= self.b {
                t
            } else {
                self.a + (t - self.a).rem_euclid(self.gamma)
            }
        } else {
            t.clamp(self.a, self.b)
        }
    }

    pub fn point(&self, t: f64) -> [f64; 2] {
        self.curve.eval_unchecked(self.wrap(t))
    }

    pub fn tangent(&self, t: f64) -> [f64; 2] {
        self.d1.eval_unchecked(self.wrap(t))
    }

    pub fn speed(&self, t: f64) -> f64 {
        let v = self.tangent(t);
        v[0].hypot(v[1])
    }

    /// Unit normal; outward for closed curves.
    pub fn normal(&self, t: f64) -> [f64; 2] {
        let v = self.tangent(t);
        let j = v[0].hypot(v[1]);
        [self.orientation * v[1] / j, -self.orientation * v[0] / j]
    }

    fn second(&self, t: f64) -> [f64; 2] {
        match &self.d2 {
            Some(c) => c.eval_unchecked(self.wrap(t)),
            None => [0.0, 0.0],
        }
    }

    /// `½ ∮ (x y' - y x') dt`.
    pub fn signed_area(&self) -> f64 {
        self.breaks
            .windows(2)
            .map(|w| {
                gauss::integrate(self.curve.degree() + 2, w[0], w[1], |t| {
                    let p = self.curve.eval_unchecked(t);
                    let v = self.d1.eval_unchecked(t);
                    0.5 * (p[0] * v[1] - p[1] * v[0])
                })
            })
            .sum()
    }

    /// Total arc length.
    pub fn length(&self) -> f64 {
        self.breaks
            .windows(2)
            .map(|w| gauss::integrate(16, w[0], w[1], |t| self.speed(t)))
            .sum()
    }

    pub fn node(&self, t: f64) -> NodeGeom {
        let tw = self.wrap(t);
        let kv = self.curve.knots();
        let d = kv.degree();
        let span = kv.find_span(tw);
        let ders = kv.basis_derivatives(span, tw, d);
        let ctrl = self.curve.control_points();
        let mut all = vec![[0.0; 2]; d + 1];
        for (k, row) in ders.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let c = ctrl[span - d + j];
                all[k][0] += v * c[0];
                all[k][1] += v * c[1];
            }
        }
        let shift = t - tw;
        let knots = kv.knots();
        let v = all[1];
        let speed = v[0].hypot(v[1]);
        NodeGeom {
            t,
            point: all[0],
            derivs: all[1..].to_vec(),
            span: (knots[span] + shift, knots[span + 1] + shift),
            speed,
            normal: [
                self.orientation * v[1] / speed,
                -self.orientation * v[0] / speed,
            ],
        }
    }

    /// `δ(s, t)` as a function of `x = s - t`.
    pub fn delta(&self, x: f64) -> f64 {
        if self.closed {
            let g = self.gamma;
            x.abs() * ((x - g) * (x + g)).abs() / (g * g)
        } else {
            x.abs()
        }
    }

    /// `K₂(s, t) = log δ(s, t)`.
    pub fn k2(&self, s: f64, t: f64) -> f64 {
        let x = s - t;
        if self.closed {
            let g = self.gamma;
            x.abs().ln() + (x - g).abs().ln() + (x + g).abs().ln() - 2.0 * g.ln()
        } else {
            x.abs().ln()
        }
    }

    /// Reduces `x = s - t` to the representative `x'` closest to zero and
    /// returns `(x', log(δ(x) / |x'|))`.
    fn reduce(&self, x: f64) -> (f64, f64) {
        if !self.closed {
            return (x, 0.0);
        }
        let g = self.gamma;
        let m = (x / g).round().clamp(-1.0, 1.0);
        let xr = x - m * g;
        let others = if m == 0.0 {
            (x - g).abs() * (x + g).abs()
        } else if m == 1.0 {
            x.abs() * (x + g).abs()
        } else {
            x.abs() * (x - g).abs()
        };
        (xr, (others / (g * g)).ln())
    }

    /// `(1/y) ∫_s^{s+y} F'` and `(1/y²) ∫_s^{s+y} (v - s) F''(v) dv`, exact
    /// up to rounding (Gauss on the polynomial pieces).
    fn divided_differences(&self, s: f64, y: f64) -> ([f64; 2], [f64; 2]) {
        if y == 0.0 {
            let f2 = self.second(s);
            return (self.tangent(s), [0.5 * f2[0], 0.5 * f2[1]]);
        }
        let (lo, hi) = if y > 0.0 { (s, s + y) } else { (s + y, s) };
        let mut cuts = vec![lo];
        let first = ((lo - self.a) / self.gamma).floor() as i64 - 1;
        let last = ((hi - self.a) / self.gamma).floor() as i64 + 1;
        for m in first..=last {
            let shift = if self.closed { m as f64 * self.gamma } else if m == 0 { 0.0 } else { continue };
            for &bp in &self.breaks {
                let x = bp + shift;
                if x > lo && x < hi {
                    cuts.push(x);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.push(hi);
        let npts = self.curve.degree() + 1;
        let mut i1 = [0.0; 2];
        let mut i2 = [0.0; 2];
        for w in cuts.windows(2) {
            for (v, wt) in gauss::mapped(npts, w[0], w[1]) {
                let f1 = self.tangent(v);
                let f2 = self.second(v);
                i1[0] += wt * f1[0];
                i1[1] += wt * f1[1];
                i2[0] += wt * (v - s) * f2[0];
                i2[1] += wt * (v - s) * f2[1];
            }
        }
        // integrals were taken over [lo, hi]; orient from s to s + y
        let sgn = y.signum();
        (
            [sgn * i1[0] / y, sgn * i1[1] / y],
            [sgn * i2[0] / (y * y), sgn * i2[1] / (y * y)],
        )
    }

    /// `K₁(s, t)` from node data at `s` and `t`.
    pub fn k1_nodes(&self, s: &NodeGeom, t: &NodeGeom) -> f64 {
        self.k1_shifted(s, t, 0.0)
    }

    /// `K₁` with `t` read as `t + shift`; `δ` is evaluated at
    /// `s − t − shift`, which must lie in `[−3γ/2, 3γ/2]`.
    pub fn k1_shifted(&self, s: &NodeGeom, t: &NodeGeom, shift: f64) -> f64 {
        let (xr, log_rest) = self.reduce(s.t - t.t - shift);
        let log_ratio = if xr.abs() < self.near {
            let y = -xr;
            let dd = if s.span.0 <= s.t + y && s.t + y <= s.span.1 {
                taylor_dd(&s.derivs, y)
            } else {
                self.divided_differences(s.t, y).0
            };
            dd[0].hypot(dd[1]).ln()
        } else {
            let dx = s.point[0] - t.point[0];
            let dy = s.point[1] - t.point[1];
            dx.hypot(dy).ln() - xr.abs().ln()
        };
        log_ratio - log_rest
    }

    /// `K₁(s, t) = ½ log(‖F(s) − F(t)‖² / δ²(s, t))`, continuous on the
    /// whole square.
    pub fn k1(&self, s: f64, t: f64) -> f64 {
        self.k1_nodes(&self.node(s), &self.node(t))
    }

    /// Double-layer kernel `∂U/∂n_y (F(s), F(t))` for `U = log‖x − y‖`.
    pub fn double_layer_nodes(&self, s: &NodeGeom, t: &NodeGeom) -> f64 {
        let (xr, _) = self.reduce(s.t - t.t);
        let n = t.normal;
        if xr.abs() < self.near {
            // expansions around t with y = t' - s
            let y = -xr;
            let s_local = t.t + xr;
            let (dd, e2n) = if t.span.0 <= s_local && s_local <= t.span.1 {
                taylor_dl(&t.derivs, y, n)
            } else {
                let (dd, e2) = self.divided_differences(s.t, y);
                (dd, -(e2[0] * n[0] + e2[1] * n[1]))
            };
            e2n / (dd[0] * dd[0] + dd[1] * dd[1])
        } else {
            let dx = t.point[0] - s.point[0];
            let dy = t.point[1] - s.point[1];
            (dx * n[0] + dy * n[1]) / (dx * dx + dy * dy)
        }
    }

    pub fn double_layer(&self, s: f64, t: f64) -> f64 {
        self.double_layer_nodes(&self.node(s), &self.node(t))
    }

    /// Full kernel `U(F(s), F(t)) = log ‖F(s) − F(t)‖`.
    pub fn log_kernel(&self, s: f64, t: f64) -> f64 {
        let p = self.point(s);
        let q = self.point(t);
        (p[0] - q[0]).hypot(p[1] - q[1]).ln()
    }

    /// Representative shift `mγ` of an interval centred at `c` that brings
    /// it closest to `target` (zero for open curves).
    pub fn nearest_shift(&self, c: f64, target: f64) -> f64 {
        if self.closed {
            ((target - c) / self.gamma).round() * self.gamma
        } else {
            0.0
        }
    }
}

/// `(F(s + y) − F(s)) / y` from the Taylor coefficients at `s`.
fn taylor_dd(derivs: &[[f64; 2]], y: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    let mut fact = 1.0;
    let mut pow = 1.0;
    for (k, d) in derivs.iter().enumerate() {
        fact *= (k + 1) as f64;
        out[0] += d[0] * pow / fact;
        out[1] += d[1] * pow / fact;
        pow *= y;
    }
    out
}

/// Taylor data around `t` for the double layer with `s = t − y`: returns
/// `(F(t) − F(s)) / y` and `(F(t) − F(s))·n / y²`.
fn taylor_dl(derivs: &[[f64; 2]], y: f64, n: [f64; 2]) -> ([f64; 2], f64) {
    // F(s) - F(t) = Σ_k F^(k)(t) (-y)^k / k!
    let mut dd = [0.0; 2];
    let mut num = 0.0;
    let mut fact = 1.0;
    for (idx, d) in derivs.iter().enumerate() {
        let k = idx + 1;
        fact *= k as f64;
        let c = (-1.0f64).powi(k as i32 - 1) * y.powi(k as i32 - 1) / fact;
        dd[0] += d[0] * c;
        dd[1] += d[1] * c;
        if k >= 2 {
            let c2 = -(-1.0f64).powi(k as i32) * y.powi(k as i32 - 2) / fact;
            num += c2 * (d[0] * n[0] + d[1] * n[1]);
        }
    }
    (dd, num)
}
