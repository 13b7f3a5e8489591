//! Closed-form integrals of monomials against `log|u − σ|` on `[0, 1]`,
//! which are the building blocks of the modified moments.

use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::gauss;

/// Arithmetic used for the closed-form moment formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Working precision with compensated summation.
    Double,
    /// Double-double arithmetic throughout the closed form.
    #[default]
    Extended,
    /// Working precision, recomputed in double-double when the error
    /// estimate is too large.
    Auto,
}

/// Relative error estimate above which a moment is flagged.
pub const FLAG_TOL: f64 = 1e-9;

/// Sources this far outside `[0, 1]` (relative to its length) are handled
/// by Gauss–Legendre, where the integrand is analytic.
const CLOSED_FORM_REACH: f64 = 1.0;

const FAR_GAUSS: usize = 24;

/// Neumaier compensated sum that also tracks `Σ|terms|`.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
    abs: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.abs += x.abs();
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Bound on the rounding error accumulated in the terms.
    pub fn error_estimate(&self) -> f64 {
        4.0 * f64::EPSILON * self.abs
    }
}

fn flagged(value: f64, err: f64) -> bool {
    err > FLAG_TOL * value.abs() && err > 1e-15
}

/// `M_m(σ) = ∫_0^1 u^m log|u − σ| du` for `m = 0..=deg`, with a flag that
/// is raised when the error estimate of some entry exceeds [`FLAG_TOL`].
pub fn log_monomial_moments(deg: usize, sigma: f64, precision: Precision) -> (Vec<f64>, bool) {
    if !(-CLOSED_FORM_REACH..=1.0 + CLOSED_FORM_REACH).contains(&sigma) {
        return (far_moments(deg, sigma), false);
    }
    match precision {
        Precision::Double => closed_form_double(deg, sigma),
        Precision::Extended => (closed_form_extended(deg, sigma), false),
        Precision::Auto => {
            let (v, flag) = closed_form_double(deg, sigma);
            if flag {
                (closed_form_extended(deg, sigma), false)
            } else {
                (v, false)
            }
        }
    }
}

fn far_moments(deg: usize, sigma: f64) -> Vec<f64> {
    let rule = gauss::mapped(FAR_GAUSS, 0.0, 1.0);
    (0..=deg)
        .map(|m| {
            rule.iter()
                .map(|&(u, w)| w * u.powi(m as i32) * (u - sigma).abs().ln())
                .sum()
        })
        .collect()
}

/// `1 + σ + … + σ^m`, so that `1 − σ^{m+1} = (1 − σ) · geometric(σ, m)`
/// keeps full relative accuracy near `σ = 1`.
fn geometric(sigma: f64, m: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..m {
        acc = acc * sigma + 1.0;
    }
    acc
}

/// `M_m(σ) = [(1 − σ^{m+1}) log|1 − σ| + σ^{m+1} log|σ| − Σ_k σ^{m−k}/(k+1)] / (m+1)`,
/// obtained by integrating by parts against `((u)^{m+1} − σ^{m+1})/(m+1)`.
fn closed_form_double(deg: usize, sigma: f64) -> (Vec<f64>, bool) {
    let log1 = if sigma == 1.0 { 0.0 } else { (1.0 - sigma).abs().ln() };
    let log0 = if sigma == 0.0 { 0.0 } else { sigma.abs().ln() };
    let mut flag = false;
    let out = (0..=deg)
        .map(|m| {
            let k1 = (1.0 - sigma) * geometric(sigma, m);
            let k0 = sigma.powi(m as i32 + 1);
            let mut acc = CompensatedSum::default();
            acc.add(k1 * log1);
            acc.add(k0 * log0);
            let mut pw = 1.0;
            for k in (0..=m).rev() {
                acc.add(-pw / (k + 1) as f64);
                pw *= sigma;
            }
            let v = acc.value() / (m + 1) as f64;
            flag |= flagged(v, acc.error_estimate() / (m + 1) as f64);
            v
        })
        .collect();
    (out, flag)
}

const LN2_HI: f64 = std::f64::consts::LN_2;
const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;

/// Natural logarithm of a positive double in double-double precision, via
/// `log x = k log 2 + 2 atanh((m − 1)/(m + 1))` with `m ∈ [1/√2, √2]`.
pub fn ln_extended(x: f64) -> TwoFloat {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut k = x.log2().round() as i32;
    let mut m = x / 2f64.powi(k);
    if m > std::f64::consts::SQRT_2 {
        m *= 0.5;
        k += 1;
    } else if m < std::f64::consts::FRAC_1_SQRT_2 {
        m *= 2.0;
        k -= 1;
    }
    // m - 1 is exact; m + 1 is kept as an unevaluated sum
    let den = TwoFloat::new_add(m, 1.0);
    let q = TwoFloat::from(m - 1.0) / den.hi();
    let s = q - q * (den.lo() / den.hi());
    let s2 = s * s;
    let mut term = s;
    let mut series = s;
    for j in 1..40 {
        term *= s2;
        let next = term / (2 * j + 1) as f64;
        if next.hi().abs() < 1e-34 {
            break;
        }
        series += next;
    }
    let ln2 = TwoFloat::new_add(LN2_HI, LN2_LO);
    ln2 * TwoFloat::from(k as f64) + series * 2.0
}

fn closed_form_extended(deg: usize, sigma: f64) -> Vec<f64> {
    let s = TwoFloat::from(sigma);
    let one = TwoFloat::from(1.0);
    let zero = TwoFloat::from(0.0);
    let log1 = if sigma == 1.0 { zero } else { ln_extended((one - s).abs().hi()) + correction(one - s) };
    let log0 = if sigma == 0.0 { zero } else { ln_extended(sigma.abs()) };
    (0..=deg)
        .map(|m| {
            let mut geo = one;
            for _ in 0..m {
                geo = geo * s + one;
            }
            let k1 = (one - s) * geo;
            let k0 = s.powi(m as i32 + 1);
            let mut acc = k1 * log1 + k0 * log0;
            let mut pw = one;
            for k in (0..=m).rev() {
                acc -= pw / (k + 1) as f64;
                pw *= s;
            }
            let v = acc / (m + 1) as f64;
            v.hi() + v.lo()
        })
        .collect()
}

/// First-order correction `lo/hi` for the logarithm of a double-double
/// whose low part is dropped by [`ln_extended`].
fn correction(z: TwoFloat) -> TwoFloat {
    TwoFloat::from(z.lo() / z.hi())
}

// Division between two double-doubles in twofloat 0.8 loses the low word,
// so only divisions by plain doubles are used here.
