//! Benchmark problems, boundary data and error measures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{Approach, BoundaryOperator};
use crate::gauss;
use crate::hierarchy::{HierarchicalSpace, LevelLadder};
use crate::quadrature::Geometry;
use crate::splines::{KnotKind, KnotVector, SplineCurve};

/// Built-in boundary data with, where known, the exact flux `φ = ∂u/∂n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Datum {
    /// `f(x) = −x₁/2` on the slit, with `φ = −x₁ / √(1 − x₁²)`.
    SlitLinear,
    /// `u = −r^{1/2} cos((ϑ + π)/2)`, `ϑ ∈ (0, 2π)`.
    PacMan,
    /// `u = ½ log ‖x + δ‖²`, `δ = −(1, 1)/250`.
    LShape,
    Constant(f64),
    Zero,
    /// `u = x₁`.
    LinearX,
}

pub const LSHAPE_DELTA: [f64; 2] = [-1.0 / 250.0, -1.0 / 250.0];

/// Polar angle in `(0, 2π)`.
fn angle(x: [f64; 2]) -> f64 {
    let t = x[1].atan2(x[0]);
    if t <= 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

impl Datum {
    pub fn u(&self, x: [f64; 2]) -> f64 {
        match *self {
            Datum::SlitLinear => -0.5 * x[0],
            Datum::PacMan => {
                let r = x[0].hypot(x[1]);
                -r.sqrt() * ((angle(x) + PI) / 2.0).cos()
            }
            Datum::LShape => {
                let y = [x[0] + LSHAPE_DELTA[0], x[1] + LSHAPE_DELTA[1]];
                0.5 * (y[0] * y[0] + y[1] * y[1]).ln()
            }
            Datum::Constant(c) => c,
            Datum::Zero => 0.0,
            Datum::LinearX => x[0],
        }
    }

    /// Exact density at boundary point `x` with unit normal `n`.
    pub fn flux(&self, x: [f64; 2], n: [f64; 2]) -> Option<f64> {
        match *self {
            Datum::SlitLinear => Some(-x[0] / (1.0 - x[0] * x[0]).sqrt()),
            Datum::PacMan => {
                let r = x[0].hypot(x[1]);
                let half = angle(x) / 2.0;
                Some(0.5 / r.sqrt() * (-half.sin() * n[0] + half.cos() * n[1]))
            }
            Datum::LShape => {
                let y = [x[0] + LSHAPE_DELTA[0], x[1] + LSHAPE_DELTA[1]];
                Some((y[0] * n[0] + y[1] * n[1]) / (y[0] * y[0] + y[1] * y[1]))
            }
            Datum::Constant(_) | Datum::Zero => Some(0.0),
            Datum::LinearX => Some(n[0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    Energy,
    L2,
}

/// Suggested solver parameters for a problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceParams {
    pub theta: f64,
    pub n_inner: usize,
    pub n_outer: usize,
    pub p: usize,
}

#[derive(Debug, Clone)]
pub struct ProblemDefinition {
    pub name: String,
    pub curve: SplineCurve,
    pub approach: Approach,
    pub datum: Datum,
    pub error_norm: ErrorNorm,
    /// `|||φ|||²` when known.
    pub exact_energy: Option<f64>,
    pub reference: ReferenceParams,
    /// A point inside the domain for potential checks (closed curves).
    pub interior_point: Option<[f64; 2]>,
}

impl ProblemDefinition {
    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.curve.clone())
    }

    /// The one-level space on the geometry knots.
    pub fn initial_space(&self) -> Result<HierarchicalSpace> {
        let ladder = LevelLadder::from_knot_vector(self.curve.knots())?;
        Ok(HierarchicalSpace::single_level(ladder))
    }

    pub fn u(&self, x: [f64; 2]) -> f64 {
        self.datum.u(x)
    }

    pub fn has_exact_flux(&self) -> bool {
        self.datum.flux([0.0, 0.0], [1.0, 0.0]).is_some()
    }
}

fn ratio(n: i32, d: i32) -> f64 {
    n as f64 / d as f64
}

/// Straight slit `[−1, 1] × {0}` with quadratic open knots on `[0, 1]`.
pub fn problem_slit() -> ProblemDefinition {
    let knots: Vec<f64> = [0, 0, 0, 1, 2, 3, 4, 5, 5, 5].iter().map(|&k| ratio(k, 5)).collect();
    let xs = [-1.0, -0.8, -0.4, 0.0, 0.4, 0.8, 1.0];
    let kv = KnotVector::new(knots, 2, KnotKind::Open).expect("slit knots");
    let curve = SplineCurve::new(kv, xs.iter().map(|&x| [x, 0.0]).collect()).expect("slit curve");
    ProblemDefinition {
        name: "slit".into(),
        curve,
        approach: Approach::Indirect,
        datum: Datum::SlitLinear,
        error_norm: ErrorNorm::Energy,
        exact_energy: Some(PI / 4.0),
        reference: ReferenceParams {
            theta: 0.99,
            n_inner: 6,
            n_outer: 12,
            p: 2,
        },
        interior_point: None,
    }
}

/// Closed cubic "Pac-Man" curve on `[−1, 1]`.
pub fn problem_pacman() -> ProblemDefinition {
    let knots: Vec<f64> = (-9..=9).map(|k| ratio(k, 6)).collect();
    let x = [
        ratio(-1, 1),
        ratio(-1, 3),
        ratio(2, 5),
        ratio(7, 8),
        ratio(7, 8),
        ratio(-1, 25),
        ratio(-1, 25),
        ratio(7, 8),
        ratio(7, 8),
        ratio(2, 5),
        ratio(-1, 3),
        ratio(-1, 1),
        ratio(-1, 1),
        ratio(-1, 3),
        ratio(2, 5),
    ];
    let y = [
        ratio(-1, 2),
        -1.0,
        -1.0,
        ratio(-1, 2),
        ratio(-1, 2),
        0.0,
        0.0,
        ratio(1, 2),
        ratio(1, 2),
        1.0,
        1.0,
        ratio(1, 2),
        ratio(-1, 2),
        -1.0,
        -1.0,
    ];
    let kv = KnotVector::new(knots, 3, KnotKind::Periodic).expect("pacman knots");
    let ctrl = x.iter().zip(&y).map(|(&a, &b)| [a, b]).collect();
    let curve = SplineCurve::new(kv, ctrl).expect("pacman curve");
    ProblemDefinition {
        name: "pacman".into(),
        curve,
        approach: Approach::Direct,
        datum: Datum::PacMan,
        error_norm: ErrorNorm::L2,
        exact_energy: None,
        reference: ReferenceParams {
            theta: 0.8,
            n_inner: 12,
            n_outer: 36,
            p: 2,
        },
        interior_point: Some([-0.5, 0.0]),
    }
}

/// Closed cubic L-shaped curve on `[−1, 1]` with rounded corners.
pub fn problem_lshape() -> ProblemDefinition {
    let knots: Vec<f64> = (-13..=13).map(|k| ratio(k, 10)).collect();
    let e = ratio(1, 50);
    let eb = ratio(49, 50);
    let x = [
        0.0, 0.0, 0.0, 0.0, -e, -eb, -1.0, -1.0, -1.0, -1.0, -1.0, -eb, 0.0, eb, 1.0, 1.0, 1.0, 1.0, eb, e, 0.0,
        0.0, 0.0,
    ];
    let y = [
        0.0, e, eb, 1.0, 1.0, 1.0, 1.0, eb, 0.0, -eb, -1.0, -1.0, -1.0, -1.0, -1.0, -eb, -e, 0.0, 0.0, 0.0, 0.0,
        e, eb,
    ];
    let kv = KnotVector::new(knots, 3, KnotKind::Periodic).expect("lshape knots");
    let ctrl = x.iter().zip(&y).map(|(&a, &b)| [a, b]).collect();
    let curve = SplineCurve::new(kv, ctrl).expect("lshape curve");
    ProblemDefinition {
        name: "lshape".into(),
        curve,
        approach: Approach::Direct,
        datum: Datum::LShape,
        error_norm: ErrorNorm::L2,
        exact_energy: None,
        reference: ReferenceParams {
            theta: 0.99,
            n_inner: 12,
            n_outer: 12,
            p: 2,
        },
        interior_point: Some([-0.5, 0.5]),
    }
}

/// Built-in problem by name.
pub fn builtin(name: &str) -> Option<ProblemDefinition> {
    match name {
        "slit" => Some(problem_slit()),
        "pacman" => Some(problem_pacman()),
        "lshape" => Some(problem_lshape()),
        _ => None,
    }
}

/// Problem file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub degree: usize,
    pub knots: Vec<f64>,
    pub control_points: Vec<[f64; 2]>,
    pub kind: KnotKind,
    pub approach: Approach,
    pub datum: Datum,
    pub reference: ReferenceParams,
    #[serde(default)]
    pub exact_energy: Option<f64>,
    #[serde(default)]
    pub interior_point: Option<[f64; 2]>,
}

fn default_name() -> String {
    "custom".into()
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<ProblemDefinition> {
        let kv = KnotVector::new(self.knots, self.degree, self.kind)?;
        let curve = SplineCurve::new(kv, self.control_points)?;
        if self.approach == Approach::Direct && !curve.is_closed() {
            return Err(Error::NotClosed);
        }
        let error_norm = if self.exact_energy.is_some() {
            ErrorNorm::Energy
        } else {
            ErrorNorm::L2
        };
        Ok(ProblemDefinition {
            name: self.name,
            curve,
            approach: self.approach,
            datum: self.datum,
            error_norm,
            exact_energy: self.exact_energy,
            reference: self.reference,
            interior_point: self.interior_point,
        })
    }
}

pub fn parse_problem_file(text: &str) -> Result<ProblemDefinition> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("problem file: {e}")))?;
    file.into_problem()
}

/// `‖φ − φ_h‖_{L²(Γ)}` by Gauss quadrature on the active cells.
pub fn l2_error(op: &BoundaryOperator<'_>, alpha: &[f64], datum: &Datum, points: usize) -> Result<f64> {
    let geo = op.geometry();
    let mesh = &op.space().mesh;
    let mut total = 0.0;
    for pos in 0..mesh.len() {
        let (t0, t1) = mesh.interval(pos);
        for (t, w) in gauss::mapped(points, t0, t1) {
            let node = geo.node(t);
            let exact = datum
                .flux(node.point, node.normal)
                .ok_or_else(|| Error::InvalidInput("no exact flux for this datum".into()))?;
            let e = exact - op.eval_phi(alpha, t);
            total += w * node.speed * e * e;
        }
    }
    Ok(total.sqrt())
}

/// `√max(0, |||φ|||² − |||φ_h|||²)`.
pub fn energy_error(exact_energy: f64, discrete_energy: f64) -> f64 {
    (exact_energy - discrete_energy).max(0.0).sqrt()
}
