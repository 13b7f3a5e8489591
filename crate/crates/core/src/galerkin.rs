//! Galerkin discretisation of Symm's equation `Vφ = f` on a hierarchical
//! B-spline space: system assembly, solution, energy and potentials.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss;
use crate::hierarchy::HierarchicalSpace;
use crate::quadrature::{Geometry, MomentTable, NodeGeom, Precision, RuleCache, Source, SupportRule};
use crate::quasi_interp::{qi_quadrature, QISpace};

/// Quadrature parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Node count `n` of the inner rules.
    pub n_inner: usize,
    /// Node count `n` of the outer rules.
    pub n_outer: usize,
    /// Quasi-interpolation degree.
    pub p: usize,
    pub precision: Precision,
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n_inner < self.p || self.n_outer < self.p {
            return Err(Error::TooFewNodes {
                n: self.n_inner.min(self.n_outer),
                p: self.p,
            });
        }
        Ok(())
    }
}

/// How the right-hand side is formed from the boundary datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    /// `f = u_D`.
    Indirect,
    /// `f = ½ u_D − K u_D` with the double-layer operator `K`; closed
    /// curves only.
    Direct,
}

/// Sign used to make the scaled system positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    /// `−A/(2π)` factored as assembled.
    Scaled,
    /// `A/(2π)` was factored and the solution negated.
    Negated,
    /// Neither sign is definite; solved by LU with partial pivoting.
    Indefinite,
}

/// Per-function quadrature data.
#[derive(Debug, Clone)]
struct FunctionData {
    outer: SupportRule,
    inner: SupportRule,
    outer_nodes: Vec<NodeGeom>,
    inner_nodes: Vec<NodeGeom>,
    /// Outer weights times `J` at the outer nodes.
    outer_jw: Vec<f64>,
    /// `J` at the inner nodes.
    inner_j: Vec<f64>,
}

/// A node of the composite rule over the active cells.
#[derive(Debug, Clone)]
struct CompositeNode {
    geom: NodeGeom,
    /// Weight times `J`.
    jw: f64,
}

/// Discrete single-layer operator on a hierarchical space.
pub struct BoundaryOperator<'a> {
    geometry: &'a Geometry,
    space: &'a HierarchicalSpace,
    config: QuadConfig,
    table: Arc<MomentTable>,
    data: Vec<FunctionData>,
    composite: Vec<CompositeNode>,
    cells: Vec<CellNodes>,
}

/// Gauss nodes of an active cell and of its two halves, the first level of
/// the adaptive double-layer rule.
#[derive(Debug, Clone)]
struct CellNodes {
    t0: f64,
    t1: f64,
    levels: [Vec<(f64, NodeGeom)>; 3],
}

impl CellNodes {
    fn new(geometry: &Geometry, t0: f64, t1: f64) -> Self {
        let m = 0.5 * (t0 + t1);
        let nodes = |a: f64, b: f64| {
            gauss::mapped(GRADED_GAUSS, a, b)
                .into_iter()
                .map(|(t, w)| (w, geometry.node(t)))
                .collect()
        };
        Self {
            t0,
            t1,
            levels: [nodes(t0, t1), nodes(t0, m), nodes(m, t1)],
        }
    }
}

const GRADED_GAUSS: usize = 12;
/// Absolute tolerance per unit parameter length for the adaptive rule.
const ADAPTIVE_TOL: f64 = 1e-13;
const MAX_DEPTH: usize = 24;
/// Relative accuracy of the double-layer kernel; finer splitting only sees noise.
const NOISE: f64 = 1e-10;

fn accept(whole: f64, left: f64, right: f64, tol: f64) -> bool {
    let diff = (left + right - whole).abs();
    let floor = NOISE * (left.abs() + right.abs());
    diff <= tol.max(floor) || !diff.is_finite()
}

/// Bisects until the halves agree with the whole to `tol` (scaled by length).
fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let left = gauss::integrate(GRADED_GAUSS, a, m, f);
    let right = gauss::integrate(GRADED_GAUSS, m, b, f);
    if depth >= MAX_DEPTH || accept(whole, left, right, tol) {
        return left + right;
    }
    adaptive(f, a, m, left, 0.5 * tol, depth + 1) + adaptive(f, m, b, right, 0.5 * tol, depth + 1)
}

/// Assembled system `−A/(2π) α = β`.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    /// Symmetric `A`, the average of both orientations.
    pub a: DMatrix<f64>,
    /// `max|Aᵢⱼ − Aⱼᵢ| / max|A|` before symmetrisation.
    pub asymmetry: f64,
    /// `A` as assembled (row `i` uses the outer rule of `Bᵢ`).
    pub a_raw: DMatrix<f64>,
}

impl GalerkinSystem {
    /// The matrix `−A/(2π)`.
    pub fn scaled(&self) -> DMatrix<f64> {
        &self.a * (-1.0 / (2.0 * PI))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Right-hand side pieces.
#[derive(Debug, Clone)]
pub struct LoadVector {
    pub beta: Vec<f64>,
    /// `∫ u_D Bᵢ dγ`.
    pub beta1: Vec<f64>,
    /// `∫ Bᵢ(x) ∫ ∂U/∂n_y u_D dγ_y dγ_x` (zero for the indirect approach).
    pub beta2: Vec<f64>,
}

/// Coefficients of `φ_h` in the hierarchical basis.
#[derive(Debug, Clone)]
pub struct DensitySolution {
    pub alpha: Vec<f64>,
    pub convention: SignConvention,
}

impl<'a> BoundaryOperator<'a> {
    pub fn new(
        geometry: &'a Geometry,
        space: &'a HierarchicalSpace,
        config: QuadConfig,
        cache: &RuleCache,
        table: Arc<MomentTable>,
    ) -> Result<Self> {
        config.validate()?;
        let closed = geometry.is_closed();
        if closed != space.ladder.is_periodic() {
            return Err(Error::InvalidInput(
                "closed curves need a periodic space and open curves an open one".into(),
            ));
        }
        let (ga, gb) = geometry.domain();
        let (sa, sb) = space.ladder.domain();
        if (ga - sa).abs() > 1e-12 || (gb - sb).abs() > 1e-12 {
            return Err(Error::DomainMismatch);
        }
        let data = space
            .basis
            .functions()
            .par_iter()
            .map(|f| {
                let outer = SupportRule::new(f, &space.ladder, config.n_outer, config.p, cache)?;
                let inner = SupportRule::new(f, &space.ladder, config.n_inner, config.p, cache)?;
                let outer_nodes: Vec<NodeGeom> = outer.nodes().iter().map(|&t| geometry.node(t)).collect();
                let inner_nodes: Vec<NodeGeom> = inner.nodes().iter().map(|&t| geometry.node(t)).collect();
                let outer_jw = outer_nodes
                    .iter()
                    .zip(outer.weights())
                    .map(|(g, w)| g.speed * w)
                    .collect();
                let inner_j = inner_nodes.iter().map(|g| g.speed).collect();
                Ok(FunctionData {
                    outer,
                    inner,
                    outer_nodes,
                    inner_nodes,
                    outer_jw,
                    inner_j,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let unit = qi_quadrature(&QISpace::new(config.p, config.n_outer, 0.0, 1.0)?);
        let mut composite = Vec::new();
        let cells = (0..space.mesh.len())
            .into_par_iter()
            .map(|pos| {
                let (t0, t1) = space.mesh.interval(pos);
                CellNodes::new(geometry, t0, t1)
            })
            .collect();
        for pos in 0..space.mesh.len() {
            let (t0, t1) = space.mesh.interval(pos);
            for (u, w) in unit.nodes.iter().zip(&unit.weights) {
                let geom = geometry.node(t0 + (t1 - t0) * u);
                let jw = geom.speed * w * (t1 - t0);
                composite.push(CompositeNode { geom, jw });
            }
        }

        Ok(Self {
            geometry,
            space,
            config,
            table,
            data,
            composite,
            cells,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        self.geometry
    }

    pub fn space(&self) -> &HierarchicalSpace {
        self.space
    }

    pub fn config(&self) -> QuadConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    fn gamma(&self) -> Option<f64> {
        self.geometry.is_closed().then(|| self.geometry.gamma())
    }

    /// `∫ Bⱼ(t) J(t) log‖F(s) − F(t)‖ dt` by the inner rule of `Bⱼ`, with the
    /// support moved by `wraps` periods.
    fn log_integral(&self, j: usize, s: &NodeGeom, src: Source, wraps: i64, cached: bool) -> f64 {
        let fd = &self.data[j];
        let rule = &fd.inner;
        if rule.is_near(s.t, wraps) {
            let table = cached.then(|| self.table.as_ref());
            let (eta, _) = rule.log_weights(src, wraps, table, self.config.precision);
            let shift = self.gamma().map_or(0.0, |g| wraps as f64 * g);
            fd.inner_nodes
                .iter()
                .zip(rule.weights())
                .zip(&eta)
                .zip(&fd.inner_j)
                .map(|(((t, w), e), jt)| jt * (w * self.geometry.k1_shifted(s, t, shift) + e))
                .sum()
        } else {
            fd.inner_nodes
                .iter()
                .zip(rule.weights())
                .zip(&fd.inner_j)
                .map(|((t, w), jt)| {
                    let dx = s.point[0] - t.point[0];
                    let dy = s.point[1] - t.point[1];
                    jt * w * dx.hypot(dy).ln()
                })
                .sum()
        }
    }

    /// Row `i` of `A`.
    fn matrix_row(&self, i: usize) -> Vec<f64> {
        let fi = &self.data[i];
        let n_out = self.config.n_outer;
        (0..self.dim())
            .map(|j| {
                let inner = &self.data[j].inner;
                fi.outer_nodes
                    .iter()
                    .zip(&fi.outer_jw)
                    .enumerate()
                    .map(|(k, (s, w))| {
                        let src = Source::node(s.t, fi.outer.int_start(), fi.outer.int_len(), k, n_out);
                        w * self.log_integral(j, s, src, inner.wraps_towards(s.t), true)
                    })
                    .sum()
            })
            .collect()
    }

    /// Assembles `A` with `Aᵢⱼ = ∫ Bᵢ ∫ U Bⱼ` in both orientations.
    pub fn assemble_matrix(&self) -> GalerkinSystem {
        let n = self.dim();
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| self.matrix_row(i)).collect();
        let a_raw = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let max = a_raw.amax();
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                asym = asym.max((a_raw[(i, j)] - a_raw[(j, i)]).abs());
            }
        }
        let a = (&a_raw + a_raw.transpose()) * 0.5;
        GalerkinSystem {
            a,
            asymmetry: if max > 0.0 { asym / max } else { 0.0 },
            a_raw,
        }
    }

    /// `∫ u_D(y) ∂U/∂n_y(F(s), y) dγ_y`, cell by cell with adaptive
    /// bisection; cells containing `s` are split there first.
    fn double_layer_integral(&self, s: &NodeGeom, datum: &(dyn Fn([f64; 2]) -> f64 + Sync)) -> f64 {
        self.cells
            .iter()
            .map(|cell| {
                let (t0, t1) = (cell.t0, cell.t1);
                let sc = match self.gamma() {
                    Some(g) => s.t - g * ((s.t - 0.5 * (t0 + t1)) / g).round(),
                    None => s.t,
                };
                self.cell_double_layer(s, sc, cell, datum)
            })
            .sum()
    }

    fn cell_double_layer(
        &self,
        s: &NodeGeom,
        sc: f64,
        cell: &CellNodes,
        datum: &(dyn Fn([f64; 2]) -> f64 + Sync),
    ) -> f64 {
        let kernel = |y: &NodeGeom| y.speed * datum(y.point) * self.geometry.double_layer_nodes(s, y);
        let f = |t: f64| kernel(&self.geometry.node(t));
        let (t0, t1) = (cell.t0, cell.t1);
        let tol = ADAPTIVE_TOL * (t1 - t0);
        if sc > t0 && sc < t1 {
            return [(t0, sc), (sc, t1)]
                .into_iter()
                .map(|(a, b)| {
                    let whole = gauss::integrate(GRADED_GAUSS, a, b, f);
                    adaptive(&f, a, b, whole, tol, 0)
                })
                .sum();
        }
        let [whole, left, right] = cell
            .levels
            .each_ref()
            .map(|nodes| nodes.iter().map(|(w, y)| w * kernel(y)).sum::<f64>());
        let m = 0.5 * (t0 + t1);
        if accept(whole, left, right, tol) {
            return left + right;
        }
        adaptive(&f, t0, m, left, 0.5 * tol, 1) + adaptive(&f, m, t1, right, 0.5 * tol, 1)
    }

    /// Assembles `β₁`, `β₂` and `β` for the given datum.
    pub fn assemble_rhs(
        &self,
        datum: &(dyn Fn([f64; 2]) -> f64 + Sync),
        approach: Approach,
    ) -> Result<LoadVector> {
        if approach == Approach::Direct && !self.geometry.is_closed() {
            return Err(Error::NotClosed);
        }
        let beta1: Vec<f64> = self
            .data
            .par_iter()
            .map(|fd| {
                fd.outer_nodes
                    .iter()
                    .zip(&fd.outer_jw)
                    .map(|(s, w)| w * datum(s.point))
                    .sum()
            })
            .collect();
        let beta2: Vec<f64> = match approach {
            Approach::Indirect => vec![0.0; self.dim()],
            Approach::Direct => {
                self.data
                    .par_iter()
                    .map(|fd| {
                        fd.outer_nodes
                            .iter()
                            .zip(&fd.outer_jw)
                            .map(|(s, w)| w * self.double_layer_integral(s, datum))
                            .sum()
                    })
                    .collect()
            }
        };
        let beta = match approach {
            Approach::Indirect => beta1.clone(),
            Approach::Direct => beta1
                .iter()
                .zip(&beta2)
                .map(|(b1, b2)| 0.5 * b1 - b2 / (2.0 * PI))
                .collect(),
        };
        Ok(LoadVector { beta, beta1, beta2 })
    }

    /// `Vφ_h(F(s))` using the inner rules; moments at `s` are computed
    /// directly.
    pub fn eval_vphi(&self, alpha: &[f64], s: f64) -> f64 {
        let node = self.geometry.node(s);
        self.eval_vphi_node(alpha, &node)
    }

    pub fn eval_vphi_node(&self, alpha: &[f64], node: &NodeGeom) -> f64 {
        let sum: f64 = alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, a)| {
                let wraps = self.data[j].inner.wraps_towards(node.t);
                a * self.log_integral(j, node, Source::float(node.t), wraps, false)
            })
            .sum();
        -sum / (2.0 * PI)
    }

    /// Right-hand side `f(F(s))` of the boundary integral equation.
    pub fn eval_rhs(
        &self,
        datum: &(dyn Fn([f64; 2]) -> f64 + Sync),
        approach: Approach,
        s: f64,
    ) -> f64 {
        let node = self.geometry.node(s);
        let u = datum(node.point);
        match approach {
            Approach::Indirect => u,
            Approach::Direct => {
                0.5 * u - self.double_layer_integral(&node, datum) / (2.0 * PI)
            }
        }
    }

    /// `f` as a function of boundary nodes.
    pub fn rhs_evaluator<'b>(
        &'b self,
        datum: &'b (dyn Fn([f64; 2]) -> f64 + Sync),
        approach: Approach,
    ) -> impl Fn(&NodeGeom) -> f64 + Sync + 'b {
        move |node: &NodeGeom| {
            let u = datum(node.point);
            match approach {
                Approach::Indirect => u,
                Approach::Direct => 0.5 * u - self.double_layer_integral(node, datum) / (2.0 * PI),
            }
        }
    }

    /// `∫ Bᵢ g dγ` by the outer rule, for a boundary function `g`.
    pub fn test_against(&self, g: impl Fn(&NodeGeom) -> f64 + Sync) -> Vec<f64> {
        self.data
            .par_iter()
            .map(|fd| {
                fd.outer_nodes
                    .iter()
                    .zip(&fd.outer_jw)
                    .map(|(s, w)| w * g(s))
                    .sum()
            })
            .collect()
    }

    /// Outer nodes of basis function `i` with their geometry.
    pub fn outer_nodes(&self, i: usize) -> &[NodeGeom] {
        &self.data[i].outer_nodes
    }

    /// Potential `u(x)` at an interior point from the representation
    /// formula; the double-layer term is included for the direct approach.
    pub fn evaluate_potential(
        &self,
        alpha: &[f64],
        datum: &(dyn Fn([f64; 2]) -> f64 + Sync),
        approach: Approach,
        x: [f64; 2],
        min_distance: f64,
    ) -> Result<f64> {
        let dist = self.distance_to_boundary(x);
        if dist < min_distance {
            return Err(Error::TooCloseToBoundary { distance: dist });
        }
        let mut single = 0.0;
        let mut double = 0.0;
        for c in &self.composite {
            let y = c.geom.point;
            let dx = y[0] - x[0];
            let dy = y[1] - x[1];
            let r2 = dx * dx + dy * dy;
            let phi = self.eval_phi(alpha, c.geom.t);
            single += c.jw * 0.5 * r2.ln() * phi;
            if approach == Approach::Direct {
                let n = c.geom.normal;
                double += c.jw * (dx * n[0] + dy * n[1]) / r2 * datum(y);
            }
        }
        Ok(-single / (2.0 * PI) + double / (2.0 * PI))
    }

    /// Smallest distance from `x` to the composite nodes and cell ends.
    pub fn distance_to_boundary(&self, x: [f64; 2]) -> f64 {
        self.composite
            .iter()
            .map(|c| (c.geom.point[0] - x[0]).hypot(c.geom.point[1] - x[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// `φ_h(F(t))`.
    pub fn eval_phi(&self, alpha: &[f64], t: f64) -> f64 {
        self.space.basis.eval_combination(alpha, self.geometry.wrap(t))
    }

    pub fn table(&self) -> &MomentTable {
        &self.table
    }
}

/// Solves `−A/(2π) α = β` by Cholesky, trying the negated matrix when the
/// scaled one is not positive definite. Fails on indefinite matrices.
pub fn solve_spd(system: &GalerkinSystem, beta: &[f64]) -> Result<DensitySolution> {
    let m = system.scaled();
    let b = DVector::from_column_slice(beta);
    if let Some(ch) = m.clone().cholesky() {
        return Ok(DensitySolution {
            alpha: ch.solve(&b).iter().copied().collect(),
            convention: SignConvention::Scaled,
        });
    }
    if let Some(ch) = (-&m).cholesky() {
        return Ok(DensitySolution {
            alpha: ch.solve(&b).iter().map(|v| -v).collect(),
            convention: SignConvention::Negated,
        });
    }
    let eig = m.symmetric_eigen();
    Err(Error::NotPositiveDefinite {
        min_eigenvalue: eig.eigenvalues.min(),
    })
}

/// Like [`solve_spd`], but falls back to LU when the matrix is indefinite,
/// which happens for curves of logarithmic capacity above one.
pub fn solve(system: &GalerkinSystem, beta: &[f64]) -> Result<DensitySolution> {
    match solve_spd(system, beta) {
        Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
            let b = DVector::from_column_slice(beta);
            let alpha = system
                .scaled()
                .lu()
                .solve(&b)
                .ok_or(Error::NotPositiveDefinite { min_eigenvalue })?;
            Ok(DensitySolution {
                alpha: alpha.iter().copied().collect(),
                convention: SignConvention::Indefinite,
            })
        }
        other => other,
    }
}

/// `‖(−A/2π) α − β‖ / ‖β‖`.
pub fn relative_residual(system: &GalerkinSystem, alpha: &[f64], beta: &[f64]) -> f64 {
    let r = system.scaled() * DVector::from_column_slice(alpha) - DVector::from_column_slice(beta);
    let nb = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb == 0.0 {
        r.norm()
    } else {
        r.norm() / nb
    }
}

/// Discrete energy `αᵀβ₁ = ⟨Vφ_h, φ_h⟩`.
pub fn energy_norm_sq(alpha: &[f64], beta1: &[f64]) -> Result<f64> {
    let e: f64 = alpha.iter().zip(beta1).map(|(a, b)| a * b).sum();
    if e < -1e-12 {
        return Err(Error::NegativeEnergy(e));
    }
    Ok(e.max(0.0))
}
