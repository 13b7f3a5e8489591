//! Residual-based error estimation on overlapping patches, Dörfler marking
//! and the solve–estimate–mark–refine loop.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{
    energy_norm_sq, solve, Approach, BoundaryOperator, QuadConfig, SignConvention,
};
use crate::gauss;
use crate::hierarchy::{Cell, HierarchicalMesh, HierarchicalSpace, LevelLadder, MeshSnapshot};
use crate::problems::{energy_error, l2_error, ErrorNorm, ProblemDefinition};
use crate::quadrature::{Geometry, MomentTable, NodeGeom, RuleCache};

/// Gauss points per cell for the `x` variable of the seminorm.
pub const SEMINORM_X_NODES: usize = 8;
/// Gauss points per cell for `y`; interlaced with the `x` nodes.
pub const SEMINORM_Y_NODES: usize = 9;
/// Gauss points per cell for the L² error.
const L2_NODES: usize = 10;

/// Cell `Q` with its patch `ω(Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Mesh position of `Q`.
    pub cell: usize,
    /// Mesh positions of the cells of `ω(Q)` in parametric order.
    pub cells: Vec<usize>,
    /// Preimages of the patch cells, shifted by a period where the patch
    /// crosses the seam so that consecutive intervals touch.
    pub intervals: Vec<(f64, f64)>,
}

impl Patch {
    pub fn new(mesh: &HierarchicalMesh, pos: usize) -> Self {
        let cells = mesh.patch(pos);
        let ladder: &LevelLadder = mesh.ladder();
        let (a, b) = ladder.domain();
        let mut intervals: Vec<(f64, f64)> = cells.iter().map(|&c| mesh.interval(c)).collect();
        if ladder.is_periodic() {
            let gamma = b - a;
            let centre = mesh.interval(pos);
            for iv in intervals.iter_mut() {
                if iv.1 < centre.0 - 0.5 * gamma {
                    *iv = (iv.0 + gamma, iv.1 + gamma);
                } else if iv.0 > centre.1 + 0.5 * gamma {
                    *iv = (iv.0 - gamma, iv.1 - gamma);
                }
            }
        }
        Self { cell: pos, cells, intervals }
    }
}

/// Per-cell and global estimator values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    /// `η_h(Q)` in mesh order.
    pub local: Vec<f64>,
    /// `η_h = (Σ η_h(Q)²)^{1/2}`.
    pub global: f64,
}

impl EstimatorReport {
    pub fn from_local(local: Vec<f64>) -> Self {
        let global = local.iter().map(|e| e * e).sum::<f64>().sqrt();
        Self { local, global }
    }

    /// Position of the largest local value.
    pub fn argmax(&self) -> usize {
        self.local
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
            .0
    }
}

/// Samples of a boundary function at the seminorm nodes of one cell.
#[derive(Debug, Clone)]
pub struct CellSamples {
    x: Vec<Sample>,
    y: Vec<Sample>,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    point: [f64; 2],
    /// Weight times `J`.
    jw: f64,
    value: f64,
}

impl CellSamples {
    pub fn new(geometry: &Geometry, t0: f64, t1: f64, r: &(dyn Fn(&NodeGeom) -> f64 + Sync)) -> Self {
        let take = |n: usize| {
            gauss::mapped(n, t0, t1)
                .into_iter()
                .map(|(t, w)| {
                    let g = geometry.node(t);
                    Sample {
                        point: g.point,
                        jw: w * g.speed,
                        value: r(&g),
                    }
                })
                .collect()
        };
        Self {
            x: take(SEMINORM_X_NODES),
            y: take(SEMINORM_Y_NODES),
        }
    }
}

fn pair_integral(xs: &CellSamples, ys: &CellSamples) -> f64 {
    let mut total = 0.0;
    for x in &xs.x {
        for y in &ys.y {
            let dx = x.point[0] - y.point[0];
            let dy = x.point[1] - y.point[1];
            let du = x.value - y.value;
            total += x.jw * y.jw * du * du / (dx * dx + dy * dy);
        }
    }
    total
}

/// `|R|²_{H^{1/2}(ω)}` from per-cell samples of `R` on the patch cells.
pub fn seminorm_sq_from_samples(cells: &[&CellSamples]) -> f64 {
    let mut total = 0.0;
    for a in cells {
        for b in cells {
            total += pair_integral(a, b);
        }
    }
    total
}

/// `∫_ω ∫_ω |R(x) − R(y)|² / ‖x − y‖² dγ_y dγ_x` over the parametric
/// intervals of a patch.
pub fn patch_seminorm_sq(
    geometry: &Geometry,
    intervals: &[(f64, f64)],
    r: &(dyn Fn(&NodeGeom) -> f64 + Sync),
) -> f64 {
    let samples: Vec<CellSamples> = intervals
        .iter()
        .map(|&(t0, t1)| CellSamples::new(geometry, t0, t1, r))
        .collect();
    let refs: Vec<&CellSamples> = samples.iter().collect();
    seminorm_sq_from_samples(&refs)
}

/// `R_h(F(s)) = f(F(s)) − Vφ_h(F(s))`.
pub fn residual(
    op: &BoundaryOperator<'_>,
    alpha: &[f64],
    f: &(dyn Fn(&NodeGeom) -> f64 + Sync),
    s: f64,
) -> f64 {
    let node = op.geometry().node(s);
    f(&node) - op.eval_vphi_node(alpha, &node)
}

/// `η_h(Q)` for every active cell.
pub fn estimate_field(
    geometry: &Geometry,
    mesh: &HierarchicalMesh,
    r: &(dyn Fn(&NodeGeom) -> f64 + Sync),
) -> EstimatorReport {
    let samples: Vec<CellSamples> = (0..mesh.len())
        .into_par_iter()
        .map(|pos| {
            let (t0, t1) = mesh.interval(pos);
            CellSamples::new(geometry, t0, t1, r)
        })
        .collect();
    let local = (0..mesh.len())
        .into_par_iter()
        .map(|pos| {
            let cells: Vec<&CellSamples> = mesh.patch(pos).iter().map(|&c| &samples[c]).collect();
            seminorm_sq_from_samples(&cells).max(0.0).sqrt()
        })
        .collect();
    EstimatorReport::from_local(local)
}

/// Estimator for a discrete solution.
pub fn estimate(
    op: &BoundaryOperator<'_>,
    alpha: &[f64],
    datum: &(dyn Fn([f64; 2]) -> f64 + Sync),
    approach: Approach,
) -> EstimatorReport {
    let f = op.rhs_evaluator(datum, approach);
    let r = |node: &NodeGeom| f(node) - op.eval_vphi_node(alpha, node);
    estimate_field(op.geometry(), &op.space().mesh, &r)
}

/// Which quantities enter the Dörfler inequality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DorflerConvention {
    /// `θ η_h ≤ Σ_{Q∈M} η_h(Q)`.
    Linear,
    /// `θ η_h² ≤ Σ_{Q∈M} η_h(Q)²`.
    #[default]
    Squared,
}

impl DorflerConvention {
    fn target(&self, theta: f64, local: &[f64]) -> f64 {
        let sq: f64 = local.iter().map(|e| e * e).sum();
        match self {
            Self::Linear => theta * sq.sqrt(),
            Self::Squared => theta * sq,
        }
    }

    fn term(&self, eta: f64) -> f64 {
        match self {
            Self::Linear => eta,
            Self::Squared => eta * eta,
        }
    }

    /// Whether the cells at `positions` satisfy the inequality.
    pub fn satisfied(&self, theta: f64, local: &[f64], positions: &[usize]) -> bool {
        let sum: f64 = positions.iter().map(|&p| self.term(local[p])).sum();
        self.target(theta, local) <= sum
    }
}

/// Greedy Dörfler marking: cells sorted by decreasing `η_h(Q)` (ties by
/// lower level, then lower parametric position) are taken until the
/// inequality holds. Returns mesh positions in marking order.
pub fn mark(
    mesh: &HierarchicalMesh,
    report: &EstimatorReport,
    theta: f64,
    convention: DorflerConvention,
) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    let cells = mesh.cells();
    let key = |p: usize| (cells[p].level, LevelLadder::int_coord(cells[p].level, cells[p].index as i64));
    mark_values(&report.local, theta, convention, key)
}

/// [`mark`] on bare values with a caller-supplied tie-break key.
pub fn mark_values<K: Ord>(
    local: &[f64],
    theta: f64,
    convention: DorflerConvention,
    key: impl Fn(usize) -> K,
) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    let mut order: Vec<usize> = (0..local.len()).filter(|&p| local[p] > 0.0).collect();
    order.sort_by(|&p, &q| local[q].total_cmp(&local[p]).then_with(|| key(p).cmp(&key(q))));
    let target = convention.target(theta, local);
    let mut sum = 0.0;
    let mut out = Vec::new();
    for p in order {
        if target <= sum {
            break;
        }
        sum += convention.term(local[p]);
        out.push(p);
    }
    Ok(out)
}

/// Refinement strategy of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub mode: Mode,
    pub theta: f64,
    pub max_iter: usize,
    /// Stop once `N_H` reaches this value.
    pub target_nh: Option<usize>,
    pub quad: QuadConfig,
    pub convention: DorflerConvention,
}

impl LoopConfig {
    /// Adaptive run with the problem's reference parameters.
    pub fn reference(problem: &ProblemDefinition, max_iter: usize) -> Self {
        let r = problem.reference;
        Self {
            mode: Mode::Adaptive,
            theta: r.theta,
            max_iter,
            target_nh: None,
            quad: QuadConfig {
                n_inner: r.n_inner,
                n_outer: r.n_outer,
                p: r.p,
                precision: Default::default(),
            },
            convention: DorflerConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::ThetaOutOfRange(self.theta));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        self.quad.validate()
    }
}

/// One iteration of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub n_h: usize,
    pub cells: usize,
    pub eta: f64,
    /// Energy or L² error when the exact solution is known.
    pub error: Option<f64>,
    /// `αᵀβ₁`.
    pub energy: f64,
    pub marked: usize,
    pub max_level: usize,
    pub convention: SignConvention,
    pub assembly_seconds: f64,
    pub estimate_seconds: f64,
}

/// Everything known after one iteration.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    pub record: IterationRecord,
    pub space: HierarchicalSpace,
    pub alpha: Vec<f64>,
    pub estimator: EstimatorReport,
    /// Mesh positions of the marked cells (all cells in uniform mode).
    pub marked: Vec<usize>,
}

impl AdaptiveState {
    pub fn snapshot(&self) -> MeshSnapshot {
        self.space.snapshot()
    }

    pub fn marked_cells(&self) -> Vec<Cell> {
        self.marked.iter().map(|&p| self.space.mesh.cells()[p]).collect()
    }
}

/// Solve, estimate, mark and refine until `max_iter` solves have been done
/// or `N_H` reaches the target. `observe` sees every state.
pub fn adaptive_loop(
    problem: &ProblemDefinition,
    config: &LoopConfig,
    mut observe: impl FnMut(&AdaptiveState) -> Result<()>,
) -> Result<Vec<IterationRecord>> {
    config.validate()?;
    let geometry = problem.geometry()?;
    let mut space = problem.initial_space()?;
    let cache = RuleCache::new();
    let table = Arc::new(MomentTable::new(config.quad.precision));
    let datum = problem.datum;
    let u = move |x: [f64; 2]| datum.u(x);
    let mut records = Vec::new();

    for iteration in 0..config.max_iter {
        let start = Instant::now();
        let op = BoundaryOperator::new(&geometry, &space, config.quad, &cache, table.clone())?;
        let system = op.assemble_matrix();
        let load = op.assemble_rhs(&u, problem.approach)?;
        let solution = solve(&system, &load.beta)?;
        let energy = energy_norm_sq(&solution.alpha, &load.beta1)?;
        let error = match problem.error_norm {
            ErrorNorm::Energy => problem.exact_energy.map(|e| energy_error(e, energy)),
            ErrorNorm::L2 if problem.has_exact_flux() => {
                Some(l2_error(&op, &solution.alpha, &problem.datum, L2_NODES)?)
            }
            ErrorNorm::L2 => None,
        };
        let assembly_seconds = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let estimator = estimate(&op, &solution.alpha, &u, problem.approach);
        let estimate_seconds = start.elapsed().as_secs_f64();

        let marked = match config.mode {
            Mode::Uniform => (0..space.mesh.len()).collect(),
            Mode::Adaptive => mark(&space.mesh, &estimator, config.theta, config.convention)?,
        };
        let record = IterationRecord {
            iteration,
            n_h: space.basis.len(),
            cells: space.mesh.len(),
            eta: estimator.global,
            error,
            energy,
            marked: marked.len(),
            max_level: space.mesh.cells().iter().map(|c| c.level).max().unwrap_or(0),
            convention: solution.convention,
            assembly_seconds,
            estimate_seconds,
        };
        records.push(record.clone());
        let reached = config.target_nh.is_some_and(|t| record.n_h >= t);
        let last = iteration + 1 == config.max_iter || reached;
        let state = AdaptiveState {
            record,
            space: space.clone(),
            alpha: solution.alpha,
            estimator,
            marked,
        };
        observe(&state)?;
        if last {
            break;
        }
        drop(op);
        space = space.refine(&state.marked_cells())?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_segment_linear_residual() {
        let curve = crate::splines::SplineCurve::new(
            crate::splines::KnotVector::open_uniform(0.0, 1.0, 1, 1).unwrap(),
            vec![[0.0, 0.0], [1.0, 0.0]],
        )
        .unwrap();
        let geo = Geometry::new(curve).unwrap();
        let v = patch_seminorm_sq(&geo, &[(0.0, 1.0)], &|g: &NodeGeom| g.t);
        assert!((v - 1.0).abs() < 1e-13);
        let c = patch_seminorm_sq(&geo, &[(0.0, 0.5), (0.5, 1.0)], &|_: &NodeGeom| 3.0);
        assert_eq!(c, 0.0);
    }

    #[test]
    fn uniform_values_under_both_conventions() {
        let local = vec![1.0; 10];
        let key = |p: usize| p;
        let sq = mark_values(&local, 0.35, DorflerConvention::Squared, key).unwrap();
        assert_eq!(sq, vec![0, 1, 2, 3]);
        // θ η_h = 0.35 √10 ≈ 1.107
        let lin = mark_values(&local, 0.35, DorflerConvention::Linear, key).unwrap();
        assert_eq!(lin, vec![0, 1]);
        assert!(mark_values(&local, 0.0, DorflerConvention::Linear, key).is_err());
        assert!(mark_values(&local, 1.5, DorflerConvention::Linear, key).is_err());
    }
}
