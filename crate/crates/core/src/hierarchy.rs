//! Dyadic level ladders, nested refinement regions, hierarchical meshes and
//! the hierarchical B-spline basis.
//!
//! A region `Γ̂^{ℓ+1}` is stored as the sorted list of level-`ℓ` cells it
//! contains, so nestedness and membership are exact integer tests. Periodic
//! spaces index cells modulo the number of cells of each level, which
//! realizes the wrap-around extension of the regions outside `[a, b]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss;
use crate::splines::{eval_local_bspline, KnotKind, KnotVector, SplineCurve, KNOT_TOL};

/// Number of dyadic levels representable by the integer coordinates.
pub const MAX_LEVEL: usize = 40;

/// Uniform base space and its dyadic refinements.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelLadder {
    kind: KnotKind,
    degree: usize,
    a: f64,
    b: f64,
    base_cells: usize,
}

impl LevelLadder {
    pub fn uniform(
        kind: KnotKind,
        degree: usize,
        a: f64,
        b: f64,
        base_cells: usize,
    ) -> Result<Self> {
        if !(b > a) || base_cells == 0 {
            return Err(Error::InvalidHierarchy(
                "need b > a and at least one base cell".into(),
            ));
        }
        if kind == KnotKind::Periodic && base_cells < degree + 1 {
            return Err(Error::InvalidHierarchy(format!(
                "periodic space of degree {degree} needs at least {} cells",
                degree + 1
            )));
        }
        Ok(Self {
            kind,
            degree,
            a,
            b,
            base_cells,
        })
    }

    /// Ladder whose level 0 is the given knot vector, which must have
    /// uniform cells and simple interior knots.
    pub fn from_knot_vector(base: &KnotVector) -> Result<Self> {
        let part = base.breakpoints();
        if part.multiplicities.iter().any(|&m| m != 1) {
            return Err(Error::InvalidHierarchy(
                "base knot vector must have simple interior knots".into(),
            ));
        }
        let (a, b) = base.domain();
        let cells = part.breakpoints.len() - 1;
        let h = (b - a) / cells as f64;
        let tol = 1e-12 * (b - a);
        let uniform = part
            .breakpoints
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= tol);
        if !uniform {
            return Err(Error::InvalidHierarchy(
                "base knot vector must be uniform".into(),
            ));
        }
        if base.kind() == KnotKind::Periodic {
            let uniform_ext = base
                .knots()
                .windows(2)
                .all(|w| ((w[1] - w[0]) - h).abs() <= tol);
            if !uniform_ext {
                return Err(Error::InvalidHierarchy(
                    "periodic auxiliary knots must continue the uniform spacing".into(),
                ));
            }
        }
        Self::uniform(base.kind(), base.degree(), a, b, cells)
    }

    pub fn kind(&self) -> KnotKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn base_cells(&self) -> usize {
        self.base_cells
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == KnotKind::Periodic
    }

    /// Number of cells of level `ℓ`.
    pub fn cells(&self, level: usize) -> usize {
        self.base_cells << level
    }

    /// Cell width `h_ℓ = h_0 2^{-ℓ}`.
    pub fn h(&self, level: usize) -> f64 {
        (self.b - self.a) / self.cells(level) as f64
    }

    /// Parameter of the level-`ℓ` grid point `k` (may lie outside `[a, b]`).
    pub fn grid_point(&self, level: usize, k: i64) -> f64 {
        let n = self.cells(level) as i64;
        if k == n {
            return self.b;
        }
        if k == 0 {
            return self.a;
        }
        self.a + (self.b - self.a) * (k as f64 / n as f64)
    }

    /// Integer coordinate of the level-`ℓ` grid point `k` in units of
    /// `h_0 2^{-MAX_LEVEL}`.
    pub fn int_coord(level: usize, k: i64) -> i64 {
        k << (MAX_LEVEL - level)
    }

    pub fn cell_interval(&self, level: usize, k: usize) -> (f64, f64) {
        (
            self.grid_point(level, k as i64),
            self.grid_point(level, k as i64 + 1),
        )
    }

    /// Full B-spline knot vector of level `ℓ`.
    pub fn knot_vector(&self, level: usize) -> KnotVector {
        let n = self.cells(level);
        match self.kind {
            KnotKind::Open => KnotVector::open_uniform(self.a, self.b, n, self.degree),
            KnotKind::Periodic => KnotVector::periodic_uniform(self.a, self.b, n, self.degree),
        }
        .expect("uniform level knot vector is valid")
    }

    /// Number of (merged) B-splines of level `ℓ`.
    pub fn num_functions(&self, level: usize) -> usize {
        match self.kind {
            KnotKind::Open => self.cells(level) + self.degree,
            KnotKind::Periodic => self.cells(level),
        }
    }

    /// Level-`ℓ` cells covered by the support of function `i`, in
    /// increasing parametric order (indices reduced modulo the cell count
    /// for periodic spaces).
    pub fn support_cells(&self, level: usize, i: usize) -> Vec<usize> {
        let d = self.degree as i64;
        let n = self.cells(level) as i64;
        let i = i as i64;
        match self.kind {
            KnotKind::Open => ((i - d).max(0)..=i.min(n - 1)).map(|k| k as usize).collect(),
            KnotKind::Periodic => (i - d..=i).map(|k| k.rem_euclid(n) as usize).collect(),
        }
    }

    /// Level-`ℓ` B-spline `i` as a standalone function.
    pub fn function(&self, level: usize, i: usize) -> BasisFunction {
        let d = self.degree as i64;
        let n = self.cells(level) as i64;
        let ii = i as i64;
        let grid: Vec<i64> = match self.kind {
            KnotKind::Open => (0..=d + 1).map(|m| (ii - d + m).clamp(0, n)).collect(),
            KnotKind::Periodic => (0..=d + 1).map(|m| ii - d + m).collect(),
        };
        BasisFunction {
            level,
            index: i,
            knots: grid.iter().map(|&k| self.grid_point(level, k)).collect(),
            grid,
            cells: self.support_cells(level, i),
            period: match self.kind {
                KnotKind::Open => None,
                KnotKind::Periodic => Some(self.b - self.a),
            },
        }
    }
}

/// Nested refinement regions `Γ̂^1 ⊇ Γ̂^2 ⊇ ...`; `refined[ℓ]` lists the
/// level-`ℓ` cells that make up `Γ̂^{ℓ+1}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdomainHierarchy {
    refined: Vec<Vec<usize>>,
}

impl SubdomainHierarchy {
    /// Single-level hierarchy, `Γ̂^1 = ∅`.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Regions from per-level cell lists; lists are sorted and deduplicated
    /// and trailing empty levels dropped. Validity against a ladder is
    /// checked by [`SubdomainHierarchy::validate`].
    pub fn from_lists(mut refined: Vec<Vec<usize>>) -> Self {
        for l in refined.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        while refined.last().is_some_and(|l| l.is_empty()) {
            refined.pop();
        }
        Self { refined }
    }

    /// Uniform refinement: `Γ̂^ℓ = [a, b]` for all `ℓ < levels`.
    pub fn uniform(ladder: &LevelLadder, levels: usize) -> Self {
        Self::from_lists((0..levels).map(|l| (0..ladder.cells(l)).collect()).collect())
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.refined
    }

    /// Number of levels `M` that carry active cells.
    pub fn depth(&self) -> usize {
        self.refined.len() + 1
    }

    pub fn validate(&self, ladder: &LevelLadder) -> Result<()> {
        if self.refined.len() >= MAX_LEVEL {
            return Err(Error::InvalidHierarchy(format!(
                "more than {MAX_LEVEL} levels"
            )));
        }
        for (l, list) in self.refined.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidHierarchy(format!(
                    "level {l} list is not strictly increasing"
                )));
            }
            if let Some(&k) = list.iter().find(|&&k| k >= ladder.cells(l)) {
                return Err(Error::InvalidHierarchy(format!(
                    "level {l} has no cell {k}"
                )));
            }
            if l > 0 {
                if let Some(&k) = list.iter().find(|&&k| !self.is_refined(l - 1, k / 2)) {
                    return Err(Error::InvalidHierarchy(format!(
                        "cell {k} of level {l} lies outside the region of level {l}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether level-`ℓ` cell `k` is contained in `Γ̂^{ℓ+1}`.
    pub fn is_refined(&self, level: usize, k: usize) -> bool {
        self.refined
            .get(level)
            .is_some_and(|l| l.binary_search(&k).is_ok())
    }

    /// Whether level-`ℓ` cell `k` is contained in `Γ̂^ℓ`.
    pub fn in_region(&self, level: usize, k: usize) -> bool {
        level == 0 || self.is_refined(level - 1, k / 2)
    }

    fn add(&mut self, level: usize, k: usize) {
        if self.refined.len() <= level {
            self.refined.resize(level + 1, Vec::new());
        }
        let list = &mut self.refined[level];
        if let Err(pos) = list.binary_search(&k) {
            list.insert(pos, k);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub level: usize,
    pub index: usize,
}

/// Active cells ordered by parametric position.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalMesh {
    ladder: LevelLadder,
    cells: Vec<Cell>,
}

impl HierarchicalMesh {
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn ladder(&self) -> &LevelLadder {
        &self.ladder
    }

    pub fn interval(&self, pos: usize) -> (f64, f64) {
        let c = self.cells[pos];
        self.ladder.cell_interval(c.level, c.index)
    }

    /// Integer endpoints of an active cell.
    pub fn int_interval(&self, pos: usize) -> (i64, i64) {
        let c = self.cells[pos];
        (
            LevelLadder::int_coord(c.level, c.index as i64),
            LevelLadder::int_coord(c.level, c.index as i64 + 1),
        )
    }

    pub fn position(&self, cell: Cell) -> Option<usize> {
        let key = LevelLadder::int_coord(cell.level, cell.index as i64);
        let pos = self
            .cells
            .partition_point(|c| LevelLadder::int_coord(c.level, c.index as i64) < key);
        (self.cells.get(pos) == Some(&cell)).then_some(pos)
    }

    /// Active cell containing parameter `t` (the last cell for `t = b`).
    pub fn locate(&self, t: f64) -> usize {
        let pos = self.cells.partition_point(|c| {
            self.ladder.cell_interval(c.level, c.index).0 <= t
        });
        pos.saturating_sub(1).min(self.cells.len() - 1)
    }

    /// Left and right neighbours of an active cell; closed curves wrap.
    pub fn neighbors(&self, pos: usize) -> (Option<usize>, Option<usize>) {
        let n = self.cells.len();
        if self.ladder.is_periodic() {
            if n == 1 {
                return (None, None);
            }
            ((Some((pos + n - 1) % n)), Some((pos + 1) % n))
        } else {
            (pos.checked_sub(1), (pos + 1 < n).then_some(pos + 1))
        }
    }

    /// Patch `ω(Q)`: the cell and its neighbours in parametric order.
    pub fn patch(&self, pos: usize) -> Vec<usize> {
        let (l, r) = self.neighbors(pos);
        let mut out = Vec::with_capacity(3);
        out.extend(l);
        out.push(pos);
        out.extend(r.filter(|&r| Some(r) != l));
        out
    }

    /// Sum of the cell lengths; equals `b - a` for a valid hierarchy.
    pub fn total_length(&self) -> f64 {
        (0..self.cells.len())
            .map(|i| {
                let (lo, hi) = self.interval(i);
                hi - lo
            })
            .sum()
    }

    /// Smallest cell width.
    pub fn min_h(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| self.ladder.h(c.level))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A B-spline of some level, given by its local uniform knots.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFunction {
    pub level: usize,
    pub index: usize,
    /// The `d + 2` local knots; for periodic spaces they may extend past
    /// the domain ends.
    pub knots: Vec<f64>,
    /// Local knots as level-`ℓ` grid indices.
    pub grid: Vec<i64>,
    /// Level-`ℓ` cells of the support.
    pub cells: Vec<usize>,
    period: Option<f64>,
}

impl BasisFunction {
    pub fn degree(&self) -> usize {
        self.knots.len() - 2
    }

    /// Support `[lo, hi]` in unwrapped coordinates.
    pub fn support(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Integer coordinate of the support start.
    pub fn int_start(&self) -> i64 {
        LevelLadder::int_coord(self.level, self.grid[0])
    }

    /// Integer coordinate of the support end.
    pub fn int_end(&self) -> i64 {
        LevelLadder::int_coord(self.level, *self.grid.last().unwrap())
    }

    /// Knot pattern relative to the first knot, in units of `h_ℓ`.
    pub fn shape(&self) -> Vec<i64> {
        self.grid.iter().map(|k| k - self.grid[0]).collect()
    }

    /// Value in unwrapped coordinates (no periodic folding).
    pub fn eval_local(&self, t: f64) -> f64 {
        eval_local_bspline(&self.knots, t)
    }

    /// Value at a parameter of the domain; periodic functions are folded.
    pub fn eval(&self, t: f64) -> f64 {
        match self.period {
            None => self.eval_local(t),
            Some(g) => {
                let (lo, hi) = self.support();
                let mut v = 0.0;
                for m in -1i32..=1 {
                    let x = t + m as f64 * g;
                    if x >= lo && x < hi {
                        v += self.eval_local(x);
                    }
                }
                v
            }
        }
    }

    /// `∫ B = (support length) / (d + 1)`.
    pub fn integral(&self) -> f64 {
        let (lo, hi) = self.support();
        (hi - lo) / (self.degree() + 1) as f64
    }
}

/// Globally numbered hierarchical basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalBasis {
    functions: Vec<BasisFunction>,
}

impl HierarchicalBasis {
    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn get(&self, i: usize) -> &BasisFunction {
        &self.functions[i]
    }

    /// Evaluates `Σ α_i B_i^H(t)`.
    pub fn eval_combination(&self, alpha: &[f64], t: f64) -> f64 {
        self.functions
            .iter()
            .zip(alpha)
            .map(|(f, a)| a * f.eval(t))
            .sum()
    }
}

/// Builds the active mesh and the hierarchical basis of a region hierarchy.
pub fn build_hierarchy(
    ladder: &LevelLadder,
    regions: &SubdomainHierarchy,
) -> Result<(HierarchicalMesh, HierarchicalBasis)> {
    regions.validate(ladder)?;
    let depth = regions.depth();

    let mut cells = Vec::new();
    for level in 0..depth {
        for k in 0..ladder.cells(level) {
            if regions.in_region(level, k) && !regions.is_refined(level, k) {
                cells.push(Cell { level, index: k });
            }
        }
    }
    cells.sort_by_key(|c| LevelLadder::int_coord(c.level, c.index as i64));

    let mut functions = Vec::new();
    for level in 0..depth {
        for i in 0..ladder.num_functions(level) {
            let support = ladder.support_cells(level, i);
            let inside = support.iter().all(|&k| regions.in_region(level, k));
            let covered = support.iter().all(|&k| regions.is_refined(level, k));
            if inside && !covered {
                functions.push(ladder.function(level, i));
            }
        }
    }

    Ok((
        HierarchicalMesh {
            ladder: ladder.clone(),
            cells,
        },
        HierarchicalBasis { functions },
    ))
}

/// Adds every marked active cell to the next region.
pub fn refine(
    mesh: &HierarchicalMesh,
    regions: &SubdomainHierarchy,
    marked: &[Cell],
) -> Result<SubdomainHierarchy> {
    let mut out = regions.clone();
    for &c in marked {
        if mesh.position(c).is_none() {
            return Err(Error::CellNotActive {
                level: c.level,
                index: c.index,
            });
        }
        if c.level + 1 >= MAX_LEVEL {
            return Err(Error::InvalidHierarchy(format!(
                "cannot refine beyond level {MAX_LEVEL}"
            )));
        }
        out.add(c.level, c.index);
    }
    Ok(out)
}

/// A mesh cell mapped to the physical boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalCell {
    pub cell: Cell,
    pub t0: f64,
    pub t1: f64,
    pub arc_length: f64,
}

pub fn cell_geometry(mesh: &HierarchicalMesh, curve: &SplineCurve) -> Result<Vec<PhysicalCell>> {
    let (a, b) = mesh.ladder.domain();
    let (ca, cb) = curve.domain();
    let tol = KNOT_TOL * (b - a).abs().max(1.0);
    if (a - ca).abs() > tol || (b - cb).abs() > tol {
        return Err(Error::DomainMismatch);
    }
    let deriv = curve.derivative();
    let geo_breaks = curve.knots().breakpoints().breakpoints;
    Ok((0..mesh.len())
        .map(|pos| {
            let (t0, t1) = mesh.interval(pos);
            let mut cuts = vec![t0];
            cuts.extend(geo_breaks.iter().copied().filter(|&x| x > t0 && x < t1));
            cuts.push(t1);
            let arc_length = cuts
                .windows(2)
                .map(|w| {
                    gauss::integrate(12, w[0], w[1], |t| {
                        let v = deriv.eval_unchecked(t);
                        v[0].hypot(v[1])
                    })
                })
                .sum();
            PhysicalCell {
                cell: mesh.cells[pos],
                t0,
                t1,
                arc_length,
            }
        })
        .collect())
}

/// Serializable description of a hierarchical mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSnapshot {
    pub degree: usize,
    pub kind: KnotKind,
    pub domain: [f64; 2],
    pub base_cells: usize,
    pub refined: Vec<Vec<usize>>,
    pub active_cells: Vec<[f64; 2]>,
    pub active_levels: Vec<usize>,
}

impl MeshSnapshot {
    pub fn new(mesh: &HierarchicalMesh, regions: &SubdomainHierarchy) -> Self {
        let l = &mesh.ladder;
        Self {
            degree: l.degree,
            kind: l.kind,
            domain: [l.a, l.b],
            base_cells: l.base_cells,
            refined: regions.refined.clone(),
            active_cells: (0..mesh.len())
                .map(|i| {
                    let (lo, hi) = mesh.interval(i);
                    [lo, hi]
                })
                .collect(),
            active_levels: mesh.cells.iter().map(|c| c.level).collect(),
        }
    }
}

/// Ladder, regions, mesh and basis kept together.
#[derive(Debug, Clone)]
pub struct HierarchicalSpace {
    pub ladder: LevelLadder,
    pub regions: SubdomainHierarchy,
    pub mesh: HierarchicalMesh,
    pub basis: HierarchicalBasis,
}

impl HierarchicalSpace {
    pub fn new(ladder: LevelLadder, regions: SubdomainHierarchy) -> Result<Self> {
        let (mesh, basis) = build_hierarchy(&ladder, &regions)?;
        Ok(Self {
            ladder,
            regions,
            mesh,
            basis,
        })
    }

    pub fn single_level(ladder: LevelLadder) -> Self {
        Self::new(ladder, SubdomainHierarchy::empty()).expect("one-level hierarchy is valid")
    }

    pub fn refine(&self, marked: &[Cell]) -> Result<Self> {
        let regions = refine(&self.mesh, &self.regions, marked)?;
        Self::new(self.ladder.clone(), regions)
    }

    /// Uniform refinement of all active cells.
    pub fn refine_all(&self) -> Result<Self> {
        self.refine(&self.mesh.cells.clone())
    }

    pub fn snapshot(&self) -> MeshSnapshot {
        MeshSnapshot::new(&self.mesh, &self.regions)
    }
}
