//! Sparse families by a level-set stopping time, exact sparsity checks, and
//! pointwise domination certificates.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::ExponentTuple;
use crate::geometry::{DyadicCube, GridShift};
use crate::measure::{cell_count, Lattice, LatticeFunction, StepFunction};
use crate::operators::{
    frac_integral_dyadic_lat, frac_maximal_dyadic_lat, grid_cubes, sparse_apply_lat, CubeScope,
    GridCube,
};

/// Retries allowed after the first attempt; each doubles the level ratio.
pub const MAX_RETRIES: usize = 5;

/// Cubes of one grid with explicit exceptional sets `E(Q)` stored as
/// lattice cell indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFamily {
    pub grid: GridShift,
    pub lattice: Lattice,
    pub cubes: Vec<DyadicCube>,
    pub exceptional: Vec<Vec<u32>>,
    /// Level ratio `a` used by the construction (0 for hand-built families).
    pub ratio: f64,
}

impl SparseFamily {
    pub fn empty(grid: GridShift, lattice: Lattice) -> Self {
        SparseFamily {
            grid,
            lattice,
            cubes: Vec::new(),
            exceptional: Vec::new(),
            ratio: 0.0,
        }
    }

    /// Family with given exceptional sets, each as aligned cell lists.
    pub fn from_parts(
        grid: GridShift,
        lattice: Lattice,
        cubes: Vec<DyadicCube>,
        exceptional: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if cubes.len() != exceptional.len() {
            return Err(Error::Config("one exceptional set per cube is required".into()));
        }
        for c in &cubes {
            if c.shift != grid {
                return Err(Error::Config(format!("{c} is not in grid {grid}")));
            }
            lattice.ranges(&c.cube_box())?;
        }
        Ok(SparseFamily {
            grid,
            lattice,
            cubes,
            exceptional,
            ratio: 0.0,
        })
    }

    /// Family whose exceptional sets are the cubes minus their selected
    /// strict subcubes.
    pub fn with_complements(grid: GridShift, lattice: Lattice, cubes: Vec<DyadicCube>) -> Result<Self> {
        let ranges: Vec<Vec<(usize, usize)>> = cubes
            .iter()
            .map(|c| lattice.ranges(&c.cube_box()))
            .collect::<Result<_>>()?;
        let exceptional = owner_sets(&lattice, &cubes, &ranges);
        SparseFamily::from_parts(grid, lattice, cubes, exceptional)
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn ranges(&self, i: usize) -> Vec<(usize, usize)> {
        self.lattice
            .ranges(&self.cubes[i].cube_box())
            .expect("sparse cubes lie in the window")
    }

    /// CSV rows `t,k,m,e_cells` after the mesh header; multi-axis fields are
    /// joined with `;`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        crate::measure::write_mesh_header(&mut s, &self.lattice.mesh);
        s.push_str("t,k,m,e_cells\n");
        for (c, e) in self.cubes.iter().zip(&self.exceptional) {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                c.shift.labels().join(";"),
                c.scale,
                join_ints(&c.index),
                e.len()
            );
        }
        s
    }

    /// Sidecar listing each cube's exceptional cells: `cube_index,cells`
    /// with space-separated lattice indices.
    pub fn cells_csv(&self) -> String {
        let mut s = String::from("cube_index,cells\n");
        for (i, e) in self.exceptional.iter().enumerate() {
            let cells: Vec<String> = e.iter().map(u32::to_string).collect();
            let _ = writeln!(s, "{i},{}", cells.join(" "));
        }
        s
    }
}

fn join_ints(v: &[i64]) -> String {
    v.iter().map(i64::to_string).collect::<Vec<_>>().join(";")
}

/// Assigns each cell to the finest cube containing it (cubes coarse first).
fn owner_sets(lattice: &Lattice, cubes: &[DyadicCube], ranges: &[Vec<(usize, usize)>]) -> Vec<Vec<u32>> {
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    order.sort_by_key(|&i| cubes[i].scale);
    let mut owner = vec![u32::MAX; lattice.cell_count()];
    for &i in &order {
        for c in lattice.cells_in(&ranges[i]) {
            owner[c] = i as u32;
        }
    }
    let mut sets = vec![Vec::new(); cubes.len()];
    for (c, &o) in owner.iter().enumerate() {
        if o != u32::MAX {
            sets[o as usize].push(c as u32);
        }
    }
    sets
}

/// Largest integer `k` with `a^k < v`, for `v > 0`.
fn level_below(v: f64, a: f64) -> i32 {
    let mut k = (v.ln() / a.ln()).floor() as i32;
    while a.powi(k) >= v {
        k -= 1;
    }
    while a.powi(k + 1) < v {
        k += 1;
    }
    k
}

/// Level construction: `Q` is selected when, for some level `k` the
/// operator attains, `Q` is maximal among cubes with value `> a^k`.
/// Levels below the smallest positive value all select the same maximal
/// cubes, so `k` ranges over finitely many integers.
fn select_levels(cubes: &[GridCube], values: &[f64], a: f64) -> Vec<usize> {
    let positive = values.iter().copied().filter(|&v| v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi <= 0.0 {
        return Vec::new();
    }
    let k_min = level_below(lo, a);
    let index: HashMap<&DyadicCube, usize> =
        cubes.iter().enumerate().map(|(i, gc)| (&gc.cube, i)).collect();
    // Max of the values over strict ancestors inside the cube set.
    let mut above = vec![0.0f64; cubes.len()];
    for (i, gc) in cubes.iter().enumerate() {
        if let Some(&p) = index.get(&gc.cube.parent()) {
            above[i] = above[p].max(values[p]);
        }
    }
    (0..cubes.len())
        .filter(|&i| {
            let v = values[i];
            if v <= 0.0 {
                return false;
            }
            let k = level_below(v, a);
            k >= k_min && a.powi(k) >= above[i]
        })
        .collect()
}

fn family_from_selection(
    grid: &GridShift,
    lattice: Lattice,
    cubes: &[GridCube],
    picked: &[usize],
    ratio: f64,
) -> SparseFamily {
    let chosen: Vec<DyadicCube> = picked.iter().map(|&i| cubes[i].cube.clone()).collect();
    let ranges: Vec<Vec<(usize, usize)>> = picked.iter().map(|&i| cubes[i].ranges.clone()).collect();
    let exceptional = owner_sets(&lattice, &chosen, &ranges);
    SparseFamily {
        grid: grid.clone(),
        lattice,
        cubes: chosen,
        exceptional,
        ratio,
    }
}

/// Runs the level construction on per-cube values, doubling `a` until the
/// result verifies.
fn build_from_values(
    grid: &GridShift,
    lattice: Lattice,
    cubes: &[GridCube],
    values: &[f64],
    a: f64,
) -> Result<SparseFamily> {
    let mut ratio = a;
    let mut failures = Vec::new();
    for _ in 0..=MAX_RETRIES {
        let picked = select_levels(cubes, values, ratio);
        let family = family_from_selection(grid, lattice, cubes, &picked, ratio);
        let report = verify_sparse(&family);
        if report.pass {
            return Ok(family);
        }
        failures.push(format!("a = {ratio}: {} failing cubes", report.failing()));
        ratio *= 2.0;
    }
    Err(Error::Construction(format!(
        "sparsity not reached after {MAX_RETRIES} retries ({})",
        failures.join("; ")
    )))
}

/// Default level ratio `2^{mn+1}`.
pub fn default_ratio(exps: &ExponentTuple) -> f64 {
    2f64.powi((exps.m * exps.dim) as i32 + 1)
}

/// Sparse family dominating `M_α^D(f1, f2)` on one grid.
pub fn build_sparse(
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
    grid: &GridShift,
    a: f64,
) -> Result<SparseFamily> {
    let lattice = f1.mesh().lattice();
    let l1 = LatticeFunction::from_step(f1, lattice);
    let l2 = LatticeFunction::from_step(f2, lattice);
    build_sparse_lat(&l1, &l2, exps, grid, a)
}

pub fn build_sparse_lat(
    f1: &LatticeFunction,
    f2: &LatticeFunction,
    exps: &ExponentTuple,
    grid: &GridShift,
    a: f64,
) -> Result<SparseFamily> {
    exps.validate()?;
    let floor = 2f64.powi((exps.m * exps.dim) as i32);
    if !(a > floor) {
        return Err(Error::Config(format!("level ratio must exceed {floor}, got {a}")));
    }
    let lattice = f1.lattice;
    let cubes = grid_cubes(&lattice, grid, CubeScope::Window);
    let values: Vec<f64> = cubes.iter().map(|gc| gc.frac_value(f1, f2, exps.alpha)).collect();
    build_from_values(grid, lattice, &cubes, &values, a)
}

/// Exact checks of one cube of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeCheck {
    pub scale: i32,
    pub index: Vec<i64>,
    pub cells: usize,
    pub exceptional_cells: usize,
    pub union_cells: usize,
    pub contained: bool,
    pub measure_ok: bool,
    pub union_ok: bool,
}

impl CubeCheck {
    pub fn pass(&self) -> bool {
        self.contained && self.measure_ok && self.union_ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseReport {
    pub pass: bool,
    /// Cells claimed by more than one exceptional set.
    pub overlapping_cells: usize,
    pub cubes: Vec<CubeCheck>,
}

impl SparseReport {
    pub fn failing(&self) -> usize {
        self.cubes.iter().filter(|c| !c.pass()).count() + usize::from(self.overlapping_cells > 0)
    }
}

/// Checks pairwise disjointness of the `E(Q)`, `|Q| <= 2|E(Q)|`,
/// `E(Q) ⊆ Q`, and `|⋃_{Q' ⊊ Q} Q'| <= |Q|/2`, all in exact cell counts.
pub fn verify_sparse(family: &SparseFamily) -> SparseReport {
    let lattice = family.lattice;
    let mut hits = vec![0u8; lattice.cell_count()];
    for e in &family.exceptional {
        for &c in e {
            let h = &mut hits[c as usize];
            *h = h.saturating_add(1);
        }
    }
    let overlapping_cells = hits.iter().filter(|&&h| h > 1).count();
    let ranges: Vec<Vec<(usize, usize)>> = (0..family.len()).map(|i| family.ranges(i)).collect();
    let inside = |outer: &[(usize, usize)], inner: &[(usize, usize)]| {
        outer
            .iter()
            .zip(inner)
            .all(|(o, i)| o.0 <= i.0 && i.1 <= o.1)
    };
    let cubes = (0..family.len())
        .map(|i| {
            let r = &ranges[i];
            let cells = cell_count(r);
            let local = |c: usize| -> Option<usize> {
                let idx = lattice.unflat(c);
                let mut flat = 0;
                for (a, &x) in idx.iter().enumerate() {
                    if x < r[a].0 || x >= r[a].1 {
                        return None;
                    }
                    flat = flat * (r[a].1 - r[a].0) + (x - r[a].0);
                }
                Some(flat)
            };
            let contained = family.exceptional[i]
                .iter()
                .all(|&c| local(c as usize).is_some());
            let mut covered = vec![false; cells];
            for (j, rj) in ranges.iter().enumerate() {
                if j != i && rj != r && inside(r, rj) {
                    for c in lattice.cells_in(rj) {
                        if let Some(l) = local(c) {
                            covered[l] = true;
                        }
                    }
                }
            }
            let union_cells = covered.iter().filter(|&&b| b).count();
            let e = family.exceptional[i].len();
            CubeCheck {
                scale: family.cubes[i].scale,
                index: family.cubes[i].index.clone(),
                cells,
                exceptional_cells: e,
                union_cells,
                contained,
                measure_ok: cells <= 2 * e,
                union_ok: 2 * union_cells <= cells,
            }
        })
        .collect::<Vec<_>>();
    let pass = overlapping_cells == 0 && cubes.iter().all(CubeCheck::pass);
    SparseReport {
        pass,
        overlapping_cells,
        cubes,
    }
}

/// Min/max of a pointwise ratio over cells where the denominator is positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRange {
    pub min: f64,
    pub max: f64,
    pub cells: usize,
    /// Cells where the numerator is positive but the denominator vanishes.
    pub uncovered: usize,
}

pub fn ratio_range(num: &[f64], den: &[f64]) -> RatioRange {
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    let mut cells = 0;
    let mut uncovered = 0;
    for (&n, &d) in num.iter().zip(den) {
        if d > 0.0 {
            let r = n / d;
            min = min.min(r);
            max = max.max(r);
            cells += 1;
        } else if n > 0.0 {
            uncovered += 1;
        }
    }
    if cells == 0 {
        min = 0.0;
    }
    RatioRange {
        min,
        max,
        cells,
        uncovered,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub grid: String,
    pub ratio: f64,
    pub family_size: usize,
    pub verified: bool,
    /// `M_α^D / T_{S,α}`.
    pub maximal: RatioRange,
    /// `I_α^D / T_{S',α}` when `α > 0` and the summed construction succeeds.
    pub integral: Option<RatioRange>,
    pub integral_family_size: Option<usize>,
    pub notes: Vec<String>,
}

/// Builds `S` and the ratio fields `M_α^D / T_{S,α}` and, for `α > 0`,
/// `I_α^D / T_{S',α}` where `S'` applies the level construction to the
/// partial sums `Σ_{R ⊇ Q} |R|^{α/n} ⟨f1⟩_R ⟨f2⟩_R`.
pub fn domination_report(
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
    grid: &GridShift,
) -> Result<DominationReport> {
    let lattice = f1.mesh().lattice();
    let l1 = LatticeFunction::from_step(f1, lattice);
    let l2 = LatticeFunction::from_step(f2, lattice);
    let a = default_ratio(exps);
    let family = build_sparse_lat(&l1, &l2, exps, grid, a)?;
    let verified = verify_sparse(&family).pass;
    let m = frac_maximal_dyadic_lat(&l1, &l2, exps.alpha, grid, CubeScope::Window);
    let t = sparse_apply_lat(&family, &l1, &l2, exps.alpha, false);
    let maximal = ratio_range(&m.values, &t.values);
    let mut notes = Vec::new();
    let (integral, integral_family_size) = if exps.alpha > 0.0 {
        let cubes = grid_cubes(&lattice, grid, CubeScope::Window);
        let own: Vec<f64> = cubes.iter().map(|gc| gc.frac_value(&l1, &l2, exps.alpha)).collect();
        let index: HashMap<&DyadicCube, usize> =
            cubes.iter().enumerate().map(|(i, gc)| (&gc.cube, i)).collect();
        let mut partial = vec![0.0; cubes.len()];
        for (i, gc) in cubes.iter().enumerate() {
            let up = index.get(&gc.cube.parent()).map_or(0.0, |&p| partial[p]);
            partial[i] = up + own[i];
        }
        match build_from_values(grid, lattice, &cubes, &partial, a) {
            Ok(fam) => {
                let id = frac_integral_dyadic_lat(&l1, &l2, exps.alpha, grid, CubeScope::Window);
                let ts = sparse_apply_lat(&fam, &l1, &l2, exps.alpha, false);
                (Some(ratio_range(&id.values, &ts.values)), Some(fam.len()))
            }
            Err(e) => {
                notes.push(format!("integral part unavailable: {e}"));
                (None, None)
            }
        }
    } else {
        notes.push("integral part skipped: alpha = 0".into());
        (None, None)
    };
    Ok(DominationReport {
        grid: grid.to_string(),
        ratio: family.ratio,
        family_size: family.len(),
        verified,
        maximal,
        integral,
        integral_family_size,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{RationalBox, Rational};
    use crate::measure::Mesh;
    use crate::operators::sparse_apply;
    use approx::assert_relative_eq;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn unit(mesh: Mesh) -> StepFunction {
        StepFunction::indicator(mesh, &RationalBox::interval(r(0, 1), r(1, 1)).unwrap()).unwrap()
    }

    fn exps0() -> ExponentTuple {
        ExponentTuple::new(1, 0.0, 2.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn levels() {
        assert_eq!(level_below(1.0, 8.0), -1);
        assert_eq!(level_below(0.25, 8.0), -1);
        assert_eq!(level_below(8.5, 8.0), 1);
        assert_eq!(level_below(8.0, 8.0), 0);
    }

    #[test]
    fn hand_run_unit_indicator() {
        let mesh = Mesh::new(1, 1, 4).unwrap();
        let f = unit(mesh);
        let g = GridShift::zero(1);
        let fam = build_sparse(&f, &f, &exps0(), &g, 8.0).unwrap();
        assert_eq!(fam.len(), 1);
        let b = fam.cubes[0].cube_box();
        assert_eq!((b.lo[0], b.hi[0]), (r(0, 1), r(2, 1)));
        assert_eq!(fam.exceptional[0].len(), mesh.lattice().len() / 2);
        let t = sparse_apply(&fam, &f, &f, &exps0()).unwrap();
        assert_relative_eq!(t.value_at(&[0.3]), 0.25);
        assert_relative_eq!(t.value_at(&[1.7]), 0.25);
        assert_eq!(t.value_at(&[-0.5]), 0.0);
        let rep = domination_report(&f, &f, &exps0(), &g).unwrap();
        assert!(rep.verified);
    }

    #[test]
    fn constant_and_zero_inputs() {
        let mesh = Mesh::new(1, 1, 3).unwrap();
        let one = StepFunction::constant(mesh, 1.0).unwrap();
        let g = GridShift::zero(1);
        let fam = build_sparse(&one, &one, &exps0(), &g, 8.0).unwrap();
        assert_eq!(fam.len(), 2);
        assert!(fam.cubes.iter().all(|c| c.scale == -1));
        let rep = domination_report(&one, &one, &exps0(), &g).unwrap();
        assert_relative_eq!(rep.maximal.min, 1.0);
        assert_relative_eq!(rep.maximal.max, 1.0);
        let z = StepFunction::zero(mesh);
        assert!(build_sparse(&z, &one, &exps0(), &g, 8.0).unwrap().is_empty());
    }

    #[test]
    fn forced_counterexample_fails() {
        let mesh = Mesh::new(1, 1, 3).unwrap();
        let lat = mesh.lattice();
        let g = GridShift::zero(1);
        let cube = |k: i32, m: i64| DyadicCube::new(g.clone(), k, vec![m]);
        let cubes = vec![cube(0, 0), cube(1, 0), cube(1, 1)];
        let cells = |c: &DyadicCube| -> Vec<u32> {
            lat.cells_in(&lat.ranges(&c.cube_box()).unwrap())
                .into_iter()
                .map(|x| x as u32)
                .collect()
        };
        let e = vec![Vec::new(), cells(&cubes[1]), cells(&cubes[2])];
        let fam = SparseFamily::from_parts(g.clone(), lat, cubes.clone(), e).unwrap();
        let rep = verify_sparse(&fam);
        assert!(!rep.pass);
        assert!(!rep.cubes[0].measure_ok && !rep.cubes[0].union_ok);
        let single = SparseFamily::with_complements(g, lat, vec![cubes[0].clone()]).unwrap();
        assert!(verify_sparse(&single).pass);
    }

    #[test]
    fn csv_layout() {
        let mesh = Mesh::new(1, 1, 2).unwrap();
        let f = unit(mesh);
        let fam = build_sparse(&f, &f, &exps0(), &GridShift::zero(1), 8.0).unwrap();
        let csv = fam.to_csv();
        assert!(csv.contains("t,k,m,e_cells\n0,-1,0,"));
        assert!(fam.cells_csv().starts_with("cube_index,cells\n0,"));
    }
}
