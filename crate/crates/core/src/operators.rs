//! Maximal and integral operators evaluated on the refined lattice.
//!
//! Continuum suprema run over every lattice-aligned cube, computed with
//! prefix sums and a separable sliding-window maximum per side length.
//! Dyadic operators run over the cubes of one shifted grid.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::ExponentTuple;
use crate::geometry::{enumerate_cubes, enumerate_meeting, DyadicCube, GridShift, RationalBox};
use crate::measure::{
    cell_count, kahan_sum, lorentz_from_masses, lp_from_masses, read_cell_rows, read_mesh_header,
    weak_from_masses, write_mesh_header, Lattice, LatticeFunction, Mesh, StepFunction,
};
use crate::sparse::SparseFamily;

/// Nonnegative field on a lattice, tagged with the operator that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorField {
    pub lattice: Lattice,
    pub tag: String,
    pub values: Vec<f64>,
}

impl OperatorField {
    pub fn new(lattice: Lattice, tag: impl Into<String>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), lattice.cell_count());
        OperatorField {
            lattice,
            tag: tag.into(),
            values,
        }
    }

    pub fn zeros(lattice: Lattice, tag: impl Into<String>) -> Self {
        let n = lattice.cell_count();
        OperatorField::new(lattice, tag, vec![0.0; n])
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.lattice.cell_of(x).map_or(0.0, |c| self.values[c])
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// (value, w-mass) per lattice cell.
    fn masses(&self, w: &StepFunction) -> Vec<(f64, f64)> {
        assert_eq!(*w.mesh(), self.lattice.mesh, "weight and field meshes differ");
        let vol = self.lattice.cell_volume();
        let wv = w.values();
        self.values
            .iter()
            .enumerate()
            .map(|(c, &v)| (v, wv[self.lattice.mesh_cell(c)] * vol))
            .collect()
    }

    pub fn lp_norm(&self, w: &StepFunction, p: f64) -> Result<f64> {
        lp_from_masses(&self.masses(w), p)
    }

    pub fn lorentz_norm(&self, w: &StepFunction, p: f64, q: f64) -> Result<f64> {
        lorentz_from_masses(&self.masses(w), p, q)
    }

    /// Weak `L^{p,∞}(w)` norm as a sup over the field's levels.
    pub fn weak_norm(&self, w: &StepFunction, p: f64) -> Result<f64> {
        weak_from_masses(&self.masses(w), p)
    }

    /// Integral over an aligned box clipped to the window.
    pub fn integrate_box(&self, b: &RationalBox) -> Result<f64> {
        let ranges = self.lattice.clipped_ranges(b)?;
        Ok(kahan_sum(
            self.lattice
                .cells_in(&ranges)
                .into_iter()
                .map(|c| self.values[c]),
        ) * self.lattice.cell_volume())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tag,{}", self.tag);
        write_mesh_header(&mut s, &self.lattice.mesh);
        s.push_str("cell_index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        s
    }

    /// Reads the tagged layout; the refinement is inferred from the row count.
    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let tag = lines
            .next()
            .and_then(|l| l.strip_prefix("tag,"))
            .ok_or_else(|| Error::parse(path, "missing `tag,<name>` line"))?
            .to_string();
        let mesh = read_mesh_header(&mut lines, path)?;
        let rest: Vec<&str> = lines.collect();
        let rows = rest.len().saturating_sub(1);
        let refine = (1..=4)
            .find(|&r| Lattice::new(mesh, r).cell_count() == rows)
            .ok_or_else(|| Error::parse(path, format!("{rows} rows match no lattice refinement")))?;
        let lattice = Lattice::new(mesh, refine);
        let values = read_cell_rows(rest.into_iter(), lattice.cell_count(), path)?;
        Ok(OperatorField::new(lattice, tag, values))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        OperatorField::from_csv(&fs::read_to_string(path)?, path)
    }
}

/// Sliding maximum of width `s` over `w` (length `ext - s + 1`), combined
/// into `out` (length `ext`): `out[x] = max(out[x], max w[a], x - s < a <= x)`.
fn sliding_max_into(w: &[f64], s: usize, out: &mut [f64], dq: &mut VecDeque<usize>) {
    let m = w.len();
    dq.clear();
    for x in 0..out.len() {
        if x < m {
            while let Some(&b) = dq.back() {
                if w[b] <= w[x] {
                    dq.pop_back();
                } else {
                    break;
                }
            }
            dq.push_back(x);
        }
        while let Some(&f) = dq.front() {
            if f + s <= x {
                dq.pop_front();
            } else {
                break;
            }
        }
        let v = w[*dq.front().expect("window is never empty")];
        if v > out[x] {
            out[x] = v;
        }
    }
}

fn max_into(acc: &mut [f64], other: &[f64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        if *b > *a {
            *a = *b;
        }
    }
}

/// All-cube supremum over a cubic region of `ext` cells per axis: for each
/// cell, the max of `value(start, side)` over sub-cubes containing it.
/// `start` is relative to the region; output is row-major over the region.
pub fn cube_sup<F>(dim: usize, ext: usize, value: F) -> Vec<f64>
where
    F: Fn(&[usize], usize) -> f64 + Sync,
{
    let per_side = |acc: &mut Vec<f64>, s: usize, dq: &mut VecDeque<usize>| match dim {
        1 => {
            let w: Vec<f64> = (0..=ext - s).map(|a| value(&[a], s)).collect();
            sliding_max_into(&w, s, acc, dq);
        }
        _ => {
            let m = ext - s + 1;
            // Rows: maximize along axis 1 for each start a0.
            let mut rows = vec![0.0; m * ext];
            let mut w = vec![0.0; m];
            for a0 in 0..m {
                for (a1, slot) in w.iter_mut().enumerate() {
                    *slot = value(&[a0, a1], s);
                }
                sliding_max_into(&w, s, &mut rows[a0 * ext..(a0 + 1) * ext], dq);
            }
            // Columns: maximize along axis 0.
            let mut col = vec![0.0; m];
            let mut out = vec![0.0; ext];
            for x1 in 0..ext {
                for (a0, slot) in col.iter_mut().enumerate() {
                    *slot = rows[a0 * ext + x1];
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                sliding_max_into(&col, s, &mut out, dq);
                for x0 in 0..ext {
                    let v = out[x0];
                    let slot = &mut acc[x0 * ext + x1];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
    };
    let cells = ext.pow(dim as u32);
    if ext >= 192 {
        (1..=ext)
            .into_par_iter()
            .fold(
                || (vec![0.0; cells], VecDeque::new()),
                |(mut acc, mut dq), s| {
                    per_side(&mut acc, s, &mut dq);
                    (acc, dq)
                },
            )
            .map(|(acc, _)| acc)
            .reduce(
                || vec![0.0; cells],
                |mut a, b| {
                    max_into(&mut a, &b);
                    a
                },
            )
    } else {
        let mut acc = vec![0.0; cells];
        let mut dq = VecDeque::new();
        for s in 1..=ext {
            per_side(&mut acc, s, &mut dq);
        }
        acc
    }
}

fn offset(start: &[usize], origin: &[usize]) -> [usize; 2] {
    let mut o = [0; 2];
    for (a, (&s, &g)) in start.iter().zip(origin).enumerate() {
        o[a] = s + g;
    }
    o
}

/// `M(1_Q w)` over the window, supremum over lattice cubes.
pub fn hl_maximal(w: &StepFunction, restrict: &RationalBox) -> Result<OperatorField> {
    let lattice = w.mesh().lattice();
    let ranges = lattice.clipped_ranges(restrict)?;
    let mut vals = vec![0.0; lattice.cell_count()];
    let base = w.on_lattice(&lattice);
    for c in lattice.cells_in(&ranges) {
        vals[c] = base[c];
    }
    let lf = LatticeFunction::new(lattice, vals);
    let dim = lattice.dim();
    let field = cube_sup(dim, lattice.len(), |start, s| {
        lf.cube_sum(start, s) / (s.pow(dim as u32) as f64)
    });
    Ok(OperatorField::new(lattice, "hl-maximal", field))
}

/// `∫_Q M(1_Q w) / w(Q)` for a lattice-aligned cube given by its ranges.
/// For points of `Q` the supremum may be restricted to sub-cubes of `Q`.
pub fn rho_on_ranges(w: &LatticeFunction, ranges: &[(usize, usize)]) -> Result<f64> {
    let total = w.sum(ranges);
    if total <= 0.0 {
        return Err(Error::DegenerateWeight("weight has zero mass on the cube".into()));
    }
    let dim = w.lattice.dim();
    let ext = ranges[0].1 - ranges[0].0;
    let origin: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let field = cube_sup(dim, ext, |start, s| {
        let o = offset(start, &origin);
        w.cube_sum(&o[..dim], s) / (s.pow(dim as u32) as f64)
    });
    Ok(kahan_sum(field) / total)
}

/// `sup_{P ⊂ Q, P ∋ x} |P|^{α/n} ⟨f1⟩_P ⟨f2⟩_P` on the cells of a
/// lattice-aligned cube, row-major over the cube.
pub fn local_frac_maximal(
    f1: &LatticeFunction,
    f2: &LatticeFunction,
    alpha: f64,
    ranges: &[(usize, usize)],
) -> Vec<f64> {
    let lattice = f1.lattice;
    let dim = lattice.dim();
    let ext = ranges[0].1 - ranges[0].0;
    let origin: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let coef = side_coefficients(&lattice, ext, alpha);
    cube_sup(dim, ext, |start, s| {
        let o = offset(start, &origin);
        coef[s] * f1.cube_sum(&o[..dim], s) * f2.cube_sum(&o[..dim], s)
    })
}

/// `|P|^{α/n} / (cells of P)^2` for each side `s` in cells.
fn side_coefficients(lattice: &Lattice, ext: usize, alpha: f64) -> Vec<f64> {
    let h = lattice.cell_side();
    let dim = lattice.dim() as i32;
    (0..=ext)
        .map(|s| {
            if s == 0 {
                0.0
            } else {
                (s as f64 * h).powf(alpha) / (s as f64).powi(2 * dim)
            }
        })
        .collect()
}

/// Continuum `M_α(f1, f2)` surrogate: supremum over every lattice cube in
/// the window. The lattice refines the mesh by 3, so every shifted-grid
/// cube with scale at most `J` is a competitor.
pub fn frac_maximal_oracle(
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
) -> Result<OperatorField> {
    check_pair(f1, f2, exps)?;
    let lattice = f1.mesh().lattice();
    let l1 = LatticeFunction::from_step(f1, lattice);
    let l2 = LatticeFunction::from_step(f2, lattice);
    Ok(frac_maximal_oracle_lat(&l1, &l2, exps.alpha))
}

pub fn frac_maximal_oracle_lat(f1: &LatticeFunction, f2: &LatticeFunction, alpha: f64) -> OperatorField {
    let lattice = f1.lattice;
    if f1.values.iter().all(|&v| v == 0.0) || f2.values.iter().all(|&v| v == 0.0) {
        return OperatorField::zeros(lattice, "frac-maximal-oracle");
    }
    let full: Vec<(usize, usize)> = vec![(0, lattice.len()); lattice.dim()];
    let vals = local_frac_maximal(f1, f2, alpha, &full);
    OperatorField::new(lattice, "frac-maximal-oracle", vals)
}

fn check_pair(f1: &StepFunction, f2: &StepFunction, exps: &ExponentTuple) -> Result<()> {
    if f1.mesh() != f2.mesh() {
        return Err(Error::Mesh("inputs live on different meshes".into()));
    }
    if f1.mesh().dim != exps.dim {
        return Err(Error::ExponentDomain(format!(
            "exponents are for n = {}, mesh has n = {}",
            exps.dim,
            f1.mesh().dim
        )));
    }
    exps.validate()
}

/// Which grid cubes an operator ranges over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CubeScope {
    /// Cubes inside the window with scales `-L..=J`.
    Window,
    /// Cubes meeting the window with scales `-(L+3)..=J`; the inputs vanish
    /// outside the window, so integrals are clipped and `|Q|` is the full
    /// volume.
    Extended,
}

/// A grid cube together with its clipped lattice ranges.
#[derive(Clone, Debug)]
pub struct GridCube {
    pub cube: DyadicCube,
    pub ranges: Vec<(usize, usize)>,
    /// Lattice cells of the full, unclipped cube.
    pub full_cells: f64,
    pub side: f64,
}

impl GridCube {
    pub fn average(&self, f: &LatticeFunction) -> f64 {
        f.sum(&self.ranges) / self.full_cells
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.ranges.len() as i32)
    }

    /// `|Q|^{α/n} ⟨f1⟩_Q ⟨f2⟩_Q`.
    pub fn frac_value(&self, f1: &LatticeFunction, f2: &LatticeFunction, alpha: f64) -> f64 {
        self.side.powf(alpha) * self.average(f1) * self.average(f2)
    }

    pub fn cells(&self, lattice: &Lattice) -> Vec<usize> {
        lattice.cells_in(&self.ranges)
    }
}

/// Cubes of one grid in the given scope, ordered by scale then index.
pub fn grid_cubes(lattice: &Lattice, grid: &GridShift, scope: CubeScope) -> Vec<GridCube> {
    let level = lattice.mesh.window.level as i32;
    let j = lattice.mesh.resolution as i32;
    let cubes = match scope {
        CubeScope::Window => enumerate_cubes(lattice.mesh.window, grid, -level, j),
        CubeScope::Extended => enumerate_meeting(lattice.mesh.window, grid, -(level + 3), j),
    };
    let dim = lattice.dim();
    cubes
        .into_iter()
        .map(|cube| {
            let b = cube.cube_box();
            let ranges = lattice
                .clipped_ranges(&b)
                .expect("grid cubes with scale <= J are lattice-aligned");
            let side_cells = lattice
                .box_nodes(&b)
                .expect("aligned")
                .first()
                .map(|(s, e)| (e - s) as f64)
                .unwrap();
            GridCube {
                side: cube.side_f64(),
                full_cells: side_cells.powi(dim as i32),
                cube,
                ranges,
            }
        })
        .filter(|gc| cell_count(&gc.ranges) > 0)
        .collect()
}

/// Paints `max(field, value)` over each cube's cells.
fn paint_max(lattice: &Lattice, field: &mut [f64], ranges: &[(usize, usize)], v: f64) {
    let len = lattice.len();
    match ranges {
        [(a, b)] => field[*a..*b].iter_mut().for_each(|x| *x = x.max(v)),
        [(a0, b0), (a1, b1)] => {
            for i in *a0..*b0 {
                field[i * len + a1..i * len + b1]
                    .iter_mut()
                    .for_each(|x| *x = x.max(v));
            }
        }
        _ => unreachable!(),
    }
}

fn paint_add(lattice: &Lattice, field: &mut [f64], ranges: &[(usize, usize)], v: f64) {
    let len = lattice.len();
    match ranges {
        [(a, b)] => field[*a..*b].iter_mut().for_each(|x| *x += v),
        [(a0, b0), (a1, b1)] => {
            for i in *a0..*b0 {
                field[i * len + a1..i * len + b1]
                    .iter_mut()
                    .for_each(|x| *x += v);
            }
        }
        _ => unreachable!(),
    }
}

/// `M_α^D(f1, f2)` for one grid.
pub fn frac_maximal_dyadic(
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
    grid: &GridShift,
) -> Result<OperatorField> {
    check_pair(f1, f2, exps)?;
    let lattice = f1.mesh().lattice();
    let l1 = LatticeFunction::from_step(f1, lattice);
    let l2 = LatticeFunction::from_step(f2, lattice);
    Ok(frac_maximal_dyadic_lat(&l1, &l2, exps.alpha, grid, CubeScope::Window))
}

pub fn frac_maximal_dyadic_lat(
    f1: &LatticeFunction,
    f2: &LatticeFunction,
    alpha: f64,
    grid: &GridShift,
    scope: CubeScope,
) -> OperatorField {
    let lattice = f1.lattice;
    let mut field = vec![0.0; lattice.cell_count()];
    for gc in grid_cubes(&lattice, grid, scope) {
        let v = gc.frac_value(f1, f2, alpha);
        if v > 0.0 {
            paint_max(&lattice, &mut field, &gc.ranges, v);
        }
    }
    OperatorField::new(lattice, format!("frac-maximal-dyadic[{grid}]"), field)
}

/// `M^d_σ(f) = sup_Q ∏ ⟨f_i⟩_Q^{σ_i} 1_Q` over one grid.
pub fn weighted_dyadic_maximal(
    f1: &StepFunction,
    f2: &StepFunction,
    s1: &StepFunction,
    s2: &StepFunction,
    grid: &GridShift,
) -> Result<OperatorField> {
    let lattice = f1.mesh().lattice();
    let fs1 = LatticeFunction::from_step(&f1.product(s1)?, lattice);
    let fs2 = LatticeFunction::from_step(&f2.product(s2)?, lattice);
    let l1 = LatticeFunction::from_step(s1, lattice);
    let l2 = LatticeFunction::from_step(s2, lattice);
    weighted_dyadic_maximal_lat(&fs1, &fs2, &l1, &l2, grid)
}

/// Same as [`weighted_dyadic_maximal`] with products `f_i σ_i` precomputed.
pub fn weighted_dyadic_maximal_lat(
    fs1: &LatticeFunction,
    fs2: &LatticeFunction,
    s1: &LatticeFunction,
    s2: &LatticeFunction,
    grid: &GridShift,
) -> Result<OperatorField> {
    let lattice = fs1.lattice;
    let mut field = vec![0.0; lattice.cell_count()];
    for gc in grid_cubes(&lattice, grid, CubeScope::Window) {
        let m1 = s1.sum(&gc.ranges);
        let m2 = s2.sum(&gc.ranges);
        if m1 <= 0.0 || m2 <= 0.0 {
            return Err(Error::DegenerateWeight(format!("zero weight mass on {}", gc.cube)));
        }
        let v = (fs1.sum(&gc.ranges) / m1) * (fs2.sum(&gc.ranges) / m2);
        if v > 0.0 {
            paint_max(&lattice, &mut field, &gc.ranges, v);
        }
    }
    Ok(OperatorField::new(
        lattice,
        format!("weighted-dyadic-maximal[{grid}]"),
        field,
    ))
}

/// `I_α^D(f1, f2)`, truncated to window cubes with scales `-L..=J`.
pub fn frac_integral_dyadic(
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
    grid: &GridShift,
) -> Result<OperatorField> {
    check_pair(f1, f2, exps)?;
    if exps.alpha <= 0.0 {
        return Err(Error::ExponentDomain(
            "the dyadic fractional integral needs alpha > 0".into(),
        ));
    }
    let lattice = f1.mesh().lattice();
    let l1 = LatticeFunction::from_step(f1, lattice);
    let l2 = LatticeFunction::from_step(f2, lattice);
    Ok(frac_integral_dyadic_lat(&l1, &l2, exps.alpha, grid, CubeScope::Window))
}

pub fn frac_integral_dyadic_lat(
    f1: &LatticeFunction,
    f2: &LatticeFunction,
    alpha: f64,
    grid: &GridShift,
    scope: CubeScope,
) -> OperatorField {
    let lattice = f1.lattice;
    let mut field = vec![0.0; lattice.cell_count()];
    for gc in grid_cubes(&lattice, grid, scope) {
        let v = gc.frac_value(f1, f2, alpha);
        if v > 0.0 {
            paint_add(&lattice, &mut field, &gc.ranges, v);
        }
    }
    OperatorField::new(lattice, format!("frac-integral-dyadic[{grid}]"), field)
}

/// Pointwise maximum of fields on the same lattice.
pub fn field_max(fields: &[OperatorField], tag: &str) -> OperatorField {
    let lattice = fields[0].lattice;
    let mut vals = fields[0].values.clone();
    for f in &fields[1..] {
        max_into(&mut vals, &f.values);
    }
    OperatorField::new(lattice, tag, vals)
}

/// `T_{S,α}(f1, f2) = Σ_{Q ∈ S} |Q|^{α/n} ⟨f1⟩_Q ⟨f2⟩_Q 1_{E(Q)}`.
pub fn sparse_apply(
    family: &SparseFamily,
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
) -> Result<OperatorField> {
    check_pair(f1, f2, exps)?;
    let lattice = family.lattice;
    if *f1.mesh() != lattice.mesh {
        return Err(Error::Mesh("sparse family and inputs use different meshes".into()));
    }
    let l1 = LatticeFunction::from_step(f1, lattice);
    let l2 = LatticeFunction::from_step(f2, lattice);
    Ok(sparse_apply_lat(family, &l1, &l2, exps.alpha, false))
}

/// Sparse sum with either the exceptional sets (`full = false`) or the full
/// cubes (`full = true`) as supports.
pub fn sparse_apply_lat(
    family: &SparseFamily,
    f1: &LatticeFunction,
    f2: &LatticeFunction,
    alpha: f64,
    full: bool,
) -> OperatorField {
    let lattice = family.lattice;
    let mut field = vec![0.0; lattice.cell_count()];
    for (i, cube) in family.cubes.iter().enumerate() {
        let ranges = lattice
            .ranges(&cube.cube_box())
            .expect("sparse cubes lie in the window");
        let v = cube.side_f64().powf(alpha)
            * (f1.sum(&ranges) / cell_count(&ranges) as f64)
            * (f2.sum(&ranges) / cell_count(&ranges) as f64);
        if v == 0.0 {
            continue;
        }
        if full {
            paint_add(&lattice, &mut field, &ranges, v);
        } else {
            for &c in &family.exceptional[i] {
                field[c as usize] += v;
            }
        }
    }
    let tag = if full { "sparse-integral" } else { "sparse-operator" };
    OperatorField::new(lattice, tag, field)
}

/// `∫_{[0,a]×[0,b]} |y|^{α-2} dy` in polar form,
/// `(1/α) ∫_0^{π/2} r_max(θ)^α dθ`, split at the corner angle.
fn corner_integral(a: f64, b: f64, alpha: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let theta = (b / a).atan();
    let seg = |lo: f64, hi: f64, g: &dyn Fn(f64) -> f64| simpson(lo, hi, 256, g);
    let first = seg(0.0, theta, &|t: f64| (a / t.cos()).powf(alpha));
    let second = seg(theta, FRAC_PI_2, &|t: f64| (b / t.sin()).powf(alpha));
    (first + second) / alpha
}

fn simpson(lo: f64, hi: f64, n: usize, g: &dyn Fn(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let h = (hi - lo) / n as f64;
    let mut acc = g(lo) + g(hi);
    for i in 1..n {
        let x = lo + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
    }
    acc * h / 3.0
}

/// Exact `∫ |y|^{α-2}` over `[u0,u1]×[v0,v1]` by signed corner rectangles.
fn rectangle_integral(u0: f64, u1: f64, v0: f64, v1: f64, alpha: f64) -> f64 {
    let f = |u: f64, v: f64| u.signum() * v.signum() * corner_integral(u.abs(), v.abs(), alpha);
    f(u1, v1) - f(u0, v1) - f(u1, v0) + f(u0, v0)
}

fn check_quadrature(f1: &StepFunction, f2: &StepFunction, exps: &ExponentTuple) -> Result<()> {
    check_pair(f1, f2, exps)?;
    if exps.dim != 1 {
        return Err(Error::ExponentDomain(
            "the continuum fractional integral is implemented for n = 1 only".into(),
        ));
    }
    if !(exps.alpha > 0.0 && exps.alpha < 2.0) {
        return Err(Error::ExponentDomain(format!(
            "the continuum fractional integral needs 0 < alpha < 2, got {}",
            exps.alpha
        )));
    }
    Ok(())
}

fn nonzero(f: &StepFunction) -> Vec<(usize, f64)> {
    f.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect()
}

/// Continuum `I_α(f1, f2)` for `n = 1`, evaluated at mesh-cell centers by
/// the midpoint rule over `(y1, y2)`. The cell holding the kernel
/// singularity is integrated exactly in polar form. Each center value is
/// copied onto the lattice cells of its mesh cell.
pub fn frac_integral_quadrature(
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
) -> Result<OperatorField> {
    check_quadrature(f1, f2, exps)?;
    let mesh = *f1.mesh();
    let lattice = mesh.lattice();
    let n = mesh.cells_per_axis();
    let d = mesh.cell_side();
    let alpha = exps.alpha;
    // kappa[j1 * n + j2] = δ^{-2} ∫ over the offset cell (j1, j2).
    let kappa: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (j1, j2) = ((k / n) as f64, (k % n) as f64);
            if k == 0 {
                4.0 * corner_integral(d / 2.0, d / 2.0, alpha) / (d * d)
            } else {
                (d * (j1 * j1 + j2 * j2).sqrt()).powf(alpha - 2.0)
            }
        })
        .collect();
    let nz1 = nonzero(f1);
    let nz2 = nonzero(f2);
    let centers: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|c0| {
            let mut acc = 0.0;
            for &(c1, v1) in &nz1 {
                let row = &kappa[c0.abs_diff(c1) * n..];
                let mut inner = 0.0;
                for &(c2, v2) in &nz2 {
                    inner += v2 * row[c0.abs_diff(c2)];
                }
                acc += v1 * inner;
            }
            acc * d * d
        })
        .collect();
    let r = lattice.refine;
    let values = (0..lattice.cell_count()).map(|c| centers[c / r]).collect();
    Ok(OperatorField::new(lattice, "frac-integral-quadrature", values))
}

/// Continuum `I_α(f1, f2)(x)` at a single point (`n = 1`). Cells whose
/// closure contains the singularity are integrated exactly.
pub fn frac_integral_at(
    f1: &StepFunction,
    f2: &StepFunction,
    exps: &ExponentTuple,
    x: f64,
) -> Result<f64> {
    check_quadrature(f1, f2, exps)?;
    let mesh = *f1.mesh();
    let d = mesh.cell_side();
    let h = 2f64.powi(mesh.level() as i32);
    let alpha = exps.alpha;
    let lo = |c: usize| -h + c as f64 * d;
    let nz1 = nonzero(f1);
    let nz2 = nonzero(f2);
    let terms: Vec<f64> = nz1
        .par_iter()
        .map(|&(c1, v1)| {
            let (a1, b1) = (x - lo(c1) - d, x - lo(c1));
            let mut acc = 0.0;
            for &(c2, v2) in &nz2 {
                let (a2, b2) = (x - lo(c2) - d, x - lo(c2));
                let k = if a1 <= 0.0 && b1 >= 0.0 && a2 <= 0.0 && b2 >= 0.0 {
                    rectangle_integral(a1, b1, a2, b2, alpha)
                } else {
                    let m1 = (a1 + b1) / 2.0;
                    let m2 = (a2 + b2) / 2.0;
                    d * d * (m1 * m1 + m2 * m2).sqrt().powf(alpha - 2.0)
                };
                acc += v2 * k;
            }
            v1 * acc
        })
        .collect();
    Ok(kahan_sum(terms))
}

/// Point value at resolution `J` and `J + 1` with the relative change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCertificate {
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
}

/// Certifies convergence at `x` by comparing resolutions `J` and `J + 1`.
/// The inputs are rebuilt by `make` at each resolution.
pub fn certify_quadrature<F>(mesh: Mesh, exps: &ExponentTuple, x: f64, make: F) -> Result<QuadratureCertificate>
where
    F: Fn(Mesh) -> Result<(StepFunction, StepFunction)>,
{
    let (a1, a2) = make(mesh)?;
    let coarse = frac_integral_at(&a1, &a2, exps, x)?;
    let fine_mesh = mesh.with_resolution(mesh.resolution + 1)?;
    let (b1, b2) = make(fine_mesh)?;
    let fine = frac_integral_at(&b1, &b2, exps, x)?;
    let relative_change = if fine == 0.0 {
        0.0
    } else {
        (fine - coarse).abs() / fine.abs()
    };
    Ok(QuadratureCertificate {
        coarse,
        fine,
        relative_change,
    })
}
