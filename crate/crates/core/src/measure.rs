//! Step functions on a bounded mesh, the refined lattice used for oracle
//! suprema, compensated sums, and Lebesgue/Lorentz norms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pow2, rational_to_f64, RationalBox, Rational, Window};

/// Lower clamp applied to every weight.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Largest number of lattice cells a mesh may produce.
pub const CELL_BUDGET: usize = 1 << 24;

/// Lattice refinement used by every supremum oracle.
pub const LATTICE_REFINE: usize = 3;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut k = KahanSum::new();
    for x in it {
        k.add(x);
    }
    k.value()
}

/// Double-double number used for prefix sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn add_f64(self, x: f64) -> Dd {
        self.add(Dd { hi: x, lo: 0.0 })
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Uniform mesh of cells of side `2^{-J}` covering the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    pub window: Window,
    pub resolution: u32,
}

impl Mesh {
    pub fn new(dim: usize, level: u32, resolution: u32) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::Mesh(format!("dimension must be 1 or 2, got {dim}")));
        }
        if level + resolution > 24 {
            return Err(Error::Mesh(format!(
                "L + J = {} is beyond the supported range",
                level + resolution
            )));
        }
        let mesh = Mesh {
            dim,
            window: Window::new(level),
            resolution,
        };
        let lattice_cells = (LATTICE_REFINE * mesh.cells_per_axis()).pow(dim as u32);
        if lattice_cells > CELL_BUDGET {
            return Err(Error::Mesh(format!(
                "{lattice_cells} lattice cells exceed the budget of {CELL_BUDGET}"
            )));
        }
        Ok(mesh)
    }

    pub fn level(&self) -> u32 {
        self.window.level
    }

    pub fn cells_per_axis(&self) -> usize {
        1usize << (self.window.level + self.resolution + 1)
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_axis().pow(self.dim as u32)
    }

    pub fn cell_side(&self) -> f64 {
        2f64.powi(-(self.resolution as i32))
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_side().powi(self.dim as i32)
    }

    /// Same window and dimension at another resolution.
    pub fn with_resolution(&self, resolution: u32) -> Result<Mesh> {
        Mesh::new(self.dim, self.window.level, resolution)
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(*self, LATTICE_REFINE)
    }

    /// The mesh viewed as a lattice with refinement 1.
    pub fn as_lattice(&self) -> Lattice {
        Lattice::new(*self, 1)
    }
}

/// Cells of side `2^{-J} / refine` over the window of a mesh. Flat indices
/// are row-major with axis 0 slowest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub mesh: Mesh,
    pub refine: usize,
}

impl Lattice {
    pub fn new(mesh: Mesh, refine: usize) -> Self {
        assert!(refine >= 1);
        Lattice { mesh, refine }
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn len(&self) -> usize {
        self.refine * self.mesh.cells_per_axis()
    }

    pub fn cell_count(&self) -> usize {
        self.len().pow(self.dim() as u32)
    }

    pub fn cell_side(&self) -> f64 {
        self.mesh.cell_side() / self.refine as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_side().powi(self.dim() as i32)
    }

    /// `(x + 2^L) / side` as an exact rational.
    fn units(&self, x: Rational) -> Rational {
        (x + self.mesh.window.half_side())
            * pow2(self.mesh.resolution as i32)
            * Rational::from_integer(self.refine as i64)
    }

    /// Lattice coordinate of a rational point; fails unless it is a node.
    pub fn node(&self, x: Rational) -> Result<i64> {
        let u = self.units(x);
        if u.is_integer() {
            Ok(u.to_integer())
        } else {
            Err(Error::Misaligned(format!(
                "coordinate {x} is not a node of the lattice with side 2^-{}/{}",
                self.mesh.resolution, self.refine
            )))
        }
    }

    /// Per-axis node ranges `[start, end)` of an aligned box, unclipped.
    pub fn box_nodes(&self, b: &RationalBox) -> Result<Vec<(i64, i64)>> {
        (0..b.dim())
            .map(|a| Ok((self.node(b.lo[a])?, self.node(b.hi[a])?)))
            .collect()
    }

    /// Per-axis cell ranges of an aligned box clipped to the window.
    /// Empty ranges mean the box misses the window.
    pub fn clipped_ranges(&self, b: &RationalBox) -> Result<Vec<(usize, usize)>> {
        let len = self.len() as i64;
        Ok(self
            .box_nodes(b)?
            .into_iter()
            .map(|(s, e)| {
                let s = s.clamp(0, len) as usize;
                let e = e.clamp(0, len) as usize;
                (s, e.max(s))
            })
            .collect())
    }

    /// Ranges of an aligned box that must lie inside the window.
    pub fn ranges(&self, b: &RationalBox) -> Result<Vec<(usize, usize)>> {
        let len = self.len() as i64;
        self.box_nodes(b)?
            .into_iter()
            .map(|(s, e)| {
                if s < 0 || e > len {
                    Err(Error::Window(format!("{b} leaves the window")))
                } else {
                    Ok((s as usize, e as usize))
                }
            })
            .collect()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.len() + i)
    }

    pub fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let len = self.len();
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = flat % len;
            flat /= len;
        }
        out
    }

    /// Flat indices of all cells in the given ranges, in row-major order.
    pub fn cells_in(&self, ranges: &[(usize, usize)]) -> Vec<usize> {
        match ranges {
            [(a, b)] => (*a..*b).collect(),
            [(a0, b0), (a1, b1)] => {
                let len = self.len();
                let mut out = Vec::with_capacity((b0 - a0) * (b1 - a1));
                for i in *a0..*b0 {
                    out.extend((*a1..*b1).map(|j| i * len + j));
                }
                out
            }
            _ => unreachable!("dimension is 1 or 2"),
        }
    }

    /// Exact box of a cell.
    pub fn cell_box(&self, flat: usize) -> RationalBox {
        let idx = self.unflat(flat);
        let side = pow2(-(self.mesh.resolution as i32)) / Rational::from_integer(self.refine as i64);
        let h = self.mesh.window.half_side();
        let lo: Vec<Rational> = idx
            .iter()
            .map(|&i| -h + side * Rational::from_integer(i as i64))
            .collect();
        RationalBox::cube(lo, side).expect("cells are nondegenerate")
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let h = 2f64.powi(self.mesh.window.level as i32);
        self.unflat(flat)
            .into_iter()
            .map(|i| -h + (i as f64 + 0.5) * self.cell_side())
            .collect()
    }

    /// Cell containing a point of the window.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let h = 2f64.powi(self.mesh.window.level as i32);
        let mut idx = Vec::with_capacity(self.dim());
        for &xi in x {
            let u = ((xi + h) / self.cell_side()).floor();
            if u < 0.0 || u >= self.len() as f64 {
                return None;
            }
            idx.push(u as usize);
        }
        Some(self.flat(&idx))
    }

    /// Mesh cell containing a lattice cell.
    pub fn mesh_cell(&self, flat: usize) -> usize {
        let coarse: Vec<usize> = self.unflat(flat).iter().map(|&i| i / self.refine).collect();
        self.mesh.as_lattice().flat(&coarse)
    }
}

/// Nonnegative piecewise-constant function, one value per mesh cell.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    mesh: Mesh,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(mesh: Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.cell_count() {
            return Err(Error::Mesh(format!(
                "expected {} values, got {}",
                mesh.cell_count(),
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Mesh(format!("cell {i} has invalid value {v}")));
        }
        Ok(StepFunction { mesh, values })
    }

    pub fn constant(mesh: Mesh, c: f64) -> Result<Self> {
        StepFunction::new(mesh, vec![c; mesh.cell_count()])
    }

    pub fn zero(mesh: Mesh) -> Self {
        StepFunction {
            mesh,
            values: vec![0.0; mesh.cell_count()],
        }
    }

    /// Evaluates `f` on each cell's exact box.
    pub fn from_cells<F: FnMut(&RationalBox) -> f64>(mesh: Mesh, mut f: F) -> Result<Self> {
        let lat = mesh.as_lattice();
        let values = (0..mesh.cell_count()).map(|c| f(&lat.cell_box(c))).collect();
        StepFunction::new(mesh, values)
    }

    /// Indicator of an aligned or unaligned box, as exact overlap fractions.
    pub fn indicator(mesh: Mesh, b: &RationalBox) -> Result<Self> {
        let vol = rational_to_f64(mesh_cell_volume(&mesh));
        StepFunction::from_cells(mesh, |cell| overlap_volume(cell, b) / vol)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.mesh
            .as_lattice()
            .cell_of(x)
            .map_or(0.0, |c| self.values[c])
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Clamps values below at [`WEIGHT_FLOOR`].
    pub fn into_weight(mut self) -> Self {
        for v in &mut self.values {
            *v = v.max(WEIGHT_FLOOR);
        }
        self
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        StepFunction::new(self.mesh, self.values.iter().map(|v| v * c).collect())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        StepFunction::new(self.mesh, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn product(&self, other: &StepFunction) -> Result<Self> {
        self.check_same_mesh(other)?;
        StepFunction::new(
            self.mesh,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        )
    }

    fn check_same_mesh(&self, other: &StepFunction) -> Result<()> {
        if self.mesh != other.mesh {
            return Err(Error::Mesh("step functions live on different meshes".into()));
        }
        Ok(())
    }

    /// Values repeated onto a lattice of the same mesh.
    pub fn on_lattice(&self, lattice: &Lattice) -> Vec<f64> {
        assert_eq!(lattice.mesh, self.mesh);
        (0..lattice.cell_count())
            .map(|c| self.values[lattice.mesh_cell(c)])
            .collect()
    }

    /// Per-cell overlap weights of `b` with the mesh, as (cell, volume) pairs
    /// in row-major order.
    fn overlaps(&self, b: &RationalBox) -> Vec<(usize, f64)> {
        let per_axis: Vec<Vec<(usize, f64)>> =
            (0..self.mesh.dim).map(|a| axis_overlaps(&self.mesh, b, a)).collect();
        let n = self.mesh.cells_per_axis();
        match per_axis.as_slice() {
            [x] => x.clone(),
            [x, y] => {
                let mut out = Vec::with_capacity(x.len() * y.len());
                for &(i, li) in x {
                    for &(j, lj) in y {
                        out.push((i * n + j, li * lj));
                    }
                }
                out
            }
            _ => unreachable!("dimension is 1 or 2"),
        }
    }

    /// `∫_box f`, with the function taken as zero outside the window.
    pub fn integrate(&self, b: &RationalBox) -> f64 {
        kahan_sum(self.overlaps(b).into_iter().map(|(c, v)| self.values[c] * v))
    }

    pub fn average(&self, b: &RationalBox) -> f64 {
        self.integrate(b) / rational_to_f64(b.volume())
    }

    pub fn total(&self) -> f64 {
        self.mesh.cell_volume() * kahan_sum(self.values.iter().copied())
    }

    /// `∫_box f σ / σ(box)`.
    pub fn weighted_average(&self, sigma: &StepFunction, b: &RationalBox) -> Result<f64> {
        self.check_same_mesh(sigma)?;
        let mut num = KahanSum::new();
        let mut den = KahanSum::new();
        for (c, v) in self.overlaps(b) {
            num.add(self.values[c] * sigma.values[c] * v);
            den.add(sigma.values[c] * v);
        }
        if den.value() <= 0.0 {
            return Err(Error::DegenerateWeight(format!("weight has zero mass on {b}")));
        }
        Ok(num.value() / den.value())
    }

    /// `⟨log f^{-1}⟩_box`.
    pub fn log_average(&self, b: &RationalBox) -> Result<f64> {
        let mut acc = KahanSum::new();
        let mut vol = KahanSum::new();
        for (c, v) in self.overlaps(b) {
            let x = self.values[c];
            if x <= 0.0 {
                return Err(Error::DegenerateWeight(format!(
                    "nonpositive value {x} in cell {c} on {b}"
                )));
            }
            acc.add(-x.ln() * v);
            vol.add(v);
        }
        if vol.value() <= 0.0 {
            return Err(Error::DegenerateWeight(format!("{b} misses the window")));
        }
        Ok(acc.value() / vol.value())
    }

    /// `(∫ |f|^p w)^{1/p}` over the window.
    pub fn lp_norm(&self, w: &StepFunction, p: f64) -> Result<f64> {
        self.check_same_mesh(w)?;
        let pairs: Vec<(f64, f64)> = self
            .values
            .iter()
            .zip(&w.values)
            .map(|(&f, &wv)| (f, wv * self.mesh.cell_volume()))
            .collect();
        lp_from_masses(&pairs, p)
    }

    pub fn lorentz_norm(&self, w: &StepFunction, p: f64, q: f64) -> Result<f64> {
        self.check_same_mesh(w)?;
        let pairs: Vec<(f64, f64)> = self
            .values
            .iter()
            .zip(&w.values)
            .map(|(&f, &wv)| (f, wv * self.mesh.cell_volume()))
            .collect();
        lorentz_from_masses(&pairs, p, q)
    }

    /// Writes the CSV layout: `n,L,J` header and its values, then
    /// `cell_index,value` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        write_mesh_header(&mut s, &self.mesh);
        s.push_str("cell_index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        s
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mesh = read_mesh_header(&mut lines, path)?;
        let values = read_cell_rows(lines, mesh.cell_count(), path)?;
        StepFunction::new(mesh, values).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        StepFunction::from_csv(&text, path)
    }
}

pub(crate) fn write_mesh_header(s: &mut String, mesh: &Mesh) {
    s.push_str("n,L,J\n");
    let _ = writeln!(s, "{},{},{}", mesh.dim, mesh.window.level, mesh.resolution);
}

pub(crate) fn read_mesh_header<'a, I: Iterator<Item = &'a str>>(
    lines: &mut I,
    path: &Path,
) -> Result<Mesh> {
    let head = lines.next().ok_or_else(|| Error::parse(path, "empty file"))?;
    if head.trim() != "n,L,J" {
        return Err(Error::parse(path, format!("expected header `n,L,J`, got `{head}`")));
    }
    let vals = lines
        .next()
        .ok_or_else(|| Error::parse(path, "missing mesh line"))?;
    let parts: Vec<&str> = vals.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::parse(path, format!("bad mesh line `{vals}`")));
    }
    let num = |s: &str| -> Result<u32> {
        s.parse()
            .map_err(|_| Error::parse(path, format!("bad integer `{s}`")))
    };
    Mesh::new(num(parts[0])? as usize, num(parts[1])?, num(parts[2])?)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub(crate) fn read_cell_rows<'a, I: Iterator<Item = &'a str>>(
    mut lines: I,
    count: usize,
    path: &Path,
) -> Result<Vec<f64>> {
    match lines.next() {
        Some(h) if h.trim() == "cell_index,value" => {}
        other => {
            return Err(Error::parse(
                path,
                format!("expected `cell_index,value`, got {other:?}"),
            ))
        }
    }
    let mut values = vec![f64::NAN; count];
    for line in lines {
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, format!("bad row `{line}`")))?;
        let i: usize = i
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("bad cell index `{i}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, format!("bad value `{v}`")))?;
        if i >= count {
            return Err(Error::parse(path, format!("cell index {i} out of range")));
        }
        values[i] = v;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::parse(path, format!("cell {i} is missing")));
    }
    Ok(values)
}

fn mesh_cell_volume(mesh: &Mesh) -> Rational {
    let s = pow2(-(mesh.resolution as i32));
    (0..mesh.dim).fold(Rational::from_integer(1), |v, _| v * s)
}

fn overlap_volume(a: &RationalBox, b: &RationalBox) -> f64 {
    let mut v = Rational::from_integer(1);
    for ax in 0..a.dim() {
        let lo = a.lo[ax].max(b.lo[ax]);
        let hi = a.hi[ax].min(b.hi[ax]);
        if hi <= lo {
            return 0.0;
        }
        v *= hi - lo;
    }
    rational_to_f64(v)
}

/// Cells meeting `[lo, hi)` along one axis, with exact overlap lengths.
fn axis_overlaps(mesh: &Mesh, b: &RationalBox, axis: usize) -> Vec<(usize, f64)> {
    let scale = pow2(mesh.resolution as i32);
    let h = mesh.window.half_side();
    let n = mesh.cells_per_axis() as i64;
    let lo = (b.lo[axis] + h) * scale;
    let hi = (b.hi[axis] + h) * scale;
    let first = lo.floor().to_integer().max(0);
    let last = (hi.ceil().to_integer() - 1).min(n - 1);
    let side = Ratio::from_integer(1) / scale;
    (first..=last)
        .filter_map(|i| {
            let c_lo = Rational::from_integer(i);
            let c_hi = c_lo + Rational::from_integer(1);
            let o = c_hi.min(hi) - c_lo.max(lo);
            (o > Rational::from_integer(0)).then(|| (i as usize, (o * side).to_f64().unwrap()))
        })
        .collect()
}

/// `(Σ |f|^p m)^{1/p}` from (value, mass) pairs.
pub fn lp_from_masses(pairs: &[(f64, f64)], p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::ExponentDomain(format!("need p > 0, got {p}")));
    }
    Ok(kahan_sum(pairs.iter().map(|&(f, m)| f.abs().powf(p) * m)).powf(1.0 / p))
}

/// Lorentz norm `[∫_0^∞ (λ m{|f| > λ}^{1/p})^q dλ/λ]^{1/q}`, exact for step
/// functions: the distribution function is constant between consecutive
/// distinct values.
pub fn lorentz_from_masses(pairs: &[(f64, f64)], p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && q > 0.0) {
        return Err(Error::ExponentDomain(format!("need p, q > 0, got {p}, {q}")));
    }
    let levels = level_masses(pairs);
    let mut acc = KahanSum::new();
    let mut below = 0.0f64;
    for (v, mass_at_or_above) in levels {
        acc.add(mass_at_or_above.powf(q / p) * (v.powf(q) - below.powf(q)) / q);
        below = v;
    }
    Ok(acc.value().powf(1.0 / q))
}

/// `sup_λ λ m{|f| > λ}^{1/p}`, attained as λ increases to a level.
pub fn weak_from_masses(pairs: &[(f64, f64)], p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::ExponentDomain(format!("need p > 0, got {p}")));
    }
    Ok(level_masses(pairs)
        .into_iter()
        .map(|(v, m)| v * m.powf(1.0 / p))
        .fold(0.0, f64::max))
}

/// Distinct positive levels `v` in increasing order with the mass of `{|f| >= v}`.
fn level_masses(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(f, m)| f.abs() > 0.0 && *m > 0.0)
        .map(|&(f, m)| (f.abs(), m))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut tail = KahanSum::new();
    for &(v, m) in sorted.iter().rev() {
        tail.add(m);
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = tail.value(),
            _ => out.push((v, tail.value())),
        }
    }
    out.reverse();
    out
}

/// Prefix sums in double-double over a lattice, giving box sums in O(1).
#[derive(Clone, Debug)]
pub struct PrefixTable {
    dim: usize,
    len: usize,
    table: Vec<Dd>,
}

impl PrefixTable {
    pub fn new(lattice: &Lattice, values: &[f64]) -> Self {
        let len = lattice.len();
        let dim = lattice.dim();
        assert_eq!(values.len(), lattice.cell_count());
        let table = match dim {
            1 => {
                let mut t = Vec::with_capacity(len + 1);
                let mut acc = Dd::default();
                t.push(acc);
                for &v in values {
                    acc = acc.add_f64(v);
                    t.push(acc);
                }
                t
            }
            2 => {
                let stride = len + 1;
                let mut t = vec![Dd::default(); stride * stride];
                for i in 0..len {
                    let mut row = Dd::default();
                    for j in 0..len {
                        row = row.add_f64(values[i * len + j]);
                        t[(i + 1) * stride + j + 1] = t[i * stride + j + 1].add(row);
                    }
                }
                t
            }
            _ => unreachable!("dimension is 1 or 2"),
        };
        PrefixTable { dim, len, table }
    }

    /// Sum of cell values over `[s_a, e_a)` on each axis.
    pub fn sum(&self, ranges: &[(usize, usize)]) -> f64 {
        match self.dim {
            1 => {
                let (s, e) = ranges[0];
                self.table[e].add(self.table[s].neg()).value()
            }
            _ => {
                let stride = self.len + 1;
                let (s0, e0) = ranges[0];
                let (s1, e1) = ranges[1];
                let t = |i: usize, j: usize| self.table[i * stride + j];
                t(e0, e1)
                    .add(t(s0, e1).neg())
                    .add(t(e0, s1).neg())
                    .add(t(s0, s1))
                    .value()
            }
        }
    }

    /// Sum over the cube with lower corner `start` and `side` cells.
    pub fn cube_sum(&self, start: &[usize], side: usize) -> f64 {
        match self.dim {
            1 => self.sum(&[(start[0], start[0] + side)]),
            _ => self.sum(&[(start[0], start[0] + side), (start[1], start[1] + side)]),
        }
    }
}

/// A step function expanded onto a lattice, with prefix sums.
#[derive(Clone, Debug)]
pub struct LatticeFunction {
    pub lattice: Lattice,
    pub values: Vec<f64>,
    prefix: PrefixTable,
}

impl LatticeFunction {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Self {
        let prefix = PrefixTable::new(&lattice, &values);
        LatticeFunction {
            lattice,
            values,
            prefix,
        }
    }

    pub fn from_step(f: &StepFunction, lattice: Lattice) -> Self {
        LatticeFunction::new(lattice, f.on_lattice(&lattice))
    }

    /// Sum of cell values; multiply by the cell volume for an integral.
    pub fn sum(&self, ranges: &[(usize, usize)]) -> f64 {
        if ranges.iter().any(|(s, e)| s >= e) {
            return 0.0;
        }
        self.prefix.sum(ranges)
    }

    pub fn cube_sum(&self, start: &[usize], side: usize) -> f64 {
        self.prefix.cube_sum(start, side)
    }

    pub fn integrate(&self, ranges: &[(usize, usize)]) -> f64 {
        self.sum(ranges) * self.lattice.cell_volume()
    }

    /// Integral over an aligned box, clipped to the window.
    pub fn integrate_box(&self, b: &RationalBox) -> Result<f64> {
        Ok(self.integrate(&self.lattice.clipped_ranges(b)?))
    }
}

pub fn cell_count(ranges: &[(usize, usize)]) -> usize {
    ranges.iter().map(|(s, e)| e.saturating_sub(*s)).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn mesh1(l: u32, j: u32) -> Mesh {
        Mesh::new(1, l, j).unwrap()
    }

    fn interval(a: Rational, b: Rational) -> RationalBox {
        RationalBox::interval(a, b).unwrap()
    }

    #[test]
    fn integrate_overlap() {
        let m = mesh1(1, 4);
        let f = StepFunction::indicator(m, &interval(r(0, 1), r(1, 1))).unwrap();
        let b = interval(r(-1, 6), r(1, 3));
        assert_relative_eq!(f.integrate(&b), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.average(&b), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(StepFunction::zero(m).integrate(&b), 0.0);
        let one = StepFunction::constant(m, 1.0).unwrap();
        assert_relative_eq!(one.integrate(&b), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weighted_average_two_cell() {
        let m = mesh1(1, 2);
        let unit = interval(r(0, 1), r(1, 1));
        let f = StepFunction::indicator(m, &interval(r(0, 1), r(1, 2))).unwrap();
        let one = StepFunction::constant(m, 1.0).unwrap();
        assert_relative_eq!(f.weighted_average(&one, &unit).unwrap(), 0.5);
        let sigma = StepFunction::from_cells(m, |c| if c.lo[0] >= r(1, 2) { 3.0 } else { 1.0 })
            .unwrap();
        assert_relative_eq!(f.weighted_average(&sigma, &unit).unwrap(), 0.25);
        assert_relative_eq!(one.weighted_average(&sigma, &unit).unwrap(), 1.0);
        let z = StepFunction::zero(m);
        assert!(matches!(
            one.weighted_average(&z, &unit),
            Err(Error::DegenerateWeight(_))
        ));
    }

    #[test]
    fn lp_norms() {
        let m = mesh1(1, 6);
        let f = StepFunction::indicator(m, &interval(r(0, 1), r(1, 1))).unwrap();
        let one = StepFunction::constant(m, 1.0).unwrap();
        assert_relative_eq!(f.lp_norm(&one, 2.0).unwrap(), 1.0);
        assert_eq!(StepFunction::zero(m).lp_norm(&one, 2.0).unwrap(), 0.0);
        // Cell averages of |x|^{1/2}: exact antiderivative per cell.
        let w = StepFunction::from_cells(m, |c| {
            let a = rational_to_f64(c.lo[0]);
            let b = rational_to_f64(c.hi[0]);
            let prim = |x: f64| x.signum() * x.abs().powf(1.5) / 1.5;
            (prim(b) - prim(a)) / (b - a)
        })
        .unwrap()
        .into_weight();
        assert_relative_eq!(f.lp_norm(&w, 1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn lorentz_indicator_closed_form() {
        let m = mesh1(1, 4);
        let f = StepFunction::indicator(m, &interval(r(0, 1), r(1, 1))).unwrap();
        let one = StepFunction::constant(m, 1.0).unwrap();
        assert_relative_eq!(f.lorentz_norm(&one, 2.0, 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            f.lorentz_norm(&one, 2.0, 2.0).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(StepFunction::zero(m).lorentz_norm(&one, 2.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn lorentz_two_levels_against_quadrature() {
        // f = 2 on a set of mass 1, 1 on a set of mass 3.
        let pairs = [(2.0, 1.0), (1.0, 3.0)];
        let (p, q) = (1.5, 2.5);
        let exact = lorentz_from_masses(&pairs, p, q).unwrap();
        let n = 200_000;
        let mut acc = 0.0;
        for k in 0..n {
            let lam = 2.0 * (k as f64 + 0.5) / n as f64;
            let d: f64 = if lam < 1.0 { 4.0 } else { 1.0 };
            acc += (lam * d.powf(1.0 / p)).powf(q) / lam * (2.0 / n as f64);
        }
        assert_relative_eq!(exact, acc.powf(1.0 / q), max_relative = 1e-6);
        assert_relative_eq!(weak_from_masses(&pairs, p).unwrap(), 2.0f64.max(4f64.powf(1.0 / p)));
    }

    #[test]
    fn log_average_cases() {
        let m = mesh1(1, 2);
        let unit = interval(r(0, 1), r(1, 1));
        let w = StepFunction::from_cells(m, |c| if c.lo[0] >= r(1, 2) { 4.0 } else { 1.0 })
            .unwrap();
        assert_relative_eq!(w.log_average(&unit).unwrap(), -(4f64.ln()) / 2.0, epsilon = 1e-15);
        let c = StepFunction::constant(m, 3.0).unwrap();
        assert_relative_eq!(c.log_average(&unit).unwrap(), -(3f64.ln()));
        assert_eq!(StepFunction::constant(m, 1.0).unwrap().log_average(&unit).unwrap(), 0.0);
        assert!(StepFunction::zero(m).log_average(&unit).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = Mesh::new(2, 0, 1).unwrap();
        let f = StepFunction::new(m, (0..16).map(|i| i as f64 / 7.0).collect()).unwrap();
        let text = f.to_csv();
        assert!(text.starts_with("n,L,J\n2,0,1\ncell_index,value\n"));
        let g = StepFunction::from_csv(&text, Path::new("mem")).unwrap();
        assert_eq!(f, g);
        assert!(StepFunction::from_csv("n,L,J\n1,0,0\ncell_index,value\n0,1\n", Path::new("x")).is_err());
    }

    #[test]
    fn prefix_matches_direct_sums() {
        let m = Mesh::new(2, 0, 2).unwrap();
        let lat = m.lattice();
        let vals: Vec<f64> = (0..lat.cell_count()).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
        let f = LatticeFunction::new(lat, vals.clone());
        let ranges = [(2usize, 9usize), (5usize, 20usize)];
        let direct: f64 = lat.cells_in(&ranges).iter().map(|&c| vals[c]).sum();
        assert_relative_eq!(f.sum(&ranges), direct, epsilon = 1e-12);
    }

    #[test]
    fn lattice_nodes_and_alignment() {
        let m = mesh1(1, 2);
        let lat = m.lattice();
        assert_eq!(lat.len(), 48);
        assert_eq!(lat.node(r(-2, 1)).unwrap(), 0);
        assert_eq!(lat.node(r(1, 3)).unwrap(), 28);
        assert!(lat.node(r(1, 5)).is_err());
        let b = interval(r(-1, 6), r(1, 3));
        assert_eq!(lat.ranges(&b).unwrap(), vec![(22, 28)]);
    }

    #[test]
    fn kahan_beats_naive() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(kahan_sum(xs), 2.0);
    }
}
