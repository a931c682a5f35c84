//! Shifted dyadic grids `D_t`, `t in {0, 1/3}^n`, with exact rational boxes.
//!
//! A cube of `D_t` at scale `k` with index `m` is the half-open box
//! `2^{-k}([0,1)^n + m + (-1)^k t)`. Every coordinate is a rational with
//! denominator dividing `3 * 2^j`, so all containment tests here are exact.

use std::cmp::Ordering;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// `2^k` as an exact rational, for any sign of `k`.
pub fn pow2(k: i32) -> Rational {
    if k >= 0 {
        Rational::from_integer(1i64 << k)
    } else {
        Rational::new(1, 1i64 << (-k))
    }
}

fn floor_int(x: Rational) -> i64 {
    x.floor().to_integer()
}

fn ceil_int(x: Rational) -> i64 {
    x.ceil().to_integer()
}

pub fn rational_to_f64(x: Rational) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

pub fn format_rational(x: Rational) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// The translation vector `t` of a grid; each entry is `0` or `1/3`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridShift {
    thirds: Vec<bool>,
}

impl GridShift {
    pub fn new(thirds: Vec<bool>) -> Self {
        GridShift { thirds }
    }

    pub fn zero(dim: usize) -> Self {
        GridShift::new(vec![false; dim])
    }

    pub fn third(dim: usize) -> Self {
        GridShift::new(vec![true; dim])
    }

    /// All `2^n` shifts, the standard grid first, then lexicographic.
    pub fn all(dim: usize) -> Vec<GridShift> {
        (0..1u32 << dim)
            .map(|bits| {
                GridShift::new(
                    (0..dim)
                        .map(|axis| (bits >> (dim - 1 - axis)) & 1 == 1)
                        .collect(),
                )
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.thirds.len()
    }

    pub fn is_third(&self, axis: usize) -> bool {
        self.thirds[axis]
    }

    pub fn entry(&self, axis: usize) -> Rational {
        if self.thirds[axis] {
            Rational::new(1, 3)
        } else {
            Rational::zero()
        }
    }

    pub fn is_standard(&self) -> bool {
        self.thirds.iter().all(|t| !t)
    }

    /// Entries rendered as `"0"` / `"1/3"`.
    pub fn labels(&self) -> Vec<String> {
        self.thirds
            .iter()
            .map(|&t| if t { "1/3".to_string() } else { "0".to_string() })
            .collect()
    }

    pub fn parse_label(s: &str) -> Option<bool> {
        match s.trim() {
            "0" => Some(false),
            "1/3" => Some(true),
            _ => None,
        }
    }

    /// The offset `(-1)^k t` applied at scale `k`.
    fn offset(&self, axis: usize, scale: i32) -> Rational {
        let t = self.entry(axis);
        if scale.is_even() {
            t
        } else {
            -t
        }
    }
}

impl fmt::Display for GridShift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t=({})", self.labels().join(","))
    }
}

/// Half-open axis-aligned box `prod [lo_i, hi_i)` with rational corners.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalBox {
    pub lo: Vec<Rational>,
    pub hi: Vec<Rational>,
}

impl RationalBox {
    pub fn new(lo: Vec<Rational>, hi: Vec<Rational>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config("box corners must have equal, nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::Config("box needs lo < hi on every axis".into()));
        }
        Ok(RationalBox { lo, hi })
    }

    /// One-dimensional interval `[lo, hi)`.
    pub fn interval(lo: Rational, hi: Rational) -> Result<Self> {
        RationalBox::new(vec![lo], vec![hi])
    }

    /// Cube with corner `lo` and the given side.
    pub fn cube(lo: Vec<Rational>, side: Rational) -> Result<Self> {
        let hi = lo.iter().map(|&x| x + side).collect();
        RationalBox::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, axis: usize) -> Rational {
        self.hi[axis] - self.lo[axis]
    }

    pub fn is_cube(&self) -> bool {
        let s = self.side(0);
        (1..self.dim()).all(|a| self.side(a) == s)
    }

    pub fn volume(&self) -> Rational {
        (0..self.dim()).fold(Rational::one(), |v, a| v * self.side(a))
    }

    pub fn contains(&self, other: &RationalBox) -> bool {
        (0..self.dim()).all(|a| self.lo[a] <= other.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn contains_point(&self, x: &[Rational]) -> bool {
        (0..self.dim()).all(|a| self.lo[a] <= x[a] && x[a] < self.hi[a])
    }

    pub fn intersects(&self, other: &RationalBox) -> bool {
        (0..self.dim()).all(|a| self.lo[a] < other.hi[a] && other.lo[a] < self.hi[a])
    }

    pub fn is_disjoint(&self, other: &RationalBox) -> bool {
        !self.intersects(other)
    }
}

impl fmt::Display for RationalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.dim())
            .map(|a| {
                format!(
                    "[{}, {})",
                    format_rational(self.lo[a]),
                    format_rational(self.hi[a])
                )
            })
            .collect();
        write!(f, "{}", parts.join(" x "))
    }
}

/// The computational domain `[-2^L, 2^L)^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub level: u32,
}

impl Window {
    pub fn new(level: u32) -> Self {
        Window { level }
    }

    pub fn half_side(&self) -> Rational {
        pow2(self.level as i32)
    }

    pub fn as_box(&self, dim: usize) -> RationalBox {
        let h = self.half_side();
        RationalBox {
            lo: vec![-h; dim],
            hi: vec![h; dim],
        }
    }

    pub fn contains(&self, b: &RationalBox) -> bool {
        self.as_box(b.dim()).contains(b)
    }
}

/// A cube of one of the shifted grids: `2^{-k}([0,1)^n + m + (-1)^k t)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub shift: GridShift,
    pub scale: i32,
    pub index: Vec<i64>,
}

impl PartialOrd for DyadicCube {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DyadicCube {
    /// Coarse scales first, then lexicographic index; grids break remaining ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.scale
            .cmp(&other.scale)
            .then_with(|| self.index.cmp(&other.index))
            .then_with(|| self.shift.cmp(&other.shift))
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} k={} m={:?}", self.shift, self.scale, self.index)
    }
}

impl DyadicCube {
    pub fn new(shift: GridShift, scale: i32, index: Vec<i64>) -> Self {
        assert_eq!(shift.dim(), index.len(), "index length must match grid dimension");
        DyadicCube {
            shift,
            scale,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Side length `2^{-k}`.
    pub fn side(&self) -> Rational {
        pow2(-self.scale)
    }

    pub fn side_f64(&self) -> f64 {
        2f64.powi(-self.scale)
    }

    /// Lebesgue measure `2^{-kn}` (exact in binary64 for the scales used here).
    pub fn volume_f64(&self) -> f64 {
        2f64.powi(-self.scale * self.dim() as i32)
    }

    pub fn cube_box(&self) -> RationalBox {
        cube_box(self)
    }

    /// The unique cube of this grid at `scale - 1` containing this one.
    pub fn parent(&self) -> DyadicCube {
        parent_and_children(self).0
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        children_of(self)
    }
}

/// Corner of the axis-`axis` cube at `scale` with index `m`.
fn corner(shift: &GridShift, axis: usize, scale: i32, m: i64) -> Rational {
    pow2(-scale) * (Rational::from_integer(m) + shift.offset(axis, scale))
}

/// Index of the cube at `scale` whose axis projection contains `x`.
fn index_containing(shift: &GridShift, axis: usize, scale: i32, x: Rational) -> i64 {
    floor_int(x * pow2(scale) - shift.offset(axis, scale))
}

pub fn cube_box(cube: &DyadicCube) -> RationalBox {
    let side = cube.side();
    let lo: Vec<Rational> = (0..cube.dim())
        .map(|a| corner(&cube.shift, a, cube.scale, cube.index[a]))
        .collect();
    let hi = lo.iter().map(|&x| x + side).collect();
    RationalBox { lo, hi }
}

/// Parent (scale `k - 1`) and the `2^n` children (scale `k + 1`), found by
/// exact rational containment among nearby candidate indices.
pub fn parent_and_children(cube: &DyadicCube) -> (DyadicCube, Vec<DyadicCube>) {
    (parent_of(cube), children_of(cube))
}

fn parent_of(cube: &DyadicCube) -> DyadicCube {
    let b = cube.cube_box();
    let ps = cube.scale - 1;
    let side = pow2(-ps);
    let index = (0..cube.dim())
        .map(|a| {
            let guess = index_containing(&cube.shift, a, ps, b.lo[a]);
            (guess - 1..=guess + 1)
                .find(|&m| {
                    let lo = corner(&cube.shift, a, ps, m);
                    lo <= b.lo[a] && b.hi[a] <= lo + side
                })
                .expect("shifted dyadic grids are nested")
        })
        .collect();
    DyadicCube::new(cube.shift.clone(), ps, index)
}

fn children_of(cube: &DyadicCube) -> Vec<DyadicCube> {
    let b = cube.cube_box();
    let cs = cube.scale + 1;
    let side = pow2(-cs);
    let per_axis: Vec<Vec<i64>> = (0..cube.dim())
        .map(|a| {
            let guess = index_containing(&cube.shift, a, cs, b.lo[a]);
            let found: Vec<i64> = (guess - 1..=guess + 2)
                .filter(|&m| {
                    let lo = corner(&cube.shift, a, cs, m);
                    b.lo[a] <= lo && lo + side <= b.hi[a]
                })
                .collect();
            assert_eq!(found.len(), 2, "a dyadic interval has exactly two halves");
            found
        })
        .collect();
    cartesian(&per_axis)
        .into_iter()
        .map(|index| DyadicCube::new(cube.shift.clone(), cs, index))
        .collect()
}

/// Lexicographic cartesian product of per-axis index lists.
fn cartesian(per_axis: &[Vec<i64>]) -> Vec<Vec<i64>> {
    per_axis.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&m| {
                    let mut v = prefix.clone();
                    v.push(m);
                    v
                })
            })
            .collect()
    })
}

/// Smallest grid cube containing `b` with side at most `6 * side(b)`.
///
/// Scales are scanned from the smallest admissible side upward; at each scale
/// the standard grid is tried first, then the remaining shifts in
/// lexicographic order. The result must lie inside `window`.
pub fn cover_cube(b: &RationalBox, window: Window) -> Result<DyadicCube> {
    if !b.is_cube() {
        return Err(Error::Config(format!("cover_cube needs a cube, got {b}")));
    }
    if !window.contains(b) {
        return Err(Error::Window(format!("{b} is not inside the window")));
    }
    let side = b.side(0);
    let limit = side * Rational::from_integer(6);
    // Largest k with 2^{-k} >= side.
    let mut k = 0i32;
    while pow2(-k) < side {
        k -= 1;
    }
    while pow2(-(k + 1)) >= side {
        k += 1;
    }
    let dim = b.dim();
    while pow2(-k) <= limit {
        for shift in GridShift::all(dim) {
            let index: Vec<i64> = (0..dim)
                .map(|a| index_containing(&shift, a, k, b.lo[a]))
                .collect();
            let cube = DyadicCube::new(shift, k, index);
            let cb = cube.cube_box();
            if cb.contains(b) && window.contains(&cb) {
                return Ok(cube);
            }
        }
        k -= 1;
    }
    Err(Error::Window(format!(
        "no grid cube inside the window covers {b} within a factor 6"
    )))
}

/// Cubes of `grid` with scales in `[scale_min, scale_max]` whose boxes lie in
/// the window, ordered by scale then lexicographic index.
pub fn enumerate_cubes(
    window: Window,
    grid: &GridShift,
    scale_min: i32,
    scale_max: i32,
) -> Vec<DyadicCube> {
    let h = window.half_side();
    let mut out = Vec::new();
    for k in scale_min..=scale_max {
        let scaled = h * pow2(k);
        let per_axis: Vec<Vec<i64>> = (0..grid.dim())
            .map(|a| {
                let s = grid.offset(a, k);
                let lo = ceil_int(-scaled - s);
                let hi = floor_int(scaled - s - Rational::one());
                (lo..=hi).collect()
            })
            .collect();
        out.extend(
            cartesian(&per_axis)
                .into_iter()
                .map(|index| DyadicCube::new(grid.clone(), k, index)),
        );
    }
    out
}

/// Cubes of `grid` with scales in `[scale_min, scale_max]` whose boxes meet
/// the window (they may stick out of it), in the same order as
/// [`enumerate_cubes`].
pub fn enumerate_meeting(
    window: Window,
    grid: &GridShift,
    scale_min: i32,
    scale_max: i32,
) -> Vec<DyadicCube> {
    let h = window.half_side();
    let mut out = Vec::new();
    for k in scale_min..=scale_max {
        let scaled = h * pow2(k);
        let per_axis: Vec<Vec<i64>> = (0..grid.dim())
            .map(|a| {
                let s = grid.offset(a, k);
                // lo < h  and  hi > -h, in units of the side.
                let lo = floor_int(-scaled - s - Rational::one()) + 1;
                let hi = ceil_int(scaled - s) - 1;
                (lo..=hi).collect()
            })
            .collect();
        out.extend(
            cartesian(&per_axis)
                .into_iter()
                .map(|index| DyadicCube::new(grid.clone(), k, index)),
        );
    }
    out
}

pub fn abs_rational(x: Rational) -> Rational {
    x.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn one_d(cube: &DyadicCube) -> (Rational, Rational) {
        let b = cube.cube_box();
        (b.lo[0], b.hi[0])
    }

    #[test]
    fn cube_box_formula() {
        let c = DyadicCube::new(GridShift::zero(1), 0, vec![0]);
        assert_eq!(one_d(&c), (r(0, 1), r(1, 1)));
        let c = DyadicCube::new(GridShift::third(1), 1, vec![0]);
        assert_eq!(one_d(&c), (r(-1, 6), r(1, 3)));
        let c = DyadicCube::new(GridShift::third(1), 0, vec![2]);
        assert_eq!(one_d(&c), (r(7, 3), r(10, 3)));
    }

    #[test]
    fn parent_and_children_standard() {
        let c = DyadicCube::new(GridShift::zero(1), 0, vec![0]);
        let (p, ch) = parent_and_children(&c);
        assert_eq!(one_d(&p), (r(0, 1), r(2, 1)));
        let boxes: Vec<_> = ch.iter().map(one_d).collect();
        assert_eq!(boxes, vec![(r(0, 1), r(1, 2)), (r(1, 2), r(1, 1))]);
    }

    #[test]
    fn parent_in_shifted_grid_by_search() {
        // [-1/6, 1/3) at k = 1; its parent at k = 0 has offset +1/3.
        let c = DyadicCube::new(GridShift::third(1), 1, vec![0]);
        let p = c.parent();
        assert_eq!(p.scale, 0);
        let (lo, hi) = one_d(&p);
        // Brute-force containment over a wide candidate range.
        let found: Vec<i64> = (-10..10)
            .filter(|&m| {
                let b = DyadicCube::new(GridShift::third(1), 0, vec![m]).cube_box();
                b.lo[0] <= r(-1, 6) && r(1, 3) <= b.hi[0]
            })
            .collect();
        assert_eq!(found, vec![p.index[0]]);
        assert_eq!((lo, hi), (r(-2, 3), r(1, 3)));
    }

    #[test]
    fn cover_examples() {
        let w = Window::new(1);
        let c = cover_cube(&RationalBox::interval(r(0, 1), r(1, 1)).unwrap(), w).unwrap();
        assert!(c.shift.is_standard());
        assert_eq!(one_d(&c), (r(0, 1), r(1, 1)));

        let c = cover_cube(&RationalBox::interval(r(1, 10), r(7, 20)).unwrap(), w).unwrap();
        assert!(c.shift.is_standard());
        assert_eq!(one_d(&c), (r(0, 1), r(1, 2)));

        let c = cover_cube(&RationalBox::interval(r(-1, 2), r(1, 2)).unwrap(), w).unwrap();
        assert!(!c.shift.is_standard());
        assert_eq!(one_d(&c), (r(-2, 3), r(4, 3)));
    }

    #[test]
    fn cover_fails_when_window_too_small() {
        let w = Window::new(0);
        let b = RationalBox::interval(r(-1, 1), r(1, 1)).unwrap();
        assert!(matches!(cover_cube(&b, w), Err(Error::Window(_))));
    }

    #[test]
    fn enumerate_examples() {
        let z = GridShift::zero(1);
        let t = GridShift::third(1);
        let boxes = |v: Vec<DyadicCube>| v.iter().map(one_d).collect::<Vec<_>>();
        assert_eq!(
            boxes(enumerate_cubes(Window::new(0), &z, 0, 0)),
            vec![(r(-1, 1), r(0, 1)), (r(0, 1), r(1, 1))]
        );
        assert_eq!(
            boxes(enumerate_cubes(Window::new(1), &z, -1, -1)),
            vec![(r(-2, 1), r(0, 1)), (r(0, 1), r(2, 1))]
        );
        let got = enumerate_cubes(Window::new(1), &t, 0, 0);
        assert_eq!(got.iter().map(|c| c.index[0]).collect::<Vec<_>>(), vec![-2, -1, 0]);
    }

    #[test]
    fn meeting_includes_overhanging_cubes() {
        let t = GridShift::third(1);
        let w = Window::new(1);
        let inside = enumerate_cubes(w, &t, 0, 0);
        let meeting = enumerate_meeting(w, &t, 0, 0);
        assert!(meeting.len() > inside.len());
        let wb = w.as_box(1);
        for c in &meeting {
            assert!(c.cube_box().intersects(&wb));
        }
        for c in &inside {
            assert!(meeting.contains(c));
        }
    }

    #[test]
    fn shifts_enumerate_standard_first() {
        let all = GridShift::all(2);
        assert_eq!(all.len(), 4);
        assert!(all[0].is_standard());
        assert_eq!(all[1], GridShift::new(vec![false, true]));
    }
}
