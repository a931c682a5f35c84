//! Deterministic weight and density families, and the named input suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{EntropySpecs, Weights};
use crate::error::{Error, Result};
use crate::exponents::{dual, ExponentTuple};
use crate::geometry::{rational_to_f64, Rational, RationalBox};
use crate::measure::{Mesh, StepFunction};

/// Default number of cascade levels below the top cubes.
pub const CASCADE_DEPTH: u32 = 6;

/// A weight family. Weights are clamped below at the weight floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GallerySpec {
    Constant {
        c: f64,
    },
    /// `|x|^a` in one dimension, `∏ |x_i|^{a/n}` in higher dimensions.
    Power {
        a: f64,
    },
    /// `1` for `x_1 < 0`, `v` for `x_1 >= 0`.
    TwoCell {
        v: f64,
    },
    /// `1 + height · exp(-|x|² / radius²)`.
    Bump {
        height: f64,
        radius: f64,
    },
    /// Multiplicative cascade on the standard grid: each child multiplies
    /// its parent's value by `1 ± delta`.
    DyadicRandom {
        delta: f64,
        seed: u64,
        #[serde(default = "default_depth")]
        depth: u32,
    },
}

fn default_depth() -> u32 {
    CASCADE_DEPTH
}

/// A nonnegative input density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DensitySpec {
    /// Indicator of `[lo, hi)^n`.
    Indicator { lo: f64, hi: f64 },
    /// Product of hats `max(0, 1 - |x_i - center| / radius)`.
    Tent { center: f64, radius: f64 },
    /// Uniform values in `[0, max)` on the cells of resolution `level`.
    RandomStep { seed: u64, level: u32, max: f64 },
    Constant { c: f64 },
    Zero,
}

/// `(lo, hi)` of each axis of a mesh cell.
fn axis_bounds(b: &RationalBox) -> Vec<(f64, f64)> {
    b.lo.iter()
        .zip(&b.hi)
        .map(|(&l, &h)| (rational_to_f64(l), rational_to_f64(h)))
        .collect()
}

fn power_average(lo: f64, hi: f64, a: f64) -> f64 {
    let anti = |x: f64| x.signum() * x.abs().powf(a + 1.0) / (a + 1.0);
    (anti(hi) - anti(lo)) / (hi - lo)
}

fn hat_average(lo: f64, hi: f64, center: f64, radius: f64) -> f64 {
    let hat = |x: f64| (1.0 - (x - center).abs() / radius).max(0.0);
    let mut knots = vec![lo, hi];
    knots.extend(
        [center - radius, center, center + radius]
            .into_iter()
            .filter(|&k| k > lo && k < hi),
    );
    knots.sort_by(f64::total_cmp);
    let area: f64 = knots
        .windows(2)
        .map(|w| (w[1] - w[0]) * (hat(w[0]) + hat(w[1])) / 2.0)
        .sum();
    area / (hi - lo)
}

/// Five-point Gauss-Legendre average of `g` over `[lo, hi]`.
fn gauss_average(lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    NODES
        .iter()
        .zip(WEIGHTS)
        .map(|(x, w)| w * g(mid + half * x))
        .sum::<f64>()
        / 2.0
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Config(format!("{name} must be finite, got {x}")));
    }
    Ok(())
}

/// Cell averages of a gallery weight on `mesh`.
pub fn make_weight(spec: &GallerySpec, mesh: Mesh) -> Result<StepFunction> {
    let n = mesh.dim as f64;
    let f = match *spec {
        GallerySpec::Constant { c } => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("constant weight needs c > 0, got {c}")));
            }
            StepFunction::constant(mesh, c)?
        }
        GallerySpec::Power { a } => {
            check_finite("power exponent", a)?;
            if a <= -n {
                return Err(Error::Integrability(format!(
                    "|x|^{a} is not locally integrable in dimension {}",
                    mesh.dim
                )));
            }
            StepFunction::from_cells(mesh, |b| {
                axis_bounds(b)
                    .into_iter()
                    .map(|(lo, hi)| power_average(lo, hi, a / n))
                    .product()
            })?
        }
        GallerySpec::TwoCell { v } => {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("two-cell weight needs v > 0, got {v}")));
            }
            StepFunction::from_cells(mesh, |b| {
                if b.lo[0] >= Rational::from_integer(0) {
                    v
                } else {
                    1.0
                }
            })?
        }
        GallerySpec::Bump { height, radius } => {
            if !(height >= 0.0 && height.is_finite() && radius > 0.0 && radius.is_finite()) {
                return Err(Error::Config(format!(
                    "bump needs height >= 0 and radius > 0, got {height}, {radius}"
                )));
            }
            StepFunction::from_cells(mesh, |b| {
                let g: f64 = axis_bounds(b)
                    .into_iter()
                    .map(|(lo, hi)| gauss_average(lo, hi, |x| (-(x / radius).powi(2)).exp()))
                    .product();
                1.0 + height * g
            })?
        }
        GallerySpec::DyadicRandom { delta, seed, depth } => cascade(mesh, delta, seed, depth)?,
    };
    Ok(f.into_weight())
}

/// Cascade from the top cubes of side `2^L` down `depth` levels, capped at
/// the mesh resolution. Coins are drawn level by level in row-major order.
fn cascade(mesh: Mesh, delta: f64, seed: u64, depth: u32) -> Result<StepFunction> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Config(format!("cascade jitter must lie in [0, 1), got {delta}")));
    }
    let dim = mesh.dim;
    let depth = depth.min(mesh.level() + mesh.resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_axis = 2usize;
    let mut values = vec![1.0; per_axis.pow(dim as u32)];
    for _ in 0..depth {
        let next_axis = per_axis * 2;
        let mut next = vec![0.0; next_axis.pow(dim as u32)];
        for (c, slot) in next.iter_mut().enumerate() {
            let parent = match dim {
                1 => c / 2,
                _ => (c / next_axis / 2) * per_axis + (c % next_axis) / 2,
            };
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            *slot = values[parent] * (1.0 + sign * delta);
        }
        values = next;
        per_axis = next_axis;
    }
    let shift = mesh.cells_per_axis() / per_axis;
    let n = mesh.cells_per_axis();
    let cells = (0..mesh.cell_count())
        .map(|c| match dim {
            1 => values[c / shift],
            _ => values[(c / n / shift) * per_axis + (c % n) / shift],
        })
        .collect();
    StepFunction::new(mesh, cells)
}

/// Cell averages of an input density on `mesh`.
pub fn make_density(spec: &DensitySpec, mesh: Mesh) -> Result<StepFunction> {
    match *spec {
        DensitySpec::Indicator { lo, hi } => {
            let to_r = |x: f64| {
                Rational::approximate_float(x)
                    .ok_or_else(|| Error::Config(format!("{x} is not representable")))
            };
            let (lo, hi) = (to_r(lo)?, to_r(hi)?);
            let b = RationalBox::new(vec![lo; mesh.dim], vec![hi; mesh.dim])?;
            StepFunction::indicator(mesh, &b)
        }
        DensitySpec::Tent { center, radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::Config(format!("tent needs radius > 0, got {radius}")));
            }
            check_finite("tent center", center)?;
            StepFunction::from_cells(mesh, |b| {
                axis_bounds(b)
                    .into_iter()
                    .map(|(lo, hi)| hat_average(lo, hi, center, radius))
                    .product()
            })
        }
        DensitySpec::RandomStep { seed, level, max } => {
            if !(max > 0.0 && max.is_finite()) {
                return Err(Error::Config(format!("random step needs max > 0, got {max}")));
            }
            if level > mesh.resolution {
                return Err(Error::Config(format!(
                    "random step level {level} is finer than the mesh resolution {}",
                    mesh.resolution
                )));
            }
            let coarse = Mesh::new(mesh.dim, mesh.level(), level)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..coarse.cell_count())
                .map(|_| rng.gen_range(0.0..max))
                .collect();
            let shift = mesh.cells_per_axis() / coarse.cells_per_axis();
            let (n, nc) = (mesh.cells_per_axis(), coarse.cells_per_axis());
            let cells = (0..mesh.cell_count())
                .map(|c| match mesh.dim {
                    1 => vals[c / shift],
                    _ => vals[(c / n / shift) * nc + (c % n) / shift],
                })
                .collect();
            StepFunction::new(mesh, cells)
        }
        DensitySpec::Constant { c } => StepFunction::constant(mesh, c),
        DensitySpec::Zero => Ok(StepFunction::zero(mesh)),
    }
}

/// One named set of harness inputs, independent of the resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalleryConfig {
    pub id: String,
    pub dim: usize,
    /// Window level `L`.
    pub level: u32,
    pub exps: ExponentTuple,
    pub f1: DensitySpec,
    pub f2: DensitySpec,
    pub w: GallerySpec,
    pub sigma1: GallerySpec,
    pub sigma2: GallerySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specs: Option<EntropySpecs>,
}

/// A configuration materialized at one resolution.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub config_id: String,
    pub mesh: Mesh,
    pub f1: StepFunction,
    pub f2: StepFunction,
    pub weights: Weights,
    pub exps: ExponentTuple,
    pub specs: EntropySpecs,
}

impl Inputs {
    /// `f_1 σ_1` and `f_2 σ_2`.
    pub fn products(&self) -> Result<(StepFunction, StepFunction)> {
        Ok((
            self.f1.product(&self.weights.sigma1)?,
            self.f2.product(&self.weights.sigma2)?,
        ))
    }
}

impl GalleryConfig {
    pub fn mesh(&self, resolution: u32) -> Result<Mesh> {
        Mesh::new(self.dim, self.level, resolution)
    }

    /// Exponents with the testing exponent `p_3 = min(p_1', p_2')` filled in
    /// when `1/p_1 + 1/p_2 >= 1`.
    pub fn exponents(&self) -> Result<ExponentTuple> {
        let e = self.exps.clone();
        e.validate()?;
        if e.dim != self.dim {
            return Err(Error::Config(format!(
                "{}: exponents are for n = {}, config has n = {}",
                self.id, e.dim, self.dim
            )));
        }
        if e.p3.is_none() && 1.0 / e.p1 + 1.0 / e.p2 >= 1.0 - 1e-12 {
            let p3 = dual(e.p1).min(dual(e.p2));
            return e.with_testing_exponent(p3);
        }
        Ok(e)
    }

    pub fn instantiate(&self, resolution: u32) -> Result<Inputs> {
        let mesh = self.mesh(resolution)?;
        let exps = self.exponents()?;
        let specs = self
            .specs
            .clone()
            .unwrap_or_else(|| EntropySpecs::standard(&exps));
        Ok(Inputs {
            config_id: self.id.clone(),
            mesh,
            f1: make_density(&self.f1, mesh)?,
            f2: make_density(&self.f2, mesh)?,
            weights: Weights::new(
                make_weight(&self.w, mesh)?,
                make_weight(&self.sigma1, mesh)?,
                make_weight(&self.sigma2, mesh)?,
            )?,
            exps,
            specs,
        })
    }
}

pub const SUITES: [&str; 2] = ["smoke", "full"];

/// Named suite with seeds offset by `seed`.
pub fn gallery_suite(name: &str, seed: u64) -> Result<Vec<GalleryConfig>> {
    match name {
        "smoke" => smoke(seed),
        "full" => full(seed),
        _ => Err(Error::Config(format!(
            "unknown suite `{name}`; expected one of {SUITES:?}"
        ))),
    }
}

fn unit_indicator() -> DensitySpec {
    DensitySpec::Indicator { lo: 0.0, hi: 1.0 }
}

fn config(
    id: &str,
    exps: ExponentTuple,
    f: [DensitySpec; 2],
    w: GallerySpec,
    sigma: [GallerySpec; 2],
) -> GalleryConfig {
    let [f1, f2] = f;
    let [sigma1, sigma2] = sigma;
    GalleryConfig {
        id: id.to_string(),
        dim: exps.dim,
        level: 1,
        exps,
        f1,
        f2,
        w,
        sigma1,
        sigma2,
        specs: None,
    }
}

fn smoke(seed: u64) -> Result<Vec<GalleryConfig>> {
    let ones = || GallerySpec::Constant { c: 1.0 };
    Ok(vec![
        config(
            "smoke-ones-maximal",
            ExponentTuple::new(1, 0.0, 2.0, 2.0, 1.0)?,
            [unit_indicator(), unit_indicator()],
            ones(),
            [ones(), ones()],
        ),
        config(
            "smoke-ones-integral",
            ExponentTuple::new(1, 0.5, 2.0, 2.0, 4.0 / 3.0)?,
            [unit_indicator(), unit_indicator()],
            ones(),
            [ones(), ones()],
        ),
        config(
            "smoke-two-cell",
            ExponentTuple::new(1, 0.5, 2.0, 2.0, 1.5)?,
            [
                DensitySpec::Tent {
                    center: 0.0,
                    radius: 1.0,
                },
                unit_indicator(),
            ],
            GallerySpec::TwoCell { v: 2.0 },
            [GallerySpec::TwoCell { v: 3.0 }, GallerySpec::TwoCell { v: 0.5 }],
        ),
        config(
            "smoke-power-pair",
            ExponentTuple::new(1, 0.0, 2.0, 2.0, 1.0)?,
            [unit_indicator(), unit_indicator()],
            GallerySpec::Power { a: -0.5 },
            [GallerySpec::Power { a: 0.5 }, GallerySpec::Power { a: 0.5 }],
        ),
        config(
            "smoke-cascade",
            ExponentTuple::new(1, 1.0, 1.5, 1.5, 1.25)?,
            [
                DensitySpec::RandomStep {
                    seed: seed.wrapping_add(11),
                    level: 3,
                    max: 1.0,
                },
                unit_indicator(),
            ],
            GallerySpec::Constant { c: 2.0 },
            [
                GallerySpec::DyadicRandom {
                    delta: 0.5,
                    seed: seed.wrapping_add(12),
                    depth: CASCADE_DEPTH,
                },
                GallerySpec::Constant { c: 0.5 },
            ],
        ),
    ])
}

const FULL_ALPHAS: [f64; 3] = [0.0, 0.5, 1.0];
const FULL_PAIRS: [(f64, f64); 5] = [(2.0, 2.0), (1.5, 2.0), (1.5, 1.5), (1.5, 3.0), (3.0, 3.0)];

/// Weight family `k` in the role of `w` (`output = true`) or of a `σ_i`.
fn weight_family(k: usize, output: bool, seed: u64) -> GallerySpec {
    match k % 5 {
        0 => GallerySpec::Constant {
            c: if output { 2.0 } else { 1.0 },
        },
        1 => GallerySpec::Power {
            a: if output { -0.5 } else { 0.5 },
        },
        2 => GallerySpec::TwoCell {
            v: if output { 0.25 } else { 3.0 },
        },
        3 => GallerySpec::Bump {
            height: 4.0,
            radius: 0.5,
        },
        _ => GallerySpec::DyadicRandom {
            delta: 0.5,
            seed,
            depth: CASCADE_DEPTH,
        },
    }
}

fn density_family(k: usize, seed: u64) -> DensitySpec {
    match k % 4 {
        0 => unit_indicator(),
        1 => DensitySpec::Tent {
            center: 0.0,
            radius: 1.0,
        },
        2 => DensitySpec::RandomStep {
            seed,
            level: 3,
            max: 1.0,
        },
        _ => DensitySpec::Indicator { lo: -0.5, hi: 0.5 },
    }
}

fn full(seed: u64) -> Result<Vec<GalleryConfig>> {
    let mut out = Vec::new();
    for (ai, &alpha) in FULL_ALPHAS.iter().enumerate() {
        for (pi, &(p1, p2)) in FULL_PAIRS.iter().enumerate() {
            let p = 1.0 / (1.0 / p1 + 1.0 / p2);
            for (qi, q) in [p, p + 0.5].into_iter().enumerate() {
                let c = (ai * FULL_PAIRS.len() + pi) * 2 + qi;
                let s = seed.wrapping_add(1000 + 10 * c as u64);
                out.push(config(
                    &format!("full-{c:02}"),
                    ExponentTuple::new(1, alpha, p1, p2, q)?,
                    [density_family(c, s), density_family(c + 1, s + 1)],
                    weight_family(c, true, s + 2),
                    [weight_family(c + 1, false, s + 3), weight_family(c + 2, false, s + 4)],
                ));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weight_examples() {
        let mesh = Mesh::new(1, 1, 4).unwrap();
        let one = make_weight(&GallerySpec::Constant { c: 1.0 }, mesh).unwrap();
        assert!(one.values().iter().all(|&v| v == 1.0));
        let p = make_weight(&GallerySpec::Power { a: 0.5 }, mesh).unwrap();
        // Cell [0, 2^{-J}): (2/3) 2^{-J/2}.
        let c0 = mesh.as_lattice().cell_of(&[0.01]).unwrap();
        assert_relative_eq!(p.values()[c0], 2.0 / 3.0 * 2f64.powf(-2.0), max_relative = 1e-12);
        let flat = make_weight(
            &GallerySpec::DyadicRandom {
                delta: 0.0,
                seed: 9,
                depth: 6,
            },
            mesh,
        )
        .unwrap();
        assert!(flat.values().iter().all(|&v| v == 1.0));
        assert!(matches!(
            make_weight(&GallerySpec::Power { a: -1.0 }, mesh),
            Err(Error::Integrability(_))
        ));
        assert!(make_weight(
            &GallerySpec::DyadicRandom {
                delta: 1.0,
                seed: 0,
                depth: 3
            },
            mesh
        )
        .is_err());
    }

    #[test]
    fn cascade_is_resolution_independent() {
        let spec = GallerySpec::DyadicRandom {
            delta: 0.4,
            seed: 5,
            depth: 4,
        };
        let a = make_weight(&spec, Mesh::new(1, 1, 4).unwrap()).unwrap();
        let b = make_weight(&spec, Mesh::new(1, 1, 6).unwrap()).unwrap();
        for (i, v) in a.values().iter().enumerate() {
            assert_eq!(*v, b.values()[4 * i]);
        }
        let m2 = Mesh::new(2, 1, 3).unwrap();
        let c = make_weight(&spec, m2).unwrap();
        assert!(c.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn density_examples() {
        let mesh = Mesh::new(1, 1, 3).unwrap();
        let ind = make_density(&unit_indicator(), mesh).unwrap();
        assert_relative_eq!(ind.total(), 1.0, epsilon = 1e-12);
        let tent = make_density(
            &DensitySpec::Tent {
                center: 0.0,
                radius: 1.0,
            },
            mesh,
        )
        .unwrap();
        assert_relative_eq!(tent.total(), 1.0, epsilon = 1e-12);
        // Cell [0, 1/8): average of 1 - x is 1 - 1/16.
        let c0 = mesh.as_lattice().cell_of(&[0.01]).unwrap();
        assert_relative_eq!(tent.values()[c0], 15.0 / 16.0, epsilon = 1e-12);
        let spec = DensitySpec::RandomStep {
            seed: 3,
            level: 2,
            max: 2.0,
        };
        assert_eq!(make_density(&spec, mesh).unwrap(), make_density(&spec, mesh).unwrap());
    }

    #[test]
    fn bump_average_is_accurate() {
        let mesh = Mesh::new(1, 1, 2).unwrap();
        let b = make_weight(
            &GallerySpec::Bump {
                height: 1.0,
                radius: 1.0,
            },
            mesh,
        )
        .unwrap();
        // ∫_0^{1/4} e^{-x²} dx / (1/4) = 2 √π erf(1/4).
        let erf_quarter = 0.276_326_390_168_236_9;
        let c0 = mesh.as_lattice().cell_of(&[0.01]).unwrap();
        assert_relative_eq!(
            b.values()[c0],
            1.0 + 2.0 * std::f64::consts::PI.sqrt() * erf_quarter,
            max_relative = 1e-10
        );
    }

    #[test]
    fn suites() {
        let smoke = gallery_suite("smoke", 0).unwrap();
        assert_eq!(smoke.len(), 5);
        assert!(smoke.iter().any(|c| c.id == "smoke-ones-maximal"));
        let full = gallery_suite("full", 0).unwrap();
        assert!(full.len() >= 30);
        for c in smoke.iter().chain(&full) {
            let inp = c.instantiate(4).unwrap();
            assert!(inp.weights.check_positive().is_ok());
        }
        assert!(gallery_suite("huge", 0).is_err());
    }
}
