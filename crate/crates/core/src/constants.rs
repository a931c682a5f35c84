//! Per-cube weight functionals and their suprema over a cube set.
//!
//! Every functional is evaluated on lattice-aligned cubes through prefix
//! sums. Entropy factors `ρ_w(Q)` and `γ(Q)` need a local supremum over the
//! sub-cubes of `Q`, which is exact for points of `Q` because clipping a
//! competitor to `Q` never lowers its value.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{dual, dual_reciprocal, pair_exponent, triple_label, ExponentTuple};
use crate::geometry::{DyadicCube, GridShift, RationalBox};
use crate::measure::{
    cell_count, kahan_sum, Lattice, LatticeFunction, Mesh, StepFunction, WEIGHT_FLOOR,
};
use crate::operators::{grid_cubes, local_frac_maximal, rho_on_ranges, CubeScope, GridCube};
use crate::sparse::SparseFamily;
use crate::SCHEMA_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonFamily {
    /// `c t^s`
    Power,
    /// `c (1 + log t)^s`
    LogPower,
}

/// Increasing bump function `ε` on `[1, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSpec {
    pub family: EpsilonFamily,
    pub c: f64,
    pub s: f64,
}

impl EpsilonSpec {
    pub fn power(c: f64, s: f64) -> Self {
        EpsilonSpec {
            family: EpsilonFamily::Power,
            c,
            s,
        }
    }

    pub fn log_power(c: f64, s: f64) -> Self {
        EpsilonSpec {
            family: EpsilonFamily::LogPower,
            c,
            s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite() && self.s >= 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!(
                "bump needs c > 0 and s >= 0, got c = {}, s = {}",
                self.c, self.s
            )));
        }
        Ok(())
    }

    /// `ε(max(t, 1))`.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.max(1.0);
        match self.family {
            EpsilonFamily::Power => self.c * t.powf(self.s),
            EpsilonFamily::LogPower => self.c * (1.0 + t.ln()).powf(self.s),
        }
    }
}

impl fmt::Display for EpsilonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            EpsilonFamily::Power => write!(f, "{}*t^{}", self.c, self.s),
            EpsilonFamily::LogPower => write!(f, "{}*(1+log t)^{}", self.c, self.s),
        }
    }
}

/// Whether `∫_1^∞ dt / (t ε(t)^r)` converges.
pub fn epsilon_check(eps: &EpsilonSpec, r: f64) -> bool {
    if !(r > 0.0) || eps.validate().is_err() {
        return false;
    }
    match eps.family {
        EpsilonFamily::Power => eps.s * r > 0.0,
        EpsilonFamily::LogPower => eps.s * r > 1.0,
    }
}

/// The bump functions consumed by the entropy constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySpecs {
    /// `ε` of the maximal-operator constant.
    pub eps: EpsilonSpec,
    /// `ε_1, ε_2` of the fractional-integral constant.
    pub eps_i: [EpsilonSpec; 2],
    pub eta: EpsilonSpec,
    /// `ε_1, ε_2, ε_3` of the testing constants.
    pub testing: [EpsilonSpec; 3],
}

impl EntropySpecs {
    /// Log-power bumps with twice the borderline exponent of each
    /// convergence requirement.
    pub fn standard(exps: &ExponentTuple) -> Self {
        let eta_s = if exps.q > 1.0 {
            2.0 * dual_reciprocal(exps.q)
        } else {
            2.0
        };
        let testing_s = exps
            .testing_exponents()
            .map(|ps| 2.0 * ps.iter().map(|&p| dual(p)).fold(1.0, f64::max))
            .unwrap_or(2.0);
        EntropySpecs {
            eps: EpsilonSpec::log_power(1.0, 2.0 / exps.q),
            eps_i: [
                EpsilonSpec::log_power(1.0, 2.0 / exps.p1),
                EpsilonSpec::log_power(1.0, 2.0 / exps.p2),
            ],
            eta: EpsilonSpec::log_power(1.0, eta_s),
            testing: [EpsilonSpec::log_power(1.0, testing_s); 3],
        }
    }
}

/// A global constant: the supremum of a per-cube functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstantKind {
    /// `[w, σ]_{A_(p,q)}`
    Apq,
    /// `[w, σ]_{A_(p,q) A_∞^exp}`
    ApqAinf,
    /// `[w, σ]_{A_(p,q) H^∞}`
    ApqHinf,
    /// `[σ]_{H^∞}`
    Hinf,
    /// `[σ]_{RH}`
    ReverseHolder,
    /// `[ν]_{A_∞^exp}`
    AinfNu,
    /// `⌈w, σ⌉_{p,q,ε}`
    Ceil,
    /// `⌊w, σ⌋_{p,q,ε,η}`
    Floor,
    /// `[[σ]]_{(i,j,k),ε_i}`
    Bracket([usize; 3]),
}

impl ConstantKind {
    pub const SIMPLE: [ConstantKind; 8] = [
        ConstantKind::Apq,
        ConstantKind::ApqAinf,
        ConstantKind::ApqHinf,
        ConstantKind::Hinf,
        ConstantKind::ReverseHolder,
        ConstantKind::AinfNu,
        ConstantKind::Ceil,
        ConstantKind::Floor,
    ];

    fn needs(&self) -> Needs {
        match self {
            ConstantKind::Ceil => Needs {
                rho_nu: true,
                ..Needs::default()
            },
            ConstantKind::Floor => Needs {
                rho_w: true,
                rho_sigma: true,
                ..Needs::default()
            },
            ConstantKind::Bracket(_) => Needs {
                gamma: true,
                ..Needs::default()
            },
            _ => Needs::default(),
        }
    }

    /// Fails unless the supplied bumps meet this constant's convergence
    /// requirement.
    pub fn check_bumps(&self, exps: &ExponentTuple, specs: &EntropySpecs) -> Result<()> {
        let fail = |what: String| Err(Error::Integrability(what));
        match self {
            ConstantKind::Ceil => {
                if !epsilon_check(&specs.eps, exps.q) {
                    return fail(format!("eps = {} with r = q = {}", specs.eps, exps.q));
                }
            }
            ConstantKind::Floor => {
                if exps.q <= 1.0 {
                    return Err(Error::ExponentDomain(format!(
                        "the integral constant needs q > 1, got {}",
                        exps.q
                    )));
                }
                for i in 1..=2 {
                    let e = &specs.eps_i[i - 1];
                    if !epsilon_check(e, exps.p_i(i)) {
                        return fail(format!("eps_{i} = {e} with r = p_{i} = {}", exps.p_i(i)));
                    }
                }
                if !epsilon_check(&specs.eta, exps.q_dual()) {
                    return fail(format!("eta = {} with r = q' = {}", specs.eta, exps.q_dual()));
                }
            }
            ConstantKind::Bracket([i, _, k]) => {
                let ps = exps.testing_exponents()?;
                let r = dual_reciprocal(ps[k - 1]);
                let e = &specs.testing[i - 1];
                if !epsilon_check(e, r) {
                    return fail(format!("eps_{i} = {e} with r = 1/p_{k}' = {r}"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for ConstantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstantKind::Apq => f.write_str("apq"),
            ConstantKind::ApqAinf => f.write_str("apq-ainf"),
            ConstantKind::ApqHinf => f.write_str("apq-hinf"),
            ConstantKind::Hinf => f.write_str("hinf"),
            ConstantKind::ReverseHolder => f.write_str("rh"),
            ConstantKind::AinfNu => f.write_str("ainf-nu"),
            ConstantKind::Ceil => f.write_str("ceil"),
            ConstantKind::Floor => f.write_str("floor"),
            ConstantKind::Bracket([i, j, k]) => write!(f, "bracket-{i}{j}{k}"),
        }
    }
}

impl FromStr for ConstantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(digits) = s.strip_prefix("bracket-") {
            let t: Vec<usize> = digits
                .chars()
                .filter_map(|c| c.to_digit(10).map(|d| d as usize))
                .collect();
            let mut sorted = t.clone();
            sorted.sort_unstable();
            if digits.len() == 3 && sorted == [1, 2, 3] {
                return Ok(ConstantKind::Bracket([t[0], t[1], t[2]]));
            }
            return Err(Error::Config(format!("`{s}` is not a permutation of 123")));
        }
        ConstantKind::SIMPLE
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown constant kind `{s}`")))
    }
}

/// `w` and `σ_1, σ_2` on one mesh. The testing constants use `σ_3 = w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub w: StepFunction,
    pub sigma1: StepFunction,
    pub sigma2: StepFunction,
}

impl Weights {
    pub fn new(w: StepFunction, sigma1: StepFunction, sigma2: StepFunction) -> Result<Self> {
        if w.mesh() != sigma1.mesh() || w.mesh() != sigma2.mesh() {
            return Err(Error::Mesh("weights live on different meshes".into()));
        }
        Ok(Weights { w, sigma1, sigma2 })
    }

    pub fn uniform(mesh: Mesh, c: f64) -> Result<Self> {
        let f = StepFunction::constant(mesh, c)?;
        Weights::new(f.clone(), f.clone(), f)
    }

    pub fn mesh(&self) -> &Mesh {
        self.w.mesh()
    }

    /// `σ_1, σ_2`, and `σ_3 = w`.
    pub fn sigma(&self, i: usize) -> &StepFunction {
        match i {
            1 => &self.sigma1,
            2 => &self.sigma2,
            3 => &self.w,
            _ => panic!("weight index {i} out of range"),
        }
    }

    /// `ν = σ_1^{p/p_1} σ_2^{p/p_2}`.
    pub fn nu(&self, exps: &ExponentTuple) -> Result<StepFunction> {
        let p = exps.p();
        let (a, b) = (p / exps.p1, p / exps.p2);
        let values = self
            .sigma1
            .values()
            .iter()
            .zip(self.sigma2.values())
            .map(|(&s1, &s2)| s1.powf(a) * s2.powf(b))
            .collect();
        StepFunction::new(*self.mesh(), values)
    }

    pub fn check_positive(&self) -> Result<()> {
        for (name, f) in [("w", &self.w), ("sigma1", &self.sigma1), ("sigma2", &self.sigma2)] {
            check_weight(f, name)?;
        }
        Ok(())
    }
}

fn check_weight(f: &StepFunction, name: &str) -> Result<()> {
    if let Some((c, v)) = f
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| **v < WEIGHT_FLOOR)
    {
        return Err(Error::DegenerateWeight(format!(
            "{name} is {v} on cell {c}, below the floor {WEIGHT_FLOOR}"
        )));
    }
    Ok(())
}

/// Lattice-aligned cubes over which constants are maximized.
#[derive(Clone, Debug)]
pub struct CubeSet {
    pub lattice: Lattice,
    pub cubes: Vec<GridCube>,
}

impl CubeSet {
    /// Cubes of every shifted grid inside the window, scales `-L..=J`.
    pub fn window(mesh: &Mesh) -> Self {
        let lattice = mesh.lattice();
        let cubes = GridShift::all(mesh.dim)
            .iter()
            .flat_map(|g| grid_cubes(&lattice, g, CubeScope::Window))
            .collect();
        CubeSet { lattice, cubes }
    }

    pub fn grid(mesh: &Mesh, grid: &GridShift) -> Self {
        let lattice = mesh.lattice();
        CubeSet {
            lattice,
            cubes: grid_cubes(&lattice, grid, CubeScope::Window),
        }
    }

    pub fn from_cubes(mesh: &Mesh, cubes: &[DyadicCube]) -> Result<Self> {
        let lattice = mesh.lattice();
        let cubes = cubes
            .iter()
            .map(|c| {
                let ranges = lattice.ranges(&c.cube_box())?;
                Ok(GridCube {
                    full_cells: cell_count(&ranges) as f64,
                    side: c.side_f64(),
                    cube: c.clone(),
                    ranges,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CubeSet { lattice, cubes })
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }
}

/// Which expensive per-cube quantities a table holds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Needs {
    pub rho_nu: bool,
    pub rho_w: bool,
    pub rho_sigma: bool,
    pub gamma: bool,
}

impl Needs {
    pub fn all() -> Self {
        Needs {
            rho_nu: true,
            rho_w: true,
            rho_sigma: true,
            gamma: true,
        }
    }

    pub fn union(self, o: Needs) -> Needs {
        Needs {
            rho_nu: self.rho_nu || o.rho_nu,
            rho_w: self.rho_w || o.rho_w,
            rho_sigma: self.rho_sigma || o.rho_sigma,
            gamma: self.gamma || o.gamma,
        }
    }
}

/// Per-cube averages and entropy factors.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeRecord {
    pub cube: DyadicCube,
    pub volume: f64,
    /// `⟨w⟩, ⟨σ_1⟩, ⟨σ_2⟩, ⟨ν⟩`.
    pub avg: [f64; 4],
    /// `A_∞^exp` of `w, σ_1, σ_2, ν`.
    pub ainf: [f64; 4],
    /// `ρ` of `w, σ_1, σ_2, ν` where requested.
    pub rho: [Option<f64>; 4],
    /// `γ_{(i,j,k)}` indexed by `k - 1`; symmetric in `i, j`.
    pub gamma: [Option<f64>; 3],
}

const W: usize = 0;
const NU: usize = 3;

impl CubeRecord {
    /// `⟨σ_i⟩` with `σ_3 = w`.
    pub fn avg_sigma(&self, i: usize) -> f64 {
        match i {
            3 => self.avg[W],
            _ => self.avg[i],
        }
    }

    fn rho(&self, slot: usize) -> Result<f64> {
        self.rho[slot]
            .ok_or_else(|| Error::Config("entropy factor was not tabulated".into()))
    }

    fn gamma(&self, k: usize) -> Result<f64> {
        self.gamma[k - 1]
            .ok_or_else(|| Error::Config("testing factor was not tabulated".into()))
    }
}

/// Per-cube records for one set of inputs, shared by every constant.
#[derive(Clone, Debug)]
pub struct ConstantTable {
    pub exps: ExponentTuple,
    pub testing: Option<[f64; 3]>,
    pub needs: Needs,
    pub records: Vec<CubeRecord>,
}

impl ConstantTable {
    pub fn build(weights: &Weights, exps: &ExponentTuple, cubes: &CubeSet, needs: Needs) -> Result<Self> {
        exps.validate()?;
        if *weights.mesh() != cubes.lattice.mesh {
            return Err(Error::Mesh("weights and cube set use different meshes".into()));
        }
        weights.check_positive()?;
        let lattice = cubes.lattice;
        let nu = weights.nu(exps)?;
        let base: Vec<LatticeFunction> = [&weights.w, &weights.sigma1, &weights.sigma2, &nu]
            .iter()
            .map(|f| LatticeFunction::from_step(f, lattice))
            .collect();
        let logs: Vec<LatticeFunction> = base
            .iter()
            .map(|f| LatticeFunction::new(lattice, f.values.iter().map(|v| v.ln()).collect()))
            .collect();
        let testing = if needs.gamma {
            Some(exps.testing_exponents()?)
        } else {
            None
        };
        let sigma_slot = |i: usize| if i == 3 { W } else { i };
        // Denominator integrands σ_i^{p_ij/p_i} σ_j^{p_ij/p_j}, one per k.
        let pair_integrands: Vec<LatticeFunction> = match testing {
            Some(ps) => (1..=3)
                .map(|k| {
                    let (i, j) = pair_of(k);
                    let pij = pair_exponent(ps[i - 1], ps[j - 1]);
                    let (a, b) = (pij / ps[i - 1], pij / ps[j - 1]);
                    let (si, sj) = (&base[sigma_slot(i)], &base[sigma_slot(j)]);
                    let vals = si
                        .values
                        .iter()
                        .zip(&sj.values)
                        .map(|(x, y)| x.powf(a) * y.powf(b))
                        .collect();
                    LatticeFunction::new(lattice, vals)
                })
                .collect(),
            None => Vec::new(),
        };
        let cell_vol = lattice.cell_volume();
        let alpha = exps.alpha;
        let records = cubes
            .cubes
            .par_iter()
            .map(|gc| {
                let cells = gc.full_cells;
                let avg: [f64; 4] = std::array::from_fn(|s| base[s].sum(&gc.ranges) / cells);
                let ainf: [f64; 4] =
                    std::array::from_fn(|s| avg[s] * (-logs[s].sum(&gc.ranges) / cells).exp());
                let want = [needs.rho_w, needs.rho_sigma, needs.rho_sigma, needs.rho_nu];
                let mut rho = [None; 4];
                for s in 0..4 {
                    if want[s] {
                        rho[s] = Some(rho_on_ranges(&base[s], &gc.ranges)?);
                    }
                }
                let mut gamma = [None; 3];
                if let Some(ps) = testing {
                    for k in 1..=3 {
                        let (i, j) = pair_of(k);
                        let pij = pair_exponent(ps[i - 1], ps[j - 1]);
                        let e = dual(ps[k - 1]) / pij;
                        let field = local_frac_maximal(
                            &base[sigma_slot(i)],
                            &base[sigma_slot(j)],
                            alpha,
                            &gc.ranges,
                        );
                        let num = kahan_sum(field.iter().map(|v| v.powf(e))) * cell_vol;
                        let den = pair_integrands[k - 1].sum(&gc.ranges) * cell_vol;
                        if den <= 0.0 {
                            return Err(Error::DegenerateWeight(format!(
                                "zero pair mass on {}",
                                gc.cube
                            )));
                        }
                        gamma[k - 1] = Some(num / den.powf(e));
                    }
                }
                Ok(CubeRecord {
                    cube: gc.cube.clone(),
                    volume: gc.volume(),
                    avg,
                    ainf,
                    rho,
                    gamma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConstantTable {
            exps: exps.clone(),
            testing,
            needs,
            records,
        })
    }

    /// `𝒜_{p,q}(w, σ; Q)`.
    pub fn cal_a(&self, r: &CubeRecord) -> f64 {
        let e = &self.exps;
        r.volume.powf(1.0 / e.q - 1.0 / e.p() + e.alpha_over_n())
            * r.avg[W].powf(1.0 / e.q)
            * r.avg[1].powf(dual_reciprocal(e.p1))
            * r.avg[2].powf(dual_reciprocal(e.p2))
    }

    /// Per-cube value of a constant.
    pub fn value(&self, r: &CubeRecord, kind: ConstantKind, specs: &EntropySpecs) -> Result<f64> {
        let e = &self.exps;
        let p = e.p();
        let hinf_root = r.ainf[1].powf(1.0 / e.p1) * r.ainf[2].powf(1.0 / e.p2);
        Ok(match kind {
            ConstantKind::Apq => self.cal_a(r),
            ConstantKind::ApqAinf => self.cal_a(r) * r.ainf[NU].powf(1.0 / p),
            ConstantKind::ApqHinf => self.cal_a(r) * hinf_root,
            ConstantKind::Hinf => hinf_root.powf(p),
            ConstantKind::ReverseHolder => {
                (r.avg[1] * r.volume).powf(p / e.p1) * (r.avg[2] * r.volume).powf(p / e.p2)
                    / (r.avg[NU] * r.volume)
            }
            ConstantKind::AinfNu => r.ainf[NU],
            ConstantKind::Ceil => {
                let rho = r.rho(NU)?;
                self.cal_a(r) * rho.powf(1.0 / p) * specs.eps.eval(rho)
            }
            ConstantKind::Floor => {
                let bump = |rho: f64, eps: &EpsilonSpec| rho * eps.eval(rho);
                let rw = r.rho(W)?;
                let mut v = self.cal_a(r) * bump(rw, &specs.eta).powf(dual_reciprocal(e.q));
                for i in 1..=2 {
                    let rs = r.rho(i)?;
                    v *= bump(rs, &specs.eps_i[i - 1]).powf(1.0 / e.p_i(i));
                }
                v
            }
            ConstantKind::Bracket([i, j, k]) => {
                let ps = self
                    .testing
                    .ok_or_else(|| Error::Config("testing exponents were not tabulated".into()))?;
                let pij = pair_exponent(ps[i - 1], ps[j - 1]);
                let expo = dual(ps[k - 1]) * dual_reciprocal(pij);
                let g = r.gamma(k)?;
                let base = r.volume.powf(e.alpha_over_n()) * r.avg_sigma(i) * r.avg_sigma(j);
                base.powf(expo) * r.avg_sigma(k) * g * specs.testing[i - 1].eval(g)
            }
        })
    }

    pub fn values(&self, kind: ConstantKind, specs: &EntropySpecs) -> Result<Vec<f64>> {
        kind.check_bumps(&self.exps, specs)?;
        self.records
            .iter()
            .map(|r| self.value(r, kind, specs))
            .collect()
    }

    pub fn sup(&self, kind: ConstantKind, specs: &EntropySpecs) -> Result<f64> {
        Ok(self.values(kind, specs)?.into_iter().fold(0.0, f64::max))
    }

    pub fn report(&self, kind: ConstantKind, specs: &EntropySpecs) -> Result<ConstantReport> {
        let values = self.values(kind, specs)?;
        let mut notes = Vec::new();
        if let ConstantKind::Bracket([i, _, k]) = kind {
            let ps = self.testing.expect("checked by values");
            let e = &specs.testing[i - 1];
            notes.push(format!(
                "eps_{i} = {e}; convergence with r = 1/p_{k}' = {:.6}: {}; with r = 1/p_{i}' = {:.6}: {}",
                dual_reciprocal(ps[k - 1]),
                epsilon_check(e, dual_reciprocal(ps[k - 1])),
                dual_reciprocal(ps[i - 1]),
                epsilon_check(e, dual_reciprocal(ps[i - 1])),
            ));
        }
        let cubes: Vec<&DyadicCube> = self.records.iter().map(|r| &r.cube).collect();
        ConstantReport::from_values(kind.to_string(), &self.exps, &cubes, values, notes)
    }

    /// Largest relative excess of each per-cube chain inequality between
    /// the `A_∞^exp`, `H^∞` and reverse-Hölder constants. Non-positive
    /// entries mean the chain holds.
    pub fn chain_excess(&self) -> ChainExcess {
        let specs = EntropySpecs::standard(&self.exps);
        let v = |r: &CubeRecord, k| self.value(r, k, &specs).expect("simple kinds are total");
        let excess = |lhs: f64, rhs: f64| (lhs - rhs) / rhs.abs().max(f64::MIN_POSITIVE);
        let mut out = ChainExcess {
            hinf_le_rh_ainf: f64::NEG_INFINITY,
            ainf_le_apq_ainf: f64::NEG_INFINITY,
            ainf_le_hinf: f64::NEG_INFINITY,
            hinf_le_rh_root: f64::NEG_INFINITY,
        };
        let p = self.exps.p();
        for r in &self.records {
            let apq = v(r, ConstantKind::Apq);
            let apq_ainf = v(r, ConstantKind::ApqAinf);
            let apq_hinf = v(r, ConstantKind::ApqHinf);
            let rh = v(r, ConstantKind::ReverseHolder);
            let ainf_nu = v(r, ConstantKind::AinfNu);
            let hinf = v(r, ConstantKind::Hinf);
            out.hinf_le_rh_ainf = out.hinf_le_rh_ainf.max(excess(hinf, rh * ainf_nu));
            out.ainf_le_apq_ainf = out
                .ainf_le_apq_ainf
                .max(excess(apq_ainf, apq * ainf_nu.powf(1.0 / p)));
            out.ainf_le_hinf = out.ainf_le_hinf.max(excess(apq_ainf, apq_hinf));
            out.hinf_le_rh_root = out
                .hinf_le_rh_root
                .max(excess(apq_hinf, rh.powf(1.0 / p) * apq_ainf));
        }
        out
    }
}

/// The two indices other than `k`, in increasing order.
fn pair_of(k: usize) -> (usize, usize) {
    match k {
        1 => (2, 3),
        2 => (1, 3),
        _ => (1, 2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainExcess {
    pub hinf_le_rh_ainf: f64,
    pub ainf_le_apq_ainf: f64,
    pub ainf_le_hinf: f64,
    pub hinf_le_rh_root: f64,
}

impl ChainExcess {
    pub fn worst(&self) -> f64 {
        self.hinf_le_rh_ainf
            .max(self.ainf_le_apq_ainf)
            .max(self.ainf_le_hinf)
            .max(self.hinf_le_rh_root)
    }
}

/// `(t, k, m)` of a cube `2^{-k}([0,1)^n + m + (-1)^k t)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeId {
    pub t: Vec<String>,
    pub k: i32,
    pub m: Vec<i64>,
}

impl From<&DyadicCube> for CubeId {
    fn from(c: &DyadicCube) -> Self {
        CubeId {
            t: c.shift.labels(),
            k: c.scale,
            m: c.index.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeValue {
    #[serde(flatten)]
    pub cube: CubeId,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub schema_version: u32,
    pub kind: String,
    pub exponents: ExponentTuple,
    pub sup: f64,
    pub argmax_cube: CubeId,
    pub per_cube: Vec<CubeValue>,
    pub notes: Vec<String>,
}

impl ConstantReport {
    fn from_values(
        kind: String,
        exps: &ExponentTuple,
        cubes: &[&DyadicCube],
        values: Vec<f64>,
        notes: Vec<String>,
    ) -> Result<Self> {
        if cubes.is_empty() {
            return Err(Error::Config(format!("{kind}: empty cube set")));
        }
        if let Some((c, v)) = cubes.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(Error::DegenerateWeight(format!("{kind} is {v} on {c}")));
        }
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = i;
            }
        }
        Ok(ConstantReport {
            schema_version: SCHEMA_VERSION,
            kind,
            exponents: exps.clone(),
            sup: values[best],
            argmax_cube: CubeId::from(cubes[best]),
            per_cube: cubes
                .iter()
                .zip(values)
                .map(|(c, value)| CubeValue {
                    cube: CubeId::from(*c),
                    value,
                })
                .collect(),
            notes,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Sup of a constant over `cubes` (all window cubes of every grid by default).
pub fn global_constant(
    kind: ConstantKind,
    weights: &Weights,
    exps: &ExponentTuple,
    specs: &EntropySpecs,
    cubes: Option<&CubeSet>,
) -> Result<ConstantReport> {
    kind.check_bumps(exps, specs)?;
    let default;
    let cubes = match cubes {
        Some(c) => c,
        None => {
            default = CubeSet::window(weights.mesh());
            &default
        }
    };
    ConstantTable::build(weights, exps, cubes, kind.needs())?.report(kind, specs)
}

/// `A_∞^exp(w; Q) = ⟨w⟩_Q exp(⟨log w^{-1}⟩_Q)`.
pub fn a_inf_exp(w: &StepFunction, q: &RationalBox) -> Result<f64> {
    let neg_log = w.log_average(q)?;
    let avg = w.average(q);
    if avg < WEIGHT_FLOOR {
        return Err(Error::DegenerateWeight(format!("weight vanishes on {q}")));
    }
    Ok(avg * neg_log.exp())
}

/// `𝒜_{p,q}(w, σ; Q)`.
pub fn cal_a(
    w: &StepFunction,
    sigma1: &StepFunction,
    sigma2: &StepFunction,
    q: &RationalBox,
    exps: &ExponentTuple,
) -> f64 {
    let vol = crate::geometry::rational_to_f64(q.volume());
    vol.powf(1.0 / exps.q - 1.0 / exps.p() + exps.alpha_over_n())
        * w.average(q).powf(1.0 / exps.q)
        * sigma1.average(q).powf(dual_reciprocal(exps.p1))
        * sigma2.average(q).powf(dual_reciprocal(exps.p2))
}

/// `ρ_w(Q) = ∫_Q M(1_Q w) / w(Q)` for a lattice-aligned cube in the window.
pub fn rho(w: &StepFunction, q: &RationalBox) -> Result<f64> {
    let lattice = w.mesh().lattice();
    let ranges = lattice.ranges(q)?;
    rho_on_ranges(&LatticeFunction::from_step(w, lattice), &ranges)
}

/// `ρ_{w,ε}(Q) = ρ_w(Q) ε(ρ_w(Q))`.
pub fn rho_eps(w: &StepFunction, q: &RationalBox, eps: &EpsilonSpec) -> Result<f64> {
    let r = rho(w, q)?;
    Ok(r * eps.eval(r))
}

/// `γ_{(i,j,k)}(Q)` for the pair `σ_i, σ_j`.
pub fn gamma_ijk(
    sigma_i: &StepFunction,
    sigma_j: &StepFunction,
    q: &RationalBox,
    exps: &ExponentTuple,
    triple: [usize; 3],
) -> Result<f64> {
    let ps = exps.testing_exponents()?;
    let [i, j, k] = triple;
    if sigma_i.mesh() != sigma_j.mesh() {
        return Err(Error::Mesh("weights live on different meshes".into()));
    }
    let lattice = sigma_i.mesh().lattice();
    let ranges = lattice.ranges(q)?;
    let li = LatticeFunction::from_step(sigma_i, lattice);
    let lj = LatticeFunction::from_step(sigma_j, lattice);
    let pij = pair_exponent(ps[i - 1], ps[j - 1]);
    let e = dual(ps[k - 1]) / pij;
    let field = local_frac_maximal(&li, &lj, exps.alpha, &ranges);
    let vol = lattice.cell_volume();
    let num = kahan_sum(field.iter().map(|v| v.powf(e))) * vol;
    let (a, b) = (pij / ps[i - 1], pij / ps[j - 1]);
    let den = kahan_sum(
        lattice
            .cells_in(&ranges)
            .into_iter()
            .map(|c| li.values[c].powf(a) * lj.values[c].powf(b)),
    ) * vol;
    if den <= 0.0 {
        return Err(Error::DegenerateWeight(format!("zero pair mass on {q}")));
    }
    Ok(num / den.powf(e))
}

/// Testing constant of a sparse family,
/// `sup_R ‖Σ_{Q ⊂ R} |Q|^{α/n} ⟨σ_j⟩_Q ⟨σ_k⟩_Q 1_Q‖_{L^{p_i'}(σ_i)} / (σ_j(R)^{1/p_j} σ_k(R)^{1/p_k})`.
pub fn sawyer_testing(
    family: &SparseFamily,
    weights: &Weights,
    exps: &ExponentTuple,
    triple: [usize; 3],
) -> Result<ConstantReport> {
    if family.is_empty() {
        return Err(Error::Config("testing constant of an empty family".into()));
    }
    let ps = exps.testing_exponents()?;
    let lattice = family.lattice;
    if *weights.mesh() != lattice.mesh {
        return Err(Error::Mesh("weights and family use different meshes".into()));
    }
    let [i, j, k] = triple;
    for idx in [i, j, k] {
        check_weight(weights.sigma(idx), &format!("sigma{idx}"))?;
    }
    let lf = |idx: usize| LatticeFunction::from_step(weights.sigma(idx), lattice);
    let (si, sj, sk) = (lf(i), lf(j), lf(k));
    let vol = lattice.cell_volume();
    let ranges: Vec<Vec<(usize, usize)>> = (0..family.len()).map(|c| family.ranges(c)).collect();
    let coef: Vec<f64> = family
        .cubes
        .iter()
        .zip(&ranges)
        .map(|(c, r)| {
            let n = cell_count(r) as f64;
            c.side_f64().powf(exps.alpha) * (sj.sum(r) / n) * (sk.sum(r) / n)
        })
        .collect();
    let pi_dual = dual(ps[i - 1]);
    let inside = |inner: &[(usize, usize)], outer: &[(usize, usize)]| {
        inner.iter().zip(outer).all(|(a, b)| a.0 >= b.0 && a.1 <= b.1)
    };
    let values = (0..family.len())
        .into_par_iter()
        .map(|r| {
            let outer = &ranges[r];
            let ext: Vec<usize> = outer.iter().map(|(s, e)| e - s).collect();
            let mut field = vec![0.0; cell_count(outer)];
            for (q, inner) in ranges.iter().enumerate() {
                if coef[q] == 0.0 || !inside(inner, outer) {
                    continue;
                }
                paint_local(&mut field, &ext, outer, inner, coef[q]);
            }
            let cells = lattice.cells_in(outer);
            let norm = kahan_sum(
                field
                    .iter()
                    .zip(&cells)
                    .map(|(v, &c)| v.powf(pi_dual) * si.values[c]),
            ) * vol;
            let den = (sj.sum(outer) * vol).powf(1.0 / ps[j - 1])
                * (sk.sum(outer) * vol).powf(1.0 / ps[k - 1]);
            norm.powf(1.0 / pi_dual) / den
        })
        .collect();
    let cubes: Vec<&DyadicCube> = family.cubes.iter().collect();
    ConstantReport::from_values(
        format!("testing{}", triple_label(triple)),
        exps,
        &cubes,
        values,
        Vec::new(),
    )
}

/// Adds `v` over `inner` within a buffer laid out row-major over `outer`.
fn paint_local(
    field: &mut [f64],
    ext: &[usize],
    outer: &[(usize, usize)],
    inner: &[(usize, usize)],
    v: f64,
) {
    match inner {
        [(a, b)] => {
            let o = outer[0].0;
            field[a - o..b - o].iter_mut().for_each(|x| *x += v);
        }
        [(a0, b0), (a1, b1)] => {
            let (o0, o1) = (outer[0].0, outer[1].0);
            for r in *a0..*b0 {
                let row = (r - o0) * ext[1];
                field[row + a1 - o1..row + b1 - o1]
                    .iter_mut()
                    .for_each(|x| *x += v);
            }
        }
        _ => unreachable!("dimension is 1 or 2"),
    }
}
