//! Acceptance suite: nine criteria, one PASS/FAIL line each.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use entroweight::cli::run_command;
use entroweight::constants::{a_inf_exp, rho, ConstantTable, CubeSet, EpsilonSpec, Needs, Weights};
use entroweight::exponents::ExponentTuple;
use entroweight::gallery::{gallery_suite, DensitySpec, GalleryConfig, GallerySpec};
use entroweight::geometry::{cover_cube, DyadicCube, GridShift, Rational, RationalBox, Window};
use entroweight::measure::{LatticeFunction, Mesh, StepFunction};
use entroweight::operators::{
    field_max, frac_integral_at, frac_maximal_dyadic_lat, frac_maximal_oracle, frac_maximal_oracle_lat,
    sparse_apply, CubeScope,
};
use entroweight::sparse::{build_sparse, ratio_range, verify_sparse};
use entroweight::verification::{
    carleson_parts, packing_check, run_config, run_suite, CarlesonSequence, HarnessConstants, HarnessId,
};

type Outcome = Result<String, String>;

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed.as_secs() < limit_s, || {
        format!("took {elapsed:.1?}, limit {limit_s} s")
    })
}

fn random_cube(rng: &mut ChaCha8Rng, level: u32) -> DyadicCube {
    let dim = rng.gen_range(1..=2);
    let shift = GridShift::new((0..dim).map(|_| rng.gen_bool(0.5)).collect());
    let scale = rng.gen_range(-(level as i32) + 1..=10);
    let span = 2i64.pow((scale + level as i32 - 1).max(0) as u32);
    let index = (0..dim).map(|_| rng.gen_range(-span..span)).collect();
    DyadicCube::new(shift, scale, index)
}

fn geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checks = 0;
    for _ in 0..10_000 {
        let q = random_cube(&mut rng, 4);
        let b = q.cube_box();
        // Parent contains the cube, one scale up, same grid.
        let p = q.parent();
        check(p.scale == q.scale - 1 && p.shift == q.shift && p.cube_box().contains(&b), || {
            format!("parent of {q} is {p}")
        })?;
        // Children tile the cube.
        let kids = q.children();
        let total: Rational = kids.iter().map(|c| c.cube_box().volume()).sum();
        check(kids.len() == 1 << q.dim() && total == b.volume(), || format!("children of {q}"))?;
        for (i, c) in kids.iter().enumerate() {
            check(c.parent() == q && b.contains(&c.cube_box()), || format!("child {c} of {q}"))?;
            for d in &kids[i + 1..] {
                check(c.cube_box().is_disjoint(&d.cube_box()), || format!("{c} meets {d}"))?;
            }
        }
        // Nesting: two cubes of one grid are nested or disjoint.
        let mut other = random_cube(&mut rng, 4);
        while other.dim() != q.dim() {
            other = random_cube(&mut rng, 4);
        }
        let other = DyadicCube::new(q.shift.clone(), other.scale, other.index);
        let ob = other.cube_box();
        check(b.contains(&ob) || ob.contains(&b) || b.is_disjoint(&ob), || {
            format!("{q} and {other} overlap without nesting")
        })?;
        // Covering: any cube in the inner window has a grid cover of side <= 6 l.
        let dim = q.dim();
        let j = rng.gen_range(2..8);
        let den = 3 * 2i64.pow(j);
        let side = r(rng.gen_range(1..=den / 4), den);
        let lo: Vec<Rational> = (0..dim).map(|_| r(rng.gen_range(-den..den / 2), den)).collect();
        let cube = RationalBox::cube(lo, side).map_err(|e| e.to_string())?;
        let cover = cover_cube(&cube, Window::new(3)).map_err(|e| format!("{cube}: {e}"))?;
        let cb = cover.cube_box();
        check(cb.contains(&cube) && cb.side(0) <= side * r(6, 1), || {
            format!("cover {cover} of {cube}")
        })?;
        checks += 1;
    }
    let elapsed = start.elapsed();
    within(elapsed, 10)?;
    Ok(format!("{checks} cube checks with covers in {elapsed:.1?}"))
}

fn random_density(rng: &mut ChaCha8Rng, mesh: Mesh) -> StepFunction {
    let spec = DensitySpec::RandomStep {
        seed: rng.gen(),
        level: rng.gen_range(0..=5),
        max: 1.0,
    };
    let f = entroweight::gallery::make_density(&spec, mesh).expect("density");
    // Sparse supports exercise the window edge.
    if rng.gen_bool(0.5) {
        let cut = rng.gen_range(0..mesh.cell_count());
        let v: Vec<f64> = f
            .values()
            .iter()
            .enumerate()
            .map(|(i, &x)| if i < cut { 0.0 } else { x })
            .collect();
        StepFunction::new(mesh, v).expect("nonnegative")
    } else {
        f
    }
}

fn equivalence() -> Outcome {
    let start = Instant::now();
    let mesh = Mesh::new(1, 1, 8).map_err(|e| e.to_string())?;
    let lattice = mesh.lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_lower = 0.0f64;
    let mut worst_upper = 0.0f64;
    for trial in 0..50 {
        let alpha = [0.0, 0.5, 1.0, 1.5][trial % 4];
        let f1 = LatticeFunction::from_step(&random_density(&mut rng, mesh), lattice);
        let f2 = LatticeFunction::from_step(&random_density(&mut rng, mesh), lattice);
        let oracle = frac_maximal_oracle_lat(&f1, &f2, alpha);
        let fields: Vec<_> = GridShift::all(1)
            .iter()
            .map(|g| frac_maximal_dyadic_lat(&f1, &f2, alpha, g, CubeScope::Extended))
            .collect();
        let dyadic = field_max(&fields, "max");
        let bound = 6f64.powf(2.0 - alpha);
        for (&o, &d) in oracle.values.iter().zip(&dyadic.values) {
            if d > 0.0 {
                worst_lower = worst_lower.max((d - o) / d);
            }
            if o > 0.0 {
                worst_upper = worst_upper.max((o - bound * d) / o);
            }
        }
    }
    let elapsed = start.elapsed();
    check(worst_lower <= 1e-9 && worst_upper <= 1e-9, || {
        format!("violations lower {worst_lower:e}, upper {worst_upper:e}")
    })?;
    within(elapsed, 120)?;
    Ok(format!(
        "50 inputs, worst relative violations {worst_lower:.1e} / {worst_upper:.1e}, {elapsed:.1?}"
    ))
}

fn sparse() -> Outcome {
    let mesh = Mesh::new(1, 1, 8).map_err(|e| e.to_string())?;
    let lattice = mesh.lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = (f64::INFINITY, 0.0f64);
    for trial in 0..50 {
        let alpha = [0.0, 0.5, 1.0][trial % 3];
        let exps = ExponentTuple::new(1, alpha, 2.0, 2.0, 2.0).map_err(|e| e.to_string())?;
        let grid = GridShift::all(1)[trial % 2].clone();
        let a = [8.0, 12.0, 16.0][trial % 3];
        let f1 = random_density(&mut rng, mesh);
        let f2 = random_density(&mut rng, mesh);
        let family = build_sparse(&f1, &f2, &exps, &grid, a).map_err(|e| e.to_string())?;
        let report = verify_sparse(&family);
        check(report.pass, || format!("trial {trial}: family fails the sparsity check"))?;
        let t = sparse_apply(&family, &f1, &f2, &exps).map_err(|e| e.to_string())?;
        let l1 = LatticeFunction::from_step(&f1, lattice);
        let l2 = LatticeFunction::from_step(&f2, lattice);
        let m = frac_maximal_dyadic_lat(&l1, &l2, alpha, &grid, CubeScope::Window);
        let range = ratio_range(&m.values, &t.values);
        check(range.uncovered == 0, || format!("trial {trial}: {} uncovered cells", range.uncovered))?;
        check(range.min >= 1.0 - 1e-12 && range.max <= a * (1.0 + 1e-12), || {
            format!("trial {trial}: M/T in [{}, {}], a = {a}", range.min, range.max)
        })?;
        worst = (worst.0.min(range.min), worst.1.max(range.max / a));
    }
    // Hand example: f_i = 1_[0,1), alpha = 0, a = 8.
    let f = StepFunction::indicator(mesh, &RationalBox::interval(r(0, 1), r(1, 1)).unwrap()).unwrap();
    let exps = ExponentTuple::new(1, 0.0, 2.0, 2.0, 1.0).unwrap();
    let g = GridShift::zero(1);
    let family = build_sparse(&f, &f, &exps, &g, 8.0).map_err(|e| e.to_string())?;
    let expected = vec![DyadicCube::new(g.clone(), -1, vec![0])];
    check(family.cubes == expected, || format!("hand example S = {:?}", family.cubes))?;
    let t = sparse_apply(&family, &f, &f, &exps).map_err(|e| e.to_string())?;
    let on = |x: f64| t.value_at(&[x]);
    check(
        [0.0, 0.5, 1.0, 1.99].iter().all(|&x| (on(x) - 0.25).abs() < 1e-12) && on(-0.5) == 0.0,
        || "hand example T is not 1/4 on [0,2)".into(),
    )?;
    let l = LatticeFunction::from_step(&f, lattice);
    let m = frac_maximal_dyadic_lat(&l, &l, 0.0, &g, CubeScope::Window);
    let hand = ratio_range(&m.values, &t.values);
    check((hand.max - 4.0).abs() < 1e-12, || format!("hand example max ratio {}", hand.max))?;
    Ok(format!(
        "50 families verified, min M/T {:.6}, max (M/T)/a {:.4}; hand example S = {{[0,2)}}, T = 1/4, ratio 4",
        worst.0, worst.1
    ))
}

fn closed_forms() -> Outcome {
    let mesh = Mesh::new(1, 1, 8).map_err(|e| e.to_string())?;
    let f = StepFunction::indicator(mesh, &RationalBox::interval(r(0, 1), r(1, 1)).unwrap()).unwrap();
    let one = StepFunction::constant(mesh, 1.0).unwrap();
    let exps0 = ExponentTuple::new(1, 0.0, 2.0, 2.0, 1.0).unwrap();
    let m = frac_maximal_oracle(&f, &f, &exps0).map_err(|e| e.to_string())?;
    let norm = m.lp_norm(&one, 1.0).map_err(|e| e.to_string())?;
    let target = 13.0 / 6.0;
    check((norm - target).abs() / target < 0.02, || format!("M_0 norm {norm}"))?;
    let exps1 = ExponentTuple::new(1, 1.0, 2.0, 2.0, 2.0).unwrap();
    let i1 = frac_integral_at(&f, &f, &exps1, 0.5).map_err(|e| e.to_string())?;
    let polar = 4.0 * (1.0 + 2f64.sqrt()).ln();
    check((i1 - polar).abs() / polar < 0.01, || format!("I_1(1/2) = {i1}"))?;
    let unit = RationalBox::interval(r(0, 1), r(1, 1)).unwrap();
    let two_cell = |lo: f64, hi: f64| {
        StepFunction::from_cells(mesh, |b| {
            if b.lo[0] >= r(0, 1) && b.lo[0] < r(1, 2) {
                lo
            } else if b.lo[0] >= r(1, 2) && b.lo[0] < r(1, 1) {
                hi
            } else {
                1.0
            }
        })
        .unwrap()
    };
    let rho13 = rho(&two_cell(1.0, 3.0), &unit).map_err(|e| e.to_string())?;
    let rho_exact = 1.0 + std::f64::consts::LN_2 / 2.0;
    check((rho13 - rho_exact).abs() / rho_exact < 0.01, || format!("rho = {rho13}"))?;
    let ainf = a_inf_exp(&two_cell(1.0, 4.0), &unit).map_err(|e| e.to_string())?;
    check((ainf - 1.25).abs() < 1e-9, || format!("A_inf = {ainf}"))?;
    Ok(format!(
        "13/6 vs {norm:.5}; 4 ln(1+sqrt 2) vs {i1:.5}; rho {rho13:.5} vs {rho_exact:.5}; A_inf {ainf:.12}"
    ))
}

fn all_configs() -> Vec<GalleryConfig> {
    let mut v = gallery_suite("smoke", 0).unwrap();
    v.extend(gallery_suite("full", 0).unwrap());
    v
}

fn entropy_invariants() -> Outcome {
    let start = Instant::now();
    let needs = Needs {
        rho_nu: true,
        rho_w: true,
        rho_sigma: true,
        gamma: false,
    };
    let mut cubes = 0;
    let mut min_rho = f64::INFINITY;
    let mut min_ainf = f64::INFINITY;
    let mut worst_chain = f64::NEG_INFINITY;
    for cfg in all_configs() {
        let inputs = cfg.instantiate(7).map_err(|e| e.to_string())?;
        let table = ConstantTable::build(&inputs.weights, &inputs.exps, &CubeSet::window(&inputs.mesh), needs)
            .map_err(|e| format!("{}: {e}", cfg.id))?;
        for rec in &table.records {
            for s in 0..4 {
                min_ainf = min_ainf.min(rec.ainf[s]);
                min_rho = min_rho.min(rec.rho[s].expect("tabulated"));
            }
        }
        cubes += table.records.len();
        worst_chain = worst_chain.max(table.chain_excess().worst());
    }
    let elapsed = start.elapsed();
    check(min_rho >= 1.0 - 1e-9 && min_ainf >= 1.0 - 1e-9, || {
        format!("min rho {min_rho}, min A_inf {min_ainf}")
    })?;
    check(worst_chain <= 1e-9, || format!("chain excess {worst_chain:e}"))?;
    within(elapsed, 180)?;
    Ok(format!(
        "{cubes} cube records: min rho {min_rho:.12}, min A_inf {min_ainf:.12}, worst chain excess {worst_chain:.1e}, {elapsed:.1?}"
    ))
}

fn theorem_harnesses() -> Outcome {
    let start = Instant::now();
    let configs = gallery_suite("full", 0).unwrap();
    let harnesses = [HarnessId::Thm14, HarnessId::Thm15, HarnessId::Thm16];
    let reports = run_suite(&configs, &harnesses, &[7, 8], &HarnessConstants::default(), 0)
        .map_err(|e| e.to_string())?;
    let mut worst = [0.0f64; 3];
    for rep in &reports {
        check(rep.pass, || format!("{} {}: {:?}", rep.config_id, rep.harness, rep.notes))?;
        let slot = harnesses.iter().position(|h| *h == rep.harness).unwrap();
        if rep.harness == HarnessId::Thm16 {
            let weak: Vec<&str> = rep.triples.iter().filter(|t| t.weak).map(|t| t.triple.as_str()).collect();
            check(rep.triples.len() == 6 && weak == ["(1,2,3)", "(1,3,2)", "(2,1,3)", "(2,3,1)"], || {
                format!("{}: triples {:?}", rep.config_id, rep.triples)
            })?;
            for t in &rep.triples {
                worst[slot] = worst[slot].max(t.ratio);
            }
        } else {
            for p in &rep.refinement {
                check(p.ratio <= 100.0, || format!("{} {} ratio {}", rep.config_id, rep.harness, p.ratio))?;
                worst[slot] = worst[slot].max(p.ratio);
            }
            let s = &rep.refinement;
            check(s[1].ratio <= 1.1 * s[0].ratio, || {
                format!("{} {}: {} -> {}", rep.config_id, rep.harness, s[0].ratio, s[1].ratio)
            })?;
        }
    }
    let count = |h: HarnessId| reports.iter().filter(|r| r.harness == h).count();
    let elapsed = start.elapsed();
    within(elapsed, 600)?;
    Ok(format!(
        "maximal {} reports (worst ratio {:.4}), integral {} (worst {:.4}), testing {} (worst triple ratio {:.2e}), {elapsed:.1?}",
        count(HarnessId::Thm14),
        worst[0],
        count(HarnessId::Thm15),
        worst[1],
        count(HarnessId::Thm16),
        worst[2]
    ))
}

fn carleson() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let families = [
        GallerySpec::Constant { c: 1.0 },
        GallerySpec::Power { a: 0.5 },
        GallerySpec::TwoCell { v: 3.0 },
        GallerySpec::Bump {
            height: 4.0,
            radius: 0.5,
        },
        GallerySpec::DyadicRandom {
            delta: 0.5,
            seed: 11,
            depth: 6,
        },
    ];
    let pairs = [(2.0, 2.0), (1.5, 2.0), (1.5, 1.5), (3.0, 3.0), (1.5, 3.0)];
    let mut worst = (0.0f64, 0.0f64);
    for trial in 0..50u64 {
        let (p1, p2) = pairs[rng.gen_range(0..pairs.len())];
        let p = 1.0 / (1.0 / p1 + 1.0 / p2);
        let q = p + rng.gen_range(0.0..1.0);
        let density = |rng: &mut ChaCha8Rng| DensitySpec::RandomStep {
            seed: rng.gen(),
            level: rng.gen_range(1..=5),
            max: 1.0,
        };
        let cfg = GalleryConfig {
            id: format!("carleson-{trial}"),
            dim: 1,
            level: 1,
            exps: ExponentTuple::new(1, 0.0, p1, p2, q).unwrap(),
            f1: density(&mut rng),
            f2: density(&mut rng),
            w: GallerySpec::Constant { c: 1.0 },
            sigma1: families[rng.gen_range(0..families.len())].clone(),
            sigma2: families[rng.gen_range(0..families.len())].clone(),
            specs: None,
        };
        let reports = run_config(&cfg, &[HarnessId::Carleson], &[7, 8], &HarnessConstants::default(), trial)
            .map_err(|e| e.to_string())?;
        let rep = &reports[0];
        check(rep.pass, || format!("trial {trial}: {:?} {:?}", rep.notes, rep.factors))?;
        check(rep.lhs > 0.0, || format!("trial {trial}: empty left side"))?;
        worst = (worst.0.max(rep.factors["c_emb"]), worst.1.max(rep.factors["c_emb_prime"]));
    }
    // Single cube Q' = [0, 2) with c = nu(Q')^{q/p}, f = 1.
    let mesh = Mesh::new(1, 1, 7).unwrap();
    let weights = Weights::uniform(mesh, 1.0).unwrap();
    let one = StepFunction::constant(mesh, 1.0).unwrap();
    let exps = ExponentTuple::new(1, 0.0, 2.0, 2.0, 1.5).unwrap();
    let nu = weights.nu(&exps).unwrap();
    let top = DyadicCube::new(GridShift::zero(1), -1, vec![0]);
    let rexp = exps.q / exps.p();
    let seq = CarlesonSequence {
        values: vec![nu.integrate(&top.cube_box()).powf(rexp)],
        cubes: vec![top],
    };
    let parts = carleson_parts(&seq, &one, &one, &weights, &nu, exps.p(), exps.q, [2.0, 2.0])
        .map_err(|e| e.to_string())?;
    check(parts.c_emb_prime <= 1.0, || format!("single cube ratio {}", parts.c_emb_prime))?;
    Ok(format!(
        "50 trials, worst C_emb {:.4}, worst C_emb' {:.4}; single cube ratio {:.4}",
        worst.0, worst.1, parts.c_emb_prime
    ))
}

fn packing() -> Outcome {
    let mesh = Mesh::new(1, 1, 8).unwrap();
    let sigma = StepFunction::constant(mesh, 1.0).unwrap();
    let g = GridShift::zero(1);
    let tower: Vec<DyadicCube> = (0..=8).map(|k| DyadicCube::new(g.clone(), k, vec![0])).collect();
    let eps = EpsilonSpec::log_power(1.0, 2.0);
    let res = packing_check(&tower, &sigma, &eps, 1.0, 1.0).map_err(|e| e.to_string())?;
    check(res.ratio <= 2.0, || format!("halving tower ratio {}", res.ratio))?;
    let reports = run_suite(&all_configs(), &[HarnessId::Packing], &[7], &HarnessConstants::default(), 0)
        .map_err(|e| e.to_string())?;
    let worst = reports.iter().map(|r| r.ratio).fold(0.0, f64::max);
    for rep in &reports {
        check(rep.pass, || format!("{}: ratio {}", rep.config_id, rep.ratio))?;
    }
    Ok(format!(
        "halving tower {:.6} <= 2; {} sparse gallery families, worst ratio {worst:.4} <= 100",
        res.ratio,
        reports.len()
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "schema_version = 1\nresolutions = [5, 6]\n").map_err(|e| e.to_string())?;
    let run = |threads: &str, out: &Path| {
        run_command([
            "entroweight",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--seed",
            "42",
            "suite",
            "full",
        ])
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let codes = (run("1", &a), run("4", &b));
    check(codes == (0, 0), || format!("exit codes {codes:?}"))?;
    let mut bytes = 0;
    for name in ["report.json", "report.csv", "plot.csv"] {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        check(x == y, || format!("{name} differs between runs"))?;
        bytes += x.len();
    }
    Ok(format!("suite full twice (1 and 4 threads): {bytes} bytes identical"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("geometry exactness", geometry),
        ("grid equivalence with constant 6^(2-alpha)", equivalence),
        ("sparsity and domination", sparse),
        ("closed-form oracles", closed_forms),
        ("entropy-constant invariants", entropy_invariants),
        ("maximal, integral and testing harnesses", theorem_harnesses),
        ("Carleson embedding", carleson),
        ("packing", packing),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
