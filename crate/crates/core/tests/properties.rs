use proptest::prelude::*;

use entroweight::constants::{a_inf_exp, rho};
use entroweight::gallery::{gallery_suite, make_weight, DensitySpec, GallerySpec};
use entroweight::geometry::{DyadicCube, GridShift, Rational, RationalBox};
use entroweight::measure::{lorentz_from_masses, lp_from_masses, weak_from_masses, Mesh, StepFunction};
use entroweight::exponents::ExponentTuple;
use entroweight::sparse::{build_sparse, verify_sparse};

fn cube() -> impl Strategy<Value = DyadicCube> {
    (1usize..=3, -3i32..12)
        .prop_flat_map(|(dim, scale)| {
            (
                prop::collection::vec(any::<bool>(), dim),
                Just(scale),
                prop::collection::vec(-1000i64..1000, dim),
            )
        })
        .prop_map(|(thirds, scale, index)| DyadicCube::new(GridShift::new(thirds), scale, index))
}

fn mesh() -> Mesh {
    Mesh::new(1, 1, 6).unwrap()
}

fn positive_step() -> impl Strategy<Value = StepFunction> {
    let m = mesh();
    prop::collection::vec(0.01f64..50.0, m.cell_count()).prop_map(move |v| StepFunction::new(m, v).unwrap())
}

fn dyadic_box() -> impl Strategy<Value = RationalBox> {
    (0u32..=6).prop_flat_map(|k| {
        let n = 1i64 << k;
        (-n..n).prop_map(move |i| RationalBox::interval(Rational::new(i, n), Rational::new(i + 1, n)).unwrap())
    })
}

proptest! {
    #[test]
    fn children_tile_and_nest(q in cube()) {
        let b = q.cube_box();
        let kids = q.children();
        prop_assert_eq!(kids.len(), 1 << q.dim());
        let vol: Rational = kids.iter().map(|c| c.cube_box().volume()).sum();
        prop_assert_eq!(vol, b.volume());
        for c in &kids {
            prop_assert_eq!(&c.parent(), &q);
            prop_assert!(b.contains(&c.cube_box()));
        }
    }

    #[test]
    fn same_grid_cubes_nest_or_miss(q in cube(), scale in -3i32..12, seed in any::<u64>()) {
        let index = (0..q.dim()).map(|i| ((seed >> (8 * i)) % 200) as i64 - 100).collect();
        let other = DyadicCube::new(q.shift.clone(), scale, index);
        let (a, b) = (q.cube_box(), other.cube_box());
        prop_assert!(a.contains(&b) || b.contains(&a) || a.is_disjoint(&b));
    }

    #[test]
    fn entropy_constants_at_least_one(w in positive_step(), q in dyadic_box()) {
        prop_assert!(rho(&w, &q).unwrap() >= 1.0 - 1e-12);
        prop_assert!(a_inf_exp(&w, &q).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn constant_weight_has_unit_constants(c in 0.01f64..100.0, q in dyadic_box()) {
        let w = StepFunction::constant(mesh(), c).unwrap();
        prop_assert!((rho(&w, &q).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((a_inf_exp(&w, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lorentz_diagonal_is_scaled_lebesgue(
        pairs in prop::collection::vec((0.0f64..10.0, 0.001f64..1.0), 1..40),
        p in 1.0f64..5.0,
    ) {
        let lp = lp_from_masses(&pairs, p).unwrap();
        let lorentz = lorentz_from_masses(&pairs, p, p).unwrap();
        let weak = weak_from_masses(&pairs, p).unwrap();
        prop_assert!((lp - p.powf(1.0 / p) * lorentz).abs() <= 1e-9 * lp.max(1.0));
        prop_assert!(weak <= lp * (1.0 + 1e-9));
    }

    #[test]
    fn gallery_is_deterministic(seed in any::<u64>(), delta in 0.0f64..0.9) {
        let spec = GallerySpec::DyadicRandom { delta, seed, depth: 6 };
        let a = make_weight(&spec, mesh()).unwrap();
        let b = make_weight(&spec, mesh()).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert!(a.values().iter().all(|&v| v > 0.0));
        prop_assert_eq!(gallery_suite("smoke", seed).unwrap(), gallery_suite("smoke", seed).unwrap());
    }

    #[test]
    fn built_families_are_sparse(seed in any::<u64>(), level in 0u32..=6, alpha in 0.0f64..1.0, third in any::<bool>()) {
        let m = mesh();
        let density = |s| entroweight::gallery::make_density(&DensitySpec::RandomStep { seed: s, level, max: 1.0 }, m).unwrap();
        let (f1, f2) = (density(seed), density(seed ^ 0x9e37_79b9));
        let exps = ExponentTuple::new(1, alpha, 2.0, 2.0, 2.0).unwrap();
        let grid = GridShift::new(vec![third]);
        let family = build_sparse(&f1, &f2, &exps, &grid, 8.0).unwrap();
        prop_assert!(verify_sparse(&family).pass);
    }
}
