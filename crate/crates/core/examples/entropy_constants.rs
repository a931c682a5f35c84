//! Entropy and characteristic constants of a gallery weight triple.

use entroweight::constants::{a_inf_exp, global_constant, rho, ConstantKind, EntropySpecs, Weights};
use entroweight::exponents::ExponentTuple;
use entroweight::gallery::{make_weight, GallerySpec};
use entroweight::geometry::{Rational, RationalBox};
use entroweight::measure::Mesh;

fn main() -> entroweight::Result<()> {
    let mesh = Mesh::new(1, 1, 7)?;
    let w = make_weight(&GallerySpec::Power { a: -0.5 }, mesh)?;
    let s1 = make_weight(&GallerySpec::TwoCell { v: 3.0 }, mesh)?;
    let s2 = make_weight(&GallerySpec::DyadicRandom { delta: 0.5, seed: 3, depth: 6 }, mesh)?;
    let across = RationalBox::interval(Rational::new(-1, 1), Rational::new(1, 1))?;
    println!("on [-1,1): rho(sigma1) = {:.5}, A_inf(sigma1) = {:.5}", rho(&s1, &across)?, a_inf_exp(&s1, &across)?);

    let weights = Weights::new(w, s1, s2)?;
    let exps = ExponentTuple::new(1, 0.5, 2.0, 2.0, 1.5)?.with_testing_exponent(2.0)?;
    let specs = EntropySpecs::standard(&exps);
    let mut kinds = ConstantKind::SIMPLE.to_vec();
    kinds.push(ConstantKind::Bracket([1, 2, 3]));
    for kind in kinds {
        match global_constant(kind, &weights, &exps, &specs, None) {
            Ok(r) => println!("{:<12} {:>14.5}  at {:?}", kind.to_string(), r.sup, r.argmax_cube),
            Err(e) => println!("{:<12} unavailable: {e}", kind.to_string()),
        }
    }
    Ok(())
}
