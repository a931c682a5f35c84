//! Carleson embedding on a random tower: the two sides, the hypothesis
//! constant, and the empirical embedding constants.

use entroweight::exponents::ExponentTuple;
use entroweight::gallery::{make_density, make_weight, DensitySpec, GallerySpec};
use entroweight::constants::Weights;
use entroweight::measure::Mesh;
use entroweight::verification::{carleson_parts, CarlesonSequence};

fn main() -> entroweight::Result<()> {
    let exps = ExponentTuple::new(1, 0.0, 2.0, 2.0, 1.5)?;
    let (p, q) = (exps.p(), exps.q);
    for j in [6, 7, 8] {
        let mesh = Mesh::new(1, 1, j)?;
        let f1 = make_density(&DensitySpec::RandomStep { seed: 1, level: 4, max: 1.0 }, mesh)?;
        let f2 = make_density(&DensitySpec::RandomStep { seed: 2, level: 4, max: 1.0 }, mesh)?;
        let weights = Weights::new(
            make_weight(&GallerySpec::Constant { c: 1.0 }, mesh)?,
            make_weight(&GallerySpec::TwoCell { v: 3.0 }, mesh)?,
            make_weight(&GallerySpec::Bump { height: 4.0, radius: 0.5 }, mesh)?,
        )?;
        let nu = weights.nu(&exps)?;
        let seq = CarlesonSequence::tower(&mesh, &nu, q / p, 9)?;
        let parts = carleson_parts(&seq, &f1, &f2, &weights, &nu, p, q, [exps.p1, exps.p2])?;
        println!(
            "J = {j}: {} cubes, A = {:.4}, lhs = {:.5}, rhs = {:.5}, C = {:.4}, C' = {:.4}",
            seq.cubes.len(),
            parts.a,
            parts.lhs,
            parts.right,
            parts.c_emb,
            parts.c_emb_prime
        );
    }
    Ok(())
}
