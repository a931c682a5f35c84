//! Builds a sparse family for a random step density, verifies it, and reports
//! how tightly `T_S` dominates the dyadic maximal function.

use entroweight::exponents::ExponentTuple;
use entroweight::gallery::{make_density, DensitySpec};
use entroweight::geometry::GridShift;
use entroweight::measure::Mesh;
use entroweight::sparse::{build_sparse, default_ratio, domination_report, verify_sparse};

fn main() -> entroweight::Result<()> {
    let mesh = Mesh::new(1, 1, 8)?;
    let f1 = make_density(&DensitySpec::RandomStep { seed: 5, level: 4, max: 1.0 }, mesh)?;
    let f2 = make_density(&DensitySpec::Tent { center: 0.0, radius: 1.0 }, mesh)?;
    let exps = ExponentTuple::new(1, 0.5, 2.0, 2.0, 1.5)?;
    for g in GridShift::all(1) {
        let a = default_ratio(&exps);
        let family = build_sparse(&f1, &f2, &exps, &g, a)?;
        let check = verify_sparse(&family);
        println!("grid {g}: {} cubes, a = {a}, sparse: {}", family.len(), check.pass);
        let dom = domination_report(&f1, &f2, &exps, &g)?;
        println!("  M^D / T_S in [{:.4}, {:.4}]", dom.maximal.min, dom.maximal.max);
        if let Some(i) = &dom.integral {
            println!("  I^D / T_S' in [{:.4}, {:.4}]", i.min, i.max);
        }
    }
    Ok(())
}
