//! Fractional maximal and integral operators of `f1 = f2 = 1_[0,1)`:
//! the exact oracle against the dyadic grids, and the polar-coordinate value
//! `I_1(1/2) = 4 ln(1 + sqrt 2)`.

use entroweight::exponents::ExponentTuple;
use entroweight::geometry::{GridShift, Rational, RationalBox};
use entroweight::measure::{LatticeFunction, Mesh, StepFunction};
use entroweight::operators::{
    field_max, frac_integral_at, frac_integral_dyadic_lat, frac_maximal_dyadic_lat, frac_maximal_oracle_lat,
    CubeScope,
};

fn main() -> entroweight::Result<()> {
    let mesh = Mesh::new(1, 1, 8)?;
    let lattice = mesh.lattice();
    let f = StepFunction::indicator(mesh, &RationalBox::interval(Rational::new(0, 1), Rational::new(1, 1))?)?;
    let lf = LatticeFunction::from_step(&f, lattice);
    let one = StepFunction::constant(mesh, 1.0)?;

    for alpha in [0.0, 0.5, 1.0] {
        let oracle = frac_maximal_oracle_lat(&lf, &lf, alpha);
        let grids: Vec<_> = GridShift::all(1)
            .iter()
            .map(|g| frac_maximal_dyadic_lat(&lf, &lf, alpha, g, CubeScope::Extended))
            .collect();
        let dyadic = field_max(&grids, "max");
        let worst = oracle
            .values
            .iter()
            .zip(&dyadic.values)
            .filter(|(_, d)| **d > 0.0)
            .map(|(o, d)| o / d)
            .fold(0.0, f64::max);
        println!(
            "alpha {alpha}: ||M||_1 = {:.5}, max M / max_t M^D_t = {worst:.4} (bound {:.1})",
            oracle.lp_norm(&one, 1.0)?,
            6f64.powf(2.0 - alpha)
        );
    }
    println!("alpha 0 closed form 13/6 = {:.5}", 13.0 / 6.0);

    let exps = ExponentTuple::new(1, 1.0, 2.0, 2.0, 2.0)?;
    let at_half = frac_integral_at(&f, &f, &exps, 0.5)?;
    println!("I_1(1/2) = {at_half:.5}, closed form {:.5}", 4.0 * (1.0 + 2f64.sqrt()).ln());
    let dyadic = frac_integral_dyadic_lat(&lf, &lf, 1.0, &GridShift::zero(1), CubeScope::Window);
    println!("I^D_1(1/2) on the standard grid = {:.5}", dyadic.value_at(&[0.5]));
    Ok(())
}
