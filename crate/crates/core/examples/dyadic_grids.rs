//! Both grids of the line, a covering by a shifted cube, and the 6x side bound.

use entroweight::geometry::{cover_cube, enumerate_cubes, GridShift, Rational, RationalBox, Window};

fn main() -> entroweight::Result<()> {
    let window = Window::new(1);
    for g in GridShift::all(1) {
        let cubes = enumerate_cubes(window, &g, -1, 1);
        println!("grid {g}: {} cubes at scales -1..=1", cubes.len());
        for c in cubes.iter().take(4) {
            println!("  {c} = {}", c.cube_box());
        }
    }

    // Intervals straddling a dyadic point of every scale defeat the standard grid
    // but not the pair.
    for (lo, side) in [((-1, 8), (1, 4)), ((-1, 64), (1, 32)), ((1, 3), (1, 9))] {
        let b = RationalBox::cube(vec![Rational::new(lo.0, lo.1)], Rational::new(side.0, side.1))?;
        let q = cover_cube(&b, window)?;
        let ratio = q.side() / b.side(0);
        println!("{b} is covered by {q} = {}, side ratio {ratio} <= 6", q.cube_box());
    }
    Ok(())
}
