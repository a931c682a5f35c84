//! Runs each harness on one configuration and prints the measured sides,
//! the named factors, and the per-triple testing ratios.

use entroweight::gallery::gallery_suite;
use entroweight::verification::{run_config, HarnessConstants, HarnessId};

fn main() -> entroweight::Result<()> {
    let id = std::env::args().nth(1).unwrap_or_else(|| "smoke-two-cell".into());
    let configs = gallery_suite("smoke", 0)?;
    let config = configs
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| entroweight::Error::Config(format!("no smoke config `{id}`")))?;
    let reports = run_config(config, &HarnessId::ALL, &[6, 7], &HarnessConstants::default(), 0)?;
    for r in &reports {
        println!(
            "{:<9} lhs {:.5e}  rhs {:.5e}  ratio {:.4}  bound {}  {}",
            r.harness,
            r.lhs,
            r.rhs,
            r.ratio,
            r.bound,
            if r.pass { "PASS" } else { "FAIL" }
        );
        for (k, v) in &r.factors {
            println!("    {k} = {v:.5e}");
        }
        for t in &r.triples {
            println!("    triple {} testing {:.4e} ratio {:.4e} weak {}", t.triple, t.testing, t.ratio, t.weak);
        }
    }
    Ok(())
}
