//! Refinement study: the ratio of one harness across increasing resolutions.

use entroweight::gallery::gallery_suite;
use entroweight::verification::{refinement_study, HarnessConstants, HarnessId};

fn main() -> entroweight::Result<()> {
    let harness: HarnessId = std::env::args().nth(1).as_deref().unwrap_or("thm15").parse()?;
    let js = [5, 6, 7, 8];
    for config in gallery_suite("smoke", 0)? {
        if !harness.applies(&config) {
            continue;
        }
        let r = refinement_study(harness, &config, &js, &HarnessConstants::default(), 0)?;
        let series: Vec<String> = r
            .refinement
            .iter()
            .map(|p| format!("J{} {:.4}", p.resolution, p.ratio))
            .collect();
        println!("{:<20} {}  {}", r.config_id, series.join("  "), if r.pass { "stable" } else { "unstable" });
    }
    Ok(())
}
