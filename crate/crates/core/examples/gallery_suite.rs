//! Runs a named gallery suite through every harness and prints one line per
//! report.
//!
//! ```text
//! cargo run --release --example gallery_suite -- full 7 8
//! ```

use entroweight::gallery::gallery_suite;
use entroweight::verification::{run_suite, HarnessConstants, HarnessId};

fn main() -> entroweight::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("smoke", String::as_str);
    let js: Vec<u32> = if args.len() > 1 {
        args[1..].iter().map(|s| s.parse().expect("resolution")).collect()
    } else {
        vec![6, 7]
    };
    let configs = gallery_suite(name, 0)?;
    let start = std::time::Instant::now();
    let reports = run_suite(&configs, &HarnessId::ALL, &js, &HarnessConstants::default(), 0)?;
    for r in &reports {
        let series: Vec<String> = r.refinement.iter().map(|p| format!("{:.4}", p.ratio)).collect();
        println!(
            "{:<20} {:<9} ratio {:>10.4}  [{}]  {}",
            r.config_id,
            r.harness,
            r.ratio,
            series.join(" -> "),
            if r.pass { "PASS" } else { "FAIL" }
        );
        if !r.pass {
            for n in &r.notes {
                println!("    {n}");
            }
        }
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("{} reports, {failed} failed, {:.1?}", reports.len(), start.elapsed());
    Ok(())
}
