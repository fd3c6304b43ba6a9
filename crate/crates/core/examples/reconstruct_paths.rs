//! First-in first-out path reconstruction on the demo synthetic system.
//!
//! cargo run --release --example reconstruct_paths

use std::time::Instant;

use supplyflex::ingest::synth::{generate_synthetic_system, SynthSpec};
use supplyflex::pathrec::{distributor_positions, reconstruct_paths_by_year};

fn main() {
    let spec = SynthSpec::demo().with_years(2);
    let sys = generate_synthetic_system(&spec);
    let clock = Instant::now();
    let (by_year, report) = reconstruct_paths_by_year(&sys.log, &sys.catalog, true);
    println!(
        "{} transactions -> {} delivered units in {:.1?}, {} phantom",
        sys.log.len(),
        report.delivered,
        clock.elapsed(),
        report.phantom_units()
    );

    for (year, paths) in &by_year {
        println!("{year}: {} distinct paths, {} units", paths.len(), paths.total_count());
        let mut top: Vec<_> = paths.iter().collect();
        top.sort_by(|a, b| b.count.cmp(&a.count));
        for p in top.iter().take(5) {
            let names: Vec<&str> = p.nodes.iter().map(|&n| sys.catalog.name(n)).collect();
            println!("  {:>7}  {}", p.count, names.join(" -> "));
        }
    }

    let first = by_year.values().next().expect("at least one year");
    let mut positions: Vec<_> = distributor_positions(first).into_iter().collect();
    positions.sort_by(|a, b| a.1.total_cmp(&b.1));
    let line: Vec<String> = positions
        .iter()
        .map(|(e, p)| format!("{}={p:.2}", sys.catalog.name(*e)))
        .collect();
    println!("mean positions: {}", line.join(" "));
}
