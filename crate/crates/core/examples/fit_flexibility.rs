//! Maximum-likelihood flexibility: recovery of a planted value from sampled
//! shipments, then year-to-year fits on reconstructed synthetic paths.
//!
//! cargo run --release --example fit_flexibility

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use supplyflex::estimate::{
    fit_phi_homogeneous, fit_phi_per_distributor, position_bands, sample_observed, year_to_year_flexibility,
    ShipmentModel,
};
use supplyflex::ingest::synth::{generate_synthetic_system, SynthSpec};
use supplyflex::pathrec::reconstruct_paths_by_year;
use supplyflex::tensors::{build_one_step, build_shipment_tensor, build_two_step, mix, CountTensor, Flexibility};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = generate_synthetic_system(&SynthSpec::demo().with_years(3));
    let (by_year, _) = reconstruct_paths_by_year(&sys.log, &sys.catalog, true);

    // planted value on the first year's tensors
    let first = by_year.values().next().expect("at least one year");
    let counts = CountTensor::from_paths(first);
    let (two, one) = (build_two_step(&counts), build_one_step(&counts));
    let volumes = counts.volumes();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for planted in [0.0, 0.4, 0.8] {
        let t = mix(&two, &one, &Flexibility::uniform(planted)?)?;
        let b = build_shipment_tensor(&t, &volumes, 365);
        let per_source: BTreeMap<_, u64> = b.sources().map(|u| (u, 20_000)).collect();
        let observed = sample_observed(&b, &per_source, &mut rng);
        let model = ShipmentModel::new(&two, &one, &volumes, &observed);
        let homo = fit_phi_homogeneous(&model, 21)?;
        let per = fit_phi_per_distributor(&model, 50, 21)?;
        let informed: Vec<f64> = per.phi.iter().zip(&per.flat).filter(|(_, f)| !**f).map(|(p, _)| *p).collect();
        let mean = informed.iter().sum::<f64>() / informed.len().max(1) as f64;
        println!(
            "planted {planted}: homogeneous {:.3}, mean of {} informed orderers {mean:.3} after {} sweeps",
            homo.phi[0],
            informed.len(),
            per.iterations
        );
    }

    let fits = year_to_year_flexibility(&by_year, 50, 21)?;
    println!("{} orderer-years fitted, {} skipped", fits.rows.len(), fits.skipped.len());
    for band in position_bands(&fits.rows, 1.0) {
        println!(
            "position [{:.0}, {:.0}): n={} median {:.2} IQR [{:.2}, {:.2}]",
            band.position_lo, band.position_hi, band.n, band.median, band.q25, band.q75
        );
    }
    Ok(())
}
