//! Order tensors on the six-entity toy system. E buys from D and has only
//! ever received goods that reached D through A. With flexibility E also
//! draws on what D got from C.
//!
//! cargo run --example order_tensors

use supplyflex::ingest::{EntityCatalog, EntityId, ProductId, Role};
use supplyflex::pathrec::{DistributionPath, PathMultiset};
use supplyflex::spectral::ChainBuilder;
use supplyflex::tensors::{alternative_edges, build_one_step, build_two_step, mix, CountTensor, Flexibility};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut catalog = EntityCatalog::new();
    let mut id = |name, role| catalog.insert(name, role).unwrap();
    let m1 = id("M1", Role::Manufacturer);
    let m2 = id("M2", Role::Manufacturer);
    let a = id("A", Role::Distributor);
    let c = id("C", Role::Distributor);
    let d = id("D", Role::Distributor);
    let e = id("E", Role::Distributor);

    let path = |nodes: Vec<EntityId>| DistributionPath {
        product: ProductId(0),
        nodes,
        count: 1,
        phantom: false,
    };
    let paths = PathMultiset::from_paths(vec![path(vec![m1, a, d, e]), path(vec![m2, c, d])]);
    let counts = CountTensor::from_paths(&paths);
    let two = build_two_step(&counts);
    let one = build_one_step(&counts);

    for phi in [0.0, 0.5, 1.0] {
        let t = mix(&two, &one, &Flexibility::zero().with(e, phi)?)?;
        let split: Vec<String> = t
            .conditional(e, d)
            .iter()
            .map(|(k, w)| format!("{}:{w}", catalog.name(*k)))
            .collect();
        println!("phi_E={phi}: E's order at D is served from {}", split.join(" "));
    }

    println!("order edges:");
    let mut out = Vec::new();
    supplyflex::tensors::write_order_edges(&alternative_edges(&two, &one), &catalog, &mut out)?;
    print!("{}", String::from_utf8(out)?);

    println!("second-order flow graph at phi=1:");
    let graph = ChainBuilder::from_paths(&paths).chain(&Flexibility::uniform(1.0)?)?;
    let mut out = Vec::new();
    graph.write_csv(&catalog, &mut out)?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}
