//! One order on the toy system. D holds two units received from A and two
//! from C; E has an empty stock with a target of four. Without flexibility E
//! only accepts goods that came through A, so D ships two. With half
//! flexibility a quarter of the order may be served from C's goods.
//!
//! cargo run --example toy_order

use supplyflex::ingest::{EntityId, ProductId};
use supplyflex::pathrec::{DistributionPath, PathMultiset};
use supplyflex::simulate::{Routing, SimConfig, SimState, SimSystem, Slot};
use supplyflex::tensors::{build_one_step, build_two_step, CountTensor, Flexibility};

fn slot(holder: EntityId, source: EntityId, target: f64, share: f64) -> Slot {
    Slot {
        holder,
        source,
        target,
        demand: 0.0,
        share,
        producer: source.is_origin(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let [m1, m2, a, c, d, e] = [0, 1, 2, 3, 4, 5].map(EntityId);
    let path = |nodes: Vec<EntityId>| DistributionPath {
        product: ProductId(0),
        nodes,
        count: 1,
        phantom: false,
    };
    let paths = PathMultiset::from_paths(vec![path(vec![m1, a, d, e]), path(vec![m2, c, d])]);
    let counts = CountTensor::from_paths(&paths);
    let origin = EntityId::ORIGIN;
    let slots = vec![
        slot(m1, origin, 0.0, 1.0),
        slot(m2, origin, 0.0, 1.0),
        slot(a, m1, 0.0, 1.0),
        slot(c, m2, 0.0, 1.0),
        slot(d, a, 2.0, 0.5),
        slot(d, c, 2.0, 0.5),
        slot(e, d, 4.0, 1.0),
    ];
    let sys = SimSystem::new(slots, build_two_step(&counts), build_one_step(&counts))?;
    let config = SimConfig {
        tau: 1.0,
        horizon: 2,
        seed: 0,
    };

    for phi_e in [0.0, 0.5, 1.0] {
        let routing = Routing::new(&sys, &Flexibility::zero().with(e, phi_e)?)?;
        let mut st = SimState::empty(&sys, &routing);
        st.stock[sys.slot(d, a).unwrap()] = 2.0;
        st.stock[sys.slot(d, c).unwrap()] = 2.0;
        st.reset_mass();
        // day one places the order, day two serves it
        st.step(&sys, &routing, &config);
        st.step(&sys, &routing, &config);
        println!(
            "phi_E={phi_e}: D ships {} to E, D keeps {} from A and {} from C",
            st.in_flight[sys.slot(e, d).unwrap()],
            st.stock[sys.slot(d, a).unwrap()],
            st.stock[sys.slot(d, c).unwrap()],
        );
    }
    Ok(())
}
