//! Fixtures and brute-force oracles shared by the integration tests and the
//! acceptance harness.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng;
use supplyflex::ingest::{Day, EntityCatalog, EntityId, ProductId, Role, Transaction, TransactionLog};
use supplyflex::pathrec::{DistributionPath, PathMultiset};
use supplyflex::simulate::{SimState, SimSystem, Routing, Slot};
use supplyflex::tensors::{build_one_step, build_two_step, CountTensor, OrderTransitionTensor};

pub fn e(n: u32) -> EntityId {
    EntityId(n)
}

pub fn multiset(paths: &[(&[EntityId], u64)]) -> PathMultiset {
    PathMultiset::from_paths(
        paths
            .iter()
            .map(|(nodes, count)| DistributionPath {
                product: ProductId(0),
                nodes: nodes.to_vec(),
                count: *count,
                phantom: false,
            })
            .collect(),
    )
}

pub struct Toy {
    pub m1: EntityId,
    pub m2: EntityId,
    pub a: EntityId,
    pub c: EntityId,
    pub d: EntityId,
    pub e: EntityId,
    pub paths: PathMultiset,
}

/// E buys from D, which received from A (fed by M1) and from C (fed by M2).
/// E's observed goods all came through A.
pub fn toy() -> Toy {
    let (m1, m2, a, c, d, ee) = (e(0), e(1), e(2), e(3), e(4), e(5));
    Toy {
        m1,
        m2,
        a,
        c,
        d,
        e: ee,
        paths: multiset(&[(&[m1, a, d, ee], 1), (&[m2, c, d], 1)]),
    }
}

pub fn toy_catalog() -> EntityCatalog {
    let mut c = EntityCatalog::new();
    for (name, role) in [
        ("M1", Role::Manufacturer),
        ("M2", Role::Manufacturer),
        ("A", Role::Distributor),
        ("C", Role::Distributor),
        ("D", Role::Distributor),
        ("E", Role::Distributor),
        ("F", Role::FinalBuyer),
    ] {
        c.insert(name, role).unwrap();
    }
    c
}

pub fn slot(holder: EntityId, source: EntityId, target: f64, share: f64) -> Slot {
    Slot {
        holder,
        source,
        target,
        demand: 0.0,
        share,
        producer: source.is_origin(),
    }
}

/// The toy system with D holding 2 units from each of A and C and E holding
/// nothing against a target of 4, so E orders 4 at the end of day one.
pub fn toy_system() -> (Toy, SimSystem) {
    let f = toy();
    let counts = CountTensor::from_paths(&f.paths);
    let o = EntityId::ORIGIN;
    let slots = vec![
        slot(f.m1, o, 0.0, 1.0),
        slot(f.m2, o, 0.0, 1.0),
        slot(f.a, f.m1, 0.0, 1.0),
        slot(f.c, f.m2, 0.0, 1.0),
        slot(f.d, f.a, 2.0, 0.5),
        slot(f.d, f.c, 2.0, 0.5),
        slot(f.e, f.d, 4.0, 1.0),
    ];
    let sys = SimSystem::new(slots, build_two_step(&counts), build_one_step(&counts)).unwrap();
    (f, sys)
}

/// Stocks at the given levels with nothing in transit or on order.
pub fn state_with(sys: &SimSystem, routing: &Routing, stock: &[(EntityId, EntityId, f64)]) -> SimState {
    let mut st = SimState::empty(sys, routing);
    for &(h, s, v) in stock {
        st.stock[sys.slot(h, s).unwrap()] = v;
    }
    st.reset_mass();
    st
}

/// A random log over a small catalog, mostly along the supply direction
/// but with every kind of irregular shipment mixed in. Dates straddle a
/// new year and many shipments share a day.
pub fn random_log<R: Rng>(rng: &mut R, n_tx: usize) -> (EntityCatalog, TransactionLog) {
    let mut catalog = EntityCatalog::new();
    let mut ids: BTreeMap<Role, Vec<EntityId>> = BTreeMap::new();
    for (role, n, prefix) in [
        (Role::Manufacturer, rng.random_range(1..=3), "M"),
        (Role::Distributor, rng.random_range(2..=8), "D"),
        (Role::FinalBuyer, rng.random_range(1..=5), "F"),
    ] {
        for k in 0..n {
            let id = catalog.insert(&format!("{prefix}{k}"), role).unwrap();
            ids.entry(role).or_default().push(id);
        }
    }
    let all: Vec<EntityId> = ids.values().flatten().copied().collect();
    let mut log = TransactionLog::default();
    let products = [log.products.intern("P0"), log.products.intern("P1")];
    let start = Day::from_ymd(2012, 12, 10).unwrap();
    let span = rng.random_range(1..=40);
    let pick = |rng: &mut R, r: Role| *ids[&r].choose(rng).unwrap();
    for _ in 0..n_tx {
        let (seller, buyer) = loop {
            let (s, b) = match rng.random_range(0..10) {
                0..=2 => (pick(rng, Role::Manufacturer), pick(rng, Role::Distributor)),
                3..=5 => (pick(rng, Role::Distributor), pick(rng, Role::Distributor)),
                6..=8 => (pick(rng, Role::Distributor), pick(rng, Role::FinalBuyer)),
                _ => (*all.choose(rng).unwrap(), *all.choose(rng).unwrap()),
            };
            if s != b {
                break (s, b);
            }
        };
        log.transactions.push(Transaction {
            date: start.offset(rng.random_range(0..span)),
            seller,
            buyer,
            product: *products.choose(rng).unwrap(),
            quantity: rng.random_range(1..=12),
        });
    }
    log.sort_by_date();
    (catalog, log)
}

/// Everything the unit tracer observed.
#[derive(Debug, Default, PartialEq)]
pub struct Traced {
    /// `(delivery year, product, holders)` to number of units.
    pub paths: BTreeMap<(i32, ProductId, Vec<EntityId>), u64>,
    pub underflow: BTreeMap<(EntityId, ProductId), u64>,
    pub delivered: u64,
    pub residual: u64,
}

/// Follows every unit individually through first-in first-out stocks.
///
/// Same-day shipments are handled in passes: a distributor ships only once
/// nothing else that day is still due to arrive at it, and a pass in which
/// nobody can ship releases the earliest waiting shipment.
pub fn trace_units(log: &TransactionLog, catalog: &EntityCatalog) -> Traced {
    let mut out = Traced::default();
    let mut products: Vec<ProductId> = log.transactions.iter().map(|t| t.product).collect();
    products.sort();
    products.dedup();
    for p in products {
        let rows: Vec<&Transaction> = log.transactions.iter().filter(|t| t.product == p).collect();
        let mut stocks: HashMap<EntityId, VecDeque<Vec<EntityId>>> = HashMap::new();
        let mut n = 0;
        while n < rows.len() {
            let mut m = n;
            while m < rows.len() && rows[m].date == rows[n].date {
                m += 1;
            }
            let day = &rows[n..m];
            let mut done = vec![false; day.len()];
            let mut pending: Vec<usize> = (0..day.len()).collect();
            while !pending.is_empty() {
                let mut next = Vec::new();
                let mut progressed = false;
                for &t in &pending {
                    let seller = day[t].seller;
                    let blocked = catalog.role(seller) == Role::Distributor
                        && (0..day.len()).any(|u| !done[u] && day[u].buyer == seller);
                    if blocked {
                        next.push(t);
                    } else {
                        move_units(day[t], catalog, &mut stocks, &mut out);
                        done[t] = true;
                        progressed = true;
                    }
                }
                if !progressed {
                    let t = next.remove(0);
                    move_units(day[t], catalog, &mut stocks, &mut out);
                    done[t] = true;
                }
                pending = next;
            }
            n = m;
        }
        out.residual += stocks.values().map(|q| q.len() as u64).sum::<u64>();
    }
    out
}

fn move_units(
    t: &Transaction,
    catalog: &EntityCatalog,
    stocks: &mut HashMap<EntityId, VecDeque<Vec<EntityId>>>,
    out: &mut Traced,
) {
    let buyer_role = catalog.role(t.buyer);
    if buyer_role == Role::Manufacturer || catalog.role(t.seller) == Role::FinalBuyer {
        return;
    }
    for _ in 0..t.quantity {
        let mut unit = if catalog.role(t.seller) == Role::Manufacturer {
            vec![t.seller]
        } else {
            match stocks.entry(t.seller).or_default().pop_front() {
                Some(u) => u,
                None => {
                    *out.underflow.entry((t.seller, t.product)).or_default() += 1;
                    vec![t.seller]
                }
            }
        };
        if buyer_role == Role::FinalBuyer {
            *out.paths.entry((t.date.year(), t.product, unit)).or_default() += 1;
            out.delivered += 1;
        } else {
            unit.push(t.buyer);
            stocks.entry(t.buyer).or_default().push_back(unit);
        }
    }
}

/// Order counts for a two-layer system: `orderers` buy from two of `mids`
/// each, with a strong habit for one upstream source per intermediary, while
/// the intermediaries themselves draw on all `sources`.
pub struct RecoverySystem {
    pub counts: CountTensor,
    pub two_step: OrderTransitionTensor,
    pub one_step: OrderTransitionTensor,
    pub volumes: BTreeMap<EntityId, f64>,
    pub orderers: Vec<EntityId>,
}

pub fn recovery_system<R: Rng>(rng: &mut R, n_orderers: u32) -> RecoverySystem {
    let sources: Vec<EntityId> = (0..3).map(e).collect();
    let mids: Vec<EntityId> = (100..104).map(e).collect();
    let orderers: Vec<EntityId> = (200..200 + n_orderers).map(e).collect();
    let mut counts = CountTensor::default();
    for &j in &mids {
        for &k in &sources {
            let c = rng.random_range(5..=20) as f64;
            counts.add(j, k, EntityId::ORIGIN, c);
            counts.add_margin(j, k, c);
        }
    }
    for &i in &orderers {
        let chosen: Vec<EntityId> = mids.choose_multiple(rng, 2).copied().collect();
        for j in chosen {
            let habit = *sources.choose(rng).unwrap();
            let c = rng.random_range(20..=60) as f64;
            counts.add(i, j, habit, c);
            counts.add_margin(i, j, c);
        }
    }
    RecoverySystem {
        two_step: build_two_step(&counts),
        one_step: build_one_step(&counts),
        volumes: counts.volumes(),
        counts,
        orderers,
    }
}

/// A random row-stochastic matrix with state 0 absorbing and every other
/// state leading towards it; transient states also jump at random, so the
/// transient part is strongly connected with probability close to one.
pub fn random_absorbing_chain<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    m[0][0] = 1.0;
    for (i, row) in m.iter_mut().enumerate().skip(1) {
        let lower = rng.random_range(0..i);
        row[lower] += rng.random_range(0.05..1.0);
        for _ in 0..rng.random_range(1..=4) {
            let j = rng.random_range(1..n);
            row[j] += rng.random_range(0.0..1.0);
        }
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    m
}

/// Second-largest eigenvalue modulus from a full dense spectrum.
pub fn nalgebra_second_modulus(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli.get(1).copied().unwrap_or(0.0)
}
