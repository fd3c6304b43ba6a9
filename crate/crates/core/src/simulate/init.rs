use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{SimError, SimSystem, Slot};
use crate::ingest::{EntityCatalog, EntityId, Role, TransactionLog};
use crate::pathrec::{reconstruct_paths_by_year, PathMultiset, ReconstructionReport};
use crate::tensors::{build_one_step, build_two_step, CountTensor};

const DAYS_PER_YEAR: f64 = 365.0;

/// Yearly flow totals used to set demands, targets and capacities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowTotals {
    /// Ship-in of a distributor from each source, keyed `(holder, source)`.
    pub w_in: BTreeMap<(EntityId, EntityId), f64>,
    /// Total ship-out, final buyers included.
    pub w_out: BTreeMap<EntityId, f64>,
    /// Ship-out to final buyers.
    pub omega: BTreeMap<EntityId, f64>,
    /// Largest manufacturer outflow over any window of `window_days` days.
    pub peak_window: BTreeMap<EntityId, f64>,
}

impl FlowTotals {
    pub fn from_log(log: &TransactionLog, catalog: &EntityCatalog, year: i32, window_days: usize) -> Self {
        let mut f = FlowTotals::default();
        let mut daily: BTreeMap<EntityId, BTreeMap<i64, f64>> = BTreeMap::new();
        for t in &log.transactions {
            if t.date.year() != year {
                continue;
            }
            let seller_role = catalog.role(t.seller);
            if seller_role == Role::FinalBuyer {
                continue;
            }
            let q = t.quantity as f64;
            *f.w_out.entry(t.seller).or_default() += q;
            match catalog.role(t.buyer) {
                Role::Distributor => *f.w_in.entry((t.buyer, t.seller)).or_default() += q,
                Role::FinalBuyer => *f.omega.entry(t.seller).or_default() += q,
                Role::Manufacturer => {}
            }
            if seller_role == Role::Manufacturer {
                *daily.entry(t.seller).or_default().entry(t.date.0 as i64).or_default() += q;
            }
        }
        let w = window_days.max(1) as i64;
        for (m, days) in daily {
            let mut best = 0.0f64;
            for &d in days.keys() {
                let s: f64 = days.range(d..d + w).map(|(_, q)| q).sum();
                best = best.max(s);
            }
            f.peak_window.insert(m, best);
        }
        f
    }
}

/// Entities whose inputs needed patching during initialization.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InitReport {
    /// Non-positive buffer raised to one unit.
    pub floored: Vec<EntityId>,
    /// Ships out without any recorded ship-in.
    pub unsourced: Vec<EntityId>,
    pub manufacturers: usize,
    pub distributors: usize,
}

/// Builds sub-stocks from one year of paths and flows.
///
/// Daily final demand is `ω/365`. A distributor's target is what it
/// received over the year minus everything it shipped, floored at one, and
/// both demand and target are split over sources by receipt share.
/// Manufacturer capacity is the peak outflow over a restoration window.
pub fn init_from_data(
    paths: &PathMultiset,
    flows: &FlowTotals,
    catalog: &EntityCatalog,
) -> Result<(SimSystem, InitReport), SimError> {
    for v in flows.w_in.values().chain(flows.w_out.values()).chain(flows.omega.values()) {
        if !(*v >= 0.0) {
            return Err(SimError::Config("negative flow total".into()));
        }
    }
    let counts = CountTensor::from_paths(paths);
    let two_step = build_two_step(&counts);
    let one_step = build_one_step(&counts);

    let mut entities: BTreeSet<EntityId> = BTreeSet::new();
    entities.extend(flows.w_out.keys());
    entities.extend(flows.w_in.keys().map(|k| k.0));
    for (i, j, k, _) in counts.iter() {
        entities.extend([i, j, k]);
    }
    entities.remove(&EntityId::ORIGIN);

    let mut report = InitReport::default();
    let mut slots = Vec::new();
    let mut received: BTreeMap<EntityId, Vec<(EntityId, f64)>> = BTreeMap::new();
    for (&(i, j), &q) in &flows.w_in {
        if q > 0.0 {
            received.entry(i).or_default().push((j, q));
        }
    }
    let get = |m: &BTreeMap<EntityId, f64>, e: EntityId| m.get(&e).copied().unwrap_or(0.0);

    for &e in &entities {
        let demand = get(&flows.omega, e) / DAYS_PER_YEAR;
        match catalog.role(e) {
            Role::FinalBuyer => continue,
            Role::Manufacturer => {
                report.manufacturers += 1;
                slots.push(Slot {
                    holder: e,
                    source: EntityId::ORIGIN,
                    target: get(&flows.peak_window, e).max(1.0),
                    demand,
                    share: 1.0,
                    producer: true,
                });
            }
            Role::Distributor => {
                report.distributors += 1;
                let sources = received.get(&e).cloned().unwrap_or_default();
                let w_in: f64 = sources.iter().map(|s| s.1).sum();
                let mut target = w_in - get(&flows.w_out, e);
                if target <= 0.0 {
                    target = 1.0;
                    report.floored.push(e);
                }
                if sources.is_empty() {
                    if get(&flows.w_out, e) > 0.0 {
                        report.unsourced.push(e);
                    }
                    slots.push(Slot {
                        holder: e,
                        source: EntityId::ORIGIN,
                        target,
                        demand,
                        share: 1.0,
                        producer: false,
                    });
                    continue;
                }
                for (j, q) in sources {
                    let share = q / w_in;
                    slots.push(Slot {
                        holder: e,
                        source: j,
                        target: target * share,
                        demand: demand * share,
                        share,
                        producer: false,
                    });
                }
            }
        }
    }

    // sub-stocks that only the tensors know about
    let mut known: BTreeSet<(EntityId, EntityId)> = slots.iter().map(|s| (s.holder, s.source)).collect();
    let mut extra = Vec::new();
    for (_, j, k, _) in two_step.entries.iter().chain(one_step.entries.iter()) {
        if k.is_origin() || catalog.role(j) != Role::Distributor || !known.insert((j, k)) {
            continue;
        }
        extra.push(Slot {
            holder: j,
            source: k,
            target: 0.0,
            demand: 0.0,
            share: 0.0,
            producer: false,
        });
    }
    slots.extend(extra);
    slots.sort_by_key(|s| (s.holder, s.source));
    Ok((SimSystem::new(slots, two_step, one_step)?, report))
}

/// Reconstructs the paths of `year` and initializes a system from them.
/// `window_days` sets the manufacturer capacity window.
pub fn system_from_log(
    log: &TransactionLog,
    catalog: &EntityCatalog,
    year: i32,
    window_days: usize,
) -> Result<(SimSystem, InitReport, ReconstructionReport), SimError> {
    let (mut by_year, rec) = reconstruct_paths_by_year(log, catalog, true);
    let paths = by_year
        .remove(&year)
        .ok_or_else(|| SimError::Config(format!("no paths delivered in {year}")))?;
    let flows = FlowTotals::from_log(log, catalog, year, window_days);
    let (system, report) = init_from_data(&paths, &flows, catalog)?;
    Ok((system, report, rec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> EntityCatalog {
        let mut c = EntityCatalog::new();
        c.insert("M", Role::Manufacturer).unwrap();
        c.insert("D", Role::Distributor).unwrap();
        c.insert("F", Role::FinalBuyer).unwrap();
        c
    }

    fn flows(w_in: f64, w_out: f64, omega: f64) -> FlowTotals {
        let mut f = FlowTotals::default();
        f.w_in.insert((EntityId(1), EntityId(0)), w_in);
        f.w_out.insert(EntityId(1), w_out);
        f.omega.insert(EntityId(1), omega);
        f.w_out.insert(EntityId(0), w_in);
        f
    }

    #[test]
    fn target_is_receipts_minus_shipments() {
        let (sys, rep) = init_from_data(&PathMultiset::default(), &flows(100.0, 90.0, 30.0), &catalog()).unwrap();
        let s = &sys.slots[sys.slot(EntityId(1), EntityId(0)).unwrap()];
        assert_eq!(s.target, 10.0);
        assert!(rep.floored.is_empty());
    }

    #[test]
    fn negative_buffer_is_floored() {
        let (sys, rep) = init_from_data(&PathMultiset::default(), &flows(50.0, 60.0, 5.0), &catalog()).unwrap();
        assert_eq!(sys.slots[sys.slot(EntityId(1), EntityId(0)).unwrap()].target, 1.0);
        assert_eq!(rep.floored, vec![EntityId(1)]);
    }

    #[test]
    fn yearly_sales_become_daily_demand() {
        let (sys, _) = init_from_data(&PathMultiset::default(), &flows(400.0, 365.0, 365.0), &catalog()).unwrap();
        assert_eq!(sys.slots[sys.slot(EntityId(1), EntityId(0)).unwrap()].demand, 1.0);
    }
}
