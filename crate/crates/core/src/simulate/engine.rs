use serde::Serialize;

use super::{ShockSpec, SimConfig, SimError, SimSystem};
use crate::ingest::EntityId;
use crate::tensors::{mix, Flexibility};

/// One order edge: sub-stock `from` orders a share `weight` of its
/// replenishment from sub-stock `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Order splitting for every distributor sub-stock at a fixed flexibility.
/// Edges are sorted by `(from, to)`.
#[derive(Debug, Clone)]
pub struct Routing {
    pub edges: Vec<RouteEdge>,
    start: Vec<usize>,
}

fn holder_shares(system: &SimSystem, holder: EntityId) -> Vec<(usize, f64)> {
    let slots = system.holder_slots(holder);
    let by = |f: fn(&super::Slot) -> f64| -> Vec<(usize, f64)> {
        let total: f64 = slots.iter().map(|&q| f(&system.slots[q])).sum();
        if total > 0.0 {
            slots
                .iter()
                .map(|&q| (q, f(&system.slots[q]) / total))
                .filter(|e| e.1 > 0.0)
                .collect()
        } else {
            Vec::new()
        }
    };
    let shares = by(|s| s.share);
    if !shares.is_empty() {
        return shares;
    }
    let shares = by(|s| s.target);
    if !shares.is_empty() {
        return shares;
    }
    let n = slots.len() as f64;
    slots.iter().map(|&q| (q, 1.0 / n)).collect()
}

impl Routing {
    /// Splits the order of `(i|j)` over `(j|k)` by the conditional of the
    /// mixed tensor given `(i, j)`. Claims that would land on a source-less
    /// distributor sub-stock `(j|ORIGIN)`, or orders with no conditional at
    /// all, are spread over `j`'s sub-stocks by receipt share.
    pub fn new(system: &SimSystem, phi: &Flexibility) -> Result<Routing, SimError> {
        let t = mix(&system.two_step, &system.one_step, phi)?;
        let mut edges = Vec::new();
        let mut start = Vec::with_capacity(system.len() + 1);
        for (s, slot) in system.slots.iter().enumerate() {
            start.push(edges.len());
            if slot.producer || slot.source.is_origin() {
                continue;
            }
            let j = slot.source;
            if system.holder_slots(j).is_empty() {
                return Err(SimError::Config(format!(
                    "sub-stock ({}|{}) orders from an entity without stock",
                    slot.holder.0, j.0
                )));
            }
            let mut out: Vec<(usize, f64)> = Vec::new();
            let spread = |w: f64, out: &mut Vec<(usize, f64)>| {
                for (q, share) in holder_shares(system, j) {
                    out.push((q, w * share));
                }
            };
            let cond = t.conditional(slot.holder, j);
            if cond.is_empty() {
                spread(1.0, &mut out);
            }
            for (k, p) in cond {
                match system.slot(j, k) {
                    Some(q) if !(k.is_origin() && !system.slots[q].producer) => out.push((q, p)),
                    _ => spread(p, &mut out),
                }
            }
            out.sort_by_key(|e| e.0);
            for (q, w) in out {
                match edges.last_mut() {
                    Some(RouteEdge { from, to, weight }) if *from == s && *to == q => *weight += w,
                    _ => edges.push(RouteEdge {
                        from: s,
                        to: q,
                        weight: w,
                    }),
                }
            }
        }
        start.push(edges.len());
        Ok(Routing { edges, start })
    }

    pub fn from_slot(&self, s: usize) -> &[RouteEdge] {
        &self.edges[self.start[s]..self.start[s + 1]]
    }

    fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.start[s]..self.start[s + 1]
    }

    /// Daily claims `D` on every sub-stock in an undisturbed system:
    /// `D = c + Pᵀ D`.
    pub fn steady_claims(&self, system: &SimSystem) -> Result<Vec<f64>, SimError> {
        let c: Vec<f64> = system.slots.iter().map(|s| s.demand).collect();
        let mut d = c.clone();
        for _ in 0..100_000 {
            let mut next = c.clone();
            for e in &self.edges {
                next[e.to] += d[e.from] * e.weight;
            }
            let scale = next.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
            let change = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            d = next;
            if !d.iter().all(|v| v.is_finite()) {
                break;
            }
            if change <= 1e-13 * scale {
                return Ok(d);
            }
        }
        Err(SimError::SteadyState)
    }
}

/// Totals shipped on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: usize,
    /// Delivered to final buyers.
    pub final_shipped: f64,
    /// Every shipment, including deliveries to final buyers.
    pub shipped_total: f64,
}

/// Conservation checks accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Audit {
    /// Largest relative drift of stock + in transit + delivered − produced.
    pub max_mass_error: f64,
    pub negative_stock: usize,
    /// Largest relative gap between an order and the sum of its splits.
    pub max_order_error: f64,
}

impl Audit {
    pub fn ok(&self) -> bool {
        self.max_mass_error <= 1e-9 && self.negative_stock == 0 && self.max_order_error <= 1e-12
    }
}

/// Mutable state of every sub-stock.
#[derive(Debug, Clone)]
pub struct SimState {
    pub day: usize,
    pub stock: Vec<f64>,
    /// Arrives at the start of the next day.
    pub in_flight: Vec<f64>,
    /// Orders per routing edge, served the next day.
    pub pending: Vec<f64>,
    /// Claims faced by each sub-stock on the previous day.
    pub last_claims: Vec<f64>,
    /// Cumulative ship-out of each sub-stock, final buyers included.
    pub cum_out: Vec<f64>,
    /// Effective production capacity as a fraction of the nominal one.
    pub capacity_factor: f64,
    pub halted: bool,
    pub produced: f64,
    pub delivered: f64,
    pub audit: Audit,
    initial_mass: f64,
}

impl SimState {
    /// Empty stocks, no orders in flight.
    pub fn empty(system: &SimSystem, routing: &Routing) -> SimState {
        let n = system.len();
        SimState {
            day: 0,
            stock: vec![0.0; n],
            in_flight: vec![0.0; n],
            pending: vec![0.0; routing.edges.len()],
            last_claims: vec![0.0; n],
            cum_out: vec![0.0; n],
            capacity_factor: 1.0,
            halted: false,
            produced: 0.0,
            delivered: 0.0,
            audit: Audit::default(),
            initial_mass: 0.0,
        }
    }

    /// Stocks at target and the steady order stream already in the pipeline,
    /// so an unshocked system stays put from day one.
    pub fn steady(system: &SimSystem, routing: &Routing) -> Result<SimState, SimError> {
        let d = routing.steady_claims(system)?;
        let mut st = SimState::empty(system, routing);
        for (s, slot) in system.slots.iter().enumerate() {
            st.stock[s] = slot.target;
            if !slot.producer && !routing.from_slot(s).is_empty() {
                st.in_flight[s] = d[s];
            }
            st.last_claims[s] = d[s];
        }
        for (n, e) in routing.edges.iter().enumerate() {
            st.pending[n] = d[e.from] * e.weight;
        }
        st.reset_mass();
        Ok(st)
    }

    /// Re-bases the conservation audit on the current state.
    pub fn reset_mass(&mut self) {
        self.initial_mass = self.mass();
        self.produced = 0.0;
        self.delivered = 0.0;
    }

    fn mass(&self) -> f64 {
        self.stock.iter().sum::<f64>() + self.in_flight.iter().sum::<f64>()
    }

    /// Destroys a fraction of every manufacturer stock.
    pub fn apply_shock(&mut self, system: &SimSystem, shock: &ShockSpec) {
        for (s, slot) in system.slots.iter().enumerate() {
            if slot.producer {
                let lost = self.stock[s] * shock.shock_fraction;
                self.stock[s] -= lost;
                self.produced -= lost;
            }
        }
        if shock.production_halt {
            self.halted = true;
        } else {
            self.capacity_factor = 1.0 - shock.shock_fraction;
        }
    }

    /// Advances one day.
    pub fn step(&mut self, system: &SimSystem, routing: &Routing, config: &SimConfig) -> DayRecord {
        self.day += 1;
        let n = system.len();
        for s in 0..n {
            self.stock[s] += self.in_flight[s];
            self.in_flight[s] = 0.0;
        }
        if !self.halted {
            for (s, slot) in system.slots.iter().enumerate() {
                if slot.producer {
                    let add = (slot.target * self.capacity_factor - self.stock[s]).max(0.0);
                    self.stock[s] += add;
                    self.produced += add;
                }
            }
        }

        let mut claims: Vec<f64> = system.slots.iter().map(|s| s.demand).collect();
        for (e, &o) in routing.edges.iter().zip(&self.pending) {
            claims[e.to] += o;
        }
        let ratio: Vec<f64> = (0..n)
            .map(|q| {
                if claims[q] > self.stock[q] {
                    self.stock[q] / claims[q]
                } else {
                    1.0
                }
            })
            .collect();
        let mut shipped_total = 0.0;
        for (n_e, e) in routing.edges.iter().enumerate() {
            let x = self.pending[n_e] * ratio[e.to];
            self.in_flight[e.from] += x;
            self.cum_out[e.to] += x;
            shipped_total += x;
        }
        let mut final_shipped = 0.0;
        for (q, slot) in system.slots.iter().enumerate() {
            final_shipped += slot.demand * ratio[q];
            self.cum_out[q] += slot.demand * ratio[q];
            if ratio[q] < 1.0 {
                self.stock[q] = 0.0;
            } else {
                self.stock[q] -= claims[q];
            }
            if self.stock[q] < 0.0 {
                self.audit.negative_stock += 1;
            }
        }
        shipped_total += final_shipped;
        self.delivered += final_shipped;
        self.last_claims = claims;

        for (s, slot) in system.slots.iter().enumerate() {
            if slot.producer {
                continue;
            }
            let range = routing.range(s);
            if range.is_empty() {
                continue;
            }
            let o = (self.last_claims[s] + (slot.target - self.stock[s]) / config.tau).max(0.0);
            let mut placed = 0.0;
            for n_e in range {
                let x = o * routing.edges[n_e].weight;
                self.pending[n_e] = x;
                placed += x;
            }
            let err = (placed - o).abs() / o.max(1.0);
            self.audit.max_order_error = self.audit.max_order_error.max(err);
        }

        let balance = self.mass() + self.delivered - self.produced;
        let err = (balance - self.initial_mass).abs() / self.initial_mass.max(1.0);
        self.audit.max_mass_error = self.audit.max_mass_error.max(err);

        DayRecord {
            day: self.day,
            final_shipped,
            shipped_total,
        }
    }
}

/// A complete run from the steady state.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub records: Vec<DayRecord>,
    pub state: SimState,
    pub routing: Routing,
}

impl SimRun {
    pub fn audit(&self) -> Audit {
        self.state.audit
    }

    pub fn final_shipped(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.final_shipped).collect()
    }
}

fn check_routing_sums(routing: &Routing, system: &SimSystem) -> Result<(), SimError> {
    for s in 0..system.len() {
        let edges = routing.from_slot(s);
        if edges.is_empty() {
            continue;
        }
        let total: f64 = edges.iter().map(|e| e.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::Config(format!("order split of sub-stock {s} sums to {total}")));
        }
    }
    Ok(())
}

/// Runs `config.horizon` days at flexibility `phi` under `shock`.
pub fn run(
    system: &SimSystem,
    config: &SimConfig,
    phi: &Flexibility,
    shock: &ShockSpec,
) -> Result<SimRun, SimError> {
    config.validate()?;
    shock.validate()?;
    let routing = Routing::new(system, phi)?;
    check_routing_sums(&routing, system)?;
    let mut state = SimState::steady(system, &routing)?;
    let mut records = Vec::with_capacity(config.horizon);
    for t in 1..=config.horizon {
        if t == shock.t_star.max(1) {
            state.apply_shock(system, shock);
        }
        records.push(state.step(system, &routing, config));
    }
    Ok(SimRun {
        records,
        state,
        routing,
    })
}
