//! Seeded generator for tiered distribution systems.
//!
//! Two substitutable product lines flow from their own manufacturers through
//! `tiers` layers of distributors to final buyers. A configurable share of
//! distributors carries both lines, which is where substitution can happen.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{
    Day, EntityCatalog, EntityId, ProductId, Role, SubstitutionRule, Transaction, TransactionLog,
};

const LINES: [(&str, &str); 2] = [("OXY-10", "10"), ("OXY-20", "20")];
const LATERAL_SHARE: f64 = 0.1;
const SKIP_TIER_PROB: f64 = 0.1;
const SHARED_SUPPLIER_PROB: f64 = 0.2;
const DAYS: u32 = 365;
/// Days each tier waits before its first onward shipment of the year.
const LEAD_DAYS: u32 = 5;

fn default_years() -> u32 {
    1
}
fn default_start_year() -> i32 {
    2012
}
fn default_lateral() -> f64 {
    0.05
}
fn default_max_interval() -> u32 {
    14
}

/// Shape of a synthetic distribution system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_manufacturers: usize,
    pub n_distributors: usize,
    pub n_final_buyers: usize,
    /// Number of distributor layers between manufacturers and final buyers.
    pub tiers: usize,
    /// Fraction of distributors that carry both product lines.
    pub overlap: f64,
    /// Median annual demand of a final buyer, in packages.
    pub volume_scale: f64,
    pub seed: u64,
    #[serde(default = "default_years")]
    pub years: u32,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    /// Probability that a distributor runs mutual transfers with a peer in
    /// its own tier.
    #[serde(default = "default_lateral")]
    pub lateral: f64,
    /// Longest gap between two shipments on one trade relation, in days.
    #[serde(default = "default_max_interval")]
    pub max_interval: u32,
}

impl SynthSpec {
    pub fn new(
        n_manufacturers: usize,
        n_distributors: usize,
        n_final_buyers: usize,
        tiers: usize,
        overlap: f64,
        volume_scale: f64,
        seed: u64,
    ) -> Self {
        let spec = SynthSpec {
            n_manufacturers,
            n_distributors,
            n_final_buyers,
            tiers,
            overlap,
            volume_scale,
            seed,
            years: default_years(),
            start_year: default_start_year(),
            lateral: default_lateral(),
            max_interval: default_max_interval(),
        };
        spec.validate().expect("invalid SynthSpec");
        spec
    }

    /// Small system used by the examples and the CLI demo.
    pub fn demo() -> Self {
        SynthSpec::new(4, 24, 120, 3, 0.5, 400.0, 7)
    }

    /// The 1 000-distributor system used for the stress-test shape checks.
    pub fn bundled() -> Self {
        SynthSpec::new(20, 1000, 5000, 3, 0.5, 1000.0, 2012)
    }

    pub fn with_years(mut self, years: u32) -> Self {
        self.years = years.max(1);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_manufacturers == 0 || self.n_final_buyers == 0 {
            return Err("need at least one manufacturer and one final buyer".into());
        }
        if self.tiers == 0 {
            return Err("tiers must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err("overlap must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.lateral) {
            return Err("lateral must lie in [0, 1]".into());
        }
        if !(self.volume_scale > 0.0) {
            return Err("volume_scale must be positive".into());
        }
        if self.max_interval == 0 || self.years == 0 {
            return Err("max_interval and years must be positive".into());
        }
        Ok(())
    }
}

/// Generated catalog, date-ordered log and substitution rules.
#[derive(Debug, Clone)]
pub struct SyntheticSystem {
    pub catalog: EntityCatalog,
    pub log: TransactionLog,
    pub rules: BTreeMap<String, SubstitutionRule>,
}

struct Node {
    id: EntityId,
    tier: usize,
    lines: [bool; 2],
    /// Per line, `(supplier node, preference weight)`.
    suppliers: [Vec<(usize, f64)>; 2],
    /// Yearly stock build-up per line, as a fraction of ship-out.
    buffer: [f64; 2],
    lag: u32,
}

struct Edge {
    seller: EntityId,
    buyer: EntityId,
    line: usize,
    lag: u32,
    interval: u32,
}

/// Builds a deterministic synthetic system; identical specs give identical output.
pub fn generate_synthetic_system(spec: &SynthSpec) -> SyntheticSystem {
    spec.validate().expect("invalid SynthSpec");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut catalog = EntityCatalog::new();

    let width = |n: usize| n.max(1).to_string().len().max(3);
    let mut nodes: Vec<Node> = Vec::new();
    for m in 0..spec.n_manufacturers {
        let id = catalog
            .insert(&format!("M{:0w$}", m + 1, w = width(spec.n_manufacturers)), Role::Manufacturer)
            .expect("fresh name");
        let lines = if spec.n_manufacturers == 1 {
            [true, true]
        } else {
            [m % 2 == 0, m % 2 == 1]
        };
        nodes.push(Node {
            id,
            tier: 0,
            lines,
            suppliers: [Vec::new(), Vec::new()],
            buffer: [0.0; 2],
            lag: 0,
        });
    }

    // tier sizes grow geometrically downstream
    let tiers = spec.tiers.min(spec.n_distributors);
    let mut sizes = vec![0usize; tiers];
    if spec.n_distributors > 0 {
        let total_w: f64 = (0..tiers).map(|t| 2f64.powi(t as i32)).sum();
        let mut assigned = 0;
        for (t, size) in sizes.iter_mut().enumerate() {
            *size = ((spec.n_distributors as f64 * 2f64.powi(t as i32) / total_w).floor() as usize).max(1);
            assigned += *size;
        }
        while assigned > spec.n_distributors {
            let t = sizes.iter().rposition(|&s| s > 1).expect("room to shrink");
            sizes[t] -= 1;
            assigned -= 1;
        }
        sizes[tiers - 1] += spec.n_distributors - assigned;
    }

    let dwidth = width(spec.n_distributors);
    let mut tier_members: Vec<Vec<usize>> = vec![(0..spec.n_manufacturers).collect()];
    let mut counter = 0;
    for (t, &size) in sizes.iter().enumerate() {
        let tier = t + 1;
        let mut members = Vec::with_capacity(size);
        for _ in 0..size {
            counter += 1;
            let id = catalog
                .insert(&format!("D{:0w$}", counter, w = dwidth), Role::Distributor)
                .expect("fresh name");
            // first-tier wholesalers are either deep-stocked or lean, the
            // tiers in between run lean, retail-facing distributors hold a few weeks
            let (lo, hi) = if tier == sizes.len() {
                (0.02, 0.08)
            } else if tier == 1 && rng.random::<bool>() {
                (0.15, 0.35)
            } else {
                (0.005, 0.03)
            };
            let lines = if rng.random::<f64>() < spec.overlap {
                [true, true]
            } else if rng.random::<bool>() {
                [true, false]
            } else {
                [false, true]
            };
            members.push(nodes.len());
            nodes.push(Node {
                id,
                tier,
                lines,
                suppliers: [Vec::new(), Vec::new()],
                buffer: [rng.random_range(lo..hi), rng.random_range(lo..hi)],
                lag: LEAD_DAYS * tier as u32,
            });
        }
        for line in 0..2 {
            if !members.iter().any(|&n| nodes[n].lines[line]) {
                nodes[members[0]].lines[line] = true;
            }
        }
        tier_members.push(members);
    }
    let n_tiers = tier_members.len() - 1;

    // upstream relations
    for tier in 1..=n_tiers {
        for idx in 0..tier_members[tier].len() {
            let n = tier_members[tier][idx];
            for line in 0..2 {
                if !nodes[n].lines[line] {
                    continue;
                }
                let from_tier = if tier >= 2 && rng.random::<f64>() < SKIP_TIER_PROB {
                    0
                } else {
                    tier - 1
                };
                let candidates: Vec<usize> = tier_members[from_tier]
                    .iter()
                    .copied()
                    .filter(|&c| nodes[c].lines[line])
                    .collect();
                let mut chosen: Vec<usize> = Vec::new();
                // reuse a supplier of the other line when it carries this one too
                let other = &nodes[n].suppliers[1 - line];
                if let Some(&(s, _)) = other.first() {
                    if nodes[s].lines[line] && rng.random::<f64>() < SHARED_SUPPLIER_PROB {
                        chosen.push(s);
                    }
                }
                let want = if rng.random::<f64>() < 0.3 { 1 } else { 2 };
                let want = want.min(candidates.len());
                if chosen.len() < want {
                    for i in sample(&mut rng, candidates.len(), want).into_iter() {
                        if chosen.len() >= want {
                            break;
                        }
                        if !chosen.contains(&candidates[i]) {
                            chosen.push(candidates[i]);
                        }
                    }
                }
                nodes[n].suppliers[line] = chosen
                    .into_iter()
                    .map(|s| (s, rng.random_range(0.2..1.0)))
                    .collect();
            }
        }
    }

    // mutual transfers between peers of the same tier
    let mut laterals: Vec<(usize, usize, usize)> = Vec::new();
    for tier in 1..=n_tiers {
        let members = &tier_members[tier];
        if members.len() < 2 {
            continue;
        }
        for &a in members {
            if rng.random::<f64>() >= spec.lateral {
                continue;
            }
            let b = members[rng.random_range(0..members.len())];
            if a == b {
                continue;
            }
            if let Some(line) = (0..2).find(|&l| nodes[a].lines[l] && nodes[b].lines[l]) {
                laterals.push((a, b, line));
            }
        }
    }

    // final buyers
    let fwidth = width(spec.n_final_buyers);
    let last = tier_members[n_tiers].clone();
    let tier_weight = |t: usize| if t == n_tiers { 1.0 } else { 0.1 };
    let demand_dist = LogNormal::new(spec.volume_scale.ln(), 1.0).expect("valid lognormal");
    // (seller node, buyer id, line, base annual demand)
    let mut final_edges: Vec<(usize, EntityId, usize, f64)> = Vec::new();
    for f in 0..spec.n_final_buyers {
        let id = catalog
            .insert(&format!("F{:0w$}", f + 1, w = fwidth), Role::FinalBuyer)
            .expect("fresh name");
        let both = rng.random::<f64>() < 0.2;
        let first_line = rng.random_range(0..2usize);
        let lines: Vec<usize> = if both { vec![0, 1] } else { vec![first_line] };
        for line in lines {
            let seller = if n_tiers == 0 {
                let c: Vec<usize> = tier_members[0].iter().copied().filter(|&m| nodes[m].lines[line]).collect();
                c[rng.random_range(0..c.len())]
            } else if f < last.len() && nodes[last[f]].lines[line] {
                last[f]
            } else {
                let weights: Vec<f64> = (1..=n_tiers).map(tier_weight).collect();
                let total: f64 = weights.iter().sum();
                let mut r = rng.random::<f64>() * total;
                let mut tier = n_tiers;
                for (i, w) in weights.iter().enumerate() {
                    if r < *w {
                        tier = i + 1;
                        break;
                    }
                    r -= w;
                }
                let c: Vec<usize> = tier_members[tier]
                    .iter()
                    .copied()
                    .filter(|&d| nodes[d].lines[line])
                    .collect();
                c[rng.random_range(0..c.len())]
            };
            let demand = demand_dist.sample(&mut rng);
            final_edges.push((seller, id, line, demand));
        }
    }

    // every carried line needs an outlet, otherwise a carrier never ships it
    let mut has_outlet: Vec<[bool; 2]> = vec![[false; 2]; nodes.len()];
    for node in &nodes {
        for line in 0..2 {
            for &(s, _) in &node.suppliers[line] {
                has_outlet[s][line] = true;
            }
        }
    }
    for &(seller, _, line, _) in &final_edges {
        has_outlet[seller][line] = true;
    }
    for tier in 1..=n_tiers {
        for &d in &tier_members[tier] {
            for line in 0..2 {
                if nodes[d].lines[line] && !has_outlet[d][line] {
                    let f = rng.random_range(0..spec.n_final_buyers);
                    let buyer = catalog.id(&format!("F{:0w$}", f + 1, w = fwidth)).expect("exists");
                    final_edges.push((d, buyer, line, demand_dist.sample(&mut rng)));
                }
            }
        }
    }

    // per-relation shipment cadence, fixed across years
    let mut products = super::ProductTable::default();
    let line_products: [ProductId; 2] = [products.intern(LINES[0].0), products.intern(LINES[1].0)];
    let mut relations: BTreeMap<(usize, usize, usize), u32> = BTreeMap::new();
    let mut cadence = |rng: &mut ChaCha8Rng, key: (usize, usize, usize)| -> u32 {
        *relations
            .entry(key)
            .or_insert_with(|| rng.random_range(1..=spec.max_interval))
    };

    let year_noise = LogNormal::new(0.0, 0.1).expect("valid");
    let pref_noise = LogNormal::new(0.0, 0.3).expect("valid");
    let size_noise = LogNormal::new(0.0, 0.5).expect("valid");

    let mut transactions: Vec<Transaction> = Vec::new();
    for year in 0..spec.years {
        let year_start = Day::from_ymd(spec.start_year + year as i32, 1, 1).expect("valid year");
        let n = nodes.len();
        // integer flows for this year
        let mut out_down = vec![[0u64; 2]; n];
        let mut flows: Vec<(usize, EntityId, usize, u64, usize)> = Vec::new(); // seller node, buyer, line, volume, seller tier
        let mut final_out = vec![[0u64; 2]; n];
        let mut final_flows: Vec<(usize, EntityId, usize, u64)> = Vec::new();
        for &(seller, buyer, line, base) in &final_edges {
            let demand = if year == 0 { base } else { base * year_noise.sample(&mut rng) };
            let v = (demand.round() as u64).max(1);
            final_out[seller][line] += v;
            final_flows.push((seller, buyer, line, v));
        }
        let prefs: Vec<[Vec<f64>; 2]> = nodes
            .iter()
            .map(|node| {
                let mut p: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                for line in 0..2 {
                    p[line] = node.suppliers[line]
                        .iter()
                        .map(|&(_, w)| if year == 0 { w } else { w * pref_noise.sample(&mut rng) })
                        .collect();
                }
                p
            })
            .collect();

        for tier in (1..=n_tiers).rev() {
            let members = &tier_members[tier];
            let mut out: Vec<[u64; 2]> = members
                .iter()
                .map(|&d| [final_out[d][0] + out_down[d][0], final_out[d][1] + out_down[d][1]])
                .collect();
            let base = out.clone();
            let pos = |d: usize| members.iter().position(|&m| m == d).expect("member");
            let mut lateral_in = vec![[0u64; 2]; members.len()];
            for &(a, b, line) in laterals.iter().filter(|l| nodes[l.0].tier == tier) {
                let (pa, pb) = (pos(a), pos(b));
                let ab = (LATERAL_SHARE * base[pb][line] as f64).round() as u64;
                let ba = (LATERAL_SHARE * base[pa][line] as f64).round() as u64;
                if ab > 0 {
                    out[pa][line] += ab;
                    lateral_in[pb][line] += ab;
                    flows.push((a, nodes[b].id, line, ab, tier));
                }
                if ba > 0 {
                    out[pb][line] += ba;
                    lateral_in[pa][line] += ba;
                    flows.push((b, nodes[a].id, line, ba, tier));
                }
            }
            for (p, &d) in members.iter().enumerate() {
                for line in 0..2 {
                    if out[p][line] == 0 {
                        continue;
                    }
                    let need = (out[p][line] as f64 * (1.0 + nodes[d].buffer[line])).ceil() as u64;
                    let need = need.saturating_sub(lateral_in[p][line]);
                    let sups = &nodes[d].suppliers[line];
                    if need == 0 || sups.is_empty() {
                        continue;
                    }
                    let parts = split_integer(need, &prefs[d][line]);
                    for (&(s, _), v) in sups.iter().zip(parts) {
                        if v == 0 {
                            continue;
                        }
                        out_down[s][line] += v;
                        flows.push((s, nodes[d].id, line, v, nodes[s].tier));
                    }
                }
            }
        }
        // upstream sellers first so same-day receipts precede onward shipments
        flows.sort_by_key(|f| f.4);
        let mut edges: Vec<(Edge, u64)> = Vec::with_capacity(flows.len() + final_flows.len());
        for (s, buyer, line, v, _) in flows {
            let interval = cadence(&mut rng, (s, buyer.index(), line));
            edges.push((
                Edge {
                    seller: nodes[s].id,
                    buyer,
                    line,
                    lag: nodes[s].lag,
                    interval,
                },
                v,
            ));
        }
        for (s, buyer, line, v) in final_flows {
            let interval = cadence(&mut rng, (s, usize::MAX - buyer.index(), line));
            edges.push((
                Edge {
                    seller: nodes[s].id,
                    buyer,
                    line,
                    lag: nodes[s].lag,
                    interval,
                },
                v,
            ));
        }
        for (edge, volume) in edges {
            let span = DAYS - edge.lag.min(DAYS - 1);
            let count = (span.div_ceil(edge.interval) as u64).min(volume).max(1);
            let weights: Vec<f64> = (0..count).map(|_| size_noise.sample(&mut rng)).collect();
            let extra = split_integer(volume - count, &weights);
            for (k, e) in extra.into_iter().enumerate() {
                let day = edge.lag + (k as u64 * span as u64 / count) as u32;
                transactions.push(Transaction {
                    date: year_start.offset(day as i32),
                    seller: edge.seller,
                    buyer: edge.buyer,
                    product: line_products[edge.line],
                    quantity: e + 1,
                });
            }
        }
    }
    let mut log = TransactionLog {
        products,
        transactions,
    };
    log.sort_by_date();

    let rules = LINES
        .iter()
        .map(|(code, strength)| {
            (
                code.to_string(),
                SubstitutionRule {
                    ingredient: "oxycodone".into(),
                    form: "tablet".into(),
                    strength: strength.to_string(),
                },
            )
        })
        .collect();

    SyntheticSystem {
        catalog,
        log,
        rules,
    }
}

/// Largest-remainder split of `total` proportionally to `weights`.
fn split_integer(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if !(sum > 0.0) {
        let mut v = vec![0; weights.len()];
        v[0] = total;
        return v;
    }
    let raw: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u64> = raw.iter().map(|r| r.floor() as u64).collect();
    let mut rest = total - parts.iter().sum::<u64>().min(total);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut i = 0;
    while rest > 0 {
        parts[order[i % order.len()]] += 1;
        rest -= 1;
        i += 1;
    }
    parts
}
