//! FIFO reconstruction of distribution paths from a date-ordered shipment log.
//!
//! Every `(distributor, product)` pair keeps a queue of stock lots. A lot
//! remembers the chain of entities its packages went through, stored as a node
//! of a prefix trie so that extending a chain by one hop is O(1). Lots are split
//! when a shipment consumes only part of one, which is equivalent to tracking
//! each package individually.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::ingest::{Day, EntityCatalog, EntityId, IngestError, ProductId, Role, TransactionLog};
use crate::tensors::CountTensor;

const ROOT: u32 = u32::MAX;

/// A sequence of holders (source first, final buyer excluded) and the number
/// of packages that followed it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DistributionPath {
    pub product: ProductId,
    pub nodes: Vec<EntityId>,
    pub count: u64,
    /// The first node is a distributor whose stock ran short, not a manufacturer.
    pub phantom: bool,
}

/// Counted distribution paths, sorted by `(product, nodes)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathMultiset {
    pub paths: Vec<DistributionPath>,
    /// First and last delivery day covered, when known.
    pub window: Option<(Day, Day)>,
}

impl PathMultiset {
    pub fn from_paths(mut paths: Vec<DistributionPath>) -> Self {
        paths.retain(|p| p.count > 0);
        paths.sort();
        // merge duplicates
        let mut merged: Vec<DistributionPath> = Vec::with_capacity(paths.len());
        for p in paths {
            match merged.last_mut() {
                Some(last) if last.product == p.product && last.nodes == p.nodes => {
                    last.count += p.count;
                    last.phantom |= p.phantom;
                }
                _ => merged.push(p),
            }
        }
        PathMultiset {
            paths: merged,
            window: None,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Total number of delivered packages.
    pub fn total_count(&self) -> u64 {
        self.paths.iter().map(|p| p.count).sum()
    }

    pub fn phantom_count(&self) -> u64 {
        self.paths.iter().filter(|p| p.phantom).map(|p| p.count).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DistributionPath> {
        self.paths.iter()
    }

    /// Union with count addition.
    pub fn merge(&self, other: &PathMultiset) -> PathMultiset {
        let mut all = self.paths.clone();
        all.extend(other.paths.iter().cloned());
        let mut out = PathMultiset::from_paths(all);
        out.window = match (self.window, other.window) {
            (Some(a), Some(b)) => Some((a.0.min(b.0), a.1.max(b.1))),
            (a, b) => a.or(b),
        };
        out
    }

    pub fn restrict_products(&self, keep: &[ProductId]) -> PathMultiset {
        PathMultiset {
            paths: self
                .paths
                .iter()
                .filter(|p| keep.contains(&p.product))
                .cloned()
                .collect(),
            window: self.window,
        }
    }
}

/// Counters describing everything the reconstruction had to work around.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconstructionReport {
    /// Packages shipped beyond recorded stock, per `(seller, product)`.
    pub underflow: BTreeMap<(EntityId, ProductId), u64>,
    /// Shipments received by manufacturers; these carry no custody information.
    pub manufacturer_receipts: u64,
    /// Shipments sent by final buyers.
    pub final_buyer_sales: u64,
    /// Packages delivered to final buyers.
    pub delivered: u64,
    /// Packages still held by distributors at the end of the log.
    pub residual_stock: u64,
}

impl ReconstructionReport {
    pub fn phantom_units(&self) -> u64 {
        self.underflow.values().sum()
    }

    fn absorb(&mut self, other: ReconstructionReport) {
        for (k, v) in other.underflow {
            *self.underflow.entry(k).or_default() += v;
        }
        self.manufacturer_receipts += other.manufacturer_receipts;
        self.final_buyer_sales += other.final_buyer_sales;
        self.delivered += other.delivered;
        self.residual_stock += other.residual_stock;
    }
}

#[derive(Default)]
struct Trie {
    nodes: Vec<(u32, EntityId)>,
    index: HashMap<(u32, EntityId), u32>,
}

impl Trie {
    fn child(&mut self, parent: u32, e: EntityId) -> u32 {
        let next = self.nodes.len() as u32;
        *self.index.entry((parent, e)).or_insert_with(|| {
            self.nodes.push((parent, e));
            next
        })
    }

    fn path(&self, mut id: u32) -> Vec<EntityId> {
        let mut out = Vec::new();
        while id != ROOT {
            let (parent, e) = self.nodes[id as usize];
            out.push(e);
            id = parent;
        }
        out.reverse();
        out
    }
}

/// Reconstruction state for a single product.
struct Tracker<'a> {
    catalog: &'a EntityCatalog,
    product: ProductId,
    trie: Trie,
    queues: HashMap<EntityId, VecDeque<(u32, u64)>>,
    /// Completed paths per (delivery year, prefix).
    done: HashMap<(i32, u32), u64>,
    report: ReconstructionReport,
    first: Option<Day>,
    last: Option<Day>,
}

impl<'a> Tracker<'a> {
    fn new(catalog: &'a EntityCatalog, product: ProductId) -> Self {
        Tracker {
            catalog,
            product,
            trie: Trie::default(),
            queues: HashMap::new(),
            done: HashMap::new(),
            report: ReconstructionReport::default(),
            first: None,
            last: None,
        }
    }

    fn ship(&mut self, date: Day, seller: EntityId, buyer: EntityId, quantity: u64) {
        let seller_role = self.catalog.role(seller);
        let buyer_role = self.catalog.role(buyer);
        if buyer_role == Role::Manufacturer {
            self.report.manufacturer_receipts += 1;
            return;
        }
        if seller_role == Role::FinalBuyer {
            self.report.final_buyer_sales += 1;
            return;
        }
        if seller_role == Role::Manufacturer {
            let prefix = self.trie.child(ROOT, seller);
            self.emit(date, prefix, buyer, buyer_role, quantity);
            return;
        }
        let mut need = quantity;
        while need > 0 {
            let lot = self.queues.get_mut(&seller).and_then(|q| q.front_mut());
            let (prefix, take) = match lot {
                Some(lot) => {
                    let take = lot.1.min(need);
                    lot.1 -= take;
                    let prefix = lot.0;
                    if lot.1 == 0 {
                        self.queues.get_mut(&seller).expect("queue exists").pop_front();
                    }
                    (prefix, take)
                }
                None => {
                    *self.report.underflow.entry((seller, self.product)).or_default() += need;
                    (self.trie.child(ROOT, seller), need)
                }
            };
            need -= take;
            self.emit(date, prefix, buyer, buyer_role, take);
        }
    }

    fn emit(&mut self, date: Day, prefix: u32, buyer: EntityId, buyer_role: Role, quantity: u64) {
        if buyer_role == Role::FinalBuyer {
            *self.done.entry((date.year(), prefix)).or_default() += quantity;
            self.report.delivered += quantity;
            self.first = Some(self.first.map_or(date, |d| d.min(date)));
            self.last = Some(self.last.map_or(date, |d| d.max(date)));
            return;
        }
        let extended = self.trie.child(prefix, buyer);
        let queue = self.queues.entry(buyer).or_default();
        match queue.back_mut() {
            Some(back) if back.0 == extended => back.1 += quantity,
            _ => queue.push_back((extended, quantity)),
        }
    }

    fn finish(mut self) -> (BTreeMap<i32, Vec<DistributionPath>>, ReconstructionReport, Option<(Day, Day)>) {
        self.report.residual_stock = self
            .queues
            .values()
            .flat_map(|q| q.iter().map(|l| l.1))
            .sum();
        let mut by_year: BTreeMap<i32, Vec<DistributionPath>> = BTreeMap::new();
        for ((year, prefix), count) in self.done {
            let nodes = self.trie.path(prefix);
            let phantom = self.catalog.role(nodes[0]) != Role::Manufacturer;
            by_year.entry(year).or_default().push(DistributionPath {
                product: self.product,
                nodes,
                count,
                phantom,
            });
        }
        let window = self.first.zip(self.last);
        (by_year, self.report, window)
    }
}

/// Processes one day's transactions for one product. A shipment out of a
/// distributor waits while the same distributor still has receipts pending
/// that day; if every remaining shipment waits (a same-day cycle), the
/// earliest one is released.
fn run_day(tracker: &mut Tracker<'_>, day: &[(Day, EntityId, EntityId, u64)], inbound: &mut HashMap<EntityId, u32>) {
    if day.len() == 1 {
        let (d, s, b, q) = day[0];
        tracker.ship(d, s, b, q);
        return;
    }
    inbound.clear();
    for &(_, _, b, _) in day {
        *inbound.entry(b).or_default() += 1;
    }
    let mut pending: Vec<usize> = (0..day.len()).collect();
    let mut next: Vec<usize> = Vec::with_capacity(day.len());
    while !pending.is_empty() {
        next.clear();
        let mut progressed = false;
        for &t in &pending {
            let (d, s, b, q) = day[t];
            let waiting = tracker.catalog.role(s) == Role::Distributor
                && inbound.get(&s).copied().unwrap_or(0) > 0;
            if waiting {
                next.push(t);
            } else {
                tracker.ship(d, s, b, q);
                *inbound.get_mut(&b).expect("counted") -= 1;
                progressed = true;
            }
        }
        if !progressed {
            let t = next.remove(0);
            let (d, s, b, q) = day[t];
            tracker.ship(d, s, b, q);
            *inbound.get_mut(&b).expect("counted") -= 1;
        }
        std::mem::swap(&mut pending, &mut next);
    }
}

fn reconstruct_product(
    catalog: &EntityCatalog,
    product: ProductId,
    rows: &[(Day, EntityId, EntityId, u64)],
) -> (BTreeMap<i32, Vec<DistributionPath>>, ReconstructionReport, Option<(Day, Day)>) {
    let mut tracker = Tracker::new(catalog, product);
    let mut inbound = HashMap::new();
    let mut start = 0;
    while start < rows.len() {
        let day = rows[start].0;
        let mut end = start + 1;
        while end < rows.len() && rows[end].0 == day {
            end += 1;
        }
        run_day(&mut tracker, &rows[start..end], &mut inbound);
        start = end;
    }
    tracker.finish()
}

/// Paths by delivery year together with the reconstruction report.
pub fn reconstruct_paths_by_year(
    log: &TransactionLog,
    catalog: &EntityCatalog,
    parallel: bool,
) -> (BTreeMap<i32, PathMultiset>, ReconstructionReport) {
    let mut per_product: BTreeMap<ProductId, Vec<(Day, EntityId, EntityId, u64)>> = BTreeMap::new();
    for t in &log.transactions {
        per_product
            .entry(t.product)
            .or_default()
            .push((t.date, t.seller, t.buyer, t.quantity));
    }
    for rows in per_product.values() {
        debug_assert!(rows.windows(2).all(|w| w[0].0 <= w[1].0), "log must be date ordered");
    }
    let work: Vec<(ProductId, Vec<(Day, EntityId, EntityId, u64)>)> = per_product.into_iter().collect();
    let results: Vec<_> = if parallel {
        work.par_iter()
            .map(|(p, rows)| reconstruct_product(catalog, *p, rows))
            .collect()
    } else {
        work.iter()
            .map(|(p, rows)| reconstruct_product(catalog, *p, rows))
            .collect()
    };
    let mut report = ReconstructionReport::default();
    let mut years: BTreeMap<i32, (Vec<DistributionPath>, Option<(Day, Day)>)> = BTreeMap::new();
    for (by_year, r, _) in results {
        report.absorb(r);
        for (year, paths) in by_year {
            years.entry(year).or_default().0.extend(paths);
        }
    }
    // delivery windows per year, from the log itself
    for t in &log.transactions {
        if catalog.role(t.buyer) == Role::FinalBuyer && catalog.role(t.seller) != Role::FinalBuyer {
            if let Some(entry) = years.get_mut(&t.date.year()) {
                entry.1 = Some(match entry.1 {
                    Some((a, b)) => (a.min(t.date), b.max(t.date)),
                    None => (t.date, t.date),
                });
            }
        }
    }
    let out = years
        .into_iter()
        .map(|(y, (paths, window))| {
            let mut m = PathMultiset::from_paths(paths);
            m.window = window;
            (y, m)
        })
        .collect();
    (out, report)
}

/// Reconstructs all paths completed within the log.
pub fn reconstruct_paths(
    log: &TransactionLog,
    catalog: &EntityCatalog,
) -> (PathMultiset, ReconstructionReport) {
    let (by_year, report) = reconstruct_paths_by_year(log, catalog, true);
    let mut all = PathMultiset::default();
    for m in by_year.values() {
        all = all.merge(m);
    }
    (all, report)
}

/// Order-2 sub-path counts. Each path is prefixed by [`EntityId::ORIGIN`], so
/// the first hop `(n0, n1)` contributes `A[n1, n0, ORIGIN]`. Consecutive hops
/// also feed the first-order margin.
pub fn path_counts(paths: &PathMultiset) -> CountTensor {
    let mut counts = CountTensor::default();
    for p in &paths.paths {
        add_path(&mut counts, &p.nodes, p.count as f64);
    }
    counts
}

pub(crate) fn add_path(counts: &mut CountTensor, nodes: &[EntityId], weight: f64) {
    let mut upstream = EntityId::ORIGIN;
    for w in nodes.windows(2) {
        counts.add(w[1], w[0], upstream, weight);
        counts.add_margin(w[1], w[0], weight);
        upstream = w[0];
    }
}

/// Count-weighted mean 1-based position of each distributor along the paths
/// it appears on, counting from the first distributor after the source.
pub fn distributor_positions(paths: &PathMultiset) -> BTreeMap<EntityId, f64> {
    let mut acc: BTreeMap<EntityId, (f64, f64)> = BTreeMap::new();
    for p in &paths.paths {
        let skip = if p.phantom { 0 } else { 1 };
        for (pos, e) in p.nodes.iter().skip(skip).enumerate() {
            let entry = acc.entry(*e).or_default();
            entry.0 += (pos + 1) as f64 * p.count as f64;
            entry.1 += p.count as f64;
        }
    }
    acc.into_iter().map(|(e, (s, w))| (e, s / w)).collect()
}

/// Writes `path,product_code,count` with node names joined by `>`.
pub fn write_paths<W: Write>(
    paths: &PathMultiset,
    catalog: &EntityCatalog,
    log: &TransactionLog,
    out: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "product_code", "count"])?;
    for p in &paths.paths {
        let names: Vec<&str> = p.nodes.iter().map(|e| catalog.name(*e)).collect();
        w.write_record([
            names.join(">"),
            log.products.code(p.product).to_string(),
            p.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the format written by [`write_paths`]. Unknown product codes are
/// interned into `log.products`.
pub fn read_paths<R: Read>(
    src: R,
    catalog: &EntityCatalog,
    log: &mut TransactionLog,
) -> Result<PathMultiset, IngestError> {
    let mut r = csv::Reader::from_reader(src);
    let mut paths = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = n as u64 + 2;
        if rec.len() != 3 {
            return Err(IngestError::Malformed {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let mut nodes = Vec::new();
        for name in rec[0].split('>') {
            let id = catalog.id(name).ok_or_else(|| IngestError::UnknownEntity {
                line,
                entity: name.to_string(),
            })?;
            nodes.push(id);
        }
        let count: u64 = rec[2].trim().parse().map_err(|_| IngestError::Malformed {
            line,
            message: format!("bad count {:?}", &rec[2]),
        })?;
        let phantom = catalog.role(nodes[0]) != Role::Manufacturer;
        paths.push(DistributionPath {
            product: log.products.intern(&rec[1]),
            nodes,
            count,
            phantom,
        });
    }
    Ok(PathMultiset::from_paths(paths))
}

/// Writes `entity_id,product_code,phantom_units`.
pub fn write_underflow<W: Write>(
    report: &ReconstructionReport,
    catalog: &EntityCatalog,
    log: &TransactionLog,
    out: W,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entity_id", "product_code", "phantom_units"])?;
    for ((e, p), units) in &report.underflow {
        w.write_record([catalog.name(*e), log.products.code(*p), &units.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
