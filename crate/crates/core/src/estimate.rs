//! Maximum-likelihood flexibility from observed shipments.
//!
//! For orderer `a`, intermediary `j` and source `u`, the model probability of
//! a shipment `u → j → a` is
//! `B = T_aju(φ_a) v_a / Z_u(φ)` with `Z_u = Σ_a' v_a' [(1−φ_a') α_a'u + φ_a' β_a'u]`,
//! where `α` and `β` are the two-step and one-step masses `a` sends towards
//! `u`. [`ShipmentModel`] evaluates the log-likelihood from these pieces
//! without materializing `B`; [`log_likelihood`] does the same sum over a
//! materialized shipment tensor.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::ingest::EntityId;
use crate::pathrec::{distributor_positions, PathMultiset};
use crate::tensors::{
    build_one_step, build_two_step, CountTensor, Flexibility, OrderTransitionTensor, ShipmentTensor,
};

pub const MIN_GRID: usize = 11;
const GOLDEN_TOL: f64 = 1e-4;
const SWEEP_GAIN: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EstimateError {
    #[error("grid needs at least {MIN_GRID} points, got {0}")]
    Grid(usize),
    #[error("max_sweeps must be at least 1")]
    Sweeps,
    #[error("log-likelihood is -inf over the whole interval")]
    AllNegInfinite,
    #[error("observed count {count} on zero-probability shipment ({i}, {j}, {k})")]
    ZeroProbability {
        i: u32,
        j: u32,
        k: u32,
        count: f64,
    },
    #[error("need at least two consecutive years of paths")]
    NotEnoughYears,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shipment counts `Ã_ijk`: `i` shipped via `j` to `k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservedShipmentCounts {
    pub entries: BTreeMap<(EntityId, EntityId, EntityId), f64>,
}

impl ObservedShipmentCounts {
    /// Transposes order counts `A_aju` into shipment counts `(u, j, a)`.
    pub fn from_counts(counts: &CountTensor) -> Self {
        ObservedShipmentCounts {
            entries: counts.iter().map(|(a, j, u, c)| ((u, j, a), c)).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn add(&mut self, i: EntityId, j: EntityId, k: EntityId, count: f64) {
        *self.entries.entry((i, j, k)).or_default() += count;
    }
}

/// `Σ Ã_ijk ln B_ijk` over a materialized shipment tensor. Zero counts are
/// skipped; a positive count on a zero entry is an error naming the triple.
pub fn log_likelihood(b: &ShipmentTensor, observed: &ObservedShipmentCounts) -> Result<f64, EstimateError> {
    let mut total = 0.0;
    for (&(i, j, k), &c) in &observed.entries {
        if c == 0.0 {
            continue;
        }
        let p = b.get(i, j, k);
        if p <= 0.0 {
            return Err(EstimateError::ZeroProbability {
                i: i.0,
                j: j.0,
                k: k.0,
                count: c,
            });
        }
        total += c * p.ln();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
struct Term {
    orderer: usize,
    source: usize,
    count: f64,
    t2: f64,
    t1: f64,
}

/// Sufficient statistics for fast likelihood evaluation.
#[derive(Debug, Clone)]
pub struct ShipmentModel {
    /// Coordinates: orderers with at least one usable observation.
    pub entities: Vec<EntityId>,
    orderers: Vec<EntityId>,
    v: Vec<f64>,
    terms: Vec<Term>,
    /// Per source: `(orderer, α, β)`.
    flows: Vec<Vec<(usize, f64, f64)>>,
    source_counts: Vec<f64>,
    constant: f64,
    identifiable: Vec<bool>,
    coordinate_of: Vec<Option<usize>>,
    terms_of: Vec<Vec<usize>>,
    sources_of: Vec<Vec<usize>>,
    /// Observations outside the support of both tensors; they have zero
    /// probability for every φ and are left out of the fit.
    pub dropped: Vec<((EntityId, EntityId, EntityId), f64)>,
}

impl ShipmentModel {
    pub fn new(
        two_step: &OrderTransitionTensor,
        one_step: &OrderTransitionTensor,
        volumes: &BTreeMap<EntityId, f64>,
        observed: &ObservedShipmentCounts,
    ) -> Self {
        let orderers: Vec<EntityId> = two_step
            .orderers()
            .chain(one_step.orderers())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|a| volumes.get(a).copied().unwrap_or(0.0) > 0.0)
            .collect();
        let index: BTreeMap<EntityId, usize> = orderers.iter().enumerate().map(|(n, a)| (*a, n)).collect();
        let v: Vec<f64> = orderers.iter().map(|a| volumes[a]).collect();

        let mut source_index: BTreeMap<EntityId, usize> = BTreeMap::new();
        let mut mass: BTreeMap<(usize, EntityId), (f64, f64)> = BTreeMap::new();
        for (n, &a) in orderers.iter().enumerate() {
            for &(_, u, p) in two_step.row(a) {
                mass.entry((n, u)).or_default().0 += p;
            }
            for &(_, u, p) in one_step.row(a) {
                mass.entry((n, u)).or_default().1 += p;
            }
        }
        for &(_, u) in mass.keys() {
            let next = source_index.len();
            source_index.entry(u).or_insert(next);
        }
        let mut flows = vec![Vec::new(); source_index.len()];
        for (&(n, u), &(a2, a1)) in &mass {
            flows[source_index[&u]].push((n, a2, a1));
        }

        let mut terms = Vec::new();
        let mut dropped = Vec::new();
        for (&(u, j, a), &c) in &observed.entries {
            if c == 0.0 {
                continue;
            }
            let t2 = two_step.get(a, j, u);
            let t1 = one_step.get(a, j, u);
            match (index.get(&a), source_index.get(&u)) {
                (Some(&orderer), Some(&source)) if t2 > 0.0 || t1 > 0.0 => terms.push(Term {
                    orderer,
                    source,
                    count: c,
                    t2,
                    t1,
                }),
                _ => dropped.push(((u, j, a), c)),
            }
        }
        let mut source_counts = vec![0.0; flows.len()];
        let mut constant = 0.0;
        for t in &terms {
            source_counts[t.source] += t.count;
            constant += t.count * v[t.orderer].ln();
        }

        let mut terms_of = vec![Vec::new(); orderers.len()];
        for (n, t) in terms.iter().enumerate() {
            terms_of[t.orderer].push(n);
        }
        let mut sources_of = vec![Vec::new(); orderers.len()];
        for (s, f) in flows.iter().enumerate() {
            for &(a, _, _) in f {
                sources_of[a].push(s);
            }
        }
        let identifiable: Vec<bool> = orderers
            .iter()
            .map(|&a| {
                let (r2, r1) = (two_step.row(a), one_step.row(a));
                r2.len() != r1.len()
                    || r2
                        .iter()
                        .zip(r1)
                        .any(|(x, y)| x.0 != y.0 || x.1 != y.1 || (x.2 - y.2).abs() > 1e-12)
            })
            .collect();
        let mut entities = Vec::new();
        let mut coordinate_of = vec![None; orderers.len()];
        for (n, &a) in orderers.iter().enumerate() {
            if !terms_of[n].is_empty() {
                coordinate_of[n] = Some(entities.len());
                entities.push(a);
            }
        }
        ShipmentModel {
            entities,
            orderers,
            v,
            terms,
            flows,
            source_counts,
            constant,
            identifiable,
            coordinate_of,
            terms_of,
            sources_of,
            dropped,
        }
    }

    /// Model from training counts, with observed order counts transposed.
    pub fn from_counts(training: &CountTensor, observed: &CountTensor) -> Self {
        ShipmentModel::new(
            &build_two_step(training),
            &build_one_step(training),
            &training.volumes(),
            &ObservedShipmentCounts::from_counts(observed),
        )
    }

    pub fn observed_total(&self) -> f64 {
        self.terms.iter().map(|t| t.count).sum()
    }

    fn phi_of(&self, coords: &[f64], orderer: usize) -> f64 {
        self.coordinate_of[orderer].map_or(0.0, |c| coords[c])
    }

    /// Log-likelihood at per-coordinate flexibilities (ordered as `entities`).
    pub fn loglik(&self, coords: &[f64]) -> f64 {
        let mut total = self.constant;
        for t in &self.terms {
            let p = self.phi_of(coords, t.orderer);
            let q = (1.0 - p) * t.t2 + p * t.t1;
            if q <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += t.count * q.ln();
        }
        for (s, flow) in self.flows.iter().enumerate() {
            if self.source_counts[s] == 0.0 {
                continue;
            }
            let z: f64 = flow
                .iter()
                .map(|&(a, a2, a1)| {
                    let p = self.phi_of(coords, a);
                    self.v[a] * ((1.0 - p) * a2 + p * a1)
                })
                .sum();
            total -= self.source_counts[s] * z.ln();
        }
        total
    }

    pub fn loglik_uniform(&self, phi: f64) -> f64 {
        self.loglik(&vec![phi; self.entities.len()])
    }

    /// Likelihood restricted to the pieces that depend on coordinate `c`,
    /// other coordinates held at `coords`.
    fn coordinate_fn(&self, coords: &[f64], c: usize) -> impl Fn(f64) -> f64 + '_ {
        let a = self
            .coordinate_of
            .iter()
            .position(|x| *x == Some(c))
            .expect("coordinate exists");
        let terms: Vec<Term> = self.terms_of[a].iter().map(|&n| self.terms[n]).collect();
        let rest: Vec<(f64, f64, f64, f64)> = self.sources_of[a]
            .iter()
            .filter(|&&s| self.source_counts[s] > 0.0)
            .map(|&s| {
                let mut z_rest = 0.0;
                let (mut a2, mut a1) = (0.0, 0.0);
                for &(b, b2, b1) in &self.flows[s] {
                    if b == a {
                        a2 = b2;
                        a1 = b1;
                    } else {
                        let p = self.phi_of(coords, b);
                        z_rest += self.v[b] * ((1.0 - p) * b2 + p * b1);
                    }
                }
                (self.source_counts[s], z_rest, a2, a1)
            })
            .collect();
        let va = self.v[a];
        move |p: f64| {
            let mut total = 0.0;
            for t in &terms {
                let q = (1.0 - p) * t.t2 + p * t.t1;
                if q <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += t.count * q.ln();
            }
            for &(n, z_rest, a2, a1) in &rest {
                total -= n * (z_rest + va * ((1.0 - p) * a2 + p * a1)).ln();
            }
            total
        }
    }

    pub fn identifiable(&self, entity: EntityId) -> bool {
        self.orderers
            .iter()
            .position(|a| *a == entity)
            .map(|n| self.identifiable[n])
            .unwrap_or(false)
    }

    /// Contribution of each coordinate's observations to the total.
    pub fn loglik_by_entity(&self, coords: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .flows
            .iter()
            .map(|flow| {
                flow.iter()
                    .map(|&(a, a2, a1)| {
                        let p = self.phi_of(coords, a);
                        self.v[a] * ((1.0 - p) * a2 + p * a1)
                    })
                    .sum()
            })
            .collect();
        let mut out = vec![0.0; self.entities.len()];
        for t in &self.terms {
            if let Some(c) = self.coordinate_of[t.orderer] {
                let p = coords[c];
                let q = (1.0 - p) * t.t2 + p * t.t1;
                out[c] += t.count * (q.ln() + self.v[t.orderer].ln() - z[t.source].ln());
            }
        }
        out
    }
}

/// Result of a 1-D search on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub flat: bool,
}

/// Grid scan followed by golden-section refinement around the best grid
/// point. A surface that is flat to rounding returns `x = 0` with `flat`.
pub fn maximize_unit_interval(f: impl Fn(f64) -> f64, grid: usize) -> Result<Maximum, EstimateError> {
    if grid < MIN_GRID {
        return Err(EstimateError::Grid(grid));
    }
    let xs: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut best = 0;
    for (i, y) in ys.iter().enumerate() {
        if *y > ys[best] {
            best = i;
        }
    }
    if ys[best] == f64::NEG_INFINITY {
        return Err(EstimateError::AllNegInfinite);
    }
    let lo_val = ys.iter().copied().fold(f64::INFINITY, f64::min);
    if ys[best] - lo_val <= 1e-10 * ys[best].abs().max(1.0) {
        return Ok(Maximum {
            x: 0.0,
            value: ys[0],
            flat: true,
        });
    }
    let (mut a, mut b) = (xs[best.saturating_sub(1)], xs[(best + 1).min(grid - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mut out = Maximum {
        x: xs[best],
        value: ys[best],
        flat: false,
    };
    for x in [a, 0.5 * (a + b), b] {
        let y = f(x);
        if y > out.value || (y == out.value && x < out.x) {
            out = Maximum {
                x,
                value: y,
                flat: false,
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlexibilityEstimate {
    pub entities: Vec<EntityId>,
    pub phi: Vec<f64>,
    /// No evidence either way: the coordinate is non-identifiable or its
    /// likelihood is flat.
    pub flat: Vec<bool>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each sweep; non-decreasing.
    pub trace: Vec<f64>,
}

impl FlexibilityEstimate {
    pub fn get(&self, e: EntityId) -> Option<f64> {
        self.entities.iter().position(|x| *x == e).map(|n| self.phi[n])
    }

    pub fn to_flexibility(&self) -> Flexibility {
        let mut f = Flexibility::zero();
        for (e, p) in self.entities.iter().zip(&self.phi) {
            f.set(*e, *p).expect("estimates lie in [0, 1]");
        }
        f
    }
}

/// One flexibility shared by every orderer.
pub fn fit_phi_homogeneous(model: &ShipmentModel, grid: usize) -> Result<FlexibilityEstimate, EstimateError> {
    let m = maximize_unit_interval(|p| model.loglik_uniform(p), grid)?;
    let n = model.entities.len();
    Ok(FlexibilityEstimate {
        entities: model.entities.clone(),
        phi: vec![m.x; n],
        flat: vec![m.flat; n],
        loglik: m.value,
        iterations: 1,
        converged: true,
        trace: vec![m.value],
    })
}

/// Coordinate ascent over per-orderer flexibilities, starting at zero. A
/// coordinate moves only if its own likelihood does not drop.
pub fn fit_phi_per_distributor(
    model: &ShipmentModel,
    max_sweeps: usize,
    grid: usize,
) -> Result<FlexibilityEstimate, EstimateError> {
    if max_sweeps == 0 {
        return Err(EstimateError::Sweeps);
    }
    if grid < MIN_GRID {
        return Err(EstimateError::Grid(grid));
    }
    let n = model.entities.len();
    let mut phi = vec![0.0; n];
    let mut flat = vec![false; n];
    let mut current = model.loglik(&phi);
    let mut trace = vec![];
    let mut converged = false;
    let mut sweeps = 0;
    for _ in 0..max_sweeps {
        sweeps += 1;
        for c in 0..n {
            if !model.identifiable(model.entities[c]) {
                phi[c] = 0.0;
                flat[c] = true;
                continue;
            }
            let f = model.coordinate_fn(&phi, c);
            let old = f(phi[c]);
            match maximize_unit_interval(&f, grid) {
                Ok(m) => {
                    flat[c] = m.flat;
                    if m.value >= old {
                        phi[c] = m.x;
                    }
                }
                Err(EstimateError::AllNegInfinite) => flat[c] = true,
                Err(e) => return Err(e),
            }
        }
        let next = model.loglik(&phi);
        debug_assert!(next >= current - 1e-9 * current.abs().max(1.0), "sweep decreased the likelihood");
        trace.push(next);
        let gain = next - current;
        current = next;
        if gain < SWEEP_GAIN {
            converged = true;
            break;
        }
    }
    Ok(FlexibilityEstimate {
        entities: model.entities.clone(),
        phi,
        flat,
        loglik: current,
        iterations: sweeps,
        converged,
        trace,
    })
}

/// Multinomial draw of `n` shipments per source from the slices of `b`.
pub fn sample_observed<R: Rng>(
    b: &ShipmentTensor,
    per_source: &BTreeMap<EntityId, u64>,
    rng: &mut R,
) -> ObservedShipmentCounts {
    let mut out = ObservedShipmentCounts::default();
    for (&u, &n) in per_source {
        let row = b.row(u);
        let mut remaining = n;
        let mut mass = 1.0;
        for (pos, &(j, k, p)) in row.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let draw = if pos + 1 == row.len() {
                remaining
            } else {
                let q = (p / mass).clamp(0.0, 1.0);
                Binomial::new(remaining, q).expect("valid binomial").sample(rng)
            };
            mass -= p;
            remaining -= draw;
            if draw > 0 {
                out.add(u, j, k, draw as f64);
            }
        }
    }
    out
}

/// One row of the year-to-year output.
#[derive(Debug, Clone, PartialEq)]
pub struct YearFlexibility {
    pub entity: EntityId,
    pub year: i32,
    pub phi_hat: f64,
    pub loglik: f64,
    pub flat: bool,
    pub mean_position: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct YearToYear {
    pub rows: Vec<YearFlexibility>,
    /// Orderers seen in year `y` without any orders in `y − 1`.
    pub skipped: Vec<(EntityId, i32)>,
    /// Observations outside both tensors' support, per year.
    pub dropped: BTreeMap<i32, f64>,
}

/// Fits per-orderer flexibility for each year against the previous year's
/// preferences. Years are fitted concurrently.
pub fn year_to_year_flexibility(
    paths_by_year: &BTreeMap<i32, PathMultiset>,
    max_sweeps: usize,
    grid: usize,
) -> Result<YearToYear, EstimateError> {
    let years: Vec<i32> = paths_by_year.keys().copied().collect();
    let pairs: Vec<(i32, i32)> = years
        .windows(2)
        .filter(|w| w[1] == w[0] + 1)
        .map(|w| (w[0], w[1]))
        .collect();
    if pairs.is_empty() {
        return Err(EstimateError::NotEnoughYears);
    }
    let results: Vec<Result<YearToYear, EstimateError>> = pairs
        .par_iter()
        .map(|&(prev, year)| {
            let training = CountTensor::from_paths(&paths_by_year[&prev]);
            let observed = CountTensor::from_paths(&paths_by_year[&year]);
            let model = ShipmentModel::from_counts(&training, &observed);
            let positions = distributor_positions(&paths_by_year[&year]);
            let trained = training.orderers();
            let skipped: Vec<(EntityId, i32)> = observed
                .orderers()
                .into_iter()
                .filter(|a| !trained.contains(a))
                .map(|a| (a, year))
                .collect();
            let mut out = YearToYear {
                skipped,
                ..YearToYear::default()
            };
            out.dropped
                .insert(year, model.dropped.iter().map(|d| d.1).sum());
            if model.entities.is_empty() {
                return Ok(out);
            }
            let est = fit_phi_per_distributor(&model, max_sweeps, grid)?;
            let contrib = model.loglik_by_entity(&est.phi);
            for (n, &e) in est.entities.iter().enumerate() {
                out.rows.push(YearFlexibility {
                    entity: e,
                    year,
                    phi_hat: est.phi[n],
                    loglik: contrib[n],
                    flat: est.flat[n],
                    mean_position: positions.get(&e).copied().unwrap_or(f64::NAN),
                });
            }
            Ok(out)
        })
        .collect();
    let mut all = YearToYear::default();
    for r in results {
        let r = r?;
        all.rows.extend(r.rows);
        all.skipped.extend(r.skipped);
        all.dropped.extend(r.dropped);
    }
    Ok(all)
}

/// Percentile bands of φ̂ over mean-position bins of width `bin_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionBand {
    pub position_lo: f64,
    pub position_hi: f64,
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub q025: f64,
    pub q975: f64,
}

pub fn position_bands(rows: &[YearFlexibility], bin_width: f64) -> Vec<PositionBand> {
    assert!(bin_width > 0.0, "bin width must be positive");
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mean_position.is_finite()) {
        let b = ((r.mean_position - 1.0) / bin_width).floor() as i64;
        bins.entry(b).or_default().push(r.phi_hat);
    }
    bins.into_iter()
        .map(|(b, mut v)| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let q = |p: f64| {
                let pos = p * (v.len() - 1) as f64;
                let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
                v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
            };
            PositionBand {
                position_lo: 1.0 + b as f64 * bin_width,
                position_hi: 1.0 + (b + 1) as f64 * bin_width,
                n: v.len(),
                median: q(0.5),
                q25: q(0.25),
                q75: q(0.75),
                q025: q(0.025),
                q975: q(0.975),
            }
        })
        .collect()
}

/// Writes `entity_id,year,phi_hat,loglik,flat_flag,mean_position`.
pub fn write_year_rows<W: Write>(
    rows: &[YearFlexibility],
    catalog: &crate::ingest::EntityCatalog,
    out: W,
) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entity_id", "year", "phi_hat", "loglik", "flat_flag", "mean_position"])?;
    for r in rows {
        w.write_record([
            catalog.name(r.entity).to_string(),
            r.year.to_string(),
            r.phi_hat.to_string(),
            r.loglik.to_string(),
            (r.flat as u8).to_string(),
            r.mean_position.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::{build_shipment_tensor, unit_volumes};

    fn e(n: u32) -> EntityId {
        EntityId(n)
    }

    #[test]
    fn empty_observation_has_zero_loglik() {
        let mut c = CountTensor::default();
        c.add(e(1), e(0), EntityId::ORIGIN, 2.0);
        let t = build_two_step(&c);
        let b = build_shipment_tensor(&t, &unit_volumes(&t), 365);
        assert_eq!(log_likelihood(&b, &ObservedShipmentCounts::default()).unwrap(), 0.0);
    }

    #[test]
    fn single_observation_term() {
        let mut c = CountTensor::default();
        c.add(e(1), e(0), EntityId::ORIGIN, 1.0);
        c.add(e(2), e(0), EntityId::ORIGIN, 1.0);
        let t = build_two_step(&c);
        let b = build_shipment_tensor(&t, &c.volumes(), 365);
        let mut obs = ObservedShipmentCounts::default();
        obs.add(EntityId::ORIGIN, e(0), e(1), 1.0);
        assert_eq!(log_likelihood(&b, &obs).unwrap(), 0.5f64.ln());
        obs.add(EntityId::ORIGIN, e(0), e(9), 1.0);
        assert!(matches!(
            log_likelihood(&b, &obs),
            Err(EstimateError::ZeroProbability { k: 9, .. })
        ));
    }

    #[test]
    fn grid_too_coarse() {
        assert!(matches!(maximize_unit_interval(|x| x, 5), Err(EstimateError::Grid(5))));
    }

    #[test]
    fn maximizer_finds_interior_peak() {
        let m = maximize_unit_interval(|x| -(x - 0.337).powi(2), 11).unwrap();
        assert!((m.x - 0.337).abs() < 1e-4);
        assert!(!m.flat);
        let flat = maximize_unit_interval(|_| -3.0, 11).unwrap();
        assert_eq!(flat.x, 0.0);
        assert!(flat.flat);
        let edge = maximize_unit_interval(|x| x, 11).unwrap();
        assert_eq!(edge.x, 1.0);
    }

    #[test]
    fn bands_by_position() {
        let row = |pos: f64, phi: f64| YearFlexibility {
            entity: e(0),
            year: 2013,
            phi_hat: phi,
            loglik: 0.0,
            flat: false,
            mean_position: pos,
        };
        let bands = position_bands(&[row(1.0, 0.1), row(1.4, 0.3), row(2.2, 0.9)], 1.0);
        assert_eq!(bands.len(), 2);
        assert_eq!(bands[0].n, 2);
        assert!((bands[0].median - 0.2).abs() < 1e-15);
        assert_eq!(bands[1].median, 0.9);
    }
}
