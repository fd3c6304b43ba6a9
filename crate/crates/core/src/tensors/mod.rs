//! Order-2 upstream-preference tensors.
//!
//! Index convention: an order entry `(i, j, k)` means orderer `i` buys from
//! intermediary `j` goods that `j` obtained from `k`. A shipment entry
//! `(i, j, k)` runs the other way: `i` ships via `j` to `k`.
//! [`EntityId::ORIGIN`] stands for "no further upstream" and closes every
//! path at its source.

mod graph;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::ingest::{EntityCatalog, EntityId};
use crate::pathrec::PathMultiset;

pub use graph::{
    alternative_edges, end_fractions, to_second_order, write_order_edges, EdgeClass, MetaEdge,
    MetaNode, OrderEdge, SecondOrderGraph,
};

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("flexibility {value} for entity {entity} is outside [0, 1]")]
    PhiOutOfRange { entity: u32, value: f64 },
    #[error("no final distributors: the chain cannot absorb")]
    EmptyOmega,
    #[error("meta-node ({0}|{1}) has no continuation and does not end a path")]
    Dangling(String, String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw order-2 counts `A_ijk` plus first-order hop counts `(i, j)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountTensor {
    entries: BTreeMap<(EntityId, EntityId, EntityId), f64>,
    margin: BTreeMap<(EntityId, EntityId), f64>,
}

impl CountTensor {
    pub fn add(&mut self, i: EntityId, j: EntityId, k: EntityId, count: f64) {
        if count != 0.0 {
            *self.entries.entry((i, j, k)).or_default() += count;
        }
    }

    pub fn add_margin(&mut self, i: EntityId, j: EntityId, count: f64) {
        if count != 0.0 {
            *self.margin.entry((i, j)).or_default() += count;
        }
    }

    pub fn get(&self, i: EntityId, j: EntityId, k: EntityId) -> f64 {
        self.entries.get(&(i, j, k)).copied().unwrap_or(0.0)
    }

    pub fn margin(&self) -> &BTreeMap<(EntityId, EntityId), f64> {
        &self.margin
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, EntityId, EntityId, f64)> + '_ {
        self.entries.iter().map(|(&(i, j, k), &v)| (i, j, k, v))
    }

    /// Total volume ordered by each orderer, `v_i = Σ_jk A_ijk`.
    pub fn volumes(&self) -> BTreeMap<EntityId, f64> {
        let mut v = BTreeMap::new();
        for (&(i, _, _), &c) in &self.entries {
            *v.entry(i).or_default() += c;
        }
        v
    }

    pub fn orderers(&self) -> BTreeSet<EntityId> {
        self.entries.keys().map(|k| k.0).collect()
    }

    pub fn merge(&self, other: &CountTensor) -> CountTensor {
        let mut out = self.clone();
        for (i, j, k, c) in other.iter() {
            out.add(i, j, k, c);
        }
        for (&(i, j), &c) in &other.margin {
            out.add_margin(i, j, c);
        }
        out
    }

    /// Builds counts from paths; equivalent to [`crate::pathrec::path_counts`].
    pub fn from_paths(paths: &PathMultiset) -> CountTensor {
        crate::pathrec::path_counts(paths)
    }
}

/// Row-grouped sparse 3-index array, rows sorted by `(j, k)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sparse3 {
    rows: BTreeMap<EntityId, Vec<(EntityId, EntityId, f64)>>,
}

impl Sparse3 {
    fn from_rows(rows: BTreeMap<EntityId, Vec<(EntityId, EntityId, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .filter_map(|(i, mut r)| {
                r.retain(|e| e.2 != 0.0);
                r.sort_by_key(|a| (a.0, a.1));
                (!r.is_empty()).then_some((i, r))
            })
            .collect();
        Sparse3 { rows }
    }

    pub fn get(&self, i: EntityId, j: EntityId, k: EntityId) -> f64 {
        self.rows
            .get(&i)
            .and_then(|r| {
                r.binary_search_by(|e| (e.0, e.1).cmp(&(j, k)))
                    .ok()
                    .map(|p| r[p].2)
            })
            .unwrap_or(0.0)
    }

    pub fn row(&self, i: EntityId) -> &[(EntityId, EntityId, f64)] {
        self.rows.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self) -> impl Iterator<Item = (EntityId, &[(EntityId, EntityId, f64)])> + '_ {
        self.rows.iter().map(|(i, r)| (*i, r.as_slice()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, EntityId, EntityId, f64)> + '_ {
        self.rows
            .iter()
            .flat_map(|(i, r)| r.iter().map(move |&(j, k, v)| (*i, j, k, v)))
    }

    pub fn nnz(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn row_sum(&self, i: EntityId) -> f64 {
        self.row(i).iter().map(|e| e.2).sum()
    }

    pub fn support(&self) -> BTreeSet<(EntityId, EntityId, EntityId)> {
        self.iter().map(|(i, j, k, _)| (i, j, k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    TwoStep,
    OneStep,
    Mixed,
}

/// Per-entity flexibility values with a default for everyone else.
#[derive(Debug, Clone, PartialEq)]
pub struct Flexibility {
    default: f64,
    values: BTreeMap<EntityId, f64>,
}

fn check_phi(entity: EntityId, value: f64) -> Result<(), TensorError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(TensorError::PhiOutOfRange {
            entity: entity.0,
            value,
        })
    }
}

impl Flexibility {
    pub fn uniform(phi: f64) -> Result<Self, TensorError> {
        check_phi(EntityId::ORIGIN, phi)?;
        Ok(Flexibility {
            default: phi,
            values: BTreeMap::new(),
        })
    }

    pub fn zero() -> Self {
        Flexibility {
            default: 0.0,
            values: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, entity: EntityId, phi: f64) -> Result<(), TensorError> {
        check_phi(entity, phi)?;
        self.values.insert(entity, phi);
        Ok(())
    }

    pub fn with(mut self, entity: EntityId, phi: f64) -> Result<Self, TensorError> {
        self.set(entity, phi)?;
        Ok(self)
    }

    pub fn get(&self, entity: EntityId) -> f64 {
        self.values.get(&entity).copied().unwrap_or(self.default)
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    pub fn overrides(&self) -> impl Iterator<Item = (EntityId, f64)> + '_ {
        self.values.iter().map(|(e, v)| (*e, *v))
    }
}

/// Stochastic order tensor: every row with entries sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderTransitionTensor {
    pub entries: Sparse3,
    pub kind: TensorKind,
    pub flexibility: Option<Flexibility>,
}

impl OrderTransitionTensor {
    pub fn get(&self, i: EntityId, j: EntityId, k: EntityId) -> f64 {
        self.entries.get(i, j, k)
    }

    pub fn row(&self, i: EntityId) -> &[(EntityId, EntityId, f64)] {
        self.entries.row(i)
    }

    pub fn orderers(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entries.rows().map(|(i, _)| i)
    }

    /// `Σ_k T_ijk` for every intermediary `j` of `i`.
    pub fn intermediary_marginal(&self, i: EntityId) -> Vec<(EntityId, f64)> {
        let mut out: Vec<(EntityId, f64)> = Vec::new();
        for &(j, _, v) in self.row(i) {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => out.push((j, v)),
            }
        }
        out
    }

    /// Distribution of the upstream source given that `i` orders via `j`.
    pub fn conditional(&self, i: EntityId, j: EntityId) -> Vec<(EntityId, f64)> {
        let row = self.row(i);
        let start = row.partition_point(|e| e.0 < j);
        let end = row.partition_point(|e| e.0 <= j);
        let part = &row[start..end];
        let total: f64 = part.iter().map(|e| e.2).sum();
        if total <= 0.0 {
            return Vec::new();
        }
        part.iter().map(|e| (e.1, e.2 / total)).collect()
    }

    /// Largest deviation of a row sum from one.
    pub fn max_row_error(&self) -> f64 {
        self.entries
            .rows()
            .map(|(_, r)| (r.iter().map(|e| e.2).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `i,j,k,value` using entity names.
    pub fn write_csv<W: Write>(&self, catalog: &EntityCatalog, out: W) -> Result<(), TensorError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "k", "value"])?;
        for (i, j, k, v) in self.entries.iter() {
            w.write_record([catalog.name(i), catalog.name(j), catalog.name(k), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// First-order matrix `S_ij`, rows summing to one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FirstOrderMatrix {
    rows: BTreeMap<EntityId, Vec<(EntityId, f64)>>,
}

impl FirstOrderMatrix {
    pub fn get(&self, i: EntityId, j: EntityId) -> f64 {
        self.row(i)
            .iter()
            .find(|e| e.0 == j)
            .map(|e| e.1)
            .unwrap_or(0.0)
    }

    pub fn row(&self, i: EntityId) -> &[(EntityId, f64)] {
        self.rows.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self) -> impl Iterator<Item = (EntityId, &[(EntityId, f64)])> + '_ {
        self.rows.iter().map(|(i, r)| (*i, r.as_slice()))
    }
}

/// `S_ij = Σ_k A_ijk / Σ_jk A_ijk`.
pub fn first_order(counts: &CountTensor) -> FirstOrderMatrix {
    let mut raw: BTreeMap<EntityId, BTreeMap<EntityId, f64>> = BTreeMap::new();
    for (i, j, _, c) in counts.iter() {
        *raw.entry(i).or_default().entry(j).or_default() += c;
    }
    let rows = raw
        .into_iter()
        .filter_map(|(i, r)| {
            let total: f64 = r.values().sum();
            (total > 0.0).then(|| (i, r.into_iter().map(|(j, c)| (j, c / total)).collect()))
        })
        .collect();
    FirstOrderMatrix { rows }
}

/// `T²_ijk = A_ijk / Σ_j'k' A_ij'k'`.
pub fn build_two_step(counts: &CountTensor) -> OrderTransitionTensor {
    let totals = counts.volumes();
    let mut rows: BTreeMap<EntityId, Vec<(EntityId, EntityId, f64)>> = BTreeMap::new();
    for (i, j, k, c) in counts.iter() {
        let total = totals[&i];
        if total > 0.0 && c > 0.0 {
            rows.entry(i).or_default().push((j, k, c / total));
        }
    }
    OrderTransitionTensor {
        entries: Sparse3::from_rows(rows),
        kind: TensorKind::TwoStep,
        flexibility: Some(Flexibility::zero()),
    }
}

/// `T¹_ijk = S_ij · S_jk`: orderer `i` keeps its choice of intermediaries but
/// adopts each intermediary's own upstream mix. An intermediary with no
/// recorded orders of its own is a source, and routes to ORIGIN.
pub fn build_one_step(counts: &CountTensor) -> OrderTransitionTensor {
    let s = first_order(counts);
    let source_row = [(EntityId::ORIGIN, 1.0)];
    let mut rows: BTreeMap<EntityId, Vec<(EntityId, EntityId, f64)>> = BTreeMap::new();
    for (i, row) in s.rows() {
        let out = rows.entry(i).or_default();
        for &(j, sij) in row {
            let upstream = s.row(j);
            let upstream = if upstream.is_empty() { &source_row[..] } else { upstream };
            for &(k, sjk) in upstream {
                out.push((j, k, sij * sjk));
            }
        }
    }
    OrderTransitionTensor {
        entries: Sparse3::from_rows(rows),
        kind: TensorKind::OneStep,
        flexibility: Some(Flexibility::uniform(1.0).expect("in range")),
    }
}

/// `T(φ)_ijk = (1 − φ_i) T²_ijk + φ_i T¹_ijk`. Zero entries are dropped, so
/// `φ = 0` and `φ = 1` reproduce the inputs exactly.
pub fn mix(
    two_step: &OrderTransitionTensor,
    one_step: &OrderTransitionTensor,
    phi: &Flexibility,
) -> Result<OrderTransitionTensor, TensorError> {
    check_phi(EntityId::ORIGIN, phi.default)?;
    for (e, v) in phi.overrides() {
        check_phi(e, v)?;
    }
    let orderers: BTreeSet<EntityId> = two_step.orderers().chain(one_step.orderers()).collect();
    let mut rows = BTreeMap::new();
    for i in orderers {
        let p = phi.get(i);
        let (a, b) = (two_step.row(i), one_step.row(i));
        let mut out = Vec::with_capacity(a.len().max(b.len()));
        let (mut x, mut y) = (0, 0);
        while x < a.len() || y < b.len() {
            let ka = a.get(x).map(|e| (e.0, e.1));
            let kb = b.get(y).map(|e| (e.0, e.1));
            let (key, va, vb) = match (ka, kb) {
                (Some(ka), Some(kb)) if ka == kb => {
                    x += 1;
                    y += 1;
                    (ka, a[x - 1].2, b[y - 1].2)
                }
                (Some(ka), Some(kb)) if ka < kb => {
                    x += 1;
                    (ka, a[x - 1].2, 0.0)
                }
                (Some(ka), None) => {
                    x += 1;
                    (ka, a[x - 1].2, 0.0)
                }
                (_, Some(kb)) => {
                    y += 1;
                    (kb, 0.0, b[y - 1].2)
                }
                (None, None) => unreachable!(),
            };
            let v = (1.0 - p) * va + p * vb;
            if v != 0.0 {
                out.push((key.0, key.1, v));
            }
        }
        rows.insert(i, out);
    }
    Ok(OrderTransitionTensor {
        entries: Sparse3::from_rows(rows),
        kind: TensorKind::Mixed,
        flexibility: Some(phi.clone()),
    })
}

/// Shipment probabilities `B_ijk`: source `i` ships via `j` to orderer `k`,
/// normalized over everything leaving `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShipmentTensor {
    pub entries: Sparse3,
    pub volumes: BTreeMap<EntityId, f64>,
    pub window_days: u32,
}

impl ShipmentTensor {
    pub fn get(&self, i: EntityId, j: EntityId, k: EntityId) -> f64 {
        self.entries.get(i, j, k)
    }

    pub fn sources(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.entries.rows().map(|(i, _)| i)
    }

    pub fn row(&self, i: EntityId) -> &[(EntityId, EntityId, f64)] {
        self.entries.row(i)
    }
}

/// `B_ijk = T_kji v_k / Σ_k'j' T_k'j'i v_k'`. Sources without incoming
/// weighted flow get no slice.
pub fn build_shipment_tensor(
    t: &OrderTransitionTensor,
    volumes: &BTreeMap<EntityId, f64>,
    window_days: u32,
) -> ShipmentTensor {
    let mut rows: BTreeMap<EntityId, Vec<(EntityId, EntityId, f64)>> = BTreeMap::new();
    for (k, j, i, p) in t.entries.iter() {
        let v = volumes.get(&k).copied().unwrap_or(0.0);
        let w = p * v;
        if w > 0.0 {
            rows.entry(i).or_default().push((j, k, w));
        }
    }
    for row in rows.values_mut() {
        let total: f64 = row.iter().map(|e| e.2).sum();
        for e in row.iter_mut() {
            e.2 /= total;
        }
    }
    ShipmentTensor {
        entries: Sparse3::from_rows(rows),
        volumes: volumes.clone(),
        window_days,
    }
}

/// All-ones volumes for every orderer of `t`.
pub fn unit_volumes(t: &OrderTransitionTensor) -> BTreeMap<EntityId, f64> {
    t.orderers().map(|i| (i, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn e(n: u32) -> EntityId {
        EntityId(n)
    }

    /// Paths (M1,A,D,E) and (M2,C,D), one package each.
    fn toy() -> CountTensor {
        let (m1, m2, a, c, d, ee) = (e(0), e(1), e(2), e(3), e(4), e(5));
        let mut counts = CountTensor::default();
        crate::pathrec::add_path(&mut counts, &[m1, a, d, ee], 1.0);
        crate::pathrec::add_path(&mut counts, &[m2, c, d], 1.0);
        counts
    }

    #[test]
    fn two_step_normalization() {
        let mut c = CountTensor::default();
        c.add(e(0), e(1), e(2), 5.0);
        assert_eq!(build_two_step(&c).get(e(0), e(1), e(2)), 1.0);
        c.add(e(0), e(1), e(3), 0.0);
        c.add(e(5), e(1), e(2), 3.0);
        c.add(e(5), e(4), e(3), 1.0);
        let t = build_two_step(&c);
        assert_eq!(t.get(e(5), e(1), e(2)), 0.75);
        assert_eq!(t.get(e(5), e(4), e(3)), 0.25);
    }

    #[test]
    fn toy_preferences() {
        let (a, c, d, ee) = (e(2), e(3), e(4), e(5));
        let counts = toy();
        let t2 = build_two_step(&counts);
        let t1 = build_one_step(&counts);
        assert_eq!(t2.get(ee, d, a), 1.0);
        assert_eq!(t2.get(ee, d, c), 0.0);
        assert_eq!(t1.get(ee, d, a), 0.5);
        assert_eq!(t1.get(ee, d, c), 0.5);
        let half = mix(&t2, &t1, &Flexibility::zero().with(ee, 0.5).unwrap()).unwrap();
        assert_eq!(half.get(ee, d, a), 0.75);
        assert_eq!(half.get(ee, d, c), 0.25);
    }

    #[test]
    fn one_step_follows_intermediary_mix() {
        let (i, j, k, k2, i2) = (e(0), e(1), e(2), e(3), e(4));
        let mut c = CountTensor::default();
        c.add(j, k, EntityId::ORIGIN, 9.0);
        c.add(j, k2, EntityId::ORIGIN, 1.0);
        c.add(i, j, k, 1.0);
        c.add(i2, j, k2, 4.0);
        let t1 = build_one_step(&c);
        for orderer in [i, i2] {
            assert!((t1.get(orderer, j, k) - 0.9).abs() < 1e-15);
            assert!((t1.get(orderer, j, k2) - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn mix_limits_are_exact() {
        let counts = toy();
        let t2 = build_two_step(&counts);
        let t1 = build_one_step(&counts);
        let zero = mix(&t2, &t1, &Flexibility::uniform(0.0).unwrap()).unwrap();
        let one = mix(&t2, &t1, &Flexibility::uniform(1.0).unwrap()).unwrap();
        assert_eq!(zero.entries, t2.entries);
        assert_eq!(one.entries, t1.entries);
        assert!(mix(&t2, &t1, &Flexibility {
            default: 1.5,
            values: BTreeMap::new()
        })
        .is_err());
        assert!(Flexibility::uniform(-0.1).is_err());
    }

    #[test]
    fn shipment_tensor_weights_volumes() {
        let (src, j1, j2, a, b) = (e(0), e(1), e(2), e(3), e(4));
        let mut c = CountTensor::default();
        c.add(a, j1, src, 3.0);
        c.add(b, j2, src, 1.0);
        let t = build_two_step(&c);
        let bt = build_shipment_tensor(&t, &c.volumes(), 365);
        assert_eq!(bt.get(src, j1, a), 0.75);
        assert_eq!(bt.get(src, j2, b), 0.25);
        let one = build_shipment_tensor(&t, &unit_volumes(&t), 365);
        assert_eq!(one.get(src, j1, a), 0.5);
    }

    #[test]
    fn conditional_and_marginal() {
        let counts = toy();
        let t1 = build_one_step(&counts);
        let (a, c, d, ee) = (e(2), e(3), e(4), e(5));
        assert_eq!(t1.intermediary_marginal(ee), vec![(d, 1.0)]);
        assert_eq!(t1.conditional(ee, d), vec![(a, 0.5), (c, 0.5)]);
        assert!(t1.conditional(ee, a).is_empty());
    }
}
