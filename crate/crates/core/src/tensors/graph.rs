//! Second-order (meta-node) representation of the shipment chain.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use super::{OrderTransitionTensor, ShipmentTensor, TensorError};
use crate::ingest::{EntityCatalog, EntityId};
use crate::pathrec::PathMultiset;
use crate::spectral::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetaNode {
    /// Goods held by the second entity, received from the first.
    Pair(EntityId, EntityId),
    /// Goods leaving final distributor `ω` towards final buyers.
    Exit(EntityId),
    /// Absorbing end node.
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeClass {
    Observed,
    Alternative,
}

impl EdgeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeClass::Observed => "observed",
            EdgeClass::Alternative => "alternative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub class: EdgeClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderGraph {
    pub nodes: Vec<MetaNode>,
    pub edges: Vec<MetaEdge>,
    pub omega: BTreeMap<EntityId, f64>,
    index: HashMap<MetaNode, usize>,
}

impl SecondOrderGraph {
    pub fn index_of(&self, node: MetaNode) -> Option<usize> {
        self.index.get(&node).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, src: MetaNode, dst: MetaNode) -> f64 {
        match (self.index_of(src), self.index_of(dst)) {
            (Some(s), Some(d)) => self
                .edges
                .iter()
                .filter(|e| e.src == s && e.dst == d)
                .map(|e| e.weight)
                .sum(),
            _ => 0.0,
        }
    }

    pub fn to_matrix(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.nodes.len(),
            self.edges.iter().map(|e| (e.src, e.dst, e.weight)),
        )
    }

    /// Marks pair-to-pair edges whose order triple is absent from `two_step`
    /// as alternative.
    pub fn classify(&mut self, two_step: &OrderTransitionTensor) {
        for e in &mut self.edges {
            if let (MetaNode::Pair(u, j), MetaNode::Pair(_, a)) = (self.nodes[e.src], self.nodes[e.dst]) {
                e.class = if two_step.get(a, j, u) > 0.0 {
                    EdgeClass::Observed
                } else {
                    EdgeClass::Alternative
                };
            }
        }
    }

    /// Writes `src_pair,dst_pair,weight,class` with pairs as `i|j` and the
    /// end node as `END`.
    pub fn write_csv<W: Write>(&self, catalog: &EntityCatalog, out: W) -> Result<(), TensorError> {
        let label = |n: MetaNode| match n {
            MetaNode::Pair(a, b) => format!("{}|{}", catalog.name(a), catalog.name(b)),
            MetaNode::Exit(w) => format!("{}|END", catalog.name(w)),
            MetaNode::End => "END".to_string(),
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src_pair", "dst_pair", "weight", "class"])?;
        for e in &self.edges {
            w.write_record([
                label(self.nodes[e.src]),
                label(self.nodes[e.dst]),
                e.weight.to_string(),
                e.class.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Share of the packages passing through each entity whose path ends there.
pub fn end_fractions(paths: &PathMultiset) -> BTreeMap<EntityId, f64> {
    let mut through: BTreeMap<EntityId, (f64, f64)> = BTreeMap::new();
    for p in &paths.paths {
        for (pos, e) in p.nodes.iter().enumerate() {
            let entry = through.entry(*e).or_default();
            entry.0 += p.count as f64;
            if pos + 1 == p.nodes.len() {
                entry.1 += p.count as f64;
            }
        }
    }
    through
        .into_iter()
        .filter(|(_, (_, end))| *end > 0.0)
        .map(|(e, (all, end))| (e, end / all))
        .collect()
}

/// Maps the shipment tensor onto meta-nodes `(i, j)`. Pair `(i, j)` moves to
/// `(j, k)` with weight `(1 − f_j) B_ijk / Σ_k' B_ijk'` and to `Exit(j)` with
/// weight `f_j`, where `f` comes from `omega`. Exits lead to the absorbing end.
pub fn to_second_order(
    b: &ShipmentTensor,
    omega: &BTreeMap<EntityId, f64>,
) -> Result<SecondOrderGraph, TensorError> {
    if omega.values().all(|f| *f <= 0.0) {
        return Err(TensorError::EmptyOmega);
    }
    // continuation per pair (i, j): list of (k, weight)
    let mut cont: BTreeMap<(EntityId, EntityId), Vec<(EntityId, f64)>> = BTreeMap::new();
    let mut pairs: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
    for (i, j, k, w) in b.entries.iter() {
        cont.entry((i, j)).or_default().push((k, w));
        pairs.insert((i, j));
        pairs.insert((j, k));
    }
    let mut nodes: Vec<MetaNode> = pairs.iter().map(|&(i, j)| MetaNode::Pair(i, j)).collect();
    let exits: BTreeSet<EntityId> = pairs
        .iter()
        .filter(|p| omega.get(&p.1).copied().unwrap_or(0.0) > 0.0)
        .map(|p| p.1)
        .collect();
    nodes.extend(exits.iter().map(|&w| MetaNode::Exit(w)));
    nodes.push(MetaNode::End);
    let index: HashMap<MetaNode, usize> = nodes.iter().enumerate().map(|(n, m)| (*m, n)).collect();

    let mut edges = Vec::new();
    for &(i, j) in &pairs {
        let src = index[&MetaNode::Pair(i, j)];
        let f = omega.get(&j).copied().unwrap_or(0.0);
        let next = cont.get(&(i, j));
        let total: f64 = next.map(|n| n.iter().map(|e| e.1).sum()).unwrap_or(0.0);
        let stay = if total > 0.0 { 1.0 - f } else { 0.0 };
        let exit = if total > 0.0 { f } else { 1.0 };
        if total <= 0.0 && f <= 0.0 {
            return Err(TensorError::Dangling(i.0.to_string(), j.0.to_string()));
        }
        if stay > 0.0 {
            for &(k, w) in next.expect("has continuation") {
                edges.push(MetaEdge {
                    src,
                    dst: index[&MetaNode::Pair(j, k)],
                    weight: stay * w / total,
                    class: EdgeClass::Observed,
                });
            }
        }
        if exit > 0.0 {
            edges.push(MetaEdge {
                src,
                dst: index[&MetaNode::Exit(j)],
                weight: exit,
                class: EdgeClass::Observed,
            });
        }
    }
    let end = index[&MetaNode::End];
    for &w in &exits {
        edges.push(MetaEdge {
            src: index[&MetaNode::Exit(w)],
            dst: end,
            weight: 1.0,
            class: EdgeClass::Observed,
        });
    }
    edges.push(MetaEdge {
        src: end,
        dst: end,
        weight: 1.0,
        class: EdgeClass::Observed,
    });
    Ok(SecondOrderGraph {
        nodes,
        edges,
        omega: omega.clone(),
        index,
    })
}

/// A second-order edge `(i, j) → (j, k)` in order direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderEdge {
    pub i: EntityId,
    pub j: EntityId,
    pub k: EntityId,
    pub weight: f64,
    pub class: EdgeClass,
}

/// Observed edges are the support of `two_step`; alternative edges are in the
/// support of `one_step` only. Weights come from the tensor defining the class.
pub fn alternative_edges(
    two_step: &OrderTransitionTensor,
    one_step: &OrderTransitionTensor,
) -> Vec<OrderEdge> {
    let mut out: Vec<OrderEdge> = two_step
        .entries
        .iter()
        .map(|(i, j, k, w)| OrderEdge {
            i,
            j,
            k,
            weight: w,
            class: EdgeClass::Observed,
        })
        .collect();
    out.extend(
        one_step
            .entries
            .iter()
            .filter(|&(i, j, k, _)| two_step.get(i, j, k) == 0.0)
            .map(|(i, j, k, w)| OrderEdge {
                i,
                j,
                k,
                weight: w,
                class: EdgeClass::Alternative,
            }),
    );
    out
}

/// Writes order edges as `src_pair,dst_pair,weight,class`.
pub fn write_order_edges<W: Write>(
    edges: &[OrderEdge],
    catalog: &EntityCatalog,
    out: W,
) -> Result<(), TensorError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["src_pair", "dst_pair", "weight", "class"])?;
    for e in edges {
        w.write_record([
            format!("{}|{}", catalog.name(e.i), catalog.name(e.j)),
            format!("{}|{}", catalog.name(e.j), catalog.name(e.k)),
            e.weight.to_string(),
            e.class.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
