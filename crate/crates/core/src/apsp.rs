//! All-pairs shortest paths under perturbed costs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Cost, Graph, NodeId};

pub const UNREACHABLE: Cost = Cost::MAX;
const NO_PRED: NodeId = NodeId::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ApspError {
    /// Two distinct minimum-cost paths reach `target` from `source`.
    #[error("shortest path {from} -> {target} is not unique; re-perturb with another seed")]
    PathTie { from: NodeId, target: NodeId },
    #[error("no path from {0} to {1}")]
    NoPath(NodeId, NodeId),
}

/// Row-major `n x n` shortest-path tables. `pred[u][v]` is the node before
/// `v` on the path from `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApspResult {
    n: usize,
    dist: Vec<Cost>,
    base_dist: Vec<u64>,
    pred: Vec<NodeId>,
    hop: Vec<u32>,
    diameter: u32,
}

struct Row {
    dist: Vec<Cost>,
    base_dist: Vec<u64>,
    pred: Vec<NodeId>,
    hop: Vec<u32>,
}

fn single_source(g: &Graph, source: NodeId) -> Result<Row, ApspError> {
    let n = g.node_count();
    let mut dist = vec![UNREACHABLE; n];
    let mut base_dist = vec![0u64; n];
    let mut pred = vec![NO_PRED; n];
    let mut hop = vec![0u32; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source as usize] = 0;
    heap.push(Reverse((0 as Cost, source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if settled[u as usize] {
            continue;
        }
        settled[u as usize] = true;
        for e in g.out_edges(u) {
            let v = e.dst as usize;
            let nd = d + e.perturbed_cost;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = u;
                base_dist[v] = base_dist[u as usize] + e.base_cost;
                hop[v] = hop[u as usize] + 1;
                heap.push(Reverse((nd, e.dst)));
            }
        }
    }
    // With positive costs the shortest-path DAG is a tree exactly when every
    // reached node other than the source has a single tight in-edge.
    for v in 0..n as NodeId {
        if v == source || dist[v as usize] == UNREACHABLE {
            continue;
        }
        let tight = g
            .in_edges(v)
            .filter(|e| {
                let du = dist[e.src as usize];
                du != UNREACHABLE && du + e.perturbed_cost == dist[v as usize]
            })
            .count();
        if tight != 1 {
            return Err(ApspError::PathTie { from: source, target: v });
        }
    }
    Ok(Row {
        dist,
        base_dist,
        pred,
        hop,
    })
}

impl ApspResult {
    /// Runs one Dijkstra per source in parallel and verifies that every
    /// finite shortest path is unique.
    pub fn compute(g: &Graph) -> Result<Self, ApspError> {
        let n = g.node_count();
        let rows = (0..n as NodeId)
            .into_par_iter()
            .map(|s| single_source(g, s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Self {
            n,
            dist: Vec::with_capacity(n * n),
            base_dist: Vec::with_capacity(n * n),
            pred: Vec::with_capacity(n * n),
            hop: Vec::with_capacity(n * n),
            diameter: 0,
        };
        for row in rows {
            out.dist.extend(row.dist);
            out.base_dist.extend(row.base_dist);
            out.pred.extend(row.pred);
            out.hop.extend(row.hop);
        }
        out.diameter = out
            .hop
            .iter()
            .zip(&out.dist)
            .filter(|(_, &d)| d != UNREACHABLE)
            .map(|(&h, _)| h)
            .max()
            .unwrap_or(0);
        Ok(out)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    fn at(&self, u: NodeId, v: NodeId) -> usize {
        u as usize * self.n + v as usize
    }

    /// Perturbed-cost distance, `None` when unreachable.
    pub fn dist(&self, u: NodeId, v: NodeId) -> Option<Cost> {
        let d = self.dist[self.at(u, v)];
        (d != UNREACHABLE).then_some(d)
    }

    /// Sum of base costs along the chosen shortest path.
    pub fn base_dist(&self, u: NodeId, v: NodeId) -> Option<u64> {
        self.dist(u, v).map(|_| self.base_dist[self.at(u, v)])
    }

    pub fn hops(&self, u: NodeId, v: NodeId) -> Option<u32> {
        self.dist(u, v).map(|_| self.hop[self.at(u, v)])
    }

    pub fn pred(&self, u: NodeId, v: NodeId) -> Option<NodeId> {
        let p = self.pred[self.at(u, v)];
        (p != NO_PRED).then_some(p)
    }

    /// Hop count of the longest finite shortest path.
    pub fn hop_diameter(&self) -> u32 {
        self.diameter
    }

    /// Visits the nodes of the path `u -> v` from `v` back to `u`.
    pub fn for_each_on_path_rev(&self, u: NodeId, v: NodeId, mut f: impl FnMut(NodeId)) {
        let mut cur = v;
        f(cur);
        while cur != u {
            cur = self.pred[self.at(u, cur)];
            f(cur);
        }
    }

    pub fn extract_path(&self, u: NodeId, v: NodeId) -> Result<Vec<NodeId>, ApspError> {
        let hops = self.hops(u, v).ok_or(ApspError::NoPath(u, v))?;
        let mut path = Vec::with_capacity(hops as usize + 1);
        self.for_each_on_path_rev(u, v, |x| path.push(x));
        path.reverse();
        Ok(path)
    }
}

pub fn compute_apsp(g: &Graph) -> Result<ApspResult, ApspError> {
    ApspResult::compute(g)
}
