//! Hub labeling via shortest-path covers.
//!
//! For each power-of-two radius `r` the unique shortest paths with hop length
//! in `(r, 2r]` that avoid the base set are hit greedily. A node's hubs are its
//! base set plus, per radius, the cover nodes inside its `2r` hop-ball of the
//! graph with the base removed. Direct edges (hop length 1) fall outside every
//! `(r, 2r]` interval, so they get their own cover with a hop-ball of radius 1;
//! without it two adjacent non-base nodes could end up with disjoint hub sets.
//!
//! The resulting labeling has the covering property: for every ordered pair
//! `(s, t)` some hub of both `s` and `t` lies on the shortest path `s -> t`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use crate::apsp::ApspResult;
use crate::graph::{Cost, Graph, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HubError {
    #[error("node {0} is in the base set and has no neighborhood in the reduced graph")]
    BaseNode(NodeId),
    #[error("no path between {0} and {1}; hub labeling needs a strongly connected graph")]
    NotStronglyConnected(NodeId, NodeId),
    #[error("shortest-path table has {apsp} nodes but the graph has {graph}")]
    SizeMismatch { graph: usize, apsp: usize },
    #[error("optimizer budget must be at least 3, got {0}")]
    Budget(usize),
}

/// Powers of two up to the hop diameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadiiSet(Vec<u32>);

impl RadiiSet {
    pub fn for_diameter(diameter: u32) -> Self {
        Self(
            std::iter::successors(Some(1u32), |r| r.checked_mul(2))
                .take_while(|&r| r <= diameter)
                .collect(),
        )
    }

    pub fn radii(&self) -> &[u32] {
        &self.0
    }

    pub fn max(&self) -> Option<u32> {
        self.0.last().copied()
    }

    /// Radius `r` with `r < hops <= 2r`, if it belongs to the set.
    pub fn bucket_of(&self, hops: u32) -> Option<u32> {
        if hops < 2 {
            return None;
        }
        let r = 1u32 << (31 - (hops - 1).leading_zeros());
        self.0.binary_search(&r).ok().map(|_| r)
    }
}

/// Flat list of paths (node sequences).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathSet {
    offsets: Vec<usize>,
    nodes: Vec<NodeId>,
}

impl PathSet {
    pub fn new() -> Self {
        Self {
            offsets: vec![0],
            nodes: Vec::new(),
        }
    }

    pub fn push(&mut self, path: &[NodeId]) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.nodes.extend_from_slice(path);
        self.offsets.push(self.nodes.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> &[NodeId] {
        &self.nodes[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[NodeId]> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    fn append(&mut self, other: PathSet) {
        for p in other.iter() {
            self.push(p);
        }
    }
}

impl<P: AsRef<[NodeId]>> FromIterator<P> for PathSet {
    fn from_iter<T: IntoIterator<Item = P>>(iter: T) -> Self {
        let mut set = PathSet::new();
        for p in iter {
            set.push(p.as_ref());
        }
        set
    }
}

fn mask(n: usize, nodes: &[NodeId]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &v in nodes {
        m[v as usize] = true;
    }
    m
}

/// Nodes ranked by total degree, highest first, ties by smaller index.
fn degree_ranking(g: &Graph) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = (0..g.node_count() as NodeId).collect();
    order.sort_by_key(|&v| (Reverse(g.degree(v)), v));
    order
}

/// The `ell` nodes of highest total degree, sorted by index.
pub fn select_base(g: &Graph, ell: usize) -> Vec<NodeId> {
    let mut base = degree_ranking(g);
    base.truncate(ell);
    base.sort_unstable();
    base
}

/// Buckets every shortest path that avoids `base` by the radius whose
/// interval `(r, 2r]` holds its hop length.
pub fn partition_paths(
    apsp: &ApspResult,
    radii: &RadiiSet,
    base: &[NodeId],
) -> BTreeMap<u32, PathSet> {
    let base_mask = mask(apsp.node_count(), base);
    collect_paths(apsp, &base_mask, |hops| radii.bucket_of(hops))
}

/// Direct-edge shortest paths (hop length 1) that avoid `base`.
pub fn partition_adjacent(apsp: &ApspResult, base: &[NodeId]) -> PathSet {
    let base_mask = mask(apsp.node_count(), base);
    collect_paths(apsp, &base_mask, |hops| (hops == 1).then_some(1))
        .remove(&1)
        .unwrap_or_default()
}

fn collect_paths(
    apsp: &ApspResult,
    base_mask: &[bool],
    bucket: impl Fn(u32) -> Option<u32> + Sync,
) -> BTreeMap<u32, PathSet> {
    let n = apsp.node_count() as NodeId;
    let per_source: Vec<BTreeMap<u32, PathSet>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut local: BTreeMap<u32, PathSet> = BTreeMap::new();
            if base_mask[u as usize] {
                return local;
            }
            let mut buf = Vec::new();
            for v in 0..n {
                let Some(r) = apsp.hops(u, v).and_then(&bucket) else {
                    continue;
                };
                buf.clear();
                let mut hits_base = false;
                apsp.for_each_on_path_rev(u, v, |x| {
                    hits_base |= base_mask[x as usize];
                    buf.push(x);
                });
                if !hits_base {
                    buf.reverse();
                    local.entry(r).or_insert_with(PathSet::new).push(&buf);
                }
            }
            local
        })
        .collect();
    let mut merged: BTreeMap<u32, PathSet> = BTreeMap::new();
    for local in per_source {
        for (r, set) in local {
            merged.entry(r).or_insert_with(PathSet::new).append(set);
        }
    }
    merged
}

/// Greedy hitting set: repeatedly take the node on the most unhit paths,
/// smaller index first on ties. Returned sorted by index.
pub fn greedy_hitting_set(paths: &PathSet) -> Vec<NodeId> {
    let universe = paths.nodes.iter().map(|&v| v as usize + 1).max().unwrap_or(0);
    let mut count = vec![0usize; universe];
    let mut containing: Vec<Vec<u32>> = vec![Vec::new(); universe];
    for (i, p) in paths.iter().enumerate() {
        for &v in p {
            // Paths are simple, so a node appears at most once per path.
            count[v as usize] += 1;
            containing[v as usize].push(i as u32);
        }
    }
    let mut heap: BinaryHeap<(usize, Reverse<NodeId>)> = count
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(v, &c)| (c, Reverse(v as NodeId)))
        .collect();
    let mut hit = vec![false; paths.len()];
    let mut remaining = paths.len();
    let mut picked = Vec::new();
    while remaining > 0 {
        let Some((c, Reverse(v))) = heap.pop() else {
            break;
        };
        let current = count[v as usize];
        if c != current {
            if current > 0 {
                heap.push((current, Reverse(v)));
            }
            continue;
        }
        picked.push(v);
        for &pi in &containing[v as usize] {
            if hit[pi as usize] {
                continue;
            }
            hit[pi as usize] = true;
            remaining -= 1;
            for &y in paths.get(pi as usize) {
                count[y as usize] -= 1;
            }
        }
    }
    picked.sort_unstable();
    picked
}

/// `G` with the base nodes and their incident edges removed.
#[derive(Debug, Clone)]
pub struct BaseRemoved<'a> {
    graph: &'a Graph,
    removed: Vec<bool>,
}

const FAR: u32 = u32::MAX;

struct BallScratch {
    depth: Vec<u32>,
    dir: Vec<u32>,
    queue: VecDeque<NodeId>,
    reached: Vec<NodeId>,
    dir_reached: Vec<NodeId>,
}

impl BallScratch {
    fn new(n: usize) -> Self {
        Self {
            depth: vec![FAR; n],
            dir: vec![FAR; n],
            queue: VecDeque::new(),
            reached: Vec::new(),
            dir_reached: Vec::new(),
        }
    }
}

impl<'a> BaseRemoved<'a> {
    pub fn new(graph: &'a Graph, base: &[NodeId]) -> Self {
        Self {
            graph,
            removed: mask(graph.node_count(), base),
        }
    }

    pub fn is_removed(&self, v: NodeId) -> bool {
        self.removed[v as usize]
    }

    /// Computes `min(hops u -> v, hops v -> u)` for every node within
    /// `max_depth` into `scratch.depth`, listing them in `scratch.reached`.
    fn ball(&self, u: NodeId, max_depth: u32, scratch: &mut BallScratch) {
        let BallScratch {
            depth,
            dir,
            queue,
            reached,
            dir_reached,
        } = scratch;
        for &w in reached.iter() {
            depth[w as usize] = FAR;
        }
        reached.clear();
        for forward in [true, false] {
            dir[u as usize] = 0;
            dir_reached.push(u);
            queue.push_back(u);
            while let Some(x) = queue.pop_front() {
                let dx = dir[x as usize];
                if dx == max_depth {
                    continue;
                }
                let mut visit = |y: NodeId| {
                    if !self.removed[y as usize] && dir[y as usize] == FAR {
                        dir[y as usize] = dx + 1;
                        dir_reached.push(y);
                        queue.push_back(y);
                    }
                };
                if forward {
                    self.graph.out_edges(x).iter().for_each(|e| visit(e.dst));
                } else {
                    self.graph.in_edges(x).for_each(|e| visit(e.src));
                }
            }
            for &y in dir_reached.iter() {
                let slot = &mut depth[y as usize];
                if *slot == FAR {
                    reached.push(y);
                }
                *slot = (*slot).min(dir[y as usize]);
                dir[y as usize] = FAR;
            }
            dir_reached.clear();
        }
    }

    /// Union of the forward and backward hop-balls of radius `x` around `u`,
    /// sorted by index.
    pub fn neighborhood(&self, u: NodeId, x: u32) -> Result<Vec<NodeId>, HubError> {
        if self.removed[u as usize] {
            return Err(HubError::BaseNode(u));
        }
        let mut scratch = BallScratch::new(self.graph.node_count());
        self.ball(u, x, &mut scratch);
        let mut reached = scratch.reached;
        reached.sort_unstable();
        Ok(reached)
    }
}

/// Base set and per-radius covers. `cover[r]` includes the base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverFamily {
    pub base: Vec<NodeId>,
    pub cover: BTreeMap<u32, Vec<NodeId>>,
    /// Cover of the direct-edge shortest paths, base excluded.
    pub adjacent: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubEntry {
    pub hub: NodeId,
    pub out_dist: Cost,
    pub in_dist: Cost,
    pub out_base: u64,
    pub in_base: u64,
    /// `u -> hub`, both endpoints included.
    pub out_path: Vec<NodeId>,
    /// `hub -> u`, both endpoints included.
    pub in_path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubLabeling {
    /// Per node, entries sorted by hub index.
    pub hubs: Vec<Vec<HubEntry>>,
    pub hd_bound: usize,
    pub covers: CoverFamily,
    pub radii: RadiiSet,
    pub diameter: u32,
}

impl HubLabeling {
    pub fn base_size(&self) -> usize {
        self.covers.base.len()
    }

    pub fn node_count(&self) -> usize {
        self.hubs.len()
    }

    pub fn hub_set_sizes(&self) -> Vec<usize> {
        self.hubs.iter().map(Vec::len).collect()
    }

    /// `h`: largest hub set, self included.
    pub fn max_hub_size(&self) -> usize {
        self.hubs.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Largest hub set with the node itself not counted.
    pub fn max_hub_size_without_self(&self) -> usize {
        self.hubs
            .iter()
            .enumerate()
            .map(|(u, hs)| hs.iter().filter(|e| e.hub as usize != u).count())
            .max()
            .unwrap_or(0)
    }

    pub fn hub_ids(&self, u: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.hubs[u as usize].iter().map(|e| e.hub)
    }

    /// Longest stored path in hops.
    pub fn max_path_hops(&self) -> usize {
        self.hubs
            .iter()
            .flatten()
            .map(|e| e.out_path.len().max(e.in_path.len()) - 1)
            .max()
            .unwrap_or(0)
    }
}

/// Hub sets and HD bound for one base size, before paths are attached.
#[derive(Debug, Clone)]
struct CoverEvaluation {
    covers: CoverFamily,
    hub_sets: Vec<Vec<NodeId>>,
    hd_bound: usize,
}

/// Precomputed inputs shared by every base size.
struct HubPlanner<'a> {
    graph: &'a Graph,
    apsp: &'a ApspResult,
    radii: RadiiSet,
    ranking: Vec<NodeId>,
}

impl<'a> HubPlanner<'a> {
    fn new(graph: &'a Graph, apsp: &'a ApspResult) -> Result<Self, HubError> {
        if graph.node_count() != apsp.node_count() {
            return Err(HubError::SizeMismatch {
                graph: graph.node_count(),
                apsp: apsp.node_count(),
            });
        }
        Ok(Self {
            graph,
            apsp,
            radii: RadiiSet::for_diameter(apsp.hop_diameter()),
            ranking: degree_ranking(graph),
        })
    }

    fn evaluate(&self, ell: usize) -> CoverEvaluation {
        let n = self.graph.node_count();
        let mut base: Vec<NodeId> = self.ranking.iter().take(ell).copied().collect();
        base.sort_unstable();

        let buckets = partition_paths(self.apsp, &self.radii, &base);
        let cover: BTreeMap<u32, Vec<NodeId>> = self
            .radii
            .radii()
            .iter()
            .map(|&r| {
                let hitting = buckets.get(&r).map(greedy_hitting_set).unwrap_or_default();
                let mut c = base.clone();
                c.extend(hitting);
                c.sort_unstable();
                c.dedup();
                (r, c)
            })
            .collect();
        let adjacent = greedy_hitting_set(&partition_adjacent(self.apsp, &base));

        let radii: Vec<u32> = self.radii.radii().to_vec();
        let cover_masks: Vec<Vec<bool>> = radii.iter().map(|r| mask(n, &cover[r])).collect();
        let adjacent_mask = mask(n, &adjacent);
        let reduced = BaseRemoved::new(self.graph, &base);
        let max_depth = self.radii.max().map_or(1, |r| 2 * r).max(1);

        let per_node: Vec<(Vec<NodeId>, usize)> = (0..n as NodeId)
            .into_par_iter()
            .map_init(
                || BallScratch::new(n),
                |scratch, u| {
                    let mut hubs = base.clone();
                    hubs.push(u);
                    if reduced.is_removed(u) {
                        // Reduced graph has no `u`: every hubs_in_neighb(u, r) is the base.
                        let bound = if radii.is_empty() { 0 } else { base.len() };
                        hubs.sort_unstable();
                        hubs.dedup();
                        return (hubs, bound);
                    }
                    reduced.ball(u, max_depth, scratch);
                    let mut in_neighb = vec![base.len(); radii.len()];
                    for &w in &scratch.reached {
                        let d = scratch.depth[w as usize];
                        let mut is_hub = false;
                        for (k, &r) in radii.iter().enumerate() {
                            if d <= 2 * r && cover_masks[k][w as usize] {
                                in_neighb[k] += 1;
                                is_hub = true;
                            }
                        }
                        if d <= 1 && adjacent_mask[w as usize] {
                            is_hub = true;
                        }
                        if is_hub {
                            hubs.push(w);
                        }
                    }
                    hubs.sort_unstable();
                    hubs.dedup();
                    (hubs, in_neighb.into_iter().max().unwrap_or(0))
                },
            )
            .collect();

        let hd_bound = per_node.iter().map(|(_, b)| *b).max().unwrap_or(0);
        CoverEvaluation {
            covers: CoverFamily {
                base,
                cover,
                adjacent,
            },
            hub_sets: per_node.into_iter().map(|(h, _)| h).collect(),
            hd_bound,
        }
    }

    fn materialize(&self, eval: CoverEvaluation) -> Result<HubLabeling, HubError> {
        let apsp = self.apsp;
        let hubs = eval
            .hub_sets
            .par_iter()
            .enumerate()
            .map(|(u, set)| {
                let u = u as NodeId;
                set.iter()
                    .map(|&w| {
                        let missing = || HubError::NotStronglyConnected(u, w);
                        Ok(HubEntry {
                            hub: w,
                            out_dist: apsp.dist(u, w).ok_or_else(missing)?,
                            in_dist: apsp.dist(w, u).ok_or_else(missing)?,
                            out_base: apsp.base_dist(u, w).ok_or_else(missing)?,
                            in_base: apsp.base_dist(w, u).ok_or_else(missing)?,
                            out_path: apsp.extract_path(u, w).map_err(|_| missing())?,
                            in_path: apsp.extract_path(w, u).map_err(|_| missing())?,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HubLabeling {
            hubs,
            hd_bound: eval.hd_bound,
            covers: eval.covers,
            radii: self.radii.clone(),
            diameter: apsp.hop_diameter(),
        })
    }
}

/// Hub labeling for base size `ell` (clamped to `n`).
pub fn compute_hub_labeling(g: &Graph, apsp: &ApspResult, ell: usize) -> Result<HubLabeling, HubError> {
    let planner = HubPlanner::new(g, apsp)?;
    let eval = planner.evaluate(ell.min(g.node_count()));
    planner.materialize(eval)
}

/// HD bound for base size `ell` without materializing hub paths.
pub fn hd_bound(g: &Graph, apsp: &ApspResult, ell: usize) -> Result<usize, HubError> {
    let planner = HubPlanner::new(g, apsp)?;
    Ok(planner.evaluate(ell.min(g.node_count())).hd_bound)
}

#[derive(Debug, Clone)]
pub struct BaseSizeSearch {
    pub best_ell: usize,
    pub labeling: HubLabeling,
    /// `(ell, hd_bound)` in evaluation order, each `ell` at most once.
    pub trace: Vec<(usize, usize)>,
}

/// Geometric grid `0, 1, 2, 4, ...` capped at `n`, followed by midpoint
/// refinement around the current best until `budget` evaluations are spent or
/// no unevaluated midpoint remains. Ties go to the smaller base size.
pub fn optimize_base_size(g: &Graph, apsp: &ApspResult, budget: usize) -> Result<BaseSizeSearch, HubError> {
    if budget < 3 {
        return Err(HubError::Budget(budget));
    }
    let planner = HubPlanner::new(g, apsp)?;
    let n = g.node_count();

    let mut grid = vec![0usize];
    let mut step = 1usize;
    while step < n {
        grid.push(step);
        step *= 2;
    }
    if n > 0 {
        grid.push(n);
    }

    let mut evaluated: BTreeMap<usize, usize> = BTreeMap::new();
    let mut trace = Vec::new();
    let eval = |ell: usize, evaluated: &mut BTreeMap<usize, usize>, trace: &mut Vec<(usize, usize)>| {
        let bound = planner.evaluate(ell).hd_bound;
        evaluated.insert(ell, bound);
        trace.push((ell, bound));
    };

    for &ell in grid.iter().take(budget) {
        eval(ell, &mut evaluated, &mut trace);
    }
    while trace.len() < budget {
        let (&best, _) = evaluated
            .iter()
            .min_by_key(|(&ell, &b)| (b, ell))
            .expect("grid is non-empty");
        let lo = evaluated.range(..best).next_back().map_or(best, |(&l, _)| l);
        let hi = evaluated.range(best + 1..).next().map_or(best, |(&l, _)| l);
        let candidate = [(lo + best) / 2, (best + hi) / 2]
            .into_iter()
            .find(|c| !evaluated.contains_key(c));
        match candidate {
            Some(c) => eval(c, &mut evaluated, &mut trace),
            None => break,
        }
    }

    let best_ell = evaluated
        .iter()
        .min_by_key(|(&ell, &b)| (b, ell))
        .map(|(&ell, _)| ell)
        .unwrap_or(0);
    let labeling = planner.materialize(planner.evaluate(best_ell))?;
    Ok(BaseSizeSearch {
        best_ell,
        labeling,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_random, generate_star_clique, NodeDirectory};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(NodeId, NodeId, u64)]) -> Graph {
        let dir = NodeDirectory::from_labels((0..n).map(|i| format!("v{i}")), 32).unwrap();
        Graph::from_edges(dir, edges.iter().copied()).unwrap()
    }

    fn prepared(g: Graph) -> (Graph, ApspResult) {
        (0..)
            .find_map(|seed| {
                let p = g.perturb_weights(seed).unwrap();
                ApspResult::compute(&p).ok().map(|a| (p, a))
            })
            .unwrap()
    }

    fn random_scc(n: usize, deg: f64, seed: u64) -> (Graph, ApspResult) {
        prepared(generate_random(n, deg, seed).unwrap().largest_scc().largest)
    }

    fn assert_covering(l: &HubLabeling, apsp: &ApspResult) {
        let n = apsp.node_count() as NodeId;
        for s in 0..n {
            for t in 0..n {
                let path = apsp.extract_path(s, t).unwrap();
                let hs: Vec<NodeId> = l.hub_ids(s).collect();
                let covered = l.hub_ids(t).any(|w| hs.contains(&w) && path.contains(&w));
                assert!(covered, "pair ({s}, {t}) not covered");
            }
        }
    }

    /// All-pairs hop distances in the base-removed graph by repeated BFS
    /// relaxation over the edge list.
    fn reduced_hops(g: &Graph, base: &[NodeId]) -> Vec<Vec<u32>> {
        let n = g.node_count();
        let mut d = vec![vec![u32::MAX; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            if !base.contains(&(i as NodeId)) {
                row[i] = 0;
            }
        }
        for _ in 0..n {
            for e in g.edges() {
                if base.contains(&e.src) || base.contains(&e.dst) {
                    continue;
                }
                for row in d.iter_mut() {
                    let via = row[e.src as usize].saturating_add(1);
                    if via < row[e.dst as usize] {
                        row[e.dst as usize] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn radii_powers_of_two() {
        assert_eq!(RadiiSet::for_diameter(0).radii(), &[] as &[u32]);
        assert_eq!(RadiiSet::for_diameter(1).radii(), &[1]);
        assert_eq!(RadiiSet::for_diameter(9).radii(), &[1, 2, 4, 8]);
        let radii = RadiiSet::for_diameter(9);
        assert_eq!(radii.bucket_of(1), None);
        assert_eq!(radii.bucket_of(2), Some(1));
        assert_eq!(radii.bucket_of(3), Some(2));
        assert_eq!(radii.bucket_of(4), Some(2));
        assert_eq!(radii.bucket_of(5), Some(4));
        assert_eq!(radii.bucket_of(9), Some(8));
        for h in 2..=9 {
            let r = radii.bucket_of(h).unwrap();
            assert!(r < h && h <= 2 * r);
        }
    }

    #[test]
    fn select_base_by_degree() {
        let g = generate_star_clique(3, 5).unwrap();
        assert!(select_base(&g, 0).is_empty());
        assert_eq!(select_base(&g, 3), vec![0, 6, 12]);
        assert_eq!(select_base(&g, g.node_count()).len(), g.node_count());
        // Equal degrees: smaller index wins.
        assert_eq!(select_base(&g, 1), vec![0]);
    }

    #[test]
    fn partition_by_hop_length() {
        let (_, apsp) = prepared(graph(4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)]));
        let radii = RadiiSet::for_diameter(apsp.hop_diameter());
        let buckets = partition_paths(&apsp, &radii, &[]);
        // Directed 4-cycle: 4 paths of each hop length 1, 2, 3.
        assert_eq!(buckets[&1].len(), 4);
        assert_eq!(buckets[&2].len(), 4);
        assert!(buckets[&2].iter().all(|p| p.len() == 4));
        assert!(buckets[&1].iter().all(|p| p.len() == 3));
        assert_eq!(partition_adjacent(&apsp, &[]).len(), 4);
        // Paths through node 1 are dropped once it is in the base.
        let with_base = partition_paths(&apsp, &radii, &[1]);
        assert!(with_base.values().flat_map(|s| s.iter()).all(|p| !p.contains(&1)));
    }

    #[test]
    fn star_clique_long_paths_go_through_centers() {
        let (g, apsp) = prepared(generate_star_clique(3, 2).unwrap());
        let centers = select_base(&g, 3);
        let radii = RadiiSet::for_diameter(apsp.hop_diameter());
        let buckets = partition_paths(&apsp, &radii, &centers);
        assert!(buckets.get(&2).is_none_or(PathSet::is_empty));
        assert!(buckets.get(&1).is_none_or(PathSet::is_empty));
    }

    #[test]
    fn greedy_small_cases() {
        assert!(greedy_hitting_set(&PathSet::new()).is_empty());
        let paths: PathSet = [vec![0, 1], vec![1, 2]].into_iter().collect();
        assert_eq!(greedy_hitting_set(&paths), vec![1]);
    }

    fn brute_force_min_hitting_set(paths: &PathSet, universe: usize) -> usize {
        (0u32..1 << universe)
            .filter(|set| paths.iter().all(|p| p.iter().any(|&v| (set >> v) & 1 == 1)))
            .map(|set| set.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn greedy_within_log_factor_of_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let universe = 12;
            let paths: PathSet = (0..30)
                .map(|_| {
                    let len = rng.gen_range(1..=4);
                    let mut nodes: Vec<NodeId> = rand::seq::index::sample(&mut rng, universe, len)
                        .iter()
                        .map(|v| v as NodeId)
                        .collect();
                    nodes.sort_unstable();
                    nodes
                })
                .collect();
            let greedy = greedy_hitting_set(&paths);
            assert!(paths.iter().all(|p| p.iter().any(|v| greedy.contains(v))));
            let opt = brute_force_min_hitting_set(&paths, universe);
            assert!(greedy.len() as f64 <= opt as f64 * (1.0 + (30f64).ln()));
        }
    }

    #[test]
    fn neighborhood_cases() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1)]);
        let reduced = BaseRemoved::new(&g, &[]);
        assert_eq!(reduced.neighborhood(0, 0).unwrap(), vec![0]);
        assert_eq!(reduced.neighborhood(0, 1).unwrap(), vec![0, 1]);
        assert_eq!(reduced.neighborhood(2, 1).unwrap(), vec![1, 2]);
        assert_eq!(reduced.neighborhood(1, 1).unwrap(), vec![0, 1, 2]);

        let s = generate_star_clique(3, 4).unwrap();
        let centers = select_base(&s, 3);
        let reduced = BaseRemoved::new(&s, &centers);
        for x in 0..5 {
            assert_eq!(reduced.neighborhood(1, x).unwrap(), vec![1]);
        }
        assert_eq!(reduced.neighborhood(0, 2), Err(HubError::BaseNode(0)));
    }

    #[test]
    fn neighborhood_matches_hop_table() {
        let (g, _) = random_scc(40, 3.0, 5);
        let base = select_base(&g, 4);
        let hops = reduced_hops(&g, &base);
        let reduced = BaseRemoved::new(&g, &base);
        for u in 0..g.node_count() as NodeId {
            if base.contains(&u) {
                continue;
            }
            for x in [1, 2, 4] {
                let expected: Vec<NodeId> = (0..g.node_count() as NodeId)
                    .filter(|&v| hops[u as usize][v as usize].min(hops[v as usize][u as usize]) <= x)
                    .collect();
                assert_eq!(reduced.neighborhood(u, x).unwrap(), expected);
            }
        }
    }

    #[test]
    fn two_cycle_is_covered() {
        let (g, apsp) = prepared(graph(2, &[(0, 1, 5), (1, 0, 5)]));
        let l = compute_hub_labeling(&g, &apsp, 0).unwrap();
        assert_covering(&l, &apsp);
        for u in 0..2 {
            assert!(l.hub_ids(u).any(|w| w == u));
        }
    }

    #[test]
    fn single_node_labeling() {
        let (g, apsp) = prepared(graph(1, &[]));
        let l = compute_hub_labeling(&g, &apsp, 0).unwrap();
        assert_eq!(l.hubs.len(), 1);
        assert_eq!(l.hubs[0][0].out_path, vec![0]);
        assert_eq!(l.hd_bound, 0);
    }

    #[test]
    fn covering_on_random_graphs() {
        for seed in 0..6 {
            let (g, apsp) = random_scc(50, 2.0 + seed as f64, seed);
            for ell in [0, 1, 3, 8] {
                let l = compute_hub_labeling(&g, &apsp, ell).unwrap();
                assert_covering(&l, &apsp);
            }
        }
    }

    #[test]
    fn entries_carry_unique_paths() {
        let (g, apsp) = random_scc(40, 3.0, 21);
        let l = compute_hub_labeling(&g, &apsp, 2).unwrap();
        for (u, entries) in l.hubs.iter().enumerate() {
            let u = u as NodeId;
            assert!(entries.windows(2).all(|w| w[0].hub < w[1].hub));
            let own = entries.iter().find(|e| e.hub == u).unwrap();
            assert_eq!((own.out_base, own.in_base, own.out_dist), (0, 0, 0));
            assert_eq!(own.out_path, vec![u]);
            for e in entries {
                assert_eq!(e.out_path, apsp.extract_path(u, e.hub).unwrap());
                assert_eq!(e.in_path, apsp.extract_path(e.hub, u).unwrap());
                assert_eq!(Some(e.out_base), apsp.base_dist(u, e.hub));
                assert_eq!(Some(e.in_dist), apsp.dist(e.hub, u));
            }
        }
    }

    #[test]
    fn covers_hit_every_bucket_path_and_contain_base() {
        let (g, apsp) = random_scc(60, 3.0, 33);
        for ell in [0, 5] {
            let l = compute_hub_labeling(&g, &apsp, ell).unwrap();
            let buckets = partition_paths(&apsp, &l.radii, &l.covers.base);
            for (r, paths) in &buckets {
                let cover = &l.covers.cover[r];
                assert!(l.covers.base.iter().all(|b| cover.contains(b)));
                assert!(paths.iter().all(|p| p.iter().any(|v| cover.contains(v))));
            }
            for p in partition_adjacent(&apsp, &l.covers.base).iter() {
                assert!(p.iter().any(|v| l.covers.adjacent.contains(v)));
            }
        }
    }

    #[test]
    fn baseline_bound_matches_rederivation() {
        let (g, apsp) = random_scc(45, 3.0, 2);
        let l = compute_hub_labeling(&g, &apsp, 0).unwrap();
        let hops = reduced_hops(&g, &[]);
        let n = g.node_count();
        let mut bound = 0;
        for u in 0..n {
            for (&r, cover) in &l.covers.cover {
                let size = cover
                    .iter()
                    .filter(|&&w| hops[u][w as usize].min(hops[w as usize][u]) <= 2 * r)
                    .count();
                bound = bound.max(size);
            }
        }
        assert!(l.hd_bound >= bound);
        assert_eq!(l.hd_bound, bound);
    }

    #[test]
    fn base_is_in_every_hub_set() {
        let (g, apsp) = random_scc(50, 4.0, 13);
        let l = compute_hub_labeling(&g, &apsp, 6).unwrap();
        assert_eq!(l.base_size(), 6);
        for u in 0..g.node_count() as NodeId {
            let ids: Vec<_> = l.hub_ids(u).collect();
            assert!(l.covers.base.iter().all(|b| ids.contains(b)));
        }
        assert!(l.hd_bound >= 6);
    }

    #[test]
    fn star_clique_bound_is_center_count() {
        // Every path of two or more hops crosses a center, so each greedy cover
        // is a set of centers; the two-hop bucket needs all k of them.
        for (k, p) in [(4, 10), (5, 20)] {
            let (g, apsp) = prepared(generate_star_clique(k, p).unwrap());
            let baseline = compute_hub_labeling(&g, &apsp, 0).unwrap();
            let centers = select_base(&g, k);
            for cover in baseline.covers.cover.values() {
                assert!(cover.iter().all(|c| centers.contains(c)));
            }
            assert_eq!(baseline.covers.cover[&1], centers);
            assert_eq!(baseline.hd_bound, k);
            assert_eq!(compute_hub_labeling(&g, &apsp, k).unwrap().hd_bound, k);
        }
    }

    #[test]
    fn deterministic_labeling() {
        let (g, apsp) = random_scc(50, 3.0, 77);
        assert_eq!(
            compute_hub_labeling(&g, &apsp, 3).unwrap(),
            compute_hub_labeling(&g, &apsp, 3).unwrap()
        );
    }

    #[test]
    fn optimizer_on_cycle_matches_exhaustive_sweep() {
        let edges: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10, 1)).collect();
        let (g, apsp) = prepared(graph(10, &edges));
        let sweep: Vec<usize> = (0..=10)
            .map(|ell| compute_hub_labeling(&g, &apsp, ell).unwrap().hd_bound)
            .collect();
        let best = (0..=10).min_by_key(|&l| (sweep[l], l)).unwrap();
        assert_eq!(best, 0);
        let search = optimize_base_size(&g, &apsp, 12).unwrap();
        assert_eq!(search.best_ell, 0);
        assert_eq!(search.trace[0].0, 0);
        assert_eq!(search.labeling.hd_bound, sweep[0]);
        for &(ell, b) in &search.trace {
            assert_eq!(sweep[ell], b);
        }
    }

    #[test]
    fn optimizer_trace_is_unique_and_budgeted() {
        let (g, apsp) = random_scc(80, 4.0, 4);
        let search = optimize_base_size(&g, &apsp, 9).unwrap();
        assert!(search.trace.len() <= 9);
        assert_eq!(search.trace[0], (0, search.trace[0].1));
        let mut ells: Vec<_> = search.trace.iter().map(|t| t.0).collect();
        ells.sort_unstable();
        ells.dedup();
        assert_eq!(ells.len(), search.trace.len());
        let min = search.trace.iter().map(|t| t.1).min().unwrap();
        assert_eq!(search.labeling.hd_bound, min);
        assert_covering(&search.labeling, &apsp);
        assert_eq!(optimize_base_size(&g, &apsp, 2).unwrap_err(), HubError::Budget(2));
    }
}
