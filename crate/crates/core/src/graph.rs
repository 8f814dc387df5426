//! Input graphs: snapshot loading, validation, synthetic generators, SCC
//! reduction and the edge-cost perturbation that makes shortest paths unique.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Internal node index. Indices are dense in `[0, n)`.
pub type NodeId = u32;

/// Perturbed costs and their path sums.
pub type Cost = u128;

/// Number of perturbation bits available per edge: `r(e)` lies in `[1, 2^20)`.
pub const PERTURBATION_BITS: u32 = 20;

/// Default label width used for databases.
pub const DEFAULT_LABEL_BITS: u32 = 32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `ceil(log2(x))` for `x >= 1`.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Bidirectional map between external labels and dense node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDirectory {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    label_bits: u32,
}

impl NodeDirectory {
    pub fn new(label_bits: u32) -> Result<Self, GraphError> {
        if label_bits == 0 || label_bits > 32 {
            return Err(GraphError::Capacity(format!(
                "label width {label_bits} outside 1..=32"
            )));
        }
        Ok(Self {
            labels: Vec::new(),
            index: HashMap::new(),
            label_bits,
        })
    }

    pub fn from_labels<I, S>(labels: I, label_bits: u32) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut dir = Self::new(label_bits)?;
        for label in labels {
            let label = label.into();
            if dir.index.contains_key(&label) {
                return Err(GraphError::Validation(format!("duplicate label {label:?}")));
            }
            dir.insert(label)?;
        }
        Ok(dir)
    }

    /// Returns the index of `label`, inserting it if new.
    pub fn intern(&mut self, label: &str) -> Result<NodeId, GraphError> {
        if let Some(&id) = self.index.get(label) {
            return Ok(id);
        }
        self.insert(label.to_owned())
    }

    fn insert(&mut self, label: String) -> Result<NodeId, GraphError> {
        let id = self.labels.len() as u64;
        if id >= self.capacity() {
            return Err(GraphError::Capacity(format!(
                "more than 2^{} nodes",
                self.label_bits
            )));
        }
        let id = id as NodeId;
        self.index.insert(label.clone(), id);
        self.labels.push(label);
        Ok(id)
    }

    /// Maximum number of nodes addressable with the configured label width.
    pub fn capacity(&self) -> u64 {
        1u64 << self.label_bits
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_bits(&self) -> u32 {
        self.label_bits
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Same labels under a different label width.
    pub fn with_label_bits(&self, label_bits: u32) -> Result<Self, GraphError> {
        Self::from_labels(self.labels.iter().cloned(), label_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub base_cost: u64,
    pub perturbed_cost: Cost,
}

/// Directed weighted graph. Edges are kept sorted by `(src, dst)` and indexed
/// by position; `in_edges` lists edge positions grouped by destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    directory: NodeDirectory,
    edges: Vec<Edge>,
    out_start: Vec<u32>,
    in_start: Vec<u32>,
    in_edges: Vec<u32>,
    perturbation_seed: Option<u64>,
}

/// Left shift applied to base costs so that the perturbation sum along any
/// simple path stays below one base-cost unit.
pub fn perturbation_shift(n: usize) -> u32 {
    PERTURBATION_BITS + ceil_log2((n.saturating_sub(1)).max(1) as u64)
}

impl Graph {
    /// Builds a graph from `(src, dst, base_cost)` triples. Parallel edges are
    /// collapsed to the cheapest one. Costs start unperturbed: every edge gets
    /// `r(e) = 1`, which preserves the base order but not uniqueness.
    pub fn from_edges(
        directory: NodeDirectory,
        triples: impl IntoIterator<Item = (NodeId, NodeId, u64)>,
    ) -> Result<Self, GraphError> {
        let n = directory.len();
        let mut best: HashMap<(NodeId, NodeId), u64> = HashMap::new();
        for (src, dst, cost) in triples {
            if src as usize >= n || dst as usize >= n {
                return Err(GraphError::Validation(format!(
                    "edge ({src}, {dst}) references a node outside [0, {n})"
                )));
            }
            if src == dst {
                return Err(GraphError::Validation(format!(
                    "self-loop on {:?}",
                    directory.label(src).unwrap_or_default()
                )));
            }
            best.entry((src, dst))
                .and_modify(|c| *c = (*c).min(cost))
                .or_insert(cost);
        }
        let shift = perturbation_shift(n);
        let mut edges: Vec<Edge> = best
            .into_iter()
            .map(|((src, dst), base_cost)| Edge {
                src,
                dst,
                base_cost,
                perturbed_cost: ((base_cost as Cost) << shift) + 1,
            })
            .collect();
        edges.sort_unstable_by_key(|e| (e.src, e.dst));
        check_cost_headroom(n, &edges, shift)?;
        Ok(Self::assemble(directory, edges, None))
    }

    fn assemble(directory: NodeDirectory, edges: Vec<Edge>, seed: Option<u64>) -> Self {
        let n = directory.len();
        let mut out_start = vec![0u32; n + 1];
        let mut in_count = vec![0u32; n + 1];
        for e in &edges {
            out_start[e.src as usize + 1] += 1;
            in_count[e.dst as usize + 1] += 1;
        }
        for i in 0..n {
            out_start[i + 1] += out_start[i];
            in_count[i + 1] += in_count[i];
        }
        let in_start = in_count.clone();
        let mut cursor = in_count;
        let mut in_edges = vec![0u32; edges.len()];
        for (pos, e) in edges.iter().enumerate() {
            let slot = &mut cursor[e.dst as usize];
            in_edges[*slot as usize] = pos as u32;
            *slot += 1;
        }
        Self {
            directory,
            edges,
            out_start,
            in_start,
            in_edges,
            perturbation_seed: seed,
        }
    }

    pub fn directory(&self) -> &NodeDirectory {
        &self.directory
    }

    pub fn node_count(&self) -> usize {
        self.directory.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Average out-degree `m / n`.
    pub fn avg_degree(&self) -> f64 {
        if self.node_count() == 0 {
            0.0
        } else {
            self.edge_count() as f64 / self.node_count() as f64
        }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn perturbation_seed(&self) -> Option<u64> {
        self.perturbation_seed
    }

    pub fn out_edges(&self, u: NodeId) -> &[Edge] {
        let lo = self.out_start[u as usize] as usize;
        let hi = self.out_start[u as usize + 1] as usize;
        &self.edges[lo..hi]
    }

    pub fn in_edges(&self, v: NodeId) -> impl Iterator<Item = &Edge> + '_ {
        let lo = self.in_start[v as usize] as usize;
        let hi = self.in_start[v as usize + 1] as usize;
        self.in_edges[lo..hi]
            .iter()
            .map(move |&pos| &self.edges[pos as usize])
    }

    pub fn out_degree(&self, u: NodeId) -> usize {
        (self.out_start[u as usize + 1] - self.out_start[u as usize]) as usize
    }

    pub fn in_degree(&self, u: NodeId) -> usize {
        (self.in_start[u as usize + 1] - self.in_start[u as usize]) as usize
    }

    /// In-degree plus out-degree.
    pub fn degree(&self, u: NodeId) -> usize {
        self.out_degree(u) + self.in_degree(u)
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<&Edge> {
        let out = self.out_edges(src);
        out.binary_search_by_key(&dst, |e| e.dst)
            .ok()
            .map(|i| &out[i])
    }

    /// Replaces perturbed costs with `base << shift | r(e)` where the `r(e)`
    /// are distinct values in `[1, 2^20)` drawn without replacement.
    pub fn perturb_weights(&self, seed: u64) -> Result<Graph, GraphError> {
        let m = self.edges.len();
        let range = (1usize << PERTURBATION_BITS) - 1;
        if m > range {
            return Err(GraphError::Capacity(format!(
                "{m} edges exceed the 2^{PERTURBATION_BITS} perturbation headroom"
            )));
        }
        let shift = perturbation_shift(self.node_count());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = index::sample(&mut rng, range, m);
        let edges = self
            .edges
            .iter()
            .zip(draws.iter())
            .map(|(e, r)| Edge {
                perturbed_cost: ((e.base_cost as Cost) << shift) + r as Cost + 1,
                ..*e
            })
            .collect();
        Ok(Self::assemble(self.directory.clone(), edges, Some(seed)))
    }

    /// Overrides perturbed costs in edge order. Costs must be positive.
    pub fn with_perturbed_costs(&self, costs: &[Cost]) -> Graph {
        assert_eq!(costs.len(), self.edges.len());
        assert!(costs.iter().all(|&c| c > 0));
        let edges = self
            .edges
            .iter()
            .zip(costs)
            .map(|(e, &perturbed_cost)| Edge { perturbed_cost, ..*e })
            .collect();
        Self::assemble(self.directory.clone(), edges, self.perturbation_seed)
    }

    /// Strongly connected components, with the largest one extracted.
    pub fn largest_scc(&self) -> SccReduction {
        let (component_of, count) = strongly_connected_components(self);
        let mut sizes = vec![0usize; count];
        let mut min_index = vec![NodeId::MAX; count];
        for (v, &c) in component_of.iter().enumerate() {
            sizes[c as usize] += 1;
            min_index[c as usize] = min_index[c as usize].min(v as NodeId);
        }
        let largest = (0..count).min_by_key(|&c| (std::cmp::Reverse(sizes[c]), min_index[c]));

        let mut original_index = Vec::new();
        let mut remap = vec![NodeId::MAX; self.node_count()];
        if let Some(c) = largest {
            for (v, &cv) in component_of.iter().enumerate() {
                if cv as usize == c {
                    remap[v] = original_index.len() as NodeId;
                    original_index.push(v as NodeId);
                }
            }
        }
        let directory = NodeDirectory::from_labels(
            original_index
                .iter()
                .map(|&v| self.directory.labels[v as usize].clone()),
            self.directory.label_bits,
        )
        .expect("subset of a valid directory");
        let edges = self
            .edges
            .iter()
            .filter(|e| remap[e.src as usize] != NodeId::MAX && remap[e.dst as usize] != NodeId::MAX)
            .map(|e| Edge {
                src: remap[e.src as usize],
                dst: remap[e.dst as usize],
                ..*e
            })
            .collect::<Vec<_>>();
        // Re-derive placeholder costs for the smaller node count unless the
        // parent graph was already perturbed.
        let largest_graph = if self.perturbation_seed.is_some() {
            Self::assemble(directory, edges, self.perturbation_seed)
        } else {
            Self::from_edges(directory, edges.iter().map(|e| (e.src, e.dst, e.base_cost)))
                .expect("subgraph of a valid graph")
        };
        SccReduction {
            component_of,
            component_sizes: sizes,
            largest: largest_graph,
            original_index,
        }
    }

    /// Canonical snapshot CSV: edges sorted by `(src label, dst label)`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        let labels = &self.directory.labels;
        let mut lines: Vec<_> = self
            .edges
            .iter()
            .map(|e| (&labels[e.src as usize], &labels[e.dst as usize], e.base_cost))
            .collect();
        lines.sort_unstable();
        for (src, dst, cost) in lines {
            writeln!(out, "{src},{dst},{cost}")?;
        }
        Ok(())
    }

    pub fn save_snapshot(&self, path: &Path) -> io::Result<()> {
        let mut w = io::BufWriter::new(File::create(path)?);
        self.write_snapshot(&mut w)?;
        w.flush()
    }
}

fn check_cost_headroom(n: usize, edges: &[Edge], shift: u32) -> Result<(), GraphError> {
    let max_base = edges.iter().map(|e| e.base_cost).max().unwrap_or(0) as Cost;
    let per_edge = (max_base + 1)
        .checked_shl(shift)
        .filter(|v| v >> shift == max_base + 1);
    let ok = per_edge
        .and_then(|v| v.checked_mul(n.max(1) as Cost))
        .is_some_and(|v| v < Cost::MAX / 2);
    if ok {
        Ok(())
    } else {
        Err(GraphError::Capacity(format!(
            "base cost {max_base} too large for exact path sums on {n} nodes"
        )))
    }
}

/// Component id per node; ids are assigned in discovery order of Kosaraju's
/// second pass.
fn strongly_connected_components(g: &Graph) -> (Vec<u32>, usize) {
    let n = g.node_count();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    let mut stack: Vec<(NodeId, usize)> = Vec::new();
    for root in 0..n as NodeId {
        if visited[root as usize] {
            continue;
        }
        visited[root as usize] = true;
        stack.push((root, 0));
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            let out = g.out_edges(u);
            if *next < out.len() {
                let v = out[*next].dst;
                *next += 1;
                if !visited[v as usize] {
                    visited[v as usize] = true;
                    stack.push((v, 0));
                }
            } else {
                order.push(u);
                stack.pop();
            }
        }
    }

    let mut component = vec![u32::MAX; n];
    let mut count = 0u32;
    let mut work = Vec::new();
    for &root in order.iter().rev() {
        if component[root as usize] != u32::MAX {
            continue;
        }
        component[root as usize] = count;
        work.push(root);
        while let Some(v) = work.pop() {
            for e in g.in_edges(v) {
                if component[e.src as usize] == u32::MAX {
                    component[e.src as usize] = count;
                    work.push(e.src);
                }
            }
        }
        count += 1;
    }
    (component, count as usize)
}

#[derive(Debug, Clone)]
pub struct SccReduction {
    pub component_of: Vec<u32>,
    pub component_sizes: Vec<usize>,
    pub largest: Graph,
    /// `original_index[i]` is the index in the input graph of node `i` of `largest`.
    pub original_index: Vec<NodeId>,
}

impl SccReduction {
    pub fn component_count(&self) -> usize {
        self.component_sizes.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SnapshotConfig {
    pub label_bits: u32,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        Self {
            label_bits: DEFAULT_LABEL_BITS,
        }
    }
}

pub fn load_snapshot(path: &Path, config: &SnapshotConfig) -> Result<Graph, GraphError> {
    parse_snapshot(BufReader::new(File::open(path)?), config)
}

/// Parses `src,dst,base_cost` lines. `#` lines and blank lines are skipped.
pub fn parse_snapshot<R: BufRead>(reader: R, config: &SnapshotConfig) -> Result<Graph, GraphError> {
    let mut directory = NodeDirectory::new(config.label_bits)?;
    let mut triples = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| GraphError::Parse {
            line: line_no,
            message,
        };
        let mut fields = trimmed.split(',');
        let (Some(src), Some(dst), Some(cost), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_err(format!("expected 3 fields in {trimmed:?}")));
        };
        let (src, dst, cost) = (src.trim(), dst.trim(), cost.trim());
        if src.is_empty() || dst.is_empty() {
            return Err(parse_err("empty node label".into()));
        }
        if cost.starts_with('-') {
            return Err(GraphError::Validation(format!(
                "line {line_no}: negative cost {cost}"
            )));
        }
        let cost: u64 = cost
            .parse()
            .map_err(|e| parse_err(format!("bad cost {cost:?}: {e}")))?;
        let s = directory.intern(src)?;
        let d = directory.intern(dst)?;
        triples.push((s, d, cost));
    }
    Graph::from_edges(directory, triples)
}

/// `k` stars of `p` leaves each whose centers form a clique. Every edge is
/// bidirectional with unit base cost. Center `i` has index `i * (p + 1)` and
/// is followed by its leaves.
pub fn generate_star_clique(k: usize, p: usize) -> Result<Graph, GraphError> {
    if k < 2 || p < 1 {
        return Err(GraphError::Validation(format!(
            "star-clique needs k >= 2 and p >= 1, got k={k} p={p}"
        )));
    }
    let mut labels = Vec::with_capacity(k * (p + 1));
    for i in 0..k {
        labels.push(format!("c{i}"));
        labels.extend((0..p).map(|j| format!("l{i}_{j}")));
    }
    let directory = NodeDirectory::from_labels(labels, DEFAULT_LABEL_BITS)?;
    let center = |i: usize| (i * (p + 1)) as NodeId;
    let mut triples = Vec::new();
    for i in 0..k {
        for j in 0..k {
            if i != j {
                triples.push((center(i), center(j), 1));
            }
        }
        for leaf in 1..=p {
            let l = center(i) + leaf as NodeId;
            triples.push((center(i), l, 1));
            triples.push((l, center(i), 1));
        }
    }
    Graph::from_edges(directory, triples)
}

/// Directed Erdős–Rényi graph: each ordered pair is an edge with probability
/// `avg_degree / (n - 1)`, base costs uniform in `[1, 1000]`.
pub fn generate_random(n: usize, avg_degree: f64, seed: u64) -> Result<Graph, GraphError> {
    if n < 2 {
        return Err(GraphError::Validation(format!("random graph needs n >= 2, got {n}")));
    }
    if !(avg_degree >= 0.0) {
        return Err(GraphError::Validation(format!("bad average degree {avg_degree}")));
    }
    let p = (avg_degree / (n - 1) as f64).min(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let directory = NodeDirectory::from_labels((0..n).map(|i| format!("n{i}")), DEFAULT_LABEL_BITS)?;
    let mut triples = Vec::new();
    for s in 0..n as NodeId {
        for d in 0..n as NodeId {
            if s != d && rng.gen_bool(p) {
                triples.push((s, d, rng.gen_range(1..=1000)));
            }
        }
    }
    Graph::from_edges(directory, triples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashSet, VecDeque};

    fn parse(text: &str) -> Result<Graph, GraphError> {
        parse_snapshot(text.as_bytes(), &SnapshotConfig::default())
    }

    fn bfs_hops(g: &Graph, s: NodeId) -> Vec<Option<usize>> {
        let mut hops = vec![None; g.node_count()];
        hops[s as usize] = Some(0);
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for e in g.out_edges(u) {
                if hops[e.dst as usize].is_none() {
                    hops[e.dst as usize] = Some(hops[u as usize].unwrap() + 1);
                    q.push_back(e.dst);
                }
            }
        }
        hops
    }

    #[test]
    fn loads_two_edges() {
        let g = parse("a,b,10\nb,a,20\n").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edge(0, 1).unwrap().base_cost, 10);
        assert_eq!(g.edge(1, 0).unwrap().base_cost, 20);
    }

    #[test]
    fn duplicate_edges_keep_minimum() {
        let g = parse("a,b,10\na,b,7\n").unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge(0, 1).unwrap().base_cost, 7);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let g = parse("# header\n\na,b,1\n#b,c,2\n").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse("a,b,1\na,b\n") {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("a,b,x\n"), Err(GraphError::Parse { line: 1, .. })));
    }

    #[test]
    fn negative_cost_is_validation_error() {
        assert!(matches!(parse("a,b,-3\n"), Err(GraphError::Validation(_))));
    }

    #[test]
    fn too_many_nodes_for_label_width() {
        let cfg = SnapshotConfig { label_bits: 1 };
        let err = parse_snapshot("a,b,1\nb,c,1\n".as_bytes(), &cfg).unwrap_err();
        assert!(matches!(err, GraphError::Capacity(_)));
    }

    #[test]
    fn self_loop_rejected() {
        assert!(matches!(parse("a,a,1\n"), Err(GraphError::Validation(_))));
    }

    #[test]
    fn scc_tie_breaks_on_smallest_index() {
        let g = parse("a,b,1\nb,a,1\nc,d,1\nd,c,1\n").unwrap();
        let scc = g.largest_scc();
        assert_eq!(scc.component_count(), 2);
        assert_eq!(scc.largest.directory().labels(), ["a", "b"]);
        assert_eq!(scc.original_index, vec![0, 1]);
        assert_eq!(scc.largest.edge_count(), 2);
    }

    #[test]
    fn one_way_edge_gives_singletons() {
        let g = parse("a,b,1\n").unwrap();
        let scc = g.largest_scc();
        assert_eq!(scc.component_count(), 2);
        assert_eq!(scc.component_sizes, vec![1, 1]);
        assert_eq!(scc.largest.directory().labels(), ["a"]);
    }

    #[test]
    fn empty_graph_scc() {
        let g = parse("").unwrap();
        let scc = g.largest_scc();
        assert_eq!(scc.component_count(), 0);
        assert_eq!(scc.largest.node_count(), 0);
    }

    #[test]
    fn perturbation_of_zero_costs_is_distinct() {
        let g = parse("a,b,0\nb,c,0\nc,a,0\n").unwrap().perturb_weights(7).unwrap();
        let costs: HashSet<_> = g.edges().iter().map(|e| e.perturbed_cost).collect();
        assert_eq!(costs.len(), 3);
        assert!(costs.iter().all(|&c| c > 0 && c < 1 << 20));
    }

    #[test]
    fn perturbation_preserves_base_order() {
        // Two nodes: shift is exactly 20 bits.
        let g = parse("a,b,1\nb,a,2\n").unwrap().perturb_weights(3).unwrap();
        let c1 = g.edge(0, 1).unwrap().perturbed_cost;
        let c2 = g.edge(1, 0).unwrap().perturbed_cost;
        assert!(((1 << 20) + 1..1 << 21).contains(&c1));
        assert!(((1 << 21) + 1..3 << 20).contains(&c2));
        assert!(c1 < c2);
    }

    #[test]
    fn perturbation_is_deterministic() {
        let g = generate_random(30, 3.0, 1).unwrap();
        assert_eq!(g.perturb_weights(11).unwrap(), g.perturb_weights(11).unwrap());
        assert_ne!(g.perturb_weights(11).unwrap(), g.perturb_weights(12).unwrap());
    }

    #[test]
    fn shift_dominates_simple_path_perturbations() {
        for n in [2usize, 3, 5, 100, 2707] {
            let shift = perturbation_shift(n);
            assert!(((n as u128 - 1) << PERTURBATION_BITS) <= 1u128 << shift);
        }
    }

    #[test]
    fn star_clique_counts() {
        let g = generate_star_clique(2, 1).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 6));
        let g = generate_star_clique(3, 2).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (9, 18));
        assert!(generate_star_clique(1, 3).is_err());
        assert!(generate_star_clique(3, 0).is_err());
    }

    #[test]
    fn star_clique_hop_diameter_is_three() {
        for (k, p) in [(2, 1), (3, 2), (4, 5), (6, 3)] {
            let g = generate_star_clique(k, p).unwrap();
            let diam = (0..g.node_count() as NodeId)
                .flat_map(|s| bfs_hops(&g, s))
                .map(|h| h.unwrap())
                .max()
                .unwrap();
            assert_eq!(diam, 3, "k={k} p={p}");
        }
    }

    #[test]
    fn random_generator_is_reproducible() {
        assert_eq!(generate_random(2, 1.0, 5).unwrap(), generate_random(2, 1.0, 5).unwrap());
        assert!(generate_random(0, 1.0, 5).is_err());
        assert!(generate_random(1, 1.0, 5).is_err());
    }

    #[test]
    fn random_generator_edge_count_sanity() {
        for seed in 0..5 {
            let g = generate_random(100, 5.0, seed).unwrap();
            assert!((300..=700).contains(&g.edge_count()), "m={}", g.edge_count());
            assert!(g.edges().iter().all(|e| (1..=1000).contains(&e.base_cost)));
        }
    }

    #[test]
    fn largest_scc_is_strongly_connected() {
        let g = generate_random(120, 2.5, 9).unwrap();
        let scc = g.largest_scc().largest;
        assert!(scc.node_count() > 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = rng.gen_range(0..scc.node_count()) as NodeId;
            let t = rng.gen_range(0..scc.node_count());
            assert!(bfs_hops(&scc, s)[t].is_some());
        }
    }

    #[test]
    fn snapshot_round_trip_is_canonical() {
        let g = generate_random(40, 3.0, 2).unwrap();
        let cfg = SnapshotConfig::default();
        let mut first = Vec::new();
        g.write_snapshot(&mut first).unwrap();
        let once = parse_snapshot(first.as_slice(), &cfg).unwrap();
        let mut second = Vec::new();
        once.write_snapshot(&mut second).unwrap();
        let twice = parse_snapshot(second.as_slice(), &cfg).unwrap();
        let mut third = Vec::new();
        twice.write_snapshot(&mut third).unwrap();
        assert_eq!(first, second);
        assert_eq!(second, third);
        assert_eq!(once.edge_count(), g.edge_count());
        let edges = |g: &Graph, d: &NodeDirectory| -> BTreeSet<(String, String, u64)> {
            g.edges()
                .iter()
                .map(|e| (d.label(e.src).unwrap().to_string(), d.label(e.dst).unwrap().to_string(), e.base_cost))
                .collect()
        };
        assert_eq!(edges(&g, g.directory()), edges(&once, once.directory()));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn perturbed_costs_distinct_and_order_embedding(
                n in 2usize..25, deg in 0.5f64..6.0, gseed in any::<u64>(), pseed in any::<u64>()
            ) {
                let g = generate_random(n, deg, gseed).unwrap().perturb_weights(pseed).unwrap();
                let costs: HashSet<_> = g.edges().iter().map(|e| e.perturbed_cost).collect();
                prop_assert_eq!(costs.len(), g.edge_count());
                for a in g.edges() {
                    for b in g.edges() {
                        if a.base_cost < b.base_cost {
                            prop_assert!(a.perturbed_cost < b.perturbed_cost);
                        }
                    }
                }
            }
        }
    }
}
