#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use hubpir::apsp::ApspResult;
use hubpir::graph::{Graph, NodeDirectory, NodeId};
use hubpir::hubs::{CoverFamily, HubEntry, HubLabeling, RadiiSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Perturbs with increasing seeds until all shortest paths are unique.
pub fn prepared(g: &Graph) -> (Graph, ApspResult) {
    (0..)
        .find_map(|seed| {
            let p = g.perturb_weights(seed).unwrap();
            ApspResult::compute(&p).ok().map(|a| (p, a))
        })
        .unwrap()
}

/// Textbook Dijkstra over base costs.
pub fn base_distances(g: &Graph, s: NodeId) -> Vec<Option<u64>> {
    let mut dist = vec![None; g.node_count()];
    let mut heap = BinaryHeap::from([Reverse((0u64, s))]);
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u as usize].is_some() {
            continue;
        }
        dist[u as usize] = Some(d);
        for e in g.out_edges(u) {
            if dist[e.dst as usize].is_none() {
                heap.push(Reverse((d + e.base_cost, e.dst)));
            }
        }
    }
    dist
}

/// Dijkstra over perturbed costs; per target, the shortest path from `s` and
/// whether it is the only one.
pub fn perturbed_paths(g: &Graph, s: NodeId) -> Vec<Option<(Vec<NodeId>, bool)>> {
    let n = g.node_count();
    let mut dist: Vec<Option<u128>> = vec![None; n];
    let mut best = vec![u128::MAX; n];
    let mut pred = vec![u32::MAX; n];
    let mut ties = vec![0u32; n];
    best[s as usize] = 0;
    let mut heap = BinaryHeap::from([Reverse((0u128, s))]);
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u as usize].is_some() || d != best[u as usize] {
            continue;
        }
        dist[u as usize] = Some(d);
        for e in g.out_edges(u) {
            let nd = d + e.perturbed_cost;
            let v = e.dst as usize;
            if nd < best[v] {
                best[v] = nd;
                pred[v] = u;
                ties[v] = 1;
                heap.push(Reverse((nd, e.dst)));
            } else if nd == best[v] {
                ties[v] += 1;
            }
        }
    }
    (0..n)
        .map(|t| {
            dist[t]?;
            let mut path = vec![t as NodeId];
            let mut unique = true;
            let mut v = t;
            while v != s as usize {
                unique &= ties[v] == 1;
                v = pred[v] as usize;
                path.push(v as NodeId);
            }
            path.reverse();
            Some((path, unique))
        })
        .collect()
}

/// Sum of base costs along `path`, or `None` if some hop is not an edge.
pub fn path_base_cost(g: &Graph, path: &[NodeId]) -> Option<u64> {
    path.windows(2)
        .map(|w| g.edge(w[0], w[1]).map(|e| e.base_cost))
        .sum()
}

/// Labeling with random hub sets of size at most `h_max` (one node reaches it
/// exactly) and random paths of at most `d` hops. Not tied to any graph.
/// Requires `h_max >= 2`.
pub fn synthetic_labeling(n: usize, h_max: usize, d: u32, label_bits: u32, seed: u64) -> (NodeDirectory, HubLabeling) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = NodeDirectory::from_labels((0..n).map(|i| format!("syn{i:05}")), label_bits).unwrap();
    let path = |a: NodeId, b: NodeId, rng: &mut ChaCha8Rng| {
        if a == b {
            return vec![a];
        }
        let hops = rng.gen_range(1..=d);
        let mut p = vec![a];
        p.extend((1..hops).map(|_| rng.gen_range(0..n as NodeId)));
        p.push(b);
        p
    };
    let mut hubs = Vec::with_capacity(n);
    for u in 0..n as NodeId {
        let size = if u == 0 { h_max } else { rng.gen_range((h_max / 2).max(2)..=h_max) };
        // Node 0 is a hub of everyone, so every pair has a common hub.
        let mut ids = vec![0, u as usize];
        ids.dedup();
        let fixed = ids.len();
        ids.extend(
            rand::seq::index::sample(&mut rng, n, size)
                .into_iter()
                .filter(|&w| w != 0 && w != u as usize)
                .take(size - fixed),
        );
        ids.sort_unstable();
        hubs.push(
            ids.into_iter()
                .map(|w| {
                    let w = w as NodeId;
                    HubEntry {
                        hub: w,
                        out_dist: 0,
                        in_dist: 0,
                        out_base: if w == u { 0 } else { rng.gen_range(1..1 << 40) },
                        in_base: if w == u { 0 } else { rng.gen_range(1..1 << 40) },
                        out_path: path(u, w, &mut rng),
                        in_path: path(w, u, &mut rng),
                    }
                })
                .collect(),
        );
    }
    let labeling = HubLabeling {
        hubs,
        hd_bound: h_max,
        covers: CoverFamily {
            base: vec![],
            cover: BTreeMap::new(),
            adjacent: vec![],
        },
        radii: RadiiSet::for_diameter(d),
        diameter: d,
    };
    (dir, labeling)
}

/// A `hubpir serve` child process, killed on drop.
pub struct ServerProcess {
    child: Child,
    pub addr: String,
}

impl ServerProcess {
    pub fn start(db: &Path) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_hubpir"))
            .args(["serve", "--db"])
            .arg(db)
            .args(["--listen", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected server banner {line:?}"))
            .to_owned();
        Self { child, addr }
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
