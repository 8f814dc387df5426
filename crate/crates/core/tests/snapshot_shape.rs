//! Inputs sized like a real channel-graph snapshot: 6376 nodes, 39993
//! directed edges, 3650 strongly connected components, the largest holding
//! 2707 nodes and 31350 edges.

use std::fmt::Write as _;
use std::io::Cursor;
use std::time::{Duration, Instant};

use hubpir::cli::{build_artifacts, BaseChoice, BuildConfig};
use hubpir::graph::{parse_snapshot, Graph, SnapshotConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORE: usize = 2707;
const CORE_EDGES: usize = 31350;
const PAIRS: usize = 20;
const LONERS: usize = 3629;

/// Core: a Hamiltonian cycle plus random chords. Twenty 2-cycles. Every
/// other node only points into the core, so it is its own component.
fn snapshot_csv() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1301);
    let mut core = std::collections::BTreeSet::new();
    for i in 0..CORE {
        core.insert((i, (i + 1) % CORE));
    }
    while core.len() < CORE_EDGES {
        let (a, b) = (rng.gen_range(0..CORE), rng.gen_range(0..CORE));
        if a != b {
            core.insert((a, b));
        }
    }
    let mut csv = String::new();
    for (a, b) in core {
        writeln!(csv, "core{a},core{b},{}", rng.gen_range(1..=1000)).unwrap();
    }
    for i in 0..PAIRS {
        writeln!(csv, "pair{i}a,pair{i}b,5").unwrap();
        writeln!(csv, "pair{i}b,pair{i}a,5").unwrap();
    }
    let tail = 39993 - CORE_EDGES - 2 * PAIRS;
    for e in 0..tail {
        let j = e % LONERS;
        let hop = 1000 * (e / LONERS);
        writeln!(csv, "lone{j},core{},1", (j + hop) % CORE).unwrap();
    }
    csv
}

fn load() -> Graph {
    parse_snapshot(Cursor::new(snapshot_csv()), &SnapshotConfig::default()).unwrap()
}

#[test]
fn snapshot_counts_and_largest_component() {
    let g = load();
    assert_eq!((g.node_count(), g.edge_count()), (6376, 39993));
    let r = g.largest_scc();
    assert_eq!(r.component_count(), 3650);
    assert_eq!((r.largest.node_count(), r.largest.edge_count()), (2707, 31350));
    assert_eq!(r.component_sizes.iter().sum::<usize>(), 6376);
    assert!(r.largest.directory().labels().iter().all(|l| l.starts_with("core")));
}

/// Full build of the 2707-node component; takes about a minute.
#[test]
#[ignore]
fn full_scale_build() {
    let g = load();
    let cfg = BuildConfig {
        input: "snapshot.csv".into(),
        seed: 1,
        label_bits: None,
        base: BaseChoice::Optimize { budget: 6 },
        output: std::env::temp_dir().join("full_scale.db"),
        stats_dir: None,
    };
    let started = Instant::now();
    let a = build_artifacts(&g, Duration::ZERO, &cfg).unwrap();
    eprintln!("{}", a.summary.describe());
    eprintln!("wall {:?}", started.elapsed());
    assert_eq!(a.db.record_count(), CORE);
    assert!(a.summary.heuristic_hd_bound <= a.summary.baseline_hd_bound);
}
