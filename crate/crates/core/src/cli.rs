//! Operator commands: `gen`, `build`, `stats`, `serve`, `publish`, `query`, `bench`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

use crate::apsp::{ApspError, ApspResult};
use crate::graph::{self, ceil_log2, Graph, SnapshotConfig};
use crate::hubdb::{HubDatabase, MAGIC};
use crate::hubs::{self, HubLabeling};
use crate::pir::PirMode;
use crate::transport::{self, ClientSession, Server, Traffic};

/// Reseeds allowed after the first perturbation yields a shortest-path tie.
pub const MAX_RESEEDS: u64 = 5;

#[derive(Debug, Parser)]
#[command(name = "hubpir", version, about = "Private shortest-path discovery over hub labelings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic snapshot CSV.
    Gen(GenArgs),
    /// Build a hub database and statistics from a snapshot.
    Build(BuildArgs),
    /// Describe a database or a snapshot.
    Stats(StatsArgs),
    /// Serve a database to PIR clients.
    Serve(ServeArgs),
    /// Distribute a database to two running servers.
    Publish(PublishArgs),
    /// Privately query a route.
    Query(QueryArgs),
    /// Measure query latency and traffic.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Family {
    StarClique,
    Random,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub family: Family,
    /// Star count (star-clique).
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Leaves per star (star-clique).
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    /// Node count (random).
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Expected out-degree (random).
    #[arg(long, default_value_t = 4.0)]
    pub degree: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("base").required(true).args(["ell", "optimize"])))]
pub struct BuildArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label width λ; defaults to the smallest width that fits.
    #[arg(long)]
    pub label_bits: Option<u32>,
    /// Fixed base size.
    #[arg(long)]
    pub ell: Option<usize>,
    /// Search the base size instead of fixing it.
    #[arg(long)]
    pub optimize: bool,
    /// Labelings evaluated by the search.
    #[arg(long, default_value_t = 12, requires = "optimize")]
    pub budget: usize,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Directory for the CSV tables.
    #[arg(long)]
    pub stats_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// A database file or a snapshot CSV.
    pub path: PathBuf,
    /// For snapshots: also search the base size with this budget.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub listen: String,
    /// Version counter of the initial database.
    #[arg(long, default_value_t = 1)]
    pub version: u64,
}

#[derive(Debug, Args)]
pub struct PublishArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, num_args = 2, required = true)]
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Column,
    Balanced,
}

impl From<ModeArg> for PirMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Column => PirMode::ColumnAligned,
            ModeArg::Balanced => PirMode::Balanced,
        }
    }
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, num_args = 2, required = true)]
    pub servers: Vec<String>,
    pub source: String,
    pub target: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Column)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("where").required(true).args(["servers", "db"])))]
pub struct BenchArgs {
    #[arg(long, num_args = 2)]
    pub servers: Vec<String>,
    /// Serve this database on two in-process servers.
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Column)]
    pub mode: ModeArg,
}

pub fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, &mut out),
        Command::Build(a) => {
            let report = cmd_build(&BuildConfig::try_from(&a)?)?;
            write!(out, "{}", report.summary.describe())?;
            Ok(())
        }
        Command::Stats(a) => cmd_stats(&a, &mut out),
        Command::Serve(a) => cmd_serve(&a, &mut out),
        Command::Publish(a) => {
            let db = HubDatabase::load(&a.db).context("load")?;
            let receipt = transport::publish(&db, [&a.targets[0], &a.targets[1]]).context("publish")?;
            writeln!(
                out,
                "published version={} digest={}",
                receipt.version.counter,
                hex::encode(receipt.version.digest)
            )?;
            Ok(())
        }
        Command::Query(a) => cmd_query(&a, &mut out),
        Command::Bench(a) => cmd_bench(&a, &mut out),
    }
}

pub fn cmd_gen(a: &GenArgs, out: &mut impl Write) -> Result<()> {
    let g = match a.family {
        Family::StarClique => graph::generate_star_clique(a.k, a.p),
        Family::Random => graph::generate_random(a.n, a.degree, a.seed),
    }
    .context("gen")?;
    match &a.out {
        Some(path) => g.save_snapshot(path).with_context(|| format!("gen: writing {}", path.display()))?,
        None => g.write_snapshot(out)?,
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseChoice {
    Fixed(usize),
    Optimize { budget: usize },
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub input: PathBuf,
    pub seed: u64,
    pub label_bits: Option<u32>,
    pub base: BaseChoice,
    pub output: PathBuf,
    pub stats_dir: Option<PathBuf>,
}

impl TryFrom<&BuildArgs> for BuildConfig {
    type Error = anyhow::Error;

    fn try_from(a: &BuildArgs) -> Result<Self> {
        let base = match (a.ell, a.optimize) {
            (Some(ell), false) => BaseChoice::Fixed(ell),
            (None, true) => BaseChoice::Optimize { budget: a.budget },
            _ => bail!("exactly one of --ell and --optimize is required"),
        };
        Ok(Self {
            input: a.input.clone(),
            seed: a.seed,
            label_bits: a.label_bits,
            base,
            output: a.out.clone(),
            stats_dir: a.stats_dir.clone(),
        })
    }
}

/// Per-stage wall times.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageTimes {
    pub load: Duration,
    pub scc: Duration,
    pub perturb: Duration,
    pub apsp: Duration,
    pub covers: Duration,
    pub encode: Duration,
    pub write: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.load + self.scc + self.perturb + self.apsp + self.covers + self.encode + self.write
    }
}

/// One row in the layout of the snapshot evaluation table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub nodes: usize,
    pub edges: usize,
    pub scc_count: usize,
    pub scc_nodes: usize,
    pub scc_edges: usize,
    pub diameter: u32,
    pub baseline_hd_bound: usize,
    pub heuristic_hd_bound: usize,
    pub base_size: usize,
    pub max_hub_set_size: usize,
    pub max_hub_set_size_without_self: usize,
    pub db_bytes: usize,
    pub label_bits: u32,
    pub perturbation_seed: u64,
    pub times: StageTimes,
}

pub const SUMMARY_COLUMNS: &str = "nodes,edges,scc_count,scc_nodes,scc_edges,diameter,baseline_hd_bound,\
heuristic_hd_bound,base_size,max_hub_set_size,max_hub_set_size_without_self,db_bytes,label_bits,\
perturbation_seed,load_ms,scc_ms,perturb_ms,apsp_ms,covers_ms,encode_ms,write_ms,total_ms";

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

impl Summary {
    pub fn csv_row(&self) -> String {
        let t = &self.times;
        [
            self.nodes.to_string(),
            self.edges.to_string(),
            self.scc_count.to_string(),
            self.scc_nodes.to_string(),
            self.scc_edges.to_string(),
            self.diameter.to_string(),
            self.baseline_hd_bound.to_string(),
            self.heuristic_hd_bound.to_string(),
            self.base_size.to_string(),
            self.max_hub_set_size.to_string(),
            self.max_hub_set_size_without_self.to_string(),
            self.db_bytes.to_string(),
            self.label_bits.to_string(),
            self.perturbation_seed.to_string(),
            ms(t.load),
            ms(t.scc),
            ms(t.perturb),
            ms(t.apsp),
            ms(t.covers),
            ms(t.encode),
            ms(t.write),
            ms(t.total()),
        ]
        .join(",")
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "|V|={} |E|={} scc={}", self.nodes, self.edges, self.scc_count);
        let _ = writeln!(
            s,
            "largest scc |V|={} |E|={} D={}",
            self.scc_nodes, self.scc_edges, self.diameter
        );
        let _ = writeln!(
            s,
            "hd bound baseline={} heuristic={} base size={}",
            self.baseline_hd_bound, self.heuristic_hd_bound, self.base_size
        );
        let _ = writeln!(
            s,
            "max hub set={} (without self {}) db bytes={} λ={}",
            self.max_hub_set_size, self.max_hub_set_size_without_self, self.db_bytes, self.label_bits
        );
        let t = &self.times;
        let _ = writeln!(
            s,
            "time ms: apsp={} covers={} encode={} total={}",
            ms(t.apsp),
            ms(t.covers),
            ms(t.encode),
            ms(t.total())
        );
        s
    }
}

/// Result of a build before anything is written.
#[derive(Debug, Clone)]
pub struct BuildArtifacts {
    pub db: HubDatabase,
    pub labeling: HubLabeling,
    pub summary: Summary,
    /// `(degree, count)` over the largest component, ascending degree.
    pub degree_distribution: Vec<(usize, usize)>,
    /// `(ell, hd_bound)` in evaluation order.
    pub optimizer_trace: Vec<(usize, usize)>,
}

/// Perturbed largest-component graph whose shortest paths are unique.
pub struct PreparedGraph {
    pub graph: Graph,
    pub apsp: ApspResult,
    pub seed: u64,
}

/// Perturbs with `seed, seed + 1, ...` until every shortest path is unique.
pub fn prepare(g: &Graph, seed: u64, times: &mut StageTimes) -> Result<PreparedGraph> {
    for attempt in 0..=MAX_RESEEDS {
        let s = seed.wrapping_add(attempt);
        let started = Instant::now();
        let perturbed = g.perturb_weights(s).context("perturb")?;
        times.perturb += started.elapsed();
        let started = Instant::now();
        let result = ApspResult::compute(&perturbed);
        times.apsp += started.elapsed();
        match result {
            Ok(apsp) => {
                return Ok(PreparedGraph {
                    graph: perturbed,
                    apsp,
                    seed: s,
                })
            }
            Err(e @ ApspError::PathTie { .. }) => log::warn!("seed {s}: {e}; reseeding"),
            Err(e) => return Err(e).context("apsp"),
        }
    }
    bail!("perturb: shortest paths still tied after {MAX_RESEEDS} reseeds")
}

fn degree_distribution(g: &Graph) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for v in 0..g.node_count() as graph::NodeId {
        *counts.entry(g.degree(v)).or_insert(0) += 1;
    }
    counts.into_iter().collect()
}

/// Smallest λ whose all-ones value stays free for padding.
pub fn default_label_bits(n: usize) -> u32 {
    ceil_log2(n as u64 + 1).max(1)
}

/// Runs the pipeline up to the encoded database. `input` is the loaded
/// snapshot; `load` is how long loading took.
pub fn build_artifacts(input: &Graph, load: Duration, cfg: &BuildConfig) -> Result<BuildArtifacts> {
    let mut times = StageTimes {
        load,
        ..StageTimes::default()
    };
    let started = Instant::now();
    let reduction = input.largest_scc();
    times.scc = started.elapsed();
    let scc = reduction.largest;
    if scc.node_count() < 2 {
        bail!("largest_scc: largest component has {} nodes", scc.node_count());
    }
    let prepared = prepare(&scc, cfg.seed, &mut times)?;
    let (g, apsp) = (&prepared.graph, &prepared.apsp);

    let started = Instant::now();
    let (labeling, trace, baseline) = match cfg.base {
        BaseChoice::Fixed(ell) => {
            let labeling = hubs::compute_hub_labeling(g, apsp, ell).context("covers")?;
            let baseline = if ell == 0 {
                labeling.hd_bound
            } else {
                hubs::hd_bound(g, apsp, 0).context("covers")?
            };
            let trace = vec![(labeling.base_size(), labeling.hd_bound)];
            (labeling, trace, baseline)
        }
        BaseChoice::Optimize { budget } => {
            let search = hubs::optimize_base_size(g, apsp, budget).context("covers")?;
            let baseline = search.trace.iter().find(|(l, _)| *l == 0).map(|&(_, b)| b);
            let baseline = match baseline {
                Some(b) => b,
                None => hubs::hd_bound(g, apsp, 0).context("covers")?,
            };
            (search.labeling, search.trace, baseline)
        }
    };
    times.covers = started.elapsed();

    let label_bits = cfg.label_bits.unwrap_or_else(|| default_label_bits(g.node_count()));
    let started = Instant::now();
    let db = HubDatabase::encode(&labeling, g.directory(), label_bits).context("encode")?;
    times.encode = started.elapsed();

    let summary = Summary {
        nodes: input.node_count(),
        edges: input.edge_count(),
        scc_count: reduction.component_sizes.len(),
        scc_nodes: g.node_count(),
        scc_edges: g.edge_count(),
        diameter: apsp.hop_diameter(),
        baseline_hd_bound: baseline,
        heuristic_hd_bound: labeling.hd_bound,
        base_size: labeling.base_size(),
        max_hub_set_size: labeling.max_hub_size(),
        max_hub_set_size_without_self: labeling.max_hub_size_without_self(),
        db_bytes: db.encoded_len(),
        label_bits,
        perturbation_seed: prepared.seed,
        times,
    };
    Ok(BuildArtifacts {
        db,
        summary,
        degree_distribution: degree_distribution(g),
        optimizer_trace: trace,
        labeling,
    })
}

/// Writes the four CSV tables into `dir`.
pub fn write_stats(dir: &Path, a: &BuildArtifacts) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut s = String::from("degree,count\n");
    for (d, c) in &a.degree_distribution {
        let _ = writeln!(s, "{d},{c}");
    }
    fs::write(dir.join("degree_distribution.csv"), s)?;

    let mut s = String::from("ell,hd_bound\n");
    for (l, b) in &a.optimizer_trace {
        let _ = writeln!(s, "{l},{b}");
    }
    fs::write(dir.join("optimizer_trace.csv"), s)?;

    let mut s = String::from("node_index,hub_set_size\n");
    for (u, h) in a.labeling.hub_set_sizes().iter().enumerate() {
        let _ = writeln!(s, "{u},{h}");
    }
    fs::write(dir.join("hub_sizes.csv"), s)?;

    fs::write(
        dir.join("summary.csv"),
        format!("{SUMMARY_COLUMNS}\n{}\n", a.summary.csv_row()),
    )
}

/// Load, build, write the database and stats.
pub fn cmd_build(cfg: &BuildConfig) -> Result<BuildArtifacts> {
    let started = Instant::now();
    let input = graph::load_snapshot(&cfg.input, &SnapshotConfig::default())
        .with_context(|| format!("load: {}", cfg.input.display()))?;
    let load = started.elapsed();
    let mut artifacts = build_artifacts(&input, load, cfg)?;
    let started = Instant::now();
    artifacts
        .db
        .save(&cfg.output)
        .with_context(|| format!("write: {}", cfg.output.display()))?;
    artifacts.summary.times.write = started.elapsed();
    if let Some(dir) = &cfg.stats_dir {
        write_stats(dir, &artifacts).with_context(|| format!("write: stats into {}", dir.display()))?;
    }
    Ok(artifacts)
}

fn is_database(path: &Path) -> Result<bool> {
    let mut head = [0u8; 4];
    let mut f = fs::File::open(path).with_context(|| format!("stats: {}", path.display()))?;
    Ok(io::Read::read(&mut f, &mut head)? == 4 && &head == MAGIC)
}

pub fn cmd_stats(a: &StatsArgs, out: &mut impl Write) -> Result<()> {
    if is_database(&a.path)? {
        let db = HubDatabase::load(&a.path).context("stats: load")?;
        let st = db.stats();
        let h = db.header();
        writeln!(out, "records N={} record bits L={}", st.records, st.record_bits)?;
        writeln!(out, "label bits λ={} h_max={} d_max={}", h.label_bits, h.h_max, h.d_max)?;
        writeln!(out, "total bytes={}", st.total_bytes)?;
        writeln!(out, "digest={}", hex::encode(db.digest()))?;
        writeln!(out, "hub_set_size,records")?;
        for (size, count) in &st.slot_histogram {
            writeln!(out, "{size},{count}")?;
        }
        return Ok(());
    }
    let base = match a.budget {
        Some(budget) => BaseChoice::Optimize { budget },
        None => BaseChoice::Fixed(0),
    };
    let cfg = BuildConfig {
        input: a.path.clone(),
        seed: a.seed,
        label_bits: None,
        base,
        output: PathBuf::new(),
        stats_dir: None,
    };
    let started = Instant::now();
    let input = graph::load_snapshot(&cfg.input, &SnapshotConfig::default()).context("load")?;
    let artifacts = build_artifacts(&input, started.elapsed(), &cfg)?;
    writeln!(out, "{SUMMARY_COLUMNS}")?;
    writeln!(out, "{}", artifacts.summary.csv_row())?;
    Ok(())
}

pub fn cmd_serve(a: &ServeArgs, out: &mut impl Write) -> Result<()> {
    let server = Server::open(&a.db, a.listen.as_str(), a.version).context("serve")?;
    writeln!(out, "listening on {}", server.local_addr()?)?;
    out.flush()?;
    server.run().context("serve")?;
    Ok(())
}

fn format_route(labels: &[String], cost: u64) -> String {
    format!("[{}] cost={cost}", labels.join(","))
}

fn format_traffic(k: usize, t: Traffic) -> String {
    format!("server{} sent={} received={}", k + 1, t.sent, t.received)
}

pub fn cmd_query(a: &QueryArgs, out: &mut impl Write) -> Result<()> {
    let mut session = ClientSession::connect(a.servers[0].as_str(), a.servers[1].as_str()).context("query: connect")?;
    let mut rng = ChaCha20Rng::from_entropy();
    let route = session
        .route(&a.source, &a.target, a.mode.into(), &mut rng)
        .context("query")?;
    writeln!(out, "{}", format_route(&route.labels, route.cost))?;
    for (k, t) in session.traffic().into_iter().enumerate() {
        writeln!(out, "{}", format_traffic(k, t))?;
    }
    Ok(())
}

/// Latency and traffic from a benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub queries: usize,
    pub mean: Duration,
    pub p95: Duration,
    /// Bytes exchanged with each server, per route query (two retrievals).
    pub bytes_per_query: [f64; 2],
    /// `(N + L) / 8` per retrieval, both directions, payload only.
    pub payload_per_retrieval: f64,
}

pub fn bench(session: &mut ClientSession, queries: usize, seed: u64, mode: PirMode) -> Result<BenchReport> {
    if queries == 0 {
        bail!("bench: at least one query is required");
    }
    let labels = session.directory.labels().to_vec();
    let mut pick = ChaCha8Rng::seed_from_u64(seed);
    let mut rng = ChaCha20Rng::from_entropy();
    let mut lat = Vec::with_capacity(queries);
    let before = session.traffic();
    for _ in 0..queries {
        let s = &labels[pick.gen_range(0..labels.len())];
        let t = &labels[pick.gen_range(0..labels.len())];
        let started = Instant::now();
        session.route(s, t, mode, &mut rng).context("bench")?;
        lat.push(started.elapsed());
    }
    let after = session.traffic();
    lat.sort_unstable();
    let mean = lat.iter().sum::<Duration>() / queries as u32;
    let p95 = lat[((queries as f64 * 0.95).ceil() as usize).clamp(1, queries) - 1];
    let per = |k: usize| {
        let moved = after[k].sent + after[k].received - before[k].sent - before[k].received;
        moved as f64 / queries as f64
    };
    let h = session.header();
    Ok(BenchReport {
        queries,
        mean,
        p95,
        bytes_per_query: [per(0), per(1)],
        payload_per_retrieval: (h.records as f64 + h.record_bits as f64) / 8.0,
    })
}

pub fn cmd_bench(a: &BenchArgs, out: &mut impl Write) -> Result<()> {
    let mut handles = Vec::new();
    let addrs: Vec<String> = match &a.db {
        Some(path) => {
            let db = HubDatabase::load(path).context("bench: load")?;
            for _ in 0..2 {
                handles.push(Server::bind("127.0.0.1:0", &db, 1)?.spawn()?);
            }
            handles.iter().map(|h| h.addr().to_string()).collect()
        }
        None => a.servers.clone(),
    };
    let mut session = ClientSession::connect(addrs[0].as_str(), addrs[1].as_str()).context("bench: connect")?;
    let h = session.header();
    let r = bench(&mut session, a.queries, a.seed, a.mode.into())?;
    writeln!(out, "N={} L={} queries={}", h.records, h.record_bits, r.queries)?;
    writeln!(
        out,
        "latency mean={:.3}ms p95={:.3}ms",
        r.mean.as_secs_f64() * 1e3,
        r.p95.as_secs_f64() * 1e3
    )?;
    writeln!(
        out,
        "payload per retrieval per server=(N+L)/8={:.1} bytes",
        r.payload_per_retrieval
    )?;
    for (k, b) in r.bytes_per_query.iter().enumerate() {
        writeln!(
            out,
            "server{} bytes per query={:.1} per retrieval={:.1}",
            k + 1,
            b,
            b / 2.0
        )?;
    }
    Ok(())
}
