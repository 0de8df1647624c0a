use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use rapidgnn::graph::{edge_cut, save_graph, save_partition, synth_powerlaw};
use rapidgnn::harness::{self, RunConfig};
use rapidgnn::plan::HotSize;
use rapidgnn::store::{StoreShard, TcpShardServer};

#[derive(Parser)]
#[command(name = "rapidgnn", version, about = "Distributed mini-batch GNN training with precomputed plans and feature caching")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic power-law graph and save it in RGF1 format.
    Gen {
        #[arg(long, default_value_t = 20_000)]
        nodes: usize,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long, default_value_t = 16)]
        feat_dim: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Partition a graph and save the owner map in RPB1 format.
    Partition {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the shared plan digest as 16 hex digits.
    Plan {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train every (or the selected) worker and write per-epoch metrics.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Repeat training across cache sizes and batch sizes.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Cache sizes to try, e.g. `0,1%,5%,15%`.
        #[arg(long, default_value = "0,1%,5%,15%")]
        n_hot_list: String,
        /// Batch sizes to try; defaults to the configured one.
        #[arg(long)]
        batch_sizes: Option<String>,
    },
    /// Serve one partition's feature shard over TCP until killed.
    Serve {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        part: u32,
        #[arg(long)]
        listen: String,
    },
}

/// Flags shared by the run-shaped subcommands. Each overrides the same key in
/// `--config`.
#[derive(Args)]
struct RunArgs {
    /// File of `key = value` lines using the flag names below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    feat_dim: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    graph_seed: Option<String>,
    #[arg(long)]
    partition_file: Option<String>,
    #[arg(long)]
    partitions: Option<String>,
    /// random|edgecut
    #[arg(long)]
    partitioner: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Per-layer fanouts, e.g. `10,25`.
    #[arg(long)]
    fanout: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden_dim: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// f32|f64
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    init_seed: Option<String>,
    /// Row count or percentage of remote nodes, e.g. `500` or `15%`.
    #[arg(long)]
    n_hot: Option<String>,
    /// global|epoch
    #[arg(long)]
    hot_scope: Option<String>,
    #[arg(long)]
    prefetch_depth: Option<String>,
    /// baseline|rapid
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    latency_ms: Option<String>,
    /// inproc|tcp
    #[arg(long)]
    transport: Option<String>,
    /// Shard server addresses indexed by partition, e.g. `h1:7000,h2:7000`.
    #[arg(long)]
    peers: Option<String>,
    #[arg(long)]
    metrics_out: Option<String>,
    #[arg(long)]
    dump_cache_keys: Option<String>,
    /// Partitions that train, e.g. `0` or `0,1`.
    #[arg(long)]
    workers: Option<String>,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path).with_context(|| format!("reading {}", path.display()))?;
        }
        let flags = [
            ("graph", &self.graph),
            ("nodes", &self.nodes),
            ("m", &self.m),
            ("feat-dim", &self.feat_dim),
            ("classes", &self.classes),
            ("graph-seed", &self.graph_seed),
            ("partition-file", &self.partition_file),
            ("partitions", &self.partitions),
            ("partitioner", &self.partitioner),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("fanout", &self.fanout),
            ("layers", &self.layers),
            ("hidden-dim", &self.hidden_dim),
            ("lr", &self.lr),
            ("precision", &self.precision),
            ("init-seed", &self.init_seed),
            ("n-hot", &self.n_hot),
            ("hot-scope", &self.hot_scope),
            ("prefetch-depth", &self.prefetch_depth),
            ("mode", &self.mode),
            ("latency-ms", &self.latency_ms),
            ("transport", &self.transport),
            ("peers", &self.peers),
            ("metrics-out", &self.metrics_out),
            ("dump-cache-keys", &self.dump_cache_keys),
            ("workers", &self.workers),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Gen { nodes, m, feat_dim, classes, seed, out } => {
            let g = synth_powerlaw(nodes, m, feat_dim, classes, seed)?;
            save_graph(&g, &out)?;
            println!("{} nodes, {} directed edges -> {}", g.num_nodes(), g.num_edges(), out.display());
        }
        Command::Partition { run, out } => {
            let cfg = run.config()?;
            let g = harness::load_or_generate(&cfg)?;
            let book = harness::partition(&cfg, &g)?;
            save_partition(&book, &out)?;
            println!("sizes {:?}, edge cut {} -> {}", book.part_sizes(), edge_cut(&g, &book), out.display());
        }
        Command::Plan { run } => {
            let cfg = run.config()?;
            let g = harness::load_or_generate(&cfg)?;
            println!("{}", harness::shared_plan(&cfg, &g, false)?.digest_hex());
        }
        Command::Train { run } => {
            let report = harness::run(&run.config()?)?;
            for w in &report.workers {
                print_worker(w);
            }
        }
        Command::Sweep { run, n_hot_list, batch_sizes } => {
            let cfg = run.config()?;
            let n_hots = n_hot_list.split(',').map(|s| s.trim().parse::<HotSize>()).collect::<Result<Vec<_>, _>>()?;
            let sizes = match batch_sizes {
                Some(list) => list.split(',').map(|s| s.trim().parse::<usize>()).collect::<Result<Vec<_>, _>>()?,
                None => vec![cfg.batch_size],
            };
            if n_hots.is_empty() || sizes.is_empty() {
                bail!("sweep needs at least one cache size and one batch size");
            }
            for pt in harness::sweep(&cfg, &n_hots, &sizes)? {
                for w in &pt.report.workers {
                    let pulled: u64 = w.metrics.iter().map(|r| r.nodes_pulled).sum();
                    let hits: u64 = w.metrics.iter().map(|r| r.cache_hits).sum();
                    let misses: u64 = w.metrics.iter().map(|r| r.cache_misses).sum();
                    let calls: u64 = w.metrics.iter().map(|r| r.rpc_calls).sum();
                    println!("n_hot={} batch={} worker={} rpc_calls={calls} nodes_pulled={pulled} hits={hits} misses={misses}", pt.n_hot, pt.batch_size, w.part);
                }
            }
        }
        Command::Serve { run, part, listen } => {
            let cfg = run.config()?;
            if part >= cfg.partitions {
                bail!("part {part} >= {} partitions", cfg.partitions);
            }
            let g = harness::load_or_generate(&cfg)?;
            let book = harness::partition(&cfg, &g)?;
            let latency = std::time::Duration::from_secs_f64(cfg.latency_ms / 1e3);
            let shard = Arc::new(StoreShard::from_graph(&g, &book, part).with_latency(latency));
            let server = TcpShardServer::bind(listen.as_str(), shard)?;
            println!("serving partition {part} on {}", server.local_addr());
            server.wait();
        }
    }
    Ok(())
}

fn print_worker(w: &harness::WorkerReport) {
    println!("worker {} plan {}", w.part, w.digest);
    for r in &w.metrics {
        let reuse = r.reuse_ratio.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "  epoch {:>3}  {:>10.1} ms  rpc {:>6}  nodes {:>9}  reuse {reuse:>6}  loss {:.4}  acc {:.4}",
            r.epoch, r.t_e_ms, r.rpc_calls, r.nodes_pulled, r.loss, r.train_acc
        );
    }
    println!("  cache fill: {} rpc, {} nodes", w.fill.rpc_calls, w.fill.nodes_pulled);
    if let Some(p) = &w.metrics_path {
        println!("  metrics -> {}", p.display());
    }
}
