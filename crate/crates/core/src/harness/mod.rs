//! Experiment runner: builds the graph, partitions, plan, feature store and
//! caches described by a [`RunConfig`], trains one worker per partition and
//! writes per-epoch metrics.
//!
//! Every worker derives the same plan from the shared seed and trains on its
//! [`BatchShare`] of each epoch's batches. Worker `p` reads rows it owns from
//! its own shard and everything else through the store client.

pub mod config;
pub mod metrics;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{info, warn};

pub use config::{tagged_path, PartitionerKind, Precision, RunConfig, SynthSpec, TransportKind};
pub use metrics::{read_metrics, write_metrics, MetricsRecord, Mode, CSV_HEADER};

use crate::cache::{build_secondary, select_hot, FeatureCache, SecondaryJob};
use crate::error::{Error, Result};
use crate::graph::{
    halo_expand, load_graph, load_partition, partition_edgecut, partition_random, synth_powerlaw, Graph, PartitionBook,
    PartitionId, Split,
};
use crate::plan::{generate_plan, BatchPlan, BatchShare, HotScope, HotSize, PlanParams};
use crate::prefetch::{BundleContext, BundleSource, OnDemand, Prefetcher};
use crate::store::{InProcTransport, StoreClient, StoreShard, TcpShardServer, TcpTransport, TransferAccount, TransferStats, Transport};
use crate::trainer::{train_epoch, EpochInputs, ModelParams, Real, TrainState};

/// Loads or generates the graph named by `cfg`.
pub fn load_or_generate(cfg: &RunConfig) -> Result<Graph> {
    match &cfg.graph {
        Some(path) => load_graph(path),
        None => {
            let s = cfg.synth;
            synth_powerlaw(s.nodes, s.m, s.feat_dim, s.classes, s.seed)
        }
    }
}

/// Loads the partition file or runs the configured partitioner.
pub fn partition(cfg: &RunConfig, g: &Graph) -> Result<PartitionBook> {
    let book = match &cfg.partition_file {
        Some(path) => load_partition(g, path)?,
        None => match cfg.partitioner {
            PartitionerKind::Random => partition_random(g, cfg.partitions, cfg.seed)?,
            PartitionerKind::Edgecut => partition_edgecut(g, cfg.partitions)?,
        },
    };
    if book.num_parts() != cfg.partitions {
        return Err(Error::arg(format!("partition file has {} parts, config says {}", book.num_parts(), cfg.partitions)));
    }
    Ok(if book.has_halo() { book } else { halo_expand(g, book) })
}

/// The plan every worker shares: all training nodes, seeded by `cfg.seed`.
pub fn shared_plan(cfg: &RunConfig, g: &Graph, materialize: bool) -> Result<BatchPlan> {
    let train = g.nodes_in(Split::Train);
    generate_plan(
        g,
        &PlanParams {
            train_nodes: &train,
            fanouts: &cfg.fanouts,
            batch_size: cfg.batch_size,
            epochs: cfg.epochs,
            s0: cfg.seed,
            materialize,
        },
    )
}

/// Shards of every partition plus the transport reaching them.
pub struct StoreCluster {
    pub shards: Vec<Arc<StoreShard>>,
    pub transport: Arc<dyn Transport>,
    servers: Vec<TcpShardServer>,
}

impl StoreCluster {
    pub fn start(cfg: &RunConfig, g: &Graph, book: &PartitionBook) -> Result<Self> {
        let latency = Duration::from_secs_f64(cfg.latency_ms / 1e3);
        let shards: Vec<Arc<StoreShard>> =
            (0..cfg.partitions).map(|p| Arc::new(StoreShard::from_graph(g, book, p).with_latency(latency))).collect();
        let mut servers = Vec::new();
        let transport: Arc<dyn Transport> = match cfg.transport {
            TransportKind::InProc => Arc::new(InProcTransport::new(shards.clone())),
            TransportKind::Tcp if !cfg.peers.is_empty() => Arc::new(TcpTransport::new(cfg.peers.clone())),
            TransportKind::Tcp => {
                for s in &shards {
                    servers.push(TcpShardServer::bind("127.0.0.1:0", Arc::clone(s))?);
                }
                Arc::new(TcpTransport::new(servers.iter().map(TcpShardServer::local_addr).collect()))
            }
        };
        Ok(Self { shards, transport, servers })
    }

    pub fn server_addrs(&self) -> Vec<std::net::SocketAddr> {
        self.servers.iter().map(TcpShardServer::local_addr).collect()
    }
}

/// Outcome of one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerReport {
    pub part: PartitionId,
    pub digest: String,
    pub metrics: Vec<MetricsRecord>,
    /// Traffic spent filling caches, outside the per-epoch columns.
    pub fill: TransferStats,
    /// Final parameters, widened to `f64`.
    pub params: Vec<f64>,
    pub metrics_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub workers: Vec<WorkerReport>,
}

impl RunReport {
    pub fn worker(&self, p: PartitionId) -> Option<&WorkerReport> {
        self.workers.iter().find(|w| w.part == p)
    }

    /// The report with every wall time zeroed.
    pub fn without_time(&self) -> RunReport {
        let mut r = self.clone();
        for w in &mut r.workers {
            w.metrics = w.metrics.iter().map(MetricsRecord::without_time).collect();
        }
        r
    }
}

/// Runs `cfg` end to end.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let g = Arc::new(load_or_generate(cfg)?);
    let book = Arc::new(partition(cfg, &g)?);
    run_on(cfg, g, book)
}

/// Runs `cfg` on an already loaded graph and partition.
pub fn run_on(cfg: &RunConfig, g: Arc<Graph>, book: Arc<PartitionBook>) -> Result<RunReport> {
    cfg.validate()?;
    if book.num_parts() != cfg.partitions {
        return Err(Error::arg(format!("partition book has {} parts, config says {}", book.num_parts(), cfg.partitions)));
    }
    let plan = Arc::new(shared_plan(cfg, &g, true)?);
    info!("plan {} : {} epochs x {} batches", plan.digest_hex(), plan.epochs(), plan.batches_per_epoch());
    let cluster = StoreCluster::start(cfg, &g, &book)?;
    let parts: Vec<PartitionId> = cfg.workers.clone().unwrap_or_else(|| (0..cfg.partitions).collect());

    let results: Vec<Result<WorkerReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = parts
            .iter()
            .map(|&p| {
                let w = Worker {
                    cfg,
                    graph: Arc::clone(&g),
                    book: Arc::clone(&book),
                    plan: Arc::clone(&plan),
                    part: p,
                    local: Arc::clone(&cluster.shards[p as usize]),
                    transport: Arc::clone(&cluster.transport),
                };
                std::thread::Builder::new().name(format!("worker-{p}")).spawn_scoped(scope, move || w.run())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| match h {
                Ok(h) => h.join().unwrap_or_else(|_| Err(Error::Transport("worker panicked".into()))),
                Err(e) => Err(e.into()),
            })
            .collect()
    });
    drop(cluster);
    let workers = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RunReport { workers })
}

struct Worker<'a> {
    cfg: &'a RunConfig,
    graph: Arc<Graph>,
    book: Arc<PartitionBook>,
    plan: Arc<BatchPlan>,
    part: PartitionId,
    local: Arc<StoreShard>,
    transport: Arc<dyn Transport>,
}

impl Worker<'_> {
    fn run(self) -> Result<WorkerReport> {
        match self.cfg.precision {
            Precision::F32 => self.train::<f32>(),
            Precision::F64 => self.train::<f64>(),
        }
    }

    fn dims(&self) -> Vec<usize> {
        let layers = self.cfg.fanouts.len();
        let mut d = vec![self.graph.feat_dim()];
        d.extend(std::iter::repeat_n(self.cfg.hidden_dim, layers - 1));
        d.push(self.graph.num_classes());
        d
    }

    fn train<T: Real>(self) -> Result<WorkerReport> {
        let cfg = self.cfg;
        let p = self.part;
        let share = BatchShare::new(p as usize, cfg.partitions as usize)?;
        let d = self.graph.feat_dim();
        let client = StoreClient::new(Arc::clone(&self.book), d, Arc::clone(&self.transport));
        let fallback = Arc::new(TransferAccount::new(d));
        let fill = Arc::new(TransferAccount::new(d));
        let rapid = cfg.mode == Mode::Rapid;

        let cache = if rapid && cfg.epochs > 0 {
            let hot = select_hot(&self.plan, &self.graph, &self.book, p, share, cfg.hot_scope, 0, cfg.n_hot)?;
            let c = FeatureCache::build_steady(&hot, &client, &fill)?;
            info!("worker {p}: steady cache of {} rows", hot.len());
            Some(Arc::new(c))
        } else {
            None
        };
        let job = SecondaryJob {
            plan: Arc::clone(&self.plan),
            graph: Arc::clone(&self.graph),
            book: Arc::clone(&self.book),
            my_part: p,
            share,
            size: cfg.n_hot,
            client: client.clone(),
            account: Arc::clone(&fill),
        };
        let ctx = Arc::new(BundleContext {
            graph: Arc::clone(&self.graph),
            plan: Arc::clone(&self.plan),
            my_part: p,
            share,
            local: Arc::clone(&self.local),
            client,
            cache: cache.clone(),
            account: Arc::clone(&fallback),
        });

        let params = ModelParams::<T>::init(&self.dims(), cfg.init_seed)?;
        let lr = T::from_f64(cfg.lr).ok_or_else(|| Error::arg("lr not representable"))?;
        let mut state = TrainState::new(params, lr);
        let metrics_path = cfg.worker_metrics_path(p);
        let mut key_dump = String::new();
        let outcome = (0..cfg.epochs).try_for_each(|e| {
            if let (Some(c), true) = (&cache, cfg.dump_cache_keys.is_some()) {
                for v in c.steady().keys() {
                    key_dump.push_str(&format!("{},{v}\n", e + 1));
                }
            }
            let started = Instant::now();
            let secondary = match (rapid, cfg.hot_scope) {
                (true, HotScope::Epoch) => build_secondary(job.clone(), e + 1)?,
                _ => None,
            };
            let mut source: Box<dyn BundleSource> = if rapid {
                Box::new(Prefetcher::start(Arc::clone(&ctx), e, 0, cfg.prefetch_depth)?)
            } else {
                Box::new(OnDemand::new(Arc::clone(&ctx), e))
            };
            let rec = train_epoch(
                &mut state,
                EpochInputs {
                    mode: cfg.mode,
                    labels: self.graph.labels(),
                    source: source.as_mut(),
                    account: &fallback,
                    cache: cache.as_deref(),
                    secondary,
                    started,
                },
            )?;
            info!(
                "worker {p} epoch {}: {:.1} ms, {} nodes pulled, reuse {}, loss {:.4}, acc {:.4}",
                rec.epoch,
                rec.t_e_ms,
                rec.nodes_pulled,
                rec.reuse_ratio.map_or("-".to_string(), |r| format!("{r:.3}")),
                rec.loss,
                rec.train_acc
            );
            Ok::<_, Error>(())
        });
        if let Some(path) = &metrics_path {
            write_metrics(&state.metrics, path)?;
        }
        if let Some(path) = cfg.worker_cache_keys_path(p) {
            std::fs::write(path, format!("epoch,node\n{key_dump}"))?;
        }
        if let Err(e) = outcome {
            warn!("worker {p} stopped after {} epochs: {e}", state.metrics.len());
            return Err(e);
        }
        Ok(WorkerReport {
            part: p,
            digest: self.plan.digest_hex(),
            metrics: state.metrics,
            fill: fill.snapshot(),
            params: state.params.flat().iter().map(|x| x.to_f64().unwrap()).collect(),
            metrics_path,
        })
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub n_hot: HotSize,
    pub batch_size: usize,
    pub report: RunReport,
}

fn label(n_hot: HotSize, batch_size: usize) -> String {
    let hot = match n_hot {
        HotSize::Count(n) => format!("{n}"),
        HotSize::Percent(p) => format!("{p}pct"),
    };
    format!("nhot{hot}.bs{batch_size}")
}

/// Runs `cfg` once per `(n_hot, batch_size)` pair on one graph and partition.
/// With `metrics_out` set, each point writes its own per-worker files and a
/// `<stem>.summary.csv` table is added.
pub fn sweep(cfg: &RunConfig, n_hots: &[HotSize], batch_sizes: &[usize]) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let g = Arc::new(load_or_generate(cfg)?);
    let book = Arc::new(partition(cfg, &g)?);
    let mut points = Vec::new();
    for &bs in batch_sizes {
        for &n_hot in n_hots {
            let mut c = cfg.clone();
            c.n_hot = n_hot;
            c.batch_size = bs;
            c.metrics_out = cfg.metrics_out.as_deref().map(|b| tagged_path(b, &label(n_hot, bs)));
            let report = run_on(&c, Arc::clone(&g), Arc::clone(&book))?;
            points.push(SweepPoint { n_hot, batch_size: bs, report });
        }
    }
    if let Some(base) = &cfg.metrics_out {
        write_sweep_summary(&points, &tagged_path(base, "summary"))?;
    }
    Ok(points)
}

pub const SWEEP_HEADER: &str = "n_hot,batch_size,worker,epochs,mean_t_e_ms,rpc_calls,nodes_pulled,bytes_pulled,cache_hits,cache_misses,reuse_ratio";

pub fn write_sweep_summary(points: &[SweepPoint], path: &Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{SWEEP_HEADER}")?;
    for pt in points {
        for w in &pt.report.workers {
            let m = &w.metrics;
            let sum = |f: fn(&MetricsRecord) -> u64| m.iter().map(f).sum::<u64>();
            let (hits, misses) = (sum(|r| r.cache_hits), sum(|r| r.cache_misses));
            let mean_t = if m.is_empty() { 0.0 } else { m.iter().map(|r| r.t_e_ms).sum::<f64>() / m.len() as f64 };
            let reuse = if hits + misses > 0 { (hits as f64 / (hits + misses) as f64).to_string() } else { String::new() };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                pt.n_hot,
                pt.batch_size,
                w.part,
                m.len(),
                mean_t,
                sum(|r| r.rpc_calls),
                sum(|r| r.nodes_pulled),
                sum(|r| r.bytes_pulled),
                hits,
                misses,
                reuse
            )?;
        }
    }
    out.flush()?;
    Ok(())
}
