//! Run configuration.
//!
//! Values come from three layers, later ones winning: built-in defaults, a
//! `key = value` file (blank lines and `#` comments ignored), then command
//! line flags. Keys match the long flag names without the leading dashes.

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::metrics::Mode;
use crate::plan::{HotScope, HotSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionerKind {
    Random,
    Edgecut,
}

impl FromStr for PartitionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "edgecut" => Ok(Self::Edgecut),
            _ => Err(Error::arg(format!("unknown partitioner {s:?} (expected random|edgecut)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProc,
    Tcp,
}

impl FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(Self::InProc),
            "tcp" => Ok(Self::Tcp),
            _ => Err(Error::arg(format!("unknown transport {s:?} (expected inproc|tcp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            _ => Err(Error::arg(format!("unknown precision {s:?} (expected f32|f64)"))),
        }
    }
}

/// Parameters of the built-in power-law generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub nodes: usize,
    pub m: usize,
    pub feat_dim: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { nodes: 20_000, m: 5, feat_dim: 16, classes: 4, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// RGF1 graph file; the generator is used when absent.
    pub graph: Option<PathBuf>,
    pub synth: SynthSpec,
    /// RPB1 partition file; computed with `partitioner` when absent.
    pub partition_file: Option<PathBuf>,
    pub partitions: u32,
    pub partitioner: PartitionerKind,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub fanouts: Vec<usize>,
    pub hidden_dim: usize,
    pub lr: f64,
    pub precision: Precision,
    pub init_seed: u64,
    pub n_hot: HotSize,
    pub hot_scope: HotScope,
    pub prefetch_depth: usize,
    pub mode: Mode,
    pub latency_ms: f64,
    pub transport: TransportKind,
    /// Shard servers run by other processes, indexed by partition.
    pub peers: Vec<SocketAddr>,
    pub metrics_out: Option<PathBuf>,
    /// Per-worker listing of the steady cache keys used in each epoch.
    pub dump_cache_keys: Option<PathBuf>,
    /// Partitions that train; every partition's shard still serves.
    pub workers: Option<Vec<u32>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            graph: None,
            synth: SynthSpec::default(),
            partition_file: None,
            partitions: 2,
            partitioner: PartitionerKind::Random,
            seed: 0,
            epochs: 5,
            batch_size: 512,
            fanouts: vec![10, 25],
            hidden_dim: 64,
            lr: 0.1,
            precision: Precision::F32,
            init_seed: 7,
            n_hot: HotSize::Percent(15.0),
            hot_scope: HotScope::Epoch,
            prefetch_depth: 3,
            mode: Mode::Rapid,
            latency_ms: 0.0,
            transport: TransportKind::InProc,
            peers: Vec::new(),
            metrics_out: None,
            dump_cache_keys: None,
            workers: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| Error::arg(format!("{key}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

impl RunConfig {
    /// Sets one option by its flag name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().trim_start_matches("--").replace('_', "-").as_str() {
            "graph" => self.graph = Some(PathBuf::from(v)),
            "nodes" => self.synth.nodes = parse(key, v)?,
            "m" => self.synth.m = parse(key, v)?,
            "feat-dim" => self.synth.feat_dim = parse(key, v)?,
            "classes" => self.synth.classes = parse(key, v)?,
            "graph-seed" => self.synth.seed = parse(key, v)?,
            "partition-file" => self.partition_file = Some(PathBuf::from(v)),
            "partitions" => self.partitions = parse(key, v)?,
            "partitioner" => self.partitioner = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch-size" => self.batch_size = parse(key, v)?,
            "fanout" => self.fanouts = parse_list(key, v)?,
            "layers" => {
                let l: usize = parse(key, v)?;
                let last = self.fanouts.last().copied().unwrap_or(10);
                self.fanouts.resize(l, last);
            }
            "hidden-dim" => self.hidden_dim = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "precision" => self.precision = parse(key, v)?,
            "init-seed" => self.init_seed = parse(key, v)?,
            "n-hot" => self.n_hot = parse(key, v)?,
            "hot-scope" => self.hot_scope = parse(key, v)?,
            "prefetch-depth" => self.prefetch_depth = parse(key, v)?,
            "mode" => self.mode = parse(key, v)?,
            "latency-ms" => self.latency_ms = parse(key, v)?,
            "transport" => self.transport = parse(key, v)?,
            "peers" => self.peers = parse_list(key, v)?,
            "metrics-out" => self.metrics_out = Some(PathBuf::from(v)),
            "dump-cache-keys" => self.dump_cache_keys = Some(PathBuf::from(v)),
            "workers" => self.workers = Some(parse_list(key, v)?),
            other => return Err(Error::arg(format!("unknown option {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("config line {}: expected key = value", n + 1)))?;
            self.set(k, v).map_err(|e| Error::arg(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.partitions == 0 {
            return Err(Error::arg("partitions must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch-size must be at least 1"));
        }
        if self.fanouts.is_empty() || self.fanouts.contains(&0) {
            return Err(Error::arg("fanout needs at least one positive entry"));
        }
        if self.prefetch_depth == 0 {
            return Err(Error::arg("prefetch-depth must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::arg("hidden-dim must be at least 1"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::arg("lr must be finite and non-negative"));
        }
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            return Err(Error::arg("latency-ms must be finite and non-negative"));
        }
        if let HotSize::Percent(p) = self.n_hot {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::arg("n-hot percentage must lie in [0, 100]"));
            }
        }
        for p in [&self.graph, &self.partition_file].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::arg(format!("{} does not exist", p.display())));
            }
        }
        if !self.peers.is_empty() && self.peers.len() != self.partitions as usize {
            return Err(Error::arg(format!("{} peers for {} partitions", self.peers.len(), self.partitions)));
        }
        if !self.peers.is_empty() && self.transport != TransportKind::Tcp {
            return Err(Error::arg("peers require --transport tcp"));
        }
        if let Some(ws) = &self.workers {
            if let Some(w) = ws.iter().find(|&&w| w >= self.partitions) {
                return Err(Error::arg(format!("worker {w} >= {} partitions", self.partitions)));
            }
        }
        Ok(())
    }

    /// Metrics path of worker `p`: `<stem>.w<p>.<ext>` next to `metrics_out`.
    pub fn worker_metrics_path(&self, p: u32) -> Option<PathBuf> {
        self.metrics_out.as_deref().map(|b| tagged_path(b, &format!("w{p}")))
    }

    pub fn worker_cache_keys_path(&self, p: u32) -> Option<PathBuf> {
        self.dump_cache_keys.as_deref().map(|b| tagged_path(b, &format!("w{p}")))
    }
}

/// `dir/stem.ext` becomes `dir/stem.<tag>.ext`.
pub fn tagged_path(base: &Path, tag: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    base.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.prefetch_depth, 3);
        assert_eq!(c.hot_scope, HotScope::Epoch);
    }

    #[test]
    fn file_then_flags() {
        let mut c = RunConfig::default();
        c.apply_text("# run\nepochs = 9\nfanout = 5,7\nn-hot = 1%\n\nmode=baseline # trailing\n").unwrap();
        assert_eq!((c.epochs, c.fanouts.clone(), c.mode), (9, vec![5, 7], Mode::Baseline));
        assert_eq!(c.n_hot, HotSize::Percent(1.0));
        c.set("--epochs", "2").unwrap();
        c.set("n_hot", "40").unwrap();
        assert_eq!(c.epochs, 2);
        assert_eq!(c.n_hot, HotSize::Count(40));
        assert_eq!(c.batch_size, 512);
    }

    #[test]
    fn bad_lines() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("epochs 3").is_err());
        assert!(c.apply_text("colour = red").is_err());
        assert!(c.apply_text("epochs = many").is_err());
        assert!(c.set("transport", "udp").is_err());
    }

    #[test]
    fn layers_extend_fanouts() {
        let mut c = RunConfig::default();
        c.set("layers", "3").unwrap();
        assert_eq!(c.fanouts, vec![10, 25, 25]);
        c.set("layers", "1").unwrap();
        assert_eq!(c.fanouts, vec![10]);
    }

    #[test]
    fn validation() {
        let bad = |k: &str, v: &str| {
            let mut c = RunConfig::default();
            c.set(k, v).unwrap();
            c.validate().is_err()
        };
        assert!(bad("prefetch-depth", "0"));
        assert!(bad("partitions", "0"));
        assert!(bad("fanout", "3,0"));
        assert!(bad("graph", "/definitely/not/here.rgf"));
        assert!(bad("workers", "2"));
        assert!(bad("peers", "127.0.0.1:1"));
        assert!(bad("lr", "NaN"));
    }

    #[test]
    fn worker_paths() {
        let mut c = RunConfig::default();
        assert_eq!(c.worker_metrics_path(0), None);
        c.set("metrics-out", "out/run.csv").unwrap();
        assert_eq!(c.worker_metrics_path(1).unwrap(), PathBuf::from("out/run.w1.csv"));
    }
}
