//! Offline precomputation: the full batch schedule, remote access counts and
//! hot-set selection.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, PartitionBook, PartitionId};
use crate::sampler::{self, ComputationBlock, SeedSchedule};

/// Seeds and sampling seed of one batch; enough to re-derive its block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchDescriptor {
    pub seeds: Vec<NodeId>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone)]
pub struct BatchPlan {
    schedule: SeedSchedule,
    fanouts: Vec<usize>,
    batch_size: usize,
    batches: Vec<Vec<BatchDescriptor>>,
    materialized: Option<Vec<Vec<Arc<ComputationBlock>>>>,
    digest: u64,
}

#[derive(Debug, Clone)]
pub struct PlanParams<'a> {
    pub train_nodes: &'a [NodeId],
    pub fanouts: &'a [usize],
    pub batch_size: usize,
    pub epochs: usize,
    pub s0: u64,
    /// Keep every block in memory instead of re-deriving on access.
    pub materialize: bool,
}

/// Precomputes every epoch's batches and blocks and hashes their input sets.
pub fn generate_plan(g: &Graph, params: &PlanParams<'_>) -> Result<BatchPlan> {
    if params.batch_size == 0 {
        return Err(Error::arg("batch_size must be at least 1"));
    }
    if params.train_nodes.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    if params.fanouts.is_empty() {
        return Err(Error::arg("fanouts must name at least one layer"));
    }
    let per_epoch = sampler::num_batches(params.train_nodes.len(), params.batch_size);
    let schedule = SeedSchedule::new(params.s0, params.epochs, per_epoch);
    let mut digest = Digest::new();
    let mut batches = Vec::with_capacity(params.epochs);
    let mut materialized = params.materialize.then(|| Vec::with_capacity(params.epochs));

    for e in 0..params.epochs {
        let seeds = sampler::epoch_batches(params.train_nodes, params.batch_size, &schedule, e)?;
        let mut descs = Vec::with_capacity(seeds.len());
        let mut blocks = Vec::new();
        for (i, seeds) in seeds.into_iter().enumerate() {
            let desc = BatchDescriptor { rng_seed: schedule.seed_for(e, i)?, seeds };
            let block = derive_block(g, &desc, params.fanouts, e, i)?;
            digest.batch(e, i, block.input_nodes());
            if materialized.is_some() {
                blocks.push(Arc::new(block));
            }
            descs.push(desc);
        }
        if let Some(m) = materialized.as_mut() {
            m.push(blocks);
        }
        batches.push(descs);
    }

    Ok(BatchPlan {
        schedule,
        fanouts: params.fanouts.to_vec(),
        batch_size: params.batch_size,
        batches,
        materialized,
        digest: digest.finish(),
    })
}

fn derive_block(g: &Graph, desc: &BatchDescriptor, fanouts: &[usize], epoch: usize, batch: usize) -> Result<ComputationBlock> {
    let mut block = sampler::sample_block(g, &desc.seeds, fanouts, desc.rng_seed)?;
    block.epoch = epoch;
    block.batch = batch;
    Ok(block)
}

impl BatchPlan {
    pub fn schedule(&self) -> &SeedSchedule {
        &self.schedule
    }

    pub fn fanouts(&self) -> &[usize] {
        &self.fanouts
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn epochs(&self) -> usize {
        self.batches.len()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.schedule.batches_per_epoch
    }

    pub fn descriptor(&self, epoch: usize, batch: usize) -> &BatchDescriptor {
        &self.batches[epoch][batch]
    }

    pub fn is_materialized(&self) -> bool {
        self.materialized.is_some()
    }

    /// 64-bit FNV-1a over every `(epoch, batch, |N|, N)` in schedule order.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn digest_hex(&self) -> String {
        format!("{:016x}", self.digest)
    }

    /// The block of `(epoch, batch)`, re-derived from its descriptor unless
    /// the plan is materialized.
    pub fn block(&self, g: &Graph, epoch: usize, batch: usize) -> Result<Arc<ComputationBlock>> {
        if epoch >= self.epochs() || batch >= self.batches_per_epoch() {
            return Err(Error::arg(format!("no batch ({epoch}, {batch}) in plan")));
        }
        if let Some(m) = &self.materialized {
            return Ok(Arc::clone(&m[epoch][batch]));
        }
        derive_block(g, self.descriptor(epoch, batch), &self.fanouts, epoch, batch).map(Arc::new)
    }

    pub fn epoch_blocks(&self, g: &Graph, epoch: usize) -> Result<Vec<Arc<ComputationBlock>>> {
        (0..self.batches_per_epoch()).map(|i| self.block(g, epoch, i)).collect()
    }

    /// Recomputes the digest from freshly sampled blocks.
    pub fn recompute_digest(&self, g: &Graph) -> Result<u64> {
        let mut d = Digest::new();
        for e in 0..self.epochs() {
            for i in 0..self.batches_per_epoch() {
                let block = derive_block(g, self.descriptor(e, i), &self.fanouts, e, i)?;
                d.batch(e, i, block.input_nodes());
            }
        }
        Ok(d.finish())
    }
}

struct Digest(u64);

impl Digest {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    fn new() -> Self {
        Digest(Self::OFFSET)
    }

    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    fn batch(&mut self, epoch: usize, batch: usize, nodes: &[NodeId]) {
        self.word(epoch as u64);
        self.word(batch as u64);
        self.word(nodes.len() as u64);
        for &v in nodes {
            self.word(v as u64);
        }
    }

    fn finish(self) -> u64 {
        self.0
    }
}

/// Access counts of remote nodes: one per batch whose input set holds the node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<NodeId, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: impl IntoIterator<Item = (NodeId, u64)>) -> Self {
        Self { counts: counts.into_iter().filter(|&(_, c)| c > 0).collect() }
    }

    /// Counts the non-local members of one batch's input set.
    pub fn record(&mut self, input_nodes: &[NodeId], book: &PartitionBook, my_part: PartitionId) {
        for &v in input_nodes {
            if book.owner(v) != my_part {
                *self.counts.entry(v).or_insert(0) += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &FrequencyTable) {
        for (&v, &c) in &other.counts {
            *self.counts.entry(v).or_insert(0) += c;
        }
    }

    pub fn get(&self, v: NodeId) -> u64 {
        self.counts.get(&v).copied().unwrap_or(0)
    }

    /// Number of distinct remote nodes seen.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all counts, i.e. total remote feature requests.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.counts.iter().map(|(&v, &c)| (v, c))
    }
}

/// Remote access counts of `my_part` over every epoch of the plan.
pub fn collect_access(plan: &BatchPlan, g: &Graph, book: &PartitionBook, my_part: PartitionId) -> Result<FrequencyTable> {
    collect_access_epochs(plan, g, book, my_part, 0..plan.epochs())
}

pub fn collect_access_epochs(
    plan: &BatchPlan,
    g: &Graph,
    book: &PartitionBook,
    my_part: PartitionId,
    epochs: Range<usize>,
) -> Result<FrequencyTable> {
    collect_access_share(plan, g, book, my_part, BatchShare::ALL, epochs)
}

/// Counts over only the batches in `share`.
pub fn collect_access_share(
    plan: &BatchPlan,
    g: &Graph,
    book: &PartitionBook,
    my_part: PartitionId,
    share: BatchShare,
    epochs: Range<usize>,
) -> Result<FrequencyTable> {
    let mut dense = vec![0u64; g.num_nodes()];
    for e in epochs {
        for i in share.batches(plan.batches_per_epoch()) {
            for &v in plan.block(g, e, i)?.input_nodes() {
                dense[v as usize] += 1;
            }
        }
    }
    let remote = dense.into_iter().enumerate().filter(|&(v, c)| c > 0 && book.owner(v as NodeId) != my_part);
    Ok(FrequencyTable::from_counts(remote.map(|(v, c)| (v as NodeId, c))))
}

/// The batches one of `workers` trainers takes from every epoch of a shared
/// plan: indices `worker, worker + workers, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchShare {
    pub worker: usize,
    pub workers: usize,
}

impl BatchShare {
    pub const ALL: BatchShare = BatchShare { worker: 0, workers: 1 };

    pub fn new(worker: usize, workers: usize) -> Result<Self> {
        if worker >= workers {
            return Err(Error::arg(format!("worker {worker} out of {workers}")));
        }
        Ok(Self { worker, workers })
    }

    pub fn batches(self, per_epoch: usize) -> impl Iterator<Item = usize> {
        (self.worker..per_epoch).step_by(self.workers)
    }

    pub fn count(self, per_epoch: usize) -> usize {
        per_epoch.saturating_sub(self.worker).div_ceil(self.workers)
    }
}

/// The `n_hot` most frequently accessed nodes (lower id first among equal
/// counts), returned sorted by id.
pub fn top_hot(freq: &FrequencyTable, n_hot: usize) -> Vec<NodeId> {
    let mut ranked: Vec<(NodeId, u64)> = freq.iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut hot: Vec<NodeId> = ranked.into_iter().take(n_hot).map(|(v, _)| v).collect();
    hot.sort_unstable();
    hot
}

/// Cache size given as an absolute count or as a percentage of the distinct
/// remote nodes in scope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HotSize {
    Count(usize),
    Percent(f64),
}

impl HotSize {
    pub fn resolve(self, remote_nodes: usize) -> usize {
        match self {
            HotSize::Count(n) => n,
            HotSize::Percent(p) => ((p / 100.0) * remote_nodes as f64).floor() as usize,
        }
    }
}

impl std::str::FromStr for HotSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| Error::arg(format!("bad percentage {s:?}")))?;
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::arg(format!("percentage {p} outside [0, 100]")));
            }
            Ok(HotSize::Percent(p))
        } else {
            s.parse().map(HotSize::Count).map_err(|_| Error::arg(format!("bad cache size {s:?}")))
        }
    }
}

impl std::fmt::Display for HotSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HotSize::Count(n) => write!(f, "{n}"),
            HotSize::Percent(p) => write!(f, "{p}%"),
        }
    }
}

/// Which batches the hot set is ranked over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HotScope {
    /// One hot set over every epoch, built once before training.
    Global,
    /// A fresh hot set per epoch; the next epoch's is built during the current one.
    Epoch,
}

impl std::str::FromStr for HotScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(HotScope::Global),
            "epoch" => Ok(HotScope::Epoch),
            _ => Err(Error::arg(format!("hot scope must be global or epoch, got {s:?}"))),
        }
    }
}
