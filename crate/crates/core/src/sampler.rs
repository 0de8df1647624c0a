//! Seed schedule, epoch batching and layered neighbor sampling.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{self, Stream};

/// Separates the epoch-shuffle stream from per-node sampling streams.
const SHUFFLE_TAG: u64 = 0x5348_5546_464c_4500;

/// Base seed plus the extent of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSchedule {
    pub s0: u64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
}

impl SeedSchedule {
    pub fn new(s0: u64, epochs: usize, batches_per_epoch: usize) -> Self {
        Self { s0, epochs, batches_per_epoch }
    }

    pub fn seed_for(&self, epoch: usize, batch: usize) -> Result<u64> {
        seed_for(self, epoch, batch)
    }
}

/// Per-batch seed: `mix64(s0 ^ (epoch << 32 | batch))`.
///
/// `mix64` is a bijection, so seeds never repeat as long as both indices fit
/// in 32 bits.
pub fn seed_for(s: &SeedSchedule, epoch: usize, batch: usize) -> Result<u64> {
    if epoch >= s.epochs || batch >= s.batches_per_epoch {
        return Err(Error::arg(format!(
            "(epoch {epoch}, batch {batch}) outside schedule {}x{}",
            s.epochs, s.batches_per_epoch
        )));
    }
    if epoch > u32::MAX as usize || batch > u32::MAX as usize {
        return Err(Error::arg("epoch and batch indices must fit in 32 bits"));
    }
    Ok(rng::mix64(s.s0 ^ (((epoch as u64) << 32) | batch as u64)))
}

pub fn num_batches(num_train: usize, batch_size: usize) -> usize {
    num_train.div_ceil(batch_size)
}

/// Shuffles the training nodes with the epoch's stream and cuts them into
/// `ceil(|train| / batch_size)` batches.
pub fn epoch_batches(train_nodes: &[NodeId], batch_size: usize, s: &SeedSchedule, epoch: usize) -> Result<Vec<Vec<NodeId>>> {
    if batch_size == 0 {
        return Err(Error::arg("batch_size must be at least 1"));
    }
    if train_nodes.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    let key = seed_for(s, epoch, 0)?;
    let mut order = train_nodes.to_vec();
    Stream::keyed(&[key, SHUFFLE_TAG]).shuffle(&mut order);
    Ok(order.chunks(batch_size).map(<[NodeId]>::to_vec).collect())
}

/// One message-passing layer of a block, stored as CSR over destinations.
///
/// Destination `j` is `frontiers[l + 1][j]`; its own row in the layer input is
/// `self_index[j]` and its sampled neighbors are
/// `neighbors[offsets[j]..offsets[j + 1]]`, all indices into `frontiers[l]`
/// and ascending by node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBlock {
    pub self_index: Vec<u32>,
    pub offsets: Vec<u32>,
    pub neighbors: Vec<u32>,
}

impl LayerBlock {
    pub fn num_dst(&self) -> usize {
        self.self_index.len()
    }

    #[inline]
    pub fn neighbors_of(&self, j: usize) -> &[u32] {
        &self.neighbors[self.offsets[j] as usize..self.offsets[j + 1] as usize]
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len()
    }
}

/// Sampled computation graph of one mini-batch.
///
/// `frontiers[L]` is the seed list in batch order; `frontiers[l]` for `l < L`
/// is the sorted, deduplicated union of `frontiers[l + 1]` and the neighbors
/// sampled for it at fanout `fanouts[l]`. `frontiers[0]` is the input node set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationBlock {
    pub epoch: usize,
    pub batch: usize,
    pub frontiers: Vec<Vec<NodeId>>,
    pub layers: Vec<LayerBlock>,
}

impl ComputationBlock {
    pub fn seeds(&self) -> &[NodeId] {
        self.frontiers.last().expect("block has at least the seed frontier")
    }

    /// Sorted, deduplicated ids of every node whose features the batch reads.
    pub fn input_nodes(&self) -> &[NodeId] {
        &self.frontiers[0]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Sampled `(src, dst)` pairs of layer `l`, as global ids.
    pub fn edges(&self, l: usize) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        let layer = &self.layers[l];
        let src = &self.frontiers[l];
        let dst = &self.frontiers[l + 1];
        (0..layer.num_dst()).flat_map(move |j| layer.neighbors_of(j).iter().map(move |&u| (src[u as usize], dst[j])))
    }
}

/// Neighbors of `v` sampled at `(rng_seed, layer)`: every neighbor when the
/// degree is at most `fanout`, otherwise `fanout` distinct neighbors chosen
/// uniformly. Sorted ascending.
pub fn sample_neighbors(g: &Graph, v: NodeId, fanout: usize, rng_seed: u64, layer: usize, scratch: &mut Vec<NodeId>) -> Vec<NodeId> {
    let nbrs = g.neighbors(v);
    if nbrs.len() <= fanout {
        return nbrs.to_vec();
    }
    scratch.clear();
    scratch.extend_from_slice(nbrs);
    Stream::keyed(&[rng_seed, layer as u64, v as u64]).partial_shuffle(scratch, fanout);
    let mut picked = scratch[..fanout].to_vec();
    picked.sort_unstable();
    picked
}

/// Builds a block for `seeds`, sampling from the output layer inward.
///
/// `fanouts[l]` caps the neighbors sampled for the destinations of layer `l`
/// (layer 0 consumes raw features, so the seeds use `fanouts[L - 1]`). Each
/// `(layer, node)` pair has its own stream, so the result depends only on the
/// arguments and not on iteration order.
pub fn sample_block(g: &Graph, seeds: &[NodeId], fanouts: &[usize], rng_seed: u64) -> Result<ComputationBlock> {
    if fanouts.is_empty() {
        return Err(Error::arg("fanouts must name at least one layer"));
    }
    if seeds.is_empty() {
        return Err(Error::arg("seed list is empty"));
    }
    if let Some(&bad) = seeds.iter().find(|&&v| v as usize >= g.num_nodes()) {
        return Err(Error::Lookup(bad));
    }
    let num_layers = fanouts.len();
    let mut frontiers: Vec<Vec<NodeId>> = vec![Vec::new(); num_layers + 1];
    frontiers[num_layers] = seeds.to_vec();
    let mut sampled_per_layer: Vec<Vec<Vec<NodeId>>> = vec![Vec::new(); num_layers];
    let mut scratch = Vec::new();

    for l in (0..num_layers).rev() {
        let dst = &frontiers[l + 1];
        let sampled: Vec<Vec<NodeId>> = dst
            .iter()
            .map(|&v| sample_neighbors(g, v, fanouts[l], rng_seed, l, &mut scratch))
            .collect();
        let mut src: Vec<NodeId> = dst.iter().copied().chain(sampled.iter().flatten().copied()).collect();
        src.sort_unstable();
        src.dedup();
        frontiers[l] = src;
        sampled_per_layer[l] = sampled;
    }

    let layers = (0..num_layers)
        .map(|l| {
            let src = &frontiers[l];
            let index = |v: NodeId| src.binary_search(&v).expect("frontier contains all sampled nodes") as u32;
            let dst = &frontiers[l + 1];
            let mut self_index = Vec::with_capacity(dst.len());
            let mut offsets = Vec::with_capacity(dst.len() + 1);
            let mut neighbors = Vec::new();
            offsets.push(0);
            for (j, &v) in dst.iter().enumerate() {
                self_index.push(index(v));
                neighbors.extend(sampled_per_layer[l][j].iter().map(|&u| index(u)));
                offsets.push(neighbors.len() as u32);
            }
            LayerBlock { self_index, offsets, neighbors }
        })
        .collect();

    Ok(ComputationBlock { epoch: 0, batch: 0, frontiers, layers })
}
