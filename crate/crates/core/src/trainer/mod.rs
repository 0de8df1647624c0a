//! Model, SGD loop and evaluation.

mod model;

use std::time::Instant;

pub use model::{argmax, forward, loss_and_grad, sgd_step, BatchResult, LayerParams, ModelParams, Real};

use crate::cache::{FeatureCache, SecondaryBuild};
use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::harness::metrics::{MetricsRecord, Mode};
use crate::prefetch::BundleSource;
use crate::sampler::sample_block;
use crate::store::TransferAccount;

#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub params: ModelParams<T>,
    pub lr: T,
    /// Completed epochs.
    pub epoch: usize,
    pub metrics: Vec<MetricsRecord>,
}

impl<T: Real> TrainState<T> {
    pub fn new(params: ModelParams<T>, lr: T) -> Self {
        Self { params, lr, epoch: 0, metrics: Vec::new() }
    }
}

/// What one epoch reads besides the model.
pub struct EpochInputs<'a> {
    pub mode: Mode,
    pub labels: &'a [u32],
    pub source: &'a mut dyn BundleSource,
    /// Fallback traffic of this worker.
    pub account: &'a TransferAccount,
    pub cache: Option<&'a FeatureCache>,
    /// Buffer for the next epoch, swapped in once this epoch ends.
    pub secondary: Option<SecondaryBuild>,
    pub started: Instant,
}

/// Trains on every bundle of the epoch. On error the parameters reflect the
/// last completed batch and no record is appended.
pub fn train_epoch<T: Real>(state: &mut TrainState<T>, inputs: EpochInputs<'_>) -> Result<MetricsRecord> {
    let EpochInputs { mode, labels, source, account, cache, secondary, started } = inputs;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut seen = 0usize;
    while let Some(bundle) = source.next_bundle()? {
        let r = loss_and_grad(&bundle.block, &bundle.rows, labels, &state.params)
            .map_err(|e| Error::Batch { batch: bundle.batch, source: Box::new(e) })?;
        sgd_step(&mut state.params, &r.grad, state.lr);
        let s = bundle.block.seeds().len();
        loss_sum += r.loss.to_f64().unwrap() * s as f64;
        correct += r.correct;
        seen += s;
    }
    if let (Some(build), Some(c)) = (secondary, cache) {
        build.finish_into(c)?;
    }
    let stats = cache.map(FeatureCache::swap).unwrap_or_default();
    let traffic = account.take();
    let t_e_ms = started.elapsed().as_secs_f64() * 1e3;
    state.epoch += 1;
    let (loss, train_acc) = if seen == 0 { (0.0, 0.0) } else { (loss_sum / seen as f64, correct as f64 / seen as f64) };
    let rec = MetricsRecord {
        epoch: state.epoch,
        mode,
        t_e_ms,
        rpc_calls: traffic.rpc_calls,
        nodes_pulled: traffic.nodes_pulled,
        bytes_pulled: traffic.bytes_pulled,
        cache_hits: stats.hits,
        cache_misses: stats.misses,
        reuse_ratio: stats.reuse_ratio(),
        loss,
        train_acc,
    };
    state.metrics.push(rec.clone());
    Ok(rec)
}

/// Accuracy of full-neighborhood inference on the nodes of `split`; `None`
/// when the split is empty.
pub fn evaluate<T: Real>(g: &Graph, params: &ModelParams<T>, split: Split) -> Result<Option<f64>> {
    evaluate_nodes(g, params, &g.nodes_in(split))
}

pub fn evaluate_nodes<T: Real>(g: &Graph, params: &ModelParams<T>, nodes: &[u32]) -> Result<Option<f64>> {
    if nodes.is_empty() {
        return Ok(None);
    }
    let c = params.num_classes();
    let full = vec![usize::MAX; params.layers.len()];
    let block = sample_block(g, nodes, &full, 0)?;
    let mut rows = Vec::with_capacity(block.input_nodes().len() * g.feat_dim());
    for &v in block.input_nodes() {
        rows.extend_from_slice(g.feature_row(v));
    }
    let logits = forward(&block, &rows, params)?;
    let labels = g.labels();
    let hits = block
        .seeds()
        .iter()
        .enumerate()
        .filter(|&(j, &v)| argmax(&logits[j * c..(j + 1) * c]) == labels[v as usize] as usize)
        .count();
    Ok(Some(hits as f64 / nodes.len() as f64))
}
