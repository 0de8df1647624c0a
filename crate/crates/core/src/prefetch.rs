//! Feature bundle assembly and the asynchronous prefetch pipeline.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvError};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::cache::FeatureCache;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, PartitionId};
use crate::plan::{BatchPlan, BatchShare};
use crate::sampler::ComputationBlock;
use crate::store::{StoreClient, StoreShard, TransferAccount};

/// A batch's block with every input feature row resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub epoch: usize,
    pub batch: usize,
    pub block: Arc<ComputationBlock>,
    /// `|input_nodes| x feat_dim`, row `j` belonging to `input_nodes[j]`.
    pub rows: Vec<f32>,
    pub local_rows: usize,
    pub cached_rows: usize,
    pub fallback_rows: usize,
}

/// Shared, read-only state needed to resolve one worker's batches.
pub struct BundleContext {
    pub graph: Arc<Graph>,
    pub plan: Arc<BatchPlan>,
    pub my_part: PartitionId,
    /// Which of each epoch's batches this worker trains on.
    pub share: BatchShare,
    /// The worker's own shard; its rows are read without any request.
    pub local: Arc<StoreShard>,
    pub client: StoreClient,
    /// `None` sends every remote row through the on-demand path.
    pub cache: Option<Arc<FeatureCache>>,
    /// Charged for on-demand (fallback) pulls.
    pub account: Arc<TransferAccount>,
}

impl BundleContext {
    /// This worker's batch indices of an epoch from `start_batch` on.
    pub fn batches_from(&self, start_batch: usize) -> Vec<usize> {
        self.share.batches(self.plan.batches_per_epoch()).filter(|&i| i >= start_batch).collect()
    }

    /// Resolves rows for `(epoch, batch)`: local rows from the own shard,
    /// remote rows from the cache, misses by one on-demand pull. The pull
    /// runs on a helper thread while local and cached rows are copied.
    pub fn assemble(&self, epoch: usize, batch: usize) -> Result<FeatureBundle> {
        let block = self.plan.block(&self.graph, epoch, batch)?;
        let d = self.local.feat_dim();
        let inputs = block.input_nodes();
        let book = self.client.book();
        let (local, remote): (Vec<usize>, Vec<usize>) = (0..inputs.len()).partition(|&j| book.owner(inputs[j]) == self.my_part);
        let remote_ids: Vec<NodeId> = remote.iter().map(|&j| inputs[j]).collect();
        let (buf, missed) = match &self.cache {
            Some(cache) => {
                let (buf, missed) = cache.locate(&remote_ids);
                (Some(buf), missed)
            }
            None => (None, (0..remote.len()).collect()),
        };
        let pull_ids: Vec<NodeId> = missed.iter().map(|&k| remote_ids[k]).collect();

        let mut rows = vec![0f32; inputs.len() * d];
        let pulled = std::thread::scope(|s| {
            let pull = (!pull_ids.is_empty()).then(|| s.spawn(|| self.client.sync_pull(&pull_ids, &self.account)));
            for &j in &local {
                let row = self.local.row(inputs[j]).ok_or(Error::NotOwned { shard: self.my_part })?;
                rows[j * d..(j + 1) * d].copy_from_slice(row);
            }
            if let Some(buf) = &buf {
                for (&j, &v) in remote.iter().zip(&remote_ids) {
                    if let Some(row) = buf.get(v) {
                        rows[j * d..(j + 1) * d].copy_from_slice(row);
                    }
                }
            }
            match pull {
                Some(h) => h.join().map_err(|_| Error::Transport("fallback pull panicked".into()))?,
                None => Ok(Vec::new()),
            }
        })?;
        for (i, &k) in missed.iter().enumerate() {
            let j = remote[k];
            rows[j * d..(j + 1) * d].copy_from_slice(&pulled[i * d..(i + 1) * d]);
        }
        let fallback_rows = missed.len();
        Ok(FeatureBundle {
            epoch,
            batch,
            block,
            rows,
            local_rows: local.len(),
            cached_rows: remote.len() - fallback_rows,
            fallback_rows,
        })
    }
}

/// In-order supplier of an epoch's bundles.
pub trait BundleSource {
    /// The next bundle, or `None` once the epoch is exhausted.
    fn next_bundle(&mut self) -> Result<Option<FeatureBundle>>;
}

/// Resolves each batch synchronously when asked for it.
pub struct OnDemand {
    ctx: Arc<BundleContext>,
    epoch: usize,
    batches: Vec<usize>,
    next: usize,
}

impl OnDemand {
    pub fn new(ctx: Arc<BundleContext>, epoch: usize) -> Self {
        let batches = ctx.batches_from(0);
        Self { ctx, epoch, batches, next: 0 }
    }
}

impl BundleSource for OnDemand {
    fn next_bundle(&mut self) -> Result<Option<FeatureBundle>> {
        let Some(&i) = self.batches.get(self.next) else { return Ok(None) };
        self.next += 1;
        self.ctx
            .assemble(self.epoch, i)
            .map(Some)
            .map_err(|e| Error::Batch { batch: i, source: Box::new(e) })
    }
}

/// Background producer filling a bounded queue with up to `depth` bundles
/// ahead of the consumer.
pub struct Prefetcher {
    rx: Option<Receiver<Result<FeatureBundle>>>,
    stop: Arc<AtomicBool>,
    producer: Option<JoinHandle<()>>,
    batches: Vec<usize>,
    next: usize,
    failed: bool,
}

impl Prefetcher {
    /// Starts producing `epoch`'s bundles from `start_batch` onward.
    pub fn start(ctx: Arc<BundleContext>, epoch: usize, start_batch: usize, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::arg("prefetch depth must be at least 1"));
        }
        if epoch >= ctx.plan.epochs() {
            return Err(Error::arg(format!("plan has no epoch {epoch}")));
        }
        let batches = ctx.batches_from(start_batch);
        let todo = batches.clone();
        // The producer holds one finished bundle while blocked on send, so
        // depth - 1 queue slots keep at most `depth` bundles ahead.
        let (tx, rx) = mpsc::sync_channel(depth - 1);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let producer = std::thread::Builder::new()
            .name(format!("prefetch-e{epoch}"))
            .spawn(move || {
                for i in todo {
                    if flag.load(Ordering::Acquire) {
                        return;
                    }
                    let item = ctx.assemble(epoch, i).map_err(|e| Error::Batch { batch: i, source: Box::new(e) });
                    let failed = item.is_err();
                    if tx.send(item).is_err() || failed {
                        return;
                    }
                }
            })?;
        Ok(Self { rx: Some(rx), stop, producer: Some(producer), batches, next: 0, failed: false })
    }

    /// Plan index of the batch the next call returns; `usize::MAX` once the
    /// epoch is exhausted.
    pub fn position(&self) -> usize {
        self.batches.get(self.next).copied().unwrap_or(usize::MAX)
    }

    /// Stops the producer and discards anything queued. Idempotent.
    pub fn drain(&mut self) {
        self.stop.store(true, Ordering::Release);
        // dropping the receiver unblocks a producer waiting on a full queue
        self.rx.take();
        if let Some(h) = self.producer.take() {
            let _ = h.join();
        }
    }
}

impl BundleSource for Prefetcher {
    fn next_bundle(&mut self) -> Result<Option<FeatureBundle>> {
        let Some(&expect) = self.batches.get(self.next) else { return Ok(None) };
        if self.failed {
            return Ok(None);
        }
        let Some(rx) = &self.rx else { return Ok(None) };
        match rx.recv() {
            Ok(Ok(bundle)) => {
                debug_assert_eq!(bundle.batch, expect);
                self.next += 1;
                Ok(Some(bundle))
            }
            Ok(Err(e)) => {
                self.failed = true;
                Err(e)
            }
            Err(RecvError) => {
                self.failed = true;
                Err(Error::Batch { batch: expect, source: Box::new(Error::Transport("prefetch producer exited".into())) })
            }
        }
    }
}

impl Drop for Prefetcher {
    fn drop(&mut self) {
        self.drain();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::CacheBuffer;
    use crate::graph::{partition_random, synth_powerlaw, PartitionBook};
    use crate::plan::{generate_plan, PlanParams};
    use crate::store::InProcTransport;

    fn context(with_cache: bool) -> Arc<BundleContext> {
        let g = Arc::new(synth_powerlaw(800, 3, 4, 3, 2).unwrap());
        let book: Arc<PartitionBook> = Arc::new(partition_random(&g, 2, 3).unwrap());
        let shards: Vec<Arc<StoreShard>> = (0..2).map(|p| Arc::new(StoreShard::from_graph(&g, &book, p))).collect();
        let client = StoreClient::new(Arc::clone(&book), 4, Arc::new(InProcTransport::new(shards.clone())));
        let train: Vec<NodeId> = book.owned(0).into_iter().filter(|&v| g.train_mask()[v as usize]).collect();
        let plan = Arc::new(
            generate_plan(
                &g,
                &PlanParams { train_nodes: &train, fanouts: &[3, 4], batch_size: 37, epochs: 2, s0: 9, materialize: false },
            )
            .unwrap(),
        );
        let account = Arc::new(TransferAccount::new(4));
        let cache = with_cache.then(|| {
            let hot: Vec<NodeId> = book.owned(1).into_iter().step_by(3).collect();
            Arc::new(FeatureCache::new(CacheBuffer::fetch(&hot, &client, &TransferAccount::new(4)).unwrap()))
        });
        Arc::new(BundleContext { graph: g, plan, my_part: 0, share: BatchShare::ALL, local: Arc::clone(&shards[0]), client, cache, account })
    }

    fn drain_all(src: &mut impl BundleSource) -> Vec<FeatureBundle> {
        let mut out = Vec::new();
        while let Some(b) = src.next_bundle().unwrap() {
            out.push(b);
        }
        out
    }

    #[test]
    fn bundles_equal_direct_pulls() {
        let ctx = context(true);
        let mut p = Prefetcher::start(Arc::clone(&ctx), 0, 0, 3).unwrap();
        let bundles = drain_all(&mut p);
        assert_eq!(bundles.len(), ctx.plan.batches_per_epoch());
        let scratch = TransferAccount::new(4);
        for (i, b) in bundles.iter().enumerate() {
            assert_eq!(b.batch, i);
            let n = b.block.input_nodes().len();
            assert_eq!(b.local_rows + b.cached_rows + b.fallback_rows, n);
            assert!(b.cached_rows > 0);
            let direct = ctx.client.sync_pull(b.block.input_nodes(), &scratch).unwrap();
            assert_eq!(b.rows, direct);
        }
        assert!(p.next_bundle().unwrap().is_none());
        assert!(p.next_bundle().unwrap().is_none());
    }

    #[test]
    fn prefetched_equals_on_demand() {
        let ctx = context(false);
        let lazy = drain_all(&mut OnDemand::new(Arc::clone(&ctx), 1));
        let eager = drain_all(&mut Prefetcher::start(Arc::clone(&ctx), 1, 0, 1).unwrap());
        assert_eq!(lazy, eager);
    }

    #[test]
    fn drain_is_clean_and_idempotent() {
        let ctx = context(true);
        let mut p = Prefetcher::start(Arc::clone(&ctx), 0, 0, 2).unwrap();
        p.drain();
        p.drain();
        assert!(p.next_bundle().unwrap().is_none());
    }

    #[test]
    fn restart_mid_epoch_replays() {
        let ctx = context(true);
        let full = drain_all(&mut Prefetcher::start(Arc::clone(&ctx), 0, 0, 3).unwrap());
        let mut p = Prefetcher::start(Arc::clone(&ctx), 0, 0, 3).unwrap();
        p.next_bundle().unwrap().unwrap();
        p.next_bundle().unwrap().unwrap();
        let at = p.position();
        p.drain();
        let rest = drain_all(&mut Prefetcher::start(Arc::clone(&ctx), 0, at, 3).unwrap());
        assert_eq!(&full[at..], &rest[..]);
    }

    #[test]
    fn share_takes_every_other_batch() {
        let base = context(false);
        let odd = Arc::new(BundleContext {
            graph: Arc::clone(&base.graph),
            plan: Arc::clone(&base.plan),
            my_part: 0,
            share: BatchShare::new(1, 2).unwrap(),
            local: Arc::clone(&base.local),
            client: base.client.clone(),
            cache: None,
            account: Arc::new(TransferAccount::new(4)),
        });
        let all = drain_all(&mut OnDemand::new(Arc::clone(&base), 0));
        let mine = drain_all(&mut Prefetcher::start(Arc::clone(&odd), 0, 0, 2).unwrap());
        let expect: Vec<FeatureBundle> = all.into_iter().skip(1).step_by(2).collect();
        assert_eq!(mine, expect);
        assert_eq!(mine.len(), BatchShare::new(1, 2).unwrap().count(base.plan.batches_per_epoch()));
        let tail = drain_all(&mut Prefetcher::start(odd, 0, 2, 2).unwrap());
        assert_eq!(tail[..], expect[1..]);
    }

    #[test]
    fn zero_depth_rejected() {
        let ctx = context(false);
        assert!(matches!(Prefetcher::start(ctx, 0, 0, 0), Err(Error::Argument(_))));
    }
}
