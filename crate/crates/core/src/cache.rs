//! Double-buffered hot-node feature cache.
//!
//! The steady buffer serves lookups for the current epoch while a secondary
//! buffer for the next epoch is built on a background thread; at the epoch
//! boundary the secondary replaces the steady buffer wholesale.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, PartitionBook, PartitionId};
use crate::plan::{self, BatchPlan, BatchShare, FrequencyTable, HotScope, HotSize};
use crate::store::{StoreClient, TransferAccount};

/// Immutable set of cached rows keyed by ascending node id.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheBuffer {
    epoch: Option<usize>,
    feat_dim: usize,
    keys: Vec<NodeId>,
    rows: Vec<f32>,
}

impl CacheBuffer {
    pub fn empty(feat_dim: usize) -> Self {
        Self { epoch: None, feat_dim, keys: Vec::new(), rows: Vec::new() }
    }

    /// Fetches `hot` with one bulk pull per owning shard.
    pub fn fetch(hot: &[NodeId], client: &StoreClient, account: &TransferAccount) -> Result<Self> {
        let mut keys = hot.to_vec();
        keys.sort_unstable();
        keys.dedup();
        let rows = if keys.is_empty() { Vec::new() } else { client.vector_pull(&keys, account)? };
        Ok(Self { epoch: None, feat_dim: client.feat_dim(), keys, rows })
    }

    pub fn for_epoch(mut self, epoch: usize) -> Self {
        self.epoch = Some(epoch);
        self
    }

    /// Epoch this buffer was ranked for, if any.
    pub fn epoch(&self) -> Option<usize> {
        self.epoch
    }

    pub fn keys(&self) -> &[NodeId] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    #[inline]
    pub fn get(&self, v: NodeId) -> Option<&[f32]> {
        let i = self.keys.binary_search(&v).ok()?;
        Some(&self.rows[i * self.feat_dim..(i + 1) * self.feat_dim])
    }
}

/// Outcome of a lookup, with enough positions to reassemble request order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheLookup {
    pub found_pos: Vec<usize>,
    pub found_rows: Vec<f32>,
    pub missing_pos: Vec<usize>,
    pub missing: Vec<NodeId>,
}

impl CacheLookup {
    /// Interleaves the found rows with `fallback_rows` (rows for `missing`, in
    /// order) back into request order.
    pub fn reassemble(&self, fallback_rows: &[f32], feat_dim: usize) -> Vec<f32> {
        let n = self.found_pos.len() + self.missing_pos.len();
        let mut out = vec![0f32; n * feat_dim];
        for (j, &p) in self.found_pos.iter().enumerate() {
            out[p * feat_dim..(p + 1) * feat_dim].copy_from_slice(&self.found_rows[j * feat_dim..(j + 1) * feat_dim]);
        }
        for (j, &p) in self.missing_pos.iter().enumerate() {
            out[p * feat_dim..(p + 1) * feat_dim].copy_from_slice(&fallback_rows[j * feat_dim..(j + 1) * feat_dim]);
        }
        out
    }
}

/// Hit/miss counts of one epoch, captured at the swap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheEpochStats {
    pub hits: u64,
    pub misses: u64,
    pub swapped: bool,
}

impl CacheEpochStats {
    pub fn reuse_ratio(&self) -> Option<f64> {
        reuse(self.hits, self.misses)
    }
}

fn reuse(hits: u64, misses: u64) -> Option<f64> {
    let total = hits + misses;
    (total > 0).then(|| hits as f64 / total as f64)
}

#[derive(Debug)]
pub struct FeatureCache {
    steady: RwLock<Arc<CacheBuffer>>,
    secondary: Mutex<Option<CacheBuffer>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl FeatureCache {
    pub fn new(steady: CacheBuffer) -> Self {
        Self {
            steady: RwLock::new(Arc::new(steady)),
            secondary: Mutex::new(None),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Steady cache holding exactly `hot`, filled by bulk pulls.
    pub fn build_steady(hot: &[NodeId], client: &StoreClient, account: &TransferAccount) -> Result<Self> {
        Ok(Self::new(CacheBuffer::fetch(hot, client, account)?))
    }

    pub fn steady(&self) -> Arc<CacheBuffer> {
        Arc::clone(&self.steady.read().unwrap())
    }

    /// Splits `ids` into cached and missing, counting one hit or miss per id.
    /// A lookup sees a single steady buffer even if a swap runs concurrently.
    pub fn lookup(&self, ids: &[NodeId]) -> CacheLookup {
        let buf = self.steady();
        let d = buf.feat_dim;
        let mut out = CacheLookup::default();
        for (pos, &v) in ids.iter().enumerate() {
            match buf.get(v) {
                Some(row) => {
                    out.found_pos.push(pos);
                    out.found_rows.extend_from_slice(row);
                }
                None => {
                    out.missing_pos.push(pos);
                    out.missing.push(v);
                }
            }
        }
        debug_assert_eq!(out.found_rows.len(), out.found_pos.len() * d);
        self.hits.fetch_add(out.found_pos.len() as u64, Ordering::Relaxed);
        self.misses.fetch_add(out.missing.len() as u64, Ordering::Relaxed);
        out
    }

    /// The current steady buffer and the indices `j` of `ids` it misses.
    /// Counts hits and misses like [`lookup`](Self::lookup); rows are then
    /// read from the returned buffer, so a concurrent swap cannot split a
    /// request across two buffers.
    pub fn locate(&self, ids: &[NodeId]) -> (Arc<CacheBuffer>, Vec<usize>) {
        let buf = self.steady();
        let missed: Vec<usize> = (0..ids.len()).filter(|&j| buf.get(ids[j]).is_none()).collect();
        self.hits.fetch_add((ids.len() - missed.len()) as u64, Ordering::Relaxed);
        self.misses.fetch_add(missed.len() as u64, Ordering::Relaxed);
        (buf, missed)
    }

    /// Hands over a completed secondary buffer for the next swap.
    pub fn install_secondary(&self, buf: CacheBuffer) {
        *self.secondary.lock().unwrap() = Some(buf);
    }

    pub fn has_secondary(&self) -> bool {
        self.secondary.lock().unwrap().is_some()
    }

    /// Epoch-boundary swap: promotes the secondary buffer if one is installed,
    /// then returns and resets the epoch's hit/miss counters.
    pub fn swap(&self) -> CacheEpochStats {
        let next = self.secondary.lock().unwrap().take();
        let swapped = next.is_some();
        if let Some(buf) = next {
            *self.steady.write().unwrap() = Arc::new(buf);
        }
        CacheEpochStats {
            hits: self.hits.swap(0, Ordering::Relaxed),
            misses: self.misses.swap(0, Ordering::Relaxed),
            swapped,
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// `hits / (hits + misses)` for the current epoch; `None` before any
    /// remote request.
    pub fn reuse_ratio(&self) -> Option<f64> {
        reuse(self.hits(), self.misses())
    }
}

/// Hot set of `my_part` for `epoch` under `scope`: ranked over that epoch's
/// batches, or over the whole plan for [`HotScope::Global`].
#[allow(clippy::too_many_arguments)]
pub fn select_hot(
    plan: &BatchPlan,
    g: &Graph,
    book: &PartitionBook,
    my_part: PartitionId,
    share: BatchShare,
    scope: HotScope,
    epoch: usize,
    size: HotSize,
) -> Result<Vec<NodeId>> {
    let epochs = match scope {
        HotScope::Global => 0..plan.epochs(),
        HotScope::Epoch => epoch..epoch + 1,
    };
    let freq = plan::collect_access_share(plan, g, book, my_part, share, epochs)?;
    Ok(hot_from(&freq, size))
}

fn hot_from(freq: &FrequencyTable, size: HotSize) -> Vec<NodeId> {
    plan::top_hot(freq, size.resolve(freq.len()))
}

/// Everything the background builder needs to rank and fetch one epoch.
#[derive(Clone)]
pub struct SecondaryJob {
    pub plan: Arc<BatchPlan>,
    pub graph: Arc<Graph>,
    pub book: Arc<PartitionBook>,
    pub my_part: PartitionId,
    pub share: BatchShare,
    pub size: HotSize,
    pub client: StoreClient,
    pub account: Arc<TransferAccount>,
}

impl SecondaryJob {
    /// Counts `epoch`'s remote input nodes, selects the hot set and bulk
    /// pulls it.
    pub fn run(&self, epoch: usize) -> Result<CacheBuffer> {
        if epoch >= self.plan.epochs() {
            return Err(Error::arg(format!("plan has no epoch {epoch}")));
        }
        let hot = select_hot(&self.plan, &self.graph, &self.book, self.my_part, self.share, HotScope::Epoch, epoch, self.size)?;
        Ok(CacheBuffer::fetch(&hot, &self.client, &self.account)?.for_epoch(epoch))
    }
}

/// A secondary build running concurrently with training.
pub struct SecondaryBuild {
    epoch: usize,
    handle: JoinHandle<Result<CacheBuffer>>,
}

/// Starts building the buffer for `next_epoch`. Returns `None` when the plan
/// has no such epoch.
pub fn build_secondary(job: SecondaryJob, next_epoch: usize) -> Result<Option<SecondaryBuild>> {
    if next_epoch >= job.plan.epochs() {
        return Ok(None);
    }
    let handle = std::thread::Builder::new()
        .name(format!("cache-secondary-{next_epoch}"))
        .spawn(move || job.run(next_epoch))?;
    Ok(Some(SecondaryBuild { epoch: next_epoch, handle }))
}

impl SecondaryBuild {
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_ready(&self) -> bool {
        self.handle.is_finished()
    }

    /// Joins the builder and, on success, installs the buffer in `cache`.
    /// On failure the old steady buffer stays in place and the error is
    /// returned for reporting.
    pub fn finish_into(self, cache: &FeatureCache) -> Result<()> {
        let buf = self
            .handle
            .join()
            .map_err(|_| Error::Transport("secondary cache builder panicked".into()))??;
        cache.install_secondary(buf);
        Ok(())
    }
}
