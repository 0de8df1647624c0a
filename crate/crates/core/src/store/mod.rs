//! Sharded key-value feature store.
//!
//! Each partition's [`StoreShard`] serves the feature rows of the nodes it
//! owns. Clients reach shards through a [`Transport`] (in-process or TCP) and
//! charge every completed request to a [`TransferAccount`]: one RPC call per
//! request message to one shard, `feat_dim * 4` bytes per node row.

mod client;
mod transport;
pub mod wire;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

pub use client::StoreClient;
pub use transport::{InProcTransport, TcpShardServer, TcpTransport, Transport};

use crate::graph::{Graph, NodeId, PartitionBook, PartitionId};
use wire::{Request, Response, Status};

/// Payload bytes of `n` rows of `dim` 32-bit floats.
pub const fn bytes_for(n: u64, dim: u64) -> u64 {
    n * dim * 4
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferStats {
    pub rpc_calls: u64,
    pub nodes_pulled: u64,
    pub bytes_pulled: u64,
}

impl std::ops::Sub for TransferStats {
    type Output = TransferStats;

    fn sub(self, rhs: Self) -> Self {
        TransferStats {
            rpc_calls: self.rpc_calls - rhs.rpc_calls,
            nodes_pulled: self.nodes_pulled - rhs.nodes_pulled,
            bytes_pulled: self.bytes_pulled - rhs.bytes_pulled,
        }
    }
}

/// Client-side traffic counters. Safe to share between threads.
#[derive(Debug)]
pub struct TransferAccount {
    feat_dim: u64,
    rpc_calls: AtomicU64,
    nodes_pulled: AtomicU64,
    bytes_pulled: AtomicU64,
}

impl TransferAccount {
    pub fn new(feat_dim: usize) -> Self {
        Self {
            feat_dim: feat_dim as u64,
            rpc_calls: AtomicU64::new(0),
            nodes_pulled: AtomicU64::new(0),
            bytes_pulled: AtomicU64::new(0),
        }
    }

    pub fn charge(&self, calls: u64, nodes: u64) {
        self.rpc_calls.fetch_add(calls, Ordering::Relaxed);
        self.nodes_pulled.fetch_add(nodes, Ordering::Relaxed);
        self.bytes_pulled.fetch_add(bytes_for(nodes, self.feat_dim), Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TransferStats {
        TransferStats {
            rpc_calls: self.rpc_calls.load(Ordering::Relaxed),
            nodes_pulled: self.nodes_pulled.load(Ordering::Relaxed),
            bytes_pulled: self.bytes_pulled.load(Ordering::Relaxed),
        }
    }

    /// Returns the counters and zeroes them.
    pub fn take(&self) -> TransferStats {
        TransferStats {
            rpc_calls: self.rpc_calls.swap(0, Ordering::Relaxed),
            nodes_pulled: self.nodes_pulled.swap(0, Ordering::Relaxed),
            bytes_pulled: self.bytes_pulled.swap(0, Ordering::Relaxed),
        }
    }
}

/// Feature rows of one partition's owned nodes plus server-side counters.
#[derive(Debug)]
pub struct StoreShard {
    part: PartitionId,
    feat_dim: usize,
    owned: Vec<NodeId>,
    /// Row index of each node id, `u32::MAX` when not owned.
    slot: Vec<u32>,
    rows: Vec<f32>,
    latency: Duration,
    rpc_calls: AtomicU64,
    nodes_served: AtomicU64,
    payload_bytes: AtomicU64,
}

impl StoreShard {
    pub fn from_graph(g: &Graph, book: &PartitionBook, part: PartitionId) -> Self {
        let owned = book.owned(part);
        let mut rows = Vec::with_capacity(owned.len() * g.feat_dim());
        let mut slot = vec![u32::MAX; owned.last().map_or(0, |&v| v as usize + 1)];
        for (i, &v) in owned.iter().enumerate() {
            rows.extend_from_slice(g.feature_row(v));
            slot[v as usize] = i as u32;
        }
        Self {
            part,
            feat_dim: g.feat_dim(),
            owned,
            slot,
            rows,
            latency: Duration::ZERO,
            rpc_calls: AtomicU64::new(0),
            nodes_served: AtomicU64::new(0),
            payload_bytes: AtomicU64::new(0),
        }
    }

    /// Fixed delay applied to every request before it is answered.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn part(&self) -> PartitionId {
        self.part
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn owned(&self) -> &[NodeId] {
        &self.owned
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    /// Local row access; no request is counted.
    #[inline]
    pub fn row(&self, v: NodeId) -> Option<&[f32]> {
        let i = *self.slot.get(v as usize)? as usize;
        if i == u32::MAX as usize {
            return None;
        }
        Some(&self.rows[i * self.feat_dim..(i + 1) * self.feat_dim])
    }

    /// Answers a decoded request. Any id outside the shard fails the whole
    /// request with `NOT_OWNED`; nothing is counted for failed requests.
    pub fn serve(&self, req: &Request) -> Response {
        let dim = self.feat_dim as u32;
        let mut rows = Vec::with_capacity(req.ids.len() * self.feat_dim);
        for &id in &req.ids {
            let row = NodeId::try_from(id).ok().and_then(|v| self.row(v));
            match row {
                Some(r) => rows.extend_from_slice(r),
                None => return Response::error(Status::NotOwned, dim),
            }
        }
        let n = req.ids.len() as u64;
        self.rpc_calls.fetch_add(1, Ordering::Relaxed);
        self.nodes_served.fetch_add(n, Ordering::Relaxed);
        self.payload_bytes.fetch_add(bytes_for(n, self.feat_dim as u64), Ordering::Relaxed);
        Response { status: Status::Ok, feat_dim: dim, row_count: req.ids.len() as u32, rows }
    }

    /// Server entry point: decodes, waits out the injected latency, serves and
    /// encodes.
    pub fn handle(&self, payload: &[u8]) -> Vec<u8> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let resp = match wire::decode_request(payload) {
            Ok(req) => self.serve(&req),
            Err(_) => Response::error(Status::Malformed, self.feat_dim as u32),
        };
        wire::encode_response(&resp)
    }

    pub fn stats(&self) -> ShardStats {
        ShardStats {
            rpc_calls: self.rpc_calls.load(Ordering::Relaxed),
            nodes_served: self.nodes_served.load(Ordering::Relaxed),
            payload_bytes: self.payload_bytes.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShardStats {
    pub rpc_calls: u64,
    pub nodes_served: u64,
    pub payload_bytes: u64,
}

#[cfg(test)]
mod tests {
    use super::wire::MsgType;
    use super::*;
    use crate::graph::{partition_random, synth_powerlaw};

    #[test]
    fn byte_arithmetic() {
        assert_eq!(bytes_for(15_000, 602), 36_120_000);
        assert_eq!(bytes_for(0, 602), 0);
        assert_eq!(bytes_for(232_965, 602), 560_979_720);
    }

    #[test]
    fn shard_serves_only_owned_nodes() {
        let g = synth_powerlaw(100, 2, 3, 2, 1).unwrap();
        let book = partition_random(&g, 2, 1).unwrap();
        let shard = StoreShard::from_graph(&g, &book, 0);
        let mine = book.owned(0)[0];
        let theirs = book.owned(1)[0];
        assert_eq!(shard.row(mine).unwrap(), g.feature_row(mine));
        assert!(shard.row(theirs).is_none());

        let ok = shard.serve(&Request { kind: MsgType::SyncPull, ids: vec![mine as u64] });
        assert_eq!(ok.status, Status::Ok);
        let bad = shard.serve(&Request { kind: MsgType::SyncPull, ids: vec![mine as u64, theirs as u64] });
        assert_eq!(bad.status, Status::NotOwned);
        let stats = shard.stats();
        assert_eq!(stats.rpc_calls, 1);
        assert_eq!(stats.payload_bytes, stats.nodes_served * 3 * 4);
    }

    #[test]
    fn malformed_request_answered_with_status() {
        let g = synth_powerlaw(20, 2, 2, 2, 1).unwrap();
        let book = partition_random(&g, 1, 1).unwrap();
        let shard = StoreShard::from_graph(&g, &book, 0);
        let resp = wire::decode_response(&shard.handle(&[1, 5, 0, 0, 0])).unwrap();
        assert_eq!(resp.status, Status::Malformed);
    }

    #[test]
    fn account_take_resets() {
        let a = TransferAccount::new(10);
        a.charge(2, 5);
        assert_eq!(a.take(), TransferStats { rpc_calls: 2, nodes_pulled: 5, bytes_pulled: 200 });
        assert_eq!(a.snapshot(), TransferStats::default());
    }
}
