use std::sync::Arc;

use super::wire::{self, MsgType, Request, Status};
use super::{TransferAccount, Transport};
use crate::error::{Error, Result};
use crate::graph::{NodeId, PartitionBook};

/// Routes pulls to owning shards and reassembles rows in request order.
#[derive(Clone)]
pub struct StoreClient {
    book: Arc<PartitionBook>,
    feat_dim: usize,
    transport: Arc<dyn Transport>,
}

impl StoreClient {
    pub fn new(book: Arc<PartitionBook>, feat_dim: usize, transport: Arc<dyn Transport>) -> Self {
        Self { book, feat_dim, transport }
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn book(&self) -> &PartitionBook {
        &self.book
    }

    /// On-demand pull: one request per owning shard, rows in `ids` order.
    pub fn sync_pull(&self, ids: &[NodeId], account: &TransferAccount) -> Result<Vec<f32>> {
        self.pull(MsgType::SyncPull, ids, account)
    }

    /// Bulk pull used for cache fills. Same routing and accounting rule as
    /// [`sync_pull`](Self::sync_pull): one request per owning shard however
    /// many ids it carries.
    pub fn vector_pull(&self, ids: &[NodeId], account: &TransferAccount) -> Result<Vec<f32>> {
        self.pull(MsgType::VectorPull, ids, account)
    }

    fn pull(&self, kind: MsgType, ids: &[NodeId], account: &TransferAccount) -> Result<Vec<f32>> {
        let d = self.feat_dim;
        let n = self.book.num_nodes();
        if let Some(&bad) = ids.iter().find(|&&v| v as usize >= n) {
            return Err(Error::Lookup(bad));
        }
        let k = self.book.num_parts() as usize;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (pos, &v) in ids.iter().enumerate() {
            groups[self.book.owner(v) as usize].push(pos);
        }

        let mut out = vec![0f32; ids.len() * d];
        for (shard, positions) in groups.iter().enumerate() {
            if positions.is_empty() {
                continue;
            }
            let req = Request { kind, ids: positions.iter().map(|&p| ids[p] as u64).collect() };
            let raw = self.transport.round_trip(shard as u32, &wire::encode_request(&req))?;
            let resp = wire::decode_response(&raw)?;
            match resp.status {
                Status::Ok => {}
                Status::NotOwned => return Err(Error::NotOwned { shard: shard as u32 }),
                Status::Malformed => return Err(Error::Protocol(format!("shard {shard} rejected request as malformed"))),
            }
            if resp.feat_dim as usize != d || resp.row_count as usize != positions.len() {
                return Err(Error::Protocol(format!(
                    "shard {shard} answered {} rows of dim {}, expected {} of dim {d}",
                    resp.row_count,
                    resp.feat_dim,
                    positions.len()
                )));
            }
            for (j, &p) in positions.iter().enumerate() {
                out[p * d..(p + 1) * d].copy_from_slice(&resp.rows[j * d..(j + 1) * d]);
            }
            account.charge(1, positions.len() as u64);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU64, Ordering};

    use super::*;
    use crate::graph::{partition_random, synth_powerlaw, Graph};
    use crate::store::{InProcTransport, StoreShard, TransferStats};

    struct Counting<T>(T, AtomicU64);

    impl<T: Transport> Transport for Counting<T> {
        fn num_shards(&self) -> u32 {
            self.0.num_shards()
        }

        fn round_trip(&self, shard: u32, request: &[u8]) -> Result<Vec<u8>> {
            self.1.fetch_add(1, Ordering::Relaxed);
            self.0.round_trip(shard, request)
        }
    }

    fn setup(k: u32) -> (Graph, Arc<PartitionBook>, Vec<Arc<StoreShard>>) {
        let g = synth_powerlaw(200, 2, 4, 2, 3).unwrap();
        let book = Arc::new(partition_random(&g, k, 8).unwrap());
        let shards = (0..k).map(|p| Arc::new(StoreShard::from_graph(&g, &book, p))).collect();
        (g, book, shards)
    }

    fn rows_of(g: &Graph, ids: &[NodeId]) -> Vec<f32> {
        ids.iter().flat_map(|&v| g.feature_row(v).to_vec()).collect()
    }

    #[test]
    fn local_pull_against_own_shard() {
        let (g, book, shards) = setup(2);
        let client = StoreClient::new(Arc::clone(&book), 4, Arc::new(InProcTransport::new(shards)));
        let ids: Vec<NodeId> = book.owned(0).into_iter().take(3).collect();
        let acct = TransferAccount::new(4);
        assert_eq!(client.sync_pull(&ids, &acct).unwrap(), rows_of(&g, &ids));
        assert_eq!(acct.snapshot().rpc_calls, 1);
    }

    #[test]
    fn empty_pull_costs_nothing() {
        let (_, book, shards) = setup(2);
        let client = StoreClient::new(book, 4, Arc::new(InProcTransport::new(shards)));
        let acct = TransferAccount::new(4);
        assert!(client.sync_pull(&[], &acct).unwrap().is_empty());
        assert_eq!(acct.snapshot(), TransferStats::default());
    }

    #[test]
    fn accounting_matches_ownership() {
        let (g, book, shards) = setup(2);
        let a = book.owned(0);
        let b = book.owned(1);
        let ids = vec![a[0], b[0], a[1], b[1], b[2]];
        let counting = Arc::new(Counting(InProcTransport::new(shards), AtomicU64::new(0)));
        let client = StoreClient::new(Arc::clone(&book), 4, counting.clone());
        let acct = TransferAccount::new(4);
        assert_eq!(client.sync_pull(&ids, &acct).unwrap(), rows_of(&g, &ids));
        let s = acct.snapshot();
        assert_eq!(s, TransferStats { rpc_calls: 2, nodes_pulled: 5, bytes_pulled: 5 * 4 * 4 });
        assert_eq!(counting.1.load(Ordering::Relaxed), s.rpc_calls);
    }

    #[test]
    fn bulk_pull_is_one_call_per_shard() {
        let g = synth_powerlaw(3000, 2, 2, 2, 3).unwrap();
        let book = Arc::new(partition_random(&g, 3, 1).unwrap());
        let shards: Vec<_> = (0..3).map(|p| Arc::new(StoreShard::from_graph(&g, &book, p))).collect();
        let client = StoreClient::new(Arc::clone(&book), 2, Arc::new(InProcTransport::new(shards)));
        let acct = TransferAccount::new(2);
        let ids: Vec<NodeId> = book.owned(2).into_iter().take(1000).collect();
        client.vector_pull(&ids, &acct).unwrap();
        assert_eq!(acct.take().rpc_calls, 1);

        let all: Vec<NodeId> = (0..3000).step_by(7).collect();
        let bulk = client.vector_pull(&all, &acct).unwrap();
        assert_eq!(acct.take().rpc_calls, 3);
        let single: Vec<f32> = all.iter().flat_map(|&v| client.sync_pull(&[v], &acct).unwrap()).collect();
        assert_eq!(bulk, single);
    }

    #[test]
    fn unknown_id_is_lookup_error() {
        let (_, book, shards) = setup(2);
        let client = StoreClient::new(book, 4, Arc::new(InProcTransport::new(shards)));
        let acct = TransferAccount::new(4);
        assert!(matches!(client.sync_pull(&[9999], &acct), Err(Error::Lookup(9999))));
        assert_eq!(acct.snapshot(), TransferStats::default());
    }

    #[test]
    fn mismatched_book_is_not_silently_answered() {
        let (g, _, shards) = setup(2);
        let wrong = Arc::new(partition_random(&g, 2, 9999).unwrap());
        let client = StoreClient::new(wrong.clone(), 4, Arc::new(InProcTransport::new(shards)));
        let acct = TransferAccount::new(4);
        let all: Vec<NodeId> = (0..200).collect();
        assert!(matches!(client.sync_pull(&all, &acct), Err(Error::NotOwned { .. })));
    }
}
