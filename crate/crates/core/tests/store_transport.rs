use std::sync::Arc;

use rapidgnn::graph::{partition_random, synth_powerlaw, Graph, PartitionBook};
use rapidgnn::store::wire::{self, MsgType, Request, Response, Status};
use rapidgnn::store::{InProcTransport, StoreClient, StoreShard, TcpShardServer, TcpTransport, TransferAccount, Transport};
use rapidgnn::Error;

fn le32(x: u32) -> [u8; 4] {
    x.to_le_bytes()
}

#[test]
fn sync_pull_request_bytes() {
    let bytes = wire::encode_request(&Request { kind: MsgType::SyncPull, ids: vec![3, 258] });
    let mut expect = vec![0x01, 0x02, 0x00, 0x00, 0x00];
    expect.extend_from_slice(&[0x03, 0, 0, 0, 0, 0, 0, 0]);
    expect.extend_from_slice(&[0x02, 0x01, 0, 0, 0, 0, 0, 0]);
    assert_eq!(bytes, expect);
}

#[test]
fn vector_pull_request_bytes() {
    let bytes = wire::encode_request(&Request { kind: MsgType::VectorPull, ids: vec![0x0102030405060708] });
    assert_eq!(bytes, vec![0x02, 0x01, 0, 0, 0, 0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01]);
}

#[test]
fn ok_response_bytes() {
    let resp = Response { status: Status::Ok, feat_dim: 2, row_count: 1, rows: vec![1.0, -2.5] };
    let mut expect = vec![0x00];
    expect.extend_from_slice(&le32(1));
    expect.extend_from_slice(&le32(2));
    expect.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]);
    expect.extend_from_slice(&[0x00, 0x00, 0x20, 0xc0]);
    assert_eq!(wire::encode_response(&resp), expect);
    assert_eq!(wire::decode_response(&expect).unwrap(), resp);
}

#[test]
fn not_owned_response_bytes() {
    let bytes = wire::encode_response(&Response::error(Status::NotOwned, 8));
    assert_eq!(bytes, vec![0x01, 0, 0, 0, 0, 0x08, 0, 0, 0]);
}

#[test]
fn frame_prefix() {
    let mut buf = Vec::new();
    wire::write_frame(&mut buf, &[9, 8, 7]).unwrap();
    assert_eq!(buf, vec![3, 0, 0, 0, 9, 8, 7]);
    assert_eq!(wire::read_frame(&mut &buf[..]).unwrap(), vec![9, 8, 7]);
}

#[test]
fn shard_rejects_foreign_ids_whole() {
    let g = synth_powerlaw(100, 2, 3, 2, 1).unwrap();
    let book = partition_random(&g, 2, 1).unwrap();
    let shard = StoreShard::from_graph(&g, &book, 0);
    let mine = book.owned(0)[0] as u64;
    let theirs = book.owned(1)[0] as u64;
    let req = wire::encode_request(&Request { kind: MsgType::SyncPull, ids: vec![mine, theirs] });
    let resp = wire::decode_response(&shard.handle(&req)).unwrap();
    assert_eq!(resp.status, Status::NotOwned);
    assert_eq!(resp.row_count, 0);
    assert_eq!(shard.stats().rpc_calls, 0);
    let resp = wire::decode_response(&shard.handle(&[7, 1])).unwrap();
    assert_eq!(resp.status, Status::Malformed);
}

struct Setup {
    g: Arc<Graph>,
    book: Arc<PartitionBook>,
    shards: Vec<Arc<StoreShard>>,
}

fn setup() -> Setup {
    let g = Arc::new(synth_powerlaw(1500, 3, 5, 3, 4).unwrap());
    let book = Arc::new(partition_random(&g, 3, 2).unwrap());
    let shards = (0..3).map(|p| Arc::new(StoreShard::from_graph(&g, &book, p))).collect();
    Setup { g, book, shards }
}

fn workload(n: u32) -> Vec<Vec<u32>> {
    let mut s = rapidgnn::rng::Stream::new(77);
    (0..40)
        .map(|k| {
            let len = 1 + s.below(200) as usize;
            let mut ids: Vec<u32> = (0..len).map(|_| s.below(n as u64) as u32).collect();
            if k % 2 == 0 {
                ids.sort_unstable();
                ids.dedup();
            }
            ids
        })
        .collect()
}

fn replay(client: &StoreClient, jobs: &[Vec<u32>]) -> (Vec<Vec<f32>>, rapidgnn::store::TransferStats) {
    let acct = TransferAccount::new(client.feat_dim());
    let rows = jobs
        .iter()
        .enumerate()
        .map(|(k, ids)| if k % 3 == 0 { client.vector_pull(ids, &acct) } else { client.sync_pull(ids, &acct) }.unwrap())
        .collect();
    (rows, acct.snapshot())
}

#[test]
fn inproc_and_tcp_agree() {
    let s = setup();
    let jobs = workload(1500);
    let inproc = StoreClient::new(Arc::clone(&s.book), 5, Arc::new(InProcTransport::new(s.shards.clone())));
    let servers: Vec<TcpShardServer> = s.shards.iter().map(|sh| TcpShardServer::bind("127.0.0.1:0", Arc::clone(sh)).unwrap()).collect();
    let tcp = StoreClient::new(Arc::clone(&s.book), 5, Arc::new(TcpTransport::new(servers.iter().map(|x| x.local_addr()).collect())));

    let (rows_a, acct_a) = replay(&inproc, &jobs);
    let (rows_b, acct_b) = replay(&tcp, &jobs);
    assert_eq!(rows_a, rows_b);
    assert_eq!(acct_a, acct_b);
    for (ids, rows) in jobs.iter().zip(&rows_a) {
        let direct: Vec<f32> = ids.iter().flat_map(|&v| s.g.feature_row(v).to_vec()).collect();
        assert_eq!(rows, &direct);
    }
    let expected_calls: u64 = jobs
        .iter()
        .map(|ids| {
            let mut owners: Vec<u32> = ids.iter().map(|&v| s.book.owner(v)).collect();
            owners.sort_unstable();
            owners.dedup();
            owners.len() as u64
        })
        .sum();
    assert_eq!(acct_a.rpc_calls, expected_calls);
    assert_eq!(acct_a.nodes_pulled, jobs.iter().map(|j| j.len() as u64).sum::<u64>());
    assert_eq!(acct_a.bytes_pulled, acct_a.nodes_pulled * 5 * 4);
}

#[test]
fn tcp_survives_many_clients() {
    let s = setup();
    let servers: Vec<TcpShardServer> = s.shards.iter().map(|sh| TcpShardServer::bind("127.0.0.1:0", Arc::clone(sh)).unwrap()).collect();
    let transport: Arc<dyn Transport> = Arc::new(TcpTransport::new(servers.iter().map(|x| x.local_addr()).collect()));
    let jobs = Arc::new(workload(1500));
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let client = StoreClient::new(Arc::clone(&s.book), 5, Arc::clone(&transport));
            let jobs = Arc::clone(&jobs);
            std::thread::spawn(move || replay(&client, &jobs))
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(results.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn unknown_ids_fail_before_any_request() {
    let s = setup();
    let client = StoreClient::new(Arc::clone(&s.book), 5, Arc::new(InProcTransport::new(s.shards.clone())));
    let acct = TransferAccount::new(5);
    assert!(matches!(client.sync_pull(&[1, 1500], &acct), Err(Error::Lookup(1500))));
    assert_eq!(acct.snapshot().rpc_calls, 0);
}

#[test]
fn stopped_server_is_a_transport_error() {
    let s = setup();
    let mut servers: Vec<TcpShardServer> = s.shards.iter().map(|sh| TcpShardServer::bind("127.0.0.1:0", Arc::clone(sh)).unwrap()).collect();
    let addrs = servers.iter().map(|x| x.local_addr()).collect();
    for srv in &mut servers {
        srv.shutdown();
    }
    let client = StoreClient::new(Arc::clone(&s.book), 5, Arc::new(TcpTransport::new(addrs)));
    let acct = TransferAccount::new(5);
    let err = client.sync_pull(&[0, 1, 2, 3], &acct).unwrap_err();
    assert!(matches!(err, Error::Transport(_) | Error::Io(_)), "{err:?}");
    assert_eq!(acct.snapshot().rpc_calls, 0);
}
