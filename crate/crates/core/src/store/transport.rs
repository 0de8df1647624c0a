use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::wire;
use super::StoreShard;
use crate::error::{Error, Result};
use crate::graph::PartitionId;

/// Moves one encoded request to a shard and returns its encoded response.
pub trait Transport: Send + Sync {
    fn num_shards(&self) -> u32;

    fn round_trip(&self, shard: PartitionId, request: &[u8]) -> Result<Vec<u8>>;
}

/// Shards living in this process. Requests are still encoded and decoded so
/// the byte path matches the TCP transport; each call is served on the
/// caller's thread, so concurrent callers are served concurrently.
pub struct InProcTransport {
    shards: Vec<Arc<StoreShard>>,
}

impl InProcTransport {
    pub fn new(shards: Vec<Arc<StoreShard>>) -> Self {
        Self { shards }
    }
}

impl Transport for InProcTransport {
    fn num_shards(&self) -> u32 {
        self.shards.len() as u32
    }

    fn round_trip(&self, shard: PartitionId, request: &[u8]) -> Result<Vec<u8>> {
        let s = self
            .shards
            .get(shard as usize)
            .ok_or_else(|| Error::Transport(format!("no shard {shard}")))?;
        Ok(s.handle(request))
    }
}

/// Serves one shard over TCP, one thread per connection.
pub struct TcpShardServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
}

impl TcpShardServer {
    pub fn bind(addr: impl ToSocketAddrs, shard: Arc<StoreShard>) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let acceptor = std::thread::Builder::new()
            .name(format!("shard-{}-accept", shard.part()))
            .spawn(move || {
                for conn in listener.incoming() {
                    if flag.load(Ordering::Acquire) {
                        break;
                    }
                    let Ok(stream) = conn else { continue };
                    let shard = Arc::clone(&shard);
                    std::thread::spawn(move || serve_connection(stream, &shard));
                }
            })?;
        Ok(Self { addr, stop, acceptor: Some(acceptor) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Idempotent.
    pub fn shutdown(&mut self) {
        if let Some(handle) = self.acceptor.take() {
            self.stop.store(true, Ordering::Release);
            // wake the blocking accept
            let _ = TcpStream::connect(self.addr);
            let _ = handle.join();
        }
    }

    /// Blocks until the acceptor exits.
    pub fn wait(mut self) {
        if let Some(handle) = self.acceptor.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for TcpShardServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_connection(stream: TcpStream, shard: &StoreShard) {
    let _ = stream.set_nodelay(true);
    let Ok(write_half) = stream.try_clone() else { return };
    let mut reader = BufReader::new(stream);
    let mut writer = BufWriter::new(write_half);
    while let Ok(payload) = wire::read_frame(&mut reader) {
        let resp = shard.handle(&payload);
        if wire::write_frame(&mut writer, &resp).is_err() {
            break;
        }
    }
}

/// Client side of the TCP transport: one address per shard and a small pool
/// of idle connections to each.
pub struct TcpTransport {
    addrs: Vec<SocketAddr>,
    idle: Vec<Mutex<Vec<TcpStream>>>,
}

impl TcpTransport {
    pub fn new(addrs: Vec<SocketAddr>) -> Self {
        let idle = addrs.iter().map(|_| Mutex::new(Vec::new())).collect();
        Self { addrs, idle }
    }

    fn checkout(&self, shard: usize) -> Result<TcpStream> {
        if let Some(s) = self.idle[shard].lock().unwrap().pop() {
            return Ok(s);
        }
        let s = TcpStream::connect(self.addrs[shard])
            .map_err(|e| Error::Transport(format!("connect to shard {shard} at {}: {e}", self.addrs[shard])))?;
        s.set_nodelay(true)?;
        Ok(s)
    }
}

impl Transport for TcpTransport {
    fn num_shards(&self) -> u32 {
        self.addrs.len() as u32
    }

    fn round_trip(&self, shard: PartitionId, request: &[u8]) -> Result<Vec<u8>> {
        let idx = shard as usize;
        if idx >= self.addrs.len() {
            return Err(Error::Transport(format!("no shard {shard}")));
        }
        let mut stream = self.checkout(idx)?;
        let transport_err = |e: Error| Error::Transport(format!("shard {shard}: {e}"));
        wire::write_frame(&mut stream, request).map_err(transport_err)?;
        let resp = wire::read_frame(&mut stream).map_err(transport_err)?;
        self.idle[idx].lock().unwrap().push(stream);
        Ok(resp)
    }
}
