//! C ABI over the graph, partition and plan layers of `rapidgnn`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! style functions and released with the matching `*_free`. Fallible calls
//! return an [`RgnnStatus`] and write results through out-pointers; the
//! message of the most recent failure on the calling thread is available
//! from [`rgnn_last_error`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use rapidgnn::graph::{self, Graph, PartitionBook, Split};
use rapidgnn::plan::{generate_plan, BatchPlan, PlanParams};
use rapidgnn::sampler::{self, SeedSchedule};
use rapidgnn::store;
use rapidgnn::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgnnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    Lookup = 6,
    NotOwned = 7,
    Transport = 8,
    Protocol = 9,
    Shape = 10,
    Panic = 99,
}

impl From<&Error> for RgnnStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io(_) => RgnnStatus::Io,
            Error::Format(_) => RgnnStatus::Format,
            Error::Validation(_) => RgnnStatus::Validation,
            Error::Argument(_) => RgnnStatus::InvalidArgument,
            Error::Lookup(_) => RgnnStatus::Lookup,
            Error::NotOwned { .. } => RgnnStatus::NotOwned,
            Error::Transport(_) => RgnnStatus::Transport,
            Error::Protocol(_) => RgnnStatus::Protocol,
            Error::Shape(_) => RgnnStatus::Shape,
            Error::Batch { source, .. } => RgnnStatus::from(source.as_ref()),
        }
    }
}

/// Opaque CSR graph with features, labels and split masks.
pub struct RgnnGraph(Graph);

/// Opaque node-to-partition map with halo lists.
pub struct RgnnPartition(PartitionBook);

/// Opaque precomputed batch plan.
pub struct RgnnPlan(BatchPlan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(RgnnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(RgnnStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RgnnStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RgnnStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RgnnStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            RgnnStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RgnnStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rgnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn rgnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Payload bytes of `n` feature rows of width `dim` (4 bytes per value).
#[no_mangle]
pub extern "C" fn rgnn_bytes_for(n: u64, dim: u64) -> u64 {
    store::bytes_for(n, dim)
}

/// `ceil(num_train / batch_size)`; 0 when `batch_size` is 0.
#[no_mangle]
pub extern "C" fn rgnn_num_batches(num_train: u64, batch_size: u64) -> u64 {
    if batch_size == 0 {
        return 0;
    }
    sampler::num_batches(num_train as usize, batch_size as usize) as u64
}

/// Sampling seed of batch `batch` of epoch `epoch`.
#[no_mangle]
pub unsafe extern "C" fn rgnn_seed_for(
    s0: u64,
    epochs: u64,
    batches_per_epoch: u64,
    epoch: u64,
    batch: u64,
    out: *mut u64,
) -> RgnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = SeedSchedule::new(s0, epochs as usize, batches_per_epoch as usize);
        *out = s.seed_for(epoch as usize, batch as usize)?;
        Ok(())
    })
}

/// Generates the synthetic power-law graph.
#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_synth(
    nodes: u64,
    m: u64,
    feat_dim: u64,
    classes: u64,
    seed: u64,
    out: *mut *mut RgnnGraph,
) -> RgnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = graph::synth_powerlaw(nodes as usize, m as usize, feat_dim as usize, classes as usize, seed)?;
        *out = Box::into_raw(Box::new(RgnnGraph(g)));
        Ok(())
    })
}

/// Reads an RGF1 file.
#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_load(path: *const c_char, out: *mut *mut RgnnGraph) -> RgnnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = graph::load_graph(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(RgnnGraph(g)));
        Ok(())
    })
}

/// Writes an RGF1 file.
#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_save(g: *const RgnnGraph, path: *const c_char) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        graph::save_graph(&g.0, path_arg(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_num_nodes(g: *const RgnnGraph) -> u64 {
    g.as_ref().map_or(0, |g| g.0.num_nodes() as u64)
}

/// Directed adjacency entries (twice the undirected edge count).
#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_num_edges(g: *const RgnnGraph) -> u64 {
    g.as_ref().map_or(0, |g| g.0.num_edges() as u64)
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_feat_dim(g: *const RgnnGraph) -> u64 {
    g.as_ref().map_or(0, |g| g.0.feat_dim() as u64)
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_degree(g: *const RgnnGraph, v: u32, out: *mut u64) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        let out = out_arg(out, "out")?;
        if v as usize >= g.0.num_nodes() {
            return Err(Error::Lookup(v).into());
        }
        *out = g.0.degree(v) as u64;
        Ok(())
    })
}

/// Copies the feature row of `v` into `buf`, which must hold `feat_dim`
/// floats.
#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_feature_row(g: *const RgnnGraph, v: u32, buf: *mut f32, len: usize) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if v as usize >= g.0.num_nodes() {
            return Err(Error::Lookup(v).into());
        }
        let row = g.0.feature_row(v);
        if len < row.len() {
            return Err(Fail(RgnnStatus::Shape, format!("buffer of {len} floats for a row of {}", row.len())));
        }
        std::ptr::copy_nonoverlapping(row.as_ptr(), buf, row.len());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_graph_free(g: *mut RgnnGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Hash partitioner.
#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_random(g: *const RgnnGraph, k: u32, seed: u64, out: *mut *mut RgnnPartition) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        let out = out_arg(out, "out")?;
        let book = graph::halo_expand(&g.0, graph::partition_random(&g.0, k, seed)?);
        *out = Box::into_raw(Box::new(RgnnPartition(book)));
        Ok(())
    })
}

/// Streaming edge-cut partitioner.
#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_edgecut(g: *const RgnnGraph, k: u32, out: *mut *mut RgnnPartition) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        let out = out_arg(out, "out")?;
        let book = graph::halo_expand(&g.0, graph::partition_edgecut(&g.0, k)?);
        *out = Box::into_raw(Box::new(RgnnPartition(book)));
        Ok(())
    })
}

/// Reads an RPB1 file written for `g`.
#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_load(g: *const RgnnGraph, path: *const c_char, out: *mut *mut RgnnPartition) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        let out = out_arg(out, "out")?;
        let book = graph::load_partition(&g.0, path_arg(path)?)?;
        *out = Box::into_raw(Box::new(RgnnPartition(book)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_save(book: *const RgnnPartition, path: *const c_char) -> RgnnStatus {
    guard(|| {
        let book = handle(book, "partition")?;
        graph::save_partition(&book.0, path_arg(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_num_parts(book: *const RgnnPartition) -> u32 {
    book.as_ref().map_or(0, |b| b.0.num_parts())
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_owner(book: *const RgnnPartition, v: u32, out: *mut u32) -> RgnnStatus {
    guard(|| {
        let book = handle(book, "partition")?;
        let out = out_arg(out, "out")?;
        if v as usize >= book.0.num_nodes() {
            return Err(Error::Lookup(v).into());
        }
        *out = book.0.owner(v);
        Ok(())
    })
}

/// Directed cross-partition adjacency entries of `g` under `book`.
#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_edge_cut(g: *const RgnnGraph, book: *const RgnnPartition, out: *mut u64) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        let book = handle(book, "partition")?;
        let out = out_arg(out, "out")?;
        if book.0.num_nodes() != g.0.num_nodes() {
            return Err(Fail(RgnnStatus::InvalidArgument, "partition was built for another graph".into()));
        }
        *out = graph::edge_cut(&g.0, &book.0) as u64;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_partition_free(book: *mut RgnnPartition) {
    if !book.is_null() {
        drop(Box::from_raw(book));
    }
}

/// Precomputes every epoch's batches over the training nodes of `g`.
/// `fanouts` holds `num_layers` entries, input layer first.
#[no_mangle]
pub unsafe extern "C" fn rgnn_plan_generate(
    g: *const RgnnGraph,
    fanouts: *const u64,
    num_layers: usize,
    batch_size: u64,
    epochs: u64,
    s0: u64,
    out: *mut *mut RgnnPlan,
) -> RgnnStatus {
    guard(|| {
        let g = handle(g, "graph")?;
        let out = out_arg(out, "out")?;
        if fanouts.is_null() && num_layers > 0 {
            return Err(null("fanouts"));
        }
        let fanouts: Vec<usize> =
            if num_layers == 0 { Vec::new() } else { std::slice::from_raw_parts(fanouts, num_layers).iter().map(|&f| f as usize).collect() };
        let train = g.0.nodes_in(Split::Train);
        let params = PlanParams {
            train_nodes: &train,
            fanouts: &fanouts,
            batch_size: batch_size as usize,
            epochs: epochs as usize,
            s0,
            materialize: false,
        };
        *out = Box::into_raw(Box::new(RgnnPlan(generate_plan(&g.0, &params)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_plan_digest(plan: *const RgnnPlan) -> u64 {
    plan.as_ref().map_or(0, |p| p.0.digest())
}

/// Writes the digest as 16 lowercase hex digits plus NUL; `len` must be at
/// least 17.
#[no_mangle]
pub unsafe extern "C" fn rgnn_plan_digest_hex(plan: *const RgnnPlan, buf: *mut c_char, len: usize) -> RgnnStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let hex = plan.0.digest_hex();
        if len < hex.len() + 1 {
            return Err(Fail(RgnnStatus::Shape, format!("buffer of {len} bytes, need {}", hex.len() + 1)));
        }
        std::ptr::copy_nonoverlapping(hex.as_ptr().cast(), buf, hex.len());
        *buf.add(hex.len()) = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_plan_batches_per_epoch(plan: *const RgnnPlan) -> u64 {
    plan.as_ref().map_or(0, |p| p.0.batches_per_epoch() as u64)
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_plan_epochs(plan: *const RgnnPlan) -> u64 {
    plan.as_ref().map_or(0, |p| p.0.epochs() as u64)
}

/// Copies the input node ids of `(epoch, batch)` into `buf` when it holds
/// at least that many entries; `*count` always receives the required size.
#[no_mangle]
pub unsafe extern "C" fn rgnn_plan_input_nodes(
    plan: *const RgnnPlan,
    g: *const RgnnGraph,
    epoch: u64,
    batch: u64,
    buf: *mut u32,
    len: usize,
    count: *mut usize,
) -> RgnnStatus {
    guard(|| {
        let plan = handle(plan, "plan")?;
        let g = handle(g, "graph")?;
        let count = out_arg(count, "count")?;
        let block = plan.0.block(&g.0, epoch as usize, batch as usize)?;
        let nodes = block.input_nodes();
        *count = nodes.len();
        if len < nodes.len() {
            return Err(Fail(RgnnStatus::Shape, format!("buffer of {len} ids, need {}", nodes.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::ptr::copy_nonoverlapping(nodes.as_ptr(), buf, nodes.len());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn rgnn_plan_free(plan: *mut RgnnPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}
