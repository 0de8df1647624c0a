//! Communication-efficient distributed mini-batch GNN training.
//!
//! The crate is organised as the training pipeline runs:
//!
//! * [`graph`] holds the CSR graph, the synthetic generator, the RGF1/RPB1
//!   file formats and the partitioners.
//! * [`sampler`] derives per-batch seeds and builds sampled computation blocks.
//! * [`plan`] precomputes every epoch's blocks offline and ranks remote nodes
//!   by access frequency.
//! * [`store`] is the sharded key-value feature store with in-process and TCP
//!   transports and exact RPC/byte accounting.
//! * [`cache`] is the double-buffered hot-node cache.
//! * [`prefetch`] assembles upcoming batches' features on a background thread.
//! * [`trainer`] is a small GraphSAGE-style model with analytic gradients.
//! * [`harness`] wires it all together and emits per-epoch metrics.

pub mod cache;
pub mod error;
pub mod graph;
pub mod harness;
pub mod plan;
pub mod prefetch;
pub mod rng;
pub mod sampler;
pub mod store;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId, PartitionBook};
pub use plan::{BatchPlan, FrequencyTable};
pub use sampler::{ComputationBlock, SeedSchedule};
