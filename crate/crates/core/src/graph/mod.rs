//! CSR graph storage, synthetic generation and partitioning.

mod io;
mod partition;
mod synth;

pub use io::{load_graph, load_partition, read_graph, save_graph, save_partition, write_graph};
pub use partition::{edge_cut, halo_expand, partition_edgecut, partition_random, PartitionBook};
pub use synth::synth_powerlaw;

use crate::error::{Error, Result};

pub type NodeId = u32;
pub type PartitionId = u32;

/// Directed CSR graph with dense per-node features, class labels and
/// train/val/test masks. Undirected graphs are stored with both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    indptr: Vec<u64>,
    indices: Vec<NodeId>,
    features: Vec<f32>,
    labels: Vec<u32>,
    feat_dim: usize,
    num_classes: usize,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

impl Graph {
    /// Assembles a graph from raw parts and checks every structural invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        indptr: Vec<u64>,
        indices: Vec<NodeId>,
        features: Vec<f32>,
        labels: Vec<u32>,
        feat_dim: usize,
        num_classes: usize,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let g = Self {
            indptr,
            indices,
            features,
            labels,
            feat_dim,
            num_classes,
            train_mask,
            val_mask,
            test_mask,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds an undirected graph from an edge list. Each pair is stored in
    /// both directions; duplicate pairs and self loops are dropped. Neighbor
    /// lists are sorted ascending.
    pub fn from_undirected_edges(
        num_nodes: usize,
        edges: &[(NodeId, NodeId)],
        features: Vec<f32>,
        labels: Vec<u32>,
        feat_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); num_nodes];
        for &(a, b) in edges {
            if a as usize >= num_nodes || b as usize >= num_nodes {
                return Err(Error::validation(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                continue;
            }
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        let mut indptr = Vec::with_capacity(num_nodes + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for nbrs in &mut adj {
            nbrs.sort_unstable();
            nbrs.dedup();
            indices.extend_from_slice(nbrs);
            indptr.push(indices.len() as u64);
        }
        Self::from_parts(
            indptr,
            indices,
            features,
            labels,
            feat_dim,
            num_classes,
            vec![false; num_nodes],
            vec![false; num_nodes],
            vec![false; num_nodes],
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.indptr.is_empty() {
            return Err(Error::validation("indptr must hold num_nodes + 1 entries"));
        }
        if n > NodeId::MAX as usize {
            return Err(Error::validation(format!("{n} nodes exceed the 32-bit id space")));
        }
        if self.indptr[0] != 0 {
            return Err(Error::validation("indptr[0] != 0"));
        }
        if self.indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::validation("indptr is not nondecreasing"));
        }
        if self.indptr[n] != self.indices.len() as u64 {
            return Err(Error::validation(format!(
                "indptr[num_nodes] = {} but there are {} edges",
                self.indptr[n],
                self.indices.len()
            )));
        }
        if let Some(&bad) = self.indices.iter().find(|&&u| u as usize >= n) {
            return Err(Error::validation(format!("neighbor id {bad} >= num_nodes {n}")));
        }
        if self.features.len() != n * self.feat_dim {
            return Err(Error::validation("feature matrix has wrong size"));
        }
        if self.labels.len() != n {
            return Err(Error::validation("label array has wrong size"));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y as usize >= self.num_classes) {
            return Err(Error::validation(format!("label {bad} >= num_classes")));
        }
        for m in [&self.train_mask, &self.val_mask, &self.test_mask] {
            if m.len() != n {
                return Err(Error::validation("mask array has wrong size"));
            }
        }
        for v in 0..n {
            let members = self.train_mask[v] as u8 + self.val_mask[v] as u8 + self.test_mask[v] as u8;
            if members > 1 {
                return Err(Error::validation(format!("node {v} is in more than one mask")));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.indptr.len().saturating_sub(1)
    }

    pub fn num_edges(&self) -> usize {
        self.indices.len()
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn indptr(&self) -> &[u64] {
        &self.indptr
    }

    pub fn indices(&self) -> &[NodeId] {
        &self.indices
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.indices[self.indptr[v] as usize..self.indptr[v + 1] as usize]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        (self.indptr[v + 1] - self.indptr[v]) as usize
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    #[inline]
    pub fn feature_row(&self, v: NodeId) -> &[f32] {
        let d = self.feat_dim;
        &self.features[v as usize * d..(v as usize + 1) * d]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn val_mask(&self) -> &[bool] {
        &self.val_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.train_mask,
            Split::Val => &self.val_mask,
            Split::Test => &self.test_mask,
        }
    }

    /// Node ids in `split`, ascending.
    pub fn nodes_in(&self, split: Split) -> Vec<NodeId> {
        self.mask(split)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(v, _)| v as NodeId)
            .collect()
    }

    /// Replaces all three masks. Fails if they overlap or have the wrong length.
    pub fn set_masks(&mut self, train: Vec<bool>, val: Vec<bool>, test: Vec<bool>) -> Result<()> {
        let old = (
            std::mem::replace(&mut self.train_mask, train),
            std::mem::replace(&mut self.val_mask, val),
            std::mem::replace(&mut self.test_mask, test),
        );
        if let Err(e) = self.validate() {
            self.train_mask = old.0;
            self.val_mask = old.1;
            self.test_mask = old.2;
            return Err(e);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}
