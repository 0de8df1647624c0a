use std::collections::VecDeque;

use super::{Graph, NodeId, PartitionId};
use crate::error::{Error, Result};
use crate::rng;

/// Node ownership plus the one-hop halo of every partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionBook {
    k: u32,
    owner: Vec<PartitionId>,
    halo: Vec<Vec<NodeId>>,
}

impl PartitionBook {
    /// A book with empty halos. Every owner must be `< k`.
    pub fn new(k: u32, owner: Vec<PartitionId>) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("partition count must be at least 1"));
        }
        if let Some(&bad) = owner.iter().find(|&&p| p >= k) {
            return Err(Error::validation(format!("owner {bad} >= k={k}")));
        }
        Ok(Self { k, owner, halo: vec![Vec::new(); k as usize] })
    }

    pub fn num_parts(&self) -> u32 {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.owner.len()
    }

    #[inline]
    pub fn owner(&self, v: NodeId) -> PartitionId {
        self.owner[v as usize]
    }

    pub fn owners(&self) -> &[PartitionId] {
        &self.owner
    }

    /// Owned node ids of `p`, ascending.
    pub fn owned(&self, p: PartitionId) -> Vec<NodeId> {
        self.owner
            .iter()
            .enumerate()
            .filter(|(_, &o)| o == p)
            .map(|(v, _)| v as NodeId)
            .collect()
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k as usize];
        for &p in &self.owner {
            sizes[p as usize] += 1;
        }
        sizes
    }

    pub fn halo(&self, p: PartitionId) -> &[NodeId] {
        &self.halo[p as usize]
    }

    pub fn has_halo(&self) -> bool {
        self.halo.iter().any(|h| !h.is_empty())
    }
}

/// `owner[v] = mix(seed, v) mod k`.
pub fn partition_random(g: &Graph, k: u32, seed: u64) -> Result<PartitionBook> {
    if k == 0 {
        return Err(Error::arg("partition count must be at least 1"));
    }
    let owner = (0..g.num_nodes() as u64)
        .map(|v| (rng::derive_key(&[seed, v]) % k as u64) as PartitionId)
        .collect();
    PartitionBook::new(k, owner)
}

/// Linear Deterministic Greedy streaming partitioner.
///
/// Nodes are visited in BFS order from node 0 (restarting at the lowest
/// unvisited id for each further component). Each node goes to the partition
/// maximizing `|neighbors already in p| * (1 - size_p / capacity)` among
/// partitions below `capacity = ceil(1.05 * n / k)`. Equal scores go to the
/// smaller partition, then to the lower id.
pub fn partition_edgecut(g: &Graph, k: u32) -> Result<PartitionBook> {
    if k == 0 {
        return Err(Error::arg("partition count must be at least 1"));
    }
    let n = g.num_nodes();
    let kk = k as usize;
    // ceil(1.05 n / k) in integers: ceil(105 n / (100 k))
    let capacity = ((105 * n as u128).div_ceil(100 * kk as u128)) as usize;
    const UNASSIGNED: PartitionId = PartitionId::MAX;
    let mut owner = vec![UNASSIGNED; n];
    let mut sizes = vec![0usize; kk];
    let mut visited = vec![false; n];
    let mut counts = vec![0usize; kk];
    let mut queue = VecDeque::new();

    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        queue.push_back(root as NodeId);
        while let Some(v) = queue.pop_front() {
            counts.iter_mut().for_each(|c| *c = 0);
            for &u in g.neighbors(v) {
                let o = owner[u as usize];
                if o != UNASSIGNED {
                    counts[o as usize] += 1;
                }
                if !visited[u as usize] {
                    visited[u as usize] = true;
                    queue.push_back(u);
                }
            }
            let mut best: Option<(f64, usize)> = None;
            for p in 0..kk {
                if sizes[p] >= capacity {
                    continue;
                }
                let score = counts[p] as f64 * (1.0 - sizes[p] as f64 / capacity as f64);
                let better = match best {
                    None => true,
                    Some((bs, bp)) => score > bs || (score == bs && sizes[p] < sizes[bp]),
                };
                if better {
                    best = Some((score, p));
                }
            }
            let (_, p) = best.expect("k * capacity >= n leaves room in some partition");
            owner[v as usize] = p as PartitionId;
            sizes[p] += 1;
        }
    }
    PartitionBook::new(k, owner)
}

/// Fills `halo[p]` with every non-owned node adjacent to a node owned by `p`.
pub fn halo_expand(g: &Graph, mut book: PartitionBook) -> PartitionBook {
    let k = book.k as usize;
    let mut mark = vec![u32::MAX; g.num_nodes()];
    let mut halo = vec![Vec::new(); k];
    for p in 0..k as PartitionId {
        for v in 0..g.num_nodes() as NodeId {
            if book.owner(v) != p {
                continue;
            }
            for &u in g.neighbors(v) {
                if book.owner(u) != p && mark[u as usize] != p {
                    mark[u as usize] = p;
                    halo[p as usize].push(u);
                }
            }
        }
        halo[p as usize].sort_unstable();
    }
    book.halo = halo;
    book
}

/// Number of directed edge entries whose endpoints have different owners.
/// For a symmetrized undirected graph this is twice the undirected cut.
pub fn edge_cut(g: &Graph, book: &PartitionBook) -> usize {
    (0..g.num_nodes() as NodeId)
        .map(|v| {
            let p = book.owner(v);
            g.neighbors(v).iter().filter(|&&u| book.owner(u) != p).count()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth_powerlaw;

    fn graph(n: usize, edges: &[(NodeId, NodeId)]) -> Graph {
        Graph::from_undirected_edges(n, edges, vec![0.0; n], vec![0; n], 1, 1).unwrap()
    }

    fn clique_edges(lo: NodeId, hi: NodeId) -> Vec<(NodeId, NodeId)> {
        let mut e = Vec::new();
        for a in lo..hi {
            for b in a + 1..hi {
                e.push((a, b));
            }
        }
        e
    }

    #[test]
    fn k_zero_rejected() {
        let g = graph(3, &[(0, 1)]);
        assert!(matches!(partition_random(&g, 0, 1), Err(Error::Argument(_))));
        assert!(matches!(partition_edgecut(&g, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn single_partition() {
        let g = synth_powerlaw(200, 3, 1, 2, 4).unwrap();
        let r = halo_expand(&g, partition_random(&g, 1, 9).unwrap());
        assert!(r.owners().iter().all(|&p| p == 0));
        assert!(!r.has_halo());
        let e = partition_edgecut(&g, 1).unwrap();
        assert_eq!(edge_cut(&g, &e), 0);
    }

    #[test]
    fn random_is_deterministic_and_balanced() {
        let g = synth_powerlaw(10_000, 2, 1, 2, 4).unwrap();
        let a = partition_random(&g, 2, 17).unwrap();
        assert_eq!(a, partition_random(&g, 2, 17).unwrap());
        for s in a.part_sizes() {
            assert!((4700..=5300).contains(&s), "size {s}");
        }
    }

    #[test]
    fn two_disconnected_cliques_have_zero_cut() {
        for c in [4u32, 10, 25] {
            let mut e = clique_edges(0, c);
            e.extend(clique_edges(c, 2 * c));
            let g = graph(2 * c as usize, &e);
            let book = partition_edgecut(&g, 2).unwrap();
            assert_eq!(edge_cut(&g, &book), 0, "clique size {c}");
        }
    }

    #[test]
    fn edgecut_respects_capacity() {
        let g = synth_powerlaw(5000, 4, 1, 2, 8).unwrap();
        for k in [2u32, 3, 4, 7] {
            let book = partition_edgecut(&g, k).unwrap();
            let cap = (105 * 5000usize).div_ceil(100 * k as usize);
            assert!(book.part_sizes().iter().all(|&s| s <= cap), "k={k}");
            assert_eq!(book, partition_edgecut(&g, k).unwrap());
        }
    }

    #[test]
    fn edgecut_beats_random_on_powerlaw() {
        let g = synth_powerlaw(10_000, 5, 1, 2, 3).unwrap();
        let ldg = edge_cut(&g, &partition_edgecut(&g, 2).unwrap());
        let rnd = edge_cut(&g, &partition_random(&g, 2, 3).unwrap());
        assert!(ldg < rnd, "ldg {ldg} random {rnd}");
    }

    #[test]
    fn halo_of_path() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let book = halo_expand(&g, PartitionBook::new(2, vec![0, 0, 1]).unwrap());
        assert_eq!(book.halo(0), &[2]);
        assert_eq!(book.halo(1), &[1]);
    }

    #[test]
    fn halo_sound_and_complete() {
        let g = synth_powerlaw(2000, 3, 1, 2, 5).unwrap();
        let book = halo_expand(&g, partition_random(&g, 3, 1).unwrap());
        for p in 0..3 {
            let halo = book.halo(p);
            assert!(halo.windows(2).all(|w| w[0] < w[1]));
            for u in 0..g.num_nodes() as NodeId {
                let expected = book.owner(u) != p && g.neighbors(u).iter().any(|&v| book.owner(v) == p);
                assert_eq!(halo.binary_search(&u).is_ok(), expected, "p={p} u={u}");
            }
        }
    }
}
