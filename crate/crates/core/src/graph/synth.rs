use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Graph, NodeId};
use crate::error::{Error, Result};

/// Per-dimension scale of the class centroid added to each node's noise.
const CLASS_SIGNAL: f32 = 0.5;
/// Votes a node's own planted class receives in the smoothing pass.
const SELF_VOTES: u32 = 2;

/// Barabási–Albert preferential-attachment graph with a learnable planted
/// labelling.
///
/// Node `t >= m` attaches to `m` distinct earlier nodes drawn with probability
/// proportional to degree, giving exactly `m * (n - m)` undirected edges.
/// Every node gets a planted class `v mod num_classes`; its features are
/// standard normal noise plus a scaled centroid of that class. The final label
/// is a vote over the node's own planted class (weight 2) and each neighbor's
/// planted class (weight 1), lowest class winning ties, so neighborhoods carry
/// label information beyond what a node's own features show. Masks split the
/// nodes 70/15/15 after a seeded shuffle.
pub fn synth_powerlaw(n: usize, m: usize, feat_dim: usize, num_classes: usize, seed: u64) -> Result<Graph> {
    if m < 1 || n <= m {
        return Err(Error::arg(format!("need n > m >= 1, got n={n} m={m}")));
    }
    if num_classes == 0 {
        return Err(Error::arg("num_classes must be at least 1"));
    }
    if n > NodeId::MAX as usize {
        return Err(Error::arg("n exceeds the 32-bit id space"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut edges: Vec<(NodeId, NodeId)> = Vec::with_capacity(m * (n - m));
    let mut repeated: Vec<NodeId> = Vec::with_capacity(2 * m * (n - m));
    let mut targets: Vec<NodeId> = (0..m as NodeId).collect();
    for source in m as NodeId..n as NodeId {
        for &t in &targets {
            edges.push((source, t));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, m));
        targets.clear();
        while targets.len() < m {
            let pick = repeated[rng.random_range(0..repeated.len())];
            if !targets.contains(&pick) {
                targets.push(pick);
            }
        }
    }

    let planted = |v: usize| (v % num_classes) as u32;
    let centroids: Vec<f32> = (0..num_classes * feat_dim)
        .map(|_| CLASS_SIGNAL * rng.sample::<f32, _>(StandardNormal))
        .collect();
    let mut features = Vec::with_capacity(n * feat_dim);
    for v in 0..n {
        let c = planted(v) as usize;
        for j in 0..feat_dim {
            let noise: f32 = rng.sample(StandardNormal);
            features.push(noise + centroids[c * feat_dim + j]);
        }
    }

    let placeholder = vec![0u32; n];
    let mut g = Graph::from_undirected_edges(n, &edges, features, placeholder, feat_dim, num_classes)?;

    let mut votes = vec![0u32; num_classes];
    let labels: Vec<u32> = (0..n)
        .map(|v| {
            votes.iter_mut().for_each(|x| *x = 0);
            votes[planted(v) as usize] += SELF_VOTES;
            for &u in g.neighbors(v as NodeId) {
                votes[planted(u as usize) as usize] += 1;
            }
            // max_by_key keeps the last maximum; scan in reverse so the lowest class wins.
            (0..num_classes).rev().max_by_key(|&c| votes[c]).unwrap() as u32
        })
        .collect();
    g.labels = labels;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = n * 70 / 100;
    let n_val = n * 15 / 100;
    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    for (rank, &v) in order.iter().enumerate() {
        if rank < n_train {
            train[v] = true;
        } else if rank < n_train + n_val {
            val[v] = true;
        } else {
            test[v] = true;
        }
    }
    g.set_masks(train, val, test)?;
    Ok(g)
}
