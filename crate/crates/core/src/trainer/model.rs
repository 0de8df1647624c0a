//! Mean-aggregator GraphSAGE layers with hand-written reverse pass.
//!
//! Layer `l` maps `h` (rows of `frontiers[l]`) to the rows of
//! `frontiers[l + 1]`:
//!
//! ```text
//! z_v = h_v W_self + mean_{u in sampled(v)} h_u W_neigh + b
//! h'_v = relu(z_v)            (the last layer returns z as logits)
//! ```
//!
//! An empty sampled neighborhood aggregates to the zero vector. Neighbor sums
//! run in ascending node id order so results are reproducible bit for bit.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampler::ComputationBlock;

/// Scalar type of the model: `f32` for training, `f64` for oracles.
pub trait Real: Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Debug + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + AddAssign + Sum + Debug + Send + Sync + 'static {}

#[inline]
fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite cast")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub din: usize,
    pub dout: usize,
    /// `din x dout`, row-major.
    pub w_self: Vec<T>,
    pub w_neigh: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    pub fn zeros(din: usize, dout: usize) -> Self {
        Self {
            din,
            dout,
            w_self: vec![T::zero(); din * dout],
            w_neigh: vec![T::zero(); din * dout],
            bias: vec![T::zero(); dout],
        }
    }

    fn blocks(&self) -> [&Vec<T>; 3] {
        [&self.w_self, &self.w_neigh, &self.bias]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<T>; 3] {
        [&mut self.w_self, &mut self.w_neigh, &mut self.bias]
    }
}

/// Parameters of every layer; gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Glorot-uniform weights and zero biases. `dims` runs from the input
    /// feature width to the number of classes. Draws happen in `f64` so the
    /// `f32` and `f64` models start from the same point up to rounding.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("layer widths {dims:?} need at least two positive entries")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (din, dout) = (w[0], w[1]);
                let limit = (6.0 / (din + dout) as f64).sqrt();
                let mut draw = |len: usize| -> Vec<T> { (0..len).map(|_| cast(rng.random_range(-limit..limit))).collect() };
                let w_self = draw(din * dout);
                let w_neigh = draw(din * dout);
                LayerParams { din, dout, w_self, w_neigh, bias: vec![T::zero(); dout] }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| LayerParams::zeros(l.din, l.dout)).collect() }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.din).collect();
        if let Some(last) = self.layers.last() {
            d.push(last.dout);
        }
        d
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.dout)
    }

    /// Every scalar in layer order: `w_self`, `w_neigh`, `bias` per layer.
    pub fn flat(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.blocks().into_iter().flat_map(|b| b.iter().copied())).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| 2 * l.din * l.dout + l.dout).sum()
    }

    /// Mutable access to the `k`-th scalar of [`flat`](Self::flat).
    pub fn param_mut(&mut self, mut k: usize) -> &mut T {
        for l in &mut self.layers {
            for b in l.blocks_mut() {
                if k < b.len() {
                    return &mut b[k];
                }
                k -= b.len();
            }
        }
        panic!("parameter index out of range");
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect();
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams { din: l.din, dout: l.dout, w_self: conv(&l.w_self), w_neigh: conv(&l.w_neigh), bias: conv(&l.bias) })
                .collect(),
        }
    }
}

/// `theta <- theta - lr * grad`.
pub fn sgd_step<T: Real>(params: &mut ModelParams<T>, grad: &ModelParams<T>, lr: T) {
    for (p, g) in params.layers.iter_mut().zip(&grad.layers) {
        for (pb, gb) in p.blocks_mut().into_iter().zip(g.blocks()) {
            for (x, &dx) in pb.iter_mut().zip(gb) {
                *x = *x - lr * dx;
            }
        }
    }
}

/// `out[r, :] += a[r, :] @ w` for `a: rows x din`, `w: din x dout`.
fn gemm_acc<T: Real>(out: &mut [T], a: &[T], rows: usize, din: usize, w: &[T], dout: usize) {
    for r in 0..rows {
        let o = &mut out[r * dout..(r + 1) * dout];
        for (i, &x) in a[r * din..(r + 1) * din].iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (acc, &wv) in o.iter_mut().zip(&w[i * dout..(i + 1) * dout]) {
                *acc += x * wv;
            }
        }
    }
}

/// `g += a^T @ dz` for `a: rows x din`, `dz: rows x dout`.
fn gemm_tn_acc<T: Real>(g: &mut [T], a: &[T], dz: &[T], rows: usize, din: usize, dout: usize) {
    for r in 0..rows {
        let dzr = &dz[r * dout..(r + 1) * dout];
        for (i, &x) in a[r * din..(r + 1) * din].iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (acc, &d) in g[i * dout..(i + 1) * dout].iter_mut().zip(dzr) {
                *acc += x * d;
            }
        }
    }
}

/// `out[i] += sum_o w[i, o] * dz[o]` (one row of `dz @ w^T`).
#[inline]
fn matvec_t_acc<T: Real>(out: &mut [T], w: &[T], dz: &[T], din: usize, dout: usize) {
    for i in 0..din {
        let mut s = T::zero();
        for (&wv, &d) in w[i * dout..(i + 1) * dout].iter().zip(dz) {
            s += wv * d;
        }
        out[i] += s;
    }
}

struct LayerTrace<T> {
    /// Rows of `frontiers[l]`.
    input: Vec<T>,
    /// Gathered self rows of the destinations.
    selfs: Vec<T>,
    aggs: Vec<T>,
    pre: Vec<T>,
}

fn check_shapes<T: Real>(block: &ComputationBlock, rows: usize, params: &ModelParams<T>) -> Result<()> {
    if params.layers.len() != block.num_layers() {
        return Err(Error::Shape(format!(
            "model has {} layers but block has {}",
            params.layers.len(),
            block.num_layers()
        )));
    }
    for w in params.layers.windows(2) {
        if w[0].dout != w[1].din {
            return Err(Error::Shape("layer widths do not chain".into()));
        }
    }
    let expect = block.input_nodes().len() * params.layers[0].din;
    if rows != expect {
        return Err(Error::Shape(format!("{rows} feature values for {expect} expected")));
    }
    Ok(())
}

fn forward_traced<T: Real>(block: &ComputationBlock, rows: &[f32], params: &ModelParams<T>) -> Result<(Vec<T>, Vec<LayerTrace<T>>)> {
    check_shapes(block, rows.len(), params)?;
    let mut h: Vec<T> = rows.iter().map(|&x| cast(x as f64)).collect();
    let last = params.layers.len() - 1;
    let mut traces = Vec::with_capacity(params.layers.len());
    for (l, (lp, lb)) in params.layers.iter().zip(&block.layers).enumerate() {
        let (din, dout) = (lp.din, lp.dout);
        let n_dst = lb.num_dst();
        let mut selfs = vec![T::zero(); n_dst * din];
        let mut aggs = vec![T::zero(); n_dst * din];
        for j in 0..n_dst {
            let s = lb.self_index[j] as usize;
            selfs[j * din..(j + 1) * din].copy_from_slice(&h[s * din..(s + 1) * din]);
            let nbrs = lb.neighbors_of(j);
            if nbrs.is_empty() {
                continue;
            }
            let a = &mut aggs[j * din..(j + 1) * din];
            for &u in nbrs {
                for (acc, &x) in a.iter_mut().zip(&h[u as usize * din..(u as usize + 1) * din]) {
                    *acc += x;
                }
            }
            let inv = T::one() / cast(nbrs.len() as f64);
            a.iter_mut().for_each(|x| *x = *x * inv);
        }
        let mut pre = Vec::with_capacity(n_dst * dout);
        for _ in 0..n_dst {
            pre.extend_from_slice(&lp.bias);
        }
        gemm_acc(&mut pre, &selfs, n_dst, din, &lp.w_self, dout);
        gemm_acc(&mut pre, &aggs, n_dst, din, &lp.w_neigh, dout);
        let next = if l == last { pre.clone() } else { pre.iter().map(|&z| z.max(T::zero())).collect() };
        traces.push(LayerTrace { input: std::mem::replace(&mut h, next), selfs, aggs, pre });
    }
    Ok((h, traces))
}

/// Logits for `block.seeds()`, row-major `|seeds| x num_classes`. `rows`
/// holds the features of `block.input_nodes()`.
pub fn forward<T: Real>(block: &ComputationBlock, rows: &[f32], params: &ModelParams<T>) -> Result<Vec<T>> {
    forward_traced(block, rows, params).map(|(logits, _)| logits)
}

/// Loss, gradient and per-seed correctness of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult<T> {
    pub loss: T,
    pub grad: ModelParams<T>,
    pub correct: usize,
}

/// Mean softmax cross-entropy over the seeds and its exact gradient.
pub fn loss_and_grad<T: Real>(block: &ComputationBlock, rows: &[f32], labels: &[u32], params: &ModelParams<T>) -> Result<BatchResult<T>> {
    let (logits, traces) = forward_traced(block, rows, params)?;
    let c = params.num_classes();
    let seeds = block.seeds();
    let s = seeds.len();
    let inv_s = T::one() / cast(s as f64);

    let mut loss = T::zero();
    let mut correct = 0;
    let mut dlogits = vec![T::zero(); s * c];
    for (j, &v) in seeds.iter().enumerate() {
        let y = *labels.get(v as usize).ok_or(Error::Lookup(v))? as usize;
        if y >= c {
            return Err(Error::Shape(format!("label {y} of node {v} >= {c} classes")));
        }
        let z = &logits[j * c..(j + 1) * c];
        if argmax(z) == y {
            correct += 1;
        }
        let m = z.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = z.iter().map(|&x| (x - m).exp()).sum();
        let log_sum = sum.ln() + m;
        loss += log_sum - z[y];
        let d = &mut dlogits[j * c..(j + 1) * c];
        for k in 0..c {
            d[k] = (z[k] - log_sum).exp() * inv_s;
        }
        d[y] = d[y] - inv_s;
    }
    loss = loss * inv_s;

    let mut grad = params.zeros_like();
    let last = params.layers.len() - 1;
    let mut dh = dlogits;
    for l in (0..params.layers.len()).rev() {
        let lp = &params.layers[l];
        let lb = &block.layers[l];
        let tr = &traces[l];
        let (din, dout) = (lp.din, lp.dout);
        let n_dst = lb.num_dst();
        let mut dz = dh;
        if l != last {
            for (d, &z) in dz.iter_mut().zip(&tr.pre) {
                if z <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        let gl = &mut grad.layers[l];
        gemm_tn_acc(&mut gl.w_self, &tr.selfs, &dz, n_dst, din, dout);
        gemm_tn_acc(&mut gl.w_neigh, &tr.aggs, &dz, n_dst, din, dout);
        for j in 0..n_dst {
            for (b, &d) in gl.bias.iter_mut().zip(&dz[j * dout..(j + 1) * dout]) {
                *b += d;
            }
        }
        if l == 0 {
            break;
        }
        let n_src = tr.input.len() / din;
        let mut dprev = vec![T::zero(); n_src * din];
        let mut dagg = vec![T::zero(); din];
        for j in 0..n_dst {
            let dzj = &dz[j * dout..(j + 1) * dout];
            let s = lb.self_index[j] as usize;
            matvec_t_acc(&mut dprev[s * din..(s + 1) * din], &lp.w_self, dzj, din, dout);
            let nbrs = lb.neighbors_of(j);
            if nbrs.is_empty() {
                continue;
            }
            dagg.iter_mut().for_each(|x| *x = T::zero());
            matvec_t_acc(&mut dagg, &lp.w_neigh, dzj, din, dout);
            let inv = T::one() / cast(nbrs.len() as f64);
            for &u in nbrs {
                for (acc, &g) in dprev[u as usize * din..(u as usize + 1) * din].iter_mut().zip(&dagg) {
                    *acc += g * inv;
                }
            }
        }
        dh = dprev;
    }
    Ok(BatchResult { loss, grad, correct })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(z: &[T]) -> usize {
    let mut best = 0;
    for (k, &x) in z.iter().enumerate().skip(1) {
        if x > z[best] {
            best = k;
        }
    }
    best
}
