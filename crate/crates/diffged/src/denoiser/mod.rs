//! The denoising network p(M0 | Mt, G, G'): per-graph GIN encoders, cross-graph
//! anisotropic layers conditioned on the time step, and a symmetric sigmoid
//! head over both pair directions.
//!
//! Node embeddings start as one-hot labels; pair embeddings start as
//! sinusoidal encodings of the binary matrix entries; the time step enters
//! every layer through a learned projection of its sinusoidal embedding.
//! All weights are shared between the two graphs and between the (v,v') and
//! (v',v) directions, which together with the symmetrized head makes
//! `forward(G,G',M)` exactly the transpose of `forward(G',G,M^T)`.

mod backward;

pub use backward::denoise_backward;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::MatchingMatrix;
use crate::error::{Error, Result};
use crate::graph::{GraphPair, LabeledGraph};
use crate::rng::stream;
use crate::tensor::{Mat, Mlp};

/// Variance guard for graph normalization.
const NORM_EPS: f64 = 1e-5;

/// Hard caps on network size; configs are parsed from untrusted files and
/// must be rejected before any allocation is sized from them.
pub const MAX_LAYERS: usize = 64;
pub const MAX_LAYER_WIDTH: usize = 8192;
pub const MAX_VOCAB: usize = 65536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Output width of each layer.
    pub layer_dims: Vec<usize>,
    pub vocab_size: usize,
    /// Base of the sinusoidal embedding frequencies.
    pub freq_base: f64,
}

impl DenoiserConfig {
    pub fn new(layer_dims: Vec<usize>, vocab_size: usize) -> Result<Self> {
        let config = Self { layer_dims, vocab_size, freq_base: 10_000.0 };
        config.validate()?;
        Ok(config)
    }

    /// Six layers tapering 128 -> 32.
    pub fn default_dims() -> Vec<usize> {
        vec![128, 64, 32, 32, 32, 32]
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() || self.layer_dims.len() > MAX_LAYERS {
            return Err(Error::InvalidArgument(format!(
                "layer count must be in 1..={MAX_LAYERS}"
            )));
        }
        if self.layer_dims.iter().any(|&d| d == 0 || d % 2 != 0 || d > MAX_LAYER_WIDTH) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be even and in 2..={MAX_LAYER_WIDTH} (sinusoidal time embeddings)"
            )));
        }
        if self.vocab_size == 0 || self.vocab_size > MAX_VOCAB {
            return Err(Error::InvalidArgument(format!(
                "vocab_size must be in 1..={MAX_VOCAB}"
            )));
        }
        if !(self.freq_base > 1.0 && self.freq_base.is_finite()) {
            return Err(Error::InvalidArgument("freq_base must be finite and exceed 1".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.layer_dims.len()
    }

    fn node_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.vocab_size
        } else {
            self.layer_dims[layer - 1]
        }
    }

    fn pair_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.layer_dims[0]
        } else {
            self.layer_dims[layer - 1]
        }
    }

    fn d_out(&self, layer: usize) -> usize {
        self.layer_dims[layer]
    }
}

/// Learnable graph-normalization parameters: scale, mean-shift factor, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl NormParams {
    /// Identity-leaning init: full mean subtraction, unit scale, zero bias.
    pub fn init(dim: usize) -> Self {
        Self { gamma: vec![1.0; dim], alpha: vec![1.0; dim], zeta: vec![0.0; dim] }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { gamma: vec![0.0; dim], alpha: vec![0.0; dim], zeta: vec![0.0; dim] }
    }
}

/// Parameters of one denoising layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub gin: Mlp,
    pub w1: Mat,
    pub w2: Mat,
    pub w3: Mat,
    pub w4: Mat,
    pub w5: Mat,
    pub w6: Mat,
    pub w7: Mat,
    pub mlp: Mlp,
    pub gn_pair: NormParams,
    pub gn_node: NormParams,
}

impl LayerParams {
    fn init<R: Rng>(config: &DenoiserConfig, layer: usize, rng: &mut R) -> Self {
        let d_in_node = config.node_in(layer);
        let d_in_pair = config.pair_in(layer);
        let d = config.d_out(layer);
        let mat = |d_in: usize, rng: &mut R| {
            let bound = 1.0 / (d_in as f64).sqrt();
            let mut m = Mat::zeros(d_in, d);
            for x in m.data_mut() {
                *x = rng.random_range(-bound..bound);
            }
            m
        };
        Self {
            gin: Mlp::init(d_in_node, d, d, rng),
            w1: mat(d_in_pair, rng),
            w2: mat(d, rng),
            w3: mat(d, rng),
            w4: mat(d, rng),
            w5: mat(d, rng),
            w6: mat(d, rng),
            w7: mat(d, rng),
            mlp: Mlp::init(d, d, d, rng),
            gn_pair: NormParams::init(d),
            gn_node: NormParams::init(d),
        }
    }

    fn zeros(config: &DenoiserConfig, layer: usize) -> Self {
        let d_in_node = config.node_in(layer);
        let d_in_pair = config.pair_in(layer);
        let d = config.d_out(layer);
        Self {
            gin: Mlp::zeros(d_in_node, d, d),
            w1: Mat::zeros(d_in_pair, d),
            w2: Mat::zeros(d, d),
            w3: Mat::zeros(d, d),
            w4: Mat::zeros(d, d),
            w5: Mat::zeros(d, d),
            w6: Mat::zeros(d, d),
            w7: Mat::zeros(d, d),
            mlp: Mlp::zeros(d, d, d),
            gn_pair: NormParams::zeros(d),
            gn_node: NormParams::zeros(d),
        }
    }
}

/// All learnable weights of the denoising network. The same structure doubles
/// as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub config: DenoiserConfig,
    pub layers: Vec<LayerParams>,
    pub head: Mlp,
}

impl DenoiserParams {
    /// Seeded uniform init in +-1/sqrt(fan_in) per weight block.
    pub fn init(config: &DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, 0);
        let layers =
            (0..config.layers()).map(|l| LayerParams::init(config, l, &mut rng)).collect();
        let d_last = *config.layer_dims.last().unwrap();
        let head = Mlp::init(d_last, d_last, 1, &mut rng);
        Ok(Self { config: config.clone(), layers, head })
    }

    /// Zero-filled parameters with the same shapes (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let config = &self.config;
        let layers = (0..config.layers()).map(|l| LayerParams::zeros(config, l)).collect();
        let d_last = *config.layer_dims.last().unwrap();
        Self { config: config.clone(), layers, head: Mlp::zeros(d_last, d_last, 1) }
    }

    /// Visits every parameter block in a fixed canonical order.
    pub fn for_each_block(&self, mut f: impl FnMut(String, &[f64])) {
        for (l, layer) in self.layers.iter().enumerate() {
            let p = |name: &str| format!("layers.{l}.{name}");
            f(p("gin.a.w"), layer.gin.a.w.data());
            f(p("gin.a.b"), &layer.gin.a.b);
            f(p("gin.b.w"), layer.gin.b.w.data());
            f(p("gin.b.b"), &layer.gin.b.b);
            f(p("w1"), layer.w1.data());
            f(p("w2"), layer.w2.data());
            f(p("w3"), layer.w3.data());
            f(p("w4"), layer.w4.data());
            f(p("w5"), layer.w5.data());
            f(p("w6"), layer.w6.data());
            f(p("w7"), layer.w7.data());
            f(p("mlp.a.w"), layer.mlp.a.w.data());
            f(p("mlp.a.b"), &layer.mlp.a.b);
            f(p("mlp.b.w"), layer.mlp.b.w.data());
            f(p("mlp.b.b"), &layer.mlp.b.b);
            f(p("gn_pair.gamma"), &layer.gn_pair.gamma);
            f(p("gn_pair.alpha"), &layer.gn_pair.alpha);
            f(p("gn_pair.zeta"), &layer.gn_pair.zeta);
            f(p("gn_node.gamma"), &layer.gn_node.gamma);
            f(p("gn_node.alpha"), &layer.gn_node.alpha);
            f(p("gn_node.zeta"), &layer.gn_node.zeta);
        }
        f("head.a.w".into(), self.head.a.w.data());
        f("head.a.b".into(), &self.head.a.b);
        f("head.b.w".into(), self.head.b.w.data());
        f("head.b.b".into(), &self.head.b.b);
    }

    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(String, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let p = |name: &str| format!("layers.{l}.{name}");
            f(p("gin.a.w"), layer.gin.a.w.data_mut());
            f(p("gin.a.b"), &mut layer.gin.a.b);
            f(p("gin.b.w"), layer.gin.b.w.data_mut());
            f(p("gin.b.b"), &mut layer.gin.b.b);
            f(p("w1"), layer.w1.data_mut());
            f(p("w2"), layer.w2.data_mut());
            f(p("w3"), layer.w3.data_mut());
            f(p("w4"), layer.w4.data_mut());
            f(p("w5"), layer.w5.data_mut());
            f(p("w6"), layer.w6.data_mut());
            f(p("w7"), layer.w7.data_mut());
            f(p("mlp.a.w"), layer.mlp.a.w.data_mut());
            f(p("mlp.a.b"), &mut layer.mlp.a.b);
            f(p("mlp.b.w"), layer.mlp.b.w.data_mut());
            f(p("mlp.b.b"), &mut layer.mlp.b.b);
            f(p("gn_pair.gamma"), &mut layer.gn_pair.gamma);
            f(p("gn_pair.alpha"), &mut layer.gn_pair.alpha);
            f(p("gn_pair.zeta"), &mut layer.gn_pair.zeta);
            f(p("gn_node.gamma"), &mut layer.gn_node.gamma);
            f(p("gn_node.alpha"), &mut layer.gn_node.alpha);
            f(p("gn_node.zeta"), &mut layer.gn_node.zeta);
        }
        f("head.a.w".into(), self.head.a.w.data_mut());
        f("head.a.b".into(), &mut self.head.a.b);
        f("head.b.w".into(), self.head.b.w.data_mut());
        f("head.b.b".into(), &mut self.head.b.b);
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_block(|_, data| n += data.len());
        n
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.for_each_block(|_, data| out.extend_from_slice(data));
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        let mut overflow = false;
        self.for_each_block_mut(|_, data| {
            if offset + data.len() <= flat.len() {
                data.copy_from_slice(&flat[offset..offset + data.len()]);
            } else {
                overflow = true;
            }
            offset += data.len();
        });
        if overflow || offset != flat.len() {
            return Err(Error::Shape(format!(
                "flat parameter vector has length {}, expected {offset}",
                flat.len()
            )));
        }
        Ok(())
    }

    /// Adds `other`'s blocks element-wise (gradient accumulation).
    pub fn add_assign(&mut self, other: &Self) {
        let flat = other.to_flat();
        let mut offset = 0;
        self.for_each_block_mut(|_, data| {
            let len = data.len();
            for (a, &b) in data.iter_mut().zip(&flat[offset..offset + len]) {
                *a += b;
            }
            offset += len;
        });
    }

    pub fn scale(&mut self, factor: f64) {
        self.for_each_block_mut(|_, data| {
            for x in data {
                *x *= factor;
            }
        });
    }
}

/// Sinusoidal position embedding: entry `2i` is `sin(x / base^(2i/dim))`,
/// entry `2i+1` the matching cosine. `dim` must be even.
pub fn sinusoidal_embedding(x: f64, dim: usize, base: f64) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("embedding dim must be even (got {dim})")));
    }
    let mut out = vec![0.0; dim];
    for i in 0..dim / 2 {
        let angle = x / base.powf(2.0 * i as f64 / dim as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

/// Per-channel statistics of a joint normalization group.
#[derive(Debug, Clone)]
pub(crate) struct GnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Graph normalization over the union of `parts`' rows, per feature channel:
/// `y = gamma * (x - alpha * mean) / sqrt(E[(x - alpha * mean)^2] + eps) + zeta`.
///
/// Part sums are reduced independently and then combined, so the result is
/// bit-stable under reordering of the parts.
pub(crate) fn graph_norm_fwd(parts: &[&Mat], p: &NormParams) -> (Vec<Mat>, GnStats) {
    let dim = p.gamma.len();
    let total_rows: usize = parts.iter().map(|m| m.rows()).sum();
    assert!(total_rows > 0, "empty normalization group");
    for m in parts {
        assert_eq!(m.cols(), dim, "norm channel mismatch");
    }

    // mean per channel: commutative combination of per-part sums
    let mut mean = vec![0.0; dim];
    for m in parts {
        for (acc, s) in mean.iter_mut().zip(m.column_sums()) {
            *acc += s;
        }
    }
    for x in &mut mean {
        *x /= total_rows as f64;
    }

    // second moment of the alpha-shifted values
    let mut var = vec![0.0; dim];
    for m in parts {
        let mut part = vec![0.0; dim];
        for r in 0..m.rows() {
            for (c, &x) in m.row(r).iter().enumerate() {
                let d = x - p.alpha[c] * mean[c];
                part[c] += d * d;
            }
        }
        for (acc, s) in var.iter_mut().zip(part) {
            *acc += s;
        }
    }
    let std: Vec<f64> = var.iter().map(|&v| (v / total_rows as f64 + NORM_EPS).sqrt()).collect();

    let outputs = parts
        .iter()
        .map(|m| {
            let mut out = Mat::zeros(m.rows(), dim);
            for r in 0..m.rows() {
                let src = m.row(r);
                let dst = out.row_mut(r);
                for c in 0..dim {
                    let d = src[c] - p.alpha[c] * mean[c];
                    dst[c] = p.gamma[c] * d / std[c] + p.zeta[c];
                }
            }
            out
        })
        .collect();
    (outputs, GnStats { mean, std })
}

/// Backward pass of [`graph_norm_fwd`]; accumulates parameter gradients and
/// returns input gradients per part.
pub(crate) fn graph_norm_bwd(
    parts: &[&Mat],
    upstream: &[&Mat],
    stats: &GnStats,
    p: &NormParams,
    grad: &mut NormParams,
) -> Vec<Mat> {
    let dim = p.gamma.len();
    let total_rows: usize = parts.iter().map(|m| m.rows()).sum();
    let n = total_rows as f64;

    // Per-channel reductions over the joint group.
    let mut sum_gd = vec![0.0; dim]; // sum of upstream * gamma * shifted
    let mut sum_dy = vec![0.0; dim];
    let mut sum_dy_d = vec![0.0; dim]; // sum of upstream * shifted (for gamma grad)
    for (m, dy) in parts.iter().zip(upstream) {
        let mut part_gd = vec![0.0; dim];
        let mut part_dy = vec![0.0; dim];
        let mut part_dy_d = vec![0.0; dim];
        for r in 0..m.rows() {
            let x = m.row(r);
            let g = dy.row(r);
            for c in 0..dim {
                let d = x[c] - p.alpha[c] * stats.mean[c];
                part_gd[c] += g[c] * p.gamma[c] * d;
                part_dy[c] += g[c];
                part_dy_d[c] += g[c] * d;
            }
        }
        for c in 0..dim {
            sum_gd[c] += part_gd[c];
            sum_dy[c] += part_dy[c];
            sum_dy_d[c] += part_dy_d[c];
        }
    }

    // d loss / d variance (through std), per channel.
    let dvar: Vec<f64> =
        (0..dim).map(|c| -0.5 * sum_gd[c] / (stats.std[c] * stats.std[c] * stats.std[c])).collect();

    for c in 0..dim {
        grad.gamma[c] += sum_dy_d[c] / stats.std[c];
        grad.zeta[c] += sum_dy[c];
    }

    // d loss / d shifted value, then distribute into x, alpha and mean.
    let mut sum_dd = vec![0.0; dim];
    let mut grads: Vec<Mat> = Vec::with_capacity(parts.len());
    for (m, dy) in parts.iter().zip(upstream) {
        let mut out = Mat::zeros(m.rows(), dim);
        for r in 0..m.rows() {
            let x = m.row(r);
            let g = dy.row(r);
            let dst = out.row_mut(r);
            for c in 0..dim {
                let d = x[c] - p.alpha[c] * stats.mean[c];
                let dd = g[c] * p.gamma[c] / stats.std[c] + dvar[c] * 2.0 * d / n;
                dst[c] = dd; // direct term; mean coupling applied below
                sum_dd[c] += dd;
            }
        }
        grads.push(out);
    }
    for c in 0..dim {
        grad.alpha[c] += -stats.mean[c] * sum_dd[c];
    }
    // x also enters every shifted value through the mean: d mean / d x = 1/n.
    for out in &mut grads {
        for r in 0..out.rows() {
            let dst = out.row_mut(r);
            for c in 0..dim {
                dst[c] -= p.alpha[c] * sum_dd[c] / n;
            }
        }
    }
    grads
}

/// Normalizes `parts` jointly (one instance's node groups or pair groups).
pub fn graph_norm(parts: &[&Mat], params: &NormParams) -> Vec<Mat> {
    graph_norm_fwd(parts, params).0
}

pub(crate) struct GinTrace {
    pub z: Mat,
    pub hidden_pre: Mat,
}

/// GIN update with epsilon = 0: `MLP(h_v + sum of neighbor embeddings)`.
pub fn gin_encode(g: &LabeledGraph, node_feats: &Mat, mlp: &Mlp) -> Result<Mat> {
    if node_feats.rows() != g.node_count() {
        return Err(Error::Shape(format!(
            "feature rows {} != node count {}",
            node_feats.rows(),
            g.node_count()
        )));
    }
    Ok(gin_forward(g, node_feats, mlp).1)
}

pub(crate) fn gin_forward(g: &LabeledGraph, node_feats: &Mat, mlp: &Mlp) -> (GinTrace, Mat) {
    let dim = node_feats.cols();
    let mut z = Mat::zeros(g.node_count(), dim);
    for v in 0..g.node_count() {
        let dst = z.row_mut(v);
        dst.copy_from_slice(node_feats.row(v));
        for &u in g.neighbors(v) {
            for (o, &x) in dst.iter_mut().zip(node_feats.row(u)) {
                *o += x;
            }
        }
    }
    let (hidden_pre, out) = mlp.forward_trace(&z);
    (GinTrace { z, hidden_pre }, out)
}

/// Cross-graph embedding state threaded through the anisotropic layers.
///
/// `pair_fwd` holds rows `(v, v')` in row-major order (`v * |V'| + v'`),
/// `pair_bwd` the mirrored `(v', v)` rows; `time` is this layer's time
/// embedding.
#[derive(Debug, Clone)]
pub struct PairEmbeddingState {
    pub node_g: Mat,
    pub node_h: Mat,
    pub pair_fwd: Mat,
    pub pair_bwd: Mat,
    pub time: Vec<f64>,
}

pub(crate) struct AgnnTrace {
    pub hatp: Mat,
    pub hatpt: Mat,
    pub tp: Mat,
    pub tpt: Mat,
    pub gn_pair: Option<GnStats>,
    pub yp: Mat,
    pub ypt: Mat,
    pub minp: Mat,
    pub minpt: Mat,
    pub mh_p: Mat,
    pub mh_pt: Mat,
    pub gate_p: Mat,
    pub gate_pt: Mat,
    pub w7n_g: Mat,
    pub w7n_h: Mat,
    pub npre_g: Mat,
    pub npre_h: Mat,
    pub gn_node: Option<GnStats>,
    pub ug: Mat,
    pub uh: Mat,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One anisotropic layer over post-GIN node embeddings and the previous pair
/// embeddings. `normalize = false` replaces both graph norms with the
/// identity (test hook for closed-form checks).
pub(crate) fn agnn_forward(
    state: &PairEmbeddingState,
    params: &LayerParams,
    normalize: bool,
) -> (AgnnTrace, PairEmbeddingState) {
    let n = state.node_g.rows();
    let np = state.node_h.rows();
    let d = params.w2.cols();
    debug_assert_eq!(state.pair_fwd.rows(), n * np);
    debug_assert_eq!(state.pair_bwd.rows(), np * n);

    // Pair projections.
    let hatp = state.pair_fwd.matmul(&params.w1);
    let hatpt = state.pair_bwd.matmul(&params.w1);

    // Node projections reused across the pair tables.
    let w3n_g = state.node_g.matmul(&params.w3);
    let w3n_h = state.node_h.matmul(&params.w3);
    let w4n_g = state.node_g.matmul(&params.w4);
    let w4n_h = state.node_h.matmul(&params.w4);

    // tilde = W2 hat + W3 (first endpoint) + W4 (second endpoint)
    let mut tp = hatp.matmul(&params.w2);
    for v in 0..n {
        for vp in 0..np {
            let r = v * np + vp;
            let dst = tp.row_mut(r);
            let a = w3n_g.row(v);
            let b = w4n_h.row(vp);
            for c in 0..d {
                dst[c] += a[c] + b[c];
            }
        }
    }
    let mut tpt = hatpt.matmul(&params.w2);
    for vp in 0..np {
        for v in 0..n {
            let r = vp * n + v;
            let dst = tpt.row_mut(r);
            let a = w3n_h.row(vp);
            let b = w4n_g.row(v);
            for c in 0..d {
                dst[c] += a[c] + b[c];
            }
        }
    }

    // Joint normalization over both pair tables.
    let (yp, ypt, gn_pair) = if normalize {
        let (mut outs, stats) = graph_norm_fwd(&[&tp, &tpt], &params.gn_pair);
        let ypt = outs.pop().unwrap();
        let yp = outs.pop().unwrap();
        (yp, ypt, Some(stats))
    } else {
        (tp.clone(), tpt.clone(), None)
    };

    // MLP input: ReLU(normalized) + projected time embedding.
    let time_mat = Mat::from_vec(1, state.time.len(), state.time.clone());
    let w5ht_mat = time_mat.matmul(&params.w5);
    let w5ht = w5ht_mat.row(0).to_vec();
    let mut minp = yp.clone();
    minp.map_in_place(|x| x.max(0.0));
    minp.add_row_broadcast(&w5ht);
    let mut minpt = ypt.clone();
    minpt.map_in_place(|x| x.max(0.0));
    minpt.add_row_broadcast(&w5ht);

    let (mh_p, mut pair_out) = params.mlp.forward_trace(&minp);
    pair_out.add_assign(&hatp);
    let (mh_pt, mut pair_out_t) = params.mlp.forward_trace(&minpt);
    pair_out_t.add_assign(&hatpt);

    // Gated node aggregation: sigma of the pre-norm tilde values.
    let mut gate_p = tp.clone();
    gate_p.map_in_place(sigmoid);
    let mut gate_pt = tpt.clone();
    gate_pt.map_in_place(sigmoid);

    let w6n_g = state.node_g.matmul(&params.w6);
    let w6n_h = state.node_h.matmul(&params.w6);
    let w7n_g = state.node_g.matmul(&params.w7);
    let w7n_h = state.node_h.matmul(&params.w7);

    let mut npre_g = w6n_g;
    for v in 0..n {
        let dst = npre_g.row_mut(v);
        for vp in 0..np {
            let gate = gate_p.row(v * np + vp);
            let other = w7n_h.row(vp);
            for c in 0..d {
                dst[c] += other[c] * gate[c];
            }
        }
    }
    let mut npre_h = w6n_h;
    for vp in 0..np {
        let dst = npre_h.row_mut(vp);
        for v in 0..n {
            let gate = gate_pt.row(vp * n + v);
            let other = w7n_g.row(v);
            for c in 0..d {
                dst[c] += other[c] * gate[c];
            }
        }
    }

    let (ug, uh, gn_node) = if normalize {
        let (mut outs, stats) = graph_norm_fwd(&[&npre_g, &npre_h], &params.gn_node);
        let uh = outs.pop().unwrap();
        let ug = outs.pop().unwrap();
        (ug, uh, Some(stats))
    } else {
        (npre_g.clone(), npre_h.clone(), None)
    };

    // Residual node update over the GIN output.
    let mut node_out_g = state.node_g.clone();
    for v in 0..n {
        let dst = node_out_g.row_mut(v);
        let u = ug.row(v);
        for c in 0..d {
            dst[c] += u[c].max(0.0);
        }
    }
    let mut node_out_h = state.node_h.clone();
    for vp in 0..np {
        let dst = node_out_h.row_mut(vp);
        let u = uh.row(vp);
        for c in 0..d {
            dst[c] += u[c].max(0.0);
        }
    }

    let trace = AgnnTrace {
        hatp,
        hatpt,
        tp,
        tpt,
        gn_pair,
        yp,
        ypt,
        minp,
        minpt,
        mh_p,
        mh_pt,
        gate_p,
        gate_pt,
        w7n_g,
        w7n_h,
        npre_g,
        npre_h,
        gn_node,
        ug,
        uh,
    };
    let next = PairEmbeddingState {
        node_g: node_out_g,
        node_h: node_out_h,
        pair_fwd: pair_out,
        pair_bwd: pair_out_t,
        time: state.time.clone(),
    };
    (trace, next)
}

/// One anisotropic layer (normalized); `state.node_*` must hold the post-GIN
/// embeddings for this layer.
pub fn agnn_layer(
    state: &PairEmbeddingState,
    params: &LayerParams,
    _g: &LabeledGraph,
    _g_prime: &LabeledGraph,
) -> PairEmbeddingState {
    agnn_forward(state, params, true).1
}

pub(crate) struct LayerTrace {
    pub gin_g: GinTrace,
    pub gin_h: GinTrace,
    pub hat_g: Mat,
    pub hat_h: Mat,
    pub agnn: AgnnTrace,
    pub state_out: PairEmbeddingState,
    pub time: Vec<f64>,
}

pub(crate) struct ForwardTrace {
    pub pair0: Mat,
    pub pair0t: Mat,
    pub layers: Vec<LayerTrace>,
    pub head_hidden_p: Mat,
    pub head_hidden_pt: Mat,
    pub probs: MatchingMatrix,
}

fn one_hot_mat(g: &LabeledGraph, vocab_size: usize) -> Result<Mat> {
    let mut m = Mat::zeros(g.node_count(), vocab_size);
    for v in 0..g.node_count() {
        let id = g.label(v) as usize;
        if id >= vocab_size {
            return Err(Error::Validation(format!(
                "node label {id} outside network vocabulary of size {vocab_size}"
            )));
        }
        m.set(v, id, 1.0);
    }
    Ok(m)
}

pub(crate) fn forward_full(
    pair: &GraphPair,
    mt: &MatchingMatrix,
    t: usize,
    params: &DenoiserParams,
) -> Result<ForwardTrace> {
    let config = &params.config;
    config.validate()?;
    let n = pair.g.node_count();
    let np = pair.g_prime.node_count();
    if n == 0 {
        return Err(Error::Shape("denoiser requires a non-empty smaller graph".into()));
    }
    if mt.rows() != n || mt.cols() != np {
        return Err(Error::Shape(format!(
            "matching matrix is {}x{}, pair needs {n}x{np}",
            mt.rows(),
            mt.cols()
        )));
    }
    if !mt.is_binary() {
        return Err(Error::Validation("denoiser input state must be binary".into()));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("time step must be at least 1".into()));
    }

    let feats_g = one_hot_mat(&pair.g, config.vocab_size)?;
    let feats_h = one_hot_mat(&pair.g_prime, config.vocab_size)?;

    // Binary entries index a two-row sinusoidal codebook.
    let d_pair0 = config.pair_in(0);
    let emb0 = sinusoidal_embedding(0.0, d_pair0, config.freq_base)?;
    let emb1 = sinusoidal_embedding(1.0, d_pair0, config.freq_base)?;
    let mut pair0 = Mat::zeros(n * np, d_pair0);
    let mut pair0t = Mat::zeros(np * n, d_pair0);
    for v in 0..n {
        for vp in 0..np {
            let src = if mt.get(v, vp) == 1.0 { &emb1 } else { &emb0 };
            pair0.row_mut(v * np + vp).copy_from_slice(src);
            pair0t.row_mut(vp * n + v).copy_from_slice(src);
        }
    }

    let mut layers = Vec::with_capacity(config.layers());
    let mut node_g = feats_g.clone();
    let mut node_h = feats_h.clone();
    let mut pair_fwd = pair0.clone();
    let mut pair_bwd = pair0t.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let time = sinusoidal_embedding(t as f64, config.d_out(l), config.freq_base)?;
        let (gin_g, hat_g) = gin_forward(&pair.g, &node_g, &layer.gin);
        let (gin_h, hat_h) = gin_forward(&pair.g_prime, &node_h, &layer.gin);
        let state = PairEmbeddingState {
            node_g: hat_g.clone(),
            node_h: hat_h.clone(),
            pair_fwd,
            pair_bwd,
            time: time.clone(),
        };
        let (agnn, next) = agnn_forward(&state, layer, true);
        node_g = next.node_g.clone();
        node_h = next.node_h.clone();
        pair_fwd = next.pair_fwd.clone();
        pair_bwd = next.pair_bwd.clone();
        layers.push(LayerTrace { gin_g, gin_h, hat_g, hat_h, agnn, state_out: next, time });
    }

    // Symmetric head: sigma(score(v,v') + score(v',v)).
    let (head_hidden_p, sp) = params.head.forward_trace(&pair_fwd);
    let (head_hidden_pt, spt) = params.head.forward_trace(&pair_bwd);
    let mut probs = MatchingMatrix::zeros(n, np);
    for v in 0..n {
        for vp in 0..np {
            let logit = sp.get(v * np + vp, 0) + spt.get(vp * n + v, 0);
            probs.set(v, vp, sigmoid(logit));
        }
    }

    Ok(ForwardTrace { pair0, pair0t, layers, head_hidden_p, head_hidden_pt, probs })
}

/// Predicted clean-state probabilities for every node pair, in `(0, 1)`.
pub fn denoise_forward(
    pair: &GraphPair,
    mt: &MatchingMatrix,
    t: usize,
    params: &DenoiserParams,
) -> Result<MatchingMatrix> {
    Ok(forward_full(pair, mt, t, params)?.probs)
}
