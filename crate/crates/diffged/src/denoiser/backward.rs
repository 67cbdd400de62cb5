//! Reverse-mode gradients for the denoising network, written against the
//! cached forward trace. Shared weights accumulate from every site they are
//! used (both graphs, both pair directions), in a fixed order so batch
//! reductions stay deterministic.

use super::{
    forward_full, graph_norm_bwd, AgnnTrace, DenoiserParams, ForwardTrace, LayerParams,
};
use crate::diffusion::MatchingMatrix;
use crate::error::{Error, Result};
use crate::graph::{GraphPair, LabeledGraph};
use crate::tensor::{acc_weight_grad, input_grad, Mat};

const CLAMP: f64 = 1e-7;

/// Binary cross-entropy of predicted probabilities against a binary target,
/// with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub(crate) fn bce_loss(probs: &MatchingMatrix, target: &MatchingMatrix) -> f64 {
    let count = probs.data().len() as f64;
    let mut loss = 0.0;
    for (&p, &y) in probs.data().iter().zip(target.data()) {
        let pc = p.clamp(CLAMP, 1.0 - CLAMP);
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
    }
    loss / count
}

/// Mean BCE loss and gradients w.r.t. every parameter, for one pair.
pub fn denoise_backward(
    pair: &GraphPair,
    mt: &MatchingMatrix,
    t: usize,
    params: &DenoiserParams,
    target: &MatchingMatrix,
) -> Result<(f64, DenoiserParams)> {
    let trace = forward_full(pair, mt, t, params)?;
    if target.rows() != mt.rows() || target.cols() != mt.cols() {
        return Err(Error::Shape(format!(
            "target is {}x{}, expected {}x{}",
            target.rows(),
            target.cols(),
            mt.rows(),
            mt.cols()
        )));
    }
    if !target.is_binary() {
        return Err(Error::Validation("training target must be binary".into()));
    }
    let (loss, grads) = backward_from_trace(pair, params, &trace, target);
    Ok((loss, grads))
}

pub(crate) fn backward_from_trace(
    pair: &GraphPair,
    params: &DenoiserParams,
    trace: &ForwardTrace,
    target: &MatchingMatrix,
) -> (f64, DenoiserParams) {
    let n = pair.g.node_count();
    let np = pair.g_prime.node_count();
    let count = (n * np) as f64;
    let loss = bce_loss(&trace.probs, target);

    let mut grads = params.zeros_like();

    // Head: logit(v,v') = score(v,v') + score(v',v); d loss / d logit is
    // (p - y)/count inside the clamp window and zero where the loss saturates.
    let mut d_sp = Mat::zeros(n * np, 1);
    let mut d_spt = Mat::zeros(np * n, 1);
    for v in 0..n {
        for vp in 0..np {
            let p = trace.probs.get(v, vp);
            let y = target.get(v, vp);
            let dl = if p > CLAMP && p < 1.0 - CLAMP { (p - y) / count } else { 0.0 };
            d_sp.set(v * np + vp, 0, dl);
            d_spt.set(vp * n + v, 0, dl);
        }
    }
    let last = trace.layers.last().expect("at least one layer");
    let mut d_pair = params.head.backward(
        &last.state_out.pair_fwd,
        &trace.head_hidden_p,
        &d_sp,
        &mut grads.head,
    );
    let mut d_pairt = params.head.backward(
        &last.state_out.pair_bwd,
        &trace.head_hidden_pt,
        &d_spt,
        &mut grads.head,
    );

    // Node outputs of the final layer feed nothing downstream.
    let d_last = *params.config.layer_dims.last().unwrap();
    let mut d_node_g = Mat::zeros(n, d_last);
    let mut d_node_h = Mat::zeros(np, d_last);

    for l in (0..params.layers.len()).rev() {
        let lt = &trace.layers[l];
        let layer = &params.layers[l];
        let (pin, pint): (&Mat, &Mat) = if l == 0 {
            (&trace.pair0, &trace.pair0t)
        } else {
            let prev = &trace.layers[l - 1].state_out;
            (&prev.pair_fwd, &prev.pair_bwd)
        };

        let flow = agnn_backward(
            lt,
            layer,
            &mut grads.layers[l],
            &d_node_g,
            &d_node_h,
            &d_pair,
            &d_pairt,
            pin,
            pint,
        );

        // GIN backward for each graph; the encoder is shared, so gradients
        // accumulate graph-after-graph.
        let d_z_g = layer.gin.backward(
            &lt.gin_g.z,
            &lt.gin_g.hidden_pre,
            &flow.d_hat_g,
            &mut grads.layers[l].gin,
        );
        let d_z_h = layer.gin.backward(
            &lt.gin_h.z,
            &lt.gin_h.hidden_pre,
            &flow.d_hat_h,
            &mut grads.layers[l].gin,
        );
        d_node_g = aggregate_adjoint(&pair.g, &d_z_g);
        d_node_h = aggregate_adjoint(&pair.g_prime, &d_z_h);
        d_pair = flow.d_pin;
        d_pairt = flow.d_pint;
    }

    (loss, grads)
}

/// Adjoint of `z_v = h_v + sum of neighbors`: identical form because the
/// adjacency is symmetric.
fn aggregate_adjoint(g: &LabeledGraph, d_z: &Mat) -> Mat {
    let mut out = Mat::zeros(d_z.rows(), d_z.cols());
    for v in 0..g.node_count() {
        let dst = out.row_mut(v);
        dst.copy_from_slice(d_z.row(v));
        for &u in g.neighbors(v) {
            for (o, &x) in dst.iter_mut().zip(d_z.row(u)) {
                *o += x;
            }
        }
    }
    out
}

struct LayerFlow {
    d_hat_g: Mat,
    d_hat_h: Mat,
    d_pin: Mat,
    d_pint: Mat,
}

#[allow(clippy::too_many_arguments)]
fn agnn_backward(
    lt: &super::LayerTrace,
    layer: &LayerParams,
    grads: &mut LayerParams,
    d_node_out_g: &Mat,
    d_node_out_h: &Mat,
    d_pair_out: &Mat,
    d_pair_out_t: &Mat,
    pin: &Mat,
    pint: &Mat,
) -> LayerFlow {
    let at: &AgnnTrace = &lt.agnn;
    let n = lt.hat_g.rows();
    let np = lt.hat_h.rows();
    let d = layer.w2.cols();

    // ---- node side ----
    let mut d_hat_g = d_node_out_g.clone(); // residual
    let mut d_hat_h = d_node_out_h.clone();

    let mut d_ug = d_node_out_g.clone();
    for (g, &pre) in d_ug.data_mut().iter_mut().zip(at.ug.data()) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    let mut d_uh = d_node_out_h.clone();
    for (g, &pre) in d_uh.data_mut().iter_mut().zip(at.uh.data()) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    let mut d_npre = graph_norm_bwd(
        &[&at.npre_g, &at.npre_h],
        &[&d_ug, &d_uh],
        at.gn_node.as_ref().expect("traced forward normalizes"),
        &layer.gn_node,
        &mut grads.gn_node,
    );
    let d_npre_h = d_npre.pop().unwrap();
    let d_npre_g = d_npre.pop().unwrap();

    acc_weight_grad(&lt.hat_g, &d_npre_g, &mut grads.w6);
    acc_weight_grad(&lt.hat_h, &d_npre_h, &mut grads.w6);
    d_hat_g.add_assign(&input_grad(&d_npre_g, &layer.w6));
    d_hat_h.add_assign(&input_grad(&d_npre_h, &layer.w6));

    // Gated aggregation backward.
    let mut d_w7n_h = Mat::zeros(np, d);
    let mut d_gate_p = Mat::zeros(n * np, d);
    for v in 0..n {
        let upstream = d_npre_g.row(v);
        for vp in 0..np {
            let r = v * np + vp;
            let gate = at.gate_p.row(r);
            let other = at.w7n_h.row(vp);
            let dg = d_gate_p.row_mut(r);
            for c in 0..d {
                dg[c] = upstream[c] * other[c];
            }
            let dw = d_w7n_h.row_mut(vp);
            for c in 0..d {
                dw[c] += upstream[c] * gate[c];
            }
        }
    }
    let mut d_w7n_g = Mat::zeros(n, d);
    let mut d_gate_pt = Mat::zeros(np * n, d);
    for vp in 0..np {
        let upstream = d_npre_h.row(vp);
        for v in 0..n {
            let r = vp * n + v;
            let gate = at.gate_pt.row(r);
            let other = at.w7n_g.row(v);
            let dg = d_gate_pt.row_mut(r);
            for c in 0..d {
                dg[c] = upstream[c] * other[c];
            }
            let dw = d_w7n_g.row_mut(v);
            for c in 0..d {
                dw[c] += upstream[c] * gate[c];
            }
        }
    }
    acc_weight_grad(&lt.hat_h, &d_w7n_h, &mut grads.w7);
    acc_weight_grad(&lt.hat_g, &d_w7n_g, &mut grads.w7);
    d_hat_h.add_assign(&input_grad(&d_w7n_h, &layer.w7));
    d_hat_g.add_assign(&input_grad(&d_w7n_g, &layer.w7));

    // ---- pair side ----
    let mut d_hatp = d_pair_out.clone(); // residual
    let mut d_hatpt = d_pair_out_t.clone();

    let d_min_p = layer.mlp.backward(&at.minp, &at.mh_p, d_pair_out, &mut grads.mlp);
    let d_min_pt = layer.mlp.backward(&at.minpt, &at.mh_pt, d_pair_out_t, &mut grads.mlp);

    // Broadcast of the projected time embedding.
    let mut d_w5ht = d_min_p.column_sums();
    for (a, b) in d_w5ht.iter_mut().zip(d_min_pt.column_sums()) {
        *a += b;
    }
    let time_mat = Mat::from_vec(1, lt.time.len(), lt.time.clone());
    let d_w5ht_mat = Mat::from_vec(1, d, d_w5ht);
    acc_weight_grad(&time_mat, &d_w5ht_mat, &mut grads.w5);

    let mut d_yp = d_min_p;
    for (g, &pre) in d_yp.data_mut().iter_mut().zip(at.yp.data()) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    let mut d_ypt = d_min_pt;
    for (g, &pre) in d_ypt.data_mut().iter_mut().zip(at.ypt.data()) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }

    let mut d_t = graph_norm_bwd(
        &[&at.tp, &at.tpt],
        &[&d_yp, &d_ypt],
        at.gn_pair.as_ref().expect("traced forward normalizes"),
        &layer.gn_pair,
        &mut grads.gn_pair,
    );
    let mut d_tpt = d_t.pop().unwrap();
    let mut d_tp = d_t.pop().unwrap();

    // Gate path: d sigma(x) = sigma (1 - sigma).
    for ((dt, &dg), &gate) in d_tp.data_mut().iter_mut().zip(d_gate_p.data()).zip(at.gate_p.data())
    {
        *dt += dg * gate * (1.0 - gate);
    }
    for ((dt, &dg), &gate) in
        d_tpt.data_mut().iter_mut().zip(d_gate_pt.data()).zip(at.gate_pt.data())
    {
        *dt += dg * gate * (1.0 - gate);
    }

    // W2 and the broadcast node terms of tilde.
    acc_weight_grad(&at.hatp, &d_tp, &mut grads.w2);
    acc_weight_grad(&at.hatpt, &d_tpt, &mut grads.w2);
    d_hatp.add_assign(&input_grad(&d_tp, &layer.w2));
    d_hatpt.add_assign(&input_grad(&d_tpt, &layer.w2));

    let mut d_w3n_g = Mat::zeros(n, d);
    let mut d_w4n_h = Mat::zeros(np, d);
    for v in 0..n {
        for vp in 0..np {
            let src = d_tp.row(v * np + vp);
            let a = d_w3n_g.row_mut(v);
            for c in 0..d {
                a[c] += src[c];
            }
            let b = d_w4n_h.row_mut(vp);
            for c in 0..d {
                b[c] += src[c];
            }
        }
    }
    let mut d_w3n_h = Mat::zeros(np, d);
    let mut d_w4n_g = Mat::zeros(n, d);
    for vp in 0..np {
        for v in 0..n {
            let src = d_tpt.row(vp * n + v);
            let a = d_w3n_h.row_mut(vp);
            for c in 0..d {
                a[c] += src[c];
            }
            let b = d_w4n_g.row_mut(v);
            for c in 0..d {
                b[c] += src[c];
            }
        }
    }
    acc_weight_grad(&lt.hat_g, &d_w3n_g, &mut grads.w3);
    acc_weight_grad(&lt.hat_h, &d_w3n_h, &mut grads.w3);
    acc_weight_grad(&lt.hat_h, &d_w4n_h, &mut grads.w4);
    acc_weight_grad(&lt.hat_g, &d_w4n_g, &mut grads.w4);
    d_hat_g.add_assign(&input_grad(&d_w3n_g, &layer.w3));
    d_hat_h.add_assign(&input_grad(&d_w3n_h, &layer.w3));
    d_hat_h.add_assign(&input_grad(&d_w4n_h, &layer.w4));
    d_hat_g.add_assign(&input_grad(&d_w4n_g, &layer.w4));

    // W1 projections back to the layer's pair inputs.
    acc_weight_grad(pin, &d_hatp, &mut grads.w1);
    acc_weight_grad(pint, &d_hatpt, &mut grads.w1);
    let d_pin = input_grad(&d_hatp, &layer.w1);
    let d_pint = input_grad(&d_hatpt, &layer.w1);

    LayerFlow { d_hat_g, d_hat_h, d_pin, d_pint }
}
