//! Exact backpropagation for the fixed layer set.
//!
//! The softmax is fused with the cross-entropy loss (max-subtraction trick),
//! so `forward` produces logits and the loss gradient w.r.t. logits is the
//! familiar `softmax(z) - p` form.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::network::{ForwardTrace, LayerParams, Network};
use crate::tensor::Tensor;

/// Per-example training targets: hard class indices or soft distributions.
#[derive(Debug, Clone)]
pub enum Targets<'a> {
    Hard(&'a [usize]),
    /// Rows must sum to 1; shape `[n, num_outputs]`.
    Soft(&'a Tensor),
}

/// Gradients aligned with `Network::params`.
pub type Gradients = Vec<Option<LayerParams>>;

/// Writes `softmax(row / temperature)` of `row` into `out`.
pub(crate) fn softmax_row_into(row: &[f64], temperature: f64, out: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(row) {
        let e = ((z - max) / temperature).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise log-softmax of `row / temperature`.
fn log_softmax_row_into(row: &[f64], temperature: f64, out: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for &z in row {
        sum += ((z - max) / temperature).exp();
    }
    let log_z = sum.ln();
    for (o, &z) in out.iter_mut().zip(row) {
        *o = (z - max) / temperature - log_z;
    }
}

/// Mean cross-entropy between `targets` and `softmax(logits)` plus the loss
/// gradient w.r.t. the logits.
///
/// Returns `Error::NonFiniteLoss` with the offending in-batch example index
/// when a row produces a non-finite loss.
pub fn cross_entropy_and_grad(logits: &Tensor, targets: &Targets) -> Result<(f64, Tensor)> {
    let [n, classes] = *logits.shape() else {
        return Err(Error::ShapeMismatch {
            what: "logits".into(),
            expected: vec![0, 0],
            got: logits.shape().to_vec(),
        });
    };
    if let Targets::Soft(t) = targets {
        if t.shape() != logits.shape() {
            return Err(Error::ShapeMismatch {
                what: "soft targets".into(),
                expected: logits.shape().to_vec(),
                got: t.shape().to_vec(),
            });
        }
    }
    if let Targets::Hard(labels) = targets {
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                what: "labels".into(),
                expected: vec![n],
                got: vec![labels.len()],
            });
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    let mut probs = vec![0.0; classes];
    let mut logp = vec![0.0; classes];
    for b in 0..n {
        let row = logits.row(b);
        softmax_row_into(row, 1.0, &mut probs);
        log_softmax_row_into(row, 1.0, &mut logp);
        let g = &mut grad.values_mut()[b * classes..(b + 1) * classes];
        let loss_b = match targets {
            Targets::Hard(labels) => {
                let label = labels[b];
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
                for (j, gj) in g.iter_mut().enumerate() {
                    let p = if j == label { 1.0 } else { 0.0 };
                    *gj = (probs[j] - p) / n as f64;
                }
                -logp[label]
            }
            Targets::Soft(t) => {
                let trow = t.row(b);
                let mut l = 0.0;
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj = (probs[j] - trow[j]) / n as f64;
                    if trow[j] != 0.0 {
                        l -= trow[j] * logp[j];
                    }
                }
                l
            }
        };
        if !loss_b.is_finite() {
            return Err(Error::NonFiniteLoss { example: b });
        }
        total += loss_b;
    }
    Ok((total / n as f64, grad))
}

/// Mean cross-entropy and its gradient, then backprop through the network.
///
/// Gradients are reported for every parameter position, including masked
/// ones; callers that enforce masks zero them (see `pruning::fine_tune_masked`).
pub fn loss_and_gradients(
    net: &Network,
    batch: &Tensor,
    targets: &Targets,
) -> Result<(f64, Gradients)> {
    let trace = net.forward_trace(batch)?;
    let (loss, dlogits) = cross_entropy_and_grad(trace.logits(), targets)?;
    let grads = backprop_from_logit_grad(net, &trace, dlogits);
    Ok((loss, grads))
}

/// Propagates a gradient w.r.t. the logits back through every layer,
/// producing parameter gradients shaped exactly like the parameters.
pub fn backprop_from_logit_grad(net: &Network, trace: &ForwardTrace, dlogits: Tensor) -> Gradients {
    let mut grads: Gradients = net.params().iter().map(|_| None).collect();
    let mut d_out = dlogits;
    for (i, layer) in net.layers().iter().enumerate().rev() {
        let input = &trace.activations[i];
        d_out = match layer {
            LayerSpec::Dense { .. } => {
                let p = net.params()[i].as_ref().unwrap();
                let (g, d_in) = dense_backward(input, p, &d_out);
                grads[i] = Some(g);
                d_in
            }
            LayerSpec::Conv2d {
                stride,
                zero_padding,
                ..
            } => {
                let p = net.params()[i].as_ref().unwrap();
                let (g, d_in) = conv_backward(input, p, &d_out, *stride, *zero_padding);
                grads[i] = Some(g);
                d_in
            }
            LayerSpec::Relu => {
                let mut d_in = d_out;
                for (d, &x) in d_in.values_mut().iter_mut().zip(input.values()) {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                }
                d_in
            }
            LayerSpec::MaxPool2d { .. } => {
                let argmax = trace.pool_argmax[i].as_ref().unwrap();
                let mut d_in = Tensor::zeros(input.shape());
                let dv = d_in.values_mut();
                for (o, &src) in argmax.iter().enumerate() {
                    dv[src] += d_out.values()[o];
                }
                d_in
            }
            LayerSpec::Flatten => d_out.reshaped(input.shape()).unwrap(),
            LayerSpec::SoftmaxOutput => d_out,
        };
    }
    grads
}

fn dense_backward(input: &Tensor, p: &LayerParams, d_out: &Tensor) -> (LayerParams, Tensor) {
    let n = input.shape()[0];
    let in_units = p.weights.shape()[1];
    let out_units = p.weights.shape()[0];
    let x = input.values();
    let dz = d_out.values();
    let w = p.weights.values();

    let mut d_weights = Tensor::zeros(p.weights.shape());
    // dW[o][i] = sum_b dz[b][o] * x[b][i]; each row owned by one task.
    let dw_body = |o: usize, drow: &mut [f64]| {
        for b in 0..n {
            let g = dz[b * out_units + o];
            if g == 0.0 {
                continue;
            }
            let xb = &x[b * in_units..(b + 1) * in_units];
            for (d, &xi) in drow.iter_mut().zip(xb) {
                *d += g * xi;
            }
        }
    };
    if n * in_units * out_units >= super::network::PAR_THRESHOLD {
        d_weights
            .values_mut()
            .par_chunks_mut(in_units)
            .enumerate()
            .for_each(|(o, drow)| dw_body(o, drow));
    } else {
        for (o, drow) in d_weights.values_mut().chunks_mut(in_units).enumerate() {
            dw_body(o, drow);
        }
    }

    let d_bias = p.bias.as_ref().map(|b| {
        let mut db = Tensor::zeros(b.shape());
        let dbv = db.values_mut();
        for bidx in 0..n {
            for o in 0..out_units {
                dbv[o] += dz[bidx * out_units + o];
            }
        }
        db
    });

    // dX[b][i] = sum_o dz[b][o] * W[o][i]; one example per task.
    let mut d_in = Tensor::zeros(input.shape());
    let dx_body = |b: usize, dxb: &mut [f64]| {
        for o in 0..out_units {
            let g = dz[b * out_units + o];
            if g == 0.0 {
                continue;
            }
            let wrow = &w[o * in_units..(o + 1) * in_units];
            for (d, &wi) in dxb.iter_mut().zip(wrow) {
                *d += g * wi;
            }
        }
    };
    if n * in_units * out_units >= super::network::PAR_THRESHOLD {
        d_in.values_mut()
            .par_chunks_mut(in_units)
            .enumerate()
            .for_each(|(b, dxb)| dx_body(b, dxb));
    } else {
        for (b, dxb) in d_in.values_mut().chunks_mut(in_units).enumerate() {
            dx_body(b, dxb);
        }
    }

    (
        LayerParams {
            weights: d_weights,
            bias: d_bias,
        },
        d_in,
    )
}

fn conv_backward(
    input: &Tensor,
    p: &LayerParams,
    d_out: &Tensor,
    stride: usize,
    pad: usize,
) -> (LayerParams, Tensor) {
    let [n, in_c, in_h, in_w] = *input.shape() else {
        unreachable!()
    };
    let [_, out_c, out_h, out_w] = *d_out.shape() else {
        unreachable!()
    };
    let [_, _, kh, kw] = *p.weights.shape() else {
        unreachable!()
    };
    let x = input.values();
    let dz = d_out.values();
    let w = p.weights.values();

    // dW: one out-channel slab per task, batch summed in order inside.
    let mut d_weights = Tensor::zeros(p.weights.shape());
    let slab = in_c * kh * kw;
    let dw_body = |oc: usize, dslab: &mut [f64]| {
        for b in 0..n {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let g = dz[((b * out_c + oc) * out_h + oh) * out_w + ow];
                    if g == 0.0 {
                        continue;
                    }
                    for ic in 0..in_c {
                        for dh in 0..kh {
                            let ih = oh * stride + dh;
                            if ih < pad || ih - pad >= in_h {
                                continue;
                            }
                            let ih = ih - pad;
                            for dwk in 0..kw {
                                let iw = ow * stride + dwk;
                                if iw < pad || iw - pad >= in_w {
                                    continue;
                                }
                                let iw = iw - pad;
                                dslab[(ic * kh + dh) * kw + dwk] +=
                                    g * x[((b * in_c + ic) * in_h + ih) * in_w + iw];
                            }
                        }
                    }
                }
            }
        }
    };
    for (oc, dslab) in d_weights.values_mut().chunks_mut(slab).enumerate() {
        dw_body(oc, dslab);
    }

    let d_bias = p.bias.as_ref().map(|bias| {
        let mut db = Tensor::zeros(bias.shape());
        let dbv = db.values_mut();
        for b in 0..n {
            for oc in 0..out_c {
                let base = ((b * out_c + oc) * out_h) * out_w;
                for o in 0..out_h * out_w {
                    dbv[oc] += dz[base + o];
                }
            }
        }
        db
    });

    let mut d_in = Tensor::zeros(input.shape());
    let din_plane = in_c * in_h * in_w;
    let dx_body = |b: usize, dxb: &mut [f64]| {
        for oc in 0..out_c {
            let wc = &w[oc * slab..(oc + 1) * slab];
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let g = dz[((b * out_c + oc) * out_h + oh) * out_w + ow];
                    if g == 0.0 {
                        continue;
                    }
                    for ic in 0..in_c {
                        for dh in 0..kh {
                            let ih = oh * stride + dh;
                            if ih < pad || ih - pad >= in_h {
                                continue;
                            }
                            let ih = ih - pad;
                            for dwk in 0..kw {
                                let iw = ow * stride + dwk;
                                if iw < pad || iw - pad >= in_w {
                                    continue;
                                }
                                let iw = iw - pad;
                                dxb[(ic * in_h + ih) * in_w + iw] +=
                                    g * wc[(ic * kh + dh) * kw + dwk];
                            }
                        }
                    }
                }
            }
        }
    };
    for (b, dxb) in d_in.values_mut().chunks_mut(din_plane).enumerate() {
        dx_body(b, dxb);
    }

    (
        LayerParams {
            weights: d_weights,
            bias: d_bias,
        },
        d_in,
    )
}
