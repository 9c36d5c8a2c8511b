//! Network: an ordered layer stack with parameters and optional sparsity masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::layer::{compose_shapes, LayerSpec};
use crate::pruning::MaskSet;
use crate::tensor::Tensor;

/// Weights and optional bias for one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    /// Aligned with `layers`; `None` for parameter-free layers.
    params: Vec<Option<LayerParams>>,
    masks: Option<MaskSet>,
    input_shape: Vec<usize>,
    /// Per-layer output shapes (per example), statically derived.
    layer_shapes: Vec<Vec<usize>>,
    num_outputs: usize,
}

/// Work threshold below which loops stay single-threaded. Parallel loops
/// split only over independent output elements, each summed sequentially,
/// so results are bitwise identical at any thread count.
pub(crate) const PAR_THRESHOLD: usize = 1 << 15;

impl Network {
    /// Builds a network and initializes parameters.
    ///
    /// Weights are drawn from `uniform(-b, b)` with `b = sqrt(6/(fan_in+fan_out))`
    /// per layer; biases start at zero. The same `(input_shape, specs, seed)`
    /// always yields bitwise-identical parameters.
    pub fn init(input_shape: &[usize], specs: &[LayerSpec], seed: u64) -> Result<Network> {
        if specs.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        let layer_shapes = compose_shapes(input_shape, specs)?;
        let num_outputs = match layer_shapes.last().unwrap().as_slice() {
            [n] => *n,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "network output must be 1-D, got {other:?}"
                )))
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = specs
            .iter()
            .map(|spec| {
                spec.weight_shape().map(|wshape| {
                    let bound = glorot_bound(spec);
                    let mut weights = Tensor::zeros(&wshape);
                    for w in weights.values_mut() {
                        *w = rng.gen::<f64>() * 2.0 * bound - bound;
                    }
                    let bias = spec.bias_shape().map(|bshape| Tensor::zeros(&bshape));
                    LayerParams { weights, bias }
                })
            })
            .collect();
        Ok(Network {
            layers: specs.to_vec(),
            params,
            masks: None,
            input_shape: input_shape.to_vec(),
            layer_shapes,
            num_outputs,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    /// Split borrow for the update step: mutable parameters, read-only masks.
    pub(crate) fn params_and_masks_mut(
        &mut self,
    ) -> (&mut [Option<LayerParams>], Option<&MaskSet>) {
        (&mut self.params, self.masks.as_ref())
    }

    pub fn masks(&self) -> Option<&MaskSet> {
        self.masks.as_ref()
    }

    pub(crate) fn set_masks(&mut self, masks: Option<MaskSet>) {
        self.masks = masks;
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    /// Statically derived per-example output shape of each layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.layer_shapes
    }

    /// Total number of declared parameters (weights plus biases), masks ignored.
    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weights.len() + p.bias.as_ref().map_or(0, Tensor::len))
            .sum()
    }

    /// Reconstructs a network from parts; used by deserialization and pruning.
    pub(crate) fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        params: Vec<Option<LayerParams>>,
        masks: Option<MaskSet>,
    ) -> Result<Network> {
        let layer_shapes = compose_shapes(&input_shape, &layers)?;
        let num_outputs = match layer_shapes.last().map(Vec::as_slice) {
            Some([n]) => *n,
            _ => return Err(Error::InvalidConfig("network output must be 1-D".into())),
        };
        for (i, (spec, p)) in layers.iter().zip(&params).enumerate() {
            match (spec.weight_shape(), p) {
                (Some(ws), Some(lp)) => {
                    if lp.weights.shape() != ws.as_slice() {
                        return Err(Error::ShapeMismatch {
                            what: format!("layer {} weights", i + 1),
                            expected: ws,
                            got: lp.weights.shape().to_vec(),
                        });
                    }
                    match (spec.bias_shape(), &lp.bias) {
                        (Some(bs), Some(b)) if b.shape() != bs.as_slice() => {
                            return Err(Error::ShapeMismatch {
                                what: format!("layer {} bias", i + 1),
                                expected: bs,
                                got: b.shape().to_vec(),
                            });
                        }
                        (Some(_), None) | (None, Some(_)) => {
                            return Err(Error::InvalidConfig(format!(
                                "layer {} bias presence disagrees with spec",
                                i + 1
                            )));
                        }
                        _ => {}
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "layer {} parameter presence disagrees with spec",
                        i + 1
                    )));
                }
            }
        }
        let mut net = Network {
            layers,
            params,
            masks: None,
            input_shape,
            layer_shapes,
            num_outputs,
        };
        if let Some(m) = masks {
            m.check_congruent(&net)?;
            net.masks = Some(m);
        }
        Ok(net)
    }

    /// Forward inference: `batch` shaped `[n] + input_shape`, returns logits `[n, num_outputs]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(batch)?.into_logits())
    }

    /// Forward pass keeping every intermediate activation for backprop.
    pub fn forward_trace(&self, batch: &Tensor) -> Result<ForwardTrace> {
        let (n, per_example) = split_batch_shape(batch.shape());
        if per_example != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                what: "forward batch".into(),
                expected: self.input_shape.clone(),
                got: per_example.to_vec(),
            });
        }
        let mut activations = vec![batch.clone()];
        let mut pool_argmax: Vec<Option<Vec<usize>>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let out_shape = batched(n, &self.layer_shapes[i]);
            let (out, argmax) = match layer {
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    (dense_forward(input, p, &out_shape), None)
                }
                LayerSpec::Conv2d {
                    stride,
                    zero_padding,
                    ..
                } => {
                    let p = self.params[i].as_ref().unwrap();
                    (
                        conv_forward(input, p, &out_shape, *stride, *zero_padding),
                        None,
                    )
                }
                LayerSpec::Relu => {
                    let mut out = input.clone();
                    for v in out.values_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    (out, None)
                }
                LayerSpec::MaxPool2d { window, stride } => {
                    let (out, arg) = maxpool_forward(input, &out_shape, *window, *stride);
                    (out, Some(arg))
                }
                LayerSpec::Flatten => (input.reshaped(&out_shape)?, None),
                LayerSpec::SoftmaxOutput => (input.clone(), None),
            };
            pool_argmax.push(argmax);
            activations.push(out);
        }
        Ok(ForwardTrace {
            activations,
            pool_argmax,
        })
    }
}

fn glorot_bound(spec: &LayerSpec) -> f64 {
    let (fan_in, fan_out) = match spec {
        LayerSpec::Dense {
            in_units,
            out_units,
            ..
        } => (*in_units, *out_units),
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            ..
        } => (
            in_channels * kernel_h * kernel_w,
            out_channels * kernel_h * kernel_w,
        ),
        _ => unreachable!("only parametric layers are initialized"),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn split_batch_shape(shape: &[usize]) -> (usize, &[usize]) {
    match shape.split_first() {
        Some((n, rest)) => (*n, rest),
        None => (0, shape),
    }
}

pub(crate) fn batched(n: usize, per_example: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(per_example.len() + 1);
    s.push(n);
    s.extend_from_slice(per_example);
    s
}

/// Activations captured during a forward pass. `activations[0]` is the input
/// batch; `activations[i + 1]` is the output of layer `i`.
pub struct ForwardTrace {
    pub activations: Vec<Tensor>,
    /// For each maxpool layer, the flat input index chosen per output element.
    pub pool_argmax: Vec<Option<Vec<usize>>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor {
        self.activations.last().unwrap()
    }

    fn into_logits(mut self) -> Tensor {
        self.activations.pop().unwrap()
    }
}

fn dense_forward(input: &Tensor, p: &LayerParams, out_shape: &[usize]) -> Tensor {
    let n = out_shape[0];
    let out_units = out_shape[1];
    let in_units = p.weights.shape()[1];
    let mut out = Tensor::zeros(out_shape);
    let w = p.weights.values();
    let x = input.values();
    let bias = p.bias.as_ref().map(Tensor::values);
    let work = n * out_units * in_units;
    let body = |b: usize, row_out: &mut [f64]| {
        let xb = &x[b * in_units..(b + 1) * in_units];
        for (o, out_v) in row_out.iter_mut().enumerate() {
            let wrow = &w[o * in_units..(o + 1) * in_units];
            let mut acc = 0.0;
            for (wi, xi) in wrow.iter().zip(xb) {
                acc += wi * xi;
            }
            *out_v = acc + bias.map_or(0.0, |bv| bv[o]);
        }
    };
    if work >= PAR_THRESHOLD {
        out.values_mut()
            .par_chunks_mut(out_units)
            .enumerate()
            .for_each(|(b, row)| body(b, row));
    } else {
        for (b, row) in out.values_mut().chunks_mut(out_units).enumerate() {
            body(b, row);
        }
    }
    out
}

fn conv_forward(
    input: &Tensor,
    p: &LayerParams,
    out_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Tensor {
    let [n, out_c, out_h, out_w] = out_shape else {
        unreachable!()
    };
    let (n, out_c, out_h, out_w) = (*n, *out_c, *out_h, *out_w);
    let [_, in_c, in_h, in_w] = *input.shape() else {
        unreachable!()
    };
    let [_, _, kh, kw] = *p.weights.shape() else {
        unreachable!()
    };
    let mut out = Tensor::zeros(out_shape);
    let w = p.weights.values();
    let x = input.values();
    let bias = p.bias.as_ref().map(Tensor::values);
    let plane = out_h * out_w;
    // One (example, out-channel) plane per task; sums stay in a fixed order.
    let body = |idx: usize, plane_out: &mut [f64]| {
        let b = idx / out_c;
        let oc = idx % out_c;
        let xb = &x[b * in_c * in_h * in_w..(b + 1) * in_c * in_h * in_w];
        let wc = &w[oc * in_c * kh * kw..(oc + 1) * in_c * kh * kw];
        let b0 = bias.map_or(0.0, |bv| bv[oc]);
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc = b0;
                for ic in 0..in_c {
                    for dh in 0..kh {
                        let ih = oh * stride + dh;
                        if ih < pad || ih - pad >= in_h {
                            continue;
                        }
                        let ih = ih - pad;
                        for dw in 0..kw {
                            let iw = ow * stride + dw;
                            if iw < pad || iw - pad >= in_w {
                                continue;
                            }
                            let iw = iw - pad;
                            acc += wc[(ic * kh + dh) * kw + dw] * xb[(ic * in_h + ih) * in_w + iw];
                        }
                    }
                }
                plane_out[oh * out_w + ow] = acc;
            }
        }
    };
    let work = n * out_c * plane * in_c * kh * kw;
    if work >= PAR_THRESHOLD {
        out.values_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, chunk)| body(idx, chunk));
    } else {
        for (idx, chunk) in out.values_mut().chunks_mut(plane).enumerate() {
            body(idx, chunk);
        }
    }
    out
}

fn maxpool_forward(
    input: &Tensor,
    out_shape: &[usize],
    window: usize,
    stride: usize,
) -> (Tensor, Vec<usize>) {
    let [n, c, out_h, out_w] = *out_shape else {
        unreachable!()
    };
    let [_, _, in_h, in_w] = *input.shape() else {
        unreachable!()
    };
    let x = input.values();
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out.len()];
    let ov = out.values_mut();
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * in_h * in_w;
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dh in 0..window {
                        for dw in 0..window {
                            let idx = base + (oh * stride + dh) * in_w + (ow * stride + dw);
                            // First maximum in scan order wins ties.
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ((b * c + ch) * out_h + oh) * out_w + ow;
                    ov[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}
