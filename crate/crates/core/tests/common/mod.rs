//! Shared test oracles, independent of the library's gradient path.

#![allow(dead_code)]

use compresslab::nn::{loss_and_gradients, Gradients, LayerSpec, Network, Targets};
use compresslab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of the scalar training loss w.r.t. every
/// parameter. Only the loss *value* of the implementation is reused; the
/// differentiation itself is numeric.
pub fn numeric_gradients(net: &Network, batch: &Tensor, labels: &[usize], h: f64) -> Gradients {
    let loss_at = |n: &Network| -> f64 {
        loss_and_gradients(n, batch, &Targets::Hard(labels))
            .unwrap()
            .0
    };
    let mut grads: Gradients = net.params().iter().map(|_| None).collect();
    for li in 0..net.params().len() {
        let Some(p) = net.params()[li].as_ref() else {
            continue;
        };
        let mut gw = Tensor::zeros(p.weights.shape());
        for i in 0..p.weights.len() {
            let mut plus = net.clone();
            plus.params_mut()[li].as_mut().unwrap().weights.values_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[li]
                .as_mut()
                .unwrap()
                .weights
                .values_mut()[i] -= h;
            gw.values_mut()[i] = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        }
        let gb = p.bias.as_ref().map(|b| {
            let mut gb = Tensor::zeros(b.shape());
            for i in 0..b.len() {
                let mut plus = net.clone();
                plus.params_mut()[li]
                    .as_mut()
                    .unwrap()
                    .bias
                    .as_mut()
                    .unwrap()
                    .values_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[li]
                    .as_mut()
                    .unwrap()
                    .bias
                    .as_mut()
                    .unwrap()
                    .values_mut()[i] -= h;
                gb.values_mut()[i] = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            }
            gb
        });
        grads[li] = Some(compresslab::nn::LayerParams {
            weights: gw,
            bias: gb,
        });
    }
    grads
}

/// Max relative error between analytic and numeric gradients, denominator
/// floored at 1e-8.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        let (Some(a), Some(n)) = (a.as_ref(), n.as_ref()) else {
            continue;
        };
        let mut pairs: Vec<(f64, f64)> = a
            .weights
            .values()
            .iter()
            .copied()
            .zip(n.weights.values().iter().copied())
            .collect();
        if let (Some(ab), Some(nb)) = (a.bias.as_ref(), n.bias.as_ref()) {
            pairs.extend(ab.values().iter().copied().zip(nb.values().iter().copied()));
        }
        for (x, y) in pairs {
            let denom = x.abs().max(y.abs()).max(1e-8);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

/// A randomized small architecture (dense chains, optionally with a conv
/// front end), its parameter count kept under ~2k.
pub fn random_net(rng: &mut ChaCha8Rng) -> (Network, Tensor, Vec<usize>) {
    let use_conv = rng.gen_bool(0.5);
    let classes = rng.gen_range(2..=4usize);
    let batch = rng.gen_range(1..=3usize);
    let (input_shape, specs): (Vec<usize>, Vec<LayerSpec>) = if use_conv {
        let side = rng.gen_range(5..=7usize);
        let in_c = rng.gen_range(1..=2usize);
        let out_c = rng.gen_range(2..=3usize);
        let k = rng.gen_range(2..=3usize);
        let pad = rng.gen_range(0..=1usize);
        let conv_out = side + 2 * pad - k + 1;
        let pooled = conv_out / 2;
        let flat = out_c * pooled * pooled;
        (
            vec![in_c, side, side],
            vec![
                LayerSpec::Conv2d {
                    in_channels: in_c,
                    out_channels: out_c,
                    kernel_h: k,
                    kernel_w: k,
                    stride: 1,
                    zero_padding: pad,
                    has_bias: rng.gen_bool(0.8),
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool2d {
                    window: 2,
                    stride: 2,
                },
                LayerSpec::Flatten,
                LayerSpec::dense(flat, classes),
            ],
        )
    } else {
        let input = rng.gen_range(3..=10usize);
        let hidden = rng.gen_range(4..=16usize);
        let mut specs = vec![LayerSpec::dense(input, hidden), LayerSpec::Relu];
        if rng.gen_bool(0.5) {
            let h2 = rng.gen_range(3..=8usize);
            specs.push(LayerSpec::dense(hidden, h2));
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::dense(h2, classes));
        } else {
            specs.push(LayerSpec::dense(hidden, classes));
        }
        (vec![input], specs)
    };
    let net = Network::init(&input_shape, &specs, rng.gen()).unwrap();
    assert!(
        net.param_count() <= 2000,
        "random net too big: {}",
        net.param_count()
    );
    let mut shape = vec![batch];
    shape.extend_from_slice(&input_shape);
    let n: usize = shape.iter().product();
    let values = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let batch_t = Tensor::from_vec(&shape, values).unwrap();
    let labels = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
    (net, batch_t, labels)
}

/// Seeded RNG for test case generation.
pub fn test_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
