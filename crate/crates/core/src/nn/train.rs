//! Plain SGD with momentum, deterministic under a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::backprop::{backprop_from_logit_grad, cross_entropy_and_grad, Gradients, Targets};
use crate::nn::network::{LayerParams, Network};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn new(
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        momentum: f64,
        seed: u64,
        shuffle: bool,
    ) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            momentum,
            seed,
            shuffle,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Same schedule, different seed. Sweep repeats derive their seeds this way.
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean loss over the epoch's batches, weighted by batch size.
    pub loss: f64,
    /// Training top-1 accumulated over the epoch's batches, each measured
    /// just before its update step.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.accuracy)
    }
}

/// Trains `net` in place with SGD + momentum on hard labels.
///
/// Deterministic: identical `(cfg.seed, data)` produce bitwise-identical
/// final weights. When the network carries masks, masked weights stay exactly
/// `0.0` after every step (their gradients and velocities are zeroed).
pub fn train(net: &mut Network, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.class_count > net.num_outputs() {
        return Err(Error::ArityMismatch {
            net: net.num_outputs(),
            data: data.class_count,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = zero_like_params(net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            shuffle(&mut order, &mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (batch, labels) = data.gather(chunk);
            let trace = net.forward_trace(&batch)?;
            let (loss, dlogits) =
                match cross_entropy_and_grad(trace.logits(), &Targets::Hard(&labels)) {
                    Ok(ok) => ok,
                    Err(Error::NonFiniteLoss { .. }) => {
                        return Err(Error::Diverged {
                            epoch,
                            batch: batch_idx,
                        })
                    }
                    Err(e) => return Err(e),
                };
            epoch_loss += loss * chunk.len() as f64;
            for (row, &label) in labels.iter().enumerate() {
                if crate::pipeline::argmax(trace.logits().row(row)) == label {
                    correct += 1;
                }
            }
            let grads = backprop_from_logit_grad(net, &trace, dlogits);
            sgd_step(net, &grads, &mut velocity, cfg);
        }
        report.epochs.push(EpochStats {
            loss: epoch_loss / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(report)
}

/// One SGD + momentum update. Masked positions receive no update and are
/// re-zeroed afterwards so they remain exactly `0.0`.
pub(crate) fn sgd_step(
    net: &mut Network,
    grads: &Gradients,
    velocity: &mut Gradients,
    cfg: &TrainConfig,
) {
    let (params, masks) = net.params_and_masks_mut();
    for (i, ((p, g), v)) in params
        .iter_mut()
        .zip(grads)
        .zip(velocity.iter_mut())
        .enumerate()
    {
        let (Some(p), Some(g), Some(v)) = (p.as_mut(), g.as_ref(), v.as_mut()) else {
            continue;
        };
        let m = masks.and_then(|ms| ms.layer_mask(i));
        match m {
            Some(mask) => {
                let mv = mask.values();
                for (j, (w, (gw, vw))) in p
                    .weights
                    .values_mut()
                    .iter_mut()
                    .zip(g.weights.values().iter().zip(v.weights.values_mut()))
                    .enumerate()
                {
                    if mv[j] == 0.0 {
                        *vw = 0.0;
                        *w = 0.0;
                    } else {
                        *vw = cfg.momentum * *vw + gw;
                        *w -= cfg.learning_rate * *vw;
                    }
                }
            }
            None => {
                for (w, (gw, vw)) in p
                    .weights
                    .values_mut()
                    .iter_mut()
                    .zip(g.weights.values().iter().zip(v.weights.values_mut()))
                {
                    *vw = cfg.momentum * *vw + gw;
                    *w -= cfg.learning_rate * *vw;
                }
            }
        }
        if let (Some(b), Some(gb), Some(vb)) = (p.bias.as_mut(), g.bias.as_ref(), v.bias.as_mut()) {
            for (w, (gw, vw)) in b
                .values_mut()
                .iter_mut()
                .zip(gb.values().iter().zip(vb.values_mut()))
            {
                *vw = cfg.momentum * *vw + gw;
                *w -= cfg.learning_rate * *vw;
            }
        }
    }
}

pub(crate) fn zero_like_params(net: &Network) -> Gradients {
    net.params()
        .iter()
        .map(|p| {
            p.as_ref().map(|lp| LayerParams {
                weights: Tensor::zeros(lp.weights.shape()),
                bias: lp.bias.as_ref().map(|b| Tensor::zeros(b.shape())),
            })
        })
        .collect()
}

/// Fisher-Yates with an explicit RNG; kept local so shuffles stay stable
/// across dependency upgrades.
pub(crate) fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
