//! Connection pruning: random, class-uniform and class-blind strategies,
//! dead-neuron cascade elimination, effective-parameter counting and masked
//! fine-tuning.
//!
//! Strategy semantics: class-blind removes the globally smallest `x%` of
//! weights by absolute value; class-uniform removes the smallest `x%` within
//! each layer; random removes `x%` of all positions uniformly at random.
//! Biases are never pruned. "Lowest weights" is read as lowest |weight|.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::network::Network;
use crate::nn::train::{train, TrainConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneStrategy {
    Random,
    ClassUniform,
    ClassBlind,
}

impl PruneStrategy {
    pub const ALL: [PruneStrategy; 3] = [
        PruneStrategy::Random,
        PruneStrategy::ClassUniform,
        PruneStrategy::ClassBlind,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PruneStrategy::Random => "random",
            PruneStrategy::ClassUniform => "class_uniform",
            PruneStrategy::ClassBlind => "class_blind",
        }
    }
}

impl std::fmt::Display for PruneStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PruneStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PruneStrategy::Random),
            "class_uniform" => Ok(PruneStrategy::ClassUniform),
            "class_blind" => Ok(PruneStrategy::ClassBlind),
            other => Err(Error::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub strategy: PruneStrategy,
    /// The fraction of prunable weights to remove, in `[0, 1]`.
    pub fraction: f64,
    /// Consumed by the random strategy only.
    pub seed: u64,
    pub cascade: bool,
    pub fine_tune: Option<TrainConfig>,
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::InvalidConfig(format!(
                "prune fraction must be in [0, 1], got {}",
                self.fraction
            )));
        }
        if let Some(ft) = &self.fine_tune {
            ft.validate()?;
        }
        Ok(())
    }
}

/// Per-layer binary masks over weight tensors, aligned with the network's
/// layer list (`None` for parameter-free layers). Entry 1.0 keeps a weight,
/// 0.0 prunes it. Biases are not masked.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    per_layer: Vec<Option<Tensor>>,
}

impl MaskSet {
    /// All-live masks for every prunable layer of `net`.
    pub fn ones_for(net: &Network) -> MaskSet {
        let per_layer = net
            .params()
            .iter()
            .map(|p| p.as_ref().map(|lp| Tensor::ones_like(&lp.weights)))
            .collect();
        MaskSet { per_layer }
    }

    pub fn from_per_layer(per_layer: Vec<Option<Tensor>>) -> MaskSet {
        MaskSet { per_layer }
    }

    pub fn per_layer(&self) -> &[Option<Tensor>] {
        &self.per_layer
    }

    pub fn layer_mask(&self, layer: usize) -> Option<&Tensor> {
        self.per_layer.get(layer).and_then(Option::as_ref)
    }

    /// Number of masked (pruned) weight positions.
    pub fn masked_count(&self) -> usize {
        self.per_layer
            .iter()
            .flatten()
            .map(|m| m.values().iter().filter(|&&v| v == 0.0).count())
            .sum()
    }

    /// Number of live weight positions.
    pub fn live_count(&self) -> usize {
        self.per_layer
            .iter()
            .flatten()
            .map(|m| m.values().iter().filter(|&&v| v != 0.0).count())
            .sum()
    }

    pub fn check_congruent(&self, net: &Network) -> Result<()> {
        if self.per_layer.len() != net.params().len() {
            return Err(Error::InvalidConfig(format!(
                "mask set covers {} layers, network has {}",
                self.per_layer.len(),
                net.params().len()
            )));
        }
        for (i, (m, p)) in self.per_layer.iter().zip(net.params()).enumerate() {
            match (m, p) {
                (Some(mask), Some(lp)) => {
                    if mask.shape() != lp.weights.shape() {
                        return Err(Error::MaskShape {
                            layer: i + 1,
                            mask: mask.shape().to_vec(),
                            weights: lp.weights.shape().to_vec(),
                        });
                    }
                    if mask.values().iter().any(|&v| v != 0.0 && v != 1.0) {
                        return Err(Error::InvalidConfig(format!(
                            "mask for layer {} has entries outside {{0, 1}}",
                            i + 1
                        )));
                    }
                }
                (None, None) => {}
                (Some(_), None) => {
                    return Err(Error::InvalidConfig(format!(
                        "mask present for parameter-free layer {}",
                        i + 1
                    )));
                }
                (None, Some(_)) => {
                    return Err(Error::InvalidConfig(format!(
                        "mask missing for parametric layer {}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when every weight this mask prunes is also pruned by `other`.
    pub fn subset_of_masked(&self, other: &MaskSet) -> bool {
        self.per_layer
            .iter()
            .zip(&other.per_layer)
            .all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => a
                    .values()
                    .iter()
                    .zip(b.values())
                    .all(|(&x, &y)| x != 0.0 || y == 0.0),
                _ => true,
            })
    }
}

/// Everything the three-step procedure produces.
#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub masked_network: Network,
    /// Live fraction per prunable layer, network layer order.
    pub kept_fraction_per_layer: Vec<f64>,
    /// Live weights plus biases of units with at least one live incoming weight.
    pub effective_params: usize,
    /// Weights removed by cascade elimination beyond threshold removal.
    pub cascaded_extra: usize,
}

/// Builds the pruning mask for `net` under `cfg` without touching the network.
///
/// With `P` total prunable weights and `k = floor(fraction * P)`:
/// random masks exactly `k` seeded uniform draws without replacement;
/// class-blind masks the `k` globally smallest `|weight|`; class-uniform
/// masks `floor(fraction * P_l)` smallest per layer. Ties break by
/// (layer index, flat index) ascending.
pub fn build_mask(net: &Network, cfg: &PruneConfig) -> Result<MaskSet> {
    cfg.validate()?;
    let prunable: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_prunable())
        .map(|(i, _)| i)
        .collect();
    if prunable.is_empty() {
        return Err(Error::NoPrunableLayers);
    }
    let mut masks = MaskSet::ones_for(net);
    match cfg.strategy {
        PruneStrategy::Random => {
            let total: usize = prunable
                .iter()
                .map(|&i| net.params()[i].as_ref().unwrap().weights.len())
                .sum();
            let k = floor_count(cfg.fraction, total);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let picks = sample_without_replacement(total, k, &mut rng);
            // Global flat position -> (layer, offset), layers in network order.
            let mut bounds = Vec::with_capacity(prunable.len());
            let mut acc = 0usize;
            for &i in &prunable {
                let len = net.params()[i].as_ref().unwrap().weights.len();
                bounds.push((acc, i));
                acc += len;
            }
            for pick in picks {
                let &(start, layer) = bounds
                    .iter()
                    .rev()
                    .find(|&&(start, _)| start <= pick)
                    .unwrap();
                masks.per_layer[layer].as_mut().unwrap().values_mut()[pick - start] = 0.0;
            }
        }
        PruneStrategy::ClassBlind => {
            let mut entries: Vec<(f64, usize, usize)> = Vec::new();
            for &i in &prunable {
                let w = &net.params()[i].as_ref().unwrap().weights;
                entries.extend(w.values().iter().enumerate().map(|(j, &v)| (v.abs(), i, j)));
            }
            let k = floor_count(cfg.fraction, entries.len());
            entries.sort_unstable_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            for &(_, layer, j) in &entries[..k] {
                masks.per_layer[layer].as_mut().unwrap().values_mut()[j] = 0.0;
            }
        }
        PruneStrategy::ClassUniform => {
            for &i in &prunable {
                let w = &net.params()[i].as_ref().unwrap().weights;
                let mut entries: Vec<(f64, usize)> = w
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (v.abs(), j))
                    .collect();
                let k = floor_count(cfg.fraction, entries.len());
                entries.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                for &(_, j) in &entries[..k] {
                    masks.per_layer[i].as_mut().unwrap().values_mut()[j] = 0.0;
                }
            }
        }
    }
    Ok(masks)
}

fn floor_count(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).floor() as usize).min(total)
}

/// Partial Fisher-Yates; kept local so draws stay bitwise stable across
/// dependency upgrades.
fn sample_without_replacement<R: Rng>(total: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..total).collect();
    for i in 0..k {
        let j = rng.gen_range(i..total);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

/// Returns a copy of `net` with `m` stored and masked weights zeroed.
/// Applying the same mask twice equals applying it once.
pub fn apply_mask(net: &Network, m: &MaskSet) -> Result<Network> {
    m.check_congruent(net)?;
    let mut out = net.clone();
    for (p, mask) in out.params_mut().iter_mut().zip(m.per_layer()) {
        if let (Some(p), Some(mask)) = (p.as_mut(), mask.as_ref()) {
            for (w, &mv) in p.weights.values_mut().iter_mut().zip(mask.values()) {
                if mv == 0.0 {
                    *w = 0.0;
                }
            }
        }
    }
    out.set_masks(Some(m.clone()));
    Ok(out)
}

/// Iterates the dead-unit rule to fixpoint: a hidden dense unit (or conv
/// output channel) whose incoming weights are all masked and whose bias is
/// zero or absent contributes nothing, so all of its outgoing weights are
/// masked too. The result only adds zeros, and running the cascade on its
/// own output changes nothing.
pub fn cascade_eliminate(net: &Network, m: &MaskSet) -> Result<MaskSet> {
    m.check_congruent(net)?;
    let mut masks = m.clone();
    let routes = successor_routes(net);
    let mut changed = true;
    while changed {
        changed = false;
        for route in &routes {
            for unit in 0..route.units {
                if !unit_is_dead(net, &masks, route.layer, unit) {
                    continue;
                }
                let mask = masks.per_layer[route.next].as_mut().unwrap();
                for pos in (route.positions)(unit) {
                    let v = &mut mask.values_mut()[pos];
                    if *v != 0.0 {
                        *v = 0.0;
                        changed = true;
                    }
                }
            }
        }
    }
    Ok(masks)
}

/// A prunable layer, its unit count, the next prunable layer downstream, and
/// the map from a dead unit to the successor weight positions it feeds.
struct Route {
    layer: usize,
    units: usize,
    next: usize,
    positions: Box<dyn Fn(usize) -> Vec<usize> + Send + Sync>,
}

fn successor_routes(net: &Network) -> Vec<Route> {
    let prunable: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_prunable())
        .map(|(i, _)| i)
        .collect();
    let mut routes = Vec::new();
    for pair in prunable.windows(2) {
        let (layer, next) = (pair[0], pair[1]);
        let units = match &net.layers()[layer] {
            LayerSpec::Dense { out_units, .. } => *out_units,
            LayerSpec::Conv2d { out_channels, .. } => *out_channels,
            _ => unreachable!(),
        };
        // Spatial extent per channel at the point where the value stream is
        // flattened (1 while it stays convolutional or is already flat).
        let mut flat_span = 1usize;
        for j in layer..next {
            if matches!(net.layers()[j], LayerSpec::Flatten) {
                // shape entering the flatten = output shape of layer j - 1
                let shape = &net.layer_shapes()[j - 1];
                if let [_, h, w] = shape[..] {
                    flat_span = h * w;
                }
            }
        }
        let positions: Box<dyn Fn(usize) -> Vec<usize> + Send + Sync> = match &net.layers()[next] {
            LayerSpec::Dense {
                in_units,
                out_units,
                ..
            } => {
                let (in_units, out_units) = (*in_units, *out_units);
                Box::new(move |unit| {
                    let cols = unit * flat_span..(unit + 1) * flat_span;
                    (0..out_units)
                        .flat_map(|o| cols.clone().map(move |c| o * in_units + c))
                        .collect()
                })
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                let (ic, oc, k) = (*in_channels, *out_channels, kernel_h * kernel_w);
                Box::new(move |unit| {
                    (0..oc)
                        .flat_map(|o| (0..k).map(move |p| (o * ic + unit) * k + p))
                        .collect()
                })
            }
            _ => unreachable!(),
        };
        routes.push(Route {
            layer,
            units,
            next,
            positions,
        });
    }
    routes
}

fn unit_is_dead(net: &Network, masks: &MaskSet, layer: usize, unit: usize) -> bool {
    let p = net.params()[layer].as_ref().unwrap();
    let mask = masks.layer_mask(layer).unwrap();
    let row = p.weights.len() / p.weights.shape()[0];
    let incoming = &mask.values()[unit * row..(unit + 1) * row];
    if incoming.iter().any(|&v| v != 0.0) {
        return false;
    }
    match &p.bias {
        Some(b) => b.values()[unit] == 0.0,
        None => true,
    }
}

/// Live weights plus biases of units that keep at least one live incoming
/// weight.
pub fn count_effective_params(net: &Network, m: &MaskSet) -> Result<usize> {
    m.check_congruent(net)?;
    let mut count = 0usize;
    for (p, mask) in net.params().iter().zip(m.per_layer()) {
        let (Some(p), Some(mask)) = (p.as_ref(), mask.as_ref()) else {
            continue;
        };
        count += mask.values().iter().filter(|&&v| v != 0.0).count();
        if let Some(bias) = &p.bias {
            let units = p.weights.shape()[0];
            let row = p.weights.len() / units;
            for u in 0..units {
                if mask.values()[u * row..(u + 1) * row]
                    .iter()
                    .any(|&v| v != 0.0)
                {
                    count += 1;
                }
            }
            debug_assert_eq!(bias.len(), units);
        }
    }
    Ok(count)
}

/// Continues training a masked network; masked weights receive no updates
/// and remain exactly 0.0.
pub fn fine_tune_masked(
    net: &Network,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<Network> {
    if net.masks().is_none() {
        return Err(Error::MissingMask);
    }
    let mut tuned = net.clone();
    train(&mut tuned, data, cfg)?;
    Ok(tuned)
}

/// The full three-step procedure: build the mask, optionally cascade, apply,
/// optionally fine-tune, and count what is left.
pub fn prune(
    net: &Network,
    cfg: &PruneConfig,
    data: Option<&LabeledDataset>,
) -> Result<PruneOutcome> {
    cfg.validate()?;
    let mask = build_mask(net, cfg)?;
    let threshold_masked = mask.masked_count();
    let mask = if cfg.cascade {
        cascade_eliminate(net, &mask)?
    } else {
        mask
    };
    let cascaded_extra = mask.masked_count() - threshold_masked;
    let mut network = apply_mask(net, &mask)?;
    if let Some(ft) = &cfg.fine_tune {
        let data = data.ok_or_else(|| {
            Error::InvalidConfig("fine-tuning requested but no dataset given".into())
        })?;
        network = fine_tune_masked(&network, data, ft)?;
    }
    let kept_fraction_per_layer = mask
        .per_layer()
        .iter()
        .flatten()
        .map(|m| m.values().iter().filter(|&&v| v != 0.0).count() as f64 / m.len() as f64)
        .collect();
    let effective_params = count_effective_params(&network, &mask)?;
    Ok(PruneOutcome {
        masked_network: network,
        kept_fraction_per_layer,
        effective_params,
        cascaded_extra,
    })
}
