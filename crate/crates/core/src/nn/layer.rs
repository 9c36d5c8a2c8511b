//! Layer specifications and static shape composition.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One layer of a feed-forward stack.
///
/// Shapes below are per-example (no batch dimension). Dense weights are
/// `[out_units, in_units]` row-major; conv weights are
/// `[out_channels, in_channels, kernel_h, kernel_w]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        in_units: usize,
        out_units: usize,
        has_bias: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        zero_padding: usize,
        has_bias: bool,
    },
    Relu,
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Flatten,
    /// Marks the classification head. Forward passes logits through unchanged;
    /// the softmax is fused into the loss for numerical stability.
    SoftmaxOutput,
}

impl LayerSpec {
    pub fn dense(in_units: usize, out_units: usize) -> Self {
        LayerSpec::Dense {
            in_units,
            out_units,
            has_bias: true,
        }
    }

    /// True for layers that carry prunable weights.
    pub fn is_prunable(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    pub fn has_bias(&self) -> bool {
        match self {
            LayerSpec::Dense { has_bias, .. } | LayerSpec::Conv2d { has_bias, .. } => *has_bias,
            _ => false,
        }
    }

    /// Weight tensor shape, if this layer has weights.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self {
            LayerSpec::Dense {
                in_units,
                out_units,
                ..
            } => Some(vec![*out_units, *in_units]),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some(vec![*out_channels, *in_channels, *kernel_h, *kernel_w]),
            _ => None,
        }
    }

    /// Bias tensor shape, if this layer has a bias.
    pub fn bias_shape(&self) -> Option<Vec<usize>> {
        match self {
            LayerSpec::Dense {
                out_units,
                has_bias: true,
                ..
            } => Some(vec![*out_units]),
            LayerSpec::Conv2d {
                out_channels,
                has_bias: true,
                ..
            } => Some(vec![*out_channels]),
            _ => None,
        }
    }

    /// Output shape for a given per-example input shape, or an error when the
    /// layer does not accept that shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |expected: Vec<usize>| Error::ShapeMismatch {
            what: format!("{} input", self.kind_name()),
            expected,
            got: input.to_vec(),
        };
        match self {
            LayerSpec::Dense {
                in_units,
                out_units,
                ..
            } => {
                if input != [*in_units] {
                    return Err(bad(vec![*in_units]));
                }
                Ok(vec![*out_units])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                zero_padding,
                ..
            } => {
                let [c, h, w] = *input else {
                    return Err(bad(vec![*in_channels, 0, 0]));
                };
                if c != *in_channels {
                    return Err(bad(vec![*in_channels, h, w]));
                }
                let h_eff = h + 2 * zero_padding;
                let w_eff = w + 2 * zero_padding;
                if h_eff < *kernel_h || w_eff < *kernel_w {
                    return Err(Error::InvalidConfig(format!(
                        "conv kernel {kernel_h}x{kernel_w} larger than padded input {h_eff}x{w_eff}"
                    )));
                }
                Ok(vec![
                    *out_channels,
                    (h_eff - kernel_h) / stride + 1,
                    (w_eff - kernel_w) / stride + 1,
                ])
            }
            LayerSpec::Relu | LayerSpec::SoftmaxOutput => Ok(input.to_vec()),
            LayerSpec::MaxPool2d { window, stride } => {
                let [c, h, w] = *input else {
                    return Err(bad(vec![0, 0, 0]));
                };
                if h < *window || w < *window {
                    return Err(Error::InvalidConfig(format!(
                        "pool window {window} larger than input {h}x{w}"
                    )));
                }
                Ok(vec![
                    c,
                    (h - window) / stride + 1,
                    (w - window) / stride + 1,
                ])
            }
            LayerSpec::Flatten => {
                // checked: extents may come from untrusted model headers
                let flat = input
                    .iter()
                    .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("flatten of {input:?} overflows"))
                    })?;
                Ok(vec![flat])
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::SoftmaxOutput => "softmax-output",
        }
    }

    /// Basic structural validation that does not depend on the input shape.
    pub fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Dense {
                in_units,
                out_units,
                ..
            } => {
                if *in_units == 0 || *out_units == 0 {
                    return Err(Error::InvalidConfig("dense units must be positive".into()));
                }
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                ..
            } => {
                if *in_channels == 0
                    || *out_channels == 0
                    || *kernel_h == 0
                    || *kernel_w == 0
                    || *stride == 0
                {
                    return Err(Error::InvalidConfig(
                        "conv2d dimensions and stride must be positive".into(),
                    ));
                }
            }
            LayerSpec::MaxPool2d { window, stride } if *window == 0 || *stride == 0 => {
                return Err(Error::InvalidConfig(
                    "maxpool2d window and stride must be positive".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Walks the layer stack and returns per-layer output shapes (per example).
///
/// Errors name the offending pair with 1-based indices, e.g.
/// `layer 1 output [3] != layer 2 input [5]`.
pub fn compose_shapes(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        layer.validate()?;
        match layer.output_shape(&current) {
            Ok(next) => {
                shapes.push(next.clone());
                current = next;
            }
            Err(e) => {
                let expected = match layer {
                    LayerSpec::Dense { in_units, .. } => Some(vec![*in_units]),
                    LayerSpec::Conv2d { in_channels, .. } => Some(vec![*in_channels]),
                    _ => None,
                };
                if let (true, Some(input)) = (i > 0, expected) {
                    return Err(Error::LayerCompose {
                        layer: i,
                        output: current,
                        next: i + 1,
                        input,
                    });
                }
                return Err(e);
            }
        }
    }
    Ok(shapes)
}
