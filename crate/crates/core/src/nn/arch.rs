//! Compact architecture strings.
//!
//! Two forms are accepted:
//!
//! * MLP shorthand: `dense:784-128-64-10[,relu][,softmax]` - a dense chain
//!   over the given unit counts; `relu` inserts activations between dense
//!   layers (not after the last one).
//! * Layer list: comma-separated tokens, starting with the input shape:
//!   `input:1x28x28, conv:8x3x3s1p1, relu, pool:2, flatten, dense:10`.
//!   `conv:OCxKHxKW` takes optional `sN` (stride, default 1) and `pN`
//!   (zero padding, default 0) suffixes; `pool:W` takes optional `sN`
//!   (default: stride = window); `dense:N` infers its input width.

use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;

pub fn parse_arch(s: &str) -> Result<(Vec<usize>, Vec<LayerSpec>)> {
    let tokens: Vec<&str> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(Error::BadArch("empty architecture string".into()));
    }
    if let Some(rest) = tokens[0].strip_prefix("dense:") {
        if rest.contains('-') {
            return parse_mlp_shorthand(rest, &tokens[1..]);
        }
    }
    parse_layer_list(&tokens)
}

fn parse_mlp_shorthand(chain: &str, modifiers: &[&str]) -> Result<(Vec<usize>, Vec<LayerSpec>)> {
    let sizes: Vec<usize> = chain
        .split('-')
        .map(|p| {
            p.parse::<usize>().map_err(|_| {
                Error::BadArch(format!("bad unit count {p:?} in dense chain {chain:?}"))
            })
        })
        .collect::<Result<_>>()?;
    if sizes.len() < 2 {
        return Err(Error::BadArch(format!(
            "dense chain {chain:?} needs at least two sizes"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::BadArch("unit counts must be positive".into()));
    }
    let mut relu = false;
    let mut softmax = false;
    for m in modifiers {
        match *m {
            "relu" => relu = true,
            "softmax" => softmax = true,
            other => {
                return Err(Error::BadArch(format!(
                    "unknown modifier {other:?} after dense chain (expected relu or softmax)"
                )))
            }
        }
    }
    let mut layers = Vec::new();
    for (i, pair) in sizes.windows(2).enumerate() {
        layers.push(LayerSpec::dense(pair[0], pair[1]));
        if relu && i + 2 < sizes.len() {
            layers.push(LayerSpec::Relu);
        }
    }
    if softmax {
        layers.push(LayerSpec::SoftmaxOutput);
    }
    Ok((vec![sizes[0]], layers))
}

fn parse_layer_list(tokens: &[&str]) -> Result<(Vec<usize>, Vec<LayerSpec>)> {
    let Some(input) = tokens[0].strip_prefix("input:") else {
        return Err(Error::BadArch(format!(
            "expected input:SHAPE or dense:CHAIN first, got {:?}",
            tokens[0]
        )));
    };
    let input_shape = parse_dims(input)?;
    if input_shape.is_empty() || input_shape.len() > 3 {
        return Err(Error::BadArch(format!(
            "input shape must have 1-3 extents, got {input_shape:?}"
        )));
    }
    let mut shape = input_shape.clone();
    let mut layers = Vec::new();
    for token in &tokens[1..] {
        let layer = parse_token(token, &shape)?;
        shape = layer
            .output_shape(&shape)
            .map_err(|e| Error::BadArch(format!("{token:?}: {e}")))?;
        layers.push(layer);
    }
    if layers.is_empty() {
        return Err(Error::BadArch("architecture has no layers".into()));
    }
    Ok((input_shape, layers))
}

fn parse_token(token: &str, shape: &[usize]) -> Result<LayerSpec> {
    if token == "relu" {
        return Ok(LayerSpec::Relu);
    }
    if token == "flatten" {
        return Ok(LayerSpec::Flatten);
    }
    if token == "softmax" {
        return Ok(LayerSpec::SoftmaxOutput);
    }
    if let Some(rest) = token.strip_prefix("dense:") {
        let out: usize = rest
            .parse()
            .map_err(|_| Error::BadArch(format!("bad dense units {rest:?}")))?;
        let [in_units] = *shape else {
            return Err(Error::BadArch(format!(
                "dense layer needs a flat input, have shape {shape:?} (insert flatten)"
            )));
        };
        return Ok(LayerSpec::dense(in_units, out));
    }
    if let Some(rest) = token.strip_prefix("conv:") {
        let (dims, stride, pad) = parse_suffixed(rest)?;
        let [oc, kh, kw] = dims[..] else {
            return Err(Error::BadArch(format!(
                "conv spec {rest:?} must be OCxKHxKW with optional sN/pN"
            )));
        };
        let [in_c, ..] = *shape else {
            return Err(Error::BadArch("conv needs a CxHxW input".into()));
        };
        if shape.len() != 3 {
            return Err(Error::BadArch(format!(
                "conv needs a CxHxW input, have shape {shape:?}"
            )));
        }
        return Ok(LayerSpec::Conv2d {
            in_channels: in_c,
            out_channels: oc,
            kernel_h: kh,
            kernel_w: kw,
            stride: stride.unwrap_or(1),
            zero_padding: pad.unwrap_or(0),
            has_bias: true,
        });
    }
    if let Some(rest) = token.strip_prefix("pool:") {
        let (dims, stride, pad) = parse_suffixed(rest)?;
        let [window] = dims[..] else {
            return Err(Error::BadArch(format!("pool spec {rest:?} must be W[sN]")));
        };
        if pad.is_some() {
            return Err(Error::BadArch("pool does not take padding".into()));
        }
        return Ok(LayerSpec::MaxPool2d {
            window,
            stride: stride.unwrap_or(window),
        });
    }
    Err(Error::BadArch(format!(
        "unknown layer token {token:?} (expected input/dense/conv/relu/pool/flatten/softmax)"
    )))
}

/// Parses `AxBxC` dimension lists with optional trailing `sN` / `pN` suffixes
/// on the last element, e.g. `8x3x3s1p2`.
fn parse_suffixed(s: &str) -> Result<(Vec<usize>, Option<usize>, Option<usize>)> {
    let mut stride = None;
    let mut pad = None;
    let mut body = s;
    while let Some(pos) = body.rfind(['s', 'p']) {
        let (head, tail) = body.split_at(pos);
        let n: usize = tail[1..]
            .parse()
            .map_err(|_| Error::BadArch(format!("bad suffix {tail:?} in {s:?}")))?;
        match tail.as_bytes()[0] {
            b's' if stride.is_none() => stride = Some(n),
            b'p' if pad.is_none() => pad = Some(n),
            _ => return Err(Error::BadArch(format!("duplicate suffix in {s:?}"))),
        }
        body = head;
    }
    let dims = parse_dims(body)?;
    Ok((dims, stride, pad))
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::BadArch(format!("bad extent {p:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_shorthand() {
        let (input, layers) = parse_arch("dense:784-128-64-10,relu").unwrap();
        assert_eq!(input, vec![784]);
        assert_eq!(layers.len(), 5);
        assert_eq!(layers[0], LayerSpec::dense(784, 128));
        assert_eq!(layers[1], LayerSpec::Relu);
        assert_eq!(layers[2], LayerSpec::dense(128, 64));
        assert_eq!(layers[3], LayerSpec::Relu);
        assert_eq!(layers[4], LayerSpec::dense(64, 10));
    }

    #[test]
    fn layer_list_with_conv() {
        let (input, layers) =
            parse_arch("input:1x28x28, conv:8x3x3s1p1, relu, pool:2, flatten, dense:10").unwrap();
        assert_eq!(input, vec![1, 28, 28]);
        assert_eq!(layers.len(), 5);
        assert_eq!(
            layers[0],
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 8,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
                zero_padding: 1,
                has_bias: true,
            }
        );
        // 8x14x14 flattens to 1568 for the dense head
        assert_eq!(layers[4], LayerSpec::dense(1568, 10));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_arch("").is_err());
        assert!(parse_arch("dense:784").is_err());
        assert!(parse_arch("dense:784-0-10").is_err());
        assert!(parse_arch("input:4,swish").is_err());
        assert!(parse_arch("input:4,conv:8x3x3").is_err());
        assert!(parse_arch("dense:10-4,tanh").is_err());
    }
}
