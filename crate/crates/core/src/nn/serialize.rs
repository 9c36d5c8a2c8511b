//! NNCM model container.
//!
//! Little-endian binary layout, bitwise lossless round-trip:
//!
//! ```text
//! magic            4 bytes  "NNCM"
//! version          u32      currently 1
//! input rank       u32      then one u32 per extent
//! layer count      u32
//! layer table      per layer: u8 kind tag + fields
//!   0 dense        u32 in_units, u32 out_units, u8 has_bias
//!   1 conv2d       u32 in_c, u32 out_c, u32 kh, u32 kw, u32 stride, u32 pad, u8 has_bias
//!   2 relu
//!   3 maxpool2d    u32 window, u32 stride
//!   4 flatten
//!   5 softmax-output
//! payloads         per parametric layer in order: weights as raw f64 bits,
//!                  then bias as raw f64 bits when has_bias
//! mask flag        u8; when 1, one packed-bit run per prunable layer in
//!                  order (LSB-first, bit 1 = live weight), ceil(count/8) bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::network::{LayerParams, Network};
use crate::pruning::MaskSet;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"NNCM";
pub const VERSION: u32 = 1;

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_shape(&mut w, net.input_shape())?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for layer in net.layers() {
        write_layer(&mut w, layer)?;
    }
    for p in net.params().iter().flatten() {
        write_tensor(&mut w, &p.weights)?;
        if let Some(b) = &p.bias {
            write_tensor(&mut w, b)?;
        }
    }
    match net.masks() {
        None => w.write_all(&[0u8])?,
        Some(ms) => {
            w.write_all(&[1u8])?;
            for m in ms.per_layer().iter().flatten() {
                write_packed_bits(&mut w, m)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
        path,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: u32::from_be_bytes(MAGIC),
            got: u32::from_be_bytes(magic),
        });
    }
    let version = r.read_u32("version")?;
    if version != VERSION {
        return Err(Error::ModelFormat {
            path: path.to_path_buf(),
            detail: format!("unsupported version {version}"),
        });
    }
    let input_shape = r.read_shape("input shape")?;
    let layer_count = r.read_u32("layer count")? as usize;
    if layer_count > 10_000 {
        return Err(Error::ModelFormat {
            path: path.to_path_buf(),
            detail: format!("implausible layer count {layer_count}"),
        });
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        layers.push(r.read_layer()?);
    }
    let mut params = Vec::with_capacity(layer_count);
    for layer in &layers {
        params.push(match layer.weight_shape() {
            Some(ws) => {
                let weights = r.read_tensor(&ws)?;
                let bias = match layer.bias_shape() {
                    Some(bs) => Some(r.read_tensor(&bs)?),
                    None => None,
                };
                Some(LayerParams { weights, bias })
            }
            None => None,
        });
    }
    let mask_flag = r.read_u8("mask flag")?;
    let masks = match mask_flag {
        0 => None,
        1 => {
            let mut per_layer = Vec::with_capacity(layer_count);
            for layer in &layers {
                per_layer.push(match layer.weight_shape() {
                    Some(ws) => Some(r.read_packed_bits(&ws)?),
                    None => None,
                });
            }
            Some(MaskSet::from_per_layer(per_layer))
        }
        other => {
            return Err(Error::ModelFormat {
                path: path.to_path_buf(),
                detail: format!("bad mask flag {other}"),
            })
        }
    };
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::ModelFormat {
            path: path.to_path_buf(),
            detail: "trailing bytes after mask payload".into(),
        });
    }
    Network::from_parts(input_shape, layers, params, masks).map_err(|e| Error::ModelFormat {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn write_shape<W: Write>(w: &mut W, shape: &[usize]) -> Result<()> {
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    Ok(())
}

fn write_layer<W: Write>(w: &mut W, layer: &LayerSpec) -> Result<()> {
    match layer {
        LayerSpec::Dense {
            in_units,
            out_units,
            has_bias,
        } => {
            w.write_all(&[0u8])?;
            w.write_all(&(*in_units as u32).to_le_bytes())?;
            w.write_all(&(*out_units as u32).to_le_bytes())?;
            w.write_all(&[u8::from(*has_bias)])?;
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            zero_padding,
            has_bias,
        } => {
            w.write_all(&[1u8])?;
            for v in [
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                zero_padding,
            ] {
                w.write_all(&(*v as u32).to_le_bytes())?;
            }
            w.write_all(&[u8::from(*has_bias)])?;
        }
        LayerSpec::Relu => w.write_all(&[2u8])?,
        LayerSpec::MaxPool2d { window, stride } => {
            w.write_all(&[3u8])?;
            w.write_all(&(*window as u32).to_le_bytes())?;
            w.write_all(&(*stride as u32).to_le_bytes())?;
        }
        LayerSpec::Flatten => w.write_all(&[4u8])?,
        LayerSpec::SoftmaxOutput => w.write_all(&[5u8])?,
    }
    Ok(())
}

fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    for v in t.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_packed_bits<W: Write>(w: &mut W, mask: &Tensor) -> Result<()> {
    let mut byte = 0u8;
    let mut nbits = 0;
    for &v in mask.values() {
        if v != 0.0 {
            byte |= 1 << nbits;
        }
        nbits += 1;
        if nbits == 8 {
            w.write_all(&[byte])?;
            byte = 0;
            nbits = 0;
        }
    }
    if nbits > 0 {
        w.write_all(&[byte])?;
    }
    Ok(())
}

struct Reader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::Truncated {
            path: self.path.to_path_buf(),
            detail: format!("while reading {what}"),
        })
    }

    fn read_u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b, what)?;
        Ok(b[0])
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    /// Extents from untrusted bytes are bounded before any arithmetic so a
    /// crafted header can neither overflow shape products nor trigger giant
    /// allocations.
    fn read_extent(&mut self, what: &str) -> Result<usize> {
        let v = self.read_u32(what)? as usize;
        if v > MAX_EXTENT {
            return Err(Error::ModelFormat {
                path: self.path.to_path_buf(),
                detail: format!("implausible {what} {v}"),
            });
        }
        Ok(v)
    }

    fn read_shape(&mut self, what: &str) -> Result<Vec<usize>> {
        let rank = self.read_u32(what)? as usize;
        if rank > 8 {
            return Err(Error::ModelFormat {
                path: self.path.to_path_buf(),
                detail: format!("implausible rank {rank} for {what}"),
            });
        }
        let shape: Vec<usize> = (0..rank)
            .map(|_| self.read_extent(what))
            .collect::<Result<_>>()?;
        self.checked_count(&shape)?;
        Ok(shape)
    }

    fn checked_count(&self, shape: &[usize]) -> Result<usize> {
        shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&count| count <= MAX_ELEMENTS)
            .ok_or_else(|| Error::ModelFormat {
                path: self.path.to_path_buf(),
                detail: format!("implausible element count for shape {shape:?}"),
            })
    }

    fn read_layer(&mut self) -> Result<LayerSpec> {
        let tag = self.read_u8("layer tag")?;
        Ok(match tag {
            0 => LayerSpec::Dense {
                in_units: self.read_extent("dense in_units")?,
                out_units: self.read_extent("dense out_units")?,
                has_bias: self.read_u8("dense has_bias")? != 0,
            },
            1 => LayerSpec::Conv2d {
                in_channels: self.read_extent("conv in_channels")?,
                out_channels: self.read_extent("conv out_channels")?,
                kernel_h: self.read_extent("conv kernel_h")?,
                kernel_w: self.read_extent("conv kernel_w")?,
                stride: self.read_extent("conv stride")?,
                zero_padding: self.read_extent("conv zero_padding")?,
                has_bias: self.read_u8("conv has_bias")? != 0,
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::MaxPool2d {
                window: self.read_extent("pool window")?,
                stride: self.read_extent("pool stride")?,
            },
            4 => LayerSpec::Flatten,
            5 => LayerSpec::SoftmaxOutput,
            other => {
                return Err(Error::ModelFormat {
                    path: self.path.to_path_buf(),
                    detail: format!("unknown layer tag {other}"),
                })
            }
        })
    }

    fn read_tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let count = self.checked_count(shape)?;
        let mut values = vec![0.0f64; count];
        let mut buf = [0u8; 8];
        for v in &mut values {
            self.read_exact(&mut buf, "tensor payload")?;
            *v = f64::from_le_bytes(buf);
        }
        Tensor::from_vec(shape, values)
    }

    fn read_packed_bits(&mut self, shape: &[usize]) -> Result<Tensor> {
        let count = self.checked_count(shape)?;
        let nbytes = count.div_ceil(8);
        let mut bytes = vec![0u8; nbytes];
        self.read_exact(&mut bytes, "mask payload")?;
        let mut values = vec![0.0f64; count];
        for (i, v) in values.iter_mut().enumerate() {
            if bytes[i / 8] >> (i % 8) & 1 == 1 {
                *v = 1.0;
            }
        }
        Tensor::from_vec(shape, values)
    }
}

/// Largest accepted single extent in a model header.
const MAX_EXTENT: usize = 1 << 24;
/// Largest accepted tensor element count (512 MiB of f64).
const MAX_ELEMENTS: usize = 1 << 26;
