//! IDX format (MNIST family): big-endian magic and extents, u8 payload.
//!
//! Images use magic `0x00000803` (3 dimensions), labels `0x00000801`
//! (1 dimension). Pixels are scaled to `[0, 1]` as `value / 255`; any further
//! normalization is an explicit pipeline step.

use std::fs;
use std::path::Path;

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images_raw = fs::read(images_path)?;
    let labels_raw = fs::read(labels_path)?;
    let (count, rows, cols, pixels) = parse_images(images_path, &images_raw)?;
    let labels = parse_labels(labels_path, &labels_raw)?;
    if labels.len() != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    if count == 0 {
        return Err(Error::NoRecords {
            path: images_path.to_path_buf(),
        });
    }
    let values = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let inputs = Tensor::from_vec(&[count, rows * cols], values)?;
    let labels: Vec<usize> = labels.iter().map(|&b| b as usize).collect();
    // MNIST-family files are at least 10-way even when a subset file happens
    // to omit some digits.
    let class_count = (labels.iter().max().copied().unwrap_or(0) + 1).max(10);
    LabeledDataset::new(inputs, labels, class_count)
}

fn be_u32(path: &Path, bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header needs {end} bytes, file has {}", bytes.len()),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

fn parse_images(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(path, bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: IMAGES_MAGIC,
            got: magic,
        });
    }
    let count = be_u32(path, bytes, 4)? as usize;
    let rows = be_u32(path, bytes, 8)? as usize;
    let cols = be_u32(path, bytes, 12)? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: "image extents overflow".into(),
        })?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!(
                "payload has {} bytes, header promises {expected}",
                payload.len()
            ),
        });
    }
    Ok((count, rows, cols, payload.to_vec()))
}

fn parse_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(path, bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: LABELS_MAGIC,
            got: magic,
        });
    }
    let count = be_u32(path, bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: format!(
                "payload has {} bytes, header promises {count}",
                payload.len()
            ),
        });
    }
    Ok(payload.to_vec())
}

/// Writes a dataset as an IDX image/label pair, quantizing pixels to bytes
/// with round-half-up. Inputs must be flat `[n, rows*cols]` or `[n, rows, cols]`.
pub fn write_idx(
    data: &LabeledDataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let n = data.len();
    let per: usize = data.example_shape().iter().product();
    if per != rows * cols {
        return Err(Error::ShapeMismatch {
            what: "idx image".into(),
            expected: vec![rows, cols],
            got: data.example_shape().to_vec(),
        });
    }
    let mut images = Vec::with_capacity(16 + n * per);
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(n as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    for &v in data.inputs.values() {
        images.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
    }
    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(n as u32).to_be_bytes());
    labels.extend(data.labels.iter().map(|&l| l as u8));
    fs::write(images_path, images)?;
    fs::write(labels_path, labels)?;
    Ok(())
}
