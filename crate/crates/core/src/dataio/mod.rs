//! Dataset ingestion and generation: IDX and CIFAR-10 binary parsers,
//! synthetic classification/segmentation generators, deterministic splits.

pub mod cifar;
pub mod idx;
pub mod synth;

pub use cifar::load_cifar10;
pub use idx::{load_idx, write_idx};
pub use synth::{synth_blobs, synth_segmentation};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Classification dataset: inputs `[n, ...input_shape]` plus class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let n = inputs.shape().first().copied().unwrap_or(0);
        if n == 0 || labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != n {
            return Err(Error::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-example input shape (without the leading batch extent).
    pub fn example_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// Copies the given examples into a contiguous batch plus label vector.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let ex_len: usize = self.example_shape().iter().product();
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.example_shape());
        let mut out = Tensor::zeros(&shape);
        for (row, &idx) in indices.iter().enumerate() {
            out.values_mut()[row * ex_len..(row + 1) * ex_len]
                .copy_from_slice(&self.inputs.values()[idx * ex_len..(idx + 1) * ex_len]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (out, labels)
    }

    fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let (inputs, labels) = self.gather(indices);
        LabeledDataset {
            inputs,
            labels,
            class_count: self.class_count,
        }
    }
}

/// Integer class-id grid for segmentation targets, shaped `[n, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelLabels {
    shape: [usize; 3],
    ids: Vec<u32>,
    class_count: usize,
}

impl PixelLabels {
    pub fn new(shape: [usize; 3], ids: Vec<u32>, class_count: usize) -> Result<Self> {
        let n: usize = shape.iter().product();
        if ids.len() != n {
            return Err(Error::ShapeMismatch {
                what: format!("pixel labels with {} ids", ids.len()),
                expected: shape.to_vec(),
                got: vec![ids.len()],
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= class_count) {
            return Err(Error::LabelOutOfRange {
                label: id as usize,
                classes: class_count,
            });
        }
        Ok(PixelLabels {
            shape,
            ids,
            class_count,
        })
    }

    pub fn shape(&self) -> &[usize; 3] {
        &self.shape
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }
}

/// Images plus per-pixel class masks.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationDataset {
    pub images: Tensor,
    pub masks: PixelLabels,
}

/// Deterministic shuffled split into `(train, validation)`.
///
/// Train receives `floor(n * fraction)` examples, validation the remainder;
/// the two parts are disjoint and exhaustive.
pub fn split(
    data: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if fraction <= 0.0 || fraction >= 1.0 || !fraction.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = data.len();
    let take = (n as f64 * fraction).floor() as usize;
    if take == 0 || take == n {
        return Err(Error::InvalidConfig(format!(
            "split fraction {fraction} leaves an empty part for {n} examples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    crate::nn::train::shuffle(&mut order, &mut rng);
    Ok((data.subset(&order[..take]), data.subset(&order[take..])))
}
