//! CIFAR-10 binary batches: 3073-byte records (1 label byte + 3 * 32 * 32 pixels).

use std::fs;
use std::path::Path;

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const RECORD_BYTES: usize = 3073;
pub const CLASSES: usize = 10;

/// Loads one or more CIFAR-10 binary batch files into `[n, 3, 32, 32]`
/// inputs scaled to `[0, 1]`.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<LabeledDataset> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        if bytes.is_empty() {
            return Err(Error::NoRecords {
                path: path.to_path_buf(),
            });
        }
        if bytes.len() % RECORD_BYTES != 0 {
            return Err(Error::BadRecordLength {
                path: path.to_path_buf(),
                len: bytes.len() as u64,
                record: RECORD_BYTES,
            });
        }
        for record in bytes.chunks_exact(RECORD_BYTES) {
            let label = record[0] as usize;
            if label >= CLASSES {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: CLASSES,
                });
            }
            labels.push(label);
            values.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    if labels.is_empty() {
        return Err(Error::NoRecords {
            path: batch_paths
                .first()
                .map(|p| p.as_ref().to_path_buf())
                .unwrap_or_default(),
        });
    }
    let n = labels.len();
    let inputs = Tensor::from_vec(&[n, 3, 32, 32], values)?;
    LabeledDataset::new(inputs, labels, CLASSES)
}
