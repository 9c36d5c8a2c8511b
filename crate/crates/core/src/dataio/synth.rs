//! Deterministic synthetic datasets: Gaussian blob classification and
//! rectangle segmentation. Desk-scale stand-ins for the full datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{LabeledDataset, PixelLabels, SegmentationDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gaussian clusters with unit variance at fixed axis-aligned centers.
///
/// Class `c` sits at `+separation` on axis `c` for `c < dims` and at
/// `-separation` on axis `c - dims` otherwise, so any two centers are at
/// least `separation` apart. Everything is a pure function of the arguments.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    dims: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if separation <= 0.0 || !separation.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "separation must be > 0, got {separation}"
        )));
    }
    if classes == 0 || per_class == 0 || dims == 0 {
        return Err(Error::InvalidConfig(
            "classes, per_class and dims must be positive".into(),
        ));
    }
    if classes > 2 * dims {
        return Err(Error::InvalidConfig(format!(
            "at most {} classes fit on {} axes",
            2 * dims,
            dims
        )));
    }
    let n = classes * per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0f64; n * dims];
    let mut labels = vec![0usize; n];
    for c in 0..classes {
        let (axis, sign) = if c < dims { (c, 1.0) } else { (c - dims, -1.0) };
        for i in 0..per_class {
            let row = c * per_class + i;
            labels[row] = c;
            let out = &mut values[row * dims..(row + 1) * dims];
            for v in out.iter_mut() {
                *v = gaussian(&mut rng);
            }
            out[axis] += sign * separation;
        }
    }
    LabeledDataset::new(Tensor::from_vec(&[n, dims], values)?, labels, classes)
}

/// Standard normal via Box-Muller over the crate's seeded uniform stream;
/// kept local so samples stay bitwise stable across dependency upgrades.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Grayscale images `[n, 1, h, w]`, each containing one axis-aligned bright
/// rectangle; masks label rectangle pixels 1 and background 0.
pub fn synth_segmentation(n: usize, h: usize, w: usize, seed: u64) -> Result<SegmentationDataset> {
    if h < 4 || w < 4 {
        return Err(Error::InvalidConfig(format!(
            "segmentation images need h, w >= 4, got {h}x{w}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0f64; n * h * w];
    let mut ids = vec![0u32; n * h * w];
    for img in 0..n {
        let (y0, y1) = span(&mut rng, h);
        let (x0, x1) = span(&mut rng, w);
        for y in 0..h {
            for x in 0..w {
                let idx = (img * h + y) * w + x;
                let inside = (y0..=y1).contains(&y) && (x0..=x1).contains(&x);
                let noise = rng.gen::<f64>() * 0.2;
                values[idx] = if inside { 0.8 + noise } else { noise };
                ids[idx] = u32::from(inside);
            }
        }
    }
    Ok(SegmentationDataset {
        images: Tensor::from_vec(&[n, 1, h, w], values)?,
        masks: PixelLabels::new([n, h, w], ids, 2)?,
    })
}

/// Inclusive rectangle span covering at least 2 pixels, away from borders.
fn span<R: Rng>(rng: &mut R, extent: usize) -> (usize, usize) {
    let lo = rng.gen_range(1..extent - 2);
    let hi = rng.gen_range(lo + 1..extent - 1);
    (lo, hi)
}
