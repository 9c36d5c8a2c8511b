//! Dataset flag resolution with upfront validation.

use std::fmt::Write as _;
use std::path::Path;

use compresslab::dataio::{self, LabeledDataset};

use crate::args::DataArgs;
use crate::CliError;

pub struct ResolvedData {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    /// `key = value` lines describing the source, for config echoes.
    pub echo: String,
}

/// Checks flag combinations and file existence without loading anything.
pub fn validate(args: &DataArgs) -> Result<(), CliError> {
    match args.dataset.as_str() {
        "blobs" => {
            if args.classes == 0 || args.per_class == 0 || args.dims == 0 {
                return Err(CliError::validation(
                    "blobs need --classes, --per-class and --dims >= 1",
                ));
            }
            if args.separation <= 0.0 || !args.separation.is_finite() {
                return Err(CliError::validation("--separation must be > 0"));
            }
        }
        "idx" => {
            let (Some(images), Some(labels)) = (&args.idx_images, &args.idx_labels) else {
                return Err(CliError::validation(
                    "--dataset idx requires --idx-images and --idx-labels",
                ));
            };
            require_file(images)?;
            require_file(labels)?;
        }
        "cifar" => {
            if args.cifar_batch.is_empty() {
                return Err(CliError::validation(
                    "--dataset cifar requires at least one --cifar-batch",
                ));
            }
            for p in &args.cifar_batch {
                require_file(p)?;
            }
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown dataset {other:?}; expected blobs, idx or cifar"
            )));
        }
    }
    if args.split <= 0.0 || args.split >= 1.0 || !args.split.is_finite() {
        return Err(CliError::validation("--split must be in (0, 1)"));
    }
    Ok(())
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::validation(format!(
            "file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

/// Loads the dataset and produces the deterministic train/validation split.
pub fn load(args: &DataArgs, default_seed: u64) -> Result<ResolvedData, CliError> {
    let seed = args.data_seed.unwrap_or(default_seed);
    let (full, mut echo) = match args.dataset.as_str() {
        "blobs" => {
            let data = dataio::synth_blobs(
                args.classes,
                args.per_class,
                args.dims,
                args.separation,
                seed,
            )
            .map_err(CliError::runtime_from)?;
            let mut echo = String::new();
            let _ = writeln!(echo, "dataset = blobs");
            let _ = writeln!(echo, "classes = {}", args.classes);
            let _ = writeln!(echo, "per_class = {}", args.per_class);
            let _ = writeln!(echo, "dims = {}", args.dims);
            let _ = writeln!(echo, "separation = {}", args.separation);
            (data, echo)
        }
        "idx" => {
            let images = args.idx_images.as_ref().unwrap();
            let labels = args.idx_labels.as_ref().unwrap();
            let data = dataio::load_idx(images, labels).map_err(CliError::runtime_from)?;
            let mut echo = String::new();
            let _ = writeln!(echo, "dataset = idx");
            let _ = writeln!(echo, "idx_images = {}", images.display());
            let _ = writeln!(echo, "idx_labels = {}", labels.display());
            (data, echo)
        }
        "cifar" => {
            let data = dataio::load_cifar10(&args.cifar_batch).map_err(CliError::runtime_from)?;
            let mut echo = String::new();
            let _ = writeln!(echo, "dataset = cifar");
            for p in &args.cifar_batch {
                let _ = writeln!(echo, "cifar_batch = {}", p.display());
            }
            (data, echo)
        }
        _ => unreachable!("validated earlier"),
    };
    let _ = writeln!(echo, "data_seed = {seed}");
    let _ = writeln!(echo, "split = {}", args.split);
    let (train, val) = dataio::split(&full, args.split, seed).map_err(CliError::runtime_from)?;
    Ok(ResolvedData { train, val, echo })
}

/// Loads without splitting (e.g. `eval --full`).
pub fn load_full(args: &DataArgs, default_seed: u64) -> Result<LabeledDataset, CliError> {
    let seed = args.data_seed.unwrap_or(default_seed);
    match args.dataset.as_str() {
        "blobs" => dataio::synth_blobs(
            args.classes,
            args.per_class,
            args.dims,
            args.separation,
            seed,
        )
        .map_err(CliError::runtime_from),
        "idx" => dataio::load_idx(
            args.idx_images.as_ref().unwrap(),
            args.idx_labels.as_ref().unwrap(),
        )
        .map_err(CliError::runtime_from),
        "cifar" => dataio::load_cifar10(&args.cifar_batch).map_err(CliError::runtime_from),
        _ => unreachable!("validated earlier"),
    }
}
