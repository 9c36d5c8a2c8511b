//! Flat TOML pipeline configuration. Every key mirrors a CLI flag; flags
//! given on the command line override file values.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Deserialize;

use crate::args::PipelineArgs;
use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineFile {
    pub teacher_model: Option<PathBuf>,
    pub teacher_arch: Option<String>,
    pub teacher_epochs: Option<usize>,
    pub student_arch: Option<String>,
    pub temperature: Option<f64>,
    pub alpha: Option<f64>,
    pub distill_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub strategies: Option<Vec<String>>,
    pub fractions: Option<Vec<f64>>,
    pub repeats: Option<u32>,
    pub cascade: Option<bool>,
    pub fine_tune_epochs: Option<usize>,
    pub fine_tune_lr: Option<f64>,
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub classes: Option<usize>,
    pub per_class: Option<usize>,
    pub dims: Option<usize>,
    pub separation: Option<f64>,
    pub data_seed: Option<u64>,
    pub split: Option<f64>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub cifar_batches: Option<Vec<PathBuf>>,
}

/// The fully resolved pipeline configuration (file keys, flag overrides and
/// defaults applied).
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub teacher_model: Option<PathBuf>,
    pub teacher_arch: Option<String>,
    pub teacher_epochs: usize,
    pub student_arch: String,
    pub temperature: f64,
    pub alpha: f64,
    pub distill_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub strategies: Vec<String>,
    pub fractions: Vec<f64>,
    pub repeats: u32,
    pub cascade: bool,
    pub fine_tune_epochs: usize,
    /// Defaults to half the training rate; fine-tuning nudges, it does not retrain.
    pub fine_tune_lr: f64,
    pub seed: u64,
}

pub fn load_file(path: &PathBuf) -> Result<PipelineFile, CliError> {
    crate::data::require_file(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn resolve(
    args: &PipelineArgs,
    file: PipelineFile,
    global_seed: u64,
) -> Result<PipelineConfig, CliError> {
    let file_lr = file.learning_rate;
    let strategies = match &args.strategies {
        Some(s) => s.split(',').map(|p| p.trim().to_string()).collect(),
        None => file.strategies.unwrap_or_else(|| {
            vec![
                "class_blind".into(),
                "class_uniform".into(),
                "random".into(),
            ]
        }),
    };
    let fractions = match &args.fractions {
        Some(s) => s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::validation(format!("bad fraction {p:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => file.fractions.unwrap_or_else(|| vec![0.2, 0.4, 0.6, 0.8]),
    };
    let cfg = PipelineConfig {
        teacher_model: args.teacher_model.clone().or(file.teacher_model),
        teacher_arch: args.teacher_arch.clone().or(file.teacher_arch),
        teacher_epochs: args.teacher_epochs.or(file.teacher_epochs).unwrap_or(5),
        student_arch: args
            .student_arch
            .clone()
            .or(file.student_arch)
            .ok_or_else(|| CliError::validation("student_arch is required (flag or config)"))?,
        temperature: args
            .temperature
            .or(file.temperature)
            .unwrap_or(compresslab::distill::DEFAULT_TEMPERATURE),
        alpha: args
            .alpha
            .or(file.alpha)
            .unwrap_or(compresslab::distill::DEFAULT_ALPHA),
        distill_epochs: args.distill_epochs.or(file.distill_epochs).unwrap_or(5),
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(32),
        learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(0.1),
        momentum: args.momentum.or(file.momentum).unwrap_or(0.9),
        strategies,
        fractions,
        repeats: args.repeats.or(file.repeats).unwrap_or(3),
        cascade: args.cascade.or(file.cascade).unwrap_or(true),
        fine_tune_epochs: args.fine_tune_epochs.or(file.fine_tune_epochs).unwrap_or(1),
        fine_tune_lr: args
            .fine_tune_lr
            .or(file.fine_tune_lr)
            .unwrap_or_else(|| args.learning_rate.or(file_lr).unwrap_or(0.1) / 2.0),
        seed: file.seed.unwrap_or(global_seed),
    };
    if cfg.teacher_model.is_none() && cfg.teacher_arch.is_none() {
        return Err(CliError::validation(
            "pipeline needs teacher_model or teacher_arch (flag or config)",
        ));
    }
    Ok(cfg)
}

/// Applies dataset keys from the config file onto the flag struct; flags
/// explicitly given keep priority because clap already filled them, so only
/// default-valued fields are replaced when the file has an entry.
pub fn overlay_data(
    file: &PipelineFile,
    data: &mut crate::args::DataArgs,
    defaults: &crate::args::DataArgs,
) {
    if data.dataset == defaults.dataset {
        if let Some(v) = &file.dataset {
            data.dataset = v.clone();
        }
    }
    if data.classes == defaults.classes {
        if let Some(v) = file.classes {
            data.classes = v;
        }
    }
    if data.per_class == defaults.per_class {
        if let Some(v) = file.per_class {
            data.per_class = v;
        }
    }
    if data.dims == defaults.dims {
        if let Some(v) = file.dims {
            data.dims = v;
        }
    }
    if data.separation == defaults.separation {
        if let Some(v) = file.separation {
            data.separation = v;
        }
    }
    if data.data_seed.is_none() {
        data.data_seed = file.data_seed;
    }
    if data.split == defaults.split {
        if let Some(v) = file.split {
            data.split = v;
        }
    }
    if data.idx_images.is_none() {
        data.idx_images = file.idx_images.clone();
    }
    if data.idx_labels.is_none() {
        data.idx_labels = file.idx_labels.clone();
    }
    if data.cifar_batch.is_empty() {
        if let Some(v) = &file.cifar_batches {
            data.cifar_batch = v.clone();
        }
    }
}

impl PipelineConfig {
    /// Canonical `key = value` echo, stable across runs with equal settings.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.teacher_model {
            let _ = writeln!(s, "teacher_model = {}", p.display());
        }
        if let Some(a) = &self.teacher_arch {
            let _ = writeln!(s, "teacher_arch = {a}");
            let _ = writeln!(s, "teacher_epochs = {}", self.teacher_epochs);
        }
        let _ = writeln!(s, "student_arch = {}", self.student_arch);
        let _ = writeln!(s, "temperature = {}", self.temperature);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "distill_epochs = {}", self.distill_epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "strategies = {}", self.strategies.join(","));
        let _ = writeln!(
            s,
            "fractions = {}",
            self.fractions
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "repeats = {}", self.repeats);
        let _ = writeln!(s, "cascade = {}", self.cascade);
        let _ = writeln!(s, "fine_tune_epochs = {}", self.fine_tune_epochs);
        let _ = writeln!(s, "fine_tune_lr = {}", self.fine_tune_lr);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}
