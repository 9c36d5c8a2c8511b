//! Experiment orchestration: pruning sweeps over strategies and fractions,
//! knowledge distillation, and the KD-then-prune composition.
//!
//! Every sweep point starts from a fresh copy of the same trained base
//! network. Repeats derive their seeds as `base_seed + repeat`, and records
//! are sorted by (strategy, fraction, repeat) so output order does not depend
//! on scheduling.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{LabeledDataset, PixelLabels};
use crate::distill::{param_ratio, train_student, DistillConfig, RATIO_WARN_THRESHOLD};
use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::network::Network;
use crate::nn::train::TrainConfig;
use crate::pruning::{count_effective_params, prune, MaskSet, PruneConfig, PruneStrategy};
use crate::report::{ExperimentRecord, Stage};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub strategies: Vec<PruneStrategy>,
    /// Ascending fractions in `[0, 1]`.
    pub fractions: Vec<f64>,
    pub repeats: u32,
    pub base_seed: u64,
    pub fine_tune: Option<TrainConfig>,
    pub cascade: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep needs at least one strategy".into(),
            ));
        }
        if self.fractions.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep needs at least one fraction".into(),
            ));
        }
        if self
            .fractions
            .iter()
            .any(|f| !(0.0..=1.0).contains(f) || !f.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "fractions must lie in [0, 1]: {:?}",
                self.fractions
            )));
        }
        if self.fractions.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("fractions must be ascending".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if let Some(ft) = &self.fine_tune {
            ft.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineSpec {
    /// Trained teacher network.
    pub teacher: Network,
    /// Student layer stack; its input shape is the teacher's.
    pub student_arch: Vec<LayerSpec>,
    pub distill: DistillConfig,
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone)]
pub struct KdPruneOutput {
    /// `teacher_baseline`, `student_kd`, then `student_pruned` sweep rows.
    pub records: Vec<ExperimentRecord>,
    /// The distilled (unpruned) student.
    pub student: Network,
    pub param_ratio: f64,
    /// Set when `param_ratio < 0.20`, the band where students tend to give
    /// up meaningful accuracy.
    pub ratio_warning: bool,
}

/// Runs `strategies x fractions x repeats` pruning experiments against a
/// trained base network. Deterministic per `base_seed`; sweep points run in
/// parallel but each owns a fresh network copy and records are sorted
/// afterwards.
pub fn prune_sweep(
    net: &Network,
    data_train: &LabeledDataset,
    data_val: &LabeledDataset,
    spec: &SweepSpec,
) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let reference_params = net.param_count() as f64;
    let mut points = Vec::new();
    for &strategy in &spec.strategies {
        for &fraction in &spec.fractions {
            for repeat in 0..spec.repeats {
                points.push((strategy, fraction, repeat));
            }
        }
    }
    let mut records = points
        .into_par_iter()
        .map(|(strategy, fraction, repeat)| -> Result<ExperimentRecord> {
            let seed = spec.base_seed + u64::from(repeat);
            let cfg = PruneConfig {
                strategy,
                fraction,
                seed,
                cascade: spec.cascade,
                fine_tune: spec.fine_tune.as_ref().map(|ft| ft.with_seed(seed)),
            };
            let started = Instant::now();
            let outcome = prune(net, &cfg, Some(data_train))?;
            let accuracy = evaluate_top1(&outcome.masked_network, data_val)?;
            let wall_ms = started.elapsed().as_millis() as u64;
            Ok(ExperimentRecord {
                stage: Stage::Pruned,
                strategy: Some(strategy),
                fraction,
                repeat,
                seed,
                accuracy,
                effective_params: outcome.effective_params as u64,
                cascaded_extra: outcome.cascaded_extra as u64,
                total_compression: 1.0 - outcome.effective_params as f64 / reference_params,
                wall_ms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_records(&mut records);
    Ok(records)
}

fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| {
        a.strategy
            .cmp(&b.strategy)
            .then(a.fraction.partial_cmp(&b.fraction).unwrap())
            .then(a.repeat.cmp(&b.repeat))
    });
}

/// Knowledge distillation followed by a pruning sweep on the student.
///
/// Warns when the student/teacher parameter ratio drops below 20%. `total_compression` in every record is measured
/// against the teacher's parameter count.
pub fn kd_then_prune(
    spec: &PipelineSpec,
    data_train: &LabeledDataset,
    data_val: &LabeledDataset,
) -> Result<KdPruneOutput> {
    spec.distill.validate()?;
    spec.sweep.validate()?;
    let teacher = &spec.teacher;
    let teacher_params = teacher.param_count() as f64;
    let mut student = Network::init(
        teacher.input_shape(),
        &spec.student_arch,
        spec.distill.train.seed,
    )?;
    if student.num_outputs() != teacher.num_outputs() {
        return Err(Error::ArityMismatch {
            net: student.num_outputs(),
            data: teacher.num_outputs(),
        });
    }
    let ratio = param_ratio(&student, teacher)?;
    let ratio_warning = ratio < RATIO_WARN_THRESHOLD;
    if ratio_warning {
        log::warn!(
            "student/teacher parameter ratio {:.1}% is below the recommended 20% floor; \
             expect accuracy loss from an undersized student",
            ratio * 100.0
        );
    }

    let mut records = Vec::new();
    let started = Instant::now();
    let teacher_acc = evaluate_top1(teacher, data_val)?;
    let teacher_eff = count_effective_params(teacher, &MaskSet::ones_for(teacher))?;
    records.push(ExperimentRecord {
        stage: Stage::TeacherBaseline,
        strategy: None,
        fraction: 0.0,
        repeat: 0,
        seed: spec.distill.train.seed,
        accuracy: teacher_acc,
        effective_params: teacher_eff as u64,
        cascaded_extra: 0,
        total_compression: 1.0 - teacher_eff as f64 / teacher_params,
        wall_ms: started.elapsed().as_millis() as u64,
    });

    let started = Instant::now();
    train_student(teacher, &mut student, data_train, data_val, &spec.distill)?;
    let student_acc = evaluate_top1(&student, data_val)?;
    let student_eff = count_effective_params(&student, &MaskSet::ones_for(&student))?;
    records.push(ExperimentRecord {
        stage: Stage::StudentKd,
        strategy: None,
        fraction: 0.0,
        repeat: 0,
        seed: spec.distill.train.seed,
        accuracy: student_acc,
        effective_params: student_eff as u64,
        cascaded_extra: 0,
        total_compression: 1.0 - student_eff as f64 / teacher_params,
        wall_ms: started.elapsed().as_millis() as u64,
    });

    let mut sweep_records = prune_sweep(&student, data_train, data_val, &spec.sweep)?;
    for r in &mut sweep_records {
        r.stage = Stage::StudentPruned;
        r.total_compression = 1.0 - r.effective_params as f64 / teacher_params;
    }
    records.extend(sweep_records);

    Ok(KdPruneOutput {
        records,
        student,
        param_ratio: ratio,
        ratio_warning,
    })
}

/// Fraction of examples whose highest logit matches the label; argmax ties
/// resolve to the lowest class index.
pub fn evaluate_top1(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.class_count > net.num_outputs() {
        return Err(Error::ArityMismatch {
            net: net.num_outputs(),
            data: data.class_count,
        });
    }
    const CHUNK: usize = 512;
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(CHUNK) {
        let (batch, labels) = data.gather(chunk);
        let logits = net.forward(&batch)?;
        for (row, &label) in labels.iter().enumerate() {
            if argmax(logits.row(row)) == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Pooled fraction of pixels whose predicted class id equals ground truth.
pub fn evaluate_global_pixel_accuracy(pred: &PixelLabels, gt: &PixelLabels) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            what: "predicted masks".into(),
            expected: gt.shape().to_vec(),
            got: pred.shape().to_vec(),
        });
    }
    let total = pred.ids().len();
    let matches = pred
        .ids()
        .iter()
        .zip(gt.ids())
        .filter(|(a, b)| a == b)
        .count();
    Ok(matches as f64 / total as f64)
}

/// Convenience wrapper: evaluate top-1 of a network against data, batching a
/// forward pass over raw inputs. Used by CLI `eval`.
pub fn forward_all(net: &Network, inputs: &Tensor) -> Result<Tensor> {
    net.forward(inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
        assert_eq!(argmax(&[-1.0, -3.0, -1.0]), 0);
    }

    #[test]
    fn sweep_spec_validation() {
        let base = SweepSpec {
            strategies: vec![PruneStrategy::Random],
            fractions: vec![0.0, 0.5],
            repeats: 1,
            base_seed: 0,
            fine_tune: None,
            cascade: false,
        };
        assert!(base.validate().is_ok());
        assert!(SweepSpec {
            strategies: vec![],
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            fractions: vec![0.5, 0.2],
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            fractions: vec![1.5],
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(SweepSpec { repeats: 0, ..base }.validate().is_err());
    }

    #[test]
    fn gpa_trivial_cases() {
        let a = PixelLabels::new([1, 2, 2], vec![0, 1, 1, 0], 2).unwrap();
        let b = PixelLabels::new([1, 2, 2], vec![1, 0, 0, 1], 2).unwrap();
        assert_eq!(evaluate_global_pixel_accuracy(&a, &a).unwrap(), 1.0);
        assert_eq!(evaluate_global_pixel_accuracy(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn gpa_counts_pooled_pixels() {
        // 4x4 grid with 12 matching pixels -> 0.75
        let gt = PixelLabels::new([1, 4, 4], vec![0; 16], 2).unwrap();
        let mut ids = vec![0u32; 16];
        for v in ids.iter_mut().take(4) {
            *v = 1;
        }
        let pred = PixelLabels::new([1, 4, 4], ids, 2).unwrap();
        assert_eq!(evaluate_global_pixel_accuracy(&pred, &gt).unwrap(), 0.75);
    }

    #[test]
    fn gpa_shape_mismatch() {
        let a = PixelLabels::new([1, 2, 2], vec![0; 4], 2).unwrap();
        let b = PixelLabels::new([1, 2, 3], vec![0; 6], 2).unwrap();
        assert!(evaluate_global_pixel_accuracy(&a, &b).is_err());
    }
}
