//! Knowledge distillation: train a student network to mimic a teacher's
//! output distribution via temperature-softened targets.
//!
//! The loss is
//! `(1 - alpha) * T^2 * CE(softmax(teacher/T), softmax(student/T))
//!  + alpha * CE(onehot(labels), softmax(student))`.
//! The `T^2` factor keeps soft-gradient magnitudes comparable across
//! temperatures. The default `alpha = 0` is pure output mimicry; the default
//! `T = 4` is a conventional choice, not a tuned one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::backprop::{backprop_from_logit_grad, softmax_row_into};
use crate::nn::network::Network;
use crate::nn::train::{sgd_step, shuffle, zero_like_params, EpochStats, TrainConfig, TrainReport};
use crate::tensor::Tensor;

pub const DEFAULT_TEMPERATURE: f64 = 4.0;
pub const DEFAULT_ALPHA: f64 = 0.0;

/// Student/teacher parameter ratio below which the pipeline warns that the
/// student is likely too small.
pub const RATIO_WARN_THRESHOLD: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    /// Softening divisor applied to logits before the softmax; > 0.
    pub temperature: f64,
    /// Weight of the hard-label loss in `[0, 1]`; 0 is pure soft targets.
    pub alpha: f64,
    pub train: TrainConfig,
}

impl DistillConfig {
    pub fn new(temperature: f64, alpha: f64, train: TrainConfig) -> Result<DistillConfig> {
        let cfg = DistillConfig {
            temperature,
            alpha,
            train,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        self.train.validate()
    }
}

/// Row-wise `softmax(logits / temperature)`; each row sums to 1.
pub fn soft_targets(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let [n, classes] = *logits.shape() else {
        return Err(Error::ShapeMismatch {
            what: "soft_targets logits".into(),
            expected: vec![0, 0],
            got: logits.shape().to_vec(),
        });
    };
    let mut out = Tensor::zeros(logits.shape());
    for b in 0..n {
        let row = logits.row(b);
        softmax_row_into(
            row,
            temperature,
            &mut out.values_mut()[b * classes..(b + 1) * classes],
        );
    }
    Ok(out)
}

/// Mean distillation loss over a batch. `hard_labels` may be empty when
/// `alpha == 0`; otherwise one label per row is required.
pub fn distill_loss(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    hard_labels: &[usize],
    cfg: &DistillConfig,
) -> Result<f64> {
    let (loss, _) = distill_loss_and_logit_grad(student_logits, teacher_logits, hard_labels, cfg)?;
    Ok(loss)
}

/// Loss plus its exact gradient w.r.t. the student logits.
pub fn distill_loss_and_logit_grad(
    student_logits: &Tensor,
    teacher_logits: &Tensor,
    hard_labels: &[usize],
    cfg: &DistillConfig,
) -> Result<(f64, Tensor)> {
    cfg.validate()?;
    if student_logits.shape() != teacher_logits.shape() {
        return Err(Error::ShapeMismatch {
            what: "teacher logits".into(),
            expected: student_logits.shape().to_vec(),
            got: teacher_logits.shape().to_vec(),
        });
    }
    let [n, classes] = *student_logits.shape() else {
        return Err(Error::ShapeMismatch {
            what: "student logits".into(),
            expected: vec![0, 0],
            got: student_logits.shape().to_vec(),
        });
    };
    if cfg.alpha > 0.0 && hard_labels.len() != n {
        return Err(Error::ShapeMismatch {
            what: "hard labels".into(),
            expected: vec![n],
            got: vec![hard_labels.len()],
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let t = cfg.temperature;
    let soft_w = (1.0 - cfg.alpha) * t * t;
    let mut grad = Tensor::zeros(student_logits.shape());
    let mut total = 0.0;
    let mut p_teacher = vec![0.0; classes];
    let mut p_student_t = vec![0.0; classes];
    let mut p_student = vec![0.0; classes];
    for b in 0..n {
        let srow = student_logits.row(b);
        let trow = teacher_logits.row(b);
        let g = &mut grad.values_mut()[b * classes..(b + 1) * classes];
        if soft_w != 0.0 {
            softmax_row_into(trow, t, &mut p_teacher);
            softmax_row_into(srow, t, &mut p_student_t);
            // CE(p_teacher, softmax(s/T)) via log-sum-exp for stability
            let max = srow.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let log_z: f64 = srow
                .iter()
                .map(|&v| ((v - max) / t).exp())
                .sum::<f64>()
                .ln();
            let mut ce = 0.0;
            for j in 0..classes {
                if p_teacher[j] != 0.0 {
                    ce -= p_teacher[j] * ((srow[j] - max) / t - log_z);
                }
                // d/ds of T^2 * CE is T * (softmax(s/T) - p_teacher)
                g[j] += soft_w / t * (p_student_t[j] - p_teacher[j]) / n as f64;
            }
            total += soft_w * ce;
        }
        if cfg.alpha > 0.0 {
            let label = hard_labels[b];
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
            softmax_row_into(srow, 1.0, &mut p_student);
            let max = srow.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let log_z: f64 = srow.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total -= cfg.alpha * (srow[label] - max - log_z);
            for j in 0..classes {
                let hot = if j == label { 1.0 } else { 0.0 };
                g[j] += cfg.alpha * (p_student[j] - hot) / n as f64;
            }
        }
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { example: 0 });
    }
    Ok((loss, grad))
}

/// Trains the student to mimic the (frozen) teacher over `data`; reports
/// per-epoch distillation loss and validation top-1.
pub fn train_student(
    teacher: &Network,
    student: &mut Network,
    data: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &DistillConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if teacher.num_outputs() != student.num_outputs() {
        return Err(Error::ArityMismatch {
            net: student.num_outputs(),
            data: teacher.num_outputs(),
        });
    }
    if teacher.input_shape() != student.input_shape() {
        return Err(Error::ShapeMismatch {
            what: "student input shape".into(),
            expected: teacher.input_shape().to_vec(),
            got: student.input_shape().to_vec(),
        });
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tc = &cfg.train;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut velocity = zero_like_params(student);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..tc.epochs {
        if tc.shuffle {
            shuffle(&mut order, &mut rng);
        }
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(tc.batch_size).enumerate() {
            let (batch, labels) = data.gather(chunk);
            // Teacher targets are computed on the fly; the teacher is never
            // mutated.
            let teacher_logits = teacher.forward(&batch)?;
            let trace = student.forward_trace(&batch)?;
            let (loss, dlogits) =
                match distill_loss_and_logit_grad(trace.logits(), &teacher_logits, &labels, cfg) {
                    Ok(ok) => ok,
                    Err(Error::NonFiniteLoss { .. }) => {
                        return Err(Error::Diverged {
                            epoch,
                            batch: batch_idx,
                        })
                    }
                    Err(e) => return Err(e),
                };
            epoch_loss += loss * chunk.len() as f64;
            let grads = backprop_from_logit_grad(student, &trace, dlogits);
            sgd_step(student, &grads, &mut velocity, tc);
        }
        let accuracy = crate::pipeline::evaluate_top1(student, val)?;
        report.epochs.push(EpochStats {
            loss: epoch_loss / data.len() as f64,
            accuracy,
        });
    }
    Ok(report)
}

/// Total parameter count quotient `student / teacher` (weights plus biases,
/// masks ignored).
pub fn param_ratio(student: &Network, teacher: &Network) -> Result<f64> {
    let t = teacher.param_count();
    if t == 0 {
        return Err(Error::ZeroParamTeacher);
    }
    Ok(student.param_count() as f64 / t as f64)
}
