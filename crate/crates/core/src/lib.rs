//! Desk-scale model compression laboratory.
//!
//! Building blocks:
//!
//! * [`nn`] - a minimal feed-forward engine (dense/conv/relu/maxpool/flatten)
//!   with exact backprop and seeded SGD training; everything is `f64` and
//!   bitwise deterministic under a seed.
//! * [`dataio`] - IDX (MNIST family) and CIFAR-10 binary parsers, synthetic
//!   blob/segmentation generators, deterministic splits.
//! * [`pruning`] - random / class-uniform / class-blind connection pruning,
//!   dead-neuron cascade elimination, effective-parameter counting, masked
//!   fine-tuning.
//! * [`distill`] - temperature-softened knowledge distillation.
//! * [`pipeline`] - sweeps over strategies and fractions, KD-then-prune, and
//!   the top-1 / global-pixel-accuracy metrics.
//! * [`report`] - CSV/JSON experiment records and plot-ready curves.

pub mod dataio;
pub mod distill;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod pruning;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
