//! Modality-balanced training for late-fusion multimodal recommenders.
//!
//! The crate trains a VBPR-style scoring model over implicit feedback and a set of
//! per-item modality feature matrices. Uni-modal teachers are obtained by ablating
//! every other modality with its mean vector; a multimodal student is then trained
//! with pairwise ranking loss plus per-modality distillation terms whose weights are
//! re-estimated every batch from counterfactual modality effects.
//!
//! Module map:
//!
//! - [`data`]: interaction files, 5-core filtering, splitting, triple sampling,
//!   feature matrices and a synthetic generator.
//! - [`backbone`]: parameters, full and masked scoring, analytic gradients, Adam,
//!   checkpoints.
//! - [`losses`]: ranking and distillation objectives.
//! - [`counterfactual`]: treatment-effect estimates and distillation weights.
//! - [`trainer`]: teacher, backbone and student training loops.
//! - [`eval`]: top-K ranking metrics.
//! - [`diagnostics`]: imbalance pilot study and gradient-bridge experiment.

pub mod backbone;
pub mod counterfactual;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matrix;
pub mod rng;
pub mod trainer;

pub use backbone::{AdamState, BatchMargins, Gradients, ModalitySet, ModelParams};
pub use counterfactual::CausalReport;
pub use data::{
    InteractionData, ModalityFeatures, SynthConfig, Triple, TripleBatch, TripleKind,
};
pub use error::{Error, Result};
pub use eval::{MetricsReport, Split};
pub use losses::{LossConfig, SdVariant};
pub use matrix::Matrix;
pub use trainer::{EpochTrace, TrainConfig};
