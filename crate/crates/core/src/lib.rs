//! End-to-end toolkit for image-based body-composition regression on
//! two-channel (water/fat) volume data.
//!
//! The pipeline stages, in data-flow order:
//!
//! - [`volume`]: volume file format, trilinear resampling, station fusion,
//!   mean-intensity projections, and 8-bit two-channel input assembly.
//! - [`phantom`]: synthetic phantom cohorts with voxel-counted ground truth,
//!   used as a verification oracle for the whole pipeline.
//! - [`tables`]: cohort manifests and prediction tables (CSV codecs).
//! - [`autodiff`]: minimal reverse-mode automatic differentiation on dense
//!   tensors (conv/batchnorm/relu/add/pool/linear/mse, Adam, gradient checks).
//! - [`backbone`]: residual convolutional regression network built on
//!   [`autodiff`], with checkpointing.
//! - [`harness`]: k-fold cross-validated training with per-split target
//!   standardization and translation augmentation.
//! - [`stats`]: agreement statistics (MAE, limits of agreement, R², Pearson,
//!   ROC AUC, threshold metrics, linear baselines, cross-method agreement).
//! - [`saliency`]: guided Grad-CAM maps, cohort aggregation, overlays.
//!
//! Every random decision in the library flows from explicitly named seeds;
//! reruns with identical inputs and configuration produce byte-identical
//! artifacts.

pub mod autodiff;
pub mod backbone;
pub mod harness;
pub mod phantom;
pub mod saliency;
pub mod seeds;
pub mod stats;
pub mod tables;
pub mod volume;
