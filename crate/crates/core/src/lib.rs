//! Survival prediction with multi-task logistic regression (MTLR) and its
//! competing-risks extension.
//!
//! The time axis is discretized into `K` intervals. For each of `E` mutually
//! exclusive events the model scores every (interval, event) cell and
//! normalizes across all `K * E` cells, giving a joint distribution over when
//! and why the event happens. Cumulative incidence curves follow by summing
//! over intervals. An optional ReLU encoder learns a shared representation
//! from clinical features concatenated with precomputed image features.
//!
//! Modules:
//!
//! - [`dataset`]: records, CSV ingestion, feature encoding, time grid
//! - [`mtlr`]: scores, partition function, joint PMF, CIF, likelihood
//! - [`encoder`]: fully connected encoder with reverse-mode gradients
//! - [`model`]: encoder and head composed, flattened parameters
//! - [`trainer`]: Adam, validation-based selection, model files
//! - [`metrics`]: cause-specific C-index and horizon AUROC
//! - [`synthgen`]: exponential competing-risks simulator with closed-form CIF
//! - [`gradcheck`]: finite-difference gradient verification
//! - [`cli`]: the `crmtlr` command-line tool
//!
//! See `examples/` for one runnable program per capability.

pub mod cli;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod math;
pub mod metrics;
pub mod model;
pub mod mtlr;
pub mod synthgen;
pub mod trainer;

pub use dataset::{build_grid, FeatureEncoding, Schema, SubjectRecord, TimeGrid};
pub use encoder::{EncoderNet, FusedInput};
pub use error::{Error, Result};
pub use metrics::{cause_specific_cindex, horizon_auroc, AurocNegatives, Outcome};
pub use model::SurvivalModel;
pub use mtlr::{CifCurve, MtlrHead, Observation, PredictionGrid};
pub use trainer::{train, Architecture, ModelBundle, TrainConfig};
