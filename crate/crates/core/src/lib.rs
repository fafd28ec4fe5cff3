//! Confidence scores for variational-autoencoder regressors on tabular data.
//!
//! A [`VaeModel`] maps a standardized feature vector to a latent mean and
//! decodes that mean into a scalar prediction. Once trained, every training
//! observation is projected into the latent space and split into a reliable
//! set (absolute error at most the mean training error) and the rest. The
//! confidence distance of an unseen observation is the mean Euclidean
//! distance from its latent mean to the `M` nearest reliable training
//! points; small distances mean trustworthy predictions.
//!
//! The same scoring engine runs on standardized features and on raw
//! `(lat, lon)` coordinates so the latent score can be compared against
//! feature-space and geographic baselines with [`evaluation::build_report`].
//!
//! ```text
//! synthgen ──► dataset ──► vae (fit) ──► confidence (project, partition, score) ──► evaluation
//! ```

pub mod confidence;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod pipeline;
pub mod synthgen;
pub mod vae;

pub use confidence::{
    knn_oracle, mean_knn_distance, partition_reliable, project, score, ConfidenceReport, ScoreOptions, Split,
    LatentSet, Points, ReferenceSet, ReliablePartition, Space, ThresholdRule,
};
pub use dataset::{fit_scaler, load_csv, split_by_date, Dataset, Observation, Scaler};
pub use error::{Error, Result};
pub use evaluation::{build_report, mae, pearson, tail_mae, EvalReport, Tail};
pub use synthgen::{generate, SynthConfig, SynthMeta, SynthOutput};
pub use vae::{
    fit, grad_check, init_model, kl_divergence, load_model, sample_latent, save_model,
    Activation, TrainHistory, VaeConfig, VaeModel,
};
