//! End-to-end helpers shared by the CLI and the acceptance suite.

use crate::confidence::{
    partition_reliable, project, score, ConfidenceReport, LatentSet, ReliablePartition,
    ScoreOptions, Space, Split, ThresholdRule,
};
use crate::dataset::{fit_scaler, Dataset, Scaler};
use crate::error::{Error, Result};
use crate::vae::{fit, init_model, TrainHistory, VaeConfig, VaeModel};

/// Fits the feature scaler (or an identity one), centers the output map on
/// the training targets, and trains a freshly initialized model.
pub fn train_model(
    train: &Dataset,
    cfg: &VaeConfig,
    standardize: bool,
) -> Result<(VaeModel, TrainHistory)> {
    if cfg.input_dim != train.arity() {
        return Err(Error::ArityMismatch {
            expected: cfg.input_dim,
            found: train.arity(),
        });
    }
    let targets = train.targets().ok_or(Error::MissingErrors)?;
    let scaler = if standardize {
        fit_scaler(train)?
    } else {
        Scaler::identity(train.arity())
    };
    let scaled = scaler.apply(train)?;
    let mut model = init_model(cfg)?.with_scaler(scaler)?;
    model.calibrate_targets(&targets)?;
    fit(model, &scaled, cfg)
}

/// Everything produced by scoring one test split.
#[derive(Debug, Clone)]
pub struct ScoreRun {
    pub train_latent: LatentSet,
    pub test_latent: LatentSet,
    pub partition: ReliablePartition,
    pub report: ConfidenceReport,
}

/// Projects both splits with the model's own scaler, partitions the training
/// rows with the mean-error rule and scores the test rows in `space`.
pub fn score_split(
    model: &VaeModel,
    train: &Dataset,
    test: &Dataset,
    space: Space,
    opts: &ScoreOptions,
) -> Result<ScoreRun> {
    let train_scaled = model.scaler.apply(train)?;
    let test_scaled = model.scaler.apply(test)?;
    let train_latent = project(model, &train_scaled)?;
    let test_latent = project(model, &test_scaled)?;
    let partition = partition_reliable(&train_latent, ThresholdRule::MeanError)?;
    let report = score(
        space,
        Split::new(&train_scaled, &train_latent)?,
        Split::new(&test_scaled, &test_latent)?,
        &partition,
        opts,
    )?;
    Ok(ScoreRun {
        train_latent,
        test_latent,
        partition,
        report,
    })
}
