//! Dataset-to-models training pipeline.

use crate::error::{Error, Result};
use crate::par;
use crate::sim::Trajectory;
use crate::surrogate::{dataset_hash, evaluate, EvalMode, Metrics, ModelKind, NarxDataset, NarxSpec, Surrogate, SurrogateConfig};

/// Surrogate settings of the closed-loop studies: the measured inlet crystal
/// fraction enters the model as a fourth input.
pub fn case_study_surrogate_config() -> SurrogateConfig {
    SurrogateConfig {
        narx: NarxSpec {
            with_disturbance: true,
            ..NarxSpec::default()
        },
        ..SurrogateConfig::default()
    }
}

/// Builds the NARX dataset and trains the requested families on it.
pub fn train_models(trajs: &[Trajectory], cfg: &SurrogateConfig, kinds: &[ModelKind]) -> Result<(NarxDataset, Vec<Surrogate>)> {
    cfg.validate()?;
    let ds = NarxDataset::build(trajs, cfg.narx, cfg.splits, cfg.seed)?;
    if ds.splits.train.is_empty() {
        return Err(Error::Dataset("no training rows".into()));
    }
    let hash = dataset_hash(trajs)?;
    let models = par::map(cfg.execution, kinds, |&k| Surrogate::train(k, &ds, cfg, hash.clone()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((ds, models))
}

/// Test-split metrics of each model in both evaluation modes.
pub fn test_metrics(ds: &NarxDataset, models: &[Surrogate]) -> Vec<(ModelKind, Metrics, Metrics)> {
    models
        .iter()
        .map(|m| {
            (
                m.kind(),
                evaluate(m, ds, &ds.splits.test, EvalMode::Prediction),
                evaluate(m, ds, &ds.splits.test, EvalMode::Simulation),
            )
        })
        .collect()
}
