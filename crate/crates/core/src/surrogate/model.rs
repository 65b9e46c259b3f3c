//! Trained surrogate artifacts: a model family plus the NARX layout and
//! normalization it was trained with.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bll::{BllModel, BllTrainConfig};
use super::cqr::{CqrModel, Interval};
use super::mlp::Mlp;
use super::narx::{NarxDataset, NarxSpec, Scaling, SplitFractions, N_Y};
use super::train::{train_network, Objective, TrainConfig, TrainReport};
use crate::error::{require_positive, Error, Result};
use crate::par::{self, Execution};
use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Nn,
    Cqr,
    Bll,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Nn, ModelKind::Cqr, ModelKind::Bll];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nn => "nn",
            ModelKind::Cqr => "cqr",
            ModelKind::Bll => "bll",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(ModelKind::Nn),
            "cqr" => Ok(ModelKind::Cqr),
            "bll" => Ok(ModelKind::Bll),
            other => Err(Error::invalid("model", format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Nn { net: Mlp },
    Cqr { cqr: CqrModel },
    Bll { bll: BllModel, m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub dataset_sha256: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_calibration: usize,
    pub reports: Vec<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub spec: NarxSpec,
    pub scaling: Scaling,
    pub model: Model,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub narx: NarxSpec,
    pub splits: SplitFractions,
    pub hidden: usize,
    pub quantile_hidden: usize,
    pub alpha: f64,
    /// Standard-deviation multiplier of the BLL interval.
    pub m: f64,
    pub train: TrainConfig,
    pub bll: BllTrainConfig,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            narx: NarxSpec::default(),
            splits: SplitFractions::default(),
            hidden: 30,
            quantile_hidden: 10,
            alpha: 0.05,
            m: 2.0,
            train: TrainConfig::default(),
            bll: BllTrainConfig::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        self.splits.validate()?;
        self.train.validate()?;
        if self.hidden == 0 || self.quantile_hidden == 0 {
            return Err(Error::invalid("hidden", "hidden layer sizes must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(Error::invalid("m", format!("must be finite and >= 0, got {}", self.m)));
        }
        require_positive("bll.learning_rate", self.bll.learning_rate)
    }
}

/// SHA-256 of the CSV serialization of `trajs`.
pub fn dataset_hash(trajs: &[Trajectory]) -> Result<String> {
    let mut buf = Vec::new();
    Trajectory::write_many(trajs, &mut buf)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Surrogate {
    /// Trains one model family on `ds`. CQR heads are conformalized on the
    /// calibration split.
    pub fn train(kind: ModelKind, ds: &NarxDataset, cfg: &SurrogateConfig, dataset_sha256: String) -> Result<Self> {
        cfg.validate()?;
        if ds.spec != cfg.narx {
            return Err(Error::invalid("narx", "dataset was built with a different NARX layout"));
        }
        let train = ds.normalized(&ds.splits.train);
        let val = ds.normalized(&ds.splits.validation);
        let n_in = ds.spec.feature_len();
        let tcfg = |stream: u64| TrainConfig {
            seed: cfg.seed.wrapping_add(stream),
            ..cfg.train
        };
        let (model, reports) = match kind {
            ModelKind::Nn => {
                let mut net = Mlp::new(&[n_in, cfg.hidden, N_Y], true, &mut seeded(cfg.seed, 1))?;
                let r = train_network(&mut net, Objective::Mse, (&train.0, &train.1), (&val.0, &val.1), &tcfg(1))?;
                (Model::Nn { net }, vec![r])
            }
            ModelKind::Cqr => {
                let heads = [
                    (cfg.quantile_hidden, cfg.alpha / 2.0, 2u64),
                    (cfg.hidden, 0.5, 3),
                    (cfg.quantile_hidden, 1.0 - cfg.alpha / 2.0, 4),
                ];
                let trained = par::map(cfg.execution, &heads, |&(h, tau, stream)| -> Result<(Mlp, TrainReport)> {
                    let mut net = Mlp::new(&[n_in, h, N_Y], true, &mut seeded(cfg.seed, stream))?;
                    let r = train_network(
                        &mut net,
                        Objective::Pinball { tau },
                        (&train.0, &train.1),
                        (&val.0, &val.1),
                        &tcfg(stream),
                    )?;
                    Ok((net, r))
                });
                let mut it = trained.into_iter();
                let (lo, r0) = it.next().expect("three heads")?;
                let (mid, r1) = it.next().expect("three heads")?;
                let (up, r2) = it.next().expect("three heads")?;
                let mut cqr = CqrModel::new(lo, mid, up, cfg.alpha)?;
                let cal = ds.normalized(&ds.splits.calibration);
                cqr.conformalize(&cal.0, &cal.1)?;
                (Model::Cqr { cqr }, vec![r0, r1, r2])
            }
            ModelKind::Bll => {
                let features = Mlp::new(&[n_in, cfg.hidden], false, &mut seeded(cfg.seed, 5))?;
                let bcfg = BllTrainConfig {
                    seed: cfg.seed.wrapping_add(5),
                    ..cfg.bll
                };
                let (bll, r) = BllModel::train(features, (&train.0, &train.1), (&val.0, &val.1), &bcfg)?;
                (Model::Bll { bll, m: cfg.m }, vec![r])
            }
        };
        Ok(Self {
            spec: ds.spec,
            scaling: ds.scaling.clone(),
            model,
            metadata: Metadata {
                seed: cfg.seed,
                dataset_sha256,
                n_train: ds.splits.train.len(),
                n_validation: ds.splits.validation.len(),
                n_calibration: ds.splits.calibration.len(),
                reports,
            },
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            Model::Nn { .. } => ModelKind::Nn,
            Model::Cqr { .. } => ModelKind::Cqr,
            Model::Bll { .. } => ModelKind::Bll,
        }
    }

    /// Interval prediction in normalized units.
    pub fn predict(&self, x: &DMatrix<f64>) -> Interval {
        match &self.model {
            Model::Nn { net } => Interval::point(net.forward(x)),
            Model::Cqr { cqr } => cqr.predict(x),
            Model::Bll { bll, m } => {
                let p = bll.predict(x);
                let d = p.std * *m;
                Interval {
                    lo: &p.mean - &d,
                    up: &p.mean + &d,
                    mid: p.mean,
                }
            }
        }
    }

    /// Whether the family provides an interval.
    pub fn has_interval(&self) -> bool {
        !matches!(self.model, Model::Nn { .. })
    }

    /// Point prediction for one normalized feature vector.
    pub fn mid_one(&self, x: &[f64]) -> Vec<f64> {
        match &self.model {
            Model::Nn { net } => net.forward_one(x),
            Model::Cqr { cqr } => cqr.mid.forward_one(x),
            Model::Bll { bll, .. } => bll.predict_one(x).0,
        }
    }

    pub fn mid_vjp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.model {
            Model::Nn { net } => net.vjp_input(x, v),
            Model::Cqr { cqr } => cqr.mid.vjp_input(x, v),
            Model::Bll { bll, .. } => bll.vjp_one(x, 0.0, v),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let s: Self = serde_json::from_str(&text)?;
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        let n_in = self.spec.feature_len();
        let ok = match &self.model {
            Model::Nn { net } => net.n_in() == n_in && net.n_out() == N_Y && net.is_finite(),
            Model::Cqr { cqr } => cqr.mid.n_in() == n_in && cqr.offsets.len() == N_Y && cqr.mid.is_finite(),
            Model::Bll { bll, .. } => bll.features.n_in() == n_in && bll.n_out() == N_Y && bll.features.is_finite(),
        };
        if ok && self.scaling.y.len() == N_Y && self.scaling.u.len() == self.spec.n_u() {
            Ok(())
        } else {
            Err(Error::Parse("model artifact does not match its NARX layout".into()))
        }
    }
}
