//! NARX surrogate models of the plant outlet: a plain network, conformalized
//! quantile regression and a Bayesian last layer network.

pub mod bll;
pub mod cqr;
pub mod eval;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod narx;
pub mod train;

pub use bll::{BllModel, BllTrainConfig};
pub use cqr::{CqrModel, Interval};
pub use eval::{evaluate, EvalMode, Metrics};
pub use mlp::{gelu, Activation, Mlp};
pub use model::{dataset_hash, Metadata, Model, ModelKind, Surrogate, SurrogateConfig};
pub use narx::{NarxDataset, NarxSpec, Scaling, SplitFractions, Standardizer, D50, D90, N_Y};
pub use train::{Objective, TrainConfig, TrainReport};
