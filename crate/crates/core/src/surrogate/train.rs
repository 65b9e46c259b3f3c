//! Adam with mini-batches and early stopping on a validation score.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss;
use super::mlp::Mlp;
use crate::error::{require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            batch_size: 64,
            learning_rate: 2e-3,
            patience: 40,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        require_positive("learning_rate", self.learning_rate)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub final_train: f64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Generic minimization loop. `batch` returns loss and gradient on the given
/// training rows; `score` evaluates a parameter vector on validation data.
/// Returns the parameters with the best validation score.
pub fn fit<B, S>(theta0: Vec<f64>, n_train: usize, cfg: &TrainConfig, mut batch: B, mut score: S) -> Result<(Vec<f64>, TrainReport)>
where
    B: FnMut(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
    S: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::Dataset("empty training split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = theta0;
    let mut opt = Adam::new(theta.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best = theta.clone();
    let mut report = TrainReport {
        best_validation: score(&theta)?,
        ..Default::default()
    };
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (l, g) = batch(&theta, chunk)?;
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("non-finite training loss {l}"),
                });
            }
            opt.step(&mut theta, &g);
            total += l * chunk.len() as f64;
            count += chunk.len();
        }
        report.epochs_run = epoch;
        report.final_train = total / count as f64;
        let v = score(&theta)?;
        if !v.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("non-finite validation score {v}"),
            });
        }
        if v < report.best_validation {
            report.best_validation = v;
            report.best_epoch = epoch;
            best.copy_from_slice(&theta);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, report))
}

/// Loss used to train a plain network head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Mse,
    Pinball { tau: f64 },
}

impl Objective {
    pub fn eval(&self, y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        match *self {
            Objective::Mse => loss::mse(y, yhat),
            Objective::Pinball { tau } => loss::pinball(y, yhat, tau),
        }
    }
}

/// Loss and flattened parameter gradient of `net` on `(x, y)`.
pub fn loss_and_grad(net: &Mlp, objective: Objective, x: &DMatrix<f64>, y: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let cache = net.forward_cached(x);
    let (l, d) = objective.eval(y, cache.output());
    let (g, _) = net.backward(&cache, &d);
    (l, g)
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Trains `net` in place on normalized data with early stopping on the
/// validation loss of the same objective.
pub fn train_network(
    net: &mut Mlp,
    objective: Objective,
    (x_train, y_train): (&DMatrix<f64>, &DMatrix<f64>),
    (x_val, y_val): (&DMatrix<f64>, &DMatrix<f64>),
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if x_train.nrows() != y_train.nrows() || x_val.nrows() != y_val.nrows() {
        return Err(Error::Dataset("feature and label row counts differ".into()));
    }
    let use_train_for_val = x_val.nrows() == 0;
    let mut work = net.clone();
    let mut scorer = net.clone();
    let (best, report) = fit(
        net.params(),
        x_train.nrows(),
        cfg,
        |theta, idx| {
            work.set_params(theta);
            let xb = rows(x_train, idx);
            let yb = rows(y_train, idx);
            Ok(loss_and_grad(&work, objective, &xb, &yb))
        },
        |theta| {
            scorer.set_params(theta);
            let (xv, yv) = if use_train_for_val { (x_train, y_train) } else { (x_val, y_val) };
            Ok(objective.eval(yv, &scorer.forward(xv)).0)
        },
    )?;
    net.set_params(&best);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut theta = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = vec![2.0 * theta[0], 4.0 * theta[1]];
            opt.step(&mut theta, &g);
        }
        assert!(theta[0].abs() < 1e-3 && theta[1].abs() < 1e-3);
    }
}
