//! Bayesian last layer: a deterministic feature network followed by Bayesian
//! linear regression with a Gaussian weight prior.
//!
//! For each output `j` with noise variance `be_j` and prior variance `bw`:
//! `A_j = Phi^T Phi / be_j + I / bw`, posterior mean `A_j^{-1} Phi^T y_j / be_j`,
//! posterior covariance `A_j^{-1}`. `Phi` carries a trailing column of ones.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::train::{fit, Adam, TrainConfig, TrainReport};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BllModel {
    /// Hidden layers only; every layer is GELU.
    pub features: Mlp,
    /// Log noise variance per output.
    pub log_beta_eps: Vec<f64>,
    /// Log prior variance of the last-layer weights.
    pub log_beta_w: f64,
    /// Posterior mean, `(H + 1) x n_out`.
    pub mean: DMatrix<f64>,
    /// Posterior covariance per output.
    pub cov: Vec<DMatrix<f64>>,
}

/// Posterior of the last layer for fixed features and noise levels.
#[derive(Debug, Clone)]
pub struct BlrPosterior {
    pub mean: DMatrix<f64>,
    pub cov: Vec<DMatrix<f64>>,
    pub log_evidence: f64,
    /// Diagonal jitter that had to be added to factor the precision.
    pub jitter: f64,
}

/// Log evidence and its gradients.
#[derive(Debug, Clone)]
pub struct EvidenceGrad {
    pub value: f64,
    /// Gradient w.r.t. the augmented design matrix.
    pub d_phi: DMatrix<f64>,
    pub d_log_beta_eps: Vec<f64>,
    pub d_log_beta_w: f64,
    pub posterior: BlrPosterior,
}

/// Appends a column of ones.
pub fn augment(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, h) = phi.shape();
    DMatrix::from_fn(n, h + 1, |r, c| if c < h { phi[(r, c)] } else { 1.0 })
}

fn factor(a: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return Ok((ch, 0.0));
    }
    let scale = (a.trace() / a.nrows() as f64).abs().max(1e-300);
    let mut jitter = 1e-12 * scale;
    for _ in 0..12 {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(b) {
            return Ok((ch, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::LinearAlgebra("posterior precision is not positive definite".into()))
}

/// Log evidence of Bayesian linear regression over the design `phi`
/// (already augmented) with gradients for feature learning.
pub fn log_evidence(phi: &DMatrix<f64>, y: &DMatrix<f64>, log_beta_eps: &[f64], log_beta_w: f64) -> Result<EvidenceGrad> {
    let (n, d) = phi.shape();
    if y.nrows() != n || y.ncols() != log_beta_eps.len() {
        return Err(Error::invalid("bll", "label shape does not match design or noise vector"));
    }
    let gram = phi.transpose() * phi;
    let bw = log_beta_w.exp();
    let mut value = 0.0;
    let mut d_phi = DMatrix::zeros(n, d);
    let mut d_be = vec![0.0; y.ncols()];
    let mut d_bw = 0.0;
    let mut mean = DMatrix::zeros(d, y.ncols());
    let mut cov = Vec::with_capacity(y.ncols());
    let mut jitter: f64 = 0.0;
    for j in 0..y.ncols() {
        let be = log_beta_eps[j].exp();
        let mut a = &gram / be;
        for i in 0..d {
            a[(i, i)] += 1.0 / bw;
        }
        let (ch, jit) = factor(&a)?;
        jitter = jitter.max(jit);
        let sigma = ch.inverse();
        let yj = y.column(j).into_owned();
        let m: DVector<f64> = &sigma * (phi.transpose() * &yj) / be;
        let r = &yj - phi * &m;
        let rr = r.norm_squared();
        let mm = m.norm_squared();
        let log_det_a = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        value += -0.5 * n as f64 * (LN_2PI + log_beta_eps[j]) - 0.5 * d as f64 * log_beta_w
            - 0.5 * log_det_a
            - rr / (2.0 * be)
            - mm / (2.0 * bw);
        d_phi += (&r * m.transpose() - phi * &sigma) / be;
        let tr_sg = sigma.component_mul(&gram).sum();
        d_be[j] = -0.5 * n as f64 + tr_sg / (2.0 * be) + rr / (2.0 * be);
        d_bw += -0.5 * d as f64 + sigma.trace() / (2.0 * bw) + mm / (2.0 * bw);
        mean.set_column(j, &m);
        cov.push(sigma);
    }
    Ok(EvidenceGrad {
        value,
        d_phi,
        d_log_beta_eps: d_be,
        d_log_beta_w: d_bw,
        posterior: BlrPosterior {
            mean,
            cov,
            log_evidence: value,
            jitter,
        },
    })
}

/// Log evidence and its gradient w.r.t. the log noise levels, computed from
/// the sufficient statistics `G = Phi^T Phi`, `Phi^T Y` and `diag(Y^T Y)`.
pub fn noise_evidence(
    gram: &DMatrix<f64>,
    phi_t_y: &DMatrix<f64>,
    y_t_y: &[f64],
    n: usize,
    log_beta_eps: &[f64],
    log_beta_w: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let d = gram.nrows();
    let bw = log_beta_w.exp();
    let mut value = 0.0;
    let mut d_be = vec![0.0; y_t_y.len()];
    let mut d_bw = 0.0;
    for j in 0..y_t_y.len() {
        let be = log_beta_eps[j].exp();
        let mut a = gram / be;
        for i in 0..d {
            a[(i, i)] += 1.0 / bw;
        }
        let (ch, _) = factor(&a)?;
        let sigma = ch.inverse();
        let b = phi_t_y.column(j).into_owned();
        let m = &sigma * &b / be;
        let rr = (y_t_y[j] - 2.0 * m.dot(&b) + (m.transpose() * gram * &m)[(0, 0)]).max(0.0);
        let mm = m.norm_squared();
        let log_det_a = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        value += -0.5 * n as f64 * (LN_2PI + log_beta_eps[j]) - 0.5 * d as f64 * log_beta_w
            - 0.5 * log_det_a
            - rr / (2.0 * be)
            - mm / (2.0 * bw);
        let tr_sg = sigma.component_mul(gram).sum();
        d_be[j] = -0.5 * n as f64 + tr_sg / (2.0 * be) + rr / (2.0 * be);
        d_bw += -0.5 * d as f64 + sigma.trace() / (2.0 * bw) + mm / (2.0 * bw);
    }
    Ok((value, d_be, d_bw))
}

/// Maximizes the evidence over the noise levels for fixed features.
pub fn refit_noise(phi: &DMatrix<f64>, y: &DMatrix<f64>, log_beta_eps: Vec<f64>, log_beta_w: f64, iterations: usize) -> Result<(Vec<f64>, f64)> {
    let gram = phi.transpose() * phi;
    let pty = phi.transpose() * y;
    let yty: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
    let n = phi.nrows();
    let k = log_beta_eps.len();
    let mut theta = log_beta_eps;
    theta.push(log_beta_w);
    let mut opt = Adam::new(k + 1, 0.02);
    for _ in 0..iterations {
        let (_, gbe, gbw) = noise_evidence(&gram, &pty, &yty, n, &theta[..k], theta[k])?;
        let mut g: Vec<f64> = gbe.iter().map(|v| -v / n as f64).collect();
        g.push(-gbw / n as f64);
        opt.step(&mut theta, &g);
    }
    let lbw = theta.pop().expect("non-empty");
    Ok((theta, lbw))
}

/// Negative log evidence per sample and its gradient w.r.t. the feature
/// parameters followed by the log noise levels and the log prior variance.
pub fn neg_evidence_and_grad(features: &Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>, log_beta_eps: &[f64], log_beta_w: f64) -> Result<(f64, Vec<f64>)> {
    let n = x.nrows().max(1) as f64;
    let cache = features.forward_cached(x);
    let phi = augment(cache.output());
    let ev = log_evidence(&phi, y, log_beta_eps, log_beta_w)?;
    let h = phi.ncols() - 1;
    let d_out = -ev.d_phi.columns(0, h).into_owned() / n;
    let (mut g, _) = features.backward(&cache, &d_out);
    g.extend(ev.d_log_beta_eps.iter().map(|v| -v / n));
    g.push(-ev.d_log_beta_w / n);
    Ok((-ev.value / n, g))
}

/// Closed-form posterior for fixed noise levels.
pub fn blr_posterior(phi: &DMatrix<f64>, y: &DMatrix<f64>, beta_eps: &[f64], beta_w: f64) -> Result<BlrPosterior> {
    let lbe: Vec<f64> = beta_eps.iter().map(|v| v.ln()).collect();
    Ok(log_evidence(phi, y, &lbe, beta_w.ln())?.posterior)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BllTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub init_log_beta_eps: f64,
    pub init_log_beta_w: f64,
    /// Evidence ascent steps on the noise levels once the features are fixed.
    pub noise_iterations: usize,
    pub seed: u64,
}

impl Default for BllTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            learning_rate: 5e-3,
            patience: 150,
            init_log_beta_eps: (0.1f64).ln(),
            init_log_beta_w: 0.0,
            noise_iterations: 3000,
            seed: 0,
        }
    }
}

/// Gaussian predictive mean and standard deviation, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    pub mean: DMatrix<f64>,
    pub std: DMatrix<f64>,
}

impl BllModel {
    pub fn n_out(&self) -> usize {
        self.log_beta_eps.len()
    }

    pub fn beta_eps(&self) -> Vec<f64> {
        self.log_beta_eps.iter().map(|v| v.exp()).collect()
    }

    pub fn beta_w(&self) -> f64 {
        self.log_beta_w.exp()
    }

    fn theta(features: &Mlp, lbe: &[f64], lbw: f64) -> Vec<f64> {
        let mut t = features.params();
        t.extend_from_slice(lbe);
        t.push(lbw);
        t
    }

    /// Trains feature weights and noise levels by maximizing the log evidence
    /// of the training data, early-stopping on validation likelihood.
    pub fn train(
        features: Mlp,
        (x, y): (&DMatrix<f64>, &DMatrix<f64>),
        (xv, yv): (&DMatrix<f64>, &DMatrix<f64>),
        cfg: &BllTrainConfig,
    ) -> Result<(Self, TrainReport)> {
        let n_out = y.ncols();
        let np = features.n_params();
        let split = |theta: &[f64]| -> (Vec<f64>, f64) { (theta[np..np + n_out].to_vec(), theta[np + n_out]) };
        let mut work = features.clone();
        let mut scorer = features.clone();
        let theta0 = Self::theta(&features, &vec![cfg.init_log_beta_eps; n_out], cfg.init_log_beta_w);
        let tcfg = TrainConfig {
            epochs: cfg.epochs,
            batch_size: x.nrows().max(1),
            learning_rate: cfg.learning_rate,
            patience: cfg.patience,
            seed: cfg.seed,
        };
        let use_train_for_val = xv.nrows() == 0;
        let (best, report) = fit(
            theta0,
            x.nrows(),
            &tcfg,
            |theta, _| {
                work.set_params(&theta[..np]);
                let (lbe, lbw) = split(theta);
                neg_evidence_and_grad(&work, x, y, &lbe, lbw)
            },
            |theta| {
                scorer.set_params(&theta[..np]);
                let (lbe, lbw) = split(theta);
                let model = Self::assemble(scorer.clone(), x, y, lbe, lbw)?;
                let (xs, ys) = if use_train_for_val { (x, y) } else { (xv, yv) };
                Ok((model.predict(xs).mean - ys).norm_squared() / ys.len().max(1) as f64)
            },
        )?;
        let mut net = features;
        net.set_params(&best[..np]);
        let (lbe, lbw) = split(&best);
        let phi = augment(&net.forward(x));
        let (lbe, lbw) = refit_noise(&phi, y, lbe, lbw, cfg.noise_iterations)?;
        Ok((Self::assemble(net, x, y, lbe, lbw)?, report))
    }

    /// Builds the posterior for given features and noise levels.
    pub fn assemble(features: Mlp, x: &DMatrix<f64>, y: &DMatrix<f64>, log_beta_eps: Vec<f64>, log_beta_w: f64) -> Result<Self> {
        let phi = augment(&features.forward(x));
        let post = log_evidence(&phi, y, &log_beta_eps, log_beta_w)?.posterior;
        Ok(Self {
            features,
            log_beta_eps,
            log_beta_w,
            mean: post.mean,
            cov: post.cov,
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> GaussianPrediction {
        let phi = augment(&self.features.forward(x));
        let mean = &phi * &self.mean;
        let be = self.beta_eps();
        let std = DMatrix::from_fn(phi.nrows(), self.n_out(), |r, j| {
            let p = phi.row(r).transpose();
            let var = (p.transpose() * &self.cov[j] * &p)[(0, 0)] + be[j];
            var.sqrt()
        });
        GaussianPrediction { mean, std }
    }

    /// Mean Gaussian negative log-likelihood per entry.
    pub fn nll(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let p = self.predict(x);
        let mut s = 0.0;
        for r in 0..y.nrows() {
            for c in 0..y.ncols() {
                let sd = p.std[(r, c)];
                let z = (y[(r, c)] - p.mean[(r, c)]) / sd;
                s += 0.5 * (LN_2PI + z * z) + sd.ln();
            }
        }
        s / y.len().max(1) as f64
    }

    /// Single-sample augmented features.
    pub fn phi_one(&self, x: &[f64]) -> Vec<f64> {
        let mut p = self.features.forward_one(x);
        p.push(1.0);
        p
    }

    /// Single-sample mean and standard deviation per output.
    pub fn predict_one(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let phi = DVector::from_vec(self.phi_one(x));
        let be = self.beta_eps();
        let mu = (self.mean.transpose() * &phi).iter().copied().collect();
        let sd = (0..self.n_out())
            .map(|j| ((phi.transpose() * &self.cov[j] * &phi)[(0, 0)] + be[j]).sqrt())
            .collect();
        (mu, sd)
    }

    /// `v^T d(mu + k * sigma)/dx` for one sample.
    pub fn vjp_one(&self, x: &[f64], k: f64, v: &[f64]) -> Vec<f64> {
        let phi = DVector::from_vec(self.phi_one(x));
        let be = self.beta_eps();
        let mut g = DVector::zeros(phi.len());
        for j in 0..self.n_out() {
            if v[j] == 0.0 {
                continue;
            }
            g += self.mean.column(j) * v[j];
            if k != 0.0 {
                let s_phi = &self.cov[j] * &phi;
                let sd = (phi.dot(&s_phi) + be[j]).sqrt();
                g += s_phi * (v[j] * k / sd);
            }
        }
        let h = phi.len() - 1;
        self.features.vjp_input(x, &g.as_slice()[..h])
    }
}
