//! Scenario-tree rollout of a NARX model over a shared input sequence and
//! the resulting objective with its reverse-mode gradient.

use serde::{Deserialize, Serialize};

use super::config::MpcConfig;
use super::model::NarxModel;
use super::state::NarxState;
use crate::error::{Error, Result};
use crate::par;
use crate::sim::Inputs;
use crate::surrogate::{NarxSpec, D50, D90, N_Y};

/// Decision variables per prediction step.
pub const N_DECISION: usize = 3;

/// Predicted outputs of one branch, physical units, steps `1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub outputs: Vec<[f64; N_Y]>,
    pub slack: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub branches: Vec<Branch>,
    /// Shared input sequence `u_0 .. u_{N-1}`.
    pub inputs: Vec<Inputs>,
}

impl ScenarioTree {
    pub fn max_slack(&self) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| b.slack.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Objective over box coordinates `z in [0, 1]^(3N)` for a fixed initial
/// NARX window.
pub struct Problem<'a, M: NarxModel + ?Sized> {
    model: &'a M,
    cfg: MpcConfig,
    spec: NarxSpec,
    horizon: usize,
    /// Normalized `y_0, y_{-1}, ...`.
    y_hist: Vec<Vec<f64>>,
    /// Normalized `u_{-1}, u_{-2}, ...`, all model input channels.
    u_hist: Vec<Vec<f64>>,
    /// Normalized disturbance held over the horizon.
    w_norm: f64,
    w_cryst: f64,
    z_prev: [f64; N_DECISION],
    d50_now: f64,
}

struct BranchPass {
    cost: f64,
    grad_u: Vec<f64>,
}

impl<'a, M: NarxModel + ?Sized> Problem<'a, M> {
    /// `prev` is the input applied over the last period; `w_cryst` the
    /// current disturbance, held constant over the horizon.
    pub fn new(model: &'a M, state: &NarxState, cfg: &MpcConfig, prev: &Inputs, w_cryst: f64) -> Result<Self> {
        Self::with_horizon(model, state, cfg, prev, w_cryst, cfg.horizon)
    }

    pub fn with_horizon(model: &'a M, state: &NarxState, cfg: &MpcConfig, prev: &Inputs, w_cryst: f64, horizon: usize) -> Result<Self> {
        cfg.validate()?;
        state.require_ready()?;
        model.check_mode(cfg.mode, cfg.alpha)?;
        let spec = model.spec();
        if spec != state.spec() {
            return Err(Error::invalid("narx", "controller state and model use different NARX layouts"));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        let sc = model.scaling();
        let y_hist = (0..=spec.lag).map(|i| sc.y.standardize(state.y(i))).collect();
        let u_hist = (0..spec.lag)
            .map(|i| sc.u.standardize(&spec.input_vector(state.past_input(i))))
            .collect();
        let w_norm = if spec.with_disturbance {
            (w_cryst - sc.u.mean[3]) / sc.u.std[3]
        } else {
            0.0
        };
        Ok(Self {
            model,
            cfg: *cfg,
            spec,
            horizon,
            y_hist,
            u_hist,
            w_norm,
            w_cryst,
            z_prev: cfg.bounds.to_unit(prev),
            d50_now: state.y(0)[D50],
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_vars(&self) -> usize {
        self.horizon * N_DECISION
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn inputs(&self, z: &[f64]) -> Vec<Inputs> {
        z.chunks(N_DECISION)
            .map(|c| self.cfg.bounds.from_unit(c, self.w_cryst))
            .collect()
    }

    /// Box coordinates of `prev` repeated over the horizon, clamped.
    pub fn hold(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.n_vars());
        for _ in 0..self.horizon {
            z.extend(self.z_prev.iter().map(|v| v.clamp(0.0, 1.0)));
        }
        z
    }

    fn u_norm(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let sc = &self.model.scaling().u;
        let b = &self.cfg.bounds;
        let span = b.span();
        z.chunks(N_DECISION)
            .map(|c| {
                let mut u: Vec<f64> = (0..N_DECISION)
                    .map(|i| (b.lower[i] + c[i] * span[i] - sc.mean[i]) / sc.std[i])
                    .collect();
                if self.spec.with_disturbance {
                    u.push(self.w_norm);
                }
                u
            })
            .collect()
    }

    /// NARX window at step `k` of a branch whose predictions so far are
    /// `preds[t - 1] = y_t`.
    fn features(&self, k: usize, preds: &[Vec<f64>], u: &[Vec<f64>]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.spec.feature_len());
        for i in 0..=self.spec.lag {
            if k > i {
                x.extend_from_slice(&preds[k - i - 1]);
            } else {
                x.extend_from_slice(&self.y_hist[i - k]);
            }
        }
        for i in 0..=self.spec.lag {
            if k >= i {
                x.extend_from_slice(&u[k - i]);
            } else {
                x.extend_from_slice(&self.u_hist[i - k - 1]);
            }
        }
        x
    }

    fn forward(&self, branch: usize, u: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut preds: Vec<Vec<f64>> = Vec::with_capacity(self.horizon);
        let mut xs = Vec::with_capacity(self.horizon);
        for k in 0..self.horizon {
            let x = self.features(k, &preds, u);
            let y = if k == 0 {
                self.model.branches(self.cfg.mode, self.cfg.m, &x).swap_remove(branch)
            } else {
                self.model.mid(&x)
            };
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("rollout of branch {branch} at step {}", k + 1)));
            }
            preds.push(y);
            xs.push(x);
        }
        Ok((preds, xs))
    }

    fn physical(&self, y: &[f64], c: usize) -> f64 {
        let sc = &self.model.scaling().y;
        y[c] * sc.std[c] + sc.mean[c]
    }

    fn slack(&self, d90: f64) -> f64 {
        self.cfg.d90_max.map_or(0.0, |b| (d90 - b).max(0.0))
    }

    fn branch_pass(&self, branch: usize, u: &[Vec<f64>], with_grad: bool) -> Result<BranchPass> {
        let (preds, xs) = self.forward(branch, u)?;
        let cfg = &self.cfg;
        let sd = &self.model.scaling().y.std;
        let n = self.horizon;
        let mut cost = 0.0;
        // dcost/dy_t for t = 1..=N at index t - 1
        let mut gy = vec![vec![0.0; N_Y]; n];
        for (t, y) in preds.iter().enumerate() {
            let d50 = self.physical(y, D50);
            let d90 = self.physical(y, D90);
            let s = self.slack(d90);
            let track = d50 - cfg.d50_target;
            cost += -cfg.gamma1 * d50 + cfg.gamma_track * track * track + cfg.rho_soft * s * s;
            gy[t][D50] = (-cfg.gamma1 + 2.0 * cfg.gamma_track * track) * sd[D50];
            gy[t][D90] = 2.0 * cfg.rho_soft * s * sd[D90];
        }
        let n_u = self.spec.n_u();
        let mut grad_u = vec![0.0; n * n_u];
        if with_grad {
            for k in (0..n).rev() {
                let v = &gy[k];
                let gx = if k == 0 {
                    self.model.branch_vjp(cfg.mode, cfg.m, &xs[0], branch, v)
                } else {
                    self.model.mid_vjp(&xs[k], v)
                };
                for i in 0..=self.spec.lag {
                    if k > i {
                        let t = k - i - 1;
                        for c in 0..N_Y {
                            gy[t][c] += gx[self.spec.y_index(i, c)];
                        }
                    }
                    if k >= i {
                        let t = k - i;
                        for c in 0..n_u {
                            grad_u[t * n_u + c] += gx[self.spec.u_index(i, c)];
                        }
                    }
                }
            }
        }
        Ok(BranchPass { cost, grad_u })
    }

    fn shared_cost(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let cfg = &self.cfg;
        let span = cfg.bounds.span();
        let mut cost = -cfg.gamma1 * self.d50_now;
        let mut g = vec![0.0; z.len()];
        let mut prev = self.z_prev;
        for (k, zk) in z.chunks(N_DECISION).enumerate() {
            let q_pm = cfg.bounds.lower[0] + zk[0] * span[0];
            let q_tm = cfg.bounds.lower[2] + zk[2] * span[2];
            cost += -cfg.gamma2 * q_pm + cfg.gamma3 * q_tm;
            g[k * N_DECISION] -= cfg.gamma2 * span[0];
            g[k * N_DECISION + 2] += cfg.gamma3 * span[2];
            for c in 0..N_DECISION {
                let d = zk[c] - prev[c];
                cost += cfg.gamma4 * d * d;
                g[k * N_DECISION + c] += 2.0 * cfg.gamma4 * d;
                if k > 0 {
                    g[(k - 1) * N_DECISION + c] -= 2.0 * cfg.gamma4 * d;
                }
            }
            prev = [zk[0], zk[1], zk[2]];
        }
        if let Some(out) = grad {
            out.copy_from_slice(&g);
        }
        cost
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() == self.n_vars() {
            Ok(())
        } else {
            Err(Error::invalid("inputs", format!("expected {} decision values, got {}", self.n_vars(), z.len())))
        }
    }

    fn combine(&self, z: &[f64], with_grad: bool) -> Result<(f64, Vec<f64>)> {
        self.check_len(z)?;
        let u = self.u_norm(z);
        let nb = self.cfg.mode.n_branches();
        let passes = par::map_range(self.cfg.execution, nb, |j| self.branch_pass(j, &u, with_grad));
        let mut grad = vec![0.0; z.len()];
        let mut value = self.shared_cost(z, Some(&mut grad));
        let sc = &self.model.scaling().u;
        let span = self.cfg.bounds.span();
        let n_u = self.spec.n_u();
        let w = 1.0 / nb as f64;
        for p in passes {
            let p = p?;
            value += w * p.cost;
            if with_grad {
                for k in 0..self.horizon {
                    for c in 0..N_DECISION {
                        grad[k * N_DECISION + c] += w * p.grad_u[k * n_u + c] * span[c] / sc.std[c];
                    }
                }
            }
        }
        Ok((value, grad))
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        Ok(self.combine(z, false)?.0)
    }

    pub fn objective_and_gradient(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.combine(z, true)
    }

    /// Physical predictions of every branch under `z`.
    pub fn rollout(&self, z: &[f64]) -> Result<ScenarioTree> {
        self.check_len(z)?;
        let u = self.u_norm(z);
        let mut branches = Vec::with_capacity(self.cfg.mode.n_branches());
        for j in 0..self.cfg.mode.n_branches() {
            let (preds, _) = self.forward(j, &u)?;
            let outputs: Vec<[f64; N_Y]> = preds
                .iter()
                .map(|y| {
                    let v = self.model.scaling().y.destandardize(y);
                    std::array::from_fn(|c| v[c])
                })
                .collect();
            let slack = outputs.iter().map(|y| self.slack(y[D90])).collect();
            branches.push(Branch { outputs, slack });
        }
        Ok(ScenarioTree {
            branches,
            inputs: self.inputs(z),
        })
    }
}
