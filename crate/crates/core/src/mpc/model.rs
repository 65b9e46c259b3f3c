//! Prediction models usable inside the controller.

use super::config::UncertaintyMode;
use crate::error::{Error, Result};
use crate::surrogate::{Model, NarxSpec, Scaling, Standardizer, Surrogate, N_Y};

/// One-step NARX predictor in normalized units.
pub trait NarxModel: Sync {
    fn spec(&self) -> NarxSpec;

    fn scaling(&self) -> &Scaling;

    fn mid(&self, x: &[f64]) -> Vec<f64>;

    /// `v^T d mid / dx`.
    fn mid_vjp(&self, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// Fails when the model cannot branch in `mode`.
    fn check_mode(&self, mode: UncertaintyMode, alpha: f64) -> Result<()>;

    /// First-step successors ordered (upper, middle, lower); only the middle
    /// one in nominal mode.
    fn branches(&self, mode: UncertaintyMode, m: f64, x: &[f64]) -> Vec<Vec<f64>>;

    /// `v^T d branch_j / dx`.
    fn branch_vjp(&self, mode: UncertaintyMode, m: f64, x: &[f64], branch: usize, v: &[f64]) -> Vec<f64>;
}

fn unsupported(mode: UncertaintyMode, kind: &str) -> Error {
    Error::invalid("mode", format!("{mode:?} branching needs a matching model, got {kind}"))
}

/// Per channel, the head index supplying the upper, middle and lower value.
fn descending_order(heads: &[Vec<f64>; 3]) -> Vec<[usize; 3]> {
    (0..heads[0].len())
        .map(|c| {
            let mut idx = [2usize, 1, 0];
            idx.sort_by(|&a, &b| heads[b][c].total_cmp(&heads[a][c]));
            idx
        })
        .collect()
}

impl NarxModel for Surrogate {
    fn spec(&self) -> NarxSpec {
        self.spec
    }

    fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    fn mid(&self, x: &[f64]) -> Vec<f64> {
        self.mid_one(x)
    }

    fn mid_vjp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        Surrogate::mid_vjp(self, x, v)
    }

    fn check_mode(&self, mode: UncertaintyMode, alpha: f64) -> Result<()> {
        match (mode, &self.model) {
            (UncertaintyMode::Nominal, _) | (UncertaintyMode::Bll, Model::Bll { .. }) => Ok(()),
            (UncertaintyMode::Cqr, Model::Cqr { cqr }) => {
                if (cqr.alpha - alpha).abs() > 1e-12 {
                    Err(Error::invalid(
                        "alpha",
                        format!("model was calibrated for alpha = {}, controller asks for {alpha}", cqr.alpha),
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Err(unsupported(mode, self.kind().name())),
        }
    }

    fn branches(&self, mode: UncertaintyMode, m: f64, x: &[f64]) -> Vec<Vec<f64>> {
        match (mode, &self.model) {
            (UncertaintyMode::Cqr, Model::Cqr { cqr }) => {
                let heads = cqr.heads_one(x);
                let order = descending_order(&heads);
                (0..3)
                    .map(|b| (0..N_Y).map(|c| heads[order[c][b]][c]).collect())
                    .collect()
            }
            (UncertaintyMode::Bll, Model::Bll { bll, .. }) => {
                let (mu, sd) = bll.predict_one(x);
                [m, 0.0, -m]
                    .iter()
                    .map(|k| mu.iter().zip(&sd).map(|(a, s)| a + k * s).collect())
                    .collect()
            }
            _ => vec![self.mid_one(x)],
        }
    }

    fn branch_vjp(&self, mode: UncertaintyMode, m: f64, x: &[f64], branch: usize, v: &[f64]) -> Vec<f64> {
        match (mode, &self.model) {
            (UncertaintyMode::Cqr, Model::Cqr { cqr }) => {
                let heads = cqr.heads_one(x);
                let order = descending_order(&heads);
                let mut cot = [vec![0.0; N_Y], vec![0.0; N_Y], vec![0.0; N_Y]];
                for c in 0..N_Y {
                    cot[order[c][branch]][c] = v[c];
                }
                let mut g = vec![0.0; x.len()];
                for (net, cv) in [&cqr.lo, &cqr.mid, &cqr.up].into_iter().zip(&cot) {
                    if cv.iter().any(|&a| a != 0.0) {
                        for (gi, d) in g.iter_mut().zip(net.vjp_input(x, cv)) {
                            *gi += d;
                        }
                    }
                }
                g
            }
            (UncertaintyMode::Bll, Model::Bll { bll, .. }) => {
                let k = [m, 0.0, -m][branch];
                bll.vjp_one(x, k, v)
            }
            _ => Surrogate::mid_vjp(self, x, v),
        }
    }
}

/// Affine NARX model `y = A x + b` with a fixed symmetric branch spread.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNarx {
    pub spec: NarxSpec,
    pub scaling: Scaling,
    /// Row-major `N_Y x feature_len`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Half-width added to and subtracted from the mean at the first step.
    pub spread: Vec<f64>,
}

impl LinearNarx {
    /// Model working directly in physical units.
    pub fn new(spec: NarxSpec, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != N_Y * spec.feature_len() || b.len() != N_Y {
            return Err(Error::invalid("a", "matrix shape does not match the NARX layout"));
        }
        Ok(Self {
            spec,
            scaling: Scaling {
                y: Standardizer::identity(N_Y),
                u: Standardizer::identity(spec.n_u()),
            },
            a,
            b,
            spread: vec![0.0; N_Y],
        })
    }
}

impl NarxModel for LinearNarx {
    fn spec(&self) -> NarxSpec {
        self.spec
    }

    fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    fn mid(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..N_Y)
            .map(|r| self.b[r] + self.a[r * n..(r + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn mid_vjp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n).map(|i| (0..N_Y).map(|r| v[r] * self.a[r * n + i]).sum()).collect()
    }

    fn check_mode(&self, _mode: UncertaintyMode, _alpha: f64) -> Result<()> {
        Ok(())
    }

    fn branches(&self, mode: UncertaintyMode, m: f64, x: &[f64]) -> Vec<Vec<f64>> {
        let mid = self.mid(x);
        if mode == UncertaintyMode::Nominal {
            return vec![mid];
        }
        let k = if mode == UncertaintyMode::Bll { m } else { 1.0 };
        [k, 0.0, -k]
            .iter()
            .map(|s| mid.iter().zip(&self.spread).map(|(a, d)| a + s * d).collect())
            .collect()
    }

    fn branch_vjp(&self, _mode: UncertaintyMode, _m: f64, x: &[f64], _branch: usize, v: &[f64]) -> Vec<f64> {
        self.mid_vjp(x, v)
    }
}
