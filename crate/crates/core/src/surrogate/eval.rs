//! Test-set metrics in prediction and free-running simulation mode.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::Surrogate;
use super::narx::{NarxDataset, N_Y};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Prediction,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: EvalMode,
    pub samples: usize,
    /// Mean squared error over all channels, normalized units.
    pub mse: f64,
    pub mse_per_channel: Vec<f64>,
    /// Fraction of label entries inside the interval; `None` without one.
    pub coverage: Option<f64>,
    pub coverage_per_channel: Option<Vec<f64>>,
    /// Set when a free-running rollout produced non-finite values.
    pub diverged: bool,
}

#[derive(Default)]
struct Acc {
    n: usize,
    sq: [f64; N_Y],
    inside: [usize; N_Y],
}

impl Acc {
    fn push(&mut self, y: &[f64], lo: &[f64], mid: &[f64], up: &[f64]) {
        self.n += 1;
        for c in 0..N_Y {
            let e = mid[c] - y[c];
            self.sq[c] += e * e;
            if lo[c] <= y[c] && y[c] <= up[c] {
                self.inside[c] += 1;
            }
        }
    }

    fn finish(self, mode: EvalMode, has_interval: bool, diverged: bool) -> Metrics {
        let n = self.n.max(1) as f64;
        let per: Vec<f64> = self.sq.iter().map(|s| s / n).collect();
        let cov: Vec<f64> = self.inside.iter().map(|&k| k as f64 / n).collect();
        Metrics {
            mode,
            samples: self.n,
            mse: per.iter().sum::<f64>() / N_Y as f64,
            mse_per_channel: per,
            coverage: has_interval.then(|| cov.iter().sum::<f64>() / N_Y as f64),
            coverage_per_channel: has_interval.then_some(cov),
            diverged,
        }
    }
}

fn row(m: &DMatrix<f64>, r: usize) -> Vec<f64> {
    m.row(r).iter().copied().collect()
}

/// Evaluates `model` on the dataset rows `rows`.
pub fn evaluate(model: &Surrogate, ds: &NarxDataset, rows: &[usize], mode: EvalMode) -> Metrics {
    match mode {
        EvalMode::Prediction => {
            let (x, y) = ds.normalized(rows);
            let iv = model.predict(&x);
            let mut acc = Acc::default();
            for r in 0..y.nrows() {
                acc.push(&row(&y, r), &row(&iv.lo, r), &row(&iv.mid, r), &row(&iv.up, r));
            }
            acc.finish(mode, model.has_interval(), false)
        }
        EvalMode::Simulation => simulate(model, ds, rows),
    }
}

/// Free-running rollout over each contiguous run of rows: after the first
/// window, lagged outputs are the model's own mid predictions while inputs
/// stay measured.
fn simulate(model: &Surrogate, ds: &NarxDataset, rows: &[usize]) -> Metrics {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        groups.entry(ds.origin[r].trajectory).or_default().push(r);
    }
    let spec = ds.spec;
    let mut acc = Acc::default();
    let mut diverged = false;
    for (_, mut g) in groups {
        g.sort_by_key(|&r| ds.origin[r].k);
        let (x, y) = ds.normalized(&g);
        // predictions[j] is the model's estimate of y at origin k_j + 1
        let mut predictions: Vec<Vec<f64>> = Vec::with_capacity(g.len());
        for j in 0..g.len() {
            let k = ds.origin[g[j]].k;
            if j > 0 && ds.origin[g[j - 1]].k + 1 != k {
                predictions.clear();
            }
            let mut xr = row(&x, j);
            let available = predictions.len();
            for lag in 0..=spec.lag {
                // y_{k - lag} was predicted at step j - lag - 1
                if lag < available {
                    let p = &predictions[available - 1 - lag];
                    for c in 0..N_Y {
                        xr[spec.y_index(lag, c)] = p[c];
                    }
                }
            }
            let iv = model.predict(&DMatrix::from_row_slice(1, xr.len(), &xr));
            let mid = row(&iv.mid, 0);
            if mid.iter().any(|v| !v.is_finite()) {
                diverged = true;
                break;
            }
            acc.push(&row(&y, j), &row(&iv.lo, 0), &mid, &row(&iv.up, 0));
            predictions.push(mid);
        }
    }
    acc.finish(EvalMode::Simulation, model.has_interval(), diverged)
}
