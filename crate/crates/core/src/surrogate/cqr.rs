//! Conformalized quantile regression.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqrModel {
    pub lo: Mlp,
    pub mid: Mlp,
    pub up: Mlp,
    pub alpha: f64,
    /// Per-output conformal offsets; zero until calibrated.
    pub offsets: Vec<f64>,
}

/// Prediction triple, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: DMatrix<f64>,
    pub mid: DMatrix<f64>,
    pub up: DMatrix<f64>,
}

impl Interval {
    /// Degenerate interval around a point prediction.
    pub fn point(mid: DMatrix<f64>) -> Self {
        Self {
            lo: mid.clone(),
            up: mid.clone(),
            mid,
        }
    }

    /// Fraction of label entries inside `[lo, up]`.
    pub fn coverage(&self, y: &DMatrix<f64>) -> f64 {
        let inside = y
            .iter()
            .zip(self.lo.iter().zip(self.up.iter()))
            .filter(|(v, (l, u))| *l <= *v && *v <= *u)
            .count();
        inside as f64 / y.len().max(1) as f64
    }
}

/// Conformity score `max(lo - y, y - up)`.
pub fn conformity_score(lo: f64, up: f64, y: f64) -> f64 {
    (lo - y).max(y - up)
}

/// Smallest calibration set for which the order statistic exists.
pub fn min_calibration_size(alpha: f64) -> usize {
    (((1.0 - alpha) / alpha).ceil() as usize).max(20)
}

/// The `ceil((1 - alpha)(n + 1))`-th smallest score.
pub fn conformal_quantile(scores: &mut [f64], alpha: f64) -> Result<f64> {
    let n = scores.len();
    let min = min_calibration_size(alpha);
    if n < min {
        return Err(Error::CalibrationTooSmall { got: n, min });
    }
    let k = ((1.0 - alpha) * (n as f64 + 1.0)).ceil() as usize;
    let k = k.clamp(1, n);
    scores.sort_by(f64::total_cmp);
    Ok(scores[k - 1])
}

/// Sorts each `(a, b, c)` triple so that `a <= b <= c`.
fn sort3(a: &mut f64, b: &mut f64, c: &mut f64) {
    if *a > *b {
        std::mem::swap(a, b);
    }
    if *b > *c {
        std::mem::swap(b, c);
    }
    if *a > *b {
        std::mem::swap(a, b);
    }
}

impl CqrModel {
    pub fn new(lo: Mlp, mid: Mlp, up: Mlp, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        let n = mid.n_out();
        if lo.n_out() != n || up.n_out() != n || lo.n_in() != mid.n_in() || up.n_in() != mid.n_in() {
            return Err(Error::invalid("cqr", "quantile heads disagree in shape"));
        }
        Ok(Self {
            lo,
            mid,
            up,
            alpha,
            offsets: vec![0.0; n],
        })
    }

    /// Sets per-output offsets from a calibration set unseen in training.
    pub fn conformalize(&mut self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<&[f64]> {
        let lo = self.lo.forward(x);
        let up = self.up.forward(x);
        for c in 0..y.ncols() {
            let mut scores: Vec<f64> = (0..y.nrows())
                .map(|r| conformity_score(lo[(r, c)], up[(r, c)], y[(r, c)]))
                .collect();
            self.offsets[c] = conformal_quantile(&mut scores, self.alpha)?;
        }
        Ok(&self.offsets)
    }

    /// Conformalized interval with the triple sorted per entry.
    pub fn predict(&self, x: &DMatrix<f64>) -> Interval {
        let mut lo = self.lo.forward(x);
        let mut mid = self.mid.forward(x);
        let mut up = self.up.forward(x);
        for r in 0..lo.nrows() {
            for c in 0..lo.ncols() {
                let mut l = lo[(r, c)] - self.offsets[c];
                let mut m = mid[(r, c)];
                let mut u = up[(r, c)] + self.offsets[c];
                sort3(&mut l, &mut m, &mut u);
                lo[(r, c)] = l;
                mid[(r, c)] = m;
                up[(r, c)] = u;
            }
        }
        Interval { lo, mid, up }
    }

    /// Unsorted single-sample outputs `(lo - Q, mid, up + Q)`.
    pub fn heads_one(&self, x: &[f64]) -> [Vec<f64>; 3] {
        let mut lo = self.lo.forward_one(x);
        let mid = self.mid.forward_one(x);
        let mut up = self.up.forward_one(x);
        for c in 0..lo.len() {
            lo[c] -= self.offsets[c];
            up[c] += self.offsets[c];
        }
        [lo, mid, up]
    }
}
