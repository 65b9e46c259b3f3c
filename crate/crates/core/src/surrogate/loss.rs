//! Regression losses with gradients w.r.t. the prediction.

use nalgebra::DMatrix;

/// Mean squared error over all entries and its gradient.
pub fn mse(y: &DMatrix<f64>, yhat: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let n = y.len().max(1) as f64;
    let r = yhat - y;
    let loss = r.norm_squared() / n;
    (loss, r * (2.0 / n))
}

/// Quantile (pinball) loss for target quantile `tau`, averaged over all
/// entries: `tau * r` for `r = y - yhat > 0`, else `(1 - tau) * (-r)`.
pub fn pinball(y: &DMatrix<f64>, yhat: &DMatrix<f64>, tau: f64) -> (f64, DMatrix<f64>) {
    let n = y.len().max(1) as f64;
    let mut loss = 0.0;
    let grad = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
        let r = y[(i, j)] - yhat[(i, j)];
        if r > 0.0 {
            loss += tau * r;
            -tau / n
        } else if r < 0.0 {
            loss -= (1.0 - tau) * r;
            (1.0 - tau) / n
        } else {
            0.0
        }
    });
    (loss / n, grad)
}

/// Pinball loss of a lower head with miscoverage `alpha` (target quantile `alpha / 2`).
pub fn pinball_loss(y: &DMatrix<f64>, yhat: &DMatrix<f64>, alpha: f64) -> f64 {
    pinball(y, yhat, alpha / 2.0).0
}
