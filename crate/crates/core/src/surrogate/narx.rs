//! NARX windows, normalization and dataset splits.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Inputs, Trajectory};

/// Number of measured output channels.
pub const N_Y: usize = 6;

/// Output channel indices.
pub const D50: usize = 4;
pub const D90: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarxSpec {
    pub lag: usize,
    /// Appends the inlet crystal fraction as a fourth input channel.
    pub with_disturbance: bool,
}

impl Default for NarxSpec {
    fn default() -> Self {
        Self {
            lag: 4,
            with_disturbance: false,
        }
    }
}

impl NarxSpec {
    pub fn n_u(&self) -> usize {
        if self.with_disturbance {
            4
        } else {
            3
        }
    }

    pub fn window_len(&self) -> usize {
        self.lag + 1
    }

    pub fn feature_len(&self) -> usize {
        self.window_len() * (N_Y + self.n_u())
    }

    /// Offset of output lag `i` channel `c` in a feature vector.
    pub fn y_index(&self, lag: usize, channel: usize) -> usize {
        lag * N_Y + channel
    }

    /// Offset of input lag `i` channel `c` in a feature vector.
    pub fn u_index(&self, lag: usize, channel: usize) -> usize {
        self.window_len() * N_Y + lag * self.n_u() + channel
    }

    /// Input channels in model order.
    pub fn input_vector(&self, u: &Inputs) -> Vec<f64> {
        let mut v = vec![u.q_pm, u.q_air, u.q_tm];
        if self.with_disturbance {
            v.push(u.w_cryst);
        }
        v
    }

    /// Number of windows a trajectory of `len` samples yields.
    pub fn windows_in(&self, len: usize) -> usize {
        len.saturating_sub(self.lag + 1)
    }

    /// Feature vector for sample `k` of a trajectory, in physical units:
    /// `(y_k, ..., y_{k-l}, u_k, ..., u_{k-l})`.
    pub fn features(&self, traj: &Trajectory, k: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.feature_len());
        for i in 0..=self.lag {
            x.extend_from_slice(&traj.rows[k - i].y);
        }
        for i in 0..=self.lag {
            x.extend(self.input_vector(&traj.rows[k - i].inputs));
        }
        x
    }
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Statistics of the columns of `rows`. A constant channel gets unit std.
    pub fn fit<'a, I>(n: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut count = 0usize;
        let mut mean = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        for row in rows {
            count += 1;
            for c in 0..n {
                let d = row[c] - mean[c];
                mean[c] += d / count as f64;
                m2[c] += d * (row[c] - mean[c]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = if count > 1 { (s / (count - 1) as f64).sqrt() } else { 0.0 };
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i]) / self.std[i])
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| v * self.std[i] + self.mean[i])
            .collect()
    }
}

/// Normalization of a whole NARX feature vector built from channel statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub y: Standardizer,
    pub u: Standardizer,
}

impl Scaling {
    pub fn feature_standardizer(&self, spec: &NarxSpec) -> Standardizer {
        let mut mean = Vec::with_capacity(spec.feature_len());
        let mut std = Vec::with_capacity(spec.feature_len());
        for _ in 0..spec.window_len() {
            mean.extend_from_slice(&self.y.mean);
            std.extend_from_slice(&self.y.std);
        }
        for _ in 0..spec.window_len() {
            mean.extend_from_slice(&self.u.mean);
            std.extend_from_slice(&self.u.std);
        }
        Standardizer { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    /// Leading share of each trajectory used for training and validation.
    pub pool: f64,
    /// Share of the pool held out for validation.
    pub validation: f64,
    /// Share of each trajectory after the pool used for calibration; the rest is test.
    pub calibration: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            pool: 0.6,
            validation: 0.15,
            calibration: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pool", self.pool),
            ("validation", self.validation),
            ("calibration", self.calibration),
        ] {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.pool + self.calibration > 1.0 + 1e-12 {
            return Err(Error::invalid("calibration", "pool + calibration exceeds 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

/// Row origin: trajectory index and sample index `k` of the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowOrigin {
    pub trajectory: usize,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct NarxDataset {
    pub spec: NarxSpec,
    /// Features in physical units, one row per window.
    pub x: DMatrix<f64>,
    /// Labels `y_{k+1}` in physical units.
    pub y: DMatrix<f64>,
    pub origin: Vec<RowOrigin>,
    pub scaling: Scaling,
    pub splits: Splits,
}

impl NarxDataset {
    /// Builds windows from every trajectory and splits each trajectory into
    /// chronological blocks: a shuffled train/validation pool, then
    /// calibration, then test. Statistics come from the training rows only.
    pub fn build(trajs: &[Trajectory], spec: NarxSpec, fractions: SplitFractions, seed: u64) -> Result<Self> {
        fractions.validate()?;
        if trajs.is_empty() {
            return Err(Error::Dataset("no trajectories".into()));
        }
        let mut rows_x: Vec<Vec<f64>> = Vec::new();
        let mut rows_y: Vec<[f64; N_Y]> = Vec::new();
        let mut origin = Vec::new();
        let mut pool = Vec::new();
        let mut splits = Splits::default();
        for (ti, traj) in trajs.iter().enumerate() {
            if traj.len() < spec.lag + 2 {
                return Err(Error::Dataset(format!(
                    "trajectory {ti} has {} samples, need at least {}",
                    traj.len(),
                    spec.lag + 2
                )));
            }
            let n = spec.windows_in(traj.len());
            let n_pool = (fractions.pool * n as f64).round() as usize;
            let n_cal = ((fractions.calibration * n as f64).round() as usize).min(n - n_pool);
            for (j, k) in (spec.lag..traj.len() - 1).enumerate() {
                let row = rows_x.len();
                rows_x.push(spec.features(traj, k));
                rows_y.push(traj.rows[k + 1].y);
                origin.push(RowOrigin { trajectory: ti, k });
                if j < n_pool {
                    pool.push(row);
                } else if j < n_pool + n_cal {
                    splits.calibration.push(row);
                } else {
                    splits.test.push(row);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.shuffle(&mut rng);
        let n_val = (fractions.validation * pool.len() as f64).round() as usize;
        splits.validation = pool.split_off(pool.len() - n_val);
        splits.train = pool;

        let scaling = fit_scaling(&spec, &rows_x, &rows_y, &splits.train);
        let n = rows_x.len();
        let x = DMatrix::from_fn(n, spec.feature_len(), |r, c| rows_x[r][c]);
        let y = DMatrix::from_fn(n, N_Y, |r, c| rows_y[r][c]);
        Ok(Self {
            spec,
            x,
            y,
            origin,
            scaling,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// Normalized `(X, Y)` for the given rows.
    pub fn normalized(&self, rows: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let fs = self.scaling.feature_standardizer(&self.spec);
        let x = DMatrix::from_fn(rows.len(), self.x.ncols(), |r, c| {
            (self.x[(rows[r], c)] - fs.mean[c]) / fs.std[c]
        });
        let ys = &self.scaling.y;
        let y = DMatrix::from_fn(rows.len(), N_Y, |r, c| (self.y[(rows[r], c)] - ys.mean[c]) / ys.std[c]);
        (x, y)
    }
}

fn fit_scaling(spec: &NarxSpec, xs: &[Vec<f64>], ys: &[[f64; N_Y]], train: &[usize]) -> Scaling {
    let u0 = spec.u_index(0, 0);
    let n_u = spec.n_u();
    let y = Standardizer::fit(N_Y, train.iter().map(|&r| &ys[r][..]));
    let u = Standardizer::fit(n_u, train.iter().map(|&r| &xs[r][u0..u0 + n_u]));
    Scaling { y, u }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::TrajectoryRow;

    fn ramp(n: usize) -> Trajectory {
        Trajectory {
            rows: (0..n)
                .map(|k| TrajectoryRow {
                    t: 50.0 * k as f64,
                    inputs: Inputs {
                        q_pm: k as f64,
                        q_air: 2.0,
                        q_tm: 3.0,
                        w_cryst: 0.01,
                    },
                    y: [k as f64, 1.0, 2.0, 3.0, 4.0, 5.0],
                })
                .collect(),
        }
    }

    #[test]
    fn six_samples_lag_four_gives_one_window() {
        let spec = NarxSpec::default();
        assert_eq!(spec.feature_len(), 45);
        let ds = NarxDataset::build(&[ramp(6)], spec, SplitFractions::default(), 0).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.y[(0, 0)], 5.0);
        // y lags come newest first
        assert_eq!(ds.x[(0, spec.y_index(0, 0))], 4.0);
        assert_eq!(ds.x[(0, spec.y_index(4, 0))], 0.0);
        assert_eq!(ds.x[(0, spec.u_index(1, 0))], 3.0);
    }

    #[test]
    fn short_trajectory_rejected() {
        let r = NarxDataset::build(&[ramp(5)], NarxSpec::default(), SplitFractions::default(), 0);
        assert!(matches!(r, Err(Error::Dataset(_))));
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let ds = NarxDataset::build(&[ramp(60), ramp(80)], NarxSpec::default(), SplitFractions::default(), 3).unwrap();
        let s = &ds.splits;
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.validation)
            .chain(&s.calibration)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        // test rows are the trailing block of each trajectory
        for &r in &s.test {
            for &c in &s.calibration {
                if ds.origin[r].trajectory == ds.origin[c].trajectory {
                    assert!(ds.origin[r].k > ds.origin[c].k);
                }
            }
        }
    }

    #[test]
    fn constant_channel_gets_unit_std() {
        let ds = NarxDataset::build(&[ramp(40)], NarxSpec::default(), SplitFractions::default(), 0).unwrap();
        assert_eq!(ds.scaling.y.std[1], 1.0);
        assert!(ds.scaling.y.std[0] > 1.0);
    }

    #[test]
    fn standardize_round_trip() {
        let s = Standardizer {
            mean: vec![3.0, -1e-4],
            std: vec![0.5, 2e-5],
        };
        let x = [1.234, 5.6e-4];
        let back = s.destandardize(&s.standardize(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
