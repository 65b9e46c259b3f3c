//! Dense feed-forward network with GELU hidden layers and a linear output.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    cdf + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Linear => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu_derivative(x),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Pre- and post-activation values of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: DMatrix<f64>,
    pub pre: Vec<DMatrix<f64>>,
    pub post: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.post.last().unwrap_or(&self.input)
    }
}

impl Mlp {
    /// `sizes = [n_in, h_1, ..., n_out]`; hidden layers use GELU and the last
    /// layer is linear. With `linear_last = false` every layer uses GELU,
    /// which is how feature networks are built.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], linear_last: bool, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("layer_sizes", format!("need >= 2 positive sizes, got {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                let activation = if i + 1 == n && linear_last {
                    Activation::Linear
                } else {
                    Activation::Gelu
                };
                let sd = match activation {
                    Activation::Gelu => (2.0 / fan_in as f64).sqrt(),
                    Activation::Linear => (1.0 / fan_in as f64).sqrt(),
                };
                let dist = Normal::new(0.0, sd).expect("finite std");
                Layer {
                    w: DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(rng)),
                    b: DVector::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn n_in(&self) -> usize {
        self.layers.first().map_or(0, Layer::n_in)
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, Layer::n_out)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.n_in()];
        s.extend(self.layers.iter().map(Layer::n_out));
        s
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters flattened layer by layer: weights (column-major), then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(l.w.as_slice());
            p.extend_from_slice(l.b.as_slice());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter vector length");
        let mut o = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&p[o..o + nw]);
            o += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&p[o..o + nb]);
            o += nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Batch forward pass; rows of `x` are samples.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = x.clone();
        for l in &self.layers {
            let mut z = &a * l.w.transpose();
            for mut row in z.row_iter_mut() {
                row += l.b.transpose();
            }
            z.apply(|v| *v = l.activation.apply(*v));
            a = z;
        }
        a
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> ForwardCache {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let a = post.last().unwrap_or(x);
            let mut z = a * l.w.transpose();
            for mut row in z.row_iter_mut() {
                row += l.b.transpose();
            }
            let h = z.map(|v| l.activation.apply(v));
            pre.push(z);
            post.push(h);
        }
        ForwardCache {
            input: x.clone(),
            pre,
            post,
        }
    }

    /// Reverse pass for `d_out = dL/d(output)`. Returns the flattened
    /// parameter gradient and `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.layers.len();
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(n);
        let mut delta = d_out.clone();
        for i in (0..n).rev() {
            let l = &self.layers[i];
            let z = &cache.pre[i];
            delta.zip_apply(z, |d, zv| *d *= l.activation.derivative(zv));
            let a_prev = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let gw = delta.transpose() * a_prev;
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            grads.push((gw, gb));
            delta = &delta * &l.w;
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend_from_slice(gw.as_slice());
            flat.extend_from_slice(gb.as_slice());
        }
        (flat, delta)
    }

    /// Single-sample forward pass.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in &self.layers {
            a = (0..l.n_out())
                .map(|r| {
                    let mut s = l.b[r];
                    for (c, av) in a.iter().enumerate() {
                        s += l.w[(r, c)] * av;
                    }
                    l.activation.apply(s)
                })
                .collect();
        }
        a
    }

    /// Vector-Jacobian product `v^T d(output)/d(input)` for one sample.
    pub fn vjp_input(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for l in &self.layers {
            let z: Vec<f64> = (0..l.n_out())
                .map(|r| {
                    let mut s = l.b[r];
                    for (c, av) in a.iter().enumerate() {
                        s += l.w[(r, c)] * av;
                    }
                    s
                })
                .collect();
            a = z.iter().map(|&s| l.activation.apply(s)).collect();
            pre.push(z);
        }
        let mut delta = v.to_vec();
        for (l, z) in self.layers.iter().zip(&pre).rev() {
            for (d, &zv) in delta.iter_mut().zip(z) {
                *d *= l.activation.derivative(zv);
            }
            let mut next = vec![0.0; l.n_in()];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (c, nv) in next.iter_mut().enumerate() {
                        *nv += d * l.w[(r, c)];
                    }
                }
            }
            delta = next;
        }
        delta
    }
}
