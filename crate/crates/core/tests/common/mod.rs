#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfc_core::mpc::{solve, InputBounds, LinearNarx, MpcConfig, NarxState, Problem, SolverConfig, UncertaintyMode};
use sfc_core::sim::Inputs;
use sfc_core::surrogate::bll::neg_evidence_and_grad;
use sfc_core::surrogate::train::loss_and_grad;
use sfc_core::surrogate::{
    BllModel, CqrModel, Metadata, Mlp, Model, NarxSpec, Objective, Scaling, Standardizer, Surrogate, D50, N_Y,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Largest componentwise deviation relative to the largest reference entry.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().chain(analytic).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of a scalar function.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + h;
            let fp = f(&p);
            p[i] = x0 - h;
            let fm = f(&p);
            p[i] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn small_spec() -> NarxSpec {
    NarxSpec {
        lag: 2,
        with_disturbance: true,
    }
}

/// Normalization in the magnitude range of the plant channels.
pub fn plant_like_scaling() -> Scaling {
    Scaling {
        y: Standardizer {
            mean: vec![300.0, 290.0, 0.14, 3.0e-4, 5.0e-4, 6.5e-4],
            std: vec![1.5, 1.2, 1.6e-3, 4.0e-5, 5.0e-5, 6.0e-5],
        },
        u: Standardizer {
            mean: vec![1.1e-7, 1.1e-7, 3.5e-6, 0.005],
            std: vec![3.0e-8, 3.0e-8, 1.5e-6, 0.003],
        },
    }
}

fn wrap(spec: NarxSpec, model: Model) -> Surrogate {
    Surrogate {
        spec,
        scaling: plant_like_scaling(),
        model,
        metadata: Metadata {
            seed: 0,
            dataset_sha256: String::new(),
            n_train: 0,
            n_validation: 0,
            n_calibration: 0,
            reports: Vec::new(),
        },
    }
}

pub fn random_nn(seed: u64) -> Surrogate {
    let spec = small_spec();
    let net = Mlp::new(&[spec.feature_len(), 8, N_Y], true, &mut rng(seed)).unwrap();
    wrap(spec, Model::Nn { net })
}

pub fn random_cqr(seed: u64) -> Surrogate {
    let spec = small_spec();
    let n_in = spec.feature_len();
    let mut r = rng(seed);
    let lo = Mlp::new(&[n_in, 6, N_Y], true, &mut r).unwrap();
    let mid = Mlp::new(&[n_in, 8, N_Y], true, &mut r).unwrap();
    let up = Mlp::new(&[n_in, 6, N_Y], true, &mut r).unwrap();
    let mut cqr = CqrModel::new(lo, mid, up, 0.05).unwrap();
    let x = random_matrix(&mut r, 60, n_in);
    let y = random_matrix(&mut r, 60, N_Y);
    cqr.conformalize(&x, &y).unwrap();
    wrap(spec, Model::Cqr { cqr })
}

pub fn random_bll(seed: u64) -> Surrogate {
    let spec = small_spec();
    let n_in = spec.feature_len();
    let mut r = rng(seed);
    let features = Mlp::new(&[n_in, 8], false, &mut r).unwrap();
    let x = random_matrix(&mut r, 40, n_in);
    let y = random_matrix(&mut r, 40, N_Y);
    let bll = BllModel::assemble(features, &x, &y, vec![(0.05f64).ln(); N_Y], 0.0).unwrap();
    wrap(spec, Model::Bll { bll, m: 2.0 })
}

/// A ready controller state filled with plant-like measurements around the
/// scaling means.
pub fn random_state(spec: NarxSpec, seed: u64) -> NarxState {
    let mut r = rng(seed);
    let sc = plant_like_scaling();
    let mut st = NarxState::new(spec);
    for _ in 0..=spec.lag {
        let y: [f64; N_Y] = std::array::from_fn(|c| sc.y.mean[c] + sc.y.std[c] * r.random_range(-1.5..1.5));
        let u = Inputs {
            q_pm: r.random_range(0.6e-7..1.6e-7),
            q_air: r.random_range(0.6e-7..1.6e-7),
            q_tm: r.random_range(1e-6..6e-6),
            w_cryst: 0.005,
        };
        st.observe(y, u);
    }
    let y: [f64; N_Y] = std::array::from_fn(|c| sc.y.mean[c] + sc.y.std[c] * r.random_range(-1.5..1.5));
    st.push_measurement(y);
    st
}

pub fn toy_spec() -> NarxSpec {
    NarxSpec {
        lag: 1,
        with_disturbance: false,
    }
}

pub fn bare_config(horizon: usize) -> MpcConfig {
    MpcConfig {
        horizon,
        gamma1: 0.0,
        gamma2: 0.0,
        gamma3: 0.0,
        gamma4: 0.0,
        gamma_track: 0.0,
        d90_max: None,
        rho_soft: 0.0,
        ..MpcConfig::default()
    }
}

pub fn inputs(q_pm: f64, q_air: f64, q_tm: f64) -> Inputs {
    Inputs {
        q_pm,
        q_air,
        q_tm,
        w_cryst: 0.0,
    }
}

pub fn warm_state(spec: NarxSpec, ys: &[[f64; N_Y]], us: &[Inputs]) -> NarxState {
    let mut st = NarxState::new(spec);
    let (last, older) = ys.split_last().unwrap();
    for (y, u) in older.iter().zip(us) {
        st.observe(*y, *u);
    }
    st.push_measurement(*last);
    st
}

/// Linear crystal-size dynamics: the d50 channel is a stable second-order
/// system driven by all three inputs, the rest decays.
pub struct Toy {
    pub model: LinearNarx,
    a1: f64,
    a2: f64,
    bu0: [f64; 3],
    bu1: [f64; 3],
    b: f64,
}

pub fn toy() -> Toy {
    let spec = toy_spec();
    let n = spec.feature_len();
    let (a1, a2) = (0.5, 0.2);
    let bu0 = [800.0, -300.0, 10.0];
    let bu1 = [200.0, 50.0, 4.0];
    let b = 2.0e-5;
    let mut a = vec![0.0; N_Y * n];
    for c in 0..N_Y {
        a[c * n + spec.y_index(0, c)] = 0.3;
    }
    a[D50 * n + spec.y_index(0, D50)] = a1;
    a[D50 * n + spec.y_index(1, D50)] = a2;
    for j in 0..3 {
        a[D50 * n + spec.u_index(0, j)] = bu0[j];
        a[D50 * n + spec.u_index(1, j)] = bu1[j];
    }
    let mut bias = vec![0.0; N_Y];
    bias[D50] = b;
    Toy {
        model: LinearNarx::new(spec, a, bias).unwrap(),
        a1,
        a2,
        bu0,
        bu1,
        b,
    }
}

impl Toy {
    /// Hand-rolled d50 predictions `d50_1 ..= d50_N` for a physical input
    /// sequence.
    fn d50_path(&self, d0: f64, dm1: f64, u_prev: &Inputs, us: &[Inputs]) -> Vec<f64> {
        let v = |u: &Inputs| [u.q_pm, u.q_air, u.q_tm];
        let mut out = Vec::with_capacity(us.len());
        let (mut y0, mut y1) = (d0, dm1);
        let mut up = v(u_prev);
        for u in us {
            let uk = v(u);
            let next = self.a1 * y0 + self.a2 * y1 + self.b + (0..3).map(|j| self.bu0[j] * uk[j] + self.bu1[j] * up[j]).sum::<f64>();
            out.push(next);
            y1 = y0;
            y0 = next;
            up = uk;
        }
        out
    }
}

/// Solves the toy tracking problem and compares it with the closed-form
/// optimum. Returns the largest decision deviation and the relative
/// objective mismatch.
pub fn qp_oracle_mismatch() -> (f64, f64) {
    let t = toy();
    let horizon = 6;
    let bounds = InputBounds::default();
    let span = bounds.span();
    let u_prev = bounds.center(0.0);
    let (d0, dm1) = (3.1e-4, 3.0e-4);
    let mut y0 = [1.0; N_Y];
    let mut ym1 = [1.0; N_Y];
    y0[D50] = d0;
    ym1[D50] = dm1;
    let state = warm_state(toy_spec(), &[ym1, y0], &[u_prev, u_prev]);

    let target = 3.3e-4;
    let cfg = MpcConfig {
        gamma1: 1.0e3,
        gamma2: 1.0e5,
        gamma3: 1.0e3,
        gamma4: 1.0,
        gamma_track: 1.0e9,
        d50_target: target,
        solver: SolverConfig {
            max_iterations: 2000,
            tolerance: 1e-13,
            memory: 10,
        },
        ..bare_config(horizon)
    };

    // d50 = s0 + S z, exactly affine in the box coordinates
    let nz = 3 * horizon;
    let to_inputs = |z: &[f64]| -> Vec<Inputs> {
        z.chunks(3)
            .map(|c| inputs(bounds.lower[0] + c[0] * span[0], bounds.lower[1] + c[1] * span[1], bounds.lower[2] + c[2] * span[2]))
            .collect()
    };
    let s0 = DVector::from_vec(t.d50_path(d0, dm1, &u_prev, &to_inputs(&vec![0.0; nz])));
    let mut s = DMatrix::zeros(horizon, nz);
    for i in 0..nz {
        let mut z = vec![0.0; nz];
        z[i] = 1.0;
        let col = DVector::from_vec(t.d50_path(d0, dm1, &u_prev, &to_inputs(&z))) - &s0;
        s.set_column(i, &col);
    }
    // moves: M z - p
    let mut m = DMatrix::zeros(nz, nz);
    let mut p = DVector::zeros(nz);
    let z_prev = bounds.to_unit(&u_prev);
    for k in 0..horizon {
        for c in 0..3 {
            m[(3 * k + c, 3 * k + c)] = 1.0;
            if k > 0 {
                m[(3 * k + c, 3 * (k - 1) + c)] = -1.0;
            } else {
                p[c] = z_prev[c];
            }
        }
    }
    let mut lin = DVector::zeros(nz);
    for k in 0..horizon {
        lin[3 * k] = -cfg.gamma2 * span[0];
        lin[3 * k + 2] = cfg.gamma3 * span[2];
    }
    let ones = DVector::from_element(horizon, 1.0);
    let tgt = DVector::from_element(horizon, target);
    let h = 2.0 * cfg.gamma_track * s.transpose() * &s + 2.0 * cfg.gamma4 * m.transpose() * &m;
    let g = -cfg.gamma1 * s.transpose() * &ones + 2.0 * cfg.gamma_track * s.transpose() * (&s0 - &tgt) + &lin
        - 2.0 * cfg.gamma4 * m.transpose() * &p;
    let z_star = h.clone().cholesky().expect("positive definite").solve(&(-g));
    assert!(z_star.iter().all(|v| *v > 0.01 && *v < 0.99), "oracle optimum touches a bound: {z_star}");

    let j_oracle = {
        let d = &s0 + &s * &z_star;
        let moves = &m * &z_star - &p;
        let us = to_inputs(z_star.as_slice());
        -cfg.gamma1 * d0 - cfg.gamma1 * d.sum()
            + cfg.gamma_track * (&d - &tgt).norm_squared()
            + us.iter().map(|u| -cfg.gamma2 * u.q_pm + cfg.gamma3 * u.q_tm).sum::<f64>()
            + cfg.gamma4 * moves.norm_squared()
    };

    let sol = solve(&t.model, &state, &cfg, &u_prev, 0.0, None).unwrap();
    let err = sol.decision.iter().zip(z_star.iter()).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
    (err, (sol.objective - j_oracle).abs() / j_oracle.abs())
}

pub fn network_gradient_error(objective: Objective, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut net = Mlp::new(&[5, 7, 3], true, &mut r).unwrap();
    let x = random_matrix(&mut r, 12, 5);
    let y = random_matrix(&mut r, 12, 3);
    let theta = net.params();
    let (_, g) = loss_and_grad(&net, objective, &x, &y);
    let fd = central_difference(&theta, 1e-6, |p| {
        net.set_params(p);
        objective.eval(&y, &net.forward(&x)).0
    });
    relative_error(&g, &fd)
}

/// Negative log evidence of a feature network, gradient in weights and noise precisions.
pub fn evidence_gradient_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut net = Mlp::new(&[4, 6], false, &mut r).unwrap();
    let x = random_matrix(&mut r, 20, 4);
    let y = random_matrix(&mut r, 20, 2);
    let np = net.n_params();
    let mut theta = net.params();
    theta.extend_from_slice(&[-1.0, -0.5, 0.1]);
    let (_, g) = neg_evidence_and_grad(&net, &x, &y, &theta[np..np + 2], theta[np + 2]).unwrap();
    let fd = central_difference(&theta, 1e-6, |t| {
        net.set_params(&t[..np]);
        neg_evidence_and_grad(&net, &x, &y, &t[np..np + 2], t[np + 2]).unwrap().0
    });
    relative_error(&g, &fd)
}

/// Relative gradient error and whether the d90 bound was active somewhere.
pub fn rollout_gradient_error(model: &Surrogate, mode: UncertaintyMode, seed: u64, tracking: bool) -> (f64, bool) {
    let cfg = MpcConfig {
        horizon: 5,
        mode,
        gamma_track: if tracking { 1e9 } else { 0.0 },
        d90_max: Some(6.4e-4),
        rho_soft: 1e9,
        ..MpcConfig::default()
    };
    let state = random_state(model.spec, seed);
    let prev = Inputs::default();
    let p = Problem::new(model, &state, &cfg, &prev, 0.004).unwrap();
    let mut r = rng(seed + 100);
    let z: Vec<f64> = (0..p.n_vars()).map(|_| r.random_range(0.05..0.95)).collect();
    let (_, g) = p.objective_and_gradient(&z).unwrap();
    let fd = central_difference(&z, 1e-6, |t| p.objective(t).unwrap());
    (relative_error(&g, &fd), p.rollout(&z).unwrap().max_slack() > 0.0)
}
