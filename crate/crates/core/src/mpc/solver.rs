//! Projected limited-memory BFGS for box-constrained smooth problems.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::config::SolverConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// No descent step could be found before convergence was declared.
    Stalled,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Objective after each accepted iteration, starting with the initial point.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Largest coordinate move of a steepest-descent trial step.
const FIRST_STEP: f64 = 0.1;

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Coordinates held at a bound by the gradient.
fn active_set(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|i| (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>)>, active: &[bool]) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(active).map(|(x, &a)| if a { 0.0 } else { *x }).collect() };
    let mut q = mask(g);
    let pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = mem
        .iter()
        .filter_map(|(s, y)| {
            let (s, y) = (mask(s), mask(y));
            let sy = dot(&s, &y);
            (sy > 0.0).then(|| (s, y, 1.0 / sy))
        })
        .collect();
    let Some((s_last, y_last, _)) = pairs.last() else {
        let n = inf_norm(&q);
        return q.iter().map(|v| -FIRST_STEP * v / n).collect();
    };
    let h0 = dot(s_last, y_last) / dot(y_last, y_last);
    let mut alpha = vec![0.0; pairs.len()];
    for (j, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[j] = rho * dot(s, &q);
        for i in 0..q.len() {
            q[i] -= alpha[j] * y[i];
        }
    }
    for v in q.iter_mut() {
        *v *= h0;
    }
    for (j, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, &q);
        for i in 0..q.len() {
            q[i] += (alpha[j] - beta) * s[i];
        }
    }
    q.iter().zip(active).map(|(v, &a)| if a { 0.0 } else { -v }).collect()
}

/// Minimizes `f` over the box `[lower, upper]` from `x0`. `f` returns the
/// value and gradient. Every accepted step strictly decreases the objective.
pub fn minimize_box<F>(x0: &[f64], lower: &[f64], upper: &[f64], cfg: &SolverConfig, mut f: F) -> Result<SolverOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::invalid("bounds", "bound vectors must match the variable count"));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the initial point".into()));
    }
    let scale = fx.abs().max(inf_norm(&g)).max(f64::MIN_POSITIVE);
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(cfg.memory);
    let mut history = vec![fx];
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let active = active_set(&x, &g, lower, upper);
        let free_grad: Vec<f64> = g.iter().zip(&active).map(|(v, &a)| if a { 0.0 } else { *v }).collect();
        if inf_norm(&free_grad) <= cfg.tolerance * scale {
            status = SolveStatus::Converged;
            break;
        }
        let mut accepted = None;
        for attempt in 0..2 {
            let empty = VecDeque::new();
            let memory = if attempt == 0 { &mem } else { &empty };
            let mut d = two_loop(&g, memory, &active);
            if dot(&d, &g) >= 0.0 {
                d = two_loop(&g, &empty, &active);
            }
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                project(&mut xt, lower, upper);
                let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &step);
                if decrease < 0.0 {
                    let (ft, gt) = f(&xt)?;
                    if ft.is_finite() && ft <= fx + ARMIJO * decrease && ft < fx && gt.iter().all(|v| v.is_finite()) {
                        accepted = Some((xt, ft, gt, step));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() || mem.is_empty() {
                break;
            }
            mem.clear();
        }
        let Some((xt, ft, gt, s)) = accepted else {
            status = SolveStatus::Stalled;
            break;
        };
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == cfg.memory {
                mem.pop_front();
            }
            mem.push_back((s, y));
        }
        x = xt;
        fx = ft;
        g = gt;
        iterations += 1;
        history.push(fx);
    }
    if status == SolveStatus::MaxIterations && iterations < cfg.max_iterations {
        status = SolveStatus::Converged;
    }
    Ok(SolverOutcome {
        x,
        value: fx,
        iterations,
        status,
        history,
    })
}
