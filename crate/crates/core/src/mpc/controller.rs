use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::MpcConfig;
use super::model::NarxModel;
use super::solver::{minimize_box, SolveStatus};
use super::state::NarxState;
use super::tree::{Problem, ScenarioTree, N_DECISION};
use crate::error::Result;
use crate::sim::{Inputs, Measurement};
use crate::surrogate::{D90, N_Y};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    /// Optimal box coordinates, `N x 3` row-major.
    pub decision: Vec<f64>,
    pub inputs: Vec<Inputs>,
    pub first: Inputs,
    pub tree: ScenarioTree,
    pub objective: f64,
    pub solve_time_s: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub history: Vec<f64>,
}

/// Solves one receding-horizon problem. `warm` are box coordinates of an
/// initial guess; without one, `prev` is held over the horizon.
pub fn solve<M: NarxModel + ?Sized>(
    model: &M,
    state: &NarxState,
    cfg: &MpcConfig,
    prev: &Inputs,
    w_cryst: f64,
    warm: Option<&[f64]>,
) -> Result<MpcSolution> {
    solve_horizon(model, state, cfg, prev, w_cryst, warm, cfg.horizon)
}

pub fn solve_horizon<M: NarxModel + ?Sized>(
    model: &M,
    state: &NarxState,
    cfg: &MpcConfig,
    prev: &Inputs,
    w_cryst: f64,
    warm: Option<&[f64]>,
    horizon: usize,
) -> Result<MpcSolution> {
    let start = Instant::now();
    let problem = Problem::with_horizon(model, state, cfg, prev, w_cryst, horizon)?;
    let x0 = match warm {
        Some(w) if w.len() == problem.n_vars() => w.to_vec(),
        _ => problem.hold(),
    };
    let n = problem.n_vars();
    let out = minimize_box(&x0, &vec![0.0; n], &vec![1.0; n], &cfg.solver, |z| problem.objective_and_gradient(z))?;
    let tree = problem.rollout(&out.x)?;
    let inputs = problem.inputs(&out.x);
    Ok(MpcSolution {
        first: inputs[0],
        inputs,
        tree,
        objective: out.value,
        solve_time_s: start.elapsed().as_secs_f64(),
        iterations: out.iterations,
        status: out.status,
        history: out.history,
        decision: out.x,
    })
}

/// Previous solution advanced one step, last input repeated.
pub fn shift(decision: &[f64]) -> Vec<f64> {
    if decision.len() <= N_DECISION {
        return decision.to_vec();
    }
    let mut z = decision[N_DECISION..].to_vec();
    z.extend_from_slice(&decision[decision.len() - N_DECISION..]);
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub applied: Inputs,
    /// Predicted d90 one step ahead, per branch.
    pub d90_branches: Vec<f64>,
    pub slack: f64,
    pub objective: f64,
    pub solve_time_s: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

pub const STEP_LOG_HEADER: &str = "t,Q_PM,Q_air,Q_TM,d90_upper,d90_mid,d90_lower,slack,objective,solve_time_s,status";

impl StepRecord {
    /// Log line matching [`STEP_LOG_HEADER`]; a single-branch tree repeats
    /// its prediction in all three d90 columns.
    pub fn csv_line(&self) -> String {
        let d = &self.d90_branches;
        let pick = |i: usize| d.get(i).or(d.first()).copied().unwrap_or(f64::NAN);
        let (up, mid, lo) = if d.len() == 3 { (pick(0), pick(1), pick(2)) } else { (pick(0), pick(0), pick(0)) };
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.t,
            self.applied.q_pm,
            self.applied.q_air,
            self.applied.q_tm,
            up,
            mid,
            lo,
            self.slack,
            self.objective,
            self.solve_time_s,
            self.status.name()
        )
    }
}

/// Receding-horizon controller around one model.
pub struct Controller<'a, M: NarxModel + ?Sized> {
    model: &'a M,
    cfg: MpcConfig,
    state: NarxState,
    prev: Option<Inputs>,
    warm: Option<Vec<f64>>,
}

impl<'a, M: NarxModel + ?Sized> Controller<'a, M> {
    pub fn new(model: &'a M, cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        model.check_mode(cfg.mode, cfg.alpha)?;
        Ok(Self {
            model,
            cfg,
            state: NarxState::new(model.spec()),
            prev: None,
            warm: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn state(&self) -> &NarxState {
        &self.state
    }

    /// Records a sample taken while the plant ran under `u`.
    pub fn observe(&mut self, y: [f64; N_Y], u: Inputs) {
        self.state.observe(y, u);
        self.prev = Some(u);
    }

    /// Pushes the new measurement, solves, and returns the input to apply
    /// over the next period. `w_cryst` is the measured disturbance.
    pub fn step(&mut self, m: &Measurement, w_cryst: f64) -> Result<StepRecord> {
        let mut state = self.state.clone();
        state.push_measurement(m.values());
        state.require_ready()?;
        let prev = self.prev.unwrap_or_else(|| self.cfg.bounds.center(w_cryst));
        let warm = self.warm.as_deref().map(shift);
        let sol = solve(self.model, &state, &self.cfg, &prev, w_cryst, warm.as_deref())?;
        state.push_input(sol.first);
        self.state = state;
        self.prev = Some(sol.first);
        self.warm = Some(sol.decision.clone());
        Ok(StepRecord {
            t: m.time,
            applied: sol.first,
            d90_branches: sol.tree.branches.iter().map(|b| b.outputs[0][D90]).collect(),
            slack: sol.tree.max_slack(),
            objective: sol.objective,
            solve_time_s: sol.solve_time_s,
            iterations: sol.iterations,
            status: sol.status,
        })
    }

    /// Holds `u` after a failed solve so the NARX window stays consistent.
    pub fn hold(&mut self, m: &Measurement, u: Inputs) {
        self.state.push_measurement(m.values());
        self.state.push_input(u);
        self.prev = Some(u);
        self.warm = None;
    }
}
