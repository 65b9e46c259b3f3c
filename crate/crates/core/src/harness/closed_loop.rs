//! Plant-in-the-loop runs of the controller and their metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{Controller, MpcConfig, NarxModel, StepRecord, STEP_LOG_HEADER};
use crate::sim::plant::check_measurement;
use crate::sim::{Inputs, Measurement, PlantParams, SimConfig, Simulator};
use crate::surrogate::{D50, D90};

/// Inlet crystal fraction over controller steps: `initial` until the first
/// change, then piecewise constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Disturbance {
    pub initial: f64,
    /// `(step, value)` pairs in increasing step order.
    pub changes: Vec<(usize, f64)>,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self {
            initial: 0.01,
            changes: vec![(35, 0.001)],
        }
    }
}

impl Disturbance {
    pub fn constant(w: f64) -> Self {
        Self {
            initial: w,
            changes: Vec::new(),
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        self.changes
            .iter()
            .take_while(|(k, _)| *k <= step)
            .last()
            .map_or(self.initial, |(_, w)| *w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.initial.is_finite()
            && self.initial >= 0.0
            && self.changes.iter().all(|(_, w)| w.is_finite() && *w >= 0.0)
            && self.changes.windows(2).all(|p| p[0].0 < p[1].0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("disturbance", "values must be >= 0 with increasing change steps"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Simulated time at the initial input before the controller starts, s.
    pub warmup: f64,
    /// Input held during warm-up; its `w_cryst` is replaced by the disturbance.
    pub initial_inputs: Inputs,
    /// Controller steps.
    pub steps: usize,
    pub disturbance: Disturbance,
    /// Plant seed, shared by every controller of a study.
    pub seed: u64,
    pub mpc: MpcConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            warmup: 3000.0,
            initial_inputs: Inputs::default(),
            steps: 100,
            disturbance: Disturbance::default(),
            seed: 0,
            mpc: MpcConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup.is_finite() && self.warmup >= 0.0) {
            return Err(Error::invalid("warmup", format!("must be finite and >= 0, got {}", self.warmup)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be >= 1"));
        }
        self.initial_inputs.validate()?;
        self.disturbance.validate()?;
        self.mpc.validate()
    }

    fn initial(&self) -> Inputs {
        Inputs {
            w_cryst: self.disturbance.at(0),
            ..self.initial_inputs
        }
    }
}

/// One controller step: the measurement the controller acted on and the
/// input it applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSample {
    pub measurement: Measurement,
    pub inputs: Inputs,
    pub record: Option<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopRun {
    pub samples: Vec<LoopSample>,
    pub failures: Vec<String>,
}

pub const LOOP_CSV_HEADER: &str = "t,Q_PM,Q_air,Q_TM,w_cryst,T_PM,T_TM,c_PM,d10,d50,d90,status";

impl ClosedLoopRun {
    /// Measurements and inputs per step; deterministic for a fixed scenario.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{LOOP_CSV_HEADER}")?;
        for s in &self.samples {
            let m = &s.measurement;
            let status = s.record.as_ref().map_or("held", |r| r.status.name());
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{},{},{:e},{:e},{:e},{:e},{}",
                m.time, s.inputs.q_pm, s.inputs.q_air, s.inputs.q_tm, s.inputs.w_cryst, m.t_pm, m.t_tm, m.c_pm, m.d10, m.d50, m.d90, status
            )?;
        }
        Ok(())
    }

    /// Per-step controller log including wall-clock solve times.
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{STEP_LOG_HEADER}")?;
        for r in self.samples.iter().filter_map(|s| s.record.as_ref()) {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    }

    pub fn d50(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.measurement.values()[D50]).collect()
    }
}

fn start_plant(params: &PlantParams, sim: &SimConfig, sc: &ScenarioConfig) -> Result<Simulator> {
    let mut plant = Simulator::new(
        params.clone(),
        SimConfig {
            seed: sc.seed,
            ..sim.clone()
        },
    )?;
    plant.run_for(&sc.initial(), sc.warmup)?;
    Ok(plant)
}

/// Warm-up, then `lag` further samples at the initial input to fill the
/// NARX window. Returns the measurement the controller first acts on.
fn fill_history<M: NarxModel + ?Sized>(plant: &mut Simulator, ctl: &mut Controller<'_, M>, u0: &Inputs) -> Result<Measurement> {
    let mut m = plant.measure();
    for _ in 0..ctl.state().spec().lag {
        ctl.observe(m.values(), *u0);
        m = plant.run_sample(u0)?;
    }
    Ok(m)
}

/// Receding-horizon control of a freshly warmed-up plant.
pub fn run_closed_loop<M: NarxModel + ?Sized>(model: &M, params: &PlantParams, sim: &SimConfig, sc: &ScenarioConfig) -> Result<ClosedLoopRun> {
    sc.validate()?;
    let mut ctl = Controller::new(model, sc.mpc)?;
    let mut plant = start_plant(params, sim, sc)?;
    let u0 = sc.initial();
    let mut m = fill_history(&mut plant, &mut ctl, &u0)?;
    let mut last = u0;
    let mut run = ClosedLoopRun {
        samples: Vec::with_capacity(sc.steps),
        failures: Vec::new(),
    };
    for k in 0..sc.steps {
        let w = sc.disturbance.at(k);
        let (inputs, record) = match ctl.step(&m, w) {
            Ok(r) => (Inputs { w_cryst: w, ..r.applied }, Some(r)),
            Err(e) => {
                run.failures.push(format!("step {k}: {e}"));
                let held = Inputs { w_cryst: w, ..last };
                ctl.hold(&m, held);
                (held, None)
            }
        };
        run.samples.push(LoopSample {
            measurement: m,
            inputs,
            record,
        });
        last = inputs;
        m = plant.run_sample(&inputs)?;
        check_measurement(&m)?;
    }
    Ok(run)
}

/// Solves once over the whole scenario from the initial state, assuming the
/// initial disturbance persists, and applies the plan without feedback.
pub fn run_open_loop<M: NarxModel + ?Sized>(model: &M, params: &PlantParams, sim: &SimConfig, sc: &ScenarioConfig) -> Result<ClosedLoopRun> {
    sc.validate()?;
    let mut ctl = Controller::new(model, sc.mpc)?;
    let mut plant = start_plant(params, sim, sc)?;
    let u0 = sc.initial();
    let mut m = fill_history(&mut plant, &mut ctl, &u0)?;
    let mut state = ctl.state().clone();
    state.push_measurement(m.values());
    let plan = crate::mpc::solve_horizon(model, &state, &sc.mpc, &u0, u0.w_cryst, None, sc.steps)?;
    let mut run = ClosedLoopRun {
        samples: Vec::with_capacity(sc.steps),
        failures: Vec::new(),
    };
    for (k, u) in plan.inputs.iter().enumerate() {
        let inputs = Inputs {
            w_cryst: sc.disturbance.at(k),
            ..*u
        };
        run.samples.push(LoopSample {
            measurement: m,
            inputs,
            record: None,
        });
        m = plant.run_sample(&inputs)?;
        check_measurement(&m)?;
    }
    Ok(run)
}

/// Metrics of a closed-loop run, averaged over controller steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMetrics {
    pub steps: usize,
    /// Percent of steps with measured d90 above the bound.
    pub violation_fraction_pct: f64,
    /// Mean over steps of `max(0, (d90 - bound) / bound)`, percent.
    pub avg_relative_violation_pct: f64,
    /// Mean stage cost without move suppression and soft-constraint terms.
    pub avg_cost: f64,
    pub avg_solve_time_s: f64,
    pub max_solve_time_s: f64,
    pub failures: usize,
}

pub fn loop_metrics(run: &ClosedLoopRun, cfg: &MpcConfig) -> LoopMetrics {
    let n = run.samples.len();
    let nf = n.max(1) as f64;
    let (mut viol, mut rel, mut cost) = (0usize, 0.0, 0.0);
    for s in &run.samples {
        let y = s.measurement.values();
        if let Some(b) = cfg.d90_max {
            if y[D90] > b {
                viol += 1;
                rel += (y[D90] - b) / b;
            }
        }
        cost += cfg.economic_cost(y[D50], &s.inputs);
    }
    let times: Vec<f64> = run.samples.iter().filter_map(|s| s.record.as_ref().map(|r| r.solve_time_s)).collect();
    LoopMetrics {
        steps: n,
        violation_fraction_pct: 100.0 * viol as f64 / nf,
        avg_relative_violation_pct: 100.0 * rel / nf,
        avg_cost: cost / nf,
        avg_solve_time_s: times.iter().sum::<f64>() / times.len().max(1) as f64,
        max_solve_time_s: times.iter().copied().fold(0.0, f64::max),
        failures: run.failures.len(),
    }
}

/// Root-mean-square deviation of the measured d50 from `target`.
pub fn rms_tracking_error(run: &ClosedLoopRun, target: f64) -> f64 {
    let d = run.d50();
    (d.iter().map(|v| (v - target).powi(2)).sum::<f64>() / d.len().max(1) as f64).sqrt()
}
