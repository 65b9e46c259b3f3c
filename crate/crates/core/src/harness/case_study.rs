//! The closed-loop case studies: model comparison under a disturbance step,
//! a dataset-size sweep and open- versus closed-loop d50 tracking.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::closed_loop::{loop_metrics, rms_tracking_error, run_closed_loop, run_open_loop, ClosedLoopRun, Disturbance, LoopMetrics, ScenarioConfig};
use super::datagen::{derive_seed, generate_data, DataGenConfig};
use super::pipeline::train_models;
use crate::error::{Error, Result};
use crate::mpc::{MpcConfig, UncertaintyMode};
use crate::par::{self, Execution};
use crate::sim::{Inputs, PlantParams, SimConfig};
use crate::surrogate::{ModelKind, Surrogate, SurrogateConfig};

/// Controller mode that exploits a model family's uncertainty estimate.
pub fn mode_for(kind: ModelKind) -> UncertaintyMode {
    match kind {
        ModelKind::Nn => UncertaintyMode::Nominal,
        ModelKind::Cqr => UncertaintyMode::Cqr,
        ModelKind::Bll => UncertaintyMode::Bll,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub model: ModelKind,
    pub mode: UncertaintyMode,
    #[serde(flatten)]
    pub metrics: LoopMetrics,
    pub failure_messages: Vec<String>,
    pub trajectory: ClosedLoopRun,
}

impl CaseStudyReport {
    /// Writes `trajectory.csv`, `controller_log.csv` and `report.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.trajectory.write_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("trajectory.csv"))?))?;
        self.trajectory.write_log(std::io::BufWriter::new(std::fs::File::create(dir.join("controller_log.csv"))?))?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn scenario_for(sc: &ScenarioConfig, kind: ModelKind) -> ScenarioConfig {
    ScenarioConfig {
        mpc: MpcConfig {
            mode: mode_for(kind),
            ..sc.mpc
        },
        ..sc.clone()
    }
}

pub fn run_case(model: &Surrogate, params: &PlantParams, sim: &SimConfig, sc: &ScenarioConfig) -> Result<CaseStudyReport> {
    let kind = model.kind();
    let sc = scenario_for(sc, kind);
    let run = run_closed_loop(model, params, sim, &sc)?;
    Ok(CaseStudyReport {
        model: kind,
        mode: sc.mpc.mode,
        metrics: loop_metrics(&run, &sc.mpc),
        failure_messages: run.failures.clone(),
        trajectory: run,
    })
}

/// Runs the identical scenario once per model, each with the controller mode
/// matching its family.
pub fn case_study_1(
    models: &[Surrogate],
    params: &PlantParams,
    sim: &SimConfig,
    sc: &ScenarioConfig,
    execution: Execution,
) -> Result<Vec<CaseStudyReport>> {
    sc.validate()?;
    par::map(execution, models, |m| run_case(m, params, sim, sc)).into_iter().collect()
}

/// Box-plot statistics of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values within 1.5 interquartile ranges of the box.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(v.len() - 1);
    v[i] + (h - i as f64) * (v[j] - v[i])
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75));
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        Some(Self {
            n: v.len(),
            min: v[0],
            q1,
            median: quantile_sorted(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            whisker_lo: v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(v[0]),
            whisker_hi: v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(v[v.len() - 1]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub data: DataGenConfig,
    pub surrogate: SurrogateConfig,
    /// Reuse the dataset of repetition 0 for every repetition.
    pub duplicate_dataset: bool,
    pub execution: Execution,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![2000, 4000, 6000, 8000],
            repetitions: 3,
            data: DataGenConfig::default(),
            surrogate: super::pipeline::case_study_surrogate_config(),
            duplicate_dataset: false,
            execution: Execution::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.repetitions == 0 {
            return Err(Error::invalid("sizes", "need at least one size and one repetition"));
        }
        self.data.validate()?;
        self.surrogate.validate()
    }
}

/// One `(size, repetition, model)` outcome; `None` metrics mark a failed job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub size: usize,
    pub repetition: usize,
    pub model: ModelKind,
    pub metrics: Option<LoopMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub size: usize,
    pub model: ModelKind,
    pub violation_pct: Option<Quartiles>,
    pub cost: Option<Quartiles>,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub summary: Vec<SweepSummary>,
}

const TAG_SWEEP: u64 = 0x7377_6570;

fn sweep_job(
    params: &PlantParams,
    sim: &SimConfig,
    sc: &ScenarioConfig,
    cfg: &SweepConfig,
    size: usize,
    rep: usize,
) -> Vec<SweepCell> {
    let data_rep = if cfg.duplicate_dataset { 0 } else { rep };
    let seed = derive_seed(cfg.data.seed, TAG_SWEEP, ((size as u64) << 16) | data_rep as u64);
    let cell = |model, result: Result<LoopMetrics>| SweepCell {
        size,
        repetition: rep,
        model,
        error: result.as_ref().err().map(ToString::to_string),
        metrics: result.ok(),
    };
    let trained = (|| -> Result<Vec<Surrogate>> {
        let data = generate_data(
            params,
            sim,
            &DataGenConfig {
                n_samples: size,
                seed,
                execution: Execution::Sequential,
                ..cfg.data
            },
        )?;
        let scfg = SurrogateConfig {
            seed,
            execution: Execution::Sequential,
            ..cfg.surrogate
        };
        Ok(train_models(&data.trajectories, &scfg, &ModelKind::ALL)?.1)
    })();
    match trained {
        Ok(models) => models
            .iter()
            .map(|m| cell(m.kind(), run_case(m, params, sim, sc).map(|r| r.metrics)))
            .collect(),
        Err(e) => ModelKind::ALL
            .iter()
            .map(|&k| cell(k, Err(Error::Dataset(e.to_string()))))
            .collect(),
    }
}

/// Trains all three families per `(size, repetition)` and runs the case-1
/// scenario with each; summaries are quartiles over repetitions.
pub fn case_study_2(params: &PlantParams, sim: &SimConfig, sc: &ScenarioConfig, cfg: &SweepConfig) -> Result<SweepReport> {
    sc.validate()?;
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    let cells: Vec<SweepCell> = par::map(cfg.execution, &jobs, |&(s, r)| sweep_job(params, sim, sc, cfg, s, r))
        .into_iter()
        .flatten()
        .collect();
    let mut summary = Vec::new();
    for &size in &cfg.sizes {
        for kind in ModelKind::ALL {
            let group: Vec<&SweepCell> = cells.iter().filter(|c| c.size == size && c.model == kind).collect();
            let ok: Vec<&LoopMetrics> = group.iter().filter_map(|c| c.metrics.as_ref()).collect();
            summary.push(SweepSummary {
                size,
                model: kind,
                violation_pct: Quartiles::of(&ok.iter().map(|m| m.violation_fraction_pct).collect::<Vec<_>>()),
                cost: Quartiles::of(&ok.iter().map(|m| m.avg_cost).collect::<Vec<_>>()),
                missing: group.len() - ok.len(),
            });
        }
    }
    Ok(SweepReport { cells, summary })
}

/// Tracking scenario: d50 held near its target under a measured w_cryst
/// disturbance that keeps the target reachable.
pub fn tracking_scenario() -> ScenarioConfig {
    ScenarioConfig {
        steps: 60,
        initial_inputs: Inputs {
            q_pm: 1.1e-7,
            q_air: 1.1e-7,
            q_tm: 3.5e-6,
            w_cryst: 0.003,
        },
        disturbance: Disturbance {
            initial: 0.003,
            changes: vec![(20, 0.0015), (40, 0.0025)],
        },
        mpc: MpcConfig {
            gamma1: 0.0,
            gamma2: 0.0,
            gamma3: 0.0,
            gamma4: 1.0,
            gamma_track: 1.0e10,
            d90_max: None,
            ..MpcConfig::default()
        },
        ..ScenarioConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopComparison {
    pub target: f64,
    pub open_loop_rms: f64,
    pub closed_loop_rms: f64,
    pub open_loop: ClosedLoopRun,
    pub closed_loop: ClosedLoopRun,
}

/// Runs the one-shot plan and the receding-horizon controller on the same
/// disturbance. `open_seed` overrides the plant seed of the open-loop run.
pub fn open_vs_closed_loop(
    model: &Surrogate,
    params: &PlantParams,
    sim: &SimConfig,
    sc: &ScenarioConfig,
    open_seed: Option<u64>,
) -> Result<LoopComparison> {
    let sc = scenario_for(sc, model.kind());
    let open_sc = ScenarioConfig {
        seed: open_seed.unwrap_or(sc.seed),
        ..sc.clone()
    };
    let open = run_open_loop(model, params, sim, &open_sc)?;
    let closed = run_closed_loop(model, params, sim, &sc)?;
    let target = sc.mpc.d50_target;
    Ok(LoopComparison {
        target,
        open_loop_rms: rms_tracking_error(&open, target),
        closed_loop_rms: rms_tracking_error(&closed, target),
        open_loop: open,
        closed_loop: closed,
    })
}
