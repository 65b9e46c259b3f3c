//! Random excitation of the plant for system identification data.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, Error, Result};
use crate::par::{self, Execution};
use crate::sim::plant::check_measurement;
use crate::sim::{Inputs, PlantParams, SimConfig, Simulator, Trajectory, TrajectoryRow};

/// Closed interval `[lo, hi]` per input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputRanges {
    pub q_pm: [f64; 2],
    pub q_air: [f64; 2],
    pub q_tm: [f64; 2],
    pub w_cryst: [f64; 2],
}

impl Default for InputRanges {
    fn default() -> Self {
        Self {
            q_pm: [0.6e-7, 1.6e-7],
            q_air: [0.6e-7, 1.6e-7],
            q_tm: [1.0e-6, 6.0e-6],
            w_cryst: [0.001, 0.01],
        }
    }
}

impl InputRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("q_pm", self.q_pm),
            ("q_air", self.q_air),
            ("q_tm", self.q_tm),
            ("w_cryst", self.w_cryst),
        ] {
            require_nonnegative(name, lo)?;
            if !(hi.is_finite() && hi >= lo) {
                return Err(Error::invalid(name, format!("range [{lo}, {hi}] is empty")));
            }
        }
        if self.q_pm[1] + self.q_air[1] <= 0.0 {
            return Err(Error::invalid("q_pm", "flow range admits no slug flow"));
        }
        Ok(())
    }

    pub fn center(&self) -> Inputs {
        let mid = |r: [f64; 2]| 0.5 * (r[0] + r[1]);
        Inputs {
            q_pm: mid(self.q_pm),
            q_air: mid(self.q_air),
            q_tm: mid(self.q_tm),
            w_cryst: mid(self.w_cryst),
        }
    }

    pub fn contains(&self, u: &Inputs) -> bool {
        let inside = |r: [f64; 2], v: f64| r[0] <= v && v <= r[1];
        inside(self.q_pm, u.q_pm) && inside(self.q_air, u.q_air) && inside(self.q_tm, u.q_tm) && inside(self.w_cryst, u.w_cryst)
    }
}

/// Piecewise-constant uniform draws held for a geometric number of periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationPolicy {
    pub ranges: InputRanges,
    /// Mean hold duration in sample periods (>= 1).
    pub mean_hold: f64,
    /// Excite the inlet crystal fraction; otherwise it stays at `fixed_w_cryst`.
    pub excite_w_cryst: bool,
    pub fixed_w_cryst: f64,
}

impl Default for ExcitationPolicy {
    fn default() -> Self {
        Self {
            ranges: InputRanges::default(),
            mean_hold: 5.0,
            excite_w_cryst: true,
            fixed_w_cryst: 0.01,
        }
    }
}

impl ExcitationPolicy {
    pub fn validate(&self) -> Result<()> {
        self.ranges.validate()?;
        if !(self.mean_hold.is_finite() && self.mean_hold >= 1.0) {
            return Err(Error::invalid("mean_hold", format!("must be >= 1, got {}", self.mean_hold)));
        }
        require_nonnegative("fixed_w_cryst", self.fixed_w_cryst)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Inputs {
        let u = |r: [f64; 2], rng: &mut R| if r[1] > r[0] { rng.random_range(r[0]..=r[1]) } else { r[0] };
        let q_pm = u(self.ranges.q_pm, rng);
        let q_air = u(self.ranges.q_air, rng);
        let q_tm = u(self.ranges.q_tm, rng);
        let w_cryst = if self.excite_w_cryst {
            u(self.ranges.w_cryst, rng)
        } else {
            self.fixed_w_cryst
        };
        Inputs {
            q_pm,
            q_air,
            q_tm,
            w_cryst,
        }
    }

    /// `n` consecutive inputs.
    pub fn signal<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Inputs> {
        let hold = Geometric::new(1.0 / self.mean_hold).expect("mean_hold >= 1");
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let u = self.draw(rng);
            let len = 1 + hold.sample(rng) as usize;
            for _ in 0..len.min(n - out.len()) {
                out.push(u);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataGenConfig {
    /// Total logged samples across all runs.
    pub n_samples: usize,
    pub n_runs: usize,
    /// Simulated time before logging starts, s.
    pub warmup: f64,
    pub policy: ExcitationPolicy,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for DataGenConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            n_runs: 10,
            warmup: 3000.0,
            policy: ExcitationPolicy::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl DataGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::invalid("n_runs", "must be >= 1"));
        }
        require_nonnegative("warmup", self.warmup)?;
        self.policy.validate()
    }
}

/// Independent seed number `index` of family `tag` derived from `seed`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.rotate_left(32));
    rng.set_stream(index);
    rng.next_u64()
}

const TAG_PLANT: u64 = 0x706c_616e;
const TAG_SIGNAL: u64 = 0x7369_676e;

#[derive(Debug, Clone, Default)]
pub struct GeneratedData {
    pub trajectories: Vec<Trajectory>,
    /// Failures of individual runs; their partial trajectories are kept.
    pub errors: Vec<String>,
}

impl GeneratedData {
    pub fn n_samples(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}

/// Runs the plant under random excitation. Row `k` of a trajectory holds the
/// measurement at `t_k` and the input applied over `(t_k, t_{k+1}]`.
pub fn generate_data(params: &PlantParams, sim: &SimConfig, cfg: &DataGenConfig) -> Result<GeneratedData> {
    params.validate()?;
    sim.validate()?;
    cfg.validate()?;
    let runs = cfg.n_runs.min(cfg.n_samples.max(1));
    let per_run: Vec<usize> = (0..runs)
        .map(|r| cfg.n_samples / runs + usize::from(r < cfg.n_samples % runs))
        .collect();
    let results = par::map_range(cfg.execution, runs, |r| run_one(params, sim, cfg, r, per_run[r]));
    let mut out = GeneratedData::default();
    for (traj, err) in results {
        if !traj.is_empty() {
            out.trajectories.push(traj);
        }
        if let Some(e) = err {
            out.errors.push(e);
        }
    }
    Ok(out)
}

fn run_one(params: &PlantParams, sim: &SimConfig, cfg: &DataGenConfig, run: usize, n: usize) -> (Trajectory, Option<String>) {
    let mut traj = Trajectory::default();
    if n == 0 {
        return (traj, None);
    }
    let sim_cfg = SimConfig {
        seed: derive_seed(cfg.seed, TAG_PLANT, run as u64),
        ..sim.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_SIGNAL, run as u64));
    let inputs = cfg.policy.signal(n, &mut rng);
    let result = (|| -> Result<()> {
        let mut plant = Simulator::new(params.clone(), sim_cfg)?;
        plant.run_for(&inputs[0], cfg.warmup)?;
        let mut y = plant.measure();
        for u in &inputs {
            traj.rows.push(TrajectoryRow::new(*u, &y));
            y = plant.run_sample(u)?;
            check_measurement(&y)?;
        }
        Ok(())
    })();
    (traj, result.err().map(|e| format!("run {run}: {e}")))
}
