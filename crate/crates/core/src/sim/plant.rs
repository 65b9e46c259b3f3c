//! Coupled slug-train / tempering-grid simulator.
//!
//! Each step moves every slug with the local velocity, retires slugs past the
//! outlet, integrates the slug ODEs and the Monte Carlo population, spawns a
//! new slug at the inlet and finally steps the tempering grid with the heat
//! the slugs released. Because slugs are Lagrangian there is no numerical
//! diffusion in the process medium.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hydro::{Inputs, VelocityProfile};
use super::kinetics::agglomeration_kernel;
use super::params::{PlantParams, SimConfig};
use super::population::{
    mc_population_step, ode_step, spawn_slug, thin_to_real_slug, volume_quantiles, Slug,
};
use super::tempering::{stability_number, tm_grid_step, TemperingGrid};
use crate::error::{Error, Result};

/// Pair probabilities above this per step make the constant-step MC inaccurate.
pub const MAX_PAIR_PROBABILITY: f64 = 0.1;

/// Which physical couplings are active. All on for normal runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Physics {
    pub heat_transfer: bool,
    pub growth: bool,
    pub agglomeration: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            heat_transfer: true,
            growth: true,
            agglomeration: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimDiagnostics {
    /// Steps where some slug exceeded [`MAX_PAIR_PROBABILITY`].
    pub pair_probability_warnings: u64,
    pub agglomeration_events: u64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    /// Slugs ordered from inlet (front) to outlet (back).
    pub slugs: VecDeque<Slug>,
    pub grid: TemperingGrid,
    pub time: f64,
    pub dt: f64,
    pub rng: ChaCha8Rng,
    pub diagnostics: SimDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutletEvent {
    pub time: f64,
    pub slug: Slug,
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub outlet: Vec<OutletEvent>,
    /// Enthalpy released by the slugs during the step, J.
    pub heat_released_by_slugs: f64,
    /// Heat deposited into the grid source terms during the step, J.
    pub heat_into_grid: f64,
}

impl SimState {
    pub fn new(params: &PlantParams, config: &SimConfig) -> Result<Self> {
        params.validate()?;
        config.validate()?;
        Ok(Self {
            slugs: VecDeque::new(),
            grid: TemperingGrid::uniform(params.length, config.n_cells, params.t_tm_in, params.tm_diffusivity)?,
            time: 0.0,
            dt: config.dt,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            diagnostics: SimDiagnostics::default(),
        })
    }

    /// True when positions increase strictly from inlet to outlet.
    pub fn is_ordered(&self) -> bool {
        self.slugs.iter().zip(self.slugs.iter().skip(1)).all(|(a, b)| a.z < b.z)
    }
}

/// One time step of the full model.
pub fn advance(
    state: &mut SimState,
    params: &PlantParams,
    config: &SimConfig,
    physics: Physics,
    inputs: &Inputs,
) -> Result<StepReport> {
    inputs.validate()?;
    let dt = state.dt;
    let profile = VelocityProfile::from_inputs(inputs, params)?;
    state.grid.velocity = params.tm_velocity(inputs.q_tm);

    let mut report = StepReport::default();
    let n_cells = state.grid.n_cells();
    let mut sources = vec![0.0; n_cells];

    // Exiting slugs form a suffix since z + dt v(z) is increasing in z.
    let mut exiting = Vec::new();
    while let Some(back) = state.slugs.back() {
        let z_new = back.z + dt * profile.velocity(back.z);
        if z_new > params.length {
            let mut slug = state.slugs.pop_back().unwrap();
            slug.z = z_new;
            exiting.push(OutletEvent {
                time: state.time + dt,
                slug,
            });
        } else {
            break;
        }
    }
    exiting.reverse();
    report.outlet = exiting;

    let mut warned = false;
    for slug in state.slugs.iter_mut() {
        let z_old = slug.z;
        let v = profile.velocity(z_old);
        slug.z = z_old + dt * v;

        let t_tm = state.grid.temperature_at(slug.z);
        let area = if physics.heat_transfer {
            params.slug_area(slug.mass)
        } else {
            0.0
        };
        let enthalpy_before = slug.mass * params.pm_heat_capacity * slug.temp;
        let grown = ode_step(slug, params, t_tm, area, dt, physics.growth)?;
        report.heat_released_by_slugs += enthalpy_before - slug.mass * params.pm_heat_capacity * slug.temp;
        if grown.heat_to_tm != 0.0 {
            state.grid.deposit_heat(z_old, slug.z, grown.heat_to_tm, &mut sources)?;
        }

        let kernel = if physics.agglomeration {
            agglomeration_kernel(params, grown.growth, v)
        } else {
            0.0
        };
        let mc = mc_population_step(slug, params, grown.growth, kernel, dt, &mut state.rng);
        state.diagnostics.agglomeration_events += mc.events as u64;
        if mc.pair_probability > MAX_PAIR_PROBABILITY {
            warned = true;
        }
    }
    if warned {
        state.diagnostics.pair_probability_warnings += 1;
    }

    let new_slug = spawn_slug(params, inputs, dt, &mut state.rng)?;
    state.slugs.push_front(new_slug);

    report.heat_into_grid = dt * sources.iter().sum::<f64>();

    let substeps = (stability_number(&state.grid, dt) / config.max_courant).ceil().max(1.0) as usize;
    let sub_dt = dt / substeps as f64;
    for _ in 0..substeps {
        tm_grid_step(&mut state.grid, &sources, params, sub_dt, config.grid_integrator)?;
    }
    state.time += dt;
    Ok(report)
}

/// Outlet measurement vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub time: f64,
    pub t_pm: f64,
    pub t_tm: f64,
    pub c_pm: f64,
    pub d10: f64,
    pub d50: f64,
    pub d90: f64,
    /// Set when the outlet population was empty and the diameters are zero.
    pub empty_population: bool,
}

pub const MEASUREMENT_CHANNELS: [&str; 6] = ["T_PM", "T_TM", "c_PM", "d10", "d50", "d90"];

impl Measurement {
    pub fn values(&self) -> [f64; 6] {
        [self.t_pm, self.t_tm, self.c_pm, self.d10, self.d50, self.d90]
    }

    pub fn from_values(time: f64, v: [f64; 6]) -> Self {
        Self {
            time,
            t_pm: v[0],
            t_tm: v[1],
            c_pm: v[2],
            d10: v[3],
            d50: v[4],
            d90: v[5],
            empty_population: v[5] == 0.0,
        }
    }
}

/// Measurement from the most recent outlet slug, its population thinned to
/// the crystal count of one physical slug. Holds `previous` when no slug left
/// the crystallizer.
pub fn measure_outlet(
    events: &[OutletEvent],
    grid: &TemperingGrid,
    params: &PlantParams,
    time: f64,
    rng: &mut ChaCha8Rng,
    previous: Option<&Measurement>,
) -> Option<Measurement> {
    let Some(last) = events.last() else {
        return previous.map(|m| Measurement { time, ..*m });
    };
    let slug = &last.slug;
    let thinned = thin_to_real_slug(&slug.particles, slug.volume(params), params.real_slug_volume, rng);
    let (q, empty) = match volume_quantiles(&thinned) {
        Some(q) => (q, false),
        None => (Default::default(), true),
    };
    Some(Measurement {
        time,
        t_pm: slug.temp,
        t_tm: grid.outlet_temperature(),
        c_pm: slug.conc,
        d10: q.d10,
        d50: q.d50,
        d90: q.d90,
        empty_population: empty,
    })
}

/// Plant with a fixed measurement period.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: PlantParams,
    config: SimConfig,
    physics: Physics,
    state: SimState,
    pending: Vec<OutletEvent>,
    last: Option<Measurement>,
}

impl Simulator {
    pub fn new(params: PlantParams, config: SimConfig) -> Result<Self> {
        let state = SimState::new(&params, &config)?;
        Ok(Self {
            params,
            config,
            physics: Physics::default(),
            state,
            pending: Vec::new(),
            last: None,
        })
    }

    pub fn with_physics(mut self, physics: Physics) -> Self {
        self.physics = physics;
        self
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    /// Mutable access for scenario changes (inlet conditions etc.).
    pub fn params_mut(&mut self) -> &mut PlantParams {
        &mut self.params
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn step(&mut self, inputs: &Inputs) -> Result<StepReport> {
        let report = advance(&mut self.state, &self.params, &self.config, self.physics, inputs)?;
        if let Some(last) = report.outlet.last() {
            self.pending.clear();
            self.pending.push(last.clone());
        }
        Ok(report)
    }

    /// Measures from the outlet events since the previous measurement.
    pub fn measure(&mut self) -> Measurement {
        let m = measure_outlet(
            &self.pending,
            &self.state.grid,
            &self.params,
            self.state.time,
            &mut self.state.rng,
            self.last.as_ref(),
        )
        .unwrap_or_else(|| Measurement {
            time: self.state.time,
            t_pm: self.params.t_pm_in,
            t_tm: self.state.grid.outlet_temperature(),
            c_pm: self.params.c_in,
            d10: 0.0,
            d50: 0.0,
            d90: 0.0,
            empty_population: true,
        });
        self.pending.clear();
        self.last = Some(m);
        m
    }

    /// Runs one measurement period under constant inputs and measures.
    pub fn run_sample(&mut self, inputs: &Inputs) -> Result<Measurement> {
        for _ in 0..self.config.steps_per_sample() {
            self.step(inputs)?;
        }
        Ok(self.measure())
    }

    /// Runs `duration` seconds under constant inputs without measuring.
    pub fn run_for(&mut self, inputs: &Inputs, duration: f64) -> Result<()> {
        let steps = (duration / self.config.dt).round() as usize;
        for _ in 0..steps {
            self.step(inputs)?;
        }
        Ok(())
    }

    pub fn last_measurement(&self) -> Option<&Measurement> {
        self.last.as_ref()
    }
}

pub(crate) fn check_measurement(m: &Measurement) -> Result<()> {
    if m.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("measurement".into()))
    }
}
