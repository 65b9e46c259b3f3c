//! Lagrangian liquid slugs and their Monte Carlo crystal populations.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::kinetics::slug_growth_rate;
use super::params::PlantParams;
use crate::error::{require_nonnegative, require_positive, Error, Result};

use super::hydro::Inputs;

/// One simulated liquid compartment travelling through the crystallizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Slug {
    /// Axial position, m.
    pub z: f64,
    /// Solvent mass, kg.
    pub mass: f64,
    /// Concentration, kg solute / kg solvent.
    pub conc: f64,
    /// Temperature, K.
    pub temp: f64,
    /// Characteristic lengths of the crystals, m.
    pub particles: Vec<f64>,
}

impl Slug {
    /// Liquid volume of the slug.
    pub fn volume(&self, params: &PlantParams) -> f64 {
        self.mass / params.pm_density
    }

    pub fn crystal_mass(&self, params: &PlantParams) -> f64 {
        let v3: f64 = self.particles.iter().map(|l| l * l * l).sum();
        params.shape_factor * params.crystal_density * v3
    }

    pub fn second_moment(&self) -> f64 {
        self.particles.iter().map(|l| l * l).sum()
    }

    fn check_finite(&self) -> Result<()> {
        if self.mass.is_finite() && self.conc.is_finite() && self.temp.is_finite() && self.z.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!(
                "slug state (z = {}, m = {}, c = {}, T = {})",
                self.z, self.mass, self.conc, self.temp
            )))
        }
    }
}

/// Draws one seed length from the inlet normal distribution, redrawing
/// non-positive samples.
pub fn sample_seed_length<R: Rng + ?Sized>(params: &PlantParams, rng: &mut R) -> f64 {
    let normal = Normal::new(params.init_mean, params.init_std).expect("validated std");
    loop {
        let l = normal.sample(rng);
        if l > 0.0 {
            return l;
        }
    }
}

/// Creates the slug entering at the inlet during one time step.
///
/// Seeds are appended until their mass first reaches `w_cryst * m_dot * dt`.
pub fn spawn_slug<R: Rng + ?Sized>(
    params: &PlantParams,
    inputs: &Inputs,
    dt: f64,
    rng: &mut R,
) -> Result<Slug> {
    require_positive("dt", dt)?;
    require_positive("q_pm", inputs.q_pm)?;
    require_nonnegative("w_cryst", inputs.w_cryst)?;
    let mass_flow = params.pm_density * inputs.q_pm;
    let mass = dt * mass_flow;
    let target = inputs.w_cryst * mass_flow * dt;
    let mut particles = Vec::new();
    let mut crystal_mass = 0.0;
    while crystal_mass < target {
        let l = sample_seed_length(params, rng);
        crystal_mass += params.particle_mass(l);
        particles.push(l);
    }
    Ok(Slug {
        z: 0.0,
        mass,
        conc: params.c_in,
        temp: params.t_pm_in,
        particles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOutcome {
    /// Heat flow into the tempering medium, W (negative when the slug warms).
    pub heat_to_tm: f64,
    /// Growth rate applied over the step, m/s (zero while growth is suspended).
    pub growth: f64,
}

/// Explicit-Euler update of slug temperature and concentration.
///
/// The solute removed equals the crystal mass gained when every particle
/// grows by `G * dt`; to first order in `dt` this is `3 rho k_v G mu_2 dt`.
/// Growth is suspended for the step if it would drive the concentration
/// below zero.
pub fn slug_ode_step(
    slug: &mut Slug,
    params: &PlantParams,
    t_tm_local: f64,
    area: f64,
    dt: f64,
) -> Result<OdeOutcome> {
    ode_step(slug, params, t_tm_local, area, dt, true)
}

pub(crate) fn ode_step(
    slug: &mut Slug,
    params: &PlantParams,
    t_tm_local: f64,
    area: f64,
    dt: f64,
    allow_growth: bool,
) -> Result<OdeOutcome> {
    require_positive("dt", dt)?;
    require_positive("slug mass", slug.mass)?;
    slug.check_finite()?;
    if !t_tm_local.is_finite() {
        return Err(Error::NonFinite("tempering temperature".into()));
    }

    let mut growth = if allow_growth {
        slug_growth_rate(params, slug.conc, slug.temp)
    } else {
        0.0
    };
    if growth > 0.0 && !slug.particles.is_empty() {
        let gained = crystal_mass_gain(params, &slug.particles, growth * dt);
        let new_conc = slug.conc - gained / slug.mass;
        if new_conc >= 0.0 {
            slug.conc = new_conc;
        } else {
            growth = 0.0;
        }
    } else {
        growth = 0.0;
    }

    let heat_to_slug = params.u_pm_tm * area * (t_tm_local - slug.temp);
    slug.temp += dt * heat_to_slug / (slug.mass * params.pm_heat_capacity);
    slug.check_finite()?;
    Ok(OdeOutcome {
        heat_to_tm: -heat_to_slug,
        growth,
    })
}

/// Crystal mass gained when all lengths increase by `dl`, from the moments
/// so the increment is free of cancellation.
pub fn crystal_mass_gain(params: &PlantParams, particles: &[f64], dl: f64) -> f64 {
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for &l in particles {
        m0 += 1.0;
        m1 += l;
        m2 += l * l;
    }
    params.shape_factor * params.crystal_density * (3.0 * dl * m2 + 3.0 * dl * dl * m1 + dl * dl * dl * m0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOutcome {
    pub events: usize,
    /// Probability that a given pair agglomerates within the step.
    pub pair_probability: f64,
}

/// Constant-time-step Monte Carlo update: growth of every particle, then a
/// Poisson number of pairwise agglomeration events.
///
/// The expected event count is `beta * dt * N (N - 1) / 2 * C` with
/// `C = agg_volume_scale / V_slug`. Each event replaces a uniformly chosen
/// pair by one particle of the combined volume.
pub fn mc_population_step<R: Rng + ?Sized>(
    slug: &mut Slug,
    params: &PlantParams,
    growth: f64,
    kernel: f64,
    dt: f64,
    rng: &mut R,
) -> McOutcome {
    if growth != 0.0 {
        let dl = growth * dt;
        for l in slug.particles.iter_mut() {
            *l += dl;
        }
    }
    let n = slug.particles.len();
    let pair_rate = kernel * params.agg_volume_scale / slug.volume(params);
    let pair_probability = pair_rate * dt;
    if n < 2 || kernel <= 0.0 {
        return McOutcome {
            events: 0,
            pair_probability,
        };
    }
    let lambda = pair_probability * (n * (n - 1)) as f64 / 2.0;
    let events = sample_poisson(lambda, rng);
    let mut done = 0;
    for _ in 0..events {
        if agglomerate_random_pair(&mut slug.particles, rng).is_none() {
            break;
        }
        done += 1;
    }
    McOutcome {
        events: done,
        pair_probability,
    }
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    if !(lambda > 0.0) {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// Merges a uniformly random pair of distinct particles. Returns the new length.
pub fn agglomerate_random_pair<R: Rng + ?Sized>(particles: &mut Vec<f64>, rng: &mut R) -> Option<f64> {
    let n = particles.len();
    if n < 2 {
        return None;
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    let (hi, lo) = if i > j { (i, j) } else { (j, i) };
    let a = particles.swap_remove(hi);
    let b = particles.swap_remove(lo);
    let merged = (a * a * a + b * b * b).cbrt();
    particles.push(merged);
    Some(merged)
}

/// Volume-weighted characteristic lengths of a population.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SizeQuantiles {
    pub d10: f64,
    pub d50: f64,
    pub d90: f64,
}

/// `d_q` is the smallest length at which the cumulative `sum L^3` over the
/// ascending-sorted population reaches `q` of the total. `None` when empty.
pub fn volume_quantiles(lengths: &[f64]) -> Option<SizeQuantiles> {
    if lengths.is_empty() {
        return None;
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().map(|l| l * l * l).sum();
    let quantile = |q: f64| {
        let target = q * total;
        let mut cum = 0.0;
        for &l in &sorted {
            cum += l * l * l;
            if cum >= target {
                return l;
            }
        }
        *sorted.last().unwrap()
    };
    Some(SizeQuantiles {
        d10: quantile(0.1),
        d50: quantile(0.5),
        d90: quantile(0.9),
    })
}

/// Uniform subsample without replacement down to the number of crystals one
/// physical slug of `real_volume` would hold.
pub fn thin_to_real_slug<R: Rng + ?Sized>(
    particles: &[f64],
    slug_volume: f64,
    real_volume: f64,
    rng: &mut R,
) -> Vec<f64> {
    let n = particles.len();
    if n == 0 {
        return Vec::new();
    }
    let keep = ((n as f64) * real_volume / slug_volume).round() as usize;
    let keep = keep.clamp(1, n);
    if keep == n {
        return particles.to_vec();
    }
    rand::seq::index::sample(rng, n, keep)
        .into_iter()
        .map(|i| particles[i])
        .collect()
}
