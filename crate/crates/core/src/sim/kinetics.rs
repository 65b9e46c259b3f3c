//! Crystallization kinetics for L-alanine in water.

use super::params::{PlantParams, TemperatureUnit};

const KELVIN_OFFSET: f64 = 273.15;

/// Equilibrium solubility (kg solute / kg solvent) at `t` in the unit the
/// correlation is parameterized in.
pub fn solubility(t: f64) -> f64 {
    0.11238 * (9.0849e-3 * t).exp()
}

/// Solubility for an absolute temperature, converting per `unit`.
pub fn solubility_at_kelvin(t_kelvin: f64, unit: TemperatureUnit) -> f64 {
    match unit {
        TemperatureUnit::Celsius => solubility(t_kelvin - KELVIN_OFFSET),
        TemperatureUnit::Kelvin => solubility(t_kelvin),
    }
}

/// Relative supersaturation `(c - c*) / c*`.
pub fn supersaturation(c: f64, c_star: f64) -> f64 {
    (c - c_star) / c_star
}

/// Size-independent growth rate in m/s. No dissolution: zero for `ds <= 0`.
pub fn growth_rate(ds: f64) -> f64 {
    if ds > 0.0 {
        5.857e-5 * ds * ds * (0.913 / ds).tanh()
    } else {
        0.0
    }
}

/// Size-independent agglomeration kernel `beta0 * G^b1 * v^b2`.
pub fn agglomeration_kernel(params: &PlantParams, growth: f64, velocity: f64) -> f64 {
    if params.agg_beta0 == 0.0 || growth <= 0.0 {
        return 0.0;
    }
    params.agg_beta0
        * growth.powf(params.agg_growth_exponent)
        * velocity.max(0.0).powf(params.agg_velocity_exponent)
}

/// Growth rate for a slug at concentration `c` and absolute temperature `t_kelvin`.
pub fn slug_growth_rate(params: &PlantParams, c: f64, t_kelvin: f64) -> f64 {
    let c_star = solubility_at_kelvin(t_kelvin, params.solubility_unit);
    growth_rate(supersaturation(c, c_star))
}
