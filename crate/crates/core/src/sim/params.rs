//! Plant parameters and simulation settings.
//!
//! Defaults are the L-alanine/water system. Quantities that the crystallizer
//! literature leaves to external correlations (pressure drop, real slug size,
//! agglomeration normalization) or to the operating point (inlet and ambient
//! temperatures, inlet concentration) are plain config fields.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureUnit {
    #[default]
    Celsius,
    Kelvin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Agglomeration prefactor beta_0.
    pub agg_beta0: f64,
    /// Exponent on the growth rate in the agglomeration kernel.
    pub agg_growth_exponent: f64,
    /// Exponent on the slug velocity in the agglomeration kernel.
    pub agg_velocity_exponent: f64,
    /// Reference volume (m^3); the per-pair event rate is `beta * agg_volume_scale / V_slug`.
    pub agg_volume_scale: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub shape_factor: f64,
    pub crystal_density: f64,
    pub pm_density: f64,
    pub pm_heat_capacity: f64,
    /// Process medium to tempering medium heat-transfer coefficient, W/(m^2 K).
    pub u_pm_tm: f64,
    pub tm_density: f64,
    pub tm_heat_capacity: f64,
    /// Tempering medium to environment heat-transfer coefficient, W/(m^2 K).
    pub u_tm_env: f64,
    pub length: f64,
    pub d_pm_inner: f64,
    pub d_pm_outer: f64,
    pub d_tm_inner: f64,
    pub d_tm_outer: f64,
    pub p_out: f64,
    pub t_env: f64,
    pub t_pm_in: f64,
    pub t_tm_in: f64,
    /// Inlet concentration, kg solute / kg solvent.
    pub c_in: f64,
    /// Effective axial diffusion coefficient of the tempering medium, m^2/s.
    pub tm_diffusivity: f64,
    /// Pressure drop `dp = dp_offset + dp_slope * (Q_PM + Q_air)`.
    pub dp_offset: f64,
    pub dp_slope: f64,
    /// Liquid volume of one physical slug (m^3), used to thin the outlet population.
    pub real_slug_volume: f64,
    /// Unit the solubility correlation expects its temperature argument in.
    pub solubility_unit: TemperatureUnit,
}

impl Default for PlantParams {
    fn default() -> Self {
        let d_pm_inner = 3.18e-3;
        let a_cross = PI * d_pm_inner * d_pm_inner / 4.0;
        Self {
            agg_beta0: 2.0e4,
            agg_growth_exponent: 1.0,
            agg_velocity_exponent: 1.0,
            agg_volume_scale: 1.0e-8,
            init_mean: 2.5e-4,
            init_std: 1.0e-4,
            shape_factor: PI / 6.0,
            crystal_density: 1432.0,
            pm_density: 1000.0,
            pm_heat_capacity: 4186.0,
            u_pm_tm: 9.25e2,
            tm_density: 1000.0,
            tm_heat_capacity: 4186.0,
            u_tm_env: 8.27,
            length: 24.0,
            d_pm_inner,
            d_pm_outer: 4.76e-3,
            d_tm_inner: 1.5e-2,
            d_tm_outer: 1.9e-2,
            p_out: 1.01e5,
            t_env: 298.15,
            t_pm_in: 313.15,
            t_tm_in: 283.15,
            c_in: 0.14,
            tm_diffusivity: 1.0e-5,
            dp_offset: 0.0,
            dp_slope: 1.4e11,
            real_slug_volume: a_cross * 4.0 * d_pm_inner,
            solubility_unit: TemperatureUnit::Celsius,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("agg_volume_scale", self.agg_volume_scale),
            ("init_mean", self.init_mean),
            ("init_std", self.init_std),
            ("shape_factor", self.shape_factor),
            ("crystal_density", self.crystal_density),
            ("pm_density", self.pm_density),
            ("pm_heat_capacity", self.pm_heat_capacity),
            ("u_pm_tm", self.u_pm_tm),
            ("tm_density", self.tm_density),
            ("tm_heat_capacity", self.tm_heat_capacity),
            ("u_tm_env", self.u_tm_env),
            ("length", self.length),
            ("d_pm_inner", self.d_pm_inner),
            ("d_pm_outer", self.d_pm_outer),
            ("d_tm_inner", self.d_tm_inner),
            ("d_tm_outer", self.d_tm_outer),
            ("p_out", self.p_out),
            ("t_env", self.t_env),
            ("t_pm_in", self.t_pm_in),
            ("t_tm_in", self.t_tm_in),
            ("real_slug_volume", self.real_slug_volume),
        ];
        for (name, v) in positive {
            require_positive(name, v)?;
        }
        for (name, v) in [
            ("agg_beta0", self.agg_beta0),
            ("agg_growth_exponent", self.agg_growth_exponent),
            ("agg_velocity_exponent", self.agg_velocity_exponent),
            ("c_in", self.c_in),
            ("tm_diffusivity", self.tm_diffusivity),
            ("dp_offset", self.dp_offset),
            ("dp_slope", self.dp_slope),
        ] {
            require_nonnegative(name, v)?;
        }
        if !(self.d_pm_inner < self.d_pm_outer
            && self.d_pm_outer < self.d_tm_inner
            && self.d_tm_inner < self.d_tm_outer)
        {
            return Err(Error::invalid(
                "d_pm_inner",
                "diameters must satisfy d_pm_inner < d_pm_outer < d_tm_inner < d_tm_outer",
            ));
        }
        Ok(())
    }

    /// Inner cross-section of the process-medium tube.
    pub fn pm_cross_section(&self) -> f64 {
        PI * self.d_pm_inner * self.d_pm_inner / 4.0
    }

    /// Flow cross-section of the tempering-medium annulus.
    pub fn tm_annulus(&self) -> f64 {
        PI * (self.d_tm_inner * self.d_tm_inner - self.d_pm_outer * self.d_pm_outer) / 4.0
    }

    /// Lateral heat-transfer area of a liquid slug of mass `mass`.
    pub fn slug_area(&self, mass: f64) -> f64 {
        let slug_length = mass / (self.pm_density * self.pm_cross_section());
        PI * self.d_pm_inner * slug_length
    }

    pub fn tm_velocity(&self, q_tm: f64) -> f64 {
        q_tm / self.tm_annulus()
    }

    pub fn pressure_drop(&self, q_pm: f64, q_air: f64) -> f64 {
        self.dp_offset + self.dp_slope * (q_pm + q_air)
    }

    /// Mass of one crystal of characteristic length `l`.
    pub fn particle_mass(&self, l: f64) -> f64 {
        self.shape_factor * self.crystal_density * l * l * l
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridIntegrator {
    /// Single forward-Euler stage.
    Euler,
    /// Three-stage strong-stability-preserving Runge-Kutta (convex Euler stages).
    #[default]
    SspRk3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Simulation time step, s. Also the slug spawn interval.
    pub dt: f64,
    /// Number of tempering-medium finite volumes.
    pub n_cells: usize,
    pub grid_integrator: GridIntegrator,
    /// Largest Courant number used when sub-cycling the tempering grid.
    pub max_courant: f64,
    /// Measurement period, s. Must be a multiple of `dt`.
    pub sample_period: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 5.0,
            n_cells: 48,
            grid_integrator: GridIntegrator::SspRk3,
            max_courant: 0.8,
            sample_period: 50.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("dt", self.dt)?;
        require_positive("sample_period", self.sample_period)?;
        if self.n_cells < 10 {
            return Err(Error::invalid("n_cells", "must be at least 10"));
        }
        if !(self.max_courant > 0.0 && self.max_courant <= 1.0) {
            return Err(Error::invalid("max_courant", "must lie in (0, 1]"));
        }
        let ratio = self.sample_period / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(Error::invalid(
                "sample_period",
                format!("must be a positive multiple of dt = {}", self.dt),
            ));
        }
        Ok(())
    }

    pub fn steps_per_sample(&self) -> usize {
        (self.sample_period / self.dt).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PlantParams::default().validate().unwrap();
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn diameter_ordering_enforced() {
        let p = PlantParams {
            d_pm_outer: 2e-2,
            ..PlantParams::default()
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("d_pm_inner"), "{err}");
    }

    #[test]
    fn sample_period_must_divide() {
        let c = SimConfig {
            sample_period: 12.0,
            ..SimConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn cross_section_from_table_diameter() {
        let a = PlantParams::default().pm_cross_section();
        assert!((a - 7.9423e-6).abs() < 1e-9);
    }
}
