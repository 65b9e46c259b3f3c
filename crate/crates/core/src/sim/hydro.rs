//! Pressure and slug-velocity profile along the crystallizer.
//!
//! Pressure falls linearly from the inlet to the outlet. Liquid is
//! incompressible; the gas slugs expand isothermally, so the local gas flow
//! is `Q_air * p_out / p(z)` with `Q_air` referenced to outlet pressure.

use serde::{Deserialize, Serialize};

use super::params::PlantParams;
use crate::error::{require_nonnegative, Error, Result};

/// Manipulated variables and the inlet seed loading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    /// Process-medium volume flow, m^3/s.
    pub q_pm: f64,
    /// Air volume flow at outlet pressure, m^3/s.
    pub q_air: f64,
    /// Tempering-medium volume flow, m^3/s.
    pub q_tm: f64,
    /// Seed crystal mass fraction of the inlet flow.
    pub w_cryst: f64,
}

impl Inputs {
    pub fn validate(&self) -> Result<()> {
        require_nonnegative("q_pm", self.q_pm)?;
        require_nonnegative("q_air", self.q_air)?;
        require_nonnegative("q_tm", self.q_tm)?;
        require_nonnegative("w_cryst", self.w_cryst)?;
        Ok(())
    }
}

impl Default for Inputs {
    fn default() -> Self {
        Self {
            q_pm: 1.1e-7,
            q_air: 1.1e-7,
            q_tm: 3.5e-6,
            w_cryst: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityProfile {
    q_pm: f64,
    q_air: f64,
    p_in: f64,
    p_out: f64,
    length: f64,
    area: f64,
}

impl VelocityProfile {
    pub fn new(q_pm: f64, q_air: f64, p_in: f64, p_out: f64, length: f64, area: f64) -> Result<Self> {
        if !(q_pm + q_air > 0.0) {
            return Err(Error::invalid("q_pm", "Q_PM + Q_air must be > 0"));
        }
        if !(p_in > 0.0 && p_out > 0.0) {
            return Err(Error::invalid("p_in", format!("pressures must be > 0, got p_in = {p_in}")));
        }
        Ok(Self {
            q_pm,
            q_air,
            p_in,
            p_out,
            length,
            area,
        })
    }

    pub fn from_inputs(inputs: &Inputs, params: &PlantParams) -> Result<Self> {
        let p_in = params.p_out + params.pressure_drop(inputs.q_pm, inputs.q_air);
        Self::new(
            inputs.q_pm,
            inputs.q_air,
            p_in,
            params.p_out,
            params.length,
            params.pm_cross_section(),
        )
    }

    pub fn pressure(&self, z: f64) -> f64 {
        let s = (z / self.length).clamp(0.0, 1.0);
        self.p_in + (self.p_out - self.p_in) * s
    }

    pub fn velocity(&self, z: f64) -> f64 {
        (self.q_pm + self.q_air * self.p_out / self.pressure(z)) / self.area
    }

    pub fn inlet_pressure(&self) -> f64 {
        self.p_in
    }
}
