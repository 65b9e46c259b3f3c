use serde::{Deserialize, Serialize};

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::par::Execution;
use crate::sim::Inputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMode {
    Nominal,
    Cqr,
    Bll,
}

impl UncertaintyMode {
    pub fn n_branches(self) -> usize {
        match self {
            UncertaintyMode::Nominal => 1,
            _ => 3,
        }
    }
}

impl std::str::FromStr for UncertaintyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(UncertaintyMode::Nominal),
            "cqr" => Ok(UncertaintyMode::Cqr),
            "bll" => Ok(UncertaintyMode::Bll),
            other => Err(Error::invalid("mode", format!("unknown uncertainty mode `{other}`"))),
        }
    }
}

/// Box bounds of the manipulated variables `(Q_PM, Q_air, Q_TM)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for InputBounds {
    fn default() -> Self {
        Self {
            lower: [0.6e-7, 0.6e-7, 1.0e-6],
            upper: [1.6e-7, 1.6e-7, 6.0e-6],
        }
    }
}

impl InputBounds {
    pub fn validate(&self) -> Result<()> {
        for c in 0..3 {
            let (lo, hi) = (self.lower[c], self.upper[c]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid("bounds", format!("channel {c}: need finite lower < upper, got [{lo}, {hi}]")));
            }
            require_nonnegative("bounds.lower", lo)?;
        }
        Ok(())
    }

    pub fn span(&self) -> [f64; 3] {
        [0, 1, 2].map(|c| self.upper[c] - self.lower[c])
    }

    /// Box coordinates in `[0, 1]` of a physical input (unclamped).
    pub fn to_unit(&self, u: &Inputs) -> [f64; 3] {
        let v = [u.q_pm, u.q_air, u.q_tm];
        let s = self.span();
        [0, 1, 2].map(|c| (v[c] - self.lower[c]) / s[c])
    }

    pub fn from_unit(&self, z: &[f64], w_cryst: f64) -> Inputs {
        let s = self.span();
        Inputs {
            q_pm: self.lower[0] + z[0] * s[0],
            q_air: self.lower[1] + z[1] * s[1],
            q_tm: self.lower[2] + z[2] * s[2],
            w_cryst,
        }
    }

    pub fn contains(&self, u: &Inputs) -> bool {
        let v = [u.q_pm, u.q_air, u.q_tm];
        (0..3).all(|c| self.lower[c] <= v[c] && v[c] <= self.upper[c])
    }

    pub fn center(&self, w_cryst: f64) -> Inputs {
        self.from_unit(&[0.5; 3], w_cryst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stationarity tolerance relative to the initial objective scale.
    pub tolerance: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-9,
            memory: 10,
        }
    }
}

/// Controller settings. The cost is evaluated in physical units (m, m^3/s)
/// with input moves measured in box coordinates; the default weights put
/// each term on the order of one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Reward on d50, 1/m.
    pub gamma1: f64,
    /// Reward on Q_PM, s/m^3.
    pub gamma2: f64,
    /// Cost of Q_TM, s/m^3.
    pub gamma3: f64,
    /// Move suppression on box-normalized input changes.
    pub gamma4: f64,
    /// d50 tracking weight, 1/m^2. Zero disables tracking.
    pub gamma_track: f64,
    pub d50_target: f64,
    /// Upper bound on d90, m. `None` leaves d90 unconstrained.
    pub d90_max: Option<f64>,
    /// Soft-constraint penalty, 1/m^2.
    pub rho_soft: f64,
    pub bounds: InputBounds,
    pub mode: UncertaintyMode,
    /// BLL standard-deviation multiplier.
    pub m: f64,
    /// CQR miscoverage; must match the calibrated model.
    pub alpha: f64,
    /// Control period, s.
    pub period: f64,
    pub solver: SolverConfig,
    pub execution: Execution,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            gamma1: 1.0e4,
            gamma2: 1.0e6,
            gamma3: 1.0e4,
            gamma4: 2.0,
            gamma_track: 0.0,
            d50_target: 500e-6,
            d90_max: Some(650e-6),
            rho_soft: 1.0e9,
            bounds: InputBounds::default(),
            mode: UncertaintyMode::Nominal,
            m: 2.0,
            alpha: 0.05,
            period: 50.0,
            solver: SolverConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::invalid("horizon", format!("must be >= 2, got {}", self.horizon)));
        }
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("gamma4", self.gamma4),
            ("gamma_track", self.gamma_track),
            ("rho_soft", self.rho_soft),
            ("m", self.m),
            ("d50_target", self.d50_target),
        ] {
            require_nonnegative(name, v)?;
        }
        if let Some(b) = self.d90_max {
            require_positive("d90_max", b)?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        require_positive("period", self.period)?;
        if self.solver.max_iterations == 0 || self.solver.memory == 0 {
            return Err(Error::invalid("solver", "max_iterations and memory must be >= 1"));
        }
        require_positive("solver.tolerance", self.solver.tolerance)?;
        self.bounds.validate()
    }

    /// Multiplies every cost weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gamma1: self.gamma1 * factor,
            gamma2: self.gamma2 * factor,
            gamma3: self.gamma3 * factor,
            gamma4: self.gamma4 * factor,
            gamma_track: self.gamma_track * factor,
            rho_soft: self.rho_soft * factor,
            ..*self
        }
    }

    /// Stage cost without move suppression and soft-constraint terms.
    pub fn economic_cost(&self, d50: f64, u: &Inputs) -> f64 {
        -self.gamma1 * d50 - self.gamma2 * u.q_pm + self.gamma3 * u.q_tm
    }
}
