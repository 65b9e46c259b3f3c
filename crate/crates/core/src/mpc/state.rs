use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sim::Inputs;
use crate::surrogate::{NarxSpec, N_Y};

/// Recent measurements and applied inputs in physical units, newest first.
///
/// At solve time it holds `y_k, ..., y_{k-l}` and `u_{k-1}, ..., u_{k-l}`;
/// the decision `u_k` completes the NARX window.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxState {
    spec: NarxSpec,
    y: VecDeque<[f64; N_Y]>,
    u: VecDeque<Inputs>,
}

impl NarxState {
    pub fn new(spec: NarxSpec) -> Self {
        Self {
            spec,
            y: VecDeque::with_capacity(spec.lag + 1),
            u: VecDeque::with_capacity(spec.lag.max(1)),
        }
    }

    pub fn spec(&self) -> NarxSpec {
        self.spec
    }

    pub fn push_measurement(&mut self, y: [f64; N_Y]) {
        self.y.push_front(y);
        self.y.truncate(self.spec.lag + 1);
    }

    pub fn push_input(&mut self, u: Inputs) {
        if self.spec.lag == 0 {
            return;
        }
        self.u.push_front(u);
        self.u.truncate(self.spec.lag);
    }

    /// Records a sample produced while the plant was driven externally.
    pub fn observe(&mut self, y: [f64; N_Y], u: Inputs) {
        self.push_measurement(y);
        self.push_input(u);
    }

    pub fn is_ready(&self) -> bool {
        self.y.len() == self.spec.lag + 1 && self.u.len() == self.spec.lag
    }

    pub fn require_ready(&self) -> Result<()> {
        if self.is_ready() {
            Ok(())
        } else {
            Err(Error::NotWarm {
                have: self.y.len(),
                need: self.spec.lag + 1,
            })
        }
    }

    /// `y_{k-i}`.
    pub fn y(&self, i: usize) -> &[f64; N_Y] {
        &self.y[i]
    }

    /// `u_{k-1-i}`.
    pub fn past_input(&self, i: usize) -> &Inputs {
        &self.u[i]
    }

    pub fn latest(&self) -> Option<&[f64; N_Y]> {
        self.y.front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_after_lag_plus_one_samples() {
        let spec = NarxSpec {
            lag: 2,
            with_disturbance: false,
        };
        let mut s = NarxState::new(spec);
        assert!(s.require_ready().is_err());
        s.observe([1.0; N_Y], Inputs::default());
        s.observe([2.0; N_Y], Inputs::default());
        s.push_measurement([3.0; N_Y]);
        assert!(s.is_ready());
        assert_eq!(s.y(0)[0], 3.0);
        assert_eq!(s.y(2)[0], 1.0);
    }
}
