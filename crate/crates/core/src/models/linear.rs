use serde_json::json;

use super::Model;
use crate::error::{Error, Result};
use crate::measure::State;
use crate::numerics::dot;

/// `u' = -rate * u`. With `rate = 0` the dynamics are frozen.
#[derive(Debug, Clone)]
pub struct LinearDecay {
    dim: usize,
    rate: f64,
}

impl LinearDecay {
    pub fn new(dim: usize, rate: f64) -> Result<Self> {
        if dim == 0 || !rate.is_finite() {
            return Err(Error::Invalid("linear model needs dim >= 1 and finite rate".to_string()));
        }
        Ok(Self { dim, rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Closed-form flow map `u0 -> exp(-rate t) u0`.
    pub fn flow(&self, t: f64, u0: &[f64]) -> State {
        let c = (-self.rate * t).exp();
        u0.iter().map(|x| c * x).collect()
    }
}

impl Model for LinearDecay {
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn name(&self) -> &str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs_raw(&self, _t: f64, u: &[f64]) -> State {
        u.iter().map(|x| -self.rate * x).collect()
    }

    fn energy(&self, u: &[f64]) -> f64 {
        dot(u, u)
    }

    fn energy_supply(&self, _t: f64, u: &[f64]) -> f64 {
        -2.0 * self.rate * dot(u, u)
    }

    fn energy_is_equality(&self) -> bool {
        true
    }

    fn linear_propagate(&self, h: f64, x: &[f64]) -> State {
        self.flow(h, x)
    }

    fn nonlinear_part(&self, _t: f64, u: &[f64]) -> State {
        vec![0.0; u.len()]
    }

    fn params(&self) -> serde_json::Value {
        json!({ "dim": self.dim, "rate": self.rate })
    }
}
