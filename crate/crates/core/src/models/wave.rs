use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Forcing, ForcingConfig, Model, SineCollocation};
use crate::error::{Error, Result};
use crate::measure::State;
use crate::numerics::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub forcing: ForcingConfig,
}

fn default_modes() -> usize {
    8
}

fn default_length() -> f64 {
    PI
}

fn default_r() -> f64 {
    2.0
}

/// First-order form of `u_tt - u_xx + |u|^r u = f` on `(0, L)` with
/// Dirichlet data. The state is `U = (u_1..u_N, v_1..v_N)` in the
/// orthonormal sine basis.
///
/// The potential term of the energy uses the same grid quadrature as the
/// projected nonlinearity, so the semi-discrete flow conserves `E` exactly
/// when `f = 0`.
#[derive(Debug, Clone)]
pub struct Wave {
    basis: SineCollocation,
    r: f64,
    forcing: Forcing,
    eigenvalues: Vec<f64>,
}

impl Wave {
    /// `forcing` acts on the velocity equation and has length `modes`.
    pub fn new(modes: usize, length: f64, r: f64, forcing: Forcing) -> Result<Self> {
        if modes == 0 || !(length > 0.0) || !(r > 0.0) {
            return Err(Error::Invalid("wave needs modes >= 1, length > 0, r > 0".into()));
        }
        if forcing.amplitudes.len() != modes {
            return Err(Error::Dimension {
                expected: modes,
                found: forcing.amplitudes.len(),
            });
        }
        let basis = SineCollocation::new(modes, length);
        let eigenvalues = (1..=modes).map(|n| basis.eigenvalue(n)).collect();
        Ok(Self {
            basis,
            r,
            forcing,
            eigenvalues,
        })
    }

    pub fn from_config(c: &WaveConfig) -> Result<Self> {
        let forcing = c.forcing.build(c.modes)?;
        Self::new(c.modes, c.length, c.r, forcing)
    }

    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    /// `p = r + 2`.
    pub fn p(&self) -> f64 {
        self.r + 2.0
    }

    fn nonlinearity(&self, u: &[f64]) -> State {
        let r = self.r;
        self.basis.apply_pointwise(u, |x| x.abs().powf(r) * x)
    }

    /// `E(u, v) = 1/2 ||u||^2 + 1/p |u|_p^p + 1/2 |v|^2`.
    pub fn energy_components(&self, state: &[f64]) -> (f64, f64, f64) {
        let (u, v) = state.split_at(self.modes());
        let p = self.p();
        let grad: f64 = u.iter().zip(&self.eigenvalues).map(|(x, l)| l * x * x).sum();
        let potential = self.basis.integrate_pointwise(u, |x| x.abs().powf(p)) / p;
        (0.5 * grad, potential, 0.5 * dot(v, v))
    }
}

impl Model for Wave {
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn name(&self) -> &str {
        "wave"
    }

    fn dim(&self) -> usize {
        2 * self.modes()
    }

    fn rhs_raw(&self, t: f64, state: &[f64]) -> State {
        let (u, v) = state.split_at(self.modes());
        let nl = self.nonlinearity(u);
        let f = self.forcing.at(t);
        let mut out = Vec::with_capacity(state.len());
        out.extend_from_slice(v);
        out.extend(
            u.iter()
                .zip(&self.eigenvalues)
                .zip(nl.iter().zip(&f))
                .map(|((x, l), (n, fi))| -l * x - n + fi),
        );
        out
    }

    fn energy(&self, state: &[f64]) -> f64 {
        let (a, b, c) = self.energy_components(state);
        a + b + c
    }

    /// `<G, U> = (f, v)`.
    fn energy_supply(&self, t: f64, state: &[f64]) -> f64 {
        let v = &state[self.modes()..];
        dot(&self.forcing.at(t), v)
    }

    fn energy_is_equality(&self) -> bool {
        false
    }

    /// Per-mode rotation `(u, v) -> (u cos wh + v sin(wh)/w, -u w sin wh + v cos wh)`.
    fn linear_propagate(&self, h: f64, state: &[f64]) -> State {
        let n = self.modes();
        let mut out = vec![0.0; 2 * n];
        for (i, l) in self.eigenvalues.iter().enumerate() {
            let w = l.sqrt();
            let (s, c) = (w * h).sin_cos();
            let (u, v) = (state[i], state[n + i]);
            out[i] = c * u + s / w * v;
            out[n + i] = -w * s * u + c * v;
        }
        out
    }

    fn nonlinear_part(&self, t: f64, state: &[f64]) -> State {
        let n = self.modes();
        let nl = self.nonlinearity(&state[..n]);
        let f = self.forcing.at(t);
        let mut out = vec![0.0; n];
        out.extend(nl.iter().zip(&f).map(|(a, b)| b - a));
        out
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "modes": self.modes(),
            "length": self.basis.length(),
            "r": self.r,
            "forcing": self.forcing.amplitudes,
            "forcing_omega": self.forcing.omega,
        })
    }
}
