use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Forcing, ForcingConfig, Model, SineCollocation};
use crate::error::{Error, Result};
use crate::measure::State;
use crate::numerics::dot;

/// Reaction term `f(s, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reaction {
    /// `f(s, v) = |v|^(p-2) v` with `eta = 1`, `C1 = 0`, `C2 = 1`.
    Power { p: f64 },
}

impl Default for Reaction {
    fn default() -> Self {
        Reaction::Power { p: 4.0 }
    }
}

impl Reaction {
    pub fn eval(&self, _s: f64, v: f64) -> f64 {
        match *self {
            Reaction::Power { p: 4.0 } => v * v * v,
            Reaction::Power { p } => v.abs().powf(p - 2.0) * v,
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            Reaction::Power { p } => p,
        }
    }

    /// `(eta, C1, C2)` in the dissipativity and growth conditions.
    pub fn constants(&self) -> (f64, f64, f64) {
        match self {
            Reaction::Power { .. } => (1.0, 0.0, 1.0),
        }
    }

    /// Checks `eta |v|^p - C1 <= f(s,v) v` and
    /// `|f(s,v)|^(p/(p-1)) <= C2 (|v|^p + 1)` on a grid of `(s, v)`.
    pub fn check_conditions(&self, s_range: (f64, f64), v_max: f64, samples: usize) -> Result<()> {
        let p = self.exponent();
        let (eta, c1, c2) = self.constants();
        let q = p / (p - 1.0);
        for i in 0..samples {
            let s = s_range.0 + (s_range.1 - s_range.0) * i as f64 / (samples - 1).max(1) as f64;
            for j in 0..samples {
                let v = -v_max + 2.0 * v_max * j as f64 / (samples - 1).max(1) as f64;
                let f = self.eval(s, v);
                let vp = v.abs().powf(p);
                let slack = 1e-12 * (1.0 + vp);
                if eta * vp - c1 > f * v + slack {
                    return Err(Error::Validation(format!("dissipativity fails at s={s}, v={v}")));
                }
                if f.abs().powf(q) > c2 * (vp + 1.0) + slack {
                    return Err(Error::Validation(format!("growth condition fails at s={s}, v={v}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReacDiffConfig {
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    pub diffusivity: f64,
    #[serde(default)]
    pub reaction: Reaction,
    #[serde(default)]
    pub forcing: ForcingConfig,
}

fn default_modes() -> usize {
    8
}

fn default_length() -> f64 {
    PI
}

/// `u_t = a u_xx - f(t, u) + g(t)` on `(0, L)` with Dirichlet data, in the
/// orthonormal sine basis. Coefficients are `L^2` coordinates, so the
/// Euclidean pairing is the `H` inner product.
#[derive(Debug, Clone)]
pub struct ReactionDiffusion {
    basis: SineCollocation,
    diffusivity: f64,
    reaction: Reaction,
    forcing: Forcing,
    eigenvalues: Vec<f64>,
}

impl ReactionDiffusion {
    pub fn new(
        modes: usize,
        length: f64,
        diffusivity: f64,
        reaction: Reaction,
        forcing: Forcing,
    ) -> Result<Self> {
        if modes == 0 || !(length > 0.0) || !(diffusivity > 0.0) {
            return Err(Error::Invalid(
                "reaction-diffusion needs modes >= 1, length > 0, diffusivity > 0".into(),
            ));
        }
        if reaction.exponent() < 2.0 {
            return Err(Error::Invalid("reaction exponent must be >= 2".into()));
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
            diffusivity,
            reaction,
            forcing,
            eigenvalues,
        })
    }

    pub fn from_config(c: &ReacDiffConfig) -> Result<Self> {
        let forcing = c.forcing.build(c.modes)?;
        Self::new(c.modes, c.length, c.diffusivity, c.reaction, forcing)
    }

    pub fn basis(&self) -> &SineCollocation {
        &self.basis
    }

    pub fn reaction(&self) -> Reaction {
        self.reaction
    }

    /// Pseudo-spectral `P[f(t, u)]`.
    pub fn reaction_term(&self, t: f64, u: &[f64]) -> State {
        self.basis.apply_pointwise(u, |v| self.reaction.eval(t, v))
    }

    /// `||u||_V^2 = sum_n (n pi / L)^2 u_n^2`.
    pub fn v_norm_sq(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.eigenvalues).map(|(x, l)| l * x * x).sum()
    }
}

impl Model for ReactionDiffusion {
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn name(&self) -> &str {
        "reaction_diffusion"
    }

    fn dim(&self) -> usize {
        self.basis.modes()
    }

    fn rhs_raw(&self, t: f64, u: &[f64]) -> State {
        let f = self.reaction_term(t, u);
        let g = self.forcing.at(t);
        u.iter()
            .zip(&self.eigenvalues)
            .zip(f.iter().zip(&g))
            .map(|((x, l), (fi, gi))| -self.diffusivity * l * x - fi + gi)
            .collect()
    }

    fn energy(&self, u: &[f64]) -> f64 {
        dot(u, u)
    }

    /// `2 [<g,u> - a ||u||^2 - (f(t,u), u)]`.
    fn energy_supply(&self, t: f64, u: &[f64]) -> f64 {
        let g = self.forcing.at(t);
        let f = self.reaction_term(t, u);
        2.0 * (dot(&g, u) - self.diffusivity * self.v_norm_sq(u) - dot(&f, u))
    }

    fn energy_is_equality(&self) -> bool {
        true
    }

    fn linear_propagate(&self, h: f64, x: &[f64]) -> State {
        x.iter()
            .zip(&self.eigenvalues)
            .map(|(v, l)| (-self.diffusivity * l * h).exp() * v)
            .collect()
    }

    fn nonlinear_part(&self, t: f64, u: &[f64]) -> State {
        let f = self.reaction_term(t, u);
        let g = self.forcing.at(t);
        f.iter().zip(&g).map(|(fi, gi)| gi - fi).collect()
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "modes": self.basis.modes(),
            "length": self.basis.length(),
            "diffusivity": self.diffusivity,
            "reaction_p": self.reaction.exponent(),
            "forcing": self.forcing.amplitudes,
            "forcing_omega": self.forcing.omega,
        })
    }
}
