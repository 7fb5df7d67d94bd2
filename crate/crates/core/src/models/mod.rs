//! Finite-dimensional evolution models `u' = F(t, u)` together with the
//! energy functionals used by the mean energy verifiers.

mod linear;
mod nse;
mod reacdiff;
mod sine;
mod wave;

use std::any::Any;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cylinder::{Euclidean, Pairing};
use crate::error::{Error, Result};
use crate::measure::State;
use crate::numerics::{all_finite, norm};

pub use linear::LinearDecay;
pub use nse::{NavierStokes, NseConfig};
pub use reacdiff::{ReacDiffConfig, Reaction, ReactionDiffusion};
pub use sine::SineCollocation;
pub use wave::{Wave, WaveConfig};

/// States with Euclidean norm above this are rejected by [`Model::rhs`].
pub const OVERFLOW_GUARD: f64 = 1e8;

/// A Galerkin-truncated evolution equation.
pub trait Model: Send + Sync + fmt::Debug + Any {
    fn name(&self) -> &str;

    fn as_any(&self) -> &dyn Any;

    fn dim(&self) -> usize;

    /// `F(t, u)` without the overflow guard.
    fn rhs_raw(&self, t: f64, u: &[f64]) -> State;

    /// `F(t, u)`; fails on states outside the overflow ball or when the
    /// result is not finite.
    fn rhs(&self, t: f64, u: &[f64]) -> Result<State> {
        if u.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: u.len(),
            });
        }
        let n = norm(u);
        if !(n <= OVERFLOW_GUARD) {
            return Err(Error::Overflow { norm: n });
        }
        let f = self.rhs_raw(t, u);
        if !all_finite(&f) {
            return Err(Error::Overflow { norm: norm(&f) });
        }
        Ok(f)
    }

    fn pairing(&self) -> &dyn Pairing {
        &Euclidean
    }

    /// The quantity the energy functionals act on: `|u|^2` for dissipative
    /// models, `E(U)` for the wave model.
    fn energy(&self, u: &[f64]) -> f64;

    /// Right-hand side `S(t, u)` of the energy balance `d/dt energy <= S`
    /// (with equality for [`Model::energy_is_equality`]).
    fn energy_supply(&self, t: f64, u: &[f64]) -> f64;

    fn energy_is_equality(&self) -> bool;

    /// Membership in the space carrying the solutions. Every finite state of
    /// the right dimension qualifies.
    fn z_member(&self, u: &[f64]) -> bool {
        u.len() == self.dim() && all_finite(u)
    }

    /// Exact flow of the linear part over time `h`. Identity when the model
    /// has no split.
    fn linear_propagate(&self, _h: f64, x: &[f64]) -> State {
        x.to_vec()
    }

    /// `F` minus the linear part handled by [`Model::linear_propagate`].
    fn nonlinear_part(&self, t: f64, u: &[f64]) -> State {
        self.rhs_raw(t, u)
    }

    /// Parameters recorded in reports.
    fn params(&self) -> serde_json::Value;
}

/// Time-dependent forcing `g(t) = amplitudes * cos(omega t)` in model
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forcing {
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub omega: f64,
}

impl Forcing {
    pub fn zero(dim: usize) -> Self {
        Self {
            amplitudes: vec![0.0; dim],
            omega: 0.0,
        }
    }

    pub fn single(dim: usize, coordinate: usize, amplitude: f64) -> Self {
        let mut f = Self::zero(dim);
        f.amplitudes[coordinate] = amplitude;
        f
    }

    pub fn at(&self, t: f64) -> State {
        let c = if self.omega == 0.0 { 1.0 } else { (self.omega * t).cos() };
        self.amplitudes.iter().map(|a| a * c).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.amplitudes.iter().all(|a| *a == 0.0)
    }
}

/// Forcing as declared in experiment configs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    #[default]
    None,
    SingleMode {
        coordinate: usize,
        amplitude: f64,
        #[serde(default)]
        omega: f64,
    },
    Vector {
        amplitudes: Vec<f64>,
        #[serde(default)]
        omega: f64,
    },
}

impl ForcingConfig {
    pub fn build(&self, dim: usize) -> Result<Forcing> {
        match self {
            ForcingConfig::None => Ok(Forcing::zero(dim)),
            ForcingConfig::SingleMode {
                coordinate,
                amplitude,
                omega,
            } => {
                if *coordinate >= dim {
                    return Err(Error::Invalid(format!(
                        "forcing coordinate {coordinate} outside dimension {dim}"
                    )));
                }
                let mut f = Forcing::single(dim, *coordinate, *amplitude);
                f.omega = *omega;
                Ok(f)
            }
            ForcingConfig::Vector { amplitudes, omega } => {
                if amplitudes.len() != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        found: amplitudes.len(),
                    });
                }
                Ok(Forcing {
                    amplitudes: amplitudes.clone(),
                    omega: *omega,
                })
            }
        }
    }
}

/// Model selection and parameters as declared in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Linear {
        #[serde(default = "one")]
        dim: usize,
        rate: f64,
    },
    Nse(NseConfig),
    ReactionDiffusion(ReacDiffConfig),
    Wave(WaveConfig),
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn build(&self) -> Result<Arc<dyn Model>> {
        Ok(match self {
            ModelConfig::Linear { dim, rate } => Arc::new(LinearDecay::new(*dim, *rate)?),
            ModelConfig::Nse(c) => Arc::new(NavierStokes::from_config(c)?),
            ModelConfig::ReactionDiffusion(c) => Arc::new(ReactionDiffusion::from_config(c)?),
            ModelConfig::Wave(c) => Arc::new(Wave::from_config(c)?),
        })
    }
}

type PsiFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Nonnegative, nondecreasing C^1 function with bounded derivative, applied
/// to the model energy.
#[derive(Clone)]
pub struct Psi {
    name: String,
    f: PsiFn,
    df: PsiFn,
}

impl fmt::Debug for Psi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Psi({})", self.name)
    }
}

impl Psi {
    pub fn custom<F, D>(name: impl Into<String>, f: F, df: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    pub fn identity() -> Self {
        Self::custom("identity", |x| x, |_| 1.0)
    }

    pub fn tanh() -> Self {
        Self::custom("tanh", f64::tanh, |x| 1.0 / x.cosh().powi(2))
    }

    /// `x / (1 + x)`.
    pub fn rational() -> Self {
        Self::custom("rational", |x| x / (1.0 + x), |x| 1.0 / ((1.0 + x) * (1.0 + x)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    /// Checks nonnegativity and monotonicity on a grid over `[0, upper]`.
    pub fn validate(&self, upper: f64) -> Result<()> {
        const SAMPLES: usize = 2001;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..SAMPLES {
            let x = upper * i as f64 / (SAMPLES - 1) as f64;
            let (v, d) = (self.value(x), self.derivative(x));
            if !v.is_finite() || !d.is_finite() {
                return Err(Error::Validation(format!("psi {} not finite at {x}", self.name)));
            }
            if v < 0.0 {
                return Err(Error::Validation(format!("psi {} negative at {x}", self.name)));
            }
            if d < 0.0 || v < prev - 1e-12 * prev.abs().max(1.0) {
                return Err(Error::Validation(format!("psi {} decreasing at {x}", self.name)));
            }
            prev = v;
        }
        Ok(())
    }
}

/// Psi as declared in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiConfig {
    Identity,
    Tanh,
    Rational,
}

impl PsiConfig {
    pub fn build(self) -> Psi {
        match self {
            PsiConfig::Identity => Psi::identity(),
            PsiConfig::Tanh => Psi::tanh(),
            PsiConfig::Rational => Psi::rational(),
        }
    }
}

/// The pair `(alpha, beta)` with `alpha = psi(energy)` and
/// `beta = -psi'(energy) * supply`, so that `d/dt alpha + beta <= 0` along
/// solutions.
#[derive(Clone)]
pub struct EnergyPair {
    model: Arc<dyn Model>,
    psi: Psi,
}

impl fmt::Debug for EnergyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EnergyPair({}, {:?})", self.model.name(), self.psi)
    }
}

/// Upper end of the psi validation grid.
const PSI_GRID_UPPER: f64 = 100.0;

pub fn energy_pair(model: Arc<dyn Model>, psi: Psi) -> Result<EnergyPair> {
    psi.validate(PSI_GRID_UPPER)?;
    Ok(EnergyPair { model, psi })
}

impl EnergyPair {
    pub fn alpha(&self, _t: f64, u: &[f64]) -> f64 {
        self.psi.value(self.model.energy(u))
    }

    pub fn beta(&self, t: f64, u: &[f64]) -> f64 {
        -self.psi.derivative(self.model.energy(u)) * self.model.energy_supply(t, u)
    }

    pub fn psi(&self) -> &Psi {
        &self.psi
    }

    pub fn model(&self) -> &Arc<dyn Model> {
        &self.model
    }
}

pub fn z_membership(model: &dyn Model, u: &[f64]) -> bool {
    model.z_member(u)
}
