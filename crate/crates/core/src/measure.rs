//! Discrete Borel probability measures on a finite-dimensional phase space,
//! represented as weighted Dirac ensembles `sum_j w_j delta_{x_j}`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm, pairwise_sum};

/// A phase-space point in model coordinates.
pub type State = Vec<f64>;

/// Generator used by every seeded sampler.
pub type SeededRng = ChaCha8Rng;

/// Normalized weights must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Atoms whose normalized weight falls below this are dropped.
pub const DROP_THRESHOLD: f64 = 1e-15;

const FORMAT_VERSION: u32 = 1;

/// A finite weighted set of phase-space points.
///
/// Weights are nonnegative and sum to one; all atoms share one dimension.
/// Values are immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleDocument", into = "EnsembleDocument")]
pub struct DiracEnsemble {
    atoms: Vec<State>,
    weights: Vec<f64>,
}

impl DiracEnsemble {
    /// Builds an ensemble, normalizing the weights and dropping atoms whose
    /// normalized weight is below [`DROP_THRESHOLD`].
    pub fn new(atoms: Vec<State>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Construction("empty atom list".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::Construction(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if let Some(bad) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.len(),
            });
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Construction(format!("weight {i} is {w}")));
        }
        let total = pairwise_sum(&weights);
        if total <= 0.0 {
            return Err(Error::Construction("weights are all zero".into()));
        }

        let (atoms, weights): (Vec<_>, Vec<_>) = atoms
            .into_iter()
            .zip(weights)
            .map(|(a, w)| (a, w / total))
            .filter(|(_, w)| *w >= DROP_THRESHOLD)
            .unzip();
        let total = pairwise_sum(&weights);
        let weights = if total == 1.0 {
            weights
        } else {
            weights.into_iter().map(|w| w / total).collect()
        };
        Ok(Self { atoms, weights })
    }

    /// Equal-weight ensemble over the given atoms.
    pub fn uniform(atoms: Vec<State>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0; n])
    }

    /// Point mass at `x`.
    pub fn dirac(x: State) -> Self {
        Self {
            atoms: vec![x],
            weights: vec![1.0],
        }
    }

    /// Builds from weights that are already normalized, without touching
    /// their bits. Used for projections and deserialization.
    pub(crate) fn from_normalized(atoms: Vec<State>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::Construction("atom/weight count mismatch".into()));
        }
        let dim = atoms[0].len();
        if let Some(bad) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Construction("negative or non-finite weight".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Construction(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms, weights })
    }

    pub fn atoms(&self) -> &[State] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// `mu(phi) = sum_j w_j phi(x_j)`, summed pairwise in atom order.
    pub fn expectation<F>(&self, phi: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let terms = self
            .atoms
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(index, (x, w))| {
                let value = phi(x);
                if value.is_finite() {
                    Ok(w * value)
                } else {
                    Err(Error::Evaluation { index })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum(&terms))
    }

    /// Push-forward by a state map: atoms are mapped, weights are kept.
    pub fn pushforward<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> State,
    {
        let atoms = self
            .atoms
            .iter()
            .enumerate()
            .map(|(index, x)| {
                let y = map(x);
                if y.iter().all(|v| v.is_finite()) {
                    Ok(y)
                } else {
                    Err(Error::Evaluation { index })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_normalized(atoms, self.weights.clone())
    }

    /// Keeps the atoms inside the closed ball of the given radius and
    /// renormalizes. Returns the discarded mass alongside.
    pub fn tightness_truncate(&self, radius: f64) -> Result<(Self, f64)> {
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("radius must be positive, got {radius}")));
        }
        let mut kept_atoms = Vec::new();
        let mut kept_weights = Vec::new();
        let mut dropped = Vec::new();
        for (x, w) in self.atoms.iter().zip(&self.weights) {
            if norm(x) <= radius {
                kept_atoms.push(x.clone());
                kept_weights.push(*w);
            } else {
                dropped.push(*w);
            }
        }
        if kept_atoms.is_empty() {
            return Err(Error::EmptySupport { radius });
        }
        let defect = pairwise_sum(&dropped);
        let truncated = if dropped.is_empty() {
            self.clone()
        } else {
            Self::new(kept_atoms, kept_weights)?
        };
        Ok((truncated, defect))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Construction(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleDocument {
    version: u32,
    dim: usize,
    atoms: Vec<State>,
    weights: Vec<f64>,
}

impl From<DiracEnsemble> for EnsembleDocument {
    fn from(mu: DiracEnsemble) -> Self {
        Self {
            version: FORMAT_VERSION,
            dim: mu.dim(),
            atoms: mu.atoms,
            weights: mu.weights,
        }
    }
}

impl TryFrom<EnsembleDocument> for DiracEnsemble {
    type Error = Error;

    fn try_from(doc: EnsembleDocument) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(Error::Construction(format!(
                "unsupported ensemble format version {}",
                doc.version
            )));
        }
        let mu = Self::from_normalized(doc.atoms, doc.weights)?;
        if mu.dim() != doc.dim {
            return Err(Error::Dimension {
                expected: doc.dim,
                found: mu.dim(),
            });
        }
        Ok(mu)
    }
}

/// A reproducible source of phase-space states.
pub trait Sampler: Send + Sync {
    fn draw(&self, rng: &mut SeededRng) -> std::result::Result<State, String>;
}

impl<F> Sampler for F
where
    F: Fn(&mut SeededRng) -> std::result::Result<State, String> + Send + Sync,
{
    fn draw(&self, rng: &mut SeededRng) -> std::result::Result<State, String> {
        self(rng)
    }
}

/// Always returns the same state.
#[derive(Debug, Clone)]
pub struct ConstantSampler(pub State);

impl Sampler for ConstantSampler {
    fn draw(&self, _rng: &mut SeededRng) -> std::result::Result<State, String> {
        Ok(self.0.clone())
    }
}

/// Picks one of a fixed list of states with equal probability.
#[derive(Debug, Clone)]
pub struct ChoiceSampler(pub Vec<State>);

impl Sampler for ChoiceSampler {
    fn draw(&self, rng: &mut SeededRng) -> std::result::Result<State, String> {
        use rand::Rng;
        if self.0.is_empty() {
            return Err("no states to choose from".into());
        }
        let i = rng.random_range(0..self.0.len());
        Ok(self.0[i].clone())
    }
}

/// Independent Gaussian coordinates with per-coordinate mean and standard
/// deviation.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: State,
    std: Vec<f64>,
}

impl GaussianSampler {
    pub fn new(mean: State, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                found: std.len(),
            });
        }
        if std.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Invalid("standard deviations must be finite and >= 0".into()));
        }
        Ok(Self { mean, std })
    }
}

impl Sampler for GaussianSampler {
    fn draw(&self, rng: &mut SeededRng) -> std::result::Result<State, String> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(&m, &s)| {
                Normal::new(m, s)
                    .map(|d| d.sample(&mut *rng))
                    .map_err(|e| e.to_string())
            })
            .collect()
    }
}

/// Draws `n` states from `sampler` with a generator seeded by `seed` and
/// returns them as an equal-weight ensemble.
pub fn discretize<S: Sampler + ?Sized>(sampler: &S, n: usize, seed: u64) -> Result<DiracEnsemble> {
    if n == 0 {
        return Err(Error::Invalid("ensemble size must be at least 1".into()));
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    let atoms = (0..n)
        .map(|index| {
            sampler
                .draw(&mut rng)
                .map_err(|reason| Error::Sampler { index, reason })
        })
        .collect::<Result<Vec<_>>>()?;
    let w = 1.0 / n as f64;
    let dim = atoms[0].len();
    if let Some(bad) = atoms.iter().find(|a| a.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: bad.len(),
        });
    }
    // 1/n repeated n times sums to 1 within rounding; keep the exact 1/n bits.
    DiracEnsemble::from_normalized(atoms, vec![w; n])
}

/// Scalar observable on phase space.
pub type Observable = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One entry of a [`TestDictionary`].
#[derive(Clone)]
pub struct TestFunction {
    pub id: String,
    /// Global supremum of `|f|`, when known.
    pub bound: Option<f64>,
    pub f: Observable,
}

impl TestFunction {
    pub fn new<F>(id: impl Into<String>, bound: Option<f64>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            bound,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("bound", &self.bound)
            .finish()
    }
}

/// Finite family of observables standing in for the weak-star topology.
#[derive(Debug, Clone, Default)]
pub struct TestDictionary {
    pub functions: Vec<TestFunction>,
}

impl TestDictionary {
    pub fn new(functions: Vec<TestFunction>) -> Self {
        Self { functions }
    }

    /// Bounded smooth observables: `tanh` and `cos` of the leading
    /// coordinates plus two radial profiles.
    pub fn standard(dim: usize) -> Self {
        let mut functions = Vec::new();
        for i in 0..dim.min(4) {
            functions.push(TestFunction::new(format!("tanh(x{i})"), Some(1.0), move |x: &[f64]| {
                x[i].tanh()
            }));
            functions.push(TestFunction::new(format!("cos(x{i})"), Some(1.0), move |x: &[f64]| {
                x[i].cos()
            }));
        }
        functions.push(TestFunction::new("exp(-|x|^2)", Some(1.0), |x: &[f64]| {
            (-x.iter().map(|v| v * v).sum::<f64>()).exp()
        }));
        functions.push(TestFunction::new("1/(1+|x|^2)", Some(1.0), |x: &[f64]| {
            1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>())
        }));
        Self { functions }
    }

    pub fn ids(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

/// `max_f |mu1(f) - mu2(f)|` over the dictionary.
pub fn discrepancy(mu1: &DiracEnsemble, mu2: &DiracEnsemble, dict: &TestDictionary) -> Result<f64> {
    if dict.is_empty() {
        return Err(Error::Invalid("empty test dictionary".into()));
    }
    if mu1.dim() != mu2.dim() {
        return Err(Error::Dimension {
            expected: mu1.dim(),
            found: mu2.dim(),
        });
    }
    let mut worst: f64 = 0.0;
    for entry in &dict.functions {
        let a = mu1.expectation(|x| (entry.f)(x))?;
        let b = mu2.expectation(|x| (entry.f)(x))?;
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}
