//! Config-driven experiments: build the initial measure, solve on a ladder
//! of halved time steps, run the requested checks and collect one report
//! record per check.

use std::fmt;
use std::io::{self, Write};
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cylinder::{bump_1d, CylindricalTestFunction};
use crate::error::{Error, Result};
use crate::measure::{discrepancy, discretize, DiracEnsemble, GaussianSampler, SeededRng, State, TestDictionary};
use crate::models::{energy_pair, LinearDecay, Model, ModelConfig, NavierStokes, PsiConfig};
use crate::numerics::{dot, fit_order, norm, successive_orders};
use crate::statsol::{solve_ivp, TrajectoryStatSolution};
use crate::trajectory::{apriori_bound_check, Scheme, TimeGrid};

/// Absolute slack added to every data-driven tolerance so that values at
/// rounding level are not judged against a rounding-level estimate.
pub const TOLERANCE_FLOOR: f64 = 1e-12;

/// Safety factor applied to the `dt` versus `dt/2` error estimate.
pub const TOLERANCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelConfig,
    pub initial_measure: InitialMeasureConfig,
    pub grid: TimeGrid,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub dictionary: Vec<TestFunctionConfig>,
    pub checks: Vec<CheckConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_scheme() -> Scheme {
    Scheme::Rk4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialMeasureConfig {
    /// Atoms with optional weights (equal weights when omitted).
    Explicit {
        atoms: Vec<State>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// Independent Gaussian coordinates, `n` equal-weight draws.
    Gaussian {
        #[serde(default)]
        mean: Option<State>,
        std: StdConfig,
        n: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StdConfig {
    PerCoordinate(Vec<f64>),
    /// `scale * (k + 1)^(-decay)` for coordinate `k`.
    Decaying { scale: f64, decay: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub curves: Option<String>,
}

/// Cylindrical test functions whose pairing vectors are coordinate axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionConfig {
    MonomialCutoff {
        coordinate: usize,
        exponent: u32,
        radius: f64,
    },
    ProductCutoff {
        coordinates: [usize; 2],
        exponents: [u32; 2],
        radius: f64,
    },
    RadialBump {
        coordinates: Vec<usize>,
        center: Vec<f64>,
        radius: f64,
    },
    PolyBump {
        coordinates: Vec<usize>,
        exponents: Vec<u32>,
        center: Vec<f64>,
        radius: f64,
    },
    TanhSum {
        coordinates: Vec<usize>,
    },
}

impl TestFunctionConfig {
    pub fn build(&self, dim: usize) -> Result<CylindricalTestFunction> {
        let axes = |cs: &[usize]| -> Result<Vec<State>> {
            cs.iter()
                .map(|&c| {
                    if c >= dim {
                        return Err(Error::Invalid(format!("coordinate {c} outside dimension {dim}")));
                    }
                    let mut e = vec![0.0; dim];
                    e[c] = 1.0;
                    Ok(e)
                })
                .collect()
        };
        match self {
            TestFunctionConfig::MonomialCutoff {
                coordinate,
                exponent,
                radius,
            } => {
                let e = axes(&[*coordinate])?.remove(0);
                CylindricalTestFunction::monomial_cutoff(e, *exponent, *radius)
            }
            TestFunctionConfig::ProductCutoff {
                coordinates,
                exponents,
                radius,
            } => {
                let mut e = axes(coordinates)?;
                let second = e.pop().expect("two axes");
                let first = e.pop().expect("two axes");
                CylindricalTestFunction::product_cutoff([first, second], *exponents, *radius)
            }
            TestFunctionConfig::RadialBump {
                coordinates,
                center,
                radius,
            } => CylindricalTestFunction::radial_bump(axes(coordinates)?, center.clone(), *radius),
            TestFunctionConfig::PolyBump {
                coordinates,
                exponents,
                center,
                radius,
            } => CylindricalTestFunction::poly_bump(
                axes(coordinates)?,
                exponents.clone(),
                center.clone(),
                *radius,
            ),
            TestFunctionConfig::TanhSum { coordinates } => {
                CylindricalTestFunction::tanh_sum(axes(coordinates)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: f64,
    pub half_width: f64,
}

fn psi_identity() -> PsiConfig {
    PsiConfig::Identity
}
fn three() -> usize {
    3
}
fn two() -> usize {
    2
}
fn order_1_8() -> f64 {
    1.8
}
fn order_0_8() -> f64 {
    0.8
}
fn tol_1e_6() -> f64 {
    1e-6
}
fn tol_1e_8() -> f64 {
    1e-8
}
fn tol_1e_10() -> f64 {
    1e-10
}
fn hundred() -> usize {
    100
}
fn mc_sizes() -> Vec<usize> {
    vec![64, 256, 1024]
}
fn four() -> usize {
    4
}
fn eight() -> usize {
    8
}
fn mc_range() -> [f64; 2] {
    [-0.7, -0.3]
}

/// One verification to run. `halvings` is the number of times `dt` is
/// halved to estimate tolerances and orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckConfig {
    /// Final states against the closed-form flow of the linear model.
    LinearOracle {
        #[serde(default = "tol_1e_6")]
        tolerance: f64,
    },
    /// Per-trajectory weak formulation residual over the whole interval.
    WeakResidual {
        #[serde(default = "three")]
        halvings: usize,
        #[serde(default = "order_1_8")]
        min_order: f64,
    },
    /// Liouville mean equation for every dictionary function.
    Liouville {
        #[serde(default = "three")]
        halvings: usize,
        #[serde(default = "order_1_8")]
        min_order: f64,
    },
    /// Worst per-trajectory energy residual over node pairs `(t0, t)`.
    EnergyResidual {
        #[serde(default = "psi_identity")]
        psi: PsiConfig,
        #[serde(default = "three")]
        halvings: usize,
        #[serde(default)]
        min_order: Option<f64>,
    },
    /// Worst `|energy residual|` over trajectories and nodes. For unforced
    /// conservative models this is the drift of the energy.
    EnergyDrift {
        #[serde(default = "psi_identity")]
        psi: PsiConfig,
        #[serde(default = "three")]
        halvings: usize,
        #[serde(default)]
        min_order: Option<f64>,
    },
    /// Mean strengthened energy (in)equality against a bump in time.
    MeanEnergy {
        #[serde(default = "psi_identity")]
        psi: PsiConfig,
        bump: BumpConfig,
        #[serde(default = "three")]
        halvings: usize,
        #[serde(default)]
        min_order: Option<f64>,
    },
    /// `|rho_{t0+dt}(psi(E)) - mu0(psi(E))|` must vanish as `dt -> 0`.
    InitialLimit {
        #[serde(default = "psi_identity")]
        psi: PsiConfig,
        #[serde(default = "three")]
        halvings: usize,
        #[serde(default = "order_0_8")]
        min_order: f64,
    },
    InitialCondition,
    /// Classical energy and enstrophy bounds at every node.
    Apriori {
        #[serde(default = "tol_1e_8")]
        tolerance: f64,
    },
    /// `<B(u,u),u> = 0` on random states.
    BOrthogonality {
        #[serde(default = "hundred")]
        samples: usize,
        #[serde(default = "tol_1e_10")]
        tolerance: f64,
    },
    ZCarrier,
    /// Modulus of continuity of the standard statistics.
    Continuity {
        #[serde(default = "two")]
        halvings: usize,
        #[serde(default = "order_0_8")]
        min_order: f64,
    },
    /// Discrepancy between independent `n` and `factor * n` ensembles at
    /// `time`, averaged over replicates; slope against `n`.
    MonteCarlo {
        time: f64,
        #[serde(default = "mc_sizes")]
        sizes: Vec<usize>,
        #[serde(default = "four")]
        factor: usize,
        #[serde(default = "eight")]
        replicates: usize,
        #[serde(default = "mc_range")]
        slope_range: [f64; 2],
    },
}

impl CheckConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CheckConfig::LinearOracle { .. } => "linear_oracle",
            CheckConfig::WeakResidual { .. } => "weak_residual",
            CheckConfig::Liouville { .. } => "liouville",
            CheckConfig::EnergyResidual { .. } => "energy_residual",
            CheckConfig::EnergyDrift { .. } => "energy_drift",
            CheckConfig::MeanEnergy { .. } => "mean_energy",
            CheckConfig::InitialLimit { .. } => "initial_limit",
            CheckConfig::InitialCondition => "initial_condition",
            CheckConfig::Apriori { .. } => "apriori",
            CheckConfig::BOrthogonality { .. } => "b_orthogonality",
            CheckConfig::ZCarrier => "z_carrier",
            CheckConfig::Continuity { .. } => "continuity",
            CheckConfig::MonteCarlo { .. } => "monte_carlo",
        }
    }

    fn halvings(&self) -> usize {
        match self {
            CheckConfig::WeakResidual { halvings, .. }
            | CheckConfig::Liouville { halvings, .. }
            | CheckConfig::EnergyResidual { halvings, .. }
            | CheckConfig::EnergyDrift { halvings, .. }
            | CheckConfig::MeanEnergy { halvings, .. }
            | CheckConfig::InitialLimit { halvings, .. }
            | CheckConfig::Continuity { halvings, .. } => *halvings,
            _ => 0,
        }
    }

    /// Checks whose value does not depend on the time step.
    fn step_independent(&self) -> bool {
        matches!(
            self,
            CheckConfig::BOrthogonality { .. } | CheckConfig::MonteCarlo { .. }
        )
    }
}

/// Config problem with a location, reported with exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn semantic(path: &str, message: impl fmt::Display) -> Self {
        Self {
            path: Some(path.to_string()),
            line: None,
            column: None,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "at `{p}`: ")?;
        }
        write!(f, "{}", self.message)?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " (line {l}, column {c})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Parses JSON, reporting the offending field path and position.
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            let message = match message.rfind(" at line ") {
                Some(i) => message[..i].to_string(),
                None => message,
            };
            ConfigError {
                path: (path != ".").then_some(path),
                line: Some(inner.line()),
                column: Some(inner.column()),
                message,
            }
        })
    }
}

/// A validated config with its model, initial measure and dictionary built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    model: Arc<dyn Model>,
    mu0: DiracEnsemble,
    sampler: Option<GaussianSampler>,
    dictionary: Vec<CylindricalTestFunction>,
    seed: u64,
}

fn build_sampler(
    dim: usize,
    mean: &Option<State>,
    std: &StdConfig,
) -> std::result::Result<GaussianSampler, ConfigError> {
    let mean = mean.clone().unwrap_or_else(|| vec![0.0; dim]);
    if mean.len() != dim {
        return Err(ConfigError::semantic(
            "initial_measure.mean",
            format!("expected {dim} coordinates, found {}", mean.len()),
        ));
    }
    let std = match std {
        StdConfig::PerCoordinate(s) => s.clone(),
        StdConfig::Decaying { scale, decay } => {
            (0..dim).map(|k| scale * ((k + 1) as f64).powf(-decay)).collect()
        }
    };
    GaussianSampler::new(mean, std).map_err(|e| ConfigError::semantic("initial_measure.std", e))
}

impl Experiment {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        Self::new(ExperimentConfig::from_json(text)?)
    }

    pub fn new(config: ExperimentConfig) -> std::result::Result<Self, ConfigError> {
        let model = config
            .model
            .build()
            .map_err(|e| ConfigError::semantic("model", e))?;
        let dim = model.dim();
        config
            .grid
            .validate()
            .map_err(|e| ConfigError::semantic("grid", e))?;

        let (mu0, sampler, seed) = match &config.initial_measure {
            InitialMeasureConfig::Explicit { atoms, weights } => {
                if let Some(bad) = atoms.iter().position(|a| a.len() != dim) {
                    return Err(ConfigError::semantic(
                        &format!("initial_measure.atoms[{bad}]"),
                        format!("expected {dim} coordinates, found {}", atoms[bad].len()),
                    ));
                }
                let mu = match weights {
                    Some(w) => DiracEnsemble::new(atoms.clone(), w.clone()),
                    None => DiracEnsemble::uniform(atoms.clone()),
                }
                .map_err(|e| ConfigError::semantic("initial_measure", e))?;
                (mu, None, 0)
            }
            InitialMeasureConfig::Gaussian { mean, std, n, seed } => {
                let sampler = build_sampler(dim, mean, std)?;
                let mu = discretize(&sampler, *n, *seed)
                    .map_err(|e| ConfigError::semantic("initial_measure", e))?;
                (mu, Some(sampler), *seed)
            }
        };

        let dictionary = config
            .dictionary
            .iter()
            .enumerate()
            .map(|(i, d)| d.build(dim).map_err(|e| ConfigError::semantic(&format!("dictionary[{i}]"), e)))
            .collect::<std::result::Result<Vec<_>, _>>()?;

        if config.checks.is_empty() {
            return Err(ConfigError::semantic("checks", "at least one check is required"));
        }
        for (i, check) in config.checks.iter().enumerate() {
            let path = format!("checks[{i}]");
            let needs = |ok: bool, what: &str| {
                if ok {
                    Ok(())
                } else {
                    Err(ConfigError::semantic(&path, format!("`{}` needs {what}", check.name())))
                }
            };
            match check {
                CheckConfig::LinearOracle { .. } => {
                    needs(model.as_any().is::<LinearDecay>(), "the linear model")?
                }
                CheckConfig::Apriori { .. } | CheckConfig::BOrthogonality { .. } => {
                    needs(model.as_any().is::<NavierStokes>(), "the nse model")?
                }
                CheckConfig::Liouville { .. } => needs(!dictionary.is_empty(), "a nonempty dictionary")?,
                CheckConfig::MeanEnergy { bump, .. } => {
                    let b = bump_1d(bump.center, bump.half_width)
                        .map_err(|e| ConfigError::semantic(&path, e))?;
                    let (lo, hi) = b.support();
                    needs(
                        lo >= config.grid.t0 && hi <= config.grid.end(),
                        "a bump supported inside the time grid",
                    )?;
                }
                CheckConfig::MonteCarlo {
                    time,
                    sizes,
                    factor,
                    replicates,
                    ..
                } => {
                    needs(sampler.is_some(), "a gaussian initial measure")?;
                    needs(
                        sizes.len() >= 2 && sizes.iter().all(|n| *n > 0) && *factor >= 2 && *replicates >= 1,
                        "at least two positive sizes, factor >= 2 and replicates >= 1",
                    )?;
                    config
                        .grid
                        .index_of(*time)
                        .map_err(|e| ConfigError::semantic(&path, e))?;
                }
                _ => {}
            }
        }

        Ok(Self {
            config,
            model,
            mu0,
            sampler,
            dictionary,
            seed,
        })
    }

    pub fn model(&self) -> &Arc<dyn Model> {
        &self.model
    }

    pub fn initial_measure(&self) -> &DiracEnsemble {
        &self.mu0
    }

    pub fn dictionary(&self) -> &[CylindricalTestFunction] {
        &self.dictionary
    }

    fn grid_at(&self, level: usize) -> TimeGrid {
        let mut g = self.config.grid;
        for _ in 0..level {
            g = g.halved();
        }
        g
    }

    /// Runs every check with its own number of halvings.
    pub fn run(&self) -> Report {
        self.execute(None)
    }

    /// Runs every check on `dt, dt/2, ..., dt/2^halvings`.
    pub fn study(&self, halvings: usize) -> Report {
        self.execute(Some(halvings))
    }

    fn execute(&self, study: Option<usize>) -> Report {
        let deepest = self
            .config
            .checks
            .iter()
            .map(|c| study.unwrap_or_else(|| c.halvings().max(1)))
            .max()
            .unwrap_or(0);
        let cache: Vec<OnceLock<Result<Arc<TrajectoryStatSolution>>>> =
            (0..=deepest).map(|_| OnceLock::new()).collect();
        let solve = |level: usize| -> Result<Arc<TrajectoryStatSolution>> {
            cache[level]
                .get_or_init(|| {
                    solve_ivp(self.model.clone(), &self.mu0, &self.grid_at(level), self.config.scheme)
                        .map(Arc::new)
                })
                .clone()
        };

        let mut records = Vec::new();
        let mut failed = false;
        let mut numerical = false;
        for check in &self.config.checks {
            let levels = if check.step_independent() {
                1
            } else {
                match study {
                    Some(h) => h + 1,
                    None => match check {
                        CheckConfig::WeakResidual { .. }
                        | CheckConfig::Liouville { .. }
                        | CheckConfig::EnergyResidual { .. }
                        | CheckConfig::EnergyDrift { .. }
                        | CheckConfig::MeanEnergy { .. }
                        | CheckConfig::InitialLimit { .. }
                        | CheckConfig::Continuity { .. } => check.halvings().max(1) + 1,
                        _ => 1,
                    },
                }
            };
            match self.evaluate(check, levels, &solve) {
                Ok(outcomes) => {
                    for o in outcomes {
                        let rec = self.record(check, o, study.is_some());
                        failed |= !rec.pass;
                        records.push(rec);
                    }
                }
                Err(e) => {
                    numerical = true;
                    records.push(Record {
                        check: check.name().to_string(),
                        target: None,
                        model: self.model.name().to_string(),
                        params: self.params(check),
                        value: None,
                        tolerance: 0.0,
                        order_estimate: None,
                        pass: false,
                        seed: self.seed,
                        dt: None,
                        values: None,
                        successive_orders: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        let status = if numerical {
            Status::NumericalFailure
        } else if failed {
            Status::CheckFailed
        } else {
            Status::Pass
        };
        let curves = solve(0).ok().and_then(|rho| self.curves(&rho).ok());
        Report {
            records,
            status,
            curves,
        }
    }

    fn params(&self, check: &CheckConfig) -> Value {
        json!({
            "model": self.model.params(),
            "grid": self.config.grid,
            "scheme": self.config.scheme,
            "atoms": self.mu0.len(),
            "check": check,
        })
    }

    fn record(&self, check: &CheckConfig, o: Outcome, study: bool) -> Record {
        let dts: Vec<f64> = (0..o.values.len()).map(|l| self.grid_at(l).dt).collect();
        let (tolerance, order, pass) = o.judge(&dts);
        Record {
            check: check.name().to_string(),
            target: o.target,
            model: self.model.name().to_string(),
            params: self.params(check),
            value: Some(o.values[0]),
            tolerance,
            order_estimate: order,
            pass,
            seed: self.seed,
            dt: study.then(|| dts.clone()),
            successive_orders: study.then(|| successive_orders(&o.values)),
            values: study.then_some(o.values),
            error: None,
        }
    }

    fn evaluate<S>(&self, check: &CheckConfig, levels: usize, solve: &S) -> Result<Vec<Outcome>>
    where
        S: Fn(usize) -> Result<Arc<TrajectoryStatSolution>>,
    {
        let model = &self.model;
        let equality = model.energy_is_equality();
        let per_level = |f: &dyn Fn(&TrajectoryStatSolution) -> Result<f64>| -> Result<Vec<f64>> {
            (0..levels)
                .map(|l| -> Result<f64> {
                    let rho = solve(l)?;
                    f(&rho)
                })
                .collect()
        };
        Ok(match check {
            CheckConfig::LinearOracle { tolerance } => {
                let linear = model
                    .as_any()
                    .downcast_ref::<LinearDecay>()
                    .expect("validated as linear");
                let values = per_level(&|rho| {
                    let g = rho.grid();
                    let end = rho.project(g.steps)?;
                    let exact = self.mu0.pushforward(|u| linear.flow(g.end() - g.t0, u))?;
                    Ok(end
                        .atoms()
                        .iter()
                        .zip(exact.atoms())
                        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
                        .fold(0.0, f64::max))
                })?;
                vec![Outcome::new(None, values, Rule::AtMost(*tolerance))]
            }
            CheckConfig::WeakResidual { min_order, .. } => {
                let values = per_level(&|rho| Ok(rho.max_weak_residual()))?;
                vec![Outcome::new(None, values, Rule::Quadrature { signed: false, min_order: Some(*min_order) })]
            }
            CheckConfig::Liouville { min_order, .. } => {
                let mut out = Vec::new();
                let sols = (0..levels).map(solve).collect::<Result<Vec<_>>>()?;
                for phi in &self.dictionary {
                    let values = sols
                        .iter()
                        .map(|rho| rho.liouville_residual(phi, 0, rho.grid().steps))
                        .collect::<Result<Vec<_>>>()?;
                    out.push(Outcome::new(
                        Some(phi.label().to_string()),
                        values,
                        Rule::Quadrature { signed: false, min_order: Some(*min_order) },
                    ));
                }
                out
            }
            CheckConfig::EnergyResidual { psi, min_order, .. } => {
                let pair = energy_pair(model.clone(), psi.build())?;
                let values = per_level(&|rho| {
                    let mut worst: f64 = 0.0;
                    for tr in rho.trajectories() {
                        let r = crate::trajectory::worst_energy_residual(&pair, tr)?;
                        let better = if equality { r.abs() > worst.abs() } else { r > worst };
                        if better {
                            worst = r;
                        }
                    }
                    Ok(worst)
                })?;
                let min_order = min_order.or(equality.then_some(1.8));
                vec![Outcome::new(
                    Some(pair.psi().name().to_string()),
                    values,
                    Rule::Quadrature { signed: !equality, min_order },
                )]
            }
            CheckConfig::EnergyDrift { psi, min_order, .. } => {
                let pair = energy_pair(model.clone(), psi.build())?;
                let values = per_level(&|rho| {
                    let mut worst: f64 = 0.0;
                    for tr in rho.trajectories() {
                        worst = worst.max(crate::trajectory::worst_energy_residual(&pair, tr)?.abs());
                    }
                    Ok(worst)
                })?;
                vec![Outcome::new(
                    Some(pair.psi().name().to_string()),
                    values,
                    Rule::Quadrature { signed: false, min_order: *min_order },
                )]
            }
            CheckConfig::MeanEnergy {
                psi, bump, min_order, ..
            } => {
                let pair = energy_pair(model.clone(), psi.build())?;
                let b = bump_1d(bump.center, bump.half_width)?;
                let values = per_level(&|rho| rho.mean_energy_check(&pair, &b))?;
                let min_order = min_order.or(equality.then_some(1.8));
                vec![Outcome::new(
                    Some(pair.psi().name().to_string()),
                    values,
                    Rule::Quadrature { signed: !equality, min_order },
                )]
            }
            CheckConfig::InitialLimit { psi, min_order, .. } => {
                let pair = energy_pair(model.clone(), psi.build())?;
                let values = per_level(&|rho| rho.initial_limit_check(&pair))?;
                vec![Outcome::new(
                    Some(pair.psi().name().to_string()),
                    values,
                    Rule::Quadrature { signed: false, min_order: Some(*min_order) },
                )]
            }
            CheckConfig::InitialCondition => {
                let values = per_level(&|rho| rho.initial_condition_check(&self.mu0))?;
                vec![Outcome::new(None, values, Rule::Exactly(0.0))]
            }
            CheckConfig::Apriori { tolerance } => {
                let nse = model
                    .as_any()
                    .downcast_ref::<NavierStokes>()
                    .expect("validated as nse");
                let values = per_level(&|rho| {
                    let mut worst = f64::INFINITY;
                    // The margin at t0 is zero by construction.
                    for tr in rho.trajectories() {
                        for i in 1..tr.grid.len() {
                            worst = worst.min(apriori_bound_check(nse, tr, i)?);
                        }
                    }
                    Ok(worst)
                })?;
                vec![Outcome::new(None, values, Rule::NotBelow(*tolerance))]
            }
            CheckConfig::BOrthogonality { samples, tolerance } => {
                let nse = model
                    .as_any()
                    .downcast_ref::<NavierStokes>()
                    .expect("validated as nse");
                let value = b_orthogonality(nse, *samples, self.seed)?;
                vec![Outcome::new(None, vec![value], Rule::AtMost(*tolerance))]
            }
            CheckConfig::ZCarrier => {
                let values = per_level(&|rho| Ok(rho.z_carrier_fraction()))?;
                vec![Outcome::new(None, values, Rule::Exactly(1.0))]
            }
            CheckConfig::Continuity { min_order, .. } => {
                let dict = TestDictionary::standard(model.dim());
                let values = per_level(&|rho| {
                    let mut worst: f64 = 0.0;
                    for f in &dict.functions {
                        worst = worst.max(rho.statistic_curve(|u| (f.f)(u))?.modulus);
                    }
                    Ok(worst)
                })?;
                vec![Outcome::new(
                    None,
                    values,
                    Rule::Quadrature { signed: false, min_order: Some(*min_order) },
                )]
            }
            CheckConfig::MonteCarlo {
                time,
                sizes,
                factor,
                replicates,
                slope_range,
            } => {
                let d = self.monte_carlo(*time, sizes, *factor, *replicates)?;
                let n: Vec<f64> = sizes.iter().map(|n| *n as f64).collect();
                let slope = fit_order(&n, &d).ok_or_else(|| {
                    Error::Invalid(format!("no slope from discrepancies {d:?}"))
                })?;
                vec![Outcome::new(None, vec![slope], Rule::Range(*slope_range))]
            }
        })
    }

    /// Mean discrepancy between independent ensembles of size `n` and
    /// `factor * n` at `time`, one value per size.
    pub fn monte_carlo(&self, time: f64, sizes: &[usize], factor: usize, replicates: usize) -> Result<Vec<f64>> {
        let sampler = self
            .sampler
            .as_ref()
            .ok_or_else(|| Error::Invalid("monte carlo needs a sampler".into()))?;
        let g = self.config.grid;
        let grid = TimeGrid::new(g.t0, g.dt, g.index_of(time)?)?;
        let dict = TestDictionary::standard(self.model.dim());
        let mut seeds = SeededRng::seed_from_u64(self.seed);
        sizes
            .iter()
            .map(|&n| {
                let mut total = 0.0;
                for _ in 0..replicates {
                    let (s1, s2): (u64, u64) = (seeds.random(), seeds.random());
                    let small = discretize(sampler, n, s1)?;
                    let large = discretize(sampler, factor * n, s2)?;
                    let a = solve_ivp(self.model.clone(), &small, &grid, self.config.scheme)?;
                    let b = solve_ivp(self.model.clone(), &large, &grid, self.config.scheme)?;
                    total += discrepancy(&a.project(grid.steps)?, &b.project(grid.steps)?, &dict)?;
                }
                Ok(total / replicates as f64)
            })
            .collect()
    }

    fn curves(&self, rho: &TrajectoryStatSolution) -> Result<String> {
        let dict = TestDictionary::standard(self.model.dim());
        let columns = dict
            .functions
            .iter()
            .map(|f| rho.statistic_curve(|u| (f.f)(u)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = String::from("t");
        for f in &dict.functions {
            out.push(',');
            out.push_str(&f.id.replace(',', ";"));
        }
        out.push('\n');
        for (i, t) in rho.grid().nodes().enumerate() {
            out.push_str(&format!("{t:.16e}"));
            for c in &columns {
                out.push_str(&format!(",{:.16e}", c.values[i]));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Largest `|<B(u,u),u>| / (|B(u,u)| |u|)` over seeded random states.
pub fn b_orthogonality(nse: &NavierStokes, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let dim = nse.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let u: State = (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let b = nse.bilinear(&u, &u);
        let denom = norm(&b) * norm(&u);
        if denom > 0.0 {
            worst = worst.max(dot(&b, &u).abs() / denom);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rule {
    /// Value within `10 |v(dt) - v(dt/2)|` plus the floor; one-sided when
    /// `signed`. Optionally a minimum convergence order.
    Quadrature { signed: bool, min_order: Option<f64> },
    AtMost(f64),
    /// Every value `>= -tol`.
    NotBelow(f64),
    Exactly(f64),
    Range([f64; 2]),
}

#[derive(Debug, Clone)]
struct Outcome {
    target: Option<String>,
    values: Vec<f64>,
    rule: Rule,
}

impl Outcome {
    fn new(target: Option<String>, values: Vec<f64>, rule: Rule) -> Self {
        Self { target, values, rule }
    }

    /// `(tolerance, order_estimate, pass)`.
    fn judge(&self, dts: &[f64]) -> (f64, Option<f64>, bool) {
        let v = &self.values;
        let fitted = fit_order(dts, v);
        match self.rule {
            Rule::Quadrature { signed, min_order } => {
                let estimate = if v.len() >= 2 { (v[0] - v[1]).abs() } else { 0.0 };
                let tol = TOLERANCE_FACTOR * estimate + TOLERANCE_FLOOR;
                let within = if signed { v[0] <= tol } else { v[0].abs() <= tol };
                let negligible = v.iter().all(|x| x.abs() <= TOLERANCE_FLOOR);
                let order_ok = match min_order {
                    None => true,
                    Some(p) => negligible || fitted.is_some_and(|o| o >= p),
                };
                (tol, fitted, within && order_ok)
            }
            Rule::AtMost(t) => (t, fitted, v[0] <= t),
            Rule::NotBelow(t) => (t, None, v.iter().all(|x| *x >= -t)),
            Rule::Exactly(x) => (0.0, None, v.iter().all(|y| *y == x)),
            Rule::Range([lo, hi]) => (0.5 * (hi - lo), Some(v[0]), v[0] >= lo && v[0] <= hi),
        }
    }
}

/// One NDJSON line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub check: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub model: String,
    pub params: Value,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub order_estimate: Option<f64>,
    pub pass: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub successive_orders: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    CheckFailed,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 1,
            Status::NumericalFailure => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub records: Vec<Record>,
    pub status: Status,
    /// CSV of the standard statistics along the base grid.
    pub curves: Option<String>,
}

impl Report {
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn find(&self, check: &str) -> impl Iterator<Item = &Record> {
        let check = check.to_string();
        self.records.iter().filter(move |r| r.check == check)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = r#"{
        "model": {"name": "linear", "rate": 1.0},
        "initial_measure": {"kind": "explicit", "atoms": [[1.0], [3.0]], "weights": [0.5, 0.5]},
        "grid": {"t0": 0.0, "dt": 0.01, "steps": 100},
        "scheme": "rk4",
        "dictionary": [{"family": "monomial_cutoff", "coordinate": 0, "exponent": 2, "radius": 5.0}],
        "checks": [
            {"check": "linear_oracle"},
            {"check": "liouville"},
            {"check": "initial_condition"},
            {"check": "z_carrier"}
        ]
    }"#;

    #[test]
    fn linear_config_passes() {
        let exp = Experiment::from_json(LINEAR).unwrap();
        let report = exp.run();
        assert_eq!(report.status, Status::Pass, "{}", report.to_ndjson());
        let liouville = report.find("liouville").next().unwrap();
        assert!(liouville.order_estimate.unwrap() >= 1.8);
        assert!(report.curves.as_ref().unwrap().starts_with("t,tanh(x0)"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = LINEAR.replace("\"scheme\": \"rk4\"", "\"scheme\": \"rk4\", \"bogus\": 1");
        let e = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(e.message.contains("bogus"), "{e}");
        assert!(e.line.is_some());
        let text = LINEAR.replace("\"dt\": 0.01", "\"dt\": \"fast\"");
        let e = ExperimentConfig::from_json(&text).unwrap_err();
        assert_eq!(e.path.as_deref(), Some("grid.dt"));
        let text = LINEAR.replace("linear_oracle", "no_such_check");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn semantic_errors() {
        let text = LINEAR.replace("\"dt\": 0.01", "\"dt\": -0.01");
        let e = Experiment::from_json(&text).unwrap_err();
        assert_eq!(e.path.as_deref(), Some("grid"));
        let text = LINEAR.replace("[[1.0], [3.0]]", "[[1.0], [3.0, 1.0]]");
        assert!(Experiment::from_json(&text).is_err());
        let text = LINEAR.replace("{\"check\": \"z_carrier\"}", "{\"check\": \"apriori\"}");
        assert!(Experiment::from_json(&text).is_err());
    }

    #[test]
    fn study_reports_orders() {
        let exp = Experiment::from_json(LINEAR).unwrap();
        let report = exp.study(2);
        let rec = report.find("liouville").next().unwrap();
        let values = rec.values.as_ref().unwrap();
        assert_eq!(values.len(), 3);
        for o in rec.successive_orders.as_ref().unwrap() {
            assert!((o.unwrap() - 2.0).abs() < 0.1);
        }
    }

    #[test]
    fn frozen_dynamics_have_null_order() {
        let text = LINEAR.replace("\"rate\": 1.0", "\"rate\": 0.0").replace(
            "{\"check\": \"linear_oracle\"},",
            "",
        );
        let report = Experiment::from_json(&text).unwrap().study(2);
        let rec = report.find("liouville").next().unwrap();
        assert!(rec.values.as_ref().unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(rec.order_estimate, None);
        assert!(rec.pass);
    }

    #[test]
    fn numerical_failure_is_reported() {
        let text = LINEAR
            .replace("\"rate\": 1.0", "\"rate\": -40.0")
            .replace("\"dt\": 0.01", "\"dt\": 0.1");
        let report = Experiment::from_json(&text).unwrap().run();
        assert_eq!(report.status, Status::NumericalFailure);
        assert!(report.records[0].error.is_some());
        assert_eq!(report.records[0].value, None);
    }
}
