//! Statistical solutions of evolution equations realized as weighted Dirac
//! ensembles of Galerkin trajectories, with verifiers for the Liouville mean
//! equation, mean energy (in)equalities and initial-time behaviour.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cylinder;
pub mod error;
pub mod experiment;
pub mod measure;
pub mod models;
pub mod numerics;
pub mod statsol;
pub mod trajectory;

pub use cylinder::{bump_1d, Bump1d, CylindricalTestFunction, Euclidean, Pairing};
pub use error::{Error, Result};
pub use measure::{discrepancy, discretize, DiracEnsemble, Sampler, State, TestDictionary, TestFunction};
pub use models::{energy_pair, EnergyPair, Model, Psi};
pub use experiment::{ConfigError, Experiment, ExperimentConfig, Record, Report, Status};
pub use statsol::{solve_ivp, TrajectoryStatSolution};
pub use trajectory::{integrate, Scheme, TimeGrid, Trajectory};
