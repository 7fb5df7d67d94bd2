//! Trajectory statistical solutions built from initial ensembles, their
//! phase-space projections, and the verifiers run on them.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cylinder::{Bump1d, CylindricalTestFunction};
use crate::error::{Error, Result};
use crate::measure::{discrepancy, DiracEnsemble, State, TestDictionary};
use crate::models::{EnergyPair, Model};
use crate::numerics::{norm, pairwise_sum, trapezoid};
use crate::trajectory::{integrate, Scheme, TimeGrid, Trajectory};

/// Per-trajectory evidence that an integrated path is an approximate
/// solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    /// Worst `|<u(t) - u(t0), e_k> - int <F, e_k>|` over coordinates and nodes.
    pub weak_residual: f64,
    /// Worst signed energy residual on `[t0, t]` with the identity `psi`.
    pub energy_residual: f64,
    /// Steps that jump further than the local rate allows.
    pub continuity_violations: usize,
    /// Whether every node lies in the model's admissible set.
    pub z_carried: bool,
}

/// Weighted ensemble of trajectories on a common grid.
#[derive(Debug, Clone)]
pub struct TrajectoryStatSolution {
    model: Arc<dyn Model>,
    scheme: Scheme,
    grid: TimeGrid,
    trajectories: Vec<Trajectory>,
    weights: Vec<f64>,
    /// `rates[j][i] = F(t_i, u_j(t_i))`.
    rates: Vec<Vec<State>>,
    certificates: Vec<Certificate>,
}

/// Lifts every atom of `mu0` to a trajectory and keeps its weight.
/// Trajectories are integrated in parallel and stored in atom order.
pub fn solve_ivp(
    model: Arc<dyn Model>,
    mu0: &DiracEnsemble,
    grid: &TimeGrid,
    scheme: Scheme,
) -> Result<TrajectoryStatSolution> {
    grid.validate()?;
    let solved = mu0
        .atoms()
        .par_iter()
        .enumerate()
        .map(|(atom, u0)| {
            let lift = || -> Result<(Trajectory, Vec<State>, Certificate)> {
                let traj = integrate(model.as_ref(), u0, grid, scheme)?;
                let rates = traj
                    .states
                    .iter()
                    .enumerate()
                    .map(|(i, u)| model.rhs(grid.node(i), u))
                    .collect::<Result<Vec<_>>>()?;
                let cert = certify(model.as_ref(), &traj, &rates);
                Ok((traj, rates, cert))
            };
            lift().map_err(|e| Error::Atom {
                atom,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trajectories = Vec::with_capacity(solved.len());
    let mut rates = Vec::with_capacity(solved.len());
    let mut certificates = Vec::with_capacity(solved.len());
    for (t, r, c) in solved {
        trajectories.push(t);
        rates.push(r);
        certificates.push(c);
    }
    Ok(TrajectoryStatSolution {
        model,
        scheme,
        grid: *grid,
        trajectories,
        weights: mu0.weights().to_vec(),
        rates,
        certificates,
    })
}

fn certify(model: &dyn Model, traj: &Trajectory, rates: &[State]) -> Certificate {
    let g = &traj.grid;
    let pairing = model.pairing();
    let d = model.dim();
    let mut e = vec![0.0; d];
    let mut weak: f64 = 0.0;
    for k in 0..d {
        e[k] = 1.0;
        let start = pairing.pair(&traj.states[0], &e);
        let mut integral = 0.0;
        let mut prev = pairing.pair(&rates[0], &e);
        for i in 1..g.len() {
            let cur = pairing.pair(&rates[i], &e);
            integral += 0.5 * g.dt * (prev + cur);
            prev = cur;
            let r = pairing.pair(&traj.states[i], &e) - start - integral;
            weak = weak.max(r.abs());
        }
        e[k] = 0.0;
    }

    let alpha0 = model.energy(&traj.states[0]);
    let mut integral = 0.0;
    let mut prev = -model.energy_supply(g.node(0), &traj.states[0]);
    let mut energy: f64 = 0.0;
    for i in 1..g.len() {
        let cur = -model.energy_supply(g.node(i), &traj.states[i]);
        integral += 0.5 * g.dt * (prev + cur);
        prev = cur;
        let r = model.energy(&traj.states[i]) - alpha0 + integral;
        if r.abs() > energy.abs() {
            energy = r;
        }
    }

    let mut violations = 0;
    for i in 0..g.steps {
        let jump: Vec<f64> = traj.states[i + 1]
            .iter()
            .zip(&traj.states[i])
            .map(|(a, b)| a - b)
            .collect();
        let bound = 10.0 * g.dt * norm(&rates[i]).max(norm(&rates[i + 1]));
        if norm(&jump) > bound {
            violations += 1;
        }
    }

    Certificate {
        weak_residual: weak,
        energy_residual: energy,
        continuity_violations: violations,
        z_carried: traj.states.iter().all(|u| model.z_member(u)),
    }
}

fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    let terms: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v).collect();
    pairwise_sum(&terms)
}

/// Time series of one statistic with its discrete modulus of continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `max_i |values[i+1] - values[i]|`.
    pub modulus: f64,
}

impl TrajectoryStatSolution {
    pub fn model(&self) -> &Arc<dyn Model> {
        &self.model
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn certificates(&self) -> &[Certificate] {
        &self.certificates
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn max_weak_residual(&self) -> f64 {
        self.certificates.iter().map(|c| c.weak_residual).fold(0.0, f64::max)
    }

    pub fn max_energy_residual(&self) -> f64 {
        self.certificates
            .iter()
            .map(|c| c.energy_residual.abs())
            .fold(0.0, f64::max)
    }

    /// Phase measure at node `i`: trajectory states with the parent weights.
    pub fn project(&self, i: usize) -> Result<DiracEnsemble> {
        self.grid.check_index(i)?;
        let atoms = self.trajectories.iter().map(|tr| tr.states[i].clone()).collect();
        DiracEnsemble::from_normalized(atoms, self.weights.clone())
    }

    /// Phase measure at time `t`, which must be a grid node.
    pub fn project_at(&self, t: f64) -> Result<DiracEnsemble> {
        self.project(self.grid.index_of(t)?)
    }

    /// Lazily projected family `i -> rho_{t_i}`.
    pub fn phase_measures(&self) -> impl Iterator<Item = Result<DiracEnsemble>> + '_ {
        (0..self.grid.len()).map(|i| self.project(i))
    }

    /// `sum_j w_j f(t_i, u_j(t_i), F_j(t_i))` for every node in `i1..=i2`.
    fn node_means<F>(&self, i1: usize, i2: usize, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64, &[f64], &[f64]) -> Result<f64> + Sync,
    {
        (i1..=i2)
            .into_par_iter()
            .map(|i| {
                let t = self.grid.node(i);
                let values = self
                    .trajectories
                    .iter()
                    .zip(&self.rates)
                    .enumerate()
                    .map(|(index, (tr, r))| {
                        let v = f(t, &tr.states[i], &r[i])?;
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::Evaluation { index })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(weighted_sum(&self.weights, &values))
            })
            .collect()
    }

    fn check_nodes(&self, i1: usize, i2: usize) -> Result<()> {
        self.grid.check_index(i1)?;
        self.grid.check_index(i2)?;
        if i1 > i2 {
            return Err(Error::Invalid(format!("node {i1} is after node {i2}")));
        }
        Ok(())
    }

    /// `|rho_{t2}(Phi) - rho_{t1}(Phi) - int rho_s(<F(s,.), Phi'>) ds|`.
    pub fn liouville_residual(&self, phi: &CylindricalTestFunction, i1: usize, i2: usize) -> Result<f64> {
        self.check_nodes(i1, i2)?;
        if i1 == i2 {
            return Ok(0.0);
        }
        let pairing = self.model.pairing();
        let fluxes = self.node_means(i1, i2, |_, u, rate| phi.pair_with_grad(rate, u, pairing))?;
        let ends = [i1, i2]
            .iter()
            .map(|&i| {
                let values = self
                    .trajectories
                    .iter()
                    .map(|tr| phi.eval(&tr.states[i], pairing))
                    .collect::<Result<Vec<_>>>()?;
                Ok(weighted_sum(&self.weights, &values))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((ends[1] - ends[0] - trapezoid(&fluxes, self.grid.dt)).abs())
    }

    /// `t_i -> rho_{t_i}(phi)`.
    pub fn statistic_curve<F>(&self, phi: F) -> Result<StatisticCurve>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values = self.node_means(0, self.grid.steps, |_, u, _| Ok(phi(u)))?;
        let modulus = values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        Ok(StatisticCurve {
            times: self.grid.nodes().collect(),
            values,
            modulus,
        })
    }

    /// Discrete left side of the mean energy inequality tested against a
    /// nonnegative bump `phi` in time:
    /// `-int phi'(s) rho_s(alpha) ds + int phi(s) rho_s(beta) ds`.
    /// Nonpositive for inequality models, zero for equality models, up to
    /// discretization error.
    pub fn mean_energy_check(&self, pair: &EnergyPair, bump: &Bump1d) -> Result<f64> {
        let (a, b) = bump.support();
        let tol = 1e-9 * self.grid.dt;
        if a < self.grid.t0 - tol || b > self.grid.end() + tol {
            return Err(Error::Invalid(format!(
                "bump support [{a}, {b}] exceeds the time grid [{}, {}]",
                self.grid.t0,
                self.grid.end()
            )));
        }
        let samples = self.node_means(0, self.grid.steps, |t, u, _| {
            let (phi, dphi) = (bump.value(t), bump.derivative(t));
            if phi == 0.0 && dphi == 0.0 {
                return Ok(0.0);
            }
            Ok(-dphi * pair.alpha(t, u) + phi * pair.beta(t, u))
        })?;
        Ok(trapezoid(&samples, self.grid.dt))
    }

    /// `|rho_{t0+dt}(alpha) - rho_{t0}(alpha)|`.
    pub fn initial_limit_check(&self, pair: &EnergyPair) -> Result<f64> {
        let means = self.node_means(0, 1, |t, u, _| Ok(pair.alpha(t, u)))?;
        Ok((means[1] - means[0]).abs())
    }

    /// Discrepancy between the projection at `t0` and `mu0` over the
    /// standard dictionary.
    pub fn initial_condition_check(&self, mu0: &DiracEnsemble) -> Result<f64> {
        let rho0 = self.project(0)?;
        discrepancy(&rho0, mu0, &TestDictionary::standard(mu0.dim()))
    }

    /// Fraction of `(node, atom)` pairs inside the admissible set.
    pub fn z_carrier_fraction(&self) -> f64 {
        let total = self.grid.len() * self.trajectories.len();
        let inside: usize = self
            .trajectories
            .iter()
            .map(|tr| tr.states.iter().filter(|u| self.model.z_member(u)).count())
            .sum();
        inside as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cylinder::bump_1d;
    use crate::models::{energy_pair, Forcing, LinearDecay, Psi, Reaction, ReactionDiffusion};
    use crate::numerics::fit_order;
    use std::f64::consts::PI;

    fn linear(rate: f64) -> Arc<dyn Model> {
        Arc::new(LinearDecay::new(1, rate).unwrap())
    }

    fn two_point() -> DiracEnsemble {
        DiracEnsemble::new(vec![vec![1.0], vec![3.0]], vec![0.5, 0.5]).unwrap()
    }

    fn smooth_phi() -> CylindricalTestFunction {
        CylindricalTestFunction::monomial_cutoff(vec![1.0], 2, 5.0).unwrap()
    }

    #[test]
    fn dirac_initial_measure_gives_one_trajectory() {
        let mu0 = DiracEnsemble::dirac(vec![2.0]);
        let g = TimeGrid::new(0.0, 0.1, 10).unwrap();
        let rho = solve_ivp(linear(1.0), &mu0, &g, Scheme::Rk4).unwrap();
        assert_eq!(rho.len(), 1);
        let curve = rho.statistic_curve(|u| u[0]).unwrap();
        for (v, tr) in curve.values.iter().zip(&rho.trajectories()[0].states) {
            assert_eq!(*v, tr[0]);
        }
    }

    #[test]
    fn linear_pushforward_oracle() {
        let g = TimeGrid::new(0.0, 0.01, 100).unwrap();
        let rho = solve_ivp(linear(1.0), &two_point(), &g, Scheme::Rk4).unwrap();
        let end = rho.project(100).unwrap();
        let e = (-1.0f64).exp();
        assert!((end.atoms()[0][0] - e).abs() < 1e-9);
        assert!((end.atoms()[1][0] - 3.0 * e).abs() < 1e-9);
        assert!((end.expectation(|x| x[0]).unwrap() - 2.0 * e).abs() < 1e-9);
        assert_eq!(end.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn projection_at_t0_is_initial_measure() {
        let mu0 = DiracEnsemble::uniform((0..5).map(|i| vec![i as f64 * 0.3]).collect()).unwrap();
        let g = TimeGrid::new(1.0, 0.25, 4).unwrap();
        let rho = solve_ivp(linear(0.5), &mu0, &g, Scheme::Imex).unwrap();
        assert_eq!(rho.project(0).unwrap(), mu0);
        assert_eq!(rho.project_at(1.0).unwrap(), mu0);
        assert!(rho.weights().iter().all(|w| *w == 0.2));
        assert_eq!(rho.initial_condition_check(&mu0).unwrap(), 0.0);
        assert!(matches!(rho.project_at(1.1), Err(Error::OffGrid(_))));
        assert!(rho.project(5).is_err());
    }

    #[test]
    fn projection_matches_direct_sum() {
        let g = TimeGrid::new(0.0, 0.1, 5).unwrap();
        let rho = solve_ivp(linear(1.0), &two_point(), &g, Scheme::Rk4).unwrap();
        let phi = smooth_phi();
        for i in 0..g.len() {
            let mu = rho.project(i).unwrap();
            let a = mu.expectation(|x| phi.eval(x, &crate::Euclidean).unwrap()).unwrap();
            let direct = 0.5 * phi.eval(&rho.trajectories()[0].states[i], &crate::Euclidean).unwrap()
                + 0.5 * phi.eval(&rho.trajectories()[1].states[i], &crate::Euclidean).unwrap();
            assert_eq!(a, direct);
        }
    }

    #[test]
    fn liouville_residual_examples() {
        let g = TimeGrid::new(0.0, 0.1, 10).unwrap();
        let rho = solve_ivp(linear(1.0), &two_point(), &g, Scheme::Rk4).unwrap();
        assert_eq!(rho.liouville_residual(&smooth_phi(), 4, 4).unwrap(), 0.0);
        let constant = CylindricalTestFunction::new(
            "const",
            vec![vec![1.0]],
            |_: &[f64]| 2.5,
            |_: &[f64]| vec![0.0],
            None,
        )
        .unwrap();
        assert_eq!(rho.liouville_residual(&constant, 0, 10).unwrap(), 0.0);
        assert!(rho.liouville_residual(&smooth_phi(), 3, 1).is_err());
    }

    #[test]
    fn liouville_order_on_linear_model() {
        let mut dts = Vec::new();
        let mut res = Vec::new();
        for level in 0..4 {
            let g = TimeGrid::new(0.0, 0.1 / (1 << level) as f64, 10 << level).unwrap();
            let rho = solve_ivp(linear(1.0), &two_point(), &g, Scheme::Rk4).unwrap();
            res.push(rho.liouville_residual(&smooth_phi(), 0, g.steps).unwrap());
            dts.push(g.dt);
        }
        assert!(fit_order(&dts, &res).unwrap() >= 1.8, "{res:?}");
    }

    #[test]
    fn statistic_curve_examples() {
        let g = TimeGrid::new(0.0, 0.1, 10).unwrap();
        let rho = solve_ivp(linear(1.0), &two_point(), &g, Scheme::Rk4).unwrap();
        let one = rho.statistic_curve(|_| 1.0).unwrap();
        assert!(one.values.iter().all(|v| *v == 1.0));
        assert_eq!(one.modulus, 0.0);
        let mut moduli = Vec::new();
        for level in 0..3 {
            let g = TimeGrid::new(0.0, 0.1 / (1 << level) as f64, 10 << level).unwrap();
            let rho = solve_ivp(linear(1.0), &two_point(), &g, Scheme::Rk4).unwrap();
            moduli.push(rho.statistic_curve(|u| u[0].tanh()).unwrap().modulus);
        }
        for w in moduli.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 0.1);
        }
    }

    #[test]
    fn mean_energy_zero_ensemble() {
        let m: Arc<dyn Model> =
            Arc::new(ReactionDiffusion::new(4, PI, 0.2, Reaction::default(), Forcing::zero(4)).unwrap());
        let mu0 = DiracEnsemble::dirac(vec![0.0; 4]);
        let g = TimeGrid::new(0.0, 0.05, 20).unwrap();
        let rho = solve_ivp(m.clone(), &mu0, &g, Scheme::Rk4).unwrap();
        let pair = energy_pair(m, Psi::tanh()).unwrap();
        assert_eq!(rho.mean_energy_check(&pair, &bump_1d(0.5, 0.4).unwrap()).unwrap(), 0.0);
        assert!(rho.mean_energy_check(&pair, &bump_1d(0.5, 0.6).unwrap()).is_err());
        assert_eq!(rho.z_carrier_fraction(), 1.0);
    }

    #[test]
    fn mean_energy_equality_on_linear_model() {
        let m = linear(1.0);
        let pair = energy_pair(m.clone(), Psi::tanh()).unwrap();
        let bump = bump_1d(0.5, 0.45).unwrap();
        let mut values = Vec::new();
        for level in 0..3 {
            let g = TimeGrid::new(0.0, 0.05 / (1 << level) as f64, 20 << level).unwrap();
            let rho = solve_ivp(m.clone(), &two_point(), &g, Scheme::Imex).unwrap();
            values.push(rho.mean_energy_check(&pair, &bump).unwrap());
        }
        // Imex is exact here, so only the trapezoid error of a smooth,
        // compactly supported integrand is left and it decays fast.
        for w in values.windows(2) {
            assert!(w[0].abs() / w[1].abs() > 16.0, "{values:?}");
        }
    }

    #[test]
    fn initial_limit_examples() {
        let frozen = linear(0.0);
        let pair = energy_pair(frozen.clone(), Psi::tanh()).unwrap();
        let g = TimeGrid::new(0.0, 0.1, 3).unwrap();
        let rho = solve_ivp(frozen, &two_point(), &g, Scheme::Rk4).unwrap();
        assert_eq!(rho.initial_limit_check(&pair).unwrap(), 0.0);

        let m = linear(1.0);
        let pair = energy_pair(m.clone(), Psi::identity()).unwrap();
        let mut values = Vec::new();
        let mut dts = Vec::new();
        for level in 0..4 {
            let g = TimeGrid::new(0.0, 0.1 / (1 << level) as f64, 2).unwrap();
            let rho = solve_ivp(m.clone(), &two_point(), &g, Scheme::Rk4).unwrap();
            let v = rho.initial_limit_check(&pair).unwrap();
            let exact = 5.0 * (1.0 - (-2.0 * g.dt).exp());
            assert!((v - exact).abs() < 1e-6 * exact);
            values.push(v);
            dts.push(g.dt);
        }
        assert!((fit_order(&dts, &values).unwrap() - 1.0).abs() < 0.1);
    }

    #[test]
    fn perturbed_initial_atoms_show_in_discrepancy() {
        let g = TimeGrid::new(0.0, 0.1, 2).unwrap();
        let rho = solve_ivp(linear(1.0), &two_point(), &g, Scheme::Rk4).unwrap();
        let eps = 1e-4;
        let shifted = two_point().pushforward(|x| vec![x[0] + eps]).unwrap();
        let d = rho.initial_condition_check(&shifted).unwrap();
        assert!(d > 0.0 && d <= eps);
    }

    #[test]
    fn failing_atom_is_named() {
        let m = linear(-50.0);
        let mu0 = DiracEnsemble::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let g = TimeGrid::new(0.0, 0.1, 100).unwrap();
        match solve_ivp(m, &mu0, &g, Scheme::Rk4) {
            Err(Error::Atom { atom, .. }) => assert_eq!(atom, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn certificates_are_small_for_smooth_runs() {
        let m: Arc<dyn Model> = Arc::new(
            ReactionDiffusion::new(8, PI, 0.1, Reaction::default(), Forcing::single(8, 0, 1.0)).unwrap(),
        );
        let mu0 = DiracEnsemble::uniform(vec![vec![0.3; 8], vec![-0.2; 8]]).unwrap();
        let g = TimeGrid::new(0.0, 0.01, 100).unwrap();
        let rho = solve_ivp(m, &mu0, &g, Scheme::Rk4).unwrap();
        assert!(rho.max_weak_residual() < 1e-3);
        assert!(rho.max_energy_residual() < 1e-3);
        assert!(rho.certificates().iter().all(|c| c.continuity_violations == 0 && c.z_carried));
    }
}
