//! Time integration of single solutions and per-trajectory checks of the
//! weak formulation, energy balance and a-priori bounds.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::State;
use crate::models::{EnergyPair, Model, NavierStokes, OVERFLOW_GUARD};
use crate::numerics::{axpy, dot, norm, trapezoid};

/// Uniform time grid `t0, t0 + dt, ..., t0 + steps * dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        let grid = Self { t0, dt, steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || !(self.dt > 0.0) || !self.dt.is_finite() || self.steps == 0 {
            return Err(Error::Invalid(format!(
                "time grid needs finite t0, dt > 0 and steps >= 1 (got t0={}, dt={}, steps={})",
                self.t0, self.dt, self.steps
            )));
        }
        Ok(())
    }

    /// Number of nodes, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.node(self.steps)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.node(i))
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::NodeIndex {
                index: i,
                nodes: self.len(),
            })
        }
    }

    /// Index of the node at time `t`, or an error when `t` is off-grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = (t - self.t0) / self.dt;
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 {
            return Err(Error::OffGrid(t));
        }
        Ok(i as usize)
    }

    /// Same interval with half the step.
    pub fn halved(&self) -> Self {
        Self {
            t0: self.t0,
            dt: self.dt / 2.0,
            steps: self.steps * 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Classical four-stage Runge–Kutta.
    Rk4,
    /// Integrating factor for the linear part, Heun for the rest (order 2).
    Imex,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::Rk4 => 4,
            Scheme::Imex => 2,
        }
    }
}

/// Sampled solution: one state per node of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<State>,
}

fn guard(u: &[f64]) -> Result<()> {
    let n = norm(u);
    if n <= OVERFLOW_GUARD {
        Ok(())
    } else {
        Err(Error::Overflow { norm: n })
    }
}

fn rk4_step(model: &dyn Model, t: f64, h: f64, u: &[f64]) -> Result<State> {
    let k1 = model.rhs(t, u)?;
    let mut y = u.to_vec();
    axpy(&mut y, 0.5 * h, &k1);
    let k2 = model.rhs(t + 0.5 * h, &y)?;
    y.copy_from_slice(u);
    axpy(&mut y, 0.5 * h, &k2);
    let k3 = model.rhs(t + 0.5 * h, &y)?;
    y.copy_from_slice(u);
    axpy(&mut y, h, &k3);
    let k4 = model.rhs(t + h, &y)?;
    let mut next = u.to_vec();
    for i in 0..next.len() {
        next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    guard(&next)?;
    Ok(next)
}

fn imex_step(model: &dyn Model, t: f64, h: f64, u: &[f64]) -> Result<State> {
    guard(u)?;
    let n0 = model.nonlinear_part(t, u);
    let mut y = u.to_vec();
    axpy(&mut y, h, &n0);
    let predictor = model.linear_propagate(h, &y);
    guard(&predictor)?;
    let n1 = model.nonlinear_part(t + h, &predictor);
    let mut z = u.to_vec();
    axpy(&mut z, 0.5 * h, &n0);
    let mut next = model.linear_propagate(h, &z);
    axpy(&mut next, 0.5 * h, &n1);
    if !next.iter().all(|x| x.is_finite()) {
        return Err(Error::Overflow { norm: f64::INFINITY });
    }
    guard(&next)?;
    Ok(next)
}

/// Integrates from `u0` over the grid. `states[0]` is `u0` itself.
pub fn integrate(model: &dyn Model, u0: &[f64], grid: &TimeGrid, scheme: Scheme) -> Result<Trajectory> {
    grid.validate()?;
    if u0.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: u0.len(),
        });
    }
    if !u0.iter().all(|x| x.is_finite()) {
        return Err(Error::Invalid("initial state is not finite".into()));
    }
    let mut states = Vec::with_capacity(grid.len());
    states.push(u0.to_vec());
    for step in 0..grid.steps {
        let t = grid.node(step);
        let u = &states[step];
        let next = match scheme {
            Scheme::Rk4 => rk4_step(model, t, grid.dt, u),
            Scheme::Imex => imex_step(model, t, grid.dt, u),
        }
        .map_err(|e| Error::Integration {
            step,
            source: Box::new(e),
        })?;
        states.push(next);
    }
    Ok(Trajectory {
        grid: *grid,
        states,
    })
}

impl Trajectory {
    pub fn state(&self, i: usize) -> Result<&State> {
        self.grid.check_index(i)?;
        Ok(&self.states[i])
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory has at least one node")
    }

    /// Number of steps whose increment exceeds `10 * dt * max |F|` at the two
    /// ends. Zero for a sampled continuous path.
    pub fn continuity_violations(&self, model: &dyn Model) -> Result<usize> {
        const SAFETY: f64 = 10.0;
        let mut count = 0;
        let mut prev_rate = norm(&model.rhs(self.grid.node(0), &self.states[0])?);
        for i in 0..self.grid.steps {
            let rate = norm(&model.rhs(self.grid.node(i + 1), &self.states[i + 1])?);
            let jump: Vec<f64> = self.states[i + 1]
                .iter()
                .zip(&self.states[i])
                .map(|(a, b)| a - b)
                .collect();
            if norm(&jump) > SAFETY * self.grid.dt * prev_rate.max(rate) {
                count += 1;
            }
            prev_rate = rate;
        }
        Ok(count)
    }

    /// CSV with header `t,u0,...,u{d-1}` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let dim = self.states[0].len();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..dim).map(|i| format!("u{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, u) in self.grid.nodes().zip(&self.states) {
            let row: Vec<String> = std::iter::once(t)
                .chain(u.iter().copied())
                .map(|x| format!("{x:.16e}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_pair(traj: &Trajectory, i1: usize, i2: usize) -> Result<()> {
    traj.grid.check_index(i1)?;
    traj.grid.check_index(i2)?;
    if i1 > i2 {
        return Err(Error::Invalid(format!("node {i1} is after node {i2}")));
    }
    Ok(())
}

/// `|<u(t2) - u(t1), v> - int_{t1}^{t2} <F(s, u(s)), v> ds|` with the
/// integral taken by the trapezoid rule on the grid.
pub fn weak_residual(
    model: &dyn Model,
    traj: &Trajectory,
    v: &[f64],
    i1: usize,
    i2: usize,
) -> Result<f64> {
    check_pair(traj, i1, i2)?;
    if i1 == i2 {
        return Ok(0.0);
    }
    let pairing = model.pairing();
    let samples = (i1..=i2)
        .map(|i| Ok(pairing.pair(&model.rhs(traj.grid.node(i), &traj.states[i])?, v)))
        .collect::<Result<Vec<_>>>()?;
    let change = pairing.pair(&traj.states[i2], v) - pairing.pair(&traj.states[i1], v);
    Ok((change - trapezoid(&samples, traj.grid.dt)).abs())
}

/// `alpha(t2, u(t2)) - alpha(t1, u(t1)) + int_{t1}^{t2} beta(s, u(s)) ds`,
/// signed. Nonpositive up to quadrature error for solutions.
pub fn energy_residual(pair: &EnergyPair, traj: &Trajectory, i1: usize, i2: usize) -> Result<f64> {
    check_pair(traj, i1, i2)?;
    if i1 == i2 {
        return Ok(0.0);
    }
    let g = &traj.grid;
    let betas: Vec<f64> = (i1..=i2).map(|i| pair.beta(g.node(i), &traj.states[i])).collect();
    let value = pair.alpha(g.node(i2), &traj.states[i2]) - pair.alpha(g.node(i1), &traj.states[i1])
        + trapezoid(&betas, g.dt);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation { index: i2 })
    }
}

/// Worst signed energy residual over all node pairs `(0, i)`.
pub fn worst_energy_residual(pair: &EnergyPair, traj: &Trajectory) -> Result<f64> {
    let g = &traj.grid;
    let betas: Vec<f64> = (0..g.len()).map(|i| pair.beta(g.node(i), &traj.states[i])).collect();
    let alpha0 = pair.alpha(g.node(0), &traj.states[0]);
    let mut worst = 0.0f64;
    let mut integral = 0.0;
    for i in 1..g.len() {
        integral += 0.5 * g.dt * (betas[i - 1] + betas[i]);
        let r = pair.alpha(g.node(i), &traj.states[i]) - alpha0 + integral;
        if r.abs() > worst.abs() {
            worst = r;
        }
    }
    Ok(worst)
}

/// Smallest slack in the two classical a-priori estimates at node `i`,
/// measured from `t0`:
///
/// `|u(t)|^2 <= |u(t0)|^2 + ||f||^2_{L2(t0,t;V')} / nu` and
/// `int ||u||^2 <= |u(t0)|^2 / nu + ||f||^2_{L2(t0,t;V')} / nu^2`.
pub fn apriori_bound_check(model: &NavierStokes, traj: &Trajectory, i: usize) -> Result<f64> {
    traj.grid.check_index(i)?;
    let g = &traj.grid;
    let nu = model.viscosity();
    let forcing: Vec<f64> = (0..=i)
        .map(|j| model.v_dual_norm_sq(&model.forcing().at(g.node(j))))
        .collect();
    let enstrophy: Vec<f64> = (0..=i).map(|j| model.v_norm_sq(&traj.states[j])).collect();
    let f2 = trapezoid(&forcing, g.dt);
    let e0 = model.h_norm_sq(&traj.states[0]);
    let first = e0 + f2 / nu - model.h_norm_sq(&traj.states[i]);
    let second = e0 / nu + f2 / (nu * nu) - trapezoid(&enstrophy, g.dt);
    Ok(first.min(second))
}

/// Largest weak residual over the coordinate directions on `[t0, t_end]`.
pub fn worst_weak_residual(model: &dyn Model, traj: &Trajectory) -> Result<f64> {
    let d = model.dim();
    let mut worst: f64 = 0.0;
    let mut e = vec![0.0; d];
    for k in 0..d {
        e[k] = 1.0;
        worst = worst.max(weak_residual(model, traj, &e, 0, traj.grid.steps)?);
        e[k] = 0.0;
    }
    Ok(worst)
}

/// `|u(T) - u0|` style error against a reference state.
pub fn state_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    dot(&d, &d).sqrt()
}
