use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Forcing, ForcingConfig, Model};
use crate::error::{Error, Result};
use crate::measure::State;
use crate::numerics::dot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NseConfig {
    /// Spatial dimension, 2 or 3.
    #[serde(default = "default_space_dim")]
    pub space_dim: usize,
    /// Retain integer wavevectors with `0 < |k| <= kmax`.
    #[serde(default = "default_kmax")]
    pub kmax: f64,
    pub viscosity: f64,
    /// Domain periods; defaults to `2 pi` in each direction.
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
    #[serde(default)]
    pub forcing: ForcingConfig,
}

fn default_space_dim() -> usize {
    2
}

fn default_kmax() -> f64 {
    2.0
}

/// Precomputed convolution entry: target mode (positive representative)
/// receives a contribution from the pair `(p, q)` with `p + q = target`.
#[derive(Debug, Clone, Copy)]
struct Triad {
    target: usize,
    p: usize,
    q: usize,
}

/// Divergence-free Fourier–Galerkin truncation of
/// `u_t + nu A u + B(u, u) = f` on a periodic box with zero mean.
///
/// Each retained pair `{k, -k}` is stored once through its positive
/// representative `k` (first nonzero component positive). The velocity
/// coefficient is `u_k = sum_a c_{k,a} e_{k,a}` with real unit vectors
/// `e_{k,a}` orthogonal to `k` (one in 2D, two in 3D) and
/// `u_{-k} = conj(u_k)`. State coordinates are `sqrt(2) (Re c, Im c)`, which
/// makes the Euclidean product of states equal to the `H` inner product
/// `sum_{all k} Re(u_k . conj w_k)`.
#[derive(Debug, Clone)]
pub struct NavierStokes {
    space_dim: usize,
    periods: Vec<f64>,
    viscosity: f64,
    modes: Vec<Vec<i64>>,
    wavevectors: Vec<Vec<f64>>,
    directions: Vec<Vec<Vec<f64>>>,
    /// `|k'|^2` per state coordinate.
    coord_k2: Vec<f64>,
    triads: Vec<Triad>,
    forcing: Forcing,
}

impl NavierStokes {
    pub fn new(
        space_dim: usize,
        kmax: f64,
        viscosity: f64,
        periods: Vec<f64>,
        forcing: Option<Forcing>,
    ) -> Result<Self> {
        if !(space_dim == 2 || space_dim == 3) {
            return Err(Error::Invalid(format!("space_dim must be 2 or 3, got {space_dim}")));
        }
        if !(viscosity > 0.0) || !(kmax >= 1.0) {
            return Err(Error::Invalid("need viscosity > 0 and kmax >= 1".into()));
        }
        if periods.len() != space_dim || periods.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Invalid("one positive period per direction required".into()));
        }

        let modes = positive_modes(space_dim, kmax);
        let wavevectors: Vec<Vec<f64>> = modes
            .iter()
            .map(|k| {
                k.iter()
                    .zip(&periods)
                    .map(|(&ki, l)| 2.0 * PI * ki as f64 / l)
                    .collect()
            })
            .collect();
        let directions: Vec<Vec<Vec<f64>>> = wavevectors.iter().map(|k| orthogonal_frame(k)).collect();
        let per_mode = 2 * (space_dim - 1);
        let coord_k2 = wavevectors
            .iter()
            .flat_map(|k| std::iter::repeat_n(dot(k, k), per_mode))
            .collect();

        let n = modes.len();
        let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
        for (i, k) in modes.iter().enumerate() {
            index.insert(k.clone(), i);
            index.insert(k.iter().map(|x| -x).collect(), i + n);
        }
        let signed = |i: usize| -> Vec<i64> {
            if i < n {
                modes[i].clone()
            } else {
                modes[i - n].iter().map(|x| -x).collect()
            }
        };
        let mut triads = Vec::new();
        for target in 0..n {
            for p in 0..2 * n {
                let kp = signed(p);
                let kq: Vec<i64> = modes[target].iter().zip(&kp).map(|(a, b)| a - b).collect();
                if let Some(&q) = index.get(&kq) {
                    triads.push(Triad { target, p, q });
                }
            }
        }

        let dim = per_mode * n;
        let forcing = forcing.unwrap_or_else(|| Forcing::zero(dim));
        if forcing.amplitudes.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: forcing.amplitudes.len(),
            });
        }
        Ok(Self {
            space_dim,
            periods,
            viscosity,
            modes,
            wavevectors,
            directions,
            coord_k2,
            triads,
            forcing,
        })
    }

    pub fn from_config(c: &NseConfig) -> Result<Self> {
        let periods = c
            .periods
            .clone()
            .unwrap_or_else(|| vec![2.0 * PI; c.space_dim]);
        let mut model = Self::new(c.space_dim, c.kmax, c.viscosity, periods, None)?;
        model.forcing = c.forcing.build(model.dim())?;
        Ok(model)
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    /// Positive representatives of the retained wavevectors.
    pub fn modes(&self) -> &[Vec<i64>] {
        &self.modes
    }

    /// Dimensional wavevector `k'` of positive representative `m`.
    pub fn wavevector(&self, m: usize) -> &[f64] {
        &self.wavevectors[m]
    }

    /// Unit vectors orthogonal to `k'` for positive representative `m`.
    pub fn directions(&self, m: usize) -> &[Vec<f64>] {
        &self.directions[m]
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    fn amplitudes_per_mode(&self) -> usize {
        self.space_dim - 1
    }

    /// Coordinate of the real (`imag = false`) or imaginary part of amplitude
    /// `a` of positive representative `m`.
    pub fn coordinate(&self, m: usize, a: usize, imag: bool) -> usize {
        2 * (m * self.amplitudes_per_mode() + a) + usize::from(imag)
    }

    /// Complex velocity coefficient vectors for all `2n` signed modes.
    pub fn velocity_coefficients(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        let n = self.modes.len();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = vec![vec![Complex64::new(0.0, 0.0); self.space_dim]; 2 * n];
        for m in 0..n {
            for (a, e) in self.directions[m].iter().enumerate() {
                let c = Complex64::new(
                    x[self.coordinate(m, a, false)] * s,
                    x[self.coordinate(m, a, true)] * s,
                );
                for (d, ed) in e.iter().enumerate() {
                    out[m][d] += c * ed;
                }
            }
            let conj: Vec<Complex64> = out[m].iter().map(|z| z.conj()).collect();
            out[m + n] = conj;
        }
        out
    }

    fn signed_wavevector(&self, i: usize) -> Vec<f64> {
        let n = self.modes.len();
        if i < n {
            self.wavevectors[i].clone()
        } else {
            self.wavevectors[i - n].iter().map(|x| -x).collect()
        }
    }

    /// Galerkin projection of `(u . grad) v` onto the retained divergence-free
    /// modes, in state coordinates.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> State {
        let uh = self.velocity_coefficients(x);
        let vh = self.velocity_coefficients(y);
        let n = self.modes.len();
        let mut acc = vec![vec![Complex64::new(0.0, 0.0); self.amplitudes_per_mode()]; n];
        let i = Complex64::new(0.0, 1.0);
        for t in &self.triads {
            let q = self.signed_wavevector(t.q);
            let u_dot_q: Complex64 = uh[t.p].iter().zip(&q).map(|(u, k)| u * k).sum();
            for (a, e) in self.directions[t.target].iter().enumerate() {
                let v_dot_e: Complex64 = vh[t.q].iter().zip(e).map(|(v, ed)| v * ed).sum();
                acc[t.target][a] += i * u_dot_q * v_dot_e;
            }
        }
        let r2 = std::f64::consts::SQRT_2;
        let mut out = vec![0.0; self.dim()];
        for m in 0..n {
            for (a, b) in acc[m].iter().enumerate() {
                out[self.coordinate(m, a, false)] = r2 * b.re;
                out[self.coordinate(m, a, true)] = r2 * b.im;
            }
        }
        out
    }

    /// `|u|^2`.
    pub fn h_norm_sq(&self, x: &[f64]) -> f64 {
        dot(x, x)
    }

    /// `||u||^2 = sum |k'|^2 |u_k|^2`.
    pub fn v_norm_sq(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.coord_k2).map(|(a, k)| k * a * a).sum()
    }

    /// `||w||_{V'}^2 = sum |w_k|^2 / |k'|^2`.
    pub fn v_dual_norm_sq(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.coord_k2).map(|(a, k)| a * a / k).sum()
    }

    /// Smallest eigenvalue of the Stokes operator in the truncation.
    pub fn lambda1(&self) -> f64 {
        self.coord_k2.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `||B(u,v)||_{V'} / (|u|^{1/4} ||u||^{3/4} |v|^{1/4} ||v||^{3/4})`.
    pub fn b_estimate_ratio(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (hu, hv) = (self.h_norm_sq(x).sqrt(), self.h_norm_sq(y).sqrt());
        if hu == 0.0 || hv == 0.0 {
            return Err(Error::Invalid("estimate ratio needs nonzero states".into()));
        }
        let (vu, vv) = (self.v_norm_sq(x).sqrt(), self.v_norm_sq(y).sqrt());
        let b = self.v_dual_norm_sq(&self.bilinear(x, y)).sqrt();
        Ok(b / (hu.powf(0.25) * vu.powf(0.75) * hv.powf(0.25) * vv.powf(0.75)))
    }
}

/// Integer wavevectors with `0 < |k| <= kmax` whose first nonzero component
/// is positive, in lexicographic order.
fn positive_modes(space_dim: usize, kmax: f64) -> Vec<Vec<i64>> {
    let r = kmax.floor() as i64;
    let mut out = Vec::new();
    let mut k = vec![-r; space_dim];
    loop {
        let norm2: i64 = k.iter().map(|x| x * x).sum();
        let first = k.iter().find(|x| **x != 0).copied().unwrap_or(0);
        if norm2 > 0 && (norm2 as f64) <= kmax * kmax + 1e-9 && first > 0 {
            out.push(k.clone());
        }
        let mut d = space_dim;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            if k[d] < r {
                k[d] += 1;
                break;
            }
            k[d] = -r;
        }
    }
}

fn orthogonal_frame(k: &[f64]) -> Vec<Vec<f64>> {
    let len = dot(k, k).sqrt();
    let khat: Vec<f64> = k.iter().map(|x| x / len).collect();
    if k.len() == 2 {
        return vec![vec![-khat[1], khat[0]]];
    }
    let axis = (0..3)
        .min_by(|&a, &b| khat[a].abs().total_cmp(&khat[b].abs()))
        .unwrap();
    let mut e1: Vec<f64> = (0..3).map(|i| if i == axis { 1.0 } else { 0.0 }).collect();
    let proj = dot(&e1, &khat);
    for (e, kh) in e1.iter_mut().zip(&khat) {
        *e -= proj * kh;
    }
    let l1 = dot(&e1, &e1).sqrt();
    e1.iter_mut().for_each(|e| *e /= l1);
    let e2 = vec![
        khat[1] * e1[2] - khat[2] * e1[1],
        khat[2] * e1[0] - khat[0] * e1[2],
        khat[0] * e1[1] - khat[1] * e1[0],
    ];
    vec![e1, e2]
}

impl Model for NavierStokes {
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn name(&self) -> &str {
        "nse"
    }

    fn dim(&self) -> usize {
        2 * self.amplitudes_per_mode() * self.modes.len()
    }

    fn rhs_raw(&self, t: f64, x: &[f64]) -> State {
        let b = self.bilinear(x, x);
        let f = self.forcing.at(t);
        x.iter()
            .zip(&self.coord_k2)
            .zip(b.iter().zip(&f))
            .map(|((xi, k2), (bi, fi))| fi - self.viscosity * k2 * xi - bi)
            .collect()
    }

    fn energy(&self, x: &[f64]) -> f64 {
        self.h_norm_sq(x)
    }

    /// `2 [<f, u> - nu ||u||^2]`.
    fn energy_supply(&self, t: f64, x: &[f64]) -> f64 {
        2.0 * (dot(&self.forcing.at(t), x) - self.viscosity * self.v_norm_sq(x))
    }

    fn energy_is_equality(&self) -> bool {
        false
    }

    fn linear_propagate(&self, h: f64, x: &[f64]) -> State {
        x.iter()
            .zip(&self.coord_k2)
            .map(|(xi, k2)| (-self.viscosity * k2 * h).exp() * xi)
            .collect()
    }

    fn nonlinear_part(&self, t: f64, x: &[f64]) -> State {
        let b = self.bilinear(x, x);
        let f = self.forcing.at(t);
        f.iter().zip(&b).map(|(fi, bi)| fi - bi).collect()
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "space_dim": self.space_dim,
            "modes": self.modes.len(),
            "viscosity": self.viscosity,
            "periods": self.periods,
            "forcing": self.forcing.amplitudes,
            "forcing_omega": self.forcing.omega,
        })
    }
}
