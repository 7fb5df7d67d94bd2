//! Cylindrical test functions `Phi(u) = phi(<u,v_1>, ..., <u,v_k>)` and their
//! derivatives `Phi'(u) = sum_j d_j phi(...) v_j`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::State;
use crate::numerics::dot;

/// Bilinear duality pairing between dual vectors and states.
pub trait Pairing: Send + Sync {
    fn pair(&self, w: &[f64], u: &[f64]) -> f64;
}

/// Coefficient-wise dot product. All built-in models use orthonormal
/// coordinates, so this is their pairing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Pairing for Euclidean {
    fn pair(&self, w: &[f64], u: &[f64]) -> f64 {
        dot(w, u)
    }
}

/// Diagonal weighted pairing `sum_i d_i w_i u_i`.
#[derive(Debug, Clone)]
pub struct DiagonalPairing(pub Vec<f64>);

impl Pairing for DiagonalPairing {
    fn pair(&self, w: &[f64], u: &[f64]) -> f64 {
        self.0.iter().zip(w.iter().zip(u)).map(|(d, (a, b))| d * a * b).sum()
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct CylindricalTestFunction {
    label: String,
    duals: Vec<State>,
    phi: ScalarFn,
    grad_phi: GradFn,
    support_radius: Option<f64>,
}

impl fmt::Debug for CylindricalTestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylindricalTestFunction")
            .field("label", &self.label)
            .field("k", &self.duals.len())
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

impl CylindricalTestFunction {
    /// `phi` acts on the k pairing coordinates and `grad_phi` must return its
    /// k partial derivatives.
    pub fn new<P, G>(
        label: impl Into<String>,
        duals: Vec<State>,
        phi: P,
        grad_phi: G,
        support_radius: Option<f64>,
    ) -> Result<Self>
    where
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if duals.is_empty() {
            return Err(Error::Invalid("cylindrical function needs k >= 1 duals".into()));
        }
        let dim = duals[0].len();
        if let Some(bad) = duals.iter().find(|d| d.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self {
            label: label.into(),
            duals,
            phi: Arc::new(phi),
            grad_phi: Arc::new(grad_phi),
            support_radius,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn duals(&self) -> &[State] {
        &self.duals
    }

    pub fn k(&self) -> usize {
        self.duals.len()
    }

    pub fn dim(&self) -> usize {
        self.duals[0].len()
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    /// Scalar profile on the pairing coordinates.
    pub fn profile(&self, y: &[f64]) -> f64 {
        (self.phi)(y)
    }

    pub fn profile_grad(&self, y: &[f64]) -> Vec<f64> {
        (self.grad_phi)(y)
    }

    /// Pairing coordinates `(<u,v_1>, ..., <u,v_k>)`.
    pub fn coordinates(&self, u: &[f64], pairing: &dyn Pairing) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: u.len(),
            });
        }
        self.duals
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let y = pairing.pair(u, v);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Invalid(format!("pairing coordinate {j} is not finite")))
                }
            })
            .collect()
    }

    pub fn eval(&self, u: &[f64], pairing: &dyn Pairing) -> Result<f64> {
        let y = self.coordinates(u, pairing)?;
        Ok((self.phi)(&y))
    }

    /// `Phi'(u) = sum_j d_j phi(y) v_j`.
    pub fn grad(&self, u: &[f64], pairing: &dyn Pairing) -> Result<Vec<f64>> {
        let y = self.coordinates(u, pairing)?;
        let partials = (self.grad_phi)(&y);
        let mut out = vec![0.0; self.dim()];
        for (d, v) in partials.iter().zip(&self.duals) {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += d * vi;
            }
        }
        Ok(out)
    }

    /// `<w, Phi'(u)>`.
    pub fn pair_with_grad(&self, w: &[f64], u: &[f64], pairing: &dyn Pairing) -> Result<f64> {
        if !w.iter().all(|x| x.is_finite()) {
            return Err(Error::Invalid("non-finite direction".into()));
        }
        let g = self.grad(u, pairing)?;
        Ok(pairing.pair(w, &g))
    }

    /// Largest mixed relative error between `grad_phi` and central
    /// differences of `phi` with step `h`, taken over the k coordinates at
    /// the pairing coordinates of `u`.
    pub fn grad_check(&self, u: &[f64], h: f64, pairing: &dyn Pairing) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Invalid(format!("step must be positive, got {h}")));
        }
        let y = self.coordinates(u, pairing)?;
        let exact = (self.grad_phi)(&y);
        let mut worst: f64 = 0.0;
        let mut probe = y.clone();
        for j in 0..y.len() {
            let (hi, lo) = (y[j] + h, y[j] - h);
            probe[j] = hi;
            let plus = (self.phi)(&probe);
            probe[j] = lo;
            let minus = (self.phi)(&probe);
            probe[j] = y[j];
            // Divide by the represented step, not 2h.
            let fd = (plus - minus) / (hi - lo);
            let scale = exact[j].abs().max(fd.abs()).max(1.0);
            worst = worst.max((exact[j] - fd).abs() / scale);
        }
        Ok(worst)
    }

    /// Family (a): `y^m` times a bump of radius `radius` in one coordinate.
    pub fn monomial_cutoff(dual: State, exponent: u32, radius: f64) -> Result<Self> {
        Self::poly_bump(vec![dual], vec![exponent], vec![0.0], radius)
    }

    /// Family (b): `y_1^m1 y_2^m2` times a radial bump in the plane.
    pub fn product_cutoff(duals: [State; 2], exponents: [u32; 2], radius: f64) -> Result<Self> {
        Self::poly_bump(duals.to_vec(), exponents.to_vec(), vec![0.0, 0.0], radius)
    }

    /// Family (c): radial bump centered at `center` in pairing coordinates.
    pub fn radial_bump(duals: Vec<State>, center: Vec<f64>, radius: f64) -> Result<Self> {
        let k = duals.len();
        Self::poly_bump(duals, vec![0; k], center, radius)
    }

    /// Monomial `prod_j y_j^{m_j}` times `bump(|y - c| / R)`.
    pub fn poly_bump(
        duals: Vec<State>,
        exponents: Vec<u32>,
        center: Vec<f64>,
        radius: f64,
    ) -> Result<Self> {
        if exponents.len() != duals.len() || center.len() != duals.len() {
            return Err(Error::Dimension {
                expected: duals.len(),
                found: exponents.len().min(center.len()),
            });
        }
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("bump radius must be positive, got {radius}")));
        }
        let label = format!("poly_bump(m={exponents:?}, c={center:?}, R={radius})");
        let support = center.iter().map(|c| c * c).sum::<f64>().sqrt() + radius;
        let (e1, c1) = (exponents.clone(), center.clone());
        let phi = move |y: &[f64]| {
            let s = distance(y, &c1) / radius;
            let (b, _) = bump_profile(s);
            if b == 0.0 {
                return 0.0;
            }
            monomial(y, &e1) * b
        };
        let grad = move |y: &[f64]| {
            let r = distance(y, &center);
            let (b, db) = bump_profile(r / radius);
            let mut g = vec![0.0; y.len()];
            if b == 0.0 {
                return g;
            }
            let p = monomial(y, &exponents);
            for (j, gj) in g.iter_mut().enumerate() {
                let dp = monomial_partial(y, &exponents, j);
                let radial = if r > 0.0 { db / radius * (y[j] - center[j]) / r } else { 0.0 };
                *gj = dp * b + p * radial;
            }
            g
        };
        Self::new(label, duals, phi, grad, Some(support))
    }

    /// Diagnostic C^1 family with bounded derivative: `sum_j tanh(y_j)`.
    /// Not compactly supported.
    pub fn tanh_sum(duals: Vec<State>) -> Result<Self> {
        Self::new(
            "tanh_sum",
            duals,
            |y: &[f64]| y.iter().map(|v| v.tanh()).sum(),
            |y: &[f64]| y.iter().map(|v| 1.0 / v.cosh().powi(2)).collect(),
            None,
        )
    }
}

fn distance(y: &[f64], c: &[f64]) -> f64 {
    y.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn monomial(y: &[f64], exponents: &[u32]) -> f64 {
    y.iter().zip(exponents).map(|(v, &m)| v.powi(m as i32)).product()
}

fn monomial_partial(y: &[f64], exponents: &[u32], j: usize) -> f64 {
    if exponents[j] == 0 {
        return 0.0;
    }
    y.iter()
        .zip(exponents)
        .enumerate()
        .map(|(i, (v, &m))| {
            if i == j {
                m as f64 * v.powi(m as i32 - 1)
            } else {
                v.powi(m as i32)
            }
        })
        .product()
}

/// `exp(-1/(1-s^2))` and its derivative for `|s| < 1`, zero outside.
pub fn bump_profile(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - s * s;
    let b = (-1.0 / q).exp();
    (b, b * (-2.0 * s / (q * q)))
}

/// Smooth nonnegative bump in time supported on `[center - w, center + w]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump1d {
    pub center: f64,
    pub half_width: f64,
}

impl Bump1d {
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn value(&self, t: f64) -> f64 {
        bump_profile((t - self.center) / self.half_width).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        bump_profile((t - self.center) / self.half_width).1 / self.half_width
    }
}

pub fn bump_1d(center: f64, half_width: f64) -> Result<Bump1d> {
    if !(half_width > 0.0) || !center.is_finite() {
        return Err(Error::Invalid(format!(
            "bump needs finite center and positive half width, got ({center}, {half_width})"
        )));
    }
    Ok(Bump1d { center, half_width })
}
