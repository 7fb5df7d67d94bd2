use std::f64::consts::PI;

use crate::measure::State;

/// Orthonormal sine basis `s_n(x) = sqrt(2/L) sin(n pi x / L)`, n = 1..N, on
/// `(0, L)` with homogeneous Dirichlet data, paired with a uniform collocation
/// grid of `M = 2(N + 1)` intervals.
///
/// Projection uses the grid quadrature, which is exact for products of up to
/// four basis functions, so cubic nonlinearities are dealiased.
#[derive(Debug, Clone)]
pub struct SineCollocation {
    modes: usize,
    length: f64,
    weight: f64,
    /// `basis[j][n-1] = s_n(x_j)` for interior nodes `x_j = j L / M`.
    basis: Vec<Vec<f64>>,
}

impl SineCollocation {
    pub fn new(modes: usize, length: f64) -> Self {
        let intervals = 2 * (modes + 1);
        let scale = (2.0 / length).sqrt();
        let basis = (1..intervals)
            .map(|j| {
                (1..=modes)
                    .map(|n| scale * (n as f64 * PI * j as f64 / intervals as f64).sin())
                    .collect()
            })
            .collect();
        Self {
            modes,
            length,
            weight: length / intervals as f64,
            basis,
        }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Quadrature weight of each interior node.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Dirichlet Laplacian eigenvalues `(n pi / L)^2`.
    pub fn eigenvalue(&self, n: usize) -> f64 {
        let k = n as f64 * PI / self.length;
        k * k
    }

    /// Values at the interior collocation nodes.
    pub fn to_grid(&self, coeffs: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|row| row.iter().zip(coeffs).map(|(s, c)| s * c).sum())
            .collect()
    }

    /// Quadrature projection of grid values onto the retained modes.
    pub fn project(&self, values: &[f64]) -> State {
        let mut out = vec![0.0; self.modes];
        for (row, v) in self.basis.iter().zip(values) {
            for (o, s) in out.iter_mut().zip(row) {
                *o += self.weight * v * s;
            }
        }
        out
    }

    /// `P[g(u)]` for a pointwise nonlinearity `g`.
    pub fn apply_pointwise<G: Fn(f64) -> f64>(&self, coeffs: &[f64], g: G) -> State {
        let grid: Vec<f64> = self.to_grid(coeffs).into_iter().map(g).collect();
        self.project(&grid)
    }

    /// Grid quadrature of `g(u(x))` over the domain.
    pub fn integrate_pointwise<G: Fn(f64) -> f64>(&self, coeffs: &[f64], g: G) -> f64 {
        self.to_grid(coeffs).into_iter().map(g).sum::<f64>() * self.weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_orthonormality() {
        let s = SineCollocation::new(6, 2.5);
        for n in 0..6 {
            let mut e = vec![0.0; 6];
            e[n] = 1.0;
            let back = s.project(&s.to_grid(&e));
            for (m, b) in back.iter().enumerate() {
                let expected = if m == n { 1.0 } else { 0.0 };
                assert!((b - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn quadrature_of_square_is_l2_norm() {
        let s = SineCollocation::new(5, 3.0);
        let c = [0.3, -1.0, 0.25, 0.0, 2.0];
        let l2: f64 = c.iter().map(|x| x * x).sum();
        assert!((s.integrate_pointwise(&c, |v| v * v) - l2).abs() < 1e-12);
    }
}
