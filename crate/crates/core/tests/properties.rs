use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use statsol_core::cylinder::{CylindricalTestFunction, DiagonalPairing, Euclidean, Pairing};
use statsol_core::measure::{discretize, DiracEnsemble, GaussianSampler, NORMALIZATION_TOL};
use statsol_core::models::{Forcing, LinearDecay, Model, NavierStokes, Reaction, ReactionDiffusion, Wave};
use statsol_core::numerics::pairwise_sum;
use statsol_core::{solve_ivp, Scheme, TimeGrid};

fn ensemble(dim: usize) -> impl Strategy<Value = DiracEnsemble> {
    prop::collection::vec(
        (prop::collection::vec(-5.0..5.0f64, dim), 1e-3..10.0f64),
        1..30,
    )
    .prop_map(|pairs| {
        let (atoms, weights): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        DiracEnsemble::new(atoms, weights).unwrap()
    })
}

fn state(dim: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, dim)
}

/// `(1/|Omega|) int ((u . grad) v) . w dx` on a uniform physical grid, fine
/// enough to integrate the trigonometric products exactly.
fn trilinear_on_grid(m: &NavierStokes, x: &[f64], y: &[f64], z: &[f64], points: usize) -> f64 {
    let d = m.space_dim();
    let n = m.modes().len();
    let ks: Vec<Vec<f64>> = (0..2 * n)
        .map(|s| {
            let k = m.wavevector(s % n);
            if s < n {
                k.to_vec()
            } else {
                k.iter().map(|v| -v).collect()
            }
        })
        .collect();
    let (uh, vh, wh) = (
        m.velocity_coefficients(x),
        m.velocity_coefficients(y),
        m.velocity_coefficients(z),
    );
    let total = points.pow(d as u32);
    let mut sum = 0.0;
    for idx in 0..total {
        let pos: Vec<f64> = (0..d)
            .map(|a| 2.0 * PI * ((idx / points.pow(a as u32)) % points) as f64 / points as f64)
            .collect();
        let mut u = vec![0.0; d];
        let mut w = vec![0.0; d];
        let mut grad_v = vec![vec![0.0; d]; d];
        for (s, k) in ks.iter().enumerate() {
            let phase: f64 = k.iter().zip(&pos).map(|(a, b)| a * b).sum();
            let e = Complex64::from_polar(1.0, phase);
            for c in 0..d {
                u[c] += (uh[s][c] * e).re;
                w[c] += (wh[s][c] * e).re;
                for j in 0..d {
                    grad_v[c][j] += (Complex64::new(0.0, k[j]) * vh[s][c] * e).re;
                }
            }
        }
        for c in 0..d {
            let conv: f64 = (0..d).map(|j| u[j] * grad_v[c][j]).sum();
            sum += conv * w[c];
        }
    }
    sum / total as f64
}

fn nse_2d() -> NavierStokes {
    NavierStokes::new(2, 2.0, 0.1, vec![2.0 * PI; 2], None).unwrap()
}

fn nse_3d() -> NavierStokes {
    NavierStokes::new(3, 1.5, 0.1, vec![2.0 * PI; 3], None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_normalized(mu in ensemble(2)) {
        prop_assert!((pairwise_sum(mu.weights()) - 1.0).abs() <= NORMALIZATION_TOL);
        prop_assert!(mu.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn pushforward_is_change_of_variables(mu in ensemble(3), a in -2.0..2.0f64, b in -1.0..1.0f64) {
        let map = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| (a * v).tanh() + b * v * v).collect() };
        let phi = |y: &[f64]| -> f64 { y.iter().sum::<f64>().cos() };
        let lhs = mu.pushforward(map).unwrap().expectation(phi).unwrap();
        let rhs = mu.expectation(|x| phi(&map(x))).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn json_roundtrip_is_bit_exact(mu in ensemble(3)) {
        let back = DiracEnsemble::from_json(&mu.to_json()).unwrap();
        prop_assert_eq!(back, mu);
    }

    #[test]
    fn discretize_is_deterministic(seed in any::<u64>(), n in 1usize..50) {
        let s = GaussianSampler::new(vec![0.0; 3], vec![1.0, 0.5, 0.1]).unwrap();
        prop_assert_eq!(discretize(&s, n, seed).unwrap(), discretize(&s, n, seed).unwrap());
    }

    #[test]
    fn pair_with_grad_is_linear(
        u in state(4, 1.0),
        w1 in state(4, 2.0),
        w2 in state(4, 2.0),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        diagonal in any::<bool>(),
    ) {
        let e = |k: usize| { let mut v = vec![0.0; 4]; v[k] = 1.0; v };
        let phi = CylindricalTestFunction::poly_bump(vec![e(0), e(2)], vec![1, 2], vec![0.1, 0.0], 2.5).unwrap();
        let diag = DiagonalPairing(vec![1.0, 0.5, 2.0, 1.5]);
        let pairing: &dyn Pairing = if diagonal { &diag } else { &Euclidean };
        let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let lhs = phi.pair_with_grad(&combo, &u, pairing).unwrap();
        let rhs = a * phi.pair_with_grad(&w1, &u, pairing).unwrap()
            + b * phi.pair_with_grad(&w2, &u, pairing).unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn nse_trilinear_matches_physical_grid_2d(
        x in state(12, 1.0), y in state(12, 1.0), z in state(12, 1.0)
    ) {
        let m = nse_2d();
        let b = m.bilinear(&x, &y);
        let spectral: f64 = b.iter().zip(&z).map(|(p, q)| p * q).sum();
        let grid = trilinear_on_grid(&m, &x, &y, &z, 16);
        prop_assert!((spectral - grid).abs() <= 1e-12 * (1.0 + grid.abs()), "{} vs {}", spectral, grid);
    }

    #[test]
    fn nse_orthogonality(x in state(12, 3.0), y in state(12, 3.0)) {
        let m = nse_2d();
        let b = m.bilinear(&x, &y);
        let byy: f64 = b.iter().zip(&y).map(|(p, q)| p * q).sum();
        let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(byy.abs() <= 1e-12 * norm.max(1e-300));
        // Same on the grid, independent of the triad bookkeeping.
        prop_assert!(trilinear_on_grid(&m, &x, &y, &y, 16).abs() <= 1e-11 * (1.0 + norm));
    }

    #[test]
    fn nse_bilinearity(
        x1 in state(12, 1.0), x2 in state(12, 1.0), y in state(12, 1.0),
        a in -2.0..2.0f64, c in -2.0..2.0f64,
    ) {
        let m = nse_2d();
        let combo: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + c * q).collect();
        let left = m.bilinear(&combo, &y);
        let right: Vec<f64> = m.bilinear(&x1, &y).iter().zip(&m.bilinear(&x2, &y)).map(|(p, q)| a * p + c * q).collect();
        let right_arg = m.bilinear(&y, &combo);
        let right_arg2: Vec<f64> = m.bilinear(&y, &x1).iter().zip(&m.bilinear(&y, &x2)).map(|(p, q)| a * p + c * q).collect();
        for i in 0..12 {
            prop_assert!((left[i] - right[i]).abs() <= 1e-12 * (1.0 + right[i].abs()));
            prop_assert!((right_arg[i] - right_arg2[i]).abs() <= 1e-12 * (1.0 + right_arg2[i].abs()));
        }
    }

    #[test]
    fn initial_condition_is_exact(mu in ensemble(8), scheme in prop_oneof![Just(Scheme::Rk4), Just(Scheme::Imex)]) {
        let mu = mu.pushforward(|x| x.iter().map(|v| 0.1 * v).collect()).unwrap();
        let m: Arc<dyn Model> = Arc::new(
            ReactionDiffusion::new(8, PI, 0.1, Reaction::default(), Forcing::single(8, 0, 1.0)).unwrap(),
        );
        let g = TimeGrid::new(0.0, 0.05, 4).unwrap();
        let rho = solve_ivp(m, &mu, &g, scheme).unwrap();
        prop_assert_eq!(rho.project(0).unwrap(), mu.clone());
        prop_assert_eq!(rho.initial_condition_check(&mu).unwrap(), 0.0);
        prop_assert_eq!(rho.z_carrier_fraction(), 1.0);
    }

    #[test]
    fn projection_is_consistent(mu in ensemble(1), node in 0usize..=10) {
        let m: Arc<dyn Model> = Arc::new(LinearDecay::new(1, 0.7).unwrap());
        let g = TimeGrid::new(0.0, 0.1, 10).unwrap();
        let rho = solve_ivp(m, &mu, &g, Scheme::Rk4).unwrap();
        let phi = |x: &[f64]| (x[0] * 0.3).sin();
        let projected = rho.project(node).unwrap().expectation(phi).unwrap();
        let terms: Vec<f64> = rho
            .trajectories()
            .iter()
            .zip(rho.weights())
            .map(|(tr, w)| w * phi(&tr.states[node]))
            .collect();
        prop_assert_eq!(projected, pairwise_sum(&terms));
    }
}

#[test]
fn nse_trilinear_matches_physical_grid_3d() {
    let m = nse_3d();
    let dim = m.dim();
    let s = |seed: f64| -> Vec<f64> { (0..dim).map(|i| ((i as f64 + 1.0) * seed).sin()).collect() };
    let (x, y, z) = (s(0.37), s(1.13), s(2.71));
    let b = m.bilinear(&x, &y);
    let spectral: f64 = b.iter().zip(&z).map(|(p, q)| p * q).sum();
    let grid = trilinear_on_grid(&m, &x, &y, &z, 8);
    assert!(spectral.abs() > 1e-3);
    assert!((spectral - grid).abs() < 1e-12 * (1.0 + grid.abs()), "{spectral} vs {grid}");
    let byy: f64 = m.bilinear(&x, &y).iter().zip(&y).map(|(p, q)| p * q).sum();
    assert!(byy.abs() < 1e-12);
}

#[test]
fn wave_energy_is_conserved_by_refined_rk4() {
    let m = Wave::new(8, PI, 2.0, Forcing::zero(8)).unwrap();
    let u0: Vec<f64> = (0..16).map(|i| 0.3 / (1 + i % 8) as f64).collect();
    let mut drifts = Vec::new();
    for level in 0..3 {
        let g = TimeGrid::new(0.0, 0.05 / (1 << level) as f64, 20 << level).unwrap();
        let tr = statsol_core::integrate(&m, &u0, &g, Scheme::Rk4).unwrap();
        drifts.push((m.energy(tr.final_state()) - m.energy(&u0)).abs());
    }
    for w in drifts.windows(2) {
        assert!(w[0] / w[1] > 14.0, "{drifts:?}");
    }
}
