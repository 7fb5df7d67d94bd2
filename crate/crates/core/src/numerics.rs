//! Summation, quadrature and convergence-order helpers shared by the
//! verifiers.

/// Pairwise (cascade) summation. The split points depend only on the length
/// of the input, so the result is reproducible regardless of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Composite trapezoid rule for samples on a uniform grid with spacing `dt`.
pub fn trapezoid(samples: &[f64], dt: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => {
            let interior = pairwise_sum(&samples[1..n - 1]);
            dt * (0.5 * (samples[0] + samples[n - 1]) + interior)
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `y += alpha * x`
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Least-squares slope of `log|value|` against `log(step)`.
///
/// Returns `None` when fewer than two points are given or when any value is
/// zero or non-finite, in which case no order can be read off.
pub fn fit_order(steps: &[f64], values: &[f64]) -> Option<f64> {
    if steps.len() != values.len() || steps.len() < 2 {
        return None;
    }
    if values.iter().any(|v| !v.is_finite() || *v == 0.0) {
        return None;
    }
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Orders read off successive pairs: `log2(v[i] / v[i+1])` for halved steps.
pub fn successive_orders(values: &[f64]) -> Vec<Option<f64>> {
    values
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].abs(), w[1].abs());
            if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
                Some((a / b).log2())
            } else {
                None
            }
        })
        .collect()
}
