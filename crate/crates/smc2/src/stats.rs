//! Weighted population statistics and small numerical helpers.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// log(sum(exp(xs))) computed against the running maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m; // all -inf (or contains +inf/NaN, which we let propagate)
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Normalize log-weights into probabilities. Errors when every entry is -inf.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return Err(Error::degenerate("all log-weights are -inf"));
    }
    Ok(log_w.iter().map(|&lw| (lw - lse).exp()).collect())
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo standard error of a chain mean via the initial positive
/// sequence estimator of the asymptotic variance (Geyer). Honest for slowly
/// mixing chains where batch means undercover.
pub fn ips_se(chain: &[f64], max_lag: usize) -> f64 {
    let n = chain.len();
    if n < 4 {
        return f64::INFINITY;
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let autocov = |k: usize| -> f64 {
        (0..n - k)
            .map(|i| (chain[i] - mean) * (chain[i + k] - mean))
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = autocov(0);
    if gamma0 == 0.0 {
        return 0.0;
    }
    let m_max = max_lag.min(n / 2 - 1) / 2;
    let mut var_asymp = -gamma0;
    for m in 0..=m_max {
        let pair = autocov(2 * m) + autocov(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        var_asymp += 2.0 * pair;
    }
    (var_asymp.max(gamma0) / n as f64).sqrt()
}

/// Monte Carlo standard error of a chain mean via non-overlapping batch means.
pub fn batch_means_se(chain: &[f64], n_batches: usize) -> f64 {
    let b = n_batches.max(2).min(chain.len());
    let len = chain.len() / b;
    if len == 0 {
        return f64::INFINITY;
    }
    let means: Vec<f64> = (0..b)
        .map(|i| chain[i * len..(i + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let (_, se) = mean_se(&means);
    se
}

/// Weighted mean, covariance and derived matrices of a particle population.
#[derive(Debug, Clone)]
pub struct PopulationStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub inv: DMatrix<f64>,
}

/// Weighted mean and covariance of row vectors `points` (one row per
/// particle) under normalized weights, with the inverse square root computed
/// by symmetric eigendecomposition. Eigenvalues are floored at 1e-12.
///
/// A population without at least two distinct support points signals a
/// collapsed sampler and is an error.
pub fn weighted_mean_cov(points: &[Vec<f64>], weights: &[f64]) -> Result<PopulationStats> {
    let n = points.len();
    if n < 2 {
        return Err(Error::degenerate("population needs at least 2 particles"));
    }
    let dim = points[0].len();
    let mut distinct = false;
    let first_support = points
        .iter()
        .zip(weights)
        .find(|(_, &w)| w > 0.0)
        .map(|(p, _)| p.clone())
        .ok_or_else(|| Error::degenerate("population has no weight"))?;
    for (p, &w) in points.iter().zip(weights) {
        if w > 0.0 && p.iter().zip(&first_support).any(|(a, b)| a != b) {
            distinct = true;
            break;
        }
    }
    if !distinct {
        return Err(Error::degenerate(
            "population support has collapsed to a single point",
        ));
    }

    let mut mean: DVector<f64> = DVector::zeros(dim);
    for (p, &w) in points.iter().zip(weights) {
        for j in 0..dim {
            mean[j] += w * p[j];
        }
    }
    let mut cov: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for (p, &w) in points.iter().zip(weights) {
        for j in 0..dim {
            let dj = p[j] - mean[j];
            for k in j..dim {
                cov[(j, k)] += w * dj * (p[k] - mean[k]);
            }
        }
    }
    for j in 0..dim {
        for k in 0..j {
            cov[(j, k)] = cov[(k, j)];
        }
    }

    let eig = cov.clone().symmetric_eigen();
    let floor = 1e-12;
    let mut inv_sqrt: DMatrix<f64> = DMatrix::zeros(dim, dim);
    let mut inv: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        let lam: f64 = eig.eigenvalues[a].max(floor);
        let va = eig.eigenvectors.column(a);
        let s_inv_sqrt = lam.sqrt().recip();
        let s_inv = lam.recip();
        for j in 0..dim {
            for k in 0..dim {
                inv_sqrt[(j, k)] += s_inv_sqrt * va[j] * va[k];
                inv[(j, k)] += s_inv * va[j] * va[k];
            }
        }
    }

    Ok(PopulationStats {
        mean,
        cov,
        inv_sqrt,
        inv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_handles_extremes() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2.0f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn two_point_population() {
        // two equally-weighted 1-D points at +/-1: variance 1, inverse sqrt 1
        let stats =
            weighted_mean_cov(&[vec![1.0], vec![-1.0]], &[0.5, 0.5]).unwrap();
        assert!((stats.mean[0]).abs() < 1e-15);
        assert!((stats.cov[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((stats.inv_sqrt[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapsed_population_is_an_error() {
        assert!(weighted_mean_cov(&[vec![2.0], vec![2.0]], &[0.5, 0.5]).is_err());
        // weight concentrated on one point behaves the same way
        assert!(weighted_mean_cov(&[vec![2.0], vec![3.0]], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![t.sin() * 2.0, t.cos() + 0.3 * t.sin(), 0.5 * (2.0 * t).sin()]
            })
            .collect();
        let w = vec![1.0 / 40.0; 40];
        let stats = weighted_mean_cov(&pts, &w).unwrap();
        let prod = &stats.inv_sqrt * &stats.inv_sqrt * &stats.cov;
        for j in 0..3 {
            for k in 0..3 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!(
                    (prod[(j, k)] - expect).abs() < 1e-6,
                    "entry ({j},{k}) = {}",
                    prod[(j, k)]
                );
            }
        }
    }

    #[test]
    fn mahalanobis_rotation_invariance() {
        // Mahalanobis products computed from the outputs are invariant to a
        // rotation of the raw points.
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.11;
                vec![(3.0 * t).sin() + 0.2 * t, (2.0 * t).cos()]
            })
            .collect();
        let w = vec![1.0 / 60.0; 60];
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let rotated: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| vec![c * p[0] - s * p[1], s * p[0] + c * p[1]])
            .collect();
        let a = weighted_mean_cov(&pts, &w).unwrap();
        let b = weighted_mean_cov(&rotated, &w).unwrap();
        for (p, q) in pts.iter().zip(&rotated) {
            let da = DVector::from_vec(vec![p[0] - a.mean[0], p[1] - a.mean[1]]);
            let db = DVector::from_vec(vec![q[0] - b.mean[0], q[1] - b.mean[1]]);
            let ma = (da.transpose() * &a.inv * &da)[(0, 0)];
            let mb = (db.transpose() * &b.inv * &db)[(0, 0)];
            assert!((ma - mb).abs() < 1e-8 * ma.abs().max(1.0));
        }
    }
}
