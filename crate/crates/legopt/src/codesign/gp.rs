//! Gaussian-process regression over morphology fitness.
//!
//! Isotropic RBF kernel with a shared lengthscale picked by grid search over
//! the profile log marginal likelihood; the amplitude has a closed form given
//! the correlation matrix, and a relative jitter keeps the factorization
//! positive definite (and absorbs duplicate inputs). Targets are standardized
//! internally.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("gaussian process needs at least one observation")]
    Empty,
    #[error("non-finite fitness value at observation {index}: {value}")]
    NonFinite { index: usize, value: f64 },
    #[error("observation {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("kernel matrix is not positive definite (lengthscale {lengthscale})")]
    NotPositiveDefinite { lengthscale: f64 },
}

/// Relative jitter added to the correlation diagonal.
pub const JITTER: f64 = 1e-6;
/// Lengthscale grid for the default hyperparameter search.
pub const LENGTHSCALE_GRID: [f64; 4] = [0.1, 0.2, 0.4, 0.8];

#[derive(Debug, Clone, Copy)]
pub enum HyperStrategy {
    /// Grid-search the shared lengthscale by profile log marginal likelihood.
    GridSearch,
    /// Fix the shared lengthscale.
    Fixed { lengthscale: f64 },
}

#[derive(Debug)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    y_raw: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    /// Per-dimension lengthscales (shared value after grid search).
    lengthscales: Vec<f64>,
    /// Profile amplitude sigma^2 on the standardized scale.
    amplitude: f64,
    chol: Cholesky<f64, Dyn>,
    /// (R + jitter I)^{-1} y_standardized.
    alpha: DVector<f64>,
}

fn sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((ai, bi), l)| {
            let d = (ai - bi) / l;
            d * d
        })
        .sum()
}

fn correlation(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    (-0.5 * sq_dist(a, b, lengthscales)).exp()
}

struct FitResult {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    amplitude: f64,
    log_marginal: f64,
}

fn fit_lengthscale(
    x: &[Vec<f64>],
    y_std: &DVector<f64>,
    lengthscale: f64,
    dim: usize,
) -> Result<FitResult, GpError> {
    let n = x.len();
    let ls = vec![lengthscale; dim];
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = correlation(&x[i], &x[j], &ls);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += JITTER;
    }
    let chol = k
        .cholesky()
        .ok_or(GpError::NotPositiveDefinite { lengthscale })?;
    let alpha = chol.solve(y_std);
    let fit = y_std.dot(&alpha);
    // Profile amplitude; floor keeps the degenerate constant-target case
    // well-defined.
    let amplitude = (fit / n as f64).max(1e-12);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let log_marginal = -0.5 * (n as f64 * amplitude.ln() + log_det);
    Ok(FitResult {
        chol,
        alpha,
        amplitude,
        log_marginal,
    })
}

/// Fit the surrogate to observations `(x, y)`.
pub fn gp_fit(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    strategy: HyperStrategy,
) -> Result<GpSurrogate, GpError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(GpError::Empty);
    }
    let dim = x[0].len();
    for (index, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(GpError::DimensionMismatch {
                index,
                expected: dim,
                got: row.len(),
            });
        }
    }
    for (index, &value) in y.iter().enumerate() {
        if !value.is_finite() {
            return Err(GpError::NonFinite { index, value });
        }
    }

    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n;
    let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let standardized = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));

    let fit = match strategy {
        HyperStrategy::Fixed { lengthscale } => {
            fit_lengthscale(&x, &standardized, lengthscale, dim)?
        }
        HyperStrategy::GridSearch => {
            let mut best: Option<(f64, FitResult)> = None;
            for &ls in &LENGTHSCALE_GRID {
                let candidate = fit_lengthscale(&x, &standardized, ls, dim)?;
                let better = match &best {
                    None => true,
                    Some((_, incumbent)) => candidate.log_marginal > incumbent.log_marginal,
                };
                if better {
                    best = Some((ls, candidate));
                }
            }
            let (ls, fit) = best.expect("non-empty grid");
            return Ok(GpSurrogate {
                x,
                y_raw: y,
                y_mean,
                y_std,
                lengthscales: vec![ls; dim],
                amplitude: fit.amplitude,
                chol: fit.chol,
                alpha: fit.alpha,
            });
        }
    };

    let lengthscale = match strategy {
        HyperStrategy::Fixed { lengthscale } => lengthscale,
        HyperStrategy::GridSearch => unreachable!(),
    };
    Ok(GpSurrogate {
        x,
        y_raw: y,
        y_mean,
        y_std,
        lengthscales: vec![lengthscale; dim],
        amplitude: fit.amplitude,
        chol: fit.chol,
        alpha: fit.alpha,
    })
}

impl GpSurrogate {
    pub fn len(&self) -> usize {
        self.y_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_raw.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    /// Best observed raw fitness.
    pub fn best_observed(&self) -> f64 {
        self.y_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Observed fitness range (max - min).
    pub fn observed_range(&self) -> f64 {
        let max = self.best_observed();
        let min = self.y_raw.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Prior variance on the raw scale.
    pub fn prior_variance(&self) -> f64 {
        self.amplitude * self.y_std * self.y_std
    }

    /// Posterior (mean, variance) at `x`, on the raw fitness scale.
    /// Numerical negatives are clamped to zero variance.
    pub fn predict(&self, query: &[f64]) -> (f64, f64) {
        debug_assert_eq!(query.len(), self.dim());
        let n = self.x.len();
        let r = DVector::from_iterator(
            n,
            self.x
                .iter()
                .map(|xi| correlation(xi, query, &self.lengthscales)),
        );
        let mean_std = r.dot(&self.alpha);
        let solve = self.chol.solve(&r);
        let var_std = self.amplitude * (1.0 - r.dot(&solve));
        let mean = self.y_mean + self.y_std * mean_std;
        let var = (self.y_std * self.y_std * var_std).max(0.0);
        (mean, var)
    }
}
