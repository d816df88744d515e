//! Expected improvement and its multistart maximization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::codesign::gp::GpSurrogate;

/// Closed-form expected improvement for maximization with an exploration
/// offset: EI = (mu - best - offset) Phi(z) + sigma phi(z). At zero variance
/// it degenerates to max(mu - best - offset, 0).
pub fn expected_improvement(mean: f64, variance: f64, best_so_far: f64, offset: f64) -> f64 {
    let gap = mean - best_so_far - offset;
    if variance <= 0.0 {
        return gap.max(0.0);
    }
    let sigma = variance.sqrt();
    let z = gap / sigma;
    let standard = Normal::standard();
    let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (gap * standard.cdf(z) + sigma * phi).max(0.0)
}

fn ei_at(gp: &GpSurrogate, x: &[f64], best: f64, offset: f64) -> f64 {
    let (mean, var) = gp.predict(x);
    expected_improvement(mean, var, best, offset)
}

/// Maximize EI by multistart compass (pattern) search from random interior
/// points. Deterministic given the RNG state; the result is clipped to the
/// bounds.
pub fn propose(
    gp: &GpSurrogate,
    bounds: &[(f64, f64)],
    offset: f64,
    rng: &mut ChaCha8Rng,
    multistarts: usize,
) -> Vec<f64> {
    assert_eq!(bounds.len(), gp.dim(), "bounds dimension");
    let best_observed = gp.best_observed();
    let ranges: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();

    let mut best_x: Option<Vec<f64>> = None;
    let mut best_ei = f64::NEG_INFINITY;

    for _ in 0..multistarts.max(1) {
        let mut x: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| {
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        let mut value = ei_at(gp, &x, best_observed, offset);

        let mut step = 0.25;
        while step > 1e-4 {
            let mut improved = false;
            for d in 0..x.len() {
                for sign in [1.0, -1.0] {
                    let mut candidate = x.clone();
                    candidate[d] =
                        (candidate[d] + sign * step * ranges[d]).clamp(bounds[d].0, bounds[d].1);
                    let v = ei_at(gp, &candidate, best_observed, offset);
                    if v > value {
                        x = candidate;
                        value = v;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }

        if value > best_ei {
            best_ei = value;
            best_x = Some(x);
        }
    }

    best_x.expect("at least one start")
}
