//! Expected improvement for minimization.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `E[max(best - Y, 0)]` for `Y ~ N(mean, variance)`.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let improvement = best - mean;
    let s = variance.max(0.0).sqrt();
    if s == 0.0 || !s.is_finite() {
        return improvement.max(0.0);
    }
    let z = improvement / s;
    (improvement * normal_cdf(z) + s * normal_pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_form_values() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        assert!((expected_improvement(0.0, 1.0, 1.0) - 1.08331).abs() < 1e-4);
        assert!((expected_improvement(0.0, 1.0, 0.0) - 0.39894).abs() < 1e-4);
        assert!((normal_cdf(1.0) - 0.841344746).abs() < 1e-9);
    }

    #[test]
    fn ei_against_quadrature() {
        // trapezoid integral of max(best - y, 0) against the normal density
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let mean: f64 = rng.random_range(-2.0..2.0);
            let s: f64 = rng.random_range(0.05..2.0);
            let best: f64 = rng.random_range(-2.0..2.0);
            let (lo, hi, n) = (mean - 12.0 * s, mean + 12.0 * s, 20_000);
            let h = (hi - lo) / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let y = lo + h * i as f64;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += w * (best - y).max(0.0) * normal_pdf((y - mean) / s) / s;
            }
            acc *= h;
            assert!((expected_improvement(mean, s * s, best) - acc).abs() < 1e-6);
        }
    }

    #[test]
    fn nonnegative_and_monotone_in_variance() {
        for i in 0..41 {
            let mean = -2.0 + 0.1 * i as f64;
            let mut prev = 0.0;
            for j in 0..60 {
                let var = (j as f64 * 0.05).powi(2);
                let ei = expected_improvement(mean, var, 0.0);
                assert!(ei >= 0.0);
                assert!(ei >= prev - 1e-15, "mean {mean} var {var}");
                prev = ei;
            }
        }
    }
}
