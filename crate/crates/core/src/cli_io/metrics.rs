//! Error metrics against a reference solution.

use serde::Serialize;

use crate::error::{precondition, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub linf: f64,
    /// `||pred - ref||_2 / ||ref||_2`, or the absolute norm when the reference vanishes.
    pub rel_l2: f64,
    #[serde(skip)]
    pub pointwise: Vec<f64>,
}

/// Compares predictions with reference values sampled at the same points.
pub fn compare_to_exact(predicted: &[f64], exact: &[f64]) -> Result<ErrorMetrics> {
    if predicted.len() != exact.len() {
        return precondition(format!("mesh mismatch: {} predictions vs {} reference values", predicted.len(), exact.len()));
    }
    if predicted.is_empty() {
        return precondition("no samples to compare");
    }
    let pointwise: Vec<f64> = predicted.iter().zip(exact).map(|(p, e)| (p - e).abs()).collect();
    let linf = pointwise.iter().fold(0.0f64, |a, &v| a.max(v));
    let err = pointwise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel_l2 = if norm > 0.0 { err / norm } else { err };
    Ok(ErrorMetrics { linf, rel_l2, pointwise })
}
