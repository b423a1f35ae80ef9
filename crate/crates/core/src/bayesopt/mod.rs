//! Gaussian-process Bayesian optimization over a bounded box.

pub mod acquisition;
pub mod gp;
pub mod optimizer;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};

pub use acquisition::expected_improvement;
pub use gp::{gp_fit, gp_fit_in_box, GpHyper, GpSurrogate};
pub use optimizer::{bayes_step, optimize, BoOutcome, StopReason};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Search in log10 of the parameter.
    #[serde(default)]
    pub log_scale: bool,
}

impl ParamBound {
    pub fn new(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            lower,
            upper,
            log_scale: false,
        }
    }

    pub fn log(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            log_scale: true,
            ..Self::new(name, lower, upper)
        }
    }

    fn to_unit(&self, v: f64) -> f64 {
        if self.log_scale {
            (v.log10() - self.lower.log10()) / (self.upper.log10() - self.lower.log10())
        } else {
            (v - self.lower) / (self.upper - self.lower)
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = if self.log_scale {
            10f64.powf(self.lower.log10() + u * (self.upper.log10() - self.lower.log10()))
        } else {
            self.lower + u * (self.upper - self.lower)
        };
        v.clamp(self.lower, self.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    params: Vec<ParamBound>,
}

impl SearchBounds {
    pub fn new(params: Vec<ParamBound>) -> Result<Self> {
        if params.is_empty() {
            return precondition("at least one search parameter is required");
        }
        for p in &params {
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower < p.upper) {
                return precondition(format!("bounds for {} must satisfy lower < upper", p.name));
            }
            if p.log_scale && p.lower <= 0.0 {
                return precondition(format!("log-scale bounds for {} must be positive", p.name));
            }
        }
        Ok(Self { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamBound] {
        &self.params
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Maps a parameter vector into the unit cube.
    pub fn to_unit(&self, w: &[f64]) -> Vec<f64> {
        self.params.iter().zip(w).map(|(p, v)| p.to_unit(*v)).collect()
    }

    /// Maps unit-cube coordinates back to parameters, clamped into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.params.iter().zip(u).map(|(p, v)| p.from_unit(*v)).collect()
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        w.len() == self.dim() && self.params.iter().zip(w).all(|(p, v)| *v >= p.lower && *v <= p.upper)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    /// Total objective evaluations allowed (`k_max`).
    pub max_evaluations: usize,
    /// Stop once a loss falls below this (`J_tol`).
    pub loss_tolerance: f64,
    /// Stop once consecutive proposals move less than this in unit coordinates.
    pub step_tolerance: f64,
    /// Carried for completeness; no stopping rule reads it.
    pub loss_change_tolerance: f64,
    /// Space-filling evaluations before the surrogate takes over;
    /// `None` means `max(5, 2 * dim)`.
    pub initial_points: Option<usize>,
    pub candidates: usize,
    pub local_candidates: usize,
    /// Lower bound on the surrogate noise variance in standardized units.
    pub noise_floor: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            max_evaluations: 100,
            loss_tolerance: 1e-6,
            step_tolerance: 1e-4,
            loss_change_tolerance: 1e-8,
            initial_points: None,
            candidates: 2000,
            local_candidates: 50,
            noise_floor: 1e-6,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_evaluations == 0 {
            return precondition("max_evaluations must be at least 1");
        }
        for (name, v) in [
            ("loss_tolerance", self.loss_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("loss_change_tolerance", self.loss_change_tolerance),
            ("noise_floor", self.noise_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return precondition(format!("{name} must be positive, got {v}"));
            }
        }
        if self.candidates + self.local_candidates == 0 {
            return precondition("at least one acquisition candidate is required");
        }
        Ok(())
    }

    pub fn initial_count(&self, dim: usize) -> usize {
        self.initial_points.unwrap_or_else(|| (2 * dim).max(5))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoRecord {
    pub w: Vec<f64>,
    /// Loss used by the surrogate; failed evaluations hold the penalty.
    pub loss: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BoHistory {
    pub records: Vec<BoRecord>,
    /// Index of the lowest loss among successful records.
    pub incumbent: Option<usize>,
    /// Planned space-filling points in unit coordinates.
    pub design: Vec<Vec<f64>>,
}

impl BoHistory {
    pub fn iteration(&self) -> usize {
        self.records.len()
    }

    pub fn push(&mut self, record: BoRecord) {
        self.records.push(record);
        self.incumbent = best_index(&self.records);
    }

    pub fn best(&self) -> Option<&BoRecord> {
        self.incumbent.map(|i| &self.records[i])
    }

    pub fn worst_finite(&self) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| !r.failed)
            .map(|r| r.loss)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

fn best_index(records: &[BoRecord]) -> Option<usize> {
    let pick = |ok: bool| {
        records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.failed != ok)
            .min_by(|a, b| a.1.loss.total_cmp(&b.1.loss))
            .map(|(i, _)| i)
    };
    pick(true).or_else(|| pick(false))
}
