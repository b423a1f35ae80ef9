//! End-to-end workflows: curriculum, forward search, time blocks, inverse.

pub mod advection;
pub mod curriculum;
pub mod forward;
pub mod inverse;

use serde::{Deserialize, Serialize};

use crate::bayesopt::{ParamBound, SearchBounds};
use crate::error::{precondition, Result};
use crate::sampling::{AdaptiveComponent, InverseParams, MixtureHyperparams};

pub use advection::{characteristic_mask, final_time_error, run_advection, solve_advection_timeblocks, AdvectionReport, AdvectionSolution, BlockTunables, CharacteristicMask, TimeBlockSpec};
pub use curriculum::{run_baseline_curriculum, CurriculumResult};
pub use forward::{forward_objective, run_kapi_forward, ForwardReport, ForwardRunSpec};
pub use inverse::{generate_sensor_data, SENSOR_STREAM, run_inverse, InverseReport, InverseRunSpec, SensorPlacement, SensorSet};

/// Per-evaluation seed from the run seed and the evaluation index.
pub fn derive_seed(global: u64, index: u64) -> u64 {
    let mut z = global ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Search ranges for one adaptive component. One entry in `mean` or
/// `spread` means the value is shared by every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentBounds {
    pub fraction: (f64, f64),
    pub mean: Vec<(f64, f64)>,
    pub spread: Vec<(f64, f64)>,
    pub decay: (f64, f64),
}

const AXES: [&str; 2] = ["x", "y"];

fn axis_names(stem: &str, k: usize, n: usize) -> Vec<String> {
    if n == 1 {
        vec![format!("{stem}{k}")]
    } else {
        (0..n).map(|d| format!("{stem}{k}_{}", AXES[d])).collect()
    }
}

/// Named parameter bounds `f{k}`, `mu{k}[_x|_y]`, `tau{k}[_x|_y]`, `lambda{k}`.
pub fn mixture_bounds(components: &[ComponentBounds]) -> Vec<ParamBound> {
    let mut out = Vec::new();
    for (i, c) in components.iter().enumerate() {
        let k = i + 1;
        out.push(ParamBound::new(&format!("f{k}"), c.fraction.0, c.fraction.1));
        for (name, (lo, hi)) in axis_names("mu", k, c.mean.len()).iter().zip(&c.mean) {
            out.push(ParamBound::new(name, *lo, *hi));
        }
        for (name, (lo, hi)) in axis_names("tau", k, c.spread.len()).iter().zip(&c.spread) {
            out.push(ParamBound::new(name, *lo, *hi));
        }
        out.push(ParamBound::new(&format!("lambda{k}"), c.decay.0, c.decay.1));
    }
    out
}

fn lookup(bounds: &SearchBounds, w: &[f64], name: &str) -> Option<f64> {
    bounds.index_of(name).map(|i| w[i])
}

fn per_axis(bounds: &SearchBounds, w: &[f64], stem: &str, k: usize, dim: usize) -> Result<Vec<f64>> {
    if let Some(v) = lookup(bounds, w, &format!("{stem}{k}")) {
        return Ok(vec![v; dim]);
    }
    axis_names(stem, k, dim)
        .iter()
        .map(|n| lookup(bounds, w, n).map_or_else(|| precondition(format!("missing search parameter {n}")), Ok))
        .collect()
}

/// Rebuilds mixture hyperparameters from a search vector laid out by
/// [`mixture_bounds`], plus optional `mu_nu`/`r_nu` or `a` entries.
pub fn decode_mixture(
    bounds: &SearchBounds,
    w: &[f64],
    dim: usize,
    n_adap: usize,
    eta: f64,
    isotropic_widths: bool,
) -> Result<MixtureHyperparams> {
    if w.len() != bounds.dim() {
        return precondition(format!("search vector has {} entries, bounds have {}", w.len(), bounds.dim()));
    }
    let mut components = Vec::with_capacity(n_adap);
    for k in 1..=n_adap {
        let need = |n: String| lookup(bounds, w, &n).map_or_else(|| precondition(format!("missing search parameter {n}")), Ok);
        components.push(AdaptiveComponent {
            fraction: need(format!("f{k}"))?,
            mean: per_axis(bounds, w, "mu", k, dim)?,
            spread: per_axis(bounds, w, "tau", k, dim)?,
            decay: need(format!("lambda{k}"))?,
        });
    }
    let inverse = if let Some(mean) = lookup(bounds, w, "mu_nu") {
        let std = lookup(bounds, w, "r_nu").map_or(0.0, |r| r * mean);
        Some(InverseParams::Diffusivity { mean, std })
    } else {
        lookup(bounds, w, "a").map(InverseParams::AdvectionSpeed)
    };
    Ok(MixtureHyperparams {
        components,
        eta,
        isotropic_widths,
        inverse,
    })
}
