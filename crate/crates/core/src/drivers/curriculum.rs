//! Baseline solves over a decreasing stiffness schedule, followed by
//! sharp-gradient detection on the last accurate solution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assembly::{build_system, evaluate_model, ConstraintRow, RowTag, SolvedModel};
use crate::clustering::{detect_gradient_clusters, GradientClusterResult, DEFAULT_EPSILON, DEFAULT_MIN_PTS};
use crate::error::{precondition, KapiError, Result};
use crate::problems::PdeProblem;
use crate::sampling::{sample_configuration, uniform_grid, BaselineConfig, MixtureHyperparams};

pub const DEFAULT_SOLVABLE_THRESHOLD: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct CurriculumResult {
    /// Smallest schedule value whose baseline loss met the threshold.
    pub nu: f64,
    /// `(nu, loss)` for every value attempted, in schedule order.
    pub losses: Vec<(f64, f64)>,
    pub clusters: GradientClusterResult,
    pub model: SolvedModel,
}

impl CurriculumResult {
    /// Number of adaptive components suggested by the detected regions.
    pub fn n_adap(&self) -> usize {
        self.clusters.n_clusters
    }
}

/// Uniform-kernel solve of `problem` with the given baseline.
pub fn solve_baseline(problem: &PdeProblem, baseline: &BaselineConfig) -> Result<SolvedModel> {
    let hp = MixtureHyperparams::baseline_only(&problem.domain);
    let cfg = sample_configuration(&hp, baseline, &problem.domain, problem.nu, &mut ChaCha8Rng::seed_from_u64(0))?;
    let constraints = ConstraintRow::tagged(problem.boundary_rows(baseline.n_boundary), RowTag::Boundary);
    let system = build_system(problem, &cfg.basis, &cfg.interior_pts, &constraints)?;
    SolvedModel::fit(cfg.basis, &system)
}

/// Walks `schedule` (strictly decreasing) with the baseline solver, stops at
/// the first value whose loss reaches `threshold`, and clusters the
/// high-gradient points of the last accurate solution on the collocation grid.
pub fn run_baseline_curriculum(
    problem: &PdeProblem,
    baseline: &BaselineConfig,
    schedule: &[f64],
    threshold: f64,
) -> Result<CurriculumResult> {
    if problem.dim() != 1 {
        return precondition("the curriculum works on 1D problems");
    }
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return precondition("schedule must be non-empty and strictly decreasing");
    }
    if !(threshold > 0.0) {
        return precondition("threshold must be positive");
    }
    let mut losses = Vec::new();
    let mut accepted: Option<(f64, SolvedModel)> = None;
    for &nu in schedule {
        let p = PdeProblem::with_domain(problem.kind, problem.domain.clone(), nu, problem.advection_speed)?;
        let model = solve_baseline(&p, baseline)?;
        log::info!("curriculum nu = {nu:e}: loss {:e}", model.loss);
        losses.push((nu, model.loss));
        if model.loss >= threshold {
            break;
        }
        accepted = Some((nu, model));
    }
    let Some((nu, model)) = accepted else {
        let listing: Vec<String> = losses.iter().map(|(n, l)| format!("nu={n:e}: loss={l:e}")).collect();
        return Err(KapiError::Unsolvable(listing.join(", ")));
    };
    let grid = uniform_grid(&problem.domain, baseline.n_colloc);
    let xs: Vec<f64> = grid.iter().map(|p| p[0]).collect();
    let ys = evaluate_model(&model, &grid)?;
    let clusters = detect_gradient_clusters(&xs, &ys, DEFAULT_EPSILON, DEFAULT_MIN_PTS)?;
    Ok(CurriculumResult {
        nu,
        losses,
        clusters,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> BaselineConfig {
        BaselineConfig {
            n_colloc: 500,
            n_rbf: 500,
            sigma_f: 0.1,
            n_boundary: 2,
            n_initial: None,
        }
    }

    #[test]
    fn non_stiff_first_value_short_circuits_on_failure_after() {
        let r = run_baseline_curriculum(&PdeProblem::type1(0.1).unwrap(), &baseline(), &[0.5, 0.2], 1e-3).unwrap();
        assert_eq!(r.losses.len(), 2);
        assert_eq!(r.nu, 0.2);
    }

    #[test]
    fn stops_at_first_failure() {
        let r = run_baseline_curriculum(&PdeProblem::type1(0.1).unwrap(), &baseline(), &[0.1, 1e-4, 1e-5], 1e-3).unwrap();
        assert_eq!(r.losses.len(), 2);
        assert_eq!(r.nu, 0.1);
        assert!(r.losses[1].1 >= 1e-3);
    }

    #[test]
    fn unsolvable_schedule_lists_losses() {
        let err = run_baseline_curriculum(&PdeProblem::type1(0.1).unwrap(), &baseline(), &[1e-4], 1e-3).unwrap_err();
        match err {
            KapiError::Unsolvable(msg) => assert!(msg.contains("nu=1e-4")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schedule_must_decrease() {
        assert!(run_baseline_curriculum(&PdeProblem::type1(0.1).unwrap(), &baseline(), &[0.01, 0.1], 1e-3).is_err());
        assert!(run_baseline_curriculum(&PdeProblem::poisson(0.1).unwrap(), &baseline(), &[0.1], 1e-3).is_err());
    }
}
