//! Forward solves driven by Bayesian optimization of the mixture parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{decode_mixture, derive_seed};
use crate::assembly::{build_system, evaluate_model, ConstraintRow, RowTag, SolvedModel};
use crate::bayesopt::{optimize, BoConfig, BoOutcome, SearchBounds};
use crate::cli_io::metrics::{compare_to_exact, ErrorMetrics};
use crate::error::{precondition, Result};
use crate::problems::{poisson_fdm_oracle, PdeProblem, ProblemKind};
use crate::sampling::{default_eta, grid_shape, sample_configuration, uniform_grid, BaselineConfig, MixtureHyperparams};

/// Stream index reserved for the optimizer's own draws.
const OPTIMIZER_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug)]
pub struct ForwardRunSpec {
    pub problem: PdeProblem,
    pub baseline: BaselineConfig,
    pub n_adap: usize,
    pub bounds: SearchBounds,
    pub bo: BoConfig,
    pub seed: u64,
    /// Total test points; 2D meshes use the nearest square.
    pub test_points: usize,
    pub eta: f64,
    pub isotropic_widths: bool,
}

impl ForwardRunSpec {
    /// Spec with default optimizer settings, `eta`, and test mesh
    /// (`10 N_c` points in 1D, `201 x 201` in 2D).
    pub fn new(problem: PdeProblem, baseline: BaselineConfig, n_adap: usize, bounds: SearchBounds) -> Self {
        let test_points = default_test_points(problem.dim(), baseline.n_colloc);
        Self {
            eta: default_eta(&problem.domain),
            isotropic_widths: problem.dim() > 1,
            problem,
            baseline,
            n_adap,
            bounds,
            bo: BoConfig::default(),
            seed: 0,
            test_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.bo.validate()?;
        let mid = self.bounds.from_unit(&vec![0.5; self.bounds.dim()]);
        let hp = self.decode(&mid)?;
        hp.validate(&self.problem.domain)?;
        let n_fractions = self.bounds.names().iter().filter(|n| n.starts_with('f') && n[1..].parse::<usize>().is_ok()).count();
        if n_fractions != self.n_adap {
            return precondition(format!("n_adap = {} but the bounds describe {n_fractions} components", self.n_adap));
        }
        if self.test_points <= self.baseline.n_colloc {
            return precondition(format!(
                "test mesh ({} points) must be finer than the collocation set ({})",
                self.test_points, self.baseline.n_colloc
            ));
        }
        Ok(())
    }

    pub fn decode(&self, w: &[f64]) -> Result<MixtureHyperparams> {
        decode_mixture(&self.bounds, w, self.problem.dim(), self.n_adap, self.eta, self.isotropic_widths)
    }

    pub fn test_mesh(&self) -> Vec<Vec<f64>> {
        uniform_grid(&self.problem.domain, self.test_points)
    }
}

pub fn default_test_points(dim: usize, n_colloc: usize) -> usize {
    if dim == 1 {
        10 * n_colloc
    } else {
        201 * 201
    }
}

/// One solved configuration with its kernel provenance.
#[derive(Clone, Debug)]
pub struct ForwardEval {
    pub loss: f64,
    pub model: SolvedModel,
    /// Mixture component of each kernel (0 = baseline).
    pub component_of: Vec<usize>,
}

/// Samples a configuration, adds the problem's boundary and initial rows
/// plus `extra`, and solves.
pub(crate) fn solve_sampled<R: rand::Rng + ?Sized>(
    problem: &PdeProblem,
    baseline: &BaselineConfig,
    hp: &MixtureHyperparams,
    extra: &[ConstraintRow],
    rng: &mut R,
) -> Result<ForwardEval> {
    let cfg = sample_configuration(hp, baseline, &problem.domain, problem.nu, rng)?;
    let mut rows = ConstraintRow::tagged(problem.boundary_rows(baseline.n_boundary), RowTag::Boundary);
    if let Some(n) = baseline.n_initial {
        rows.extend(ConstraintRow::tagged(problem.initial_rows(n), RowTag::Initial));
    }
    rows.extend_from_slice(extra);
    let system = build_system(problem, &cfg.basis, &cfg.interior_pts, &rows)?;
    let model = SolvedModel::fit(cfg.basis, &system)?;
    Ok(ForwardEval {
        loss: model.loss,
        model,
        component_of: cfg.component_of,
    })
}

pub(crate) fn forward_solve(spec: &ForwardRunSpec, hp: &MixtureHyperparams, eval_seed: u64) -> Result<ForwardEval> {
    solve_sampled(&spec.problem, &spec.baseline, hp, &[], &mut ChaCha8Rng::seed_from_u64(eval_seed))
}

/// Samples one configuration for `hp`, solves it and returns the max-norm
/// residual with the model. The same `(hp, eval_seed)` always gives the same
/// result. Solver failures surface as errors, which the optimizer records
/// as penalized evaluations.
pub fn forward_objective(spec: &ForwardRunSpec, hp: &MixtureHyperparams, eval_seed: u64) -> Result<(f64, SolvedModel)> {
    forward_solve(spec, hp, eval_seed).map(|e| (e.loss, e.model))
}

#[derive(Clone, Debug)]
pub struct ForwardReport {
    pub w_opt: Vec<f64>,
    pub hyper: MixtureHyperparams,
    pub best: ForwardEval,
    pub outcome: BoOutcome,
    pub test_points: Vec<Vec<f64>>,
    pub prediction: Vec<f64>,
    /// Exact solution, or the finite-difference reference for Poisson.
    pub reference: Option<Vec<f64>>,
    pub errors: Option<ErrorMetrics>,
}

impl ForwardReport {
    pub fn n_kernels(&self) -> usize {
        self.best.model.basis.len()
    }
}

fn reference_values(problem: &PdeProblem, pts: &[Vec<f64>], n_total: usize) -> Result<Option<Vec<f64>>> {
    if problem.kind == ProblemKind::Poisson2D {
        let side = grid_shape(2, n_total)[0];
        return poisson_fdm_oracle(problem.nu, side).map(|g| Some(g.values));
    }
    Ok(pts.iter().map(|p| problem.exact(p)).collect())
}

/// Optimizes the mixture parameters, rebuilds the incumbent model and
/// scores it on the test mesh.
pub fn run_kapi_forward(spec: &ForwardRunSpec) -> Result<ForwardReport> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, OPTIMIZER_STREAM));
    let outcome = optimize(
        |w, k| {
            let hp = spec.decode(w)?;
            forward_objective(spec, &hp, derive_seed(spec.seed, k as u64)).map(|(loss, _)| loss)
        },
        &spec.bounds,
        &spec.bo,
        &mut rng,
    )?;
    let k = outcome.history.incumbent.expect("optimizer evaluated at least once");
    let hyper = spec.decode(&outcome.w_opt)?;
    let best = forward_solve(spec, &hyper, derive_seed(spec.seed, k as u64))?;
    log::info!("incumbent {k}: loss {:e} with {} kernels", best.loss, best.model.basis.len());

    let test_points = spec.test_mesh();
    let prediction = evaluate_model(&best.model, &test_points)?;
    let reference = reference_values(&spec.problem, &test_points, spec.test_points)?;
    let errors = reference.as_ref().map(|r| compare_to_exact(&prediction, r)).transpose()?;
    Ok(ForwardReport {
        w_opt: outcome.w_opt.clone(),
        hyper,
        best,
        outcome,
        test_points,
        prediction,
        reference,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesopt::ParamBound;
    use crate::drivers::{mixture_bounds, ComponentBounds};
    use crate::sampling::AdaptiveComponent;

    fn type1_baseline() -> BaselineConfig {
        BaselineConfig {
            n_colloc: 200,
            n_rbf: 100,
            sigma_f: 0.05,
            n_boundary: 2,
            n_initial: None,
        }
    }

    fn type1_bounds() -> SearchBounds {
        SearchBounds::new(mixture_bounds(&[ComponentBounds {
            fraction: (0.45, 0.55),
            mean: vec![(0.9, 0.99)],
            spread: vec![(0.05, 0.5)],
            decay: (0.5, 0.9),
        }]))
        .unwrap()
    }

    #[test]
    fn baseline_only_non_stiff() {
        let baseline = BaselineConfig {
            n_colloc: 500,
            n_rbf: 250,
            sigma_f: 0.04,
            ..type1_baseline()
        };
        let spec = ForwardRunSpec::new(PdeProblem::type1(0.1).unwrap(), baseline, 0, type1_bounds());
        let hp = MixtureHyperparams::baseline_only(&spec.problem.domain);
        let (loss, model) = forward_objective(&spec, &hp, 1).unwrap();
        assert_eq!(model.basis.len(), 250);
        // double-precision floor of the max-norm residual for this basis
        assert!(loss < 2e-4, "loss {loss:e}");
    }

    #[test]
    fn objective_is_deterministic() {
        let spec = ForwardRunSpec::new(PdeProblem::type1(0.01).unwrap(), type1_baseline(), 1, type1_bounds());
        let hp = spec.decode(&[0.5, 0.95, 0.2, 0.7]).unwrap();
        let a = forward_objective(&spec, &hp, 42).unwrap();
        let b = forward_objective(&spec, &hp, 42).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.coefficients, b.1.coefficients);
    }

    fn stiff_spec() -> ForwardRunSpec {
        let baseline = BaselineConfig {
            n_colloc: 500,
            n_rbf: 250,
            sigma_f: 0.04,
            ..type1_baseline()
        };
        ForwardRunSpec::new(PdeProblem::type1(1e-3).unwrap(), baseline, 1, type1_bounds())
    }

    #[test]
    fn well_placed_component_beats_baseline_when_stiff() {
        let spec = stiff_spec();
        let base = forward_objective(&spec, &MixtureHyperparams::baseline_only(&spec.problem.domain), 0).unwrap().0;
        let hp = MixtureHyperparams {
            components: vec![AdaptiveComponent {
                fraction: 1.0,
                mean: vec![0.995],
                spread: vec![0.05],
                decay: 0.0,
            }],
            ..MixtureHyperparams::baseline_only(&spec.problem.domain)
        };
        let adaptive = (0..20)
            .map(|s| forward_objective(&spec, &hp, s).unwrap().0)
            .fold(f64::INFINITY, f64::min);
        assert!(adaptive * 1e3 < base, "adaptive {adaptive:e} vs baseline {base:e}");
    }

    #[test]
    fn random_draws_never_lose_to_baseline() {
        use rand::Rng;
        let spec = stiff_spec();
        let base = forward_objective(&spec, &MixtureHyperparams::baseline_only(&spec.problem.domain), 0).unwrap().0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let best = (0..20)
            .map(|k| {
                let u: Vec<f64> = (0..spec.bounds.dim()).map(|_| rng.random()).collect();
                let hp = spec.decode(&spec.bounds.from_unit(&u)).unwrap();
                forward_objective(&spec, &hp, k).unwrap().0
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < base, "{best:e} vs {base:e}");
    }

    #[test]
    fn validation_catches_structure_mismatch() {
        let spec = ForwardRunSpec::new(PdeProblem::type1(0.01).unwrap(), type1_baseline(), 2, type1_bounds());
        assert!(spec.validate().is_err());
        let mut spec = ForwardRunSpec::new(PdeProblem::type1(0.01).unwrap(), type1_baseline(), 1, type1_bounds());
        spec.test_points = 100;
        assert!(spec.validate().is_err());
        spec.test_points = 2000;
        spec.validate().unwrap();
        let bad = SearchBounds::new(vec![ParamBound::new("f1", 0.1, 0.2)]).unwrap();
        let spec = ForwardRunSpec::new(PdeProblem::type1(0.01).unwrap(), type1_baseline(), 1, bad);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn short_search_reports_errors() {
        let mut spec = ForwardRunSpec::new(PdeProblem::type1(0.05).unwrap(), type1_baseline(), 1, type1_bounds());
        spec.bo.max_evaluations = 6;
        let report = run_kapi_forward(&spec).unwrap();
        assert_eq!(report.test_points.len(), 2000);
        let err = report.errors.unwrap();
        assert!(err.linf.is_finite() && err.linf < 0.1, "{err:?}");
        assert_eq!(report.best.loss, report.outcome.best_loss);
    }
}
