//! Dispatch of a configuration to its driver and assembly of the result bundle.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ResolvedRun, RunConfig};
use super::metrics::compare_to_exact;
use super::output::{kernel_rows, ResultBundle, SolutionTable, Summary};
use crate::assembly::evaluate_model;
use crate::bayesopt::{BoOutcome, SearchBounds, StopReason};
use crate::drivers::{
    derive_seed, generate_sensor_data, run_advection, run_baseline_curriculum, run_inverse, run_kapi_forward,
    solve_advection_timeblocks, final_time_error, InverseRunSpec, SENSOR_STREAM,
};
use crate::error::{KapiError, Result};
use crate::problems::PdeProblem;
use crate::sampling::uniform_grid;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

/// Exit status for a driver error.
pub fn error_exit_code(e: &KapiError) -> i32 {
    match e {
        KapiError::Config { .. } | KapiError::Io { .. } | KapiError::Precondition(_) => EXIT_CONFIG,
        KapiError::Numerical(_) | KapiError::Unsolvable(_) => EXIT_NUMERICAL,
    }
}

impl ResultBundle {
    /// `EXIT_BUDGET` when the search ran out of evaluations above the loss tolerance.
    pub fn exit_code(&self) -> i32 {
        match (&self.summary.stop_reason, self.summary.loss) {
            (Some(StopReason::Budget), Some(l)) if l > self.loss_tolerance() => EXIT_BUDGET,
            _ => EXIT_OK,
        }
    }

    fn loss_tolerance(&self) -> f64 {
        self.config
            .bo
            .as_ref()
            .and_then(|b| b.loss_tolerance)
            .unwrap_or(crate::bayesopt::BoConfig::default().loss_tolerance)
    }
}

fn axes(problem: &PdeProblem) -> Vec<String> {
    match problem.dim() {
        1 => vec!["x".into()],
        _ if problem.kind == crate::problems::ProblemKind::Advection1D => vec!["x".into(), "t".into()],
        _ => vec!["x".into(), "y".into()],
    }
}

fn record_search(summary: &mut Summary, bounds: &SearchBounds, outcome: &BoOutcome) -> (Vec<String>, crate::bayesopt::BoHistory) {
    let names: Vec<String> = bounds.names().into_iter().map(String::from).collect();
    summary.w_opt = names.iter().cloned().zip(outcome.w_opt.iter().copied()).collect();
    summary.n_evaluations = Some(outcome.history.records.len());
    summary.stop_reason = Some(outcome.stop);
    (names, outcome.history.clone())
}

/// Runs the configured workflow without touching the file system.
pub fn run_command(config: &RunConfig) -> Result<ResultBundle> {
    let start = Instant::now();
    let resolved = config.resolve()?;
    let seed = config.seed.unwrap_or(0);
    let mut summary = Summary {
        kind: format!("{:?}", config.kind),
        problem: format!("{:?}", config.problem.kind),
        seed,
        nu: config.problem.nu,
        ..Summary::default()
    };
    let mut bundle = match resolved {
        ResolvedRun::Forward(spec) => {
            let r = run_kapi_forward(&spec)?;
            summary.loss = Some(r.best.loss);
            summary.n_kernels = r.n_kernels();
            summary.errors = r.errors.clone();
            let history = record_search(&mut summary, &spec.bounds, &r.outcome);
            ResultBundle {
                config: config.clone(),
                summary,
                history: Some(history),
                kernels: kernel_rows(&r.best.model, &r.best.component_of, 0),
                solution: SolutionTable {
                    axes: axes(&spec.problem),
                    points: r.test_points,
                    predicted: r.prediction,
                    reference: r.reference,
                },
            }
        }
        ResolvedRun::Inverse {
            spec,
            true_value,
            n_sensors,
            noise,
            placement,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SENSOR_STREAM));
            let sensors = generate_sensor_data(&spec.problem, n_sensors, noise, placement, &mut rng)?;
            let inv = InverseRunSpec {
                forward: spec,
                sensors,
                true_value: Some(true_value),
            };
            let r = run_inverse(&inv)?;
            let spec = &inv.forward;
            summary.loss = Some(r.best.loss);
            summary.n_kernels = r.best.model.basis.len();
            summary.relative_error = r.relative_error;
            match r.parameter {
                "a" => summary.a_est = Some(r.estimate),
                _ => summary.nu_est = Some(r.estimate),
            }
            let history = record_search(&mut summary, &spec.bounds, &r.outcome);
            let points = spec.test_mesh();
            let predicted = evaluate_model(&r.best.model, &points)?;
            let reference: Option<Vec<f64>> = points.iter().map(|p| spec.problem.exact(p)).collect();
            summary.errors = reference.as_ref().map(|e| compare_to_exact(&predicted, e)).transpose()?;
            ResultBundle {
                config: config.clone(),
                summary,
                history: Some(history),
                kernels: kernel_rows(&r.best.model, &r.best.component_of, 0),
                solution: SolutionTable {
                    axes: axes(&spec.problem),
                    points,
                    predicted,
                    reference,
                },
            }
        }
        ResolvedRun::Advection { spec, bo, tunables } => {
            let (solution, errors, history, tun) = match tunables {
                Some(t) => {
                    let s = solve_advection_timeblocks(&spec, &t)?;
                    let e = final_time_error(&spec, &s)?;
                    (s, Some(e), None, t)
                }
                None => {
                    let r = run_advection(&spec, &bo)?;
                    let h = record_search(&mut summary, &spec.search_bounds()?, &r.outcome);
                    (r.solution, r.errors, Some(h), r.tunables)
                }
            };
            if history.is_none() {
                summary.w_opt = [("f", tun.fraction), ("lambda", tun.decay), ("sigma_f", tun.sigma_f)]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect();
            }
            summary.loss = Some(solution.loss());
            summary.block_losses = solution.block_losses();
            summary.errors = errors;
            let mut kernels = Vec::new();
            for (j, b) in solution.blocks.iter().enumerate() {
                let n_base = b.model.basis.len() - b.n_adaptive;
                let tags: Vec<usize> = (0..b.model.basis.len()).map(|i| usize::from(i >= n_base)).collect();
                kernels.extend(kernel_rows(&b.model, &tags, j));
            }
            summary.n_kernels = kernels.len();
            let reference = solution
                .final_x
                .iter()
                .map(|&x| crate::problems::advection_exact(x, spec.t_final, spec.speed, spec.nu))
                .collect();
            ResultBundle {
                config: config.clone(),
                summary,
                history,
                kernels,
                solution: SolutionTable {
                    axes: vec!["x".into(), "t".into()],
                    points: solution.final_x.iter().map(|&x| vec![x, spec.t_final]).collect(),
                    predicted: solution.final_values.clone(),
                    reference: Some(reference),
                },
            }
        }
        ResolvedRun::BaselineStudy {
            problem,
            baseline,
            schedule,
            threshold,
        } => {
            let r = run_baseline_curriculum(&problem, &baseline, &schedule, threshold)?;
            summary.loss = Some(r.model.loss);
            summary.n_kernels = r.model.basis.len();
            summary.nu_solvable = Some(r.nu);
            summary.schedule_losses = r.losses.clone();
            summary.clusters = r.clusters.intervals.clone();
            let accepted = PdeProblem::with_domain(problem.kind, problem.domain.clone(), r.nu, problem.advection_speed)?;
            let points = uniform_grid(&problem.domain, baseline.n_colloc);
            let predicted = evaluate_model(&r.model, &points)?;
            let reference: Option<Vec<f64>> = points.iter().map(|p| accepted.exact(p)).collect();
            summary.errors = reference.as_ref().map(|e| compare_to_exact(&predicted, e)).transpose()?;
            ResultBundle {
                config: config.clone(),
                summary,
                history: None,
                kernels: kernel_rows(&r.model, &[], 0),
                solution: SolutionTable {
                    axes: axes(&problem),
                    points,
                    predicted,
                    reference,
                },
            }
        }
    };
    bundle.summary.wall_seconds = start.elapsed().as_secs_f64();
    if let Some(m) = &bundle.summary.errors {
        if !(m.linf.is_finite() && m.rel_l2.is_finite()) {
            return Err(KapiError::Numerical("non-finite error metrics".into()));
        }
    }
    Ok(bundle)
}

/// Runs the workflow, writes the bundle to `out_dir` and returns the exit status.
pub fn run_and_write(config: &RunConfig, out_dir: &Path) -> Result<(ResultBundle, i32)> {
    let bundle = run_command(config)?;
    bundle.write(out_dir)?;
    let code = bundle.exit_code();
    Ok((bundle, code))
}
