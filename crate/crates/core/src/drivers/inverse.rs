//! Parameter estimation from noisy point observations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::forward::{solve_sampled, ForwardEval, ForwardRunSpec};
use crate::assembly::{ConstraintRow, RowTag};
use crate::bayesopt::{optimize, BoOutcome};
use crate::error::{precondition, Result};
use crate::problems::PdeProblem;
use crate::sampling::{sample_nu, InverseParams, MixtureHyperparams};

const OPTIMIZER_STREAM: u64 = u64::MAX;
/// Seed stream reserved for drawing sensor data.
pub const SENSOR_STREAM: u64 = u64::MAX - 1;
/// Share of biased sensors placed in the last tenth of the interval.
const LAYER_START: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorPlacement {
    UniformRandom,
    /// `ceil(2n/3)` points in the last tenth of a 1D interval, the rest before it.
    BoundaryLayerBiased,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensorSet {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub noise_fraction: f64,
}

impl SensorSet {
    pub fn rows(&self) -> Vec<ConstraintRow> {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(p, &v)| ConstraintRow::new(p.clone(), v, RowTag::Sensor))
            .collect()
    }
}

/// Observations of the exact solution of `problem` with multiplicative
/// Gaussian noise `exact * (1 + noise_fraction * z)`.
pub fn generate_sensor_data<R: Rng + ?Sized>(
    problem: &PdeProblem,
    n_points: usize,
    noise_fraction: f64,
    placement: SensorPlacement,
    rng: &mut R,
) -> Result<SensorSet> {
    if !(noise_fraction >= 0.0) {
        return precondition("noise fraction must be non-negative");
    }
    let dom = &problem.domain;
    if problem.exact(dom.lower()).is_none() {
        return precondition(format!("no exact solution for {:?}", problem.kind));
    }
    let uniform = |rng: &mut R, lo: &[f64], hi: &[f64]| -> Vec<f64> {
        lo.iter().zip(hi).map(|(a, b)| a + rng.random::<f64>() * (b - a)).collect()
    };
    let points: Vec<Vec<f64>> = match placement {
        SensorPlacement::UniformRandom => (0..n_points).map(|_| uniform(rng, dom.lower(), dom.upper())).collect(),
        SensorPlacement::BoundaryLayerBiased => {
            if dom.dim() != 1 {
                return precondition("boundary-layer placement needs a 1D problem");
            }
            let split = [dom.lower()[0] + LAYER_START * dom.extent(0)];
            let n_layer = (2 * n_points).div_ceil(3);
            let mut pts: Vec<Vec<f64>> = (0..n_layer).map(|_| uniform(rng, &split, dom.upper())).collect();
            pts.extend((n_layer..n_points).map(|_| uniform(rng, dom.lower(), &split)));
            pts
        }
    };
    let values = points
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(rng);
            problem.exact(p).expect("exact solution checked above") * (1.0 + noise_fraction * z)
        })
        .collect();
    Ok(SensorSet {
        points,
        values,
        noise_fraction,
    })
}

/// A forward specification whose bounds also carry `mu_nu` (with optional
/// `r_nu`) or `a`, together with the observations.
#[derive(Clone, Debug)]
pub struct InverseRunSpec {
    pub forward: ForwardRunSpec,
    pub sensors: SensorSet,
    /// Used only for reporting.
    pub true_value: Option<f64>,
}

impl InverseRunSpec {
    pub fn validate(&self) -> Result<()> {
        self.forward.validate()?;
        if self.sensors.points.is_empty() {
            return precondition("no sensor data");
        }
        if self.sensors.points.len() != self.sensors.values.len() {
            return precondition("sensor points and values differ in length");
        }
        if let Some(p) = self.sensors.points.iter().find(|p| !self.forward.problem.domain.contains(p)) {
            return precondition(format!("sensor {p:?} lies outside the domain"));
        }
        let names = self.forward.bounds.names();
        if !names.contains(&"mu_nu") && !names.contains(&"a") {
            return precondition("bounds must include mu_nu or a");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct InverseReport {
    /// Incumbent `mu_nu` or `a`.
    pub estimate: f64,
    pub parameter: &'static str,
    pub relative_error: Option<f64>,
    pub w_opt: Vec<f64>,
    pub hyper: MixtureHyperparams,
    pub outcome: BoOutcome,
    pub best: ForwardEval,
}

fn inverse_solve(spec: &InverseRunSpec, hp: &MixtureHyperparams, rows: &[ConstraintRow], seed: u64) -> Result<ForwardEval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = &spec.forward.problem;
    let (nu, speed) = match hp.inverse {
        Some(InverseParams::Diffusivity { .. }) => (sample_nu(hp, &mut rng)?, base.advection_speed),
        Some(InverseParams::AdvectionSpeed(a)) => (base.nu, a),
        None => return precondition("hyperparameters carry no unknown PDE parameter"),
    };
    let problem = PdeProblem::with_domain(base.kind, base.domain.clone(), nu, speed)?;
    solve_sampled(&problem, &spec.forward.baseline, hp, rows, &mut rng)
}

/// Optimizes the extended parameter vector on the combined PDE, boundary and
/// sensor residual and reports the incumbent's parameter.
pub fn run_inverse(spec: &InverseRunSpec) -> Result<InverseReport> {
    spec.validate()?;
    let fwd = &spec.forward;
    let rows = spec.sensors.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(fwd.seed, OPTIMIZER_STREAM));
    let outcome = optimize(
        |w, k| {
            let hp = fwd.decode(w)?;
            inverse_solve(spec, &hp, &rows, derive_seed(fwd.seed, k as u64)).map(|e| e.loss)
        },
        &fwd.bounds,
        &fwd.bo,
        &mut rng,
    )?;
    let k = outcome.history.incumbent.expect("optimizer evaluated at least once");
    let hyper = fwd.decode(&outcome.w_opt)?;
    let best = inverse_solve(spec, &hyper, &rows, derive_seed(fwd.seed, k as u64))?;
    let (estimate, parameter) = match hyper.inverse {
        Some(InverseParams::Diffusivity { mean, .. }) => (mean, "nu"),
        Some(InverseParams::AdvectionSpeed(a)) => (a, "a"),
        None => unreachable!("validated bounds carry an unknown parameter"),
    };
    Ok(InverseReport {
        estimate,
        parameter,
        relative_error: spec.true_value.map(|t| ((estimate - t) / t).abs()),
        w_opt: outcome.w_opt.clone(),
        hyper,
        outcome,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesopt::{ParamBound, SearchBounds};
    use crate::sampling::BaselineConfig;

    #[test]
    fn noiseless_sensors_are_exact() {
        let p = PdeProblem::type1(0.05).unwrap();
        let s = generate_sensor_data(&p, 30, 0.0, SensorPlacement::UniformRandom, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (x, v) in s.points.iter().zip(&s.values) {
            assert_eq!(*v, p.exact(x).unwrap());
        }
        let adv = PdeProblem::advection(0.1, 0.5).unwrap();
        let s = generate_sensor_data(&adv, 200, 0.05, SensorPlacement::UniformRandom, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(s.points.len(), 200);
        assert!(s.points.iter().all(|q| adv.domain.contains(q)));
    }

    #[test]
    fn biased_placement_counts() {
        let p = PdeProblem::type1(0.01).unwrap();
        let s = generate_sensor_data(&p, 51, 0.05, SensorPlacement::BoundaryLayerBiased, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let in_layer = s.points.iter().filter(|q| q[0] > 0.9 && q[0] < 1.0).count();
        assert_eq!(in_layer, 34);
        assert_eq!(s.points.len(), 51);
        assert!(generate_sensor_data(&PdeProblem::poisson(0.1).unwrap(), 5, 0.0, SensorPlacement::UniformRandom, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    fn advection_spec(noise: f64, dense: usize) -> InverseRunSpec {
        let problem = PdeProblem::advection(0.1, 0.5).unwrap();
        let sensors = generate_sensor_data(&problem, dense, noise, SensorPlacement::UniformRandom, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let baseline = BaselineConfig {
            n_colloc: 400,
            n_rbf: 400,
            sigma_f: 0.15,
            n_boundary: 40,
            n_initial: Some(40),
        };
        let bounds = SearchBounds::new(vec![ParamBound::new("a", 0.1, 1.0)]).unwrap();
        InverseRunSpec {
            forward: ForwardRunSpec::new(problem, baseline, 0, bounds),
            sensors,
            true_value: Some(0.5),
        }
    }

    #[test]
    fn truth_beats_fifty_percent_offsets() {
        let spec = advection_spec(0.0, 300);
        let rows = spec.sensors.rows();
        let loss_at = |a: f64| {
            let hp = spec.forward.decode(&[a]).unwrap();
            inverse_solve(&spec, &hp, &rows, 0).unwrap().loss
        };
        let truth = loss_at(0.5);
        assert!(truth < loss_at(0.25) && truth < loss_at(0.75), "{truth:e}");
    }

    #[test]
    fn log_search_reports_recorded_incumbent() {
        let problem = PdeProblem::type1(0.05).unwrap();
        let sensors = generate_sensor_data(&problem, 20, 0.0, SensorPlacement::UniformRandom, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let baseline = BaselineConfig {
            n_colloc: 200,
            n_rbf: 100,
            sigma_f: 0.05,
            n_boundary: 2,
            n_initial: None,
        };
        let bounds = SearchBounds::new(vec![ParamBound::log("mu_nu", 1e-3, 1e-1)]).unwrap();
        let mut forward = ForwardRunSpec::new(problem, baseline, 0, bounds);
        forward.bo.max_evaluations = 8;
        let spec = InverseRunSpec {
            forward,
            sensors,
            true_value: Some(0.05),
        };
        let r = run_inverse(&spec).unwrap();
        let rec = r.outcome.history.best().unwrap();
        assert_eq!(r.estimate, rec.w[0]);
        assert_eq!(r.best.loss, rec.loss);
        assert_eq!(r.parameter, "nu");
    }

    #[test]
    fn requires_sensors_and_unknown() {
        let mut spec = advection_spec(0.0, 10);
        spec.sensors.points.clear();
        spec.sensors.values.clear();
        assert!(run_inverse(&spec).is_err());
        let mut spec = advection_spec(0.0, 10);
        spec.forward.bounds = SearchBounds::new(vec![ParamBound::new("b", 0.1, 1.0)]).unwrap();
        assert!(spec.validate().is_err());
    }
}
