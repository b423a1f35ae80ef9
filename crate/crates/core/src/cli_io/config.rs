//! TOML run configuration and per-benchmark defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayesopt::{BoConfig, ParamBound, SearchBounds};
use crate::drivers::advection::{BlockTunables, InitialProfile, TimeBlockSpec};
use crate::drivers::curriculum::DEFAULT_SOLVABLE_THRESHOLD;
use crate::drivers::forward::default_test_points;
use crate::drivers::{mixture_bounds, ComponentBounds, ForwardRunSpec, SensorPlacement};
use crate::error::{KapiError, Result};
use crate::problems::{PdeProblem, ProblemKind};
use crate::sampling::{default_eta, BaselineConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunKind {
    Forward,
    Inverse,
    Advection,
    BaselineStudy,
}

/// A configuration file as written. Omitted sections take the defaults of
/// the chosen problem (see [`RunConfig::resolve`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<ComponentSection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bo: Option<BoSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advection: Option<AdvectionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curriculum: Option<CurriculumSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(rename = "type")]
    pub kind: ProblemKind,
    pub nu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub n_colloc: usize,
    pub n_rbf: usize,
    pub sigma_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_boundary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_initial: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSection {
    pub fraction: (f64, f64),
    pub mean: Vec<(f64, f64)>,
    pub spread: Vec<(f64, f64)>,
    pub decay: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evaluations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownParameter {
    Nu,
    A,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<(f64, f64)>,
    /// Bounds of `sigma_nu / mu_nu` when estimating `nu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_spread_bounds: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sensors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<SensorPlacement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvectionSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_blocks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_grid: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colloc_grid: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_boundary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_initial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_adap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_bounds: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_bounds: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_bounds: Option<(f64, f64)>,
    /// Fixed `(f, lambda, sigma_f)`; skips the search when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tunables: Option<(f64, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurriculumSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

/// Fully specified inputs for one run.
#[derive(Clone, Debug)]
pub enum ResolvedRun {
    Forward(ForwardRunSpec),
    Inverse {
        spec: ForwardRunSpec,
        true_value: f64,
        n_sensors: usize,
        noise: f64,
        placement: SensorPlacement,
    },
    Advection {
        spec: TimeBlockSpec,
        bo: BoConfig,
        tunables: Option<BlockTunables>,
    },
    BaselineStudy {
        problem: PdeProblem,
        baseline: BaselineConfig,
        schedule: Vec<f64>,
        threshold: f64,
    },
}

fn field_err(field: &str, msg: impl Into<String>) -> KapiError {
    KapiError::config(field, msg)
}

fn check_range(field: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(field_err(field, format!("expected lower < upper, got ({lo}, {hi})")))
    }
}

fn unit_component(fraction: (f64, f64), mean: (f64, f64)) -> ComponentBounds {
    ComponentBounds {
        fraction,
        mean: vec![mean],
        spread: vec![(0.05, 0.5)],
        decay: (0.5, 0.9),
    }
}

/// Baseline `[N_c, N_r, sigma_F]` and boundary rows used when the file omits them.
pub fn default_baseline(kind: ProblemKind, nu: f64) -> BaselineConfig {
    let (n_colloc, n_rbf, sigma_f, n_boundary, n_initial) = match kind {
        ProblemKind::ConvDiffType1 | ProblemKind::ConvDiffType2 if nu < 1e-3 => (1500, 750, 0.013, 2, None),
        ProblemKind::ConvDiffType1 => (500, 250, 0.04, 2, None),
        ProblemKind::ConvDiffType2 => (1000, 500, 0.02, 2, None),
        ProblemKind::Poisson2D => (1600, 400, 0.2, 400, None),
        ProblemKind::Advection1D => (1600, 1600, 0.1, 80, Some(80)),
    };
    BaselineConfig {
        n_colloc,
        n_rbf,
        sigma_f,
        n_boundary,
        n_initial,
    }
}

/// Search ranges used when the file has no `[[components]]`.
pub fn default_components(kind: ProblemKind, nu: f64) -> Vec<ComponentBounds> {
    match kind {
        ProblemKind::ConvDiffType1 if nu < 1e-3 => vec![ComponentBounds {
            fraction: (0.6995, 0.7005),
            mean: vec![(0.99, 1.0)],
            spread: vec![(0.001, 0.05)],
            decay: (-0.9, 0.3),
        }],
        ProblemKind::ConvDiffType1 => vec![unit_component((0.45, 0.55), (0.9, 0.99))],
        ProblemKind::ConvDiffType2 => vec![
            unit_component((0.45, 0.55), (0.01, 0.1)),
            unit_component((0.45, 0.55), (0.9, 0.99)),
        ],
        ProblemKind::Poisson2D => vec![ComponentBounds {
            fraction: (0.5, 1.0),
            mean: vec![(0.2, 0.8), (0.2, 0.8)],
            spread: vec![(0.1, 0.5)],
            decay: (0.5, 1.0),
        }],
        ProblemKind::Advection1D => Vec::new(),
    }
}

pub fn default_schedule(kind: ProblemKind) -> Vec<f64> {
    match kind {
        ProblemKind::ConvDiffType2 => vec![0.2, 0.15, 0.1, 0.05],
        _ => vec![0.1, 0.05, 0.01],
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
                .unwrap_or("syntax")
                .to_string();
            KapiError::Config {
                field,
                message: e.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| field_err("serialization", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if !(p.nu > 0.0 && p.nu.is_finite()) {
            return Err(field_err("nu", format!("must be positive and finite, got {}", p.nu)));
        }
        if let Some(a) = p.speed {
            if !a.is_finite() {
                return Err(field_err("speed", "must be finite"));
            }
        }
        if let Some(b) = &self.baseline {
            if b.n_colloc == 0 || b.n_rbf == 0 {
                return Err(field_err("baseline", "n_colloc and n_rbf must be positive"));
            }
            if !(b.sigma_f > 0.0 && b.sigma_f.is_finite()) {
                return Err(field_err("sigma_f", format!("must be positive, got {}", b.sigma_f)));
            }
        }
        for c in self.components.iter().flatten() {
            check_range("fraction", c.fraction)?;
            check_range("decay", c.decay)?;
            for r in c.mean.iter().chain(&c.spread) {
                check_range("mean/spread", *r)?;
            }
            if c.mean.is_empty() || c.spread.is_empty() {
                return Err(field_err("components", "mean and spread need at least one range"));
            }
        }
        if let Some(inv) = &self.inverse {
            if let Some(b) = inv.bounds {
                check_range("inverse.bounds", b)?;
            }
            if let Some(b) = inv.relative_spread_bounds {
                check_range("inverse.relative_spread_bounds", b)?;
            }
            if inv.noise.is_some_and(|n| !(n >= 0.0)) {
                return Err(field_err("noise", "must be non-negative"));
            }
            if inv.n_sensors == Some(0) {
                return Err(field_err("n_sensors", "must be positive"));
            }
        }
        if let Some(c) = &self.curriculum {
            if let Some(s) = &c.schedule {
                if s.is_empty() || s.windows(2).any(|w| w[1] >= w[0]) || s.iter().any(|v| !(*v > 0.0)) {
                    return Err(field_err("schedule", "must be positive and strictly decreasing"));
                }
            }
            if c.threshold.is_some_and(|t| !(t > 0.0)) {
                return Err(field_err("threshold", "must be positive"));
            }
        }
        match (self.kind, self.problem.kind) {
            (RunKind::Advection, k) if k != ProblemKind::Advection1D => {
                Err(field_err("problem.type", "advection runs need the advection problem"))
            }
            (RunKind::Forward, ProblemKind::Advection1D) => {
                Err(field_err("kind", "use the advection run kind for the advection problem"))
            }
            (RunKind::BaselineStudy, ProblemKind::Poisson2D | ProblemKind::Advection1D) => {
                Err(field_err("problem.type", "baseline studies run on the 1D problems"))
            }
            (RunKind::Inverse, ProblemKind::Poisson2D | ProblemKind::ConvDiffType2) => {
                Err(field_err("problem.type", "inverse runs support type 1 and advection"))
            }
            _ => Ok(()),
        }
    }

    fn bo_config(&self, default_budget: usize) -> BoConfig {
        let d = BoConfig {
            max_evaluations: default_budget,
            ..BoConfig::default()
        };
        let Some(s) = &self.bo else { return d };
        BoConfig {
            max_evaluations: s.max_evaluations.unwrap_or(d.max_evaluations),
            loss_tolerance: s.loss_tolerance.unwrap_or(d.loss_tolerance),
            step_tolerance: s.step_tolerance.unwrap_or(d.step_tolerance),
            initial_points: s.initial_points.or(d.initial_points),
            candidates: s.candidates.unwrap_or(d.candidates),
            local_candidates: s.local_candidates.unwrap_or(d.local_candidates),
            noise_floor: s.noise_floor.unwrap_or(d.noise_floor),
            ..d
        }
    }

    fn baseline_config(&self) -> BaselineConfig {
        let d = default_baseline(self.problem.kind, self.problem.nu);
        match &self.baseline {
            None => d,
            Some(b) => BaselineConfig {
                n_colloc: b.n_colloc,
                n_rbf: b.n_rbf,
                sigma_f: b.sigma_f,
                n_boundary: b.n_boundary.unwrap_or(d.n_boundary),
                n_initial: b.n_initial.or(d.n_initial),
            },
        }
    }

    fn component_bounds(&self) -> Vec<ComponentBounds> {
        match &self.components {
            Some(cs) => cs
                .iter()
                .map(|c| ComponentBounds {
                    fraction: c.fraction,
                    mean: c.mean.clone(),
                    spread: c.spread.clone(),
                    decay: c.decay,
                })
                .collect(),
            None => default_components(self.problem.kind, self.problem.nu),
        }
    }

    fn pde(&self) -> Result<PdeProblem> {
        let speed = self.problem.speed.unwrap_or(if self.problem.kind == ProblemKind::Advection1D { 0.5 } else { 0.0 });
        PdeProblem::new(self.problem.kind, self.problem.nu, speed)
    }

    /// Fills every omitted value with the documented default.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        self.validate()?;
        let seed = self.seed.unwrap_or(0);
        let problem = self.pde()?;
        let baseline = self.baseline_config();
        baseline.validate().map_err(|e| field_err("baseline", e.to_string()))?;
        match self.kind {
            RunKind::Forward => {
                let comps = self.component_bounds();
                let bounds = SearchBounds::new(mixture_bounds(&comps)).map_err(|e| field_err("components", e.to_string()))?;
                let mut spec = ForwardRunSpec::new(problem, baseline, comps.len(), bounds);
                spec.bo = self.bo_config(100);
                spec.seed = seed;
                spec.test_points = self.test_points.unwrap_or(spec.test_points);
                spec.validate().map_err(|e| field_err("components", e.to_string()))?;
                Ok(ResolvedRun::Forward(spec))
            }
            RunKind::Inverse => self.resolve_inverse(problem, baseline, seed),
            RunKind::Advection => {
                let d = TimeBlockSpec::default();
                let a = self.advection.clone().unwrap_or(AdvectionSection {
                    n_blocks: None,
                    t_final: None,
                    baseline_grid: None,
                    colloc_grid: None,
                    n_boundary: None,
                    n_initial: None,
                    n_adap: None,
                    fraction_bounds: None,
                    decay_bounds: None,
                    sigma_bounds: None,
                    tunables: None,
                });
                let baseline_grid = a.baseline_grid.unwrap_or(d.baseline_grid);
                let colloc_grid = a.colloc_grid.unwrap_or(d.colloc_grid);
                let spec = TimeBlockSpec {
                    n_blocks: a.n_blocks.unwrap_or(d.n_blocks),
                    t_final: a.t_final.unwrap_or(d.t_final),
                    speed: problem.advection_speed,
                    nu: problem.nu,
                    n_colloc: colloc_grid.0 * colloc_grid.1,
                    n_rbf: baseline_grid.0 * baseline_grid.1,
                    n_boundary: a.n_boundary.unwrap_or(d.n_boundary),
                    n_initial: a.n_initial.unwrap_or(d.n_initial),
                    n_adap: a.n_adap.unwrap_or(d.n_adap),
                    baseline_grid,
                    colloc_grid,
                    initial: InitialProfile::GaussianPulse,
                    seed,
                    fraction_bounds: a.fraction_bounds.unwrap_or(d.fraction_bounds),
                    decay_bounds: a.decay_bounds.unwrap_or(d.decay_bounds),
                    sigma_bounds: a.sigma_bounds.unwrap_or(d.sigma_bounds),
                    ..d
                };
                spec.validate().map_err(|e| field_err("advection", e.to_string()))?;
                let tunables = a.tunables.map(|(fraction, decay, sigma_f)| BlockTunables {
                    fraction,
                    decay,
                    sigma_f,
                });
                Ok(ResolvedRun::Advection {
                    spec,
                    bo: self.bo_config(10),
                    tunables,
                })
            }
            RunKind::BaselineStudy => {
                let c = self.curriculum.as_ref();
                let baseline = match &self.baseline {
                    Some(_) => baseline,
                    None => BaselineConfig {
                        n_colloc: 500,
                        n_rbf: 500,
                        sigma_f: 0.1,
                        n_boundary: 2,
                        n_initial: None,
                    },
                };
                Ok(ResolvedRun::BaselineStudy {
                    problem,
                    baseline,
                    schedule: c.and_then(|c| c.schedule.clone()).unwrap_or_else(|| default_schedule(self.problem.kind)),
                    threshold: c.and_then(|c| c.threshold).unwrap_or(DEFAULT_SOLVABLE_THRESHOLD),
                })
            }
        }
    }

    fn resolve_inverse(&self, problem: PdeProblem, baseline: BaselineConfig, seed: u64) -> Result<ResolvedRun> {
        let inv = self.inverse.clone().unwrap_or(InverseSection {
            bounds: None,
            relative_spread_bounds: None,
            n_sensors: None,
            noise: None,
            placement: None,
        });
        let advection = problem.kind == ProblemKind::Advection1D;
        let (comps, mut params, true_value) = if advection {
            let b = inv.bounds.unwrap_or((0.1, 1.0));
            (Vec::new(), vec![ParamBound::new("a", b.0, b.1)], problem.advection_speed)
        } else {
            let comps = self.component_bounds();
            let mut params = mixture_bounds(&comps);
            let b = inv.bounds.unwrap_or((1e-4, 1e-1));
            let r = inv.relative_spread_bounds.unwrap_or((1e-6, 0.1));
            params.push(ParamBound::log("mu_nu", b.0, b.1));
            params.push(ParamBound::new("r_nu", r.0, r.1));
            (comps, params, problem.nu)
        };
        if advection && self.components.is_some() {
            return Err(field_err("components", "the advection inverse uses the baseline only"));
        }
        let bounds = SearchBounds::new(std::mem::take(&mut params)).map_err(|e| field_err("inverse.bounds", e.to_string()))?;
        let mut spec = ForwardRunSpec::new(problem, baseline, comps.len(), bounds);
        spec.bo = self.bo_config(if advection { 20 } else { 100 });
        spec.seed = seed;
        spec.eta = default_eta(&spec.problem.domain);
        spec.test_points = self
            .test_points
            .unwrap_or_else(|| default_test_points(spec.problem.dim(), spec.baseline.n_colloc));
        spec.validate().map_err(|e| field_err("inverse", e.to_string()))?;
        Ok(ResolvedRun::Inverse {
            spec,
            true_value,
            n_sensors: inv.n_sensors.unwrap_or(if advection { 200 } else { 51 }),
            noise: inv.noise.unwrap_or(0.05),
            placement: inv.placement.unwrap_or(if advection {
                SensorPlacement::UniformRandom
            } else {
                SensorPlacement::BoundaryLayerBiased
            }),
        })
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| KapiError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::from_toml(&text)
}
