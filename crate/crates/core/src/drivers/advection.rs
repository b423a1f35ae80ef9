//! Sequential time-slab solves for the linear advection benchmark.
//!
//! Each slab `[x_lo, x_hi] x [t0, t1]` is laid out in normalized
//! coordinates `(xi, tau)` in the unit square: baseline kernels sit on a
//! tensor grid with widths `sigma_f` times the grid spacing, and adaptive
//! kernels are drawn inside a mask that follows the characteristics of the
//! slab's sharp-gradient region. Kernels are mapped back to physical
//! anisotropic Gaussians before assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use crate::assembly::{build_system, ConstraintRow, RowTag, SolvedModel};
use crate::bayesopt::{optimize, BoConfig, BoOutcome, ParamBound, SearchBounds};
use crate::cli_io::metrics::{compare_to_exact, ErrorMetrics};
use crate::clustering::{detect_gradient_clusters, DEFAULT_EPSILON, DEFAULT_MIN_PTS};
use crate::error::{precondition, KapiError, Result};
use crate::problems::{advection_exact, advection_initial, linspace, Domain, PdeProblem, ProblemKind};
use crate::rbf::{RbfBasis, RbfKernel};
use crate::sampling::{draw_width, inverse_width_bound, uniform_grid_shaped};

const OPTIMIZER_STREAM: u64 = u64::MAX;
/// Profiles whose range is below this fraction of their peak magnitude count as flat.
pub const FLAT_FRACTION: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialProfile {
    /// `exp(-(x + 0.3)^2 / (4 nu^2))`; the spatial edges take the transported
    /// pulse, which is zero to working precision for narrow pulses.
    GaussianPulse,
    /// A constant state, also imposed on both spatial edges.
    Constant(f64),
}

impl InitialProfile {
    pub fn value(&self, x: f64, nu: f64) -> f64 {
        match *self {
            InitialProfile::GaussianPulse => advection_initial(x, nu),
            InitialProfile::Constant(c) => c,
        }
    }

    pub fn boundary_value(&self, x: f64, t: f64, speed: f64, nu: f64) -> f64 {
        match *self {
            InitialProfile::GaussianPulse => advection_exact(x, t, speed, nu),
            InitialProfile::Constant(c) => c,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeBlockSpec {
    pub n_blocks: usize,
    pub t_final: f64,
    pub x_range: (f64, f64),
    pub speed: f64,
    pub nu: f64,
    pub n_colloc: usize,
    pub n_boundary: usize,
    pub n_initial: usize,
    pub n_rbf: usize,
    /// 0 disables adaptive kernels.
    pub n_adap: usize,
    /// Baseline kernel grid `(n_x, n_t)`; its product must equal `n_rbf`.
    pub baseline_grid: (usize, usize),
    /// Collocation grid `(n_x, n_t)`; its product must equal `n_colloc`.
    pub colloc_grid: (usize, usize),
    pub initial: InitialProfile,
    pub seed: u64,
    pub fraction_bounds: (f64, f64),
    pub decay_bounds: (f64, f64),
    pub sigma_bounds: (f64, f64),
}

impl Default for TimeBlockSpec {
    fn default() -> Self {
        Self {
            n_blocks: 100,
            t_final: 1.0,
            x_range: (-1.0, 1.0),
            speed: 0.5,
            nu: 0.05,
            n_colloc: 600,
            n_boundary: 150,
            n_initial: 450,
            n_rbf: 150,
            n_adap: 1,
            baseline_grid: (50, 3),
            colloc_grid: (100, 6),
            initial: InitialProfile::GaussianPulse,
            seed: 0,
            fraction_bounds: (1.0, 1.5),
            decay_bounds: (1.0, 1.5),
            sigma_bounds: (2.5, 4.5),
        }
    }
}

/// Per-slab tunables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTunables {
    pub fraction: f64,
    pub decay: f64,
    pub sigma_f: f64,
}

impl TimeBlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return precondition("n_blocks must be at least 1");
        }
        if !(self.t_final > 0.0) || !(self.x_range.0 < self.x_range.1) {
            return precondition("time horizon and spatial range must be non-degenerate");
        }
        if !(self.nu > 0.0) || !self.speed.is_finite() {
            return precondition("nu must be positive and the speed finite");
        }
        let (bx, bt) = self.baseline_grid;
        let (cx, ct) = self.colloc_grid;
        if bx < 2 || bt < 2 || cx < 2 || ct < 2 {
            return precondition("baseline and collocation grids need at least 2 nodes per axis");
        }
        if bx * bt != self.n_rbf {
            return precondition(format!("baseline grid {bx}x{bt} does not hold n_rbf = {}", self.n_rbf));
        }
        if cx * ct != self.n_colloc {
            return precondition(format!("collocation grid {cx}x{ct} does not hold n_colloc = {}", self.n_colloc));
        }
        if self.n_boundary < 2 || self.n_initial < 2 {
            return precondition("need at least 2 boundary and 2 initial points");
        }
        for (name, (lo, hi)) in [
            ("fraction", self.fraction_bounds),
            ("decay", self.decay_bounds),
            ("sigma_f", self.sigma_bounds),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return precondition(format!("{name} bounds must satisfy lower <= upper"));
            }
        }
        Ok(())
    }

    pub fn block_width(&self) -> f64 {
        self.t_final / self.n_blocks as f64
    }

    fn x_extent(&self) -> f64 {
        self.x_range.1 - self.x_range.0
    }

    fn check_tunables(&self, t: &BlockTunables) -> Result<()> {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        if !(inside(t.fraction, self.fraction_bounds) && inside(t.decay, self.decay_bounds) && inside(t.sigma_f, self.sigma_bounds)) {
            return precondition(format!("tunables {t:?} outside their bounds"));
        }
        Ok(())
    }

    pub fn search_bounds(&self) -> Result<SearchBounds> {
        SearchBounds::new(vec![
            ParamBound::new("f", self.fraction_bounds.0, self.fraction_bounds.1),
            ParamBound::new("lambda", self.decay_bounds.0, self.decay_bounds.1),
            ParamBound::new("sigma_f", self.sigma_bounds.0, self.sigma_bounds.1),
        ])
    }
}

/// The region `x - a (t - t0) in [lo, hi]`, or nothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CharacteristicMask {
    pub interval: Option<(f64, f64)>,
    pub speed: f64,
    pub t0: f64,
}

impl CharacteristicMask {
    pub fn is_empty(&self) -> bool {
        self.interval.is_none()
    }

    /// Spatial interval covered at time `t`.
    pub fn interval_at(&self, t: f64) -> Option<(f64, f64)> {
        let shift = self.speed * (t - self.t0);
        self.interval.map(|(lo, hi)| (lo + shift, hi + shift))
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        self.interval_at(t).is_some_and(|(lo, hi)| x >= lo && x <= hi)
    }
}

/// Mask around the sharp-gradient part of a profile sampled at `xs`,
/// padded by `pad` on each side and transported with speed `a` from `t0`.
/// Profiles with `max - min <= flat_fraction * max|u|` give an empty mask.
pub fn characteristic_mask(
    xs: &[f64],
    values: &[f64],
    a: f64,
    t0: f64,
    pad: f64,
    flat_fraction: f64,
) -> Result<CharacteristicMask> {
    if !(pad >= 0.0) || !(flat_fraction >= 0.0) {
        return precondition("padding and flatness fraction must be non-negative");
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= flat_fraction * lo.abs().max(hi.abs()) {
        return Ok(CharacteristicMask { interval: None, speed: a, t0 });
    }
    let clusters = detect_gradient_clusters(xs, values, DEFAULT_EPSILON, DEFAULT_MIN_PTS)?;
    let interval = clusters
        .intervals
        .iter()
        .copied()
        .reduce(|(a0, b0), (a1, b1)| (a0.min(a1), b0.max(b1)))
        .map(|(lo, hi)| (lo - pad, hi + pad));
    Ok(CharacteristicMask { interval, speed: a, t0 })
}

#[derive(Clone, Debug)]
pub struct SolvedBlock {
    pub t0: f64,
    pub t1: f64,
    pub model: SolvedModel,
    pub mask: CharacteristicMask,
    pub n_adaptive: usize,
}

#[derive(Clone, Debug)]
pub struct AdvectionSolution {
    pub blocks: Vec<SolvedBlock>,
    /// Points and values of the last slab's upper time edge.
    pub final_x: Vec<f64>,
    pub final_values: Vec<f64>,
}

impl AdvectionSolution {
    pub fn block_losses(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.model.loss).collect()
    }

    /// Largest slab loss.
    pub fn loss(&self) -> f64 {
        self.blocks.iter().fold(0.0, |a, b| a.max(b.model.loss))
    }

    /// Stitched solution; times on a slab interface use the later slab.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let idx = self.blocks.iter().rposition(|b| t >= b.t0).unwrap_or(0);
        self.blocks[idx].model.eval(&[x, t])
    }
}

fn normalized_to_physical(spec: &TimeBlockSpec, t0: f64, dt: f64, xi: f64, tau: f64) -> [f64; 2] {
    [spec.x_range.0 + xi * spec.x_extent(), t0 + tau * dt]
}

fn solve_block<R: Rng + ?Sized>(
    spec: &TimeBlockSpec,
    tun: &BlockTunables,
    t0: f64,
    init_x: &[f64],
    init_u: &[f64],
    rng: &mut R,
) -> Result<SolvedBlock> {
    let dt = spec.block_width();
    let t1 = t0 + dt;
    let lx = spec.x_extent();
    let (bx, bt) = spec.baseline_grid;
    let (hxi, htau) = (1.0 / (bx - 1) as f64, 1.0 / (bt - 1) as f64);
    let width_x = tun.sigma_f * hxi;
    let width = [lx * width_x, dt * tun.sigma_f * htau];

    let unit = Domain::rect((0.0, 1.0), (0.0, 1.0))?;
    let mut kernels = Vec::with_capacity(spec.n_rbf * 3);
    for c in uniform_grid_shaped(&unit, &[bx, bt]) {
        kernels.push(RbfKernel::new(&normalized_to_physical(spec, t0, dt, c[0], c[1]), &width)?);
    }
    let mut interior: Vec<Vec<f64>> = uniform_grid_shaped(&unit, &[spec.colloc_grid.0, spec.colloc_grid.1])
        .into_iter()
        .map(|c| normalized_to_physical(spec, t0, dt, c[0], c[1]).to_vec())
        .collect();

    let mask = characteristic_mask(init_x, init_u, spec.speed, t0, lx * hxi, FLAT_FRACTION)?;
    let mut n_adaptive = 0;
    if spec.n_adap > 0 && !mask.is_empty() {
        let count = (tun.fraction * spec.n_rbf as f64).round() as usize;
        let zeta = inverse_width_bound(tun.sigma_f, spec.nu, tun.decay);
        for _ in 0..count {
            let t = t0 + rng.random::<f64>() * dt;
            let (lo, hi) = mask.interval_at(t).expect("mask is non-empty");
            let (lo, hi) = (lo.max(spec.x_range.0), hi.min(spec.x_range.1));
            if lo >= hi {
                continue;
            }
            let x = lo + rng.random::<f64>() * (hi - lo);
            let wx = lx * draw_width(zeta, width_x, rng);
            kernels.push(RbfKernel::new(&[x, t], &[wx, width[1]])?);
            interior.push(vec![x, t]);
            n_adaptive += 1;
        }
    }

    let per_edge = spec.n_boundary / 2;
    let ts = linspace(t0, t1, per_edge);
    let mut rows: Vec<ConstraintRow> = ts
        .iter()
        .flat_map(|&t| {
            [spec.x_range.0, spec.x_range.1]
                .map(|x| ConstraintRow::new(vec![x, t], spec.initial.boundary_value(x, t, spec.speed, spec.nu), RowTag::Boundary))
        })
        .collect();
    rows.extend(init_x.iter().zip(init_u).map(|(&x, &u)| ConstraintRow::new(vec![x, t0], u, RowTag::Initial)));

    let domain = Domain::rect(spec.x_range, (t0, t1))?;
    let problem = PdeProblem::with_domain(ProblemKind::Advection1D, domain, spec.nu, spec.speed)?;
    let basis = RbfBasis::new(kernels)?;
    let system = build_system(&problem, &basis, &interior, &rows)?;
    let model = SolvedModel::fit(basis, &system)?;
    Ok(SolvedBlock {
        t0,
        t1,
        model,
        mask,
        n_adaptive,
    })
}

/// Solves the slabs one after another, each seeded with the previous
/// slab's solution on its upper time edge.
pub fn solve_advection_timeblocks(spec: &TimeBlockSpec, tunables: &BlockTunables) -> Result<AdvectionSolution> {
    solve_advection_seeded(spec, tunables, spec.seed)
}

fn solve_advection_seeded(spec: &TimeBlockSpec, tunables: &BlockTunables, seed: u64) -> Result<AdvectionSolution> {
    spec.validate()?;
    spec.check_tunables(tunables)?;
    let dt = spec.block_width();
    let xs = linspace(spec.x_range.0, spec.x_range.1, spec.n_initial);
    let mut values: Vec<f64> = xs.iter().map(|&x| spec.initial.value(x, spec.nu)).collect();
    let mut blocks = Vec::with_capacity(spec.n_blocks);
    for j in 0..spec.n_blocks {
        let t0 = j as f64 * dt;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, j as u64));
        let block = solve_block(spec, tunables, t0, &xs, &values, &mut rng)
            .map_err(|e| KapiError::Numerical(format!("time block {j}: {e}")))?;
        log::debug!("block {j}: loss {:e}, {} adaptive kernels", block.model.loss, block.n_adaptive);
        values = xs.iter().map(|&x| block.model.eval(&[x, block.t1])).collect();
        blocks.push(block);
    }
    Ok(AdvectionSolution {
        blocks,
        final_x: xs,
        final_values: values,
    })
}

/// Error of the stitched solution at `t_final` against the analytic
/// transport of the Gaussian pulse.
pub fn final_time_error(spec: &TimeBlockSpec, solution: &AdvectionSolution) -> Result<ErrorMetrics> {
    if spec.initial != InitialProfile::GaussianPulse {
        return precondition("exact solution only known for the Gaussian pulse");
    }
    let exact: Vec<f64> = solution
        .final_x
        .iter()
        .map(|&x| advection_exact(x, spec.t_final, spec.speed, spec.nu))
        .collect();
    compare_to_exact(&solution.final_values, &exact)
}

#[derive(Clone, Debug)]
pub struct AdvectionReport {
    pub tunables: BlockTunables,
    pub solution: AdvectionSolution,
    pub outcome: BoOutcome,
    pub errors: Option<ErrorMetrics>,
}

/// Optimizes `(f, lambda, sigma_f)` on the largest slab loss and returns the
/// incumbent's stitched solution.
pub fn run_advection(spec: &TimeBlockSpec, bo: &BoConfig) -> Result<AdvectionReport> {
    spec.validate()?;
    let bounds = spec.search_bounds()?;
    let to_tunables = |w: &[f64]| BlockTunables {
        fraction: w[0],
        decay: w[1],
        sigma_f: w[2],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, OPTIMIZER_STREAM));
    let outcome = optimize(
        |w, k| solve_advection_seeded(spec, &to_tunables(w), derive_seed(spec.seed, k as u64)).map(|s| s.loss()),
        &bounds,
        bo,
        &mut rng,
    )?;
    let k = outcome.history.incumbent.expect("optimizer evaluated at least once");
    let tunables = to_tunables(&outcome.w_opt);
    let solution = solve_advection_seeded(spec, &tunables, derive_seed(spec.seed, k as u64))?;
    let errors = (spec.initial == InitialProfile::GaussianPulse)
        .then(|| final_time_error(spec, &solution))
        .transpose()?;
    Ok(AdvectionReport {
        tunables,
        solution,
        outcome,
        errors,
    })
}
