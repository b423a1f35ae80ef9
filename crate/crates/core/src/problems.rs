//! Benchmark PDE problems: operators, boundary and initial data, exact
//! solutions, and a finite-difference reference for the 2D Poisson case.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, KapiError, Result};
use crate::rbf::KernelJet;

/// Which benchmark operator a [`PdeProblem`] carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// `u_x - nu u_xx = 0` on `[0, 1]`, `u(0) = 0`, `u(1) = 1`.
    ConvDiffType1,
    /// `2(2x - 1) u_x - nu u_xx + 4u = 0` on `[0, 1]`, `u(0) = u(1) = 1`.
    ConvDiffType2,
    /// `u_xx + u_yy = S(x, y)` on the unit square, zero Dirichlet data.
    #[serde(rename = "poisson-2d")]
    Poisson2D,
    /// `u_t + a u_x = 0` on `[-1, 1] x [0, 1]`, zero Dirichlet data in x.
    #[serde(rename = "advection-1d")]
    Advection1D,
}

impl ProblemKind {
    pub fn dim(self) -> usize {
        match self {
            ProblemKind::ConvDiffType1 | ProblemKind::ConvDiffType2 => 1,
            ProblemKind::Poisson2D | ProblemKind::Advection1D => 2,
        }
    }
}

/// Axis-aligned box; 1D or 2D.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() > crate::rbf::MAX_DIM {
            return precondition(format!(
                "domain bounds must have matching dimension 1 or 2, got {} and {}",
                lower.len(),
                upper.len()
            ));
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return precondition(format!("degenerate domain in dimension {d}: [{lo}, {hi}]"));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn rect(x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        Self::new(vec![x.0, y.0], vec![x.1, y.1])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    /// Largest side length; used as the domain size `|Omega|`.
    pub fn max_extent(&self) -> f64 {
        (0..self.dim()).map(|d| self.extent(d)).fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (d, x) in p.iter_mut().enumerate() {
            *x = x.clamp(self.lower[d], self.upper[d]);
        }
    }
}

/// A benchmark problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeProblem {
    pub kind: ProblemKind,
    pub domain: Domain,
    /// Stiffness / diffusion / pulse-width parameter.
    pub nu: f64,
    /// Transport speed; only meaningful for [`ProblemKind::Advection1D`].
    pub advection_speed: f64,
}

impl PdeProblem {
    pub fn new(kind: ProblemKind, nu: f64, advection_speed: f64) -> Result<Self> {
        let domain = match kind {
            ProblemKind::ConvDiffType1 | ProblemKind::ConvDiffType2 => Domain::interval(0.0, 1.0)?,
            ProblemKind::Poisson2D => Domain::rect((0.0, 1.0), (0.0, 1.0))?,
            ProblemKind::Advection1D => Domain::rect((-1.0, 1.0), (0.0, 1.0))?,
        };
        Self::with_domain(kind, domain, nu, advection_speed)
    }

    /// Same operator on a custom box, e.g. one time slab of the advection problem.
    pub fn with_domain(kind: ProblemKind, domain: Domain, nu: f64, advection_speed: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return precondition(format!("nu must be positive and finite, got {nu}"));
        }
        if !advection_speed.is_finite() {
            return precondition("advection speed must be finite");
        }
        if domain.dim() != kind.dim() {
            return precondition(format!(
                "{kind:?} needs a {}-dimensional domain, got {}",
                kind.dim(),
                domain.dim()
            ));
        }
        Ok(Self {
            kind,
            domain,
            nu,
            advection_speed,
        })
    }

    pub fn type1(nu: f64) -> Result<Self> {
        Self::new(ProblemKind::ConvDiffType1, nu, 0.0)
    }

    pub fn type2(nu: f64) -> Result<Self> {
        Self::new(ProblemKind::ConvDiffType2, nu, 0.0)
    }

    pub fn poisson(nu: f64) -> Result<Self> {
        Self::new(ProblemKind::Poisson2D, nu, 0.0)
    }

    pub fn advection(nu: f64, speed: f64) -> Result<Self> {
        Self::new(ProblemKind::Advection1D, nu, speed)
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Right-hand side of the interior equation at `p`.
    pub fn source(&self, p: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Poisson2D => poisson_source_unchecked(p[0], p[1], self.nu),
            _ => 0.0,
        }
    }

    /// Applies the differential operator to one kernel, given its value and
    /// derivatives at the evaluation point.
    pub fn apply_operator(&self, p: &[f64], jet: &KernelJet) -> f64 {
        let nu = self.nu;
        match self.kind {
            ProblemKind::ConvDiffType1 => jet.d1[0] - nu * jet.d2[0],
            ProblemKind::ConvDiffType2 => {
                2.0 * (2.0 * p[0] - 1.0) * jet.d1[0] - nu * jet.d2[0] + 4.0 * jet.value
            }
            ProblemKind::Poisson2D => jet.d2[0] + jet.d2[1],
            ProblemKind::Advection1D => jet.d1[1] + self.advection_speed * jet.d1[0],
        }
    }

    /// Dirichlet constraints as `(point, value)` pairs.
    ///
    /// 1D problems use the two endpoints regardless of `n_boundary`. The
    /// Poisson square spreads `n_boundary` points evenly along its perimeter;
    /// the advection slab puts half on each spatial edge, spanning the time
    /// extent.
    pub fn boundary_rows(&self, n_boundary: usize) -> Vec<(Vec<f64>, f64)> {
        let lo = self.domain.lower();
        let hi = self.domain.upper();
        match self.kind {
            ProblemKind::ConvDiffType1 => vec![(vec![lo[0]], 0.0), (vec![hi[0]], 1.0)],
            ProblemKind::ConvDiffType2 => vec![(vec![lo[0]], 1.0), (vec![hi[0]], 1.0)],
            ProblemKind::Poisson2D => {
                let per_side = n_boundary.div_ceil(4).max(1);
                let mut rows = Vec::with_capacity(4 * per_side);
                for k in 0..per_side {
                    let s = k as f64 / per_side as f64;
                    let x = lo[0] + s * self.domain.extent(0);
                    let y = lo[1] + s * self.domain.extent(1);
                    let xr = hi[0] - s * self.domain.extent(0);
                    let yr = hi[1] - s * self.domain.extent(1);
                    rows.push((vec![x, lo[1]], 0.0));
                    rows.push((vec![hi[0], y], 0.0));
                    rows.push((vec![xr, hi[1]], 0.0));
                    rows.push((vec![lo[0], yr], 0.0));
                }
                rows
            }
            ProblemKind::Advection1D => {
                let per_edge = (n_boundary / 2).max(1);
                let ts = linspace(lo[1], hi[1], per_edge);
                ts.iter()
                    .map(|&t| (vec![lo[0], t], 0.0))
                    .chain(ts.iter().map(|&t| (vec![hi[0], t], 0.0)))
                    .collect()
            }
        }
    }

    /// Initial-condition constraints on the slab's lower time edge, using the
    /// analytic initial profile. Empty for steady problems.
    pub fn initial_rows(&self, n_initial: usize) -> Vec<(Vec<f64>, f64)> {
        if self.kind != ProblemKind::Advection1D {
            return Vec::new();
        }
        let t0 = self.domain.lower()[1];
        linspace(self.domain.lower()[0], self.domain.upper()[0], n_initial)
            .into_iter()
            .map(|x| (vec![x, t0], advection_exact_unchecked(x, t0, self.advection_speed, self.nu)))
            .collect()
    }

    /// Exact solution where a closed form exists.
    pub fn exact(&self, p: &[f64]) -> Option<f64> {
        match self.kind {
            ProblemKind::ConvDiffType1 => exact_type1(p[0], self.nu).ok(),
            ProblemKind::ConvDiffType2 => exact_type2(p[0], self.nu).ok(),
            ProblemKind::Advection1D => Some(advection_exact_unchecked(p[0], p[1], self.advection_speed, self.nu)),
            ProblemKind::Poisson2D => None,
        }
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (a + b)],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()
        }
    }
}

fn check_unit(x: f64, nu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return precondition(format!("x = {x} outside [0, 1]"));
    }
    if !(nu > 0.0) {
        return precondition(format!("nu must be positive, got {nu}"));
    }
    Ok(())
}

/// Exact Type-1 solution `(e^{x/nu} - 1) / (e^{1/nu} - 1)`, rewritten with
/// negative exponents so it stays finite for tiny `nu`.
pub fn exact_type1(x: f64, nu: f64) -> Result<f64> {
    check_unit(x, nu)?;
    let tail = (-1.0 / nu).exp();
    Ok((((x - 1.0) / nu).exp() - tail) / (1.0 - tail))
}

/// Exact Type-2 solution `exp(-2x(1-x)/nu)`.
pub fn exact_type2(x: f64, nu: f64) -> Result<f64> {
    check_unit(x, nu)?;
    Ok((-2.0 * x * (1.0 - x) / nu).exp())
}

/// Gaussian source of the Poisson benchmark, centered at (0.5, 0.5).
pub fn poisson_source(x: f64, y: f64, nu: f64) -> Result<f64> {
    if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
        return precondition(format!("({x}, {y}) outside the unit square"));
    }
    if !(nu > 0.0) {
        return precondition(format!("nu must be positive, got {nu}"));
    }
    Ok(poisson_source_unchecked(x, y, nu))
}

fn poisson_source_unchecked(x: f64, y: f64, nu: f64) -> f64 {
    let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
    (-r2 / (2.0 * nu * nu)).exp() / (2.0 * PI * nu * nu)
}

/// Gaussian pulse `exp(-(x + 0.3)^2 / (4 nu^2))`.
pub fn advection_initial(x: f64, nu: f64) -> f64 {
    (-(x + 0.3).powi(2) / (4.0 * nu * nu)).exp()
}

/// The initial pulse transported along `dx/dt = a`.
pub fn advection_exact(x: f64, t: f64, a: f64, nu: f64) -> f64 {
    advection_exact_unchecked(x, t, a, nu)
}

fn advection_exact_unchecked(x: f64, t: f64, a: f64, nu: f64) -> f64 {
    advection_initial(x - a * t, nu)
}

/// Values of a scalar field on an `n x n` uniform grid over the unit square,
/// stored row-major with `x` as the slow index.
#[derive(Clone, Debug)]
pub struct GridField {
    pub n: usize,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut pts = Vec::with_capacity(self.n * self.n);
        for &x in &self.coords {
            for &y in &self.coords {
                pts.push(vec![x, y]);
            }
        }
        pts
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    /// Discrete 5-point Laplacian at an interior node.
    pub fn laplacian_at(&self, i: usize, j: usize) -> f64 {
        let h2 = self.spacing().powi(2);
        (self.at(i + 1, j) + self.at(i - 1, j) + self.at(i, j + 1) + self.at(i, j - 1) - 4.0 * self.at(i, j)) / h2
    }
}

/// Reference solution of the Poisson benchmark with the standard 5-point
/// Laplacian on an `n_grid x n_grid` grid and zero Dirichlet boundary.
///
/// The discrete system is solved directly by diagonalizing the 1D second
/// difference operator with the discrete sine basis in each direction.
pub fn poisson_fdm_oracle(nu: f64, n_grid: usize) -> Result<GridField> {
    poisson_fdm_with_source(n_grid, |x, y| poisson_source_unchecked(x, y, nu))
        .and_then(|g| if nu > 0.0 { Ok(g) } else { precondition("nu must be positive") })
}

/// Same discrete solve with an arbitrary source.
pub fn poisson_fdm_with_source(n_grid: usize, source: impl Fn(f64, f64) -> f64) -> Result<GridField> {
    if n_grid < 3 {
        return precondition(format!("n_grid must be at least 3, got {n_grid}"));
    }
    let m = n_grid - 2;
    let h = 1.0 / (n_grid - 1) as f64;
    let coords = linspace(0.0, 1.0, n_grid);

    let norm = (2.0 / (m + 1) as f64).sqrt();
    let q = Mat::<f64>::from_fn(m, m, |j, k| norm * (((j + 1) * (k + 1)) as f64 * PI / (m + 1) as f64).sin());
    let eig: Vec<f64> = (1..=m)
        .map(|k| (2.0 * (k as f64 * PI / (m + 1) as f64).cos() - 2.0) / (h * h))
        .collect();

    let f = Mat::<f64>::from_fn(m, m, |i, j| source(coords[i + 1], coords[j + 1]));
    let mut spectral = &q * &f * &q;
    for j in 0..m {
        for i in 0..m {
            spectral[(i, j)] /= eig[i] + eig[j];
        }
    }
    let interior = &q * &spectral * &q;

    let mut values = vec![0.0; n_grid * n_grid];
    for i in 0..m {
        for j in 0..m {
            let v = interior[(i, j)];
            if !v.is_finite() {
                return Err(KapiError::Numerical("non-finite value in FDM solve".into()));
            }
            values[(i + 1) * n_grid + (j + 1)] = v;
        }
    }
    Ok(GridField { n: n_grid, coords, values })
}
