//! Design-matrix assembly, pseudoinverse solve, and the residual loss.

use faer::Mat;

use crate::error::{precondition, KapiError, Result};
use crate::problems::PdeProblem;
use crate::rbf::RbfBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowTag {
    Interior,
    Boundary,
    Initial,
    Sensor,
}

/// A plain evaluation row: `u(point) = value`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRow {
    pub point: Vec<f64>,
    pub value: f64,
    pub tag: RowTag,
}

impl ConstraintRow {
    pub fn new(point: Vec<f64>, value: f64, tag: RowTag) -> Self {
        Self { point, value, tag }
    }

    pub fn tagged(rows: Vec<(Vec<f64>, f64)>, tag: RowTag) -> Vec<Self> {
        rows.into_iter().map(|(p, v)| Self::new(p, v, tag)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub h: Mat<f64>,
    pub r: Vec<f64>,
    pub row_tags: Vec<RowTag>,
}

impl LinearSystem {
    /// Builds a system from explicit dense data; every row is tagged interior.
    pub fn from_rows(rows: &[Vec<f64>], r: Vec<f64>) -> Result<Self> {
        let m = rows.len();
        if m == 0 || m != r.len() {
            return precondition(format!("{m} rows but {} targets", r.len()));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|row| row.len() != n) {
            return precondition("rows must be non-empty and share one length");
        }
        Ok(Self {
            h: Mat::from_fn(m, n, |i, j| rows[i][j]),
            r,
            row_tags: vec![RowTag::Interior; m],
        })
    }

    pub fn n_rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.h.ncols()
    }

    pub fn count(&self, tag: RowTag) -> usize {
        self.row_tags.iter().filter(|t| **t == tag).count()
    }
}

/// Assembles `H c = r`: interior rows apply the problem operator to every
/// kernel, constraint rows evaluate the kernels.
pub fn build_system(
    problem: &PdeProblem,
    basis: &RbfBasis,
    interior_pts: &[Vec<f64>],
    constraints: &[ConstraintRow],
) -> Result<LinearSystem> {
    if basis.is_empty() {
        return precondition("empty basis");
    }
    if basis.dim() != problem.dim() {
        return precondition(format!("basis dimension {} vs problem dimension {}", basis.dim(), problem.dim()));
    }
    let dim = basis.dim();
    if let Some(p) = interior_pts
        .iter()
        .chain(constraints.iter().map(|c| &c.point))
        .find(|p| p.len() != dim)
    {
        return precondition(format!("point {p:?} does not have dimension {dim}"));
    }
    let n_int = interior_pts.len();
    let m = n_int + constraints.len();
    if m == 0 {
        return precondition("system has no rows");
    }
    let kernels = basis.kernels();
    let mut h = Mat::<f64>::zeros(m, kernels.len());
    for (j, k) in kernels.iter().enumerate() {
        let col = h.col_mut(j).try_as_col_major_mut().expect("owned matrix is column-major").as_slice_mut();
        for (i, p) in interior_pts.iter().enumerate() {
            col[i] = problem.apply_operator(p, &k.jet(p));
        }
        for (i, c) in constraints.iter().enumerate() {
            col[n_int + i] = k.value(&c.point);
        }
    }
    let mut r = Vec::with_capacity(m);
    r.extend(interior_pts.iter().map(|p| problem.source(p)));
    r.extend(constraints.iter().map(|c| c.value));
    let mut row_tags = vec![RowTag::Interior; n_int];
    row_tags.extend(constraints.iter().map(|c| c.tag));
    Ok(LinearSystem { h, r, row_tags })
}

/// Pseudoinverse options.
///
/// With `equilibrate`, columns are scaled to unit 2-norm before the SVD and
/// the coefficients are rescaled afterwards; columns whose norm is negligible
/// against the largest one get a zero coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LstsqOptions {
    pub rcond: f64,
    pub equilibrate: bool,
}

impl Default for LstsqOptions {
    fn default() -> Self {
        Self {
            rcond: 1e-14,
            equilibrate: true,
        }
    }
}

impl LstsqOptions {
    /// Unscaled minimum-norm pseudoinverse with the given cutoff.
    pub fn plain(rcond: f64) -> Self {
        Self {
            rcond,
            equilibrate: false,
        }
    }
}

const NEGLIGIBLE_COLUMN: f64 = 1e-150;

pub fn solve_least_squares(system: &LinearSystem) -> Result<Vec<f64>> {
    solve_least_squares_with(system, LstsqOptions::default())
}

pub fn solve_least_squares_with(system: &LinearSystem, opts: LstsqOptions) -> Result<Vec<f64>> {
    let (m, n) = (system.n_rows(), system.n_cols());
    if m == 0 || n == 0 {
        return precondition("empty system");
    }
    if system.r.len() != m {
        return precondition(format!("{m} rows but {} targets", system.r.len()));
    }
    if system.r.iter().any(|v| !v.is_finite()) {
        return Err(KapiError::Numerical("non-finite target vector".into()));
    }
    for j in 0..n {
        if system.h.col(j).iter().any(|v| !v.is_finite()) {
            return Err(KapiError::Numerical(format!("non-finite entry in design matrix column {j}")));
        }
    }

    let mut scale = vec![1.0; n];
    let mut keep: Vec<usize> = (0..n).collect();
    if opts.equilibrate {
        let norms: Vec<f64> = (0..n).map(|j| system.h.col(j).norm_l2()).collect();
        let top = norms.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 {
            return Ok(vec![0.0; n]);
        }
        keep.retain(|&j| norms[j] > NEGLIGIBLE_COLUMN * top);
        for &j in &keep {
            scale[j] = 1.0 / norms[j];
        }
    }

    let a = Mat::<f64>::from_fn(m, keep.len(), |i, k| system.h[(i, keep[k])] * scale[keep[k]]);
    let svd = a
        .thin_svd()
        .map_err(|e| KapiError::Numerical(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let rank_cut = s.iter().cloned().fold(0.0, f64::max) * opts.rcond;

    let rk = Mat::<f64>::from_fn(m, 1, |i, _| system.r[i]);
    let ut_r = u.transpose() * &rk;
    let mut y = Mat::<f64>::zeros(s.nrows(), 1);
    for i in 0..s.nrows() {
        if s[i] > rank_cut && s[i] > 0.0 {
            y[(i, 0)] = ut_r[(i, 0)] / s[i];
        }
    }
    let z = v * &y;

    let mut c = vec![0.0; n];
    for (k, &j) in keep.iter().enumerate() {
        c[j] = z[(k, 0)] * scale[j];
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(KapiError::Numerical("non-finite coefficients".into()));
    }
    Ok(c)
}

/// `H c - r` row by row.
pub fn residual_vector(system: &LinearSystem, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != system.n_cols() {
        return precondition(format!("{} coefficients for {} columns", c.len(), system.n_cols()));
    }
    let ck = Mat::<f64>::from_fn(c.len(), 1, |i, _| c[i]);
    let hc = &system.h * &ck;
    Ok((0..system.n_rows()).map(|i| hc[(i, 0)] - system.r[i]).collect())
}

/// `max_i |(H c - r)_i|` over every row.
pub fn residual_loss(system: &LinearSystem, c: &[f64]) -> Result<f64> {
    Ok(residual_vector(system, c)?.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())))
}

#[derive(Clone, Debug)]
pub struct SolvedModel {
    pub basis: RbfBasis,
    pub coefficients: Vec<f64>,
    pub loss: f64,
}

impl SolvedModel {
    /// Solves `system` (assembled from `basis`) and records the loss.
    pub fn fit(basis: RbfBasis, system: &LinearSystem) -> Result<Self> {
        Self::fit_with(basis, system, LstsqOptions::default())
    }

    pub fn fit_with(basis: RbfBasis, system: &LinearSystem, opts: LstsqOptions) -> Result<Self> {
        if basis.len() != system.n_cols() {
            return precondition("basis size does not match the system");
        }
        let coefficients = solve_least_squares_with(system, opts)?;
        let loss = residual_loss(system, &coefficients)?;
        if !loss.is_finite() {
            return Err(KapiError::Numerical("non-finite residual loss".into()));
        }
        Ok(Self {
            basis,
            coefficients,
            loss,
        })
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.basis
            .kernels()
            .iter()
            .zip(&self.coefficients)
            .map(|(k, c)| c * k.value(p))
            .sum()
    }
}

/// `sum_i c_i G_i(p)` at every point.
pub fn evaluate_model(model: &SolvedModel, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = model.basis.dim();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return precondition(format!("point {p:?} does not have dimension {dim}"));
    }
    Ok(points.iter().map(|p| model.eval(p)).collect())
}
