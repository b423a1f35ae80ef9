//! Gaussian-process regression with a squared-exponential ARD kernel.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{precondition, KapiError, Result};

const LENGTH_RANGE: (f64, f64) = (1e-2, 1e1);
const SIGNAL_RANGE: (f64, f64) = (1e-2, 1e2);
const NOISE_CEILING: f64 = 1.0;
const RESTARTS: usize = 3;
const SIMPLEX_ITERS: usize = 150;

#[derive(Clone, Debug, PartialEq)]
pub struct GpHyper {
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn default_for(dim: usize, noise_floor: f64) -> Self {
        Self {
            length_scales: vec![0.2; dim],
            signal_var: 1.0,
            noise_var: noise_floor.clamp(1e-4, NOISE_CEILING),
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.length_scales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.noise_var.ln());
        v
    }

    fn from_log(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            length_scales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_var: v[d].exp(),
            noise_var: v[d + 1].exp(),
        }
    }
}

pub struct GpSurrogate {
    lower: Vec<f64>,
    span: Vec<f64>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_std: f64,
    hyper: GpHyper,
    alpha: Vec<f64>,
    llt: Llt<f64>,
    log_likelihood: f64,
}

impl std::fmt::Debug for GpSurrogate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GpSurrogate")
            .field("n", &self.x.len())
            .field("hyper", &self.hyper)
            .field("log_likelihood", &self.log_likelihood)
            .finish()
    }
}

fn sq_exp(a: &[f64], b: &[f64], h: &GpHyper) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&h.length_scales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    h.signal_var * (-0.5 * r2).exp()
}

/// Cholesky of `K + noise I`, adding diagonal jitter when needed.
fn factor(x: &[Vec<f64>], h: &GpHyper) -> Result<Llt<f64>> {
    let n = x.len();
    let mut jitter = 0.0;
    for _ in 0..8 {
        let k = Mat::<f64>::from_fn(n, n, |i, j| {
            sq_exp(&x[i], &x[j], h) + if i == j { h.noise_var + jitter } else { 0.0 }
        });
        if let Ok(llt) = k.llt(Side::Lower) {
            return Ok(llt);
        }
        jitter = if jitter == 0.0 { 1e-10 * h.signal_var } else { jitter * 10.0 };
    }
    Err(KapiError::Numerical("GP covariance is not positive definite after jitter".into()))
}

fn log_likelihood(llt: &Llt<f64>, y: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let yk = Mat::<f64>::from_fn(n, 1, |i, _| y[i]);
    let alpha = llt.solve(&yk);
    let fit: f64 = (0..n).map(|i| y[i] * alpha[(i, 0)]).sum();
    let l = llt.L();
    let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
    let ll = -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    (ll, (0..n).map(|i| alpha[(i, 0)]).collect())
}

fn clamp_log(v: &mut [f64], noise_floor: f64) {
    let d = v.len() - 2;
    for x in &mut v[..d] {
        *x = x.clamp(LENGTH_RANGE.0.ln(), LENGTH_RANGE.1.ln());
    }
    v[d] = v[d].clamp(SIGNAL_RANGE.0.ln(), SIGNAL_RANGE.1.ln());
    v[d + 1] = v[d + 1].clamp(noise_floor.ln(), NOISE_CEILING.ln().max(noise_floor.ln()));
}

/// Nelder-Mead on a box, by projecting every trial point into it.
fn nelder_mead(f: &mut dyn FnMut(&[f64]) -> f64, start: Vec<f64>, step: f64, iters: usize, project: &dyn Fn(&mut [f64])) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex = vec![start.clone()];
    for i in 0..n {
        let mut p = start.clone();
        p[i] += step;
        project(&mut p);
        if p == start {
            p[i] -= 2.0 * step;
            project(&mut p);
        }
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let eval = |f: &mut dyn FnMut(&[f64]) -> f64, mut p: Vec<f64>| {
        project(&mut p);
        let v = f(&p);
        (p, v)
    };
    for _ in 0..iters {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() < 1e-9 * (1.0 + values[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|p| p[d]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect() };
        let (xr, fr) = eval(f, along(-1.0));
        if fr < values[0] {
            let (xe, fe) = eval(f, along(-2.0));
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] { eval(f, along(-0.5)) } else { eval(f, along(0.5)) };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = (0..n).map(|d| simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d])).collect();
                    let (p, v) = eval(f, p);
                    simplex[i] = p;
                    values[i] = v;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best].clone(), values[best])
}

fn check_data(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if inputs.len() < 2 || inputs.len() != targets.len() {
        return precondition(format!("GP needs at least 2 matching samples, got {} and {}", inputs.len(), targets.len()));
    }
    let dim = inputs[0].len();
    if dim == 0 || inputs.iter().any(|x| x.len() != dim) {
        return precondition("GP inputs must share one nonzero dimension");
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return precondition("GP data must be finite");
    }
    Ok(dim)
}

/// Fits a GP with inputs rescaled by the data's own per-axis range.
pub fn gp_fit(inputs: &[Vec<f64>], targets: &[f64], noise_floor: f64) -> Result<GpSurrogate> {
    let dim = check_data(inputs, targets)?;
    let lower: Vec<f64> = (0..dim).map(|d| inputs.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min)).collect();
    let upper: Vec<f64> = (0..dim).map(|d| inputs.iter().map(|x| x[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    gp_fit_in_box(inputs, targets, noise_floor, &lower, &upper)
}

/// Fits a GP with inputs rescaled so the given box becomes the unit cube.
/// Length scales, signal and noise variances maximize the marginal
/// likelihood over several Nelder-Mead starts.
pub fn gp_fit_in_box(inputs: &[Vec<f64>], targets: &[f64], noise_floor: f64, lower: &[f64], upper: &[f64]) -> Result<GpSurrogate> {
    let dim = check_data(inputs, targets)?;
    if !(noise_floor > 0.0) {
        return precondition("noise floor must be positive");
    }
    let start = GpHyper::default_for(dim, noise_floor);
    let mut best_log = start.to_log();
    clamp_log(&mut best_log, noise_floor);
    let prep = Prepared::new(inputs, targets, lower, upper);

    let mut objective = |v: &[f64]| -> f64 {
        match factor(&prep.x, &GpHyper::from_log(v)) {
            Ok(llt) => -log_likelihood(&llt, &prep.y).0,
            Err(_) => f64::INFINITY,
        }
    };
    let mut best_val = objective(&best_log);
    let project = |v: &mut [f64]| clamp_log(v, noise_floor);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f9a);
    for restart in 0..RESTARTS {
        let init = if restart == 0 {
            best_log.clone()
        } else {
            let mut v: Vec<f64> = (0..dim)
                .map(|_| rng.random_range(LENGTH_RANGE.0.ln()..LENGTH_RANGE.1.ln()))
                .collect();
            v.push(rng.random_range(-1.0..1.0));
            v.push(rng.random_range(noise_floor.ln()..noise_floor.ln().max(-3.0) + 1e-9));
            project(&mut v);
            v
        };
        let (v, val) = nelder_mead(&mut objective, init, 1.0, SIMPLEX_ITERS, &project);
        if val < best_val {
            best_val = val;
            best_log = v;
        }
    }
    prep.finish(GpHyper::from_log(&best_log))
}

struct Prepared {
    lower: Vec<f64>,
    span: Vec<f64>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    y_std: f64,
}

impl Prepared {
    fn new(inputs: &[Vec<f64>], targets: &[f64], lower: &[f64], upper: &[f64]) -> Self {
        let span: Vec<f64> = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| if u - l > 0.0 { u - l } else { 1.0 })
            .collect();
        let x = inputs
            .iter()
            .map(|p| p.iter().zip(lower.iter().zip(&span)).map(|(v, (l, s))| (v - l) / s).collect())
            .collect();
        let n = targets.len() as f64;
        let y_mean = targets.iter().sum::<f64>() / n;
        let var = targets.iter().map(|t| (t - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var.sqrt() > 1e-12 * (1.0 + y_mean.abs()) { var.sqrt() } else { 1.0 };
        let y = targets.iter().map(|t| (t - y_mean) / y_std).collect();
        Self {
            lower: lower.to_vec(),
            span,
            x,
            y,
            y_mean,
            y_std,
        }
    }

    fn finish(self, hyper: GpHyper) -> Result<GpSurrogate> {
        let llt = factor(&self.x, &hyper)?;
        let (log_likelihood, alpha) = log_likelihood(&llt, &self.y);
        Ok(GpSurrogate {
            lower: self.lower,
            span: self.span,
            x: self.x,
            y: self.y,
            y_mean: self.y_mean,
            y_std: self.y_std,
            hyper,
            alpha,
            llt,
            log_likelihood,
        })
    }
}

impl GpSurrogate {
    /// Conditions a GP with fixed hyperparameters (in unit-cube units).
    pub fn with_hyper(inputs: &[Vec<f64>], targets: &[f64], hyper: GpHyper, lower: &[f64], upper: &[f64]) -> Result<Self> {
        let dim = check_data(inputs, targets)?;
        if hyper.length_scales.len() != dim {
            return precondition("one length scale per input dimension is required");
        }
        Prepared::new(inputs, targets, lower, upper).finish(hyper)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Log marginal likelihood of these data under other hyperparameters.
    pub fn log_likelihood_at(&self, hyper: &GpHyper) -> Result<f64> {
        let llt = factor(&self.x, hyper)?;
        Ok(log_likelihood(&llt, &self.y).0)
    }

    pub fn prior_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn prior_variance(&self) -> f64 {
        self.hyper.signal_var * self.y_std * self.y_std
    }

    fn normalize(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lower.iter().zip(&self.span))
            .map(|(v, (l, s))| (v - l) / s)
            .collect()
    }

    /// Posterior mean and latent variance at `p`, in target units.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        self.predict_many(std::slice::from_ref(&p.to_vec()))[0]
    }

    pub fn predict_many(&self, points: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let n = self.x.len();
        let m = points.len();
        if m == 0 {
            return Vec::new();
        }
        let z: Vec<Vec<f64>> = points.iter().map(|p| self.normalize(p)).collect();
        let kstar = Mat::<f64>::from_fn(n, m, |i, j| sq_exp(&self.x[i], &z[j], &self.hyper));
        let v = self.llt.solve(&kstar);
        (0..m)
            .map(|j| {
                let mean: f64 = (0..n).map(|i| kstar[(i, j)] * self.alpha[i]).sum();
                let reduce: f64 = (0..n).map(|i| kstar[(i, j)] * v[(i, j)]).sum();
                let var = (self.hyper.signal_var - reduce).max(0.0);
                (self.y_mean + self.y_std * mean, var * self.y_std * self.y_std)
            })
            .collect()
    }
}

/// Convenience wrapper matching the free-function style of the other modules.
pub fn gp_predict(surrogate: &GpSurrogate, p: &[f64]) -> (f64, f64) {
    surrogate.predict(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_two_points() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![1.0, 3.0];
        let gp = gp_fit(&x, &y, 1e-8).unwrap();
        assert!((gp.predict(&[0.0]).0 - 1.0).abs() < 1e-3);
        assert!((gp.predict(&[1.0]).0 - 3.0).abs() < 1e-3);
    }

    #[test]
    fn constant_targets() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0, (i * i) as f64 / 25.0]).collect();
        let y = vec![2.5; 6];
        let gp = gp_fit(&x, &y, 1e-6).unwrap();
        for p in [[0.3, 0.7], [0.9, 0.1], [5.0, 5.0]] {
            let (m, v) = gp.predict(&p);
            assert!((m - 2.5).abs() < 1e-9);
            assert!(v <= gp.prior_variance() + 1e-12);
        }
    }

    #[test]
    fn regresses_sine() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![10.0 * i as f64 / 19.0]).collect();
        let y: Vec<f64> = x.iter().map(|p| p[0].sin()).collect();
        let gp = gp_fit(&x, &y, 1e-8).unwrap();
        let mut se = 0.0;
        for i in 0..100 {
            let t = 10.0 * (i as f64 + 0.5) / 100.0;
            se += (gp.predict(&[t]).0 - t.sin()).powi(2);
        }
        let rmse = (se / 100.0).sqrt();
        assert!(rmse < 0.1, "rmse {rmse}");
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x = vec![vec![0.0], vec![0.1], vec![0.2]];
        let y = vec![1.0, 2.0, 0.5];
        let hyper = GpHyper {
            length_scales: vec![0.05],
            signal_var: 1.0,
            noise_var: 1e-6,
        };
        let gp = GpSurrogate::with_hyper(&x, &y, hyper, &[0.0], &[1.0]).unwrap();
        let (m, v) = gp.predict(&[5.0]);
        assert!((m - gp.prior_mean()).abs() < 1e-9);
        assert!((v - gp.prior_variance()).abs() < 1e-9);
        let (m, _) = gp.predict(&[0.1]);
        assert!((m - 2.0).abs() < 1e-3);
    }

    #[test]
    fn duplicate_observation_shrinks_variance() {
        let hyper = GpHyper {
            length_scales: vec![0.3],
            signal_var: 1.0,
            noise_var: 0.1,
        };
        let mut x = vec![vec![0.1], vec![0.9]];
        let mut y = vec![0.0, 1.0];
        let mut prev = f64::INFINITY;
        for _ in 0..5 {
            let gp = GpSurrogate::with_hyper(&x, &y, hyper.clone(), &[0.0], &[1.0]).unwrap();
            let (_, v) = gp.predict(&[0.5]);
            assert!(v < prev);
            prev = v;
            x.push(vec![0.5]);
            y.push(0.4);
        }
    }

    #[test]
    fn fitted_likelihood_not_below_start() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0]).collect();
        let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        let gp = gp_fit_in_box(&x, &y, 1e-6, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let start = GpHyper::default_for(2, 1e-6);
        assert!(gp.log_likelihood() >= gp.log_likelihood_at(&start).unwrap() - 1e-9);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(gp_fit(&[vec![0.0]], &[1.0], 1e-6).is_err());
        assert!(gp_fit(&[vec![0.0], vec![1.0, 2.0]], &[1.0, 2.0], 1e-6).is_err());
        assert!(gp_fit(&[vec![0.0], vec![1.0]], &[1.0, f64::NAN], 1e-6).is_err());
    }
}
