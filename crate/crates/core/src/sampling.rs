//! Mixture-model sampling of kernel centers, widths and collocation points.

use std::collections::HashSet;
use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};
use crate::problems::{linspace, Domain};
use crate::rbf::{RbfBasis, RbfKernel};

const MAX_REDRAWS: usize = 100;

/// One adaptive mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveComponent {
    /// Kernel count relative to the baseline count.
    pub fraction: f64,
    pub mean: Vec<f64>,
    /// Spread before scaling by `eta`.
    pub spread: Vec<f64>,
    /// Width decay exponent.
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseParams {
    /// Normal prior on the diffusivity.
    Diffusivity { mean: f64, std: f64 },
    AdvectionSpeed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureHyperparams {
    pub components: Vec<AdaptiveComponent>,
    pub eta: f64,
    /// Reuse one width draw for every axis of a kernel.
    pub isotropic_widths: bool,
    pub inverse: Option<InverseParams>,
}

/// `|Omega| / 10`.
pub fn default_eta(domain: &Domain) -> f64 {
    domain.max_extent() / 10.0
}

impl MixtureHyperparams {
    pub fn baseline_only(domain: &Domain) -> Self {
        Self {
            components: Vec::new(),
            eta: default_eta(domain),
            isotropic_widths: false,
            inverse: None,
        }
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.fraction).collect()
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return precondition(format!("eta must be positive, got {}", self.eta));
        }
        if self.eta.log10() > domain.max_extent().log10() - 1.0 + 1e-12 {
            return precondition(format!("eta = {} exceeds a tenth of the domain size", self.eta));
        }
        for (k, c) in self.components.iter().enumerate() {
            if !(c.fraction > 0.0 && c.fraction.is_finite()) {
                return precondition(format!("component {k}: fraction must be positive, got {}", c.fraction));
            }
            if c.mean.len() != domain.dim() || c.spread.len() != domain.dim() {
                return precondition(format!("component {k}: mean/spread must have dimension {}", domain.dim()));
            }
            if c.spread.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return precondition(format!("component {k}: spread must be positive"));
            }
            if !c.decay.is_finite() || c.mean.iter().any(|m| !m.is_finite()) {
                return precondition(format!("component {k}: non-finite parameter"));
            }
        }
        if let Some(InverseParams::Diffusivity { mean, std }) = &self.inverse {
            if !(*mean > 0.0) || !(*std >= 0.0) {
                return precondition(format!("diffusivity prior needs mean > 0, std >= 0; got {mean}, {std}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub n_colloc: usize,
    pub n_rbf: usize,
    pub sigma_f: f64,
    pub n_boundary: usize,
    pub n_initial: Option<usize>,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rbf == 0 || self.n_colloc == 0 {
            return precondition("n_rbf and n_colloc must be positive");
        }
        if self.n_rbf > self.n_colloc {
            return precondition(format!("n_rbf = {} exceeds n_colloc = {}", self.n_rbf, self.n_colloc));
        }
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) {
            return precondition(format!("sigma_f must be positive, got {}", self.sigma_f));
        }
        Ok(())
    }
}

/// A kernel center with its mixture component (0 = baseline).
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedCenter {
    pub point: Vec<f64>,
    pub component: usize,
}

#[derive(Clone, Debug)]
pub struct SampledConfiguration {
    pub basis: RbfBasis,
    pub interior_pts: Vec<Vec<f64>>,
    pub component_of: Vec<usize>,
}

/// Mixture weights `1/(1+f)` and `f_k/(1+f)` with `f = sum f_k`.
pub fn mixture_weights(f_values: &[f64]) -> Result<(f64, Vec<f64>)> {
    if let Some(f) = f_values.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return precondition(format!("fractions must be positive, got {f}"));
    }
    let total = 1.0 + f_values.iter().sum::<f64>();
    Ok((1.0 / total, f_values.iter().map(|f| f / total).collect()))
}

/// `[N_r, round(f_1 N_r), ...]`.
pub fn component_counts(n_rbf_base: usize, f_values: &[f64]) -> Vec<usize> {
    std::iter::once(n_rbf_base)
        .chain(f_values.iter().map(|f| (f * n_rbf_base as f64).round().max(0.0) as usize))
        .collect()
}

/// Per-axis point counts for a grid of roughly `n` points.
pub fn grid_shape(dim: usize, n: usize) -> Vec<usize> {
    match dim {
        1 => vec![n],
        _ => {
            let side = ((n as f64).sqrt().round() as usize).max(1);
            vec![side; dim]
        }
    }
}

/// Tensor grid with the given per-axis counts, boundaries included, first
/// axis slowest.
pub fn uniform_grid_shaped(domain: &Domain, shape: &[usize]) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = shape
        .iter()
        .enumerate()
        .map(|(d, &n)| linspace(domain.lower()[d], domain.upper()[d], n))
        .collect();
    let mut pts = vec![Vec::new()];
    for axis in &axes {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    pts
}

pub fn uniform_grid(domain: &Domain, n: usize) -> Vec<Vec<f64>> {
    uniform_grid_shaped(domain, &grid_shape(domain.dim(), n))
}

/// Draws one point from `N(mean, diag((eta spread)^2))`, redrawing until it
/// lands in the domain and clamping after the redraw budget is spent.
pub fn sample_adaptive_center<R: Rng + ?Sized>(
    component: &AdaptiveComponent,
    eta: f64,
    domain: &Domain,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let normals = component
        .mean
        .iter()
        .zip(&component.spread)
        .map(|(m, t)| Normal::new(*m, eta * t))
        .collect::<std::result::Result<Vec<_>, _>>()
        .or_else(|e| precondition(format!("invalid normal parameters: {e}")))?;
    let mut p = vec![0.0; normals.len()];
    for _ in 0..=MAX_REDRAWS {
        for (x, n) in p.iter_mut().zip(&normals) {
            *x = n.sample(rng);
        }
        if domain.contains(&p) {
            return Ok(p);
        }
    }
    domain.clamp(&mut p);
    Ok(p)
}

/// Baseline centers on a uniform grid followed by adaptive Gaussian draws.
pub fn sample_centers<R: Rng + ?Sized>(
    hp: &MixtureHyperparams,
    counts: &[usize],
    domain: &Domain,
    rng: &mut R,
) -> Result<Vec<TaggedCenter>> {
    if counts.len() != hp.components.len() + 1 {
        return precondition(format!(
            "{} counts for {} adaptive components",
            counts.len(),
            hp.components.len()
        ));
    }
    let mut centers: Vec<TaggedCenter> = uniform_grid(domain, counts[0])
        .into_iter()
        .map(|point| TaggedCenter { point, component: 0 })
        .collect();
    for (k, comp) in hp.components.iter().enumerate() {
        for _ in 0..counts[k + 1] {
            centers.push(TaggedCenter {
                point: sample_adaptive_center(comp, hp.eta, domain, rng)?,
                component: k + 1,
            });
        }
    }
    Ok(centers)
}

/// Upper end of the inverse-width range, `nu^-(1+decay) / (sqrt(2) sigma_f)`.
pub fn inverse_width_bound(sigma_f: f64, nu: f64, decay: f64) -> f64 {
    nu.powf(-(1.0 + decay)) / (SQRT_2 * sigma_f)
}

/// One width draw `min(|1/(sqrt(2) xi)|, sigma_f)` with `xi ~ U[-zeta/2, zeta/2]`.
pub fn draw_width<R: Rng + ?Sized>(zeta: f64, sigma_f: f64, rng: &mut R) -> f64 {
    let xi = (rng.random::<f64>() - 0.5) * zeta;
    (1.0 / (SQRT_2 * xi)).abs().min(sigma_f)
}

/// Widths of one kernel of adaptive component `component` (1-based).
pub fn sample_widths<R: Rng + ?Sized>(
    hp: &MixtureHyperparams,
    component: usize,
    nu: f64,
    sigma_f: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if component == 0 || component > hp.components.len() {
        return precondition(format!("adaptive component index {component} out of range"));
    }
    if !(nu > 0.0) || !(sigma_f > 0.0) {
        return precondition("nu and sigma_f must be positive");
    }
    let comp = &hp.components[component - 1];
    let zeta = inverse_width_bound(sigma_f, nu, comp.decay);
    let dim = comp.mean.len();
    if hp.isotropic_widths {
        Ok(vec![draw_width(zeta, sigma_f, rng); dim])
    } else {
        Ok((0..dim).map(|_| draw_width(zeta, sigma_f, rng)).collect())
    }
}

/// The collocation grid plus every adaptive center, exact duplicates removed.
pub fn sample_collocation(baseline: &BaselineConfig, centers: &[TaggedCenter], domain: &Domain) -> Vec<Vec<f64>> {
    let mut seen = HashSet::new();
    let mut pts = Vec::new();
    let grid = uniform_grid(domain, baseline.n_colloc);
    let adaptive = centers.iter().filter(|c| c.component > 0).map(|c| c.point.clone());
    for p in grid.into_iter().chain(adaptive) {
        let key: Vec<u64> = p.iter().map(|x| x.to_bits()).collect();
        if seen.insert(key) {
            pts.push(p);
        }
    }
    pts
}

/// A positive draw from the diffusivity prior.
pub fn sample_nu<R: Rng + ?Sized>(hp: &MixtureHyperparams, rng: &mut R) -> Result<f64> {
    let Some(InverseParams::Diffusivity { mean, std }) = hp.inverse else {
        return precondition("no diffusivity prior in the hyperparameters");
    };
    if !(mean > 0.0) || !(std >= 0.0) {
        return precondition(format!("diffusivity prior needs mean > 0, std >= 0; got {mean}, {std}"));
    }
    if std == 0.0 {
        return Ok(mean);
    }
    let normal = Normal::new(mean, std).or_else(|e| precondition(format!("invalid prior: {e}")))?;
    for _ in 0..MAX_REDRAWS {
        let v = normal.sample(rng);
        if v > 0.0 {
            return Ok(v);
        }
    }
    Ok(mean)
}

/// Full kernel configuration for one objective evaluation.
pub fn sample_configuration<R: Rng + ?Sized>(
    hp: &MixtureHyperparams,
    baseline: &BaselineConfig,
    domain: &Domain,
    nu: f64,
    rng: &mut R,
) -> Result<SampledConfiguration> {
    hp.validate(domain)?;
    baseline.validate()?;
    let counts = component_counts(baseline.n_rbf, &hp.fractions());
    let centers = sample_centers(hp, &counts, domain, rng)?;
    let mut kernels = Vec::with_capacity(centers.len());
    for c in &centers {
        let width = if c.component == 0 {
            vec![baseline.sigma_f; domain.dim()]
        } else {
            sample_widths(hp, c.component, nu, baseline.sigma_f, rng)?
        };
        kernels.push(RbfKernel::new(&c.point, &width)?);
    }
    let interior_pts = sample_collocation(baseline, &centers, domain);
    Ok(SampledConfiguration {
        basis: RbfBasis::new(kernels)?,
        interior_pts,
        component_of: centers.iter().map(|c| c.component).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit() -> Domain {
        Domain::interval(0.0, 1.0).unwrap()
    }

    fn one_component(mean: f64, spread: f64, decay: f64, fraction: f64) -> MixtureHyperparams {
        MixtureHyperparams {
            components: vec![AdaptiveComponent {
                fraction,
                mean: vec![mean],
                spread: vec![spread],
                decay,
            }],
            eta: 0.1,
            isotropic_widths: false,
            inverse: None,
        }
    }

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    }

    #[test]
    fn weights_spot_values() {
        assert_eq!(mixture_weights(&[1.0]).unwrap(), (0.5, vec![0.5]));
        let (b, a) = mixture_weights(&[0.5]).unwrap();
        assert!((b - 2.0 / 3.0).abs() < 1e-15 && (a[0] - 1.0 / 3.0).abs() < 1e-15);
        let (b, a) = mixture_weights(&[0.3, 0.4]).unwrap();
        assert!((b - 1.0 / 1.7).abs() < 1e-15);
        assert!((a[0] - 0.3 / 1.7).abs() < 1e-15 && (a[1] - 0.4 / 1.7).abs() < 1e-15);
        assert!(mixture_weights(&[0.0]).is_err());
        assert!(mixture_weights(&[-1.0]).is_err());
    }

    #[test]
    fn counts_spot_values() {
        assert_eq!(component_counts(250, &[0.5]), vec![250, 125]);
        let c = component_counts(750, &[0.7]);
        assert_eq!(c, vec![750, 525]);
        assert_eq!(c.iter().sum::<usize>(), 1275);
        assert_eq!(component_counts(100, &[]), vec![100]);
    }

    #[test]
    fn baseline_grid_is_equispaced() {
        let hp = MixtureHyperparams::baseline_only(&unit());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = sample_centers(&hp, &[11], &unit(), &mut rng).unwrap();
        assert_eq!(c.len(), 11);
        for (i, t) in c.iter().enumerate() {
            assert_eq!(t.component, 0);
            assert!((t.point[0] - i as f64 / 10.0).abs() < 1e-15);
        }
        let sq = Domain::rect((0.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(uniform_grid(&sq, 1600).len(), 1600);
        assert_eq!(uniform_grid(&sq, 400)[1], vec![0.0, 1.0 / 19.0]);
    }

    #[test]
    fn adaptive_center_moments() {
        let hp = one_component(0.5, 0.3, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let c = sample_centers(&hp, &[0, n], &unit(), &mut rng).unwrap();
        let xs: Vec<f64> = c.iter().map(|t| t.point[0]).collect();
        let (m, s) = mean_std(&xs);
        let target_s = 0.1 * 0.3;
        let se_mean = target_s / (n as f64).sqrt();
        let se_std = target_s / (2.0 * (n as f64 - 1.0)).sqrt();
        assert!((m - 0.5).abs() < 3.0 * se_mean, "mean {m}");
        assert!((s - target_s).abs() < 3.0 * se_std, "std {s}");
    }

    #[test]
    fn adaptive_centers_stay_inside() {
        let hp = one_component(0.99, 5.0, 0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sample_centers(&hp, &[0, 10_000], &unit(), &mut rng).unwrap();
        assert!(c.iter().all(|t| unit().contains(&t.point)));
        // far outside: the redraw budget runs out and the draw is clamped
        let hp = one_component(50.0, 0.1, 0.5, 1.0);
        let c = sample_centers(&hp, &[0, 5], &unit(), &mut rng).unwrap();
        assert!(c.iter().all(|t| t.point[0] == 1.0));
    }

    #[test]
    fn zeta_spot_value() {
        let z = inverse_width_bound(0.04, 0.01, 0.5);
        assert!((z - 17677.67).abs() < 0.01, "{z}");
    }

    #[test]
    fn zero_draw_maps_to_sigma_f() {
        assert_eq!((1.0 / (SQRT_2 * 0.0f64)).abs().min(0.04), 0.04);
        assert_eq!(draw_width(0.0, 0.04, &mut ChaCha8Rng::seed_from_u64(0)), 0.04);
    }

    #[test]
    fn widths_bounded() {
        let hp = one_component(0.5, 0.2, 0.7, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            let w = sample_widths(&hp, 1, 0.001, 0.04, &mut rng).unwrap()[0];
            assert!(w > 0.0 && w <= 0.04);
        }
        assert!(sample_widths(&hp, 0, 0.01, 0.04, &mut rng).is_err());
        assert!(sample_widths(&hp, 2, 0.01, 0.04, &mut rng).is_err());
    }

    #[test]
    fn isotropic_widths_repeat() {
        let sq = Domain::rect((0.0, 1.0), (0.0, 1.0)).unwrap();
        let hp = MixtureHyperparams {
            components: vec![AdaptiveComponent {
                fraction: 0.5,
                mean: vec![0.5, 0.5],
                spread: vec![0.2, 0.2],
                decay: 0.7,
            }],
            eta: default_eta(&sq),
            isotropic_widths: true,
            inverse: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = sample_widths(&hp, 1, 0.05, 0.2, &mut rng).unwrap();
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn collocation_contains_centers() {
        let baseline = BaselineConfig {
            n_colloc: 500,
            n_rbf: 250,
            sigma_f: 0.04,
            n_boundary: 2,
            n_initial: None,
        };
        let none = sample_collocation(&baseline, &[], &unit());
        assert_eq!(none, uniform_grid(&unit(), 500));

        let hp = one_component(0.95, 0.2, 0.7, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let centers = sample_centers(&hp, &component_counts(250, &[0.5]), &unit(), &mut rng).unwrap();
        let pts = sample_collocation(&baseline, &centers, &unit());
        assert_eq!(pts.len(), 500 + 125);
        for c in centers.iter().filter(|c| c.component > 0) {
            assert!(pts.contains(&c.point));
        }
        let dup = vec![
            TaggedCenter { point: vec![0.123], component: 1 },
            TaggedCenter { point: vec![0.123], component: 1 },
        ];
        assert_eq!(sample_collocation(&baseline, &dup, &unit()).len(), 501);
    }

    #[test]
    fn nu_draws() {
        let mut hp = one_component(0.5, 0.1, 0.5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_nu(&hp, &mut rng).is_err());
        hp.inverse = Some(InverseParams::Diffusivity { mean: 0.01, std: 0.0 });
        assert_eq!(sample_nu(&hp, &mut rng).unwrap(), 0.01);
        hp.inverse = Some(InverseParams::Diffusivity { mean: 0.01, std: 0.001 });
        let draws: Vec<f64> = (0..100_000).map(|_| sample_nu(&hp, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|v| *v > 0.0));
        let (m, _) = mean_std(&draws);
        assert!((m - 0.01).abs() < 3.0 * 0.001 / (1e5f64).sqrt());
        hp.inverse = Some(InverseParams::Diffusivity { mean: 0.01, std: 1.0 });
        assert!((0..1000).all(|_| sample_nu(&hp, &mut rng).unwrap() > 0.0));
    }

    #[test]
    fn configuration_invariants_and_determinism() {
        let baseline = BaselineConfig {
            n_colloc: 500,
            n_rbf: 250,
            sigma_f: 0.04,
            n_boundary: 2,
            n_initial: None,
        };
        let hp = one_component(0.95, 0.2, 0.7, 0.5);
        let a = sample_configuration(&hp, &baseline, &unit(), 0.01, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_configuration(&hp, &baseline, &unit(), 0.01, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.interior_pts, b.interior_pts);
        assert_eq!(a.basis.len(), 375);
        for (k, tag) in a.basis.kernels().iter().zip(&a.component_of) {
            if *tag == 0 {
                assert_eq!(k.width()[0], 0.04);
            } else {
                assert!(k.width()[0] <= 0.04);
                assert!(a.interior_pts.iter().any(|p| p.as_slice() == k.center()));
            }
            assert!(unit().contains(k.center()));
        }
    }

    #[test]
    fn validation() {
        let mut hp = one_component(0.5, 0.1, 0.5, 0.5);
        assert!(hp.validate(&unit()).is_ok());
        hp.eta = 0.2;
        assert!(hp.validate(&unit()).is_err());
        hp.eta = 0.1;
        hp.components[0].fraction = 0.0;
        assert!(hp.validate(&unit()).is_err());
        let b = BaselineConfig {
            n_colloc: 10,
            n_rbf: 20,
            sigma_f: 0.1,
            n_boundary: 2,
            n_initial: None,
        };
        assert!(b.validate().is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(f in prop::collection::vec(1e-3f64..10.0, 0..8)) {
            let (b, a) = mixture_weights(&f).unwrap();
            prop_assert!((b + a.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn zeta_decreases_with_nu(nu1 in 1e-5f64..1.0, ratio in 1.001f64..100.0, decay in -0.99f64..2.0, sf in 1e-3f64..1.0) {
            let nu2 = nu1 * ratio;
            prop_assert!(inverse_width_bound(sf, nu1, decay) > inverse_width_bound(sf, nu2, decay));
        }
    }
}
