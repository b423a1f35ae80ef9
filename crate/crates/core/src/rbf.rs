//! Gaussian radial basis functions with analytic derivatives.
//!
//! A kernel is stored by center and per-axis width; evaluation goes through
//! the affine form `exp(-sum_d (m_d x_d + b_d)^2)` with `m = 1/(sqrt(2) sigma)`
//! and `b = -center * m`.

use std::f64::consts::SQRT_2;

use crate::error::{precondition, Result};

pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfKernel {
    dim: usize,
    center: [f64; MAX_DIM],
    width: [f64; MAX_DIM],
    slope: [f64; MAX_DIM],
    intercept: [f64; MAX_DIM],
}

/// Value, first and second partial derivatives of one kernel at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KernelJet {
    pub value: f64,
    pub d1: [f64; MAX_DIM],
    pub d2: [f64; MAX_DIM],
}

impl RbfKernel {
    pub fn new(center: &[f64], width: &[f64]) -> Result<Self> {
        let dim = center.len();
        if dim == 0 || dim > MAX_DIM || width.len() != dim {
            return precondition(format!(
                "kernel needs matching center/width of dimension 1 or 2, got {} and {}",
                center.len(),
                width.len()
            ));
        }
        let mut k = RbfKernel {
            dim,
            center: [0.0; MAX_DIM],
            width: [1.0; MAX_DIM],
            slope: [0.0; MAX_DIM],
            intercept: [0.0; MAX_DIM],
        };
        for d in 0..dim {
            let (c, s) = (center[d], width[d]);
            if !c.is_finite() {
                return precondition(format!("kernel center is not finite: {c}"));
            }
            if !(s > 0.0 && s.is_finite()) {
                return precondition(format!("kernel width must be positive and finite, got {s}"));
            }
            let m = 1.0 / (SQRT_2 * s);
            k.center[d] = c;
            k.width[d] = s;
            k.slope[d] = m;
            k.intercept[d] = -c * m;
        }
        Ok(k)
    }

    pub fn isotropic(center: &[f64], width: f64) -> Result<Self> {
        Self::new(center, &vec![width; center.len()])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn width(&self) -> &[f64] {
        &self.width[..self.dim]
    }

    pub fn slope(&self) -> &[f64] {
        &self.slope[..self.dim]
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept[..self.dim]
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return precondition(format!("point has dimension {}, kernel has {}", p.len(), self.dim));
        }
        Ok(())
    }

    /// `exp(-sum_d (m_d x_d + b_d)^2)`. The point dimension is not checked.
    #[inline]
    pub fn value(&self, p: &[f64]) -> f64 {
        let mut e = 0.0;
        for d in 0..self.dim {
            let s = self.slope[d] * p[d] + self.intercept[d];
            e += s * s;
        }
        (-e).exp()
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        self.check_point(p)?;
        Ok(self.value(p))
    }

    /// Center/width form `exp(-sum_d (x_d - c_d)^2 / (2 sigma_d^2))`.
    pub fn eval_centered(&self, p: &[f64]) -> Result<f64> {
        self.check_point(p)?;
        let e: f64 = (0..self.dim)
            .map(|d| (p[d] - self.center[d]).powi(2) / (2.0 * self.width[d] * self.width[d]))
            .sum();
        Ok((-e).exp())
    }

    /// Partial derivative of order 1 or 2 along `axis`.
    pub fn deriv(&self, p: &[f64], axis: usize, order: u8) -> Result<f64> {
        self.check_point(p)?;
        if axis >= self.dim {
            return precondition(format!("axis {axis} out of range for dimension {}", self.dim));
        }
        let jet = self.jet(p);
        match order {
            1 => Ok(jet.d1[axis]),
            2 => Ok(jet.d2[axis]),
            _ => precondition(format!("derivative order must be 1 or 2, got {order}")),
        }
    }

    /// Value and all first/second axis derivatives in one pass.
    #[inline]
    pub fn jet(&self, p: &[f64]) -> KernelJet {
        let mut s = [0.0; MAX_DIM];
        let mut e = 0.0;
        for d in 0..self.dim {
            s[d] = self.slope[d] * p[d] + self.intercept[d];
            e += s[d] * s[d];
        }
        let g = (-e).exp();
        let mut jet = KernelJet {
            value: g,
            ..Default::default()
        };
        for d in 0..self.dim {
            let m = self.slope[d];
            jet.d1[d] = -2.0 * m * s[d] * g;
            jet.d2[d] = (4.0 * m * m * s[d] * s[d] - 2.0 * m * m) * g;
        }
        jet
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbfBasis {
    kernels: Vec<RbfKernel>,
    dim: usize,
}

impl RbfBasis {
    pub fn new(kernels: Vec<RbfKernel>) -> Result<Self> {
        let Some(first) = kernels.first() else {
            return precondition("basis must contain at least one kernel");
        };
        let dim = first.dim();
        if kernels.iter().any(|k| k.dim() != dim) {
            return precondition("all kernels in a basis must share one dimension");
        }
        Ok(Self { kernels, dim })
    }

    pub fn kernels(&self) -> &[RbfKernel] {
        &self.kernels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}
