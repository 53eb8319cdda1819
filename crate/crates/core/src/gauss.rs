//! Gaussian views of boxes.
//!
//! A ground-truth box becomes the 2D Gaussian whose 1-sigma ellipse is the
//! box's inscribed ellipse: mean `(cx, cy)`, covariance `Diag(w²/4, h²/4)`.
//! A prediction is a 4D Gaussian over `(cx, cy, w, h)` with independent
//! components, each variance in `(0, 1]`.

use nalgebra::{Matrix4, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// 2D ground-truth Gaussian. Covariance is diagonal, stored as its two variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussGT2 {
    mean: [f64; 2],
    var: [f64; 2],
}

impl GaussGT2 {
    pub fn new(mean: [f64; 2], var: [f64; 2]) -> Result<Self> {
        for (i, &v) in var.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidCovariance(format!(
                    "ground-truth variance {i} = {v} must be positive and finite"
                )));
            }
        }
        Ok(Self { mean, var })
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    /// Diagonal of the covariance.
    pub fn var(&self) -> [f64; 2] {
        self.var
    }

    pub fn cov(&self) -> [[f64; 2]; 2] {
        [[self.var[0], 0.0], [0.0, self.var[1]]]
    }

    /// Recovers `(w, h)` from the covariance diagonal.
    pub fn size(&self) -> [f64; 2] {
        [2.0 * self.var[0].sqrt(), 2.0 * self.var[1].sqrt()]
    }

    /// Mahalanobis quadratic form `(x - μ)ᵀ Σ⁻¹ (x - μ)`; equals 1 on the inscribed ellipse.
    pub fn mahalanobis_sq(&self, x: [f64; 2]) -> f64 {
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        dx * dx / self.var[0] + dy * dy / self.var[1]
    }

    pub fn translated(&self, offset: [f64; 2]) -> Self {
        Self {
            mean: [self.mean[0] + offset[0], self.mean[1] + offset[1]],
            var: self.var,
        }
    }
}

/// 4D prediction Gaussian over `(cx, cy, w, h)` with diagonal covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPred4 {
    mean: [f64; 4],
    var: [f64; 4],
}

impl GaussPred4 {
    /// Builds the Gaussian from per-component variances `σ²`.
    pub fn from_variances(mean: [f64; 4], var: [f64; 4]) -> Result<Self> {
        for (index, &value) in var.iter().enumerate() {
            if !(value > 0.0) {
                return Err(Error::NonPositiveSigma { index, value });
            }
            if value > 1.0 {
                return Err(Error::SigmaOutOfRange { index, value });
            }
        }
        Ok(Self { mean, var })
    }

    /// Builds the Gaussian from standard deviations `σ`.
    pub fn from_sigma(mean: [f64; 4], sigma: [f64; 4]) -> Result<Self> {
        for (index, &value) in sigma.iter().enumerate() {
            if !(value > 0.0) {
                return Err(Error::NonPositiveSigma { index, value });
            }
        }
        Self::from_variances(mean, sigma.map(|s| s * s))
    }

    pub fn mean(&self) -> [f64; 4] {
        self.mean
    }

    /// Diagonal of the covariance.
    pub fn var(&self) -> [f64; 4] {
        self.var
    }

    pub fn sigma(&self) -> [f64; 4] {
        self.var.map(f64::sqrt)
    }

    pub fn trace(&self) -> f64 {
        self.var[0] + self.var[1] + self.var[2] + self.var[3]
    }

    pub fn cov(&self) -> Cov4 {
        Cov4(Matrix4::from_diagonal(&self.var.into()))
    }

    pub fn translated(&self, offset: [f64; 4]) -> Self {
        let mut mean = self.mean;
        for (m, o) in mean.iter_mut().zip(offset) {
            *m += o;
        }
        Self { mean, var: self.var }
    }
}

pub fn gt_to_gaussian(b: &BBox) -> GaussGT2 {
    GaussGT2 {
        mean: [b.cx(), b.cy()],
        var: [b.w() * b.w() / 4.0, b.h() * b.h() / 4.0],
    }
}

pub fn pred_to_gaussian(b: &BBox, sigma: [f64; 4]) -> Result<GaussPred4> {
    GaussPred4::from_sigma(b.to_array(), sigma)
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;

/// Dense symmetric positive-semidefinite 4×4 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov4(Matrix4<f64>);

impl Cov4 {
    pub fn new(m: [[f64; 4]; 4]) -> Result<Self> {
        let m = Matrix4::from_fn(|i, j| m[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        Self::from_matrix(m)
    }

    pub fn from_diagonal(d: [f64; 4]) -> Result<Self> {
        Self::from_matrix(Matrix4::from_diagonal(&d.into()))
    }

    pub(crate) fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        for i in 0..4 {
            for j in (i + 1)..4 {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidCovariance(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        let min_eig = SymmetricEigen::new(m).eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidCovariance(format!(
                "smallest eigenvalue {min_eig} is negative"
            )));
        }
        Ok(Self(m))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn to_array(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.0[(i, j)]))
    }

    pub fn diagonal(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.0[(i, i)])
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }
}

/// `Σ_* = [[Σ_g, 0], [0, 0]]`: the ground-truth covariance lifted into 4D.
pub fn embed_gt_cov(g: &GaussGT2) -> Cov4 {
    let mut m = Matrix4::zeros();
    m[(0, 0)] = g.var[0];
    m[(1, 1)] = g.var[1];
    Cov4(m)
}
