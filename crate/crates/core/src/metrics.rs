//! Closed-form transport distances between box Gaussians.
//!
//! The Gromov-Wasserstein distance between the 2D ground-truth Gaussian and
//! the 4D prediction Gaussian depends on covariances only:
//!
//! ```text
//! GW² = 4 (tr Σ_P − tr Σ_g)² + 8 ‖Σ_P⁽²⁾ − Σ_g‖²_F + 8 (‖Σ_P‖²_F − ‖Σ_P⁽²⁾‖²_F)
//! ```
//!
//! where `Σ_P⁽²⁾` is the top-left 2×2 block of `Σ_P`. It vanishes exactly at
//! `Σ_P = Σ_* = [[Σ_g, 0], [0, 0]]`. Because the means never enter, a loss
//! built only on GW gives no location signal; the L1 and IoU terms of
//! [`crate::risk::box_loss`] carry it.

use crate::error::{Error, Result};
use crate::gauss::{embed_gt_cov, Cov4, GaussGT2, GaussPred4};
use crate::geometry::BBox;
use nalgebra::Matrix4;

/// Squared 2-Wasserstein distance between the inscribed-ellipse Gaussians of two boxes.
///
/// For diagonal 2D Gaussians this reduces to the squared Euclidean distance
/// between `(cx, cy, w/2, h/2)` vectors.
pub fn wasserstein2_sq(a: &BBox, b: &BBox) -> f64 {
    let da = [a.cx(), a.cy(), a.w() / 2.0, a.h() / 2.0];
    let db = [b.cx(), b.cy(), b.w() / 2.0, b.h() / 2.0];
    da.iter().zip(db).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn gromov_wasserstein_sq(g: &GaussGT2, p: &GaussPred4) -> f64 {
    gw_sq_diag(g.var(), p.var())
}

/// GW² for a diagonal prediction covariance given by its diagonal.
///
/// Zero variances are allowed here so that `Σ_*` itself can be evaluated.
pub fn gw_sq_diag(gt_var: [f64; 2], pred_var: [f64; 4]) -> f64 {
    let tr_gap = (pred_var[0] + pred_var[1] + pred_var[2] + pred_var[3]) - (gt_var[0] + gt_var[1]);
    let d0 = pred_var[0] - gt_var[0];
    let d1 = pred_var[1] - gt_var[1];
    let block = d0 * d0 + d1 * d1;
    let outside = pred_var[2] * pred_var[2] + pred_var[3] * pred_var[3];
    4.0 * tr_gap * tr_gap + 8.0 * block + 8.0 * outside
}

/// GW² for an arbitrary (possibly correlated) prediction covariance.
pub fn gw_sq_cov(g: &GaussGT2, cov: &Cov4) -> f64 {
    let m = cov.matrix();
    let var = g.var();
    let tr_gap = m.trace() - (var[0] + var[1]);

    let mut block = 0.0;
    let mut outside = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let v = m[(i, j)];
            if i < 2 && j < 2 {
                let target = if i == j { var[i] } else { 0.0 };
                block += (v - target) * (v - target);
            } else {
                // ‖Σ_P‖²_F − ‖Σ_P⁽²⁾‖²_F, summed directly so it cannot go negative.
                outside += v * v;
            }
        }
    }
    4.0 * tr_gap * tr_gap + 8.0 * block + 8.0 * outside
}

/// Symmetric 4×4 perturbation direction `D` (not required to be PSD).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation4(Matrix4<f64>);

impl Perturbation4 {
    pub fn new(m: [[f64; 4]; 4]) -> Result<Self> {
        let m = Matrix4::from_fn(|i, j| m[i][j]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDirection("non-finite entry".into()));
        }
        if (0..4).any(|i| (0..4).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12)) {
            return Err(Error::InvalidDirection("matrix is not symmetric".into()));
        }
        Ok(Self(m))
    }

    pub fn from_diagonal(d: [f64; 4]) -> Result<Self> {
        Self::new(std::array::from_fn(|i| std::array::from_fn(|j| if i == j { d[i] } else { 0.0 })))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales to unit Frobenius norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.frobenius_norm();
        if !(n > 0.0) {
            return Err(Error::InvalidDirection("zero matrix".into()));
        }
        Ok(Self(self.0 / n))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }
}

impl From<Cov4> for Perturbation4 {
    fn from(c: Cov4) -> Self {
        Self(*c.matrix())
    }
}

/// Samples of `GW²(Σ_* + t·D) / t²` over decreasing scales `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceProbe {
    pub direction: Perturbation4,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl ConvergenceProbe {
    /// Relative spread between the ratios at the two smallest scales.
    pub fn tail_relative_gap(&self) -> Option<f64> {
        let n = self.ratios.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (self.ratios[n - 2], self.ratios[n - 1]);
        Some((a - b).abs() / a.abs().max(b.abs()))
    }
}

const UNIT_NORM_TOL: f64 = 1e-12;

/// Probes the quadratic decay of GW² around its zero `Σ_*`.
///
/// `direction` must have unit Frobenius norm; `scales` must be positive and
/// strictly decreasing. Every perturbed covariance must remain a valid covariance: a negative
/// diagonal entry is [`Error::InvalidPerturbation`], any other loss of
/// semidefiniteness is [`Error::InvalidCovariance`].
pub fn convergence_probe(
    g: &GaussGT2,
    direction: &Perturbation4,
    scales: &[f64],
) -> Result<ConvergenceProbe> {
    let norm = direction.frobenius_norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidDirection(format!(
            "Frobenius norm is {norm}, expected 1"
        )));
    }
    if scales.is_empty() {
        return Err(Error::InvalidScales("no scales given".into()));
    }
    if let Some(t) = scales.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidScales(format!("scale {t} is not positive")));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidScales("scales must be strictly decreasing".into()));
    }

    let base = *embed_gt_cov(g).matrix();
    let dir = direction.0;
    let mut ratios = Vec::with_capacity(scales.len());
    for &t in scales {
        let perturbed = base + dir * t;
        if let Some(index) = (0..4).find(|&i| perturbed[(i, i)] < 0.0) {
            return Err(Error::InvalidPerturbation { scale: t, index });
        }
        let cov = Cov4::from_matrix(perturbed)?;
        ratios.push(gw_sq_cov(g, &cov) / (t * t));
    }

    Ok(ConvergenceProbe {
        direction: *direction,
        scales: scales.to_vec(),
        ratios,
    })
}
