//! Bayes risk of a box prediction and the losses and refinements built on it.
//!
//! Under an L2 loss the Bayes risk of a diagonal Gaussian prediction is the
//! trace of its covariance, so it lies in `(0, 4]`. Normalizing by 4 gives
//! the per-query risk vector `T` with entries in `(0, 1]`, which reweights
//! decoder embeddings, classification targets, and matching quality.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::gauss::{gt_to_gaussian, GaussPred4};
use crate::geometry::{giou, BBox};
use crate::metrics::gromov_wasserstein_sq;

/// Bayes risk under L2 loss: `σ²_cx + σ²_cy + σ²_w + σ²_h`.
pub fn bayes_risk(p: &GaussPred4) -> f64 {
    p.trace()
}

/// Per-query normalized Bayes risks `t_i = Risk*_i / 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskVector(Vec<f64>);

impl RiskVector {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if t.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(v) = t.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "normalized risk {v} outside (0, 1]"
            )));
        }
        Ok(Self(t))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn risk_vector(preds: &[GaussPred4]) -> Result<RiskVector> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(RiskVector(preds.iter().map(|p| bayes_risk(p) / 4.0).collect()))
}

/// Decoder output embeddings, one column per query (`d × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch(Array2<f64>);

impl EmbeddingBatch {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("embedding has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn queries(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// One affine layer `activation(W·x + b)` applied column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl AffineParams {
    pub fn identity(d: usize) -> Self {
        Self {
            weight: Array2::eye(d),
            bias: Array1::zeros(d),
            activation: Activation::Identity,
        }
    }
}

/// `Z_re = MLP(Z ⊙ (1 − T))`: column `i` is scaled by `1 − t_i`, then passed
/// through the affine layer.
pub fn refine_embeddings(
    z: &EmbeddingBatch,
    t: &RiskVector,
    params: &AffineParams,
) -> Result<EmbeddingBatch> {
    if t.len() != z.queries() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} risks", z.queries()),
            found: format!("{} risks", t.len()),
        });
    }
    let (d_out, d_in) = params.weight.dim();
    if d_in != z.dim() || params.bias.len() != d_out {
        return Err(Error::ShapeMismatch {
            expected: format!("weight {}x{}, bias {}", d_out, z.dim(), d_out),
            found: format!(
                "weight {}x{}, bias {}",
                d_out,
                d_in,
                params.bias.len()
            ),
        });
    }

    let mut scaled = z.0.clone();
    for (mut col, &ti) in scaled.axis_iter_mut(Axis(1)).zip(t.values()) {
        col *= 1.0 - ti;
    }
    let mut out = params.weight.dot(&scaled);
    for mut col in out.axis_iter_mut(Axis(1)) {
        col += &params.bias;
    }
    if params.activation == Activation::Relu {
        out.mapv_inplace(|v| v.max(0.0));
    }
    Ok(EmbeddingBatch(out))
}

const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy with the probability clipped to `[1e-7, 1 − 1e-7]`.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// IoU-aware target `r = ((GIoU + 1)/2 − s)²`.
///
/// This is the target exactly as the method defines it; note it is small when
/// the score already matches the rescaled GIoU, unlike targets that grow with
/// overlap.
pub fn iou_aware_target(score: f64, giou_value: f64) -> f64 {
    let d = (giou_value + 1.0) / 2.0 - score;
    d * d
}

fn negative_term(neg: &[f64]) -> f64 {
    neg.iter().map(|&s| s * s * bce(s, 0.0)).sum()
}

/// IoU-aware classification loss over positives `(s, giou)` and negative scores.
pub fn iou_aware_cls_loss(pos: &[(f64, f64)], neg: &[f64]) -> f64 {
    let positive: f64 = pos
        .iter()
        .map(|&(s, g)| bce(s, iou_aware_target(s, g)))
        .sum();
    positive + negative_term(neg)
}

/// Bayes-risk weighting `w = exp(−Risk*/4)`, in `[e⁻¹, 1)` for risk in `(0, 4]`.
pub fn risk_weight(risk: f64) -> f64 {
    (-risk / 4.0).exp()
}

/// Bayes-risk aware classification loss over positives `(s, giou, Risk*)`.
///
/// Positive targets are `w·r`; negatives are unchanged from
/// [`iou_aware_cls_loss`].
pub fn br_cls_loss(pos: &[(f64, f64, f64)], neg: &[f64]) -> f64 {
    let positive: f64 = pos
        .iter()
        .map(|&(s, g, risk)| bce(s, risk_weight(risk) * iou_aware_target(s, g)))
        .sum();
    positive + negative_term(neg)
}

/// Bayes-risk refined matching quality `s^(1 + Risk*/4) · u^(4 + Risk*)`.
pub fn br_match_quality(score: f64, iou: f64, risk: f64) -> f64 {
    score.powf(1.0 + risk / 4.0) * iou.powf(4.0 + risk)
}

/// Weights of the box regression loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    lambda_iou: f64,
    lambda_l1: f64,
    lambda_gw: f64,
}

impl LossConfig {
    pub fn new(lambda_iou: f64, lambda_l1: f64, lambda_gw: f64) -> Result<Self> {
        let all = [lambda_iou, lambda_l1, lambda_gw];
        if all.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidLossConfig(format!(
                "weights must be finite and nonnegative, got {all:?}"
            )));
        }
        if all.iter().all(|l| *l == 0.0) {
            return Err(Error::InvalidLossConfig("all weights are zero".into()));
        }
        Ok(Self {
            lambda_iou,
            lambda_l1,
            lambda_gw,
        })
    }

    pub fn lambda_iou(&self) -> f64 {
        self.lambda_iou
    }

    pub fn lambda_l1(&self) -> f64 {
        self.lambda_l1
    }

    pub fn lambda_gw(&self) -> f64 {
        self.lambda_gw
    }
}

impl Default for LossConfig {
    /// `λ_iou = 2`, `λ_L1 = 5`, `λ_gw = 1`.
    fn default() -> Self {
        Self {
            lambda_iou: 2.0,
            lambda_l1: 5.0,
            lambda_gw: 1.0,
        }
    }
}

/// The three unweighted terms of [`box_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxLossTerms {
    /// `1 − GIoU(gt, pred)`.
    pub iou: f64,
    /// `‖gt − pred‖₁` over `(cx, cy, w, h)`.
    pub l1: f64,
    /// `GW²` between the ground-truth and prediction Gaussians.
    pub gw: f64,
}

impl BoxLossTerms {
    pub fn weighted(&self, cfg: &LossConfig) -> f64 {
        cfg.lambda_iou * self.iou + cfg.lambda_l1 * self.l1 + cfg.lambda_gw * self.gw
    }
}

const MEAN_TOL: f64 = 1e-12;

pub fn box_loss_terms(gt: &BBox, pred: &BBox, pred_gauss: &GaussPred4) -> Result<BoxLossTerms> {
    let comps = pred.to_array();
    for (index, (&mean, &component)) in pred_gauss.mean().iter().zip(&comps).enumerate() {
        if (mean - component).abs() > MEAN_TOL {
            return Err(Error::MeanMismatch {
                index,
                mean,
                component,
            });
        }
    }
    let l1 = gt
        .to_array()
        .iter()
        .zip(comps)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(BoxLossTerms {
        iou: 1.0 - giou(gt, pred),
        l1,
        gw: gromov_wasserstein_sq(&gt_to_gaussian(gt), pred_gauss),
    })
}

/// Box regression loss `λ_iou·(1 − GIoU) + λ_L1·‖R − R̂‖₁ + λ_gw·GW²`.
///
/// GW² ignores both means, so location is learned only through the IoU and
/// L1 terms; a configuration with `λ_iou = λ_L1 = 0` fits covariances only.
pub fn box_loss(gt: &BBox, pred: &BBox, pred_gauss: &GaussPred4, cfg: &LossConfig) -> Result<f64> {
    Ok(box_loss_terms(gt, pred, pred_gauss)?.weighted(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    fn pred(sigma: [f64; 4]) -> GaussPred4 {
        GaussPred4::from_sigma([0.5, 0.5, 0.4, 0.2], sigma).unwrap()
    }

    #[test]
    fn bayes_risk_examples() {
        close(bayes_risk(&pred([0.1, 0.2, 0.3, 0.4])), 0.30, 1e-15);
        assert_eq!(bayes_risk(&pred([1.0; 4])), 4.0);
        assert!(bayes_risk(&pred([1e-9; 4])) < 1e-17);
    }

    #[test]
    fn risk_vector_examples() {
        let t = risk_vector(&[pred([0.1, 0.2, 0.3, 0.4])]).unwrap();
        close(t.values()[0], 0.075, 1e-15);
        assert_eq!(risk_vector(&[pred([1.0; 4])]).unwrap().values(), &[1.0]);
        assert_eq!(risk_vector(&[]), Err(Error::EmptyInput));
        assert!(RiskVector::new(vec![0.0]).is_err());
        assert!(RiskVector::new(vec![]).is_err());
    }

    #[test]
    fn refine_examples() {
        let z = EmbeddingBatch::new(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let t = RiskVector::new(vec![0.5, 0.25]).unwrap();
        let out = refine_embeddings(&z, &t, &AffineParams::identity(2)).unwrap();
        assert_eq!(out.values(), &array![[0.5, 1.5], [1.5, 3.0]]);

        // Smallest admissible risks leave Z essentially unchanged.
        let t = RiskVector::new(vec![f64::MIN_POSITIVE; 2]).unwrap();
        let out = refine_embeddings(&z, &t, &AffineParams::identity(2)).unwrap();
        assert_eq!(out.values(), z.values());

        let t = RiskVector::new(vec![0.5]).unwrap();
        assert!(matches!(
            refine_embeddings(&z, &t, &AffineParams::identity(2)),
            Err(Error::ShapeMismatch { .. })
        ));
        let t = RiskVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            refine_embeddings(&z, &t, &AffineParams::identity(3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn refine_applies_affine_and_relu() {
        let z = EmbeddingBatch::new(array![[1.0, -2.0], [3.0, 4.0]]).unwrap();
        let t = RiskVector::new(vec![0.5, 1.0]).unwrap();
        let params = AffineParams {
            weight: array![[1.0, 1.0], [1.0, -1.0], [0.0, 2.0]],
            bias: array![0.0, -1.0, 0.5],
            activation: Activation::Relu,
        };
        let out = refine_embeddings(&z, &t, &params).unwrap();
        // column 0 scaled to (0.5, 1.5); column 1 scaled to zero
        assert_eq!(out.values(), &array![[2.0, 0.0], [0.0, 0.0], [3.5, 0.5]]);
        assert!(EmbeddingBatch::new(array![[f64::NAN]]).is_err());
    }

    #[test]
    fn bce_examples() {
        close(bce(0.5, 0.5), std::f64::consts::LN_2, 1e-12);
        close(bce(1.0 - 1e-7, 1.0), 1e-7, 1e-12);
        close(bce(0.7, 0.04), 1.170081, 1e-6);
        assert!(bce(0.0, 1.0).is_finite());
        assert!(bce(1.0, 0.0).is_finite());
    }

    #[test]
    fn iou_aware_examples() {
        close(iou_aware_target(0.7, 0.8), 0.04, 1e-15);
        close(iou_aware_cls_loss(&[(0.7, 0.8)], &[]), 1.170081, 1e-6);
        close(iou_aware_cls_loss(&[], &[0.5]), 0.25 * std::f64::consts::LN_2, 1e-12);
        close(iou_aware_cls_loss(&[], &[0.5]), 0.173287, 1e-6);
        assert_eq!(iou_aware_cls_loss(&[], &[]), 0.0);
    }

    #[test]
    fn br_cls_examples() {
        close(br_cls_loss(&[(0.7, 0.8, 1e-12)], &[]), 1.170081, 1e-6);
        let w = risk_weight(0.4);
        close(w, 0.904837, 1e-6);
        close(w * 0.04, 0.036193, 1e-6);
        close(br_cls_loss(&[(0.7, 0.8, 0.4)], &[]), 1.173306, 1e-6);
        close(br_cls_loss(&[], &[0.5]), iou_aware_cls_loss(&[], &[0.5]), 0.0);
        close(br_cls_loss(&[], &[0.5]), 0.173287, 1e-6);
    }

    #[test]
    fn match_quality_examples() {
        for risk in [1e-6, 0.4, 4.0] {
            assert_eq!(br_match_quality(1.0, 1.0, risk), 1.0);
            assert_eq!(br_match_quality(0.8, 0.0, risk), 0.0);
        }
        let q = br_match_quality(0.8, 0.9, 0.4);
        close(q, (1.1 * 0.8f64.ln() + 4.4 * 0.9f64.ln()).exp(), 1e-15);
        close(q, 0.492114347763644, 1e-12);
    }

    #[test]
    fn loss_config_validation() {
        assert!(LossConfig::new(0.0, 0.0, 0.0).is_err());
        assert!(LossConfig::new(-1.0, 1.0, 1.0).is_err());
        assert!(LossConfig::new(f64::NAN, 1.0, 1.0).is_err());
        let d = LossConfig::default();
        assert_eq!((d.lambda_iou(), d.lambda_l1(), d.lambda_gw()), (2.0, 5.0, 1.0));
    }

    #[test]
    fn box_loss_examples() {
        let gt = BBox::new(0.5, 0.5, 0.4, 0.2).unwrap();
        let p = GaussPred4::from_variances(gt.to_array(), [0.04, 0.01, 0.02, 0.03]).unwrap();
        let cfg = LossConfig::new(0.0, 0.0, 1.0).unwrap();
        close(box_loss(&gt, &gt, &p, &cfg).unwrap(), 0.0204, 1e-12);

        let shifted = BBox::new(0.6, 0.5, 0.4, 0.2).unwrap();
        let p = GaussPred4::from_variances(shifted.to_array(), [0.04, 0.01, 0.02, 0.03]).unwrap();
        let cfg = LossConfig::new(0.0, 1.0, 0.0).unwrap();
        close(box_loss(&gt, &shifted, &p, &cfg).unwrap(), 0.1, 1e-12);

        assert!(matches!(
            box_loss(&gt, &shifted, &pred([0.1; 4]), &cfg),
            Err(Error::MeanMismatch { index: 0, .. })
        ));
    }
}
