//! Box fitting against the regression loss, finite-difference gradients, and
//! a Monte-Carlo estimate of the Bayes risk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::gauss::GaussPred4;
use crate::geometry::BBox;
use crate::risk::{box_loss_terms, BoxLossTerms, LossConfig};

/// Monte-Carlo estimate of `E[Σ_i (x_i − c_i)²]` with `c_i ~ U(0, 1)` and
/// `x_i ~ N(c_i, σ_i²)`. Deterministic for a given seed.
pub fn mc_bayes_risk_oracle(sigma: [f64; 4], n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    GaussPred4::from_sigma([0.0; 4], sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..n_samples {
        for &s in &sigma {
            let c: f64 = rng.random();
            let x = Normal::new(c, s)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng);
            acc += (x - c) * (x - c);
        }
    }
    Ok(acc / n_samples as f64)
}

/// Central-difference gradient `(f(p + h·e_i) − f(p − h·e_i)) / 2h`.
pub fn numeric_gradient<F>(objective: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be positive")));
    }
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let up = objective(&probe);
        probe[i] = params[i] - h;
        let down = objective(&probe);
        probe[i] = params[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFiniteObjective { coordinate: i });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Smallest variance reachable by the reparameterization.
pub const VAR_FLOOR: f64 = 1e-6;

// logistic(±30) keeps sizes strictly inside (0, 1) in f64.
const LOGIT_LIMIT: f64 = 30.0;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-13, 1.0 - 1e-13);
    (p / (1.0 - p)).ln()
}

/// Unconstrained parameters of a fitted box.
///
/// Box components are `logistic(mean)`; variances are
/// `1e-6 + (1 − 1e-6)·logistic(rho)`, so every decoded state is a valid box
/// and prediction Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub mean: [f64; 4],
    pub rho: [f64; 4],
}

impl FitParams {
    /// Standard-normal draws for all eight coordinates.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut draw = || -> f64 { StandardNormal.sample(rng) };
        Self {
            mean: std::array::from_fn(|_| draw()),
            rho: std::array::from_fn(|_| draw()),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::random(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Parameters that decode (up to rounding) to `b` with variances `var`.
    pub fn from_box(b: &BBox, var: [f64; 4]) -> Self {
        Self {
            mean: b.to_array().map(logit),
            rho: var.map(|v| logit((v - VAR_FLOOR) / (1.0 - VAR_FLOOR))),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.rho).copied().collect()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            mean: std::array::from_fn(|i| v[i]),
            rho: std::array::from_fn(|i| v[4 + i]),
        }
    }

    pub fn variances(&self) -> [f64; 4] {
        self.rho
            .map(|r| (VAR_FLOOR + (1.0 - VAR_FLOOR) * logistic(r)).min(1.0))
    }

    pub fn decode(&self) -> Result<(BBox, GaussPred4)> {
        let b = BBox::from_array(self.mean.map(logistic))?;
        let g = GaussPred4::from_variances(b.to_array(), self.variances())?;
        Ok((b, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStep {
    pub loss: f64,
    pub terms: BoxLossTerms,
    pub var: [f64; 4],
}

/// One record per step, taken before that step's update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub steps: Vec<FitStep>,
}

impl FitTrace {
    /// Trailing moving average of the loss with the given window.
    pub fn smoothed_loss(&self, window: usize) -> Vec<f64> {
        let losses: Vec<f64> = self.steps.iter().map(|s| s.loss).collect();
        if window == 0 || losses.len() < window {
            return Vec::new();
        }
        losses
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// `p ← p − lr·∇f`.
    GradientDescent,
    /// Sign-based steps with per-coordinate step sizes (iRprop−): a step
    /// grows by 1.2 while the gradient sign persists and halves when it flips.
    /// `lr` is the initial step size.
    Rprop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    /// Finite-difference step for the gradient.
    pub h: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            steps: 5000,
            lr: 0.05,
            optimizer: Optimizer::Rprop,
            h: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub trace: FitTrace,
    pub params: FitParams,
    pub pred_box: BBox,
    pub pred: GaussPred4,
    pub terms: BoxLossTerms,
}

fn evaluate(gt: &BBox, p: &FitParams) -> Result<BoxLossTerms> {
    let (b, g) = p.decode()?;
    box_loss_terms(gt, &b, &g)
}

const RPROP_GROW: f64 = 1.2;
const RPROP_SHRINK: f64 = 0.5;
const RPROP_MAX_STEP: f64 = 1.0;
const RPROP_MIN_STEP: f64 = 0.0;

/// Minimizes the box regression loss for a single ground-truth box by
/// full-batch first-order descent on finite-difference gradients.
pub fn fit_box(gt: &BBox, init: FitParams, cfg: &LossConfig, opts: &FitOptions) -> Result<FitOutcome> {
    if opts.steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {} must be positive", opts.lr)));
    }

    let objective = |v: &[f64]| match evaluate(gt, &FitParams::from_slice(v)) {
        Ok(t) => t.weighted(cfg),
        Err(_) => f64::NAN,
    };

    let mut params = init.to_vec();
    let mut step_size = vec![opts.lr; params.len()];
    let mut prev_grad = vec![0.0; params.len()];
    let mut trace = FitTrace::default();

    for step in 0..opts.steps {
        let current = FitParams::from_slice(&params);
        let terms = evaluate(gt, &current)?;
        let loss = terms.weighted(cfg);
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        trace.steps.push(FitStep {
            loss,
            terms,
            var: current.variances(),
        });

        let grad = numeric_gradient(objective, &params, opts.h)
            .map_err(|_| Error::Diverged { step })?;
        match opts.optimizer {
            Optimizer::GradientDescent => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= opts.lr * g;
                }
            }
            Optimizer::Rprop => {
                for i in 0..params.len() {
                    let agreement = grad[i] * prev_grad[i];
                    let mut g = grad[i];
                    if agreement > 0.0 {
                        step_size[i] = (step_size[i] * RPROP_GROW).min(RPROP_MAX_STEP);
                    } else if agreement < 0.0 {
                        step_size[i] = (step_size[i] * RPROP_SHRINK).max(RPROP_MIN_STEP);
                        g = 0.0;
                    }
                    if g != 0.0 {
                        params[i] -= g.signum() * step_size[i];
                    }
                    prev_grad[i] = g;
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step });
        }
    }

    let params = FitParams::from_slice(&params);
    let (pred_box, pred) = params.decode()?;
    let terms = box_loss_terms(gt, &pred_box, &pred)?;
    if !terms.weighted(cfg).is_finite() {
        return Err(Error::Diverged { step: opts.steps });
    }
    Ok(FitOutcome {
        trace,
        params,
        pred_box,
        pred,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::gt_to_gaussian;
    use crate::metrics::gw_sq_diag;

    #[test]
    fn oracle_is_deterministic_and_degenerates() {
        let a = mc_bayes_risk_oracle([0.1, 0.2, 0.3, 0.4], 1000, 7).unwrap();
        let b = mc_bayes_risk_oracle([0.1, 0.2, 0.3, 0.4], 1000, 7).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let tiny = mc_bayes_risk_oracle([1e-9; 4], 1000, 1).unwrap();
        assert!(tiny < 1e-16);
        assert!(mc_bayes_risk_oracle([0.1; 4], 0, 1).is_err());
        assert!(mc_bayes_risk_oracle([0.0, 0.1, 0.1, 0.1], 10, 1).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = numeric_gradient(|p| p[0] * p[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-7);
        let g = numeric_gradient(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        assert_eq!(
            numeric_gradient(|p| p[0].ln(), &[0.0], 1e-5),
            Err(Error::NonFiniteObjective { coordinate: 0 })
        );
        assert!(numeric_gradient(|p| p[0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn gradient_vanishes_at_gw_minimum() {
        let gt = BBox::new(0.5, 0.5, 0.4, 0.2).unwrap();
        let g = gt_to_gaussian(&gt);
        let cfg = LossConfig::new(0.0, 0.0, 1.0).unwrap();
        let var = [g.var()[0], g.var()[1], VAR_FLOOR, VAR_FLOOR];
        let objective = |v: &[f64]| {
            let p = GaussPred4::from_variances(gt.to_array(), [v[0], v[1], v[2], v[3]]).unwrap();
            crate::risk::box_loss(&gt, &gt, &p, &cfg).unwrap()
        };
        let grad = numeric_gradient(objective, &var, 1e-7).unwrap();
        let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-4, "{norm}");
    }

    #[test]
    fn params_round_trip() {
        let b = BBox::new(0.3, 0.7, 0.2, 0.45).unwrap();
        let p = FitParams::from_box(&b, [0.01, 0.2, 0.5, 1.0]);
        let (db, dg) = p.decode().unwrap();
        for (x, y) in db.to_array().iter().zip(b.to_array()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in dg.var().iter().zip([0.01, 0.2, 0.5, 1.0]) {
            assert!((x - y).abs() < 1e-9);
        }
        let extreme = FitParams {
            mean: [1e4, -1e4, -1e4, 1e4],
            rho: [-1e4, 1e4, -1e4, 1e4],
        };
        let (b, g) = extreme.decode().unwrap();
        assert!(b.w() > 0.0 && b.h() <= 1.0);
        assert!(g.var().iter().all(|v| *v >= VAR_FLOOR && *v <= 1.0));
    }

    #[test]
    fn fit_from_optimum_stays_put() {
        let gt = BBox::new(0.5, 0.5, 0.4, 0.2).unwrap();
        let g = gt_to_gaussian(&gt);
        let init = FitParams::from_box(&gt, [g.var()[0], g.var()[1], 1.1e-6, 1.1e-6]);
        let out = fit_box(&gt, init, &LossConfig::default(), &FitOptions {
            steps: 200,
            ..FitOptions::default()
        })
        .unwrap();
        assert!(out.trace.steps[0].loss < 1e-9, "{}", out.trace.steps[0].loss);
        for (x, y) in out.pred_box.to_array().iter().zip(gt.to_array()) {
            assert!((x - y).abs() < 1e-6);
        }
        assert!(out.terms.gw < 1e-9);
    }

    #[test]
    fn fit_reference_run() {
        let gt = BBox::new(0.5, 0.5, 0.4, 0.2).unwrap();
        let out = fit_box(&gt, FitParams::seeded(3), &LossConfig::default(), &FitOptions::default()).unwrap();
        assert!(out.terms.gw < 1e-6, "gw {}", out.terms.gw);
        assert!(out.terms.l1 < 1e-3, "l1 {}", out.terms.l1);
        assert_eq!(out.trace.steps.len(), 5000);
        assert!(out.trace.steps.iter().all(|s| s.loss.is_finite()));
        let v = out.pred.var();
        assert!(gw_sq_diag(gt_to_gaussian(&gt).var(), v) < 1e-6);
    }

    #[test]
    fn large_size_variances_decay() {
        let gt = BBox::new(0.5, 0.5, 0.4, 0.2).unwrap();
        let init = FitParams {
            mean: [0.0; 4],
            rho: [0.0, 0.0, 4.0, 4.0],
        };
        let out = fit_box(&gt, init, &LossConfig::default(), &FitOptions::default()).unwrap();
        let first = out.trace.steps[0].var;
        let last = out.pred.var();
        assert!(first[2] > 0.9 && first[3] > 0.9);
        assert!(last[2] < 1e-5 && last[3] < 1e-5, "{last:?}");
    }

    #[test]
    fn fit_rejects_bad_options() {
        let gt = BBox::new(0.5, 0.5, 0.4, 0.2).unwrap();
        let cfg = LossConfig::default();
        let zero = FitOptions {
            steps: 0,
            ..FitOptions::default()
        };
        assert!(fit_box(&gt, FitParams::seeded(0), &cfg, &zero).is_err());
        let neg = FitOptions {
            lr: -1.0,
            ..FitOptions::default()
        };
        assert!(fit_box(&gt, FitParams::seeded(0), &cfg, &neg).is_err());
    }

    #[test]
    fn plain_descent_is_available() {
        let gt = BBox::new(0.5, 0.5, 0.4, 0.2).unwrap();
        let opts = FitOptions {
            steps: 500,
            optimizer: Optimizer::GradientDescent,
            ..FitOptions::default()
        };
        let out = fit_box(&gt, FitParams::seeded(3), &LossConfig::default(), &opts).unwrap();
        let first = out.trace.steps[0].loss;
        let last = out.trace.steps.last().unwrap().loss;
        assert!(last < first);
    }
}
