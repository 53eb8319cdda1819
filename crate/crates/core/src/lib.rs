//! Gaussian bounding-box modeling for object detection.
//!
//! Boxes are treated as Gaussians: ground truths through their inscribed
//! ellipse, predictions as 4D diagonal Gaussians over `(cx, cy, w, h)`.
//! On top of that the crate provides closed-form Wasserstein and
//! Gromov-Wasserstein distances, Bayes-risk weighted losses and matching
//! costs, a Hungarian solver, confidence-interval localization uncertainty,
//! and a seeded synthetic harness.

pub mod error;
pub mod gauss;
pub mod geometry;
pub mod harness;
pub mod matching;
pub mod metrics;
pub mod regress;
pub mod risk;
pub mod uncertainty;

pub use error::{Error, Result};
pub use gauss::{embed_gt_cov, gt_to_gaussian, pred_to_gaussian, Cov4, GaussGT2, GaussPred4};
pub use geometry::{ciou, diou, giou, iou, BBox, CornerBox};
pub use matching::{brute_force_assignment, build_cost_matrix, hungarian, CostMatrix, MatchResult};
pub use metrics::{gromov_wasserstein_sq, wasserstein2_sq};
pub use risk::{bayes_risk, box_loss, LossConfig};
pub use uncertainty::{combined_metric, localization_uncertainty, DEFAULT_K};
