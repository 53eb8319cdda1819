//! Localization uncertainty from per-component 95% confidence intervals.
//!
//! Each of the four components `(cx, cy, w, h)` gets the interval
//! `μ ± 1.96σ`. Every interval is split into `k` equal parts and the midpoint
//! of part `i` is taken (`lo + (2i − 1)/(2k)·(hi − lo)`); candidate box `i`
//! uses the `i`-th midpoint in all four components at once. The uncertainty
//! is one minus the mean of the five largest IoUs between the prediction and
//! its candidates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::GaussPred4;
use crate::geometry::IouRef;

/// z-value of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Number of top IoUs averaged.
pub const TOP_N: usize = 5;

/// Division count used when none is given.
pub const DEFAULT_K: usize = 300;

/// Candidate widths and heights are floored here so that IoU stays defined.
pub const MIN_CANDIDATE_SIZE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Midpoint of the `i`-th of `k` equal parts, `i` in `1..=k`.
    pub fn division_midpoint(&self, i: usize, k: usize) -> f64 {
        let frac = (2 * i - 1) as f64 / (2 * k) as f64;
        self.lo + frac * (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyReport {
    pub uncertainty: f64,
    pub avg_top5_iou: f64,
    pub k: usize,
    pub combined_metric: Option<f64>,
}

impl UncertaintyReport {
    pub fn with_combined_metric(mut self, score: f64, iou: f64) -> Self {
        self.combined_metric = Some(combined_metric(score, iou));
        self
    }
}

/// `[μ_i − 1.96σ_i, μ_i + 1.96σ_i]` per component; intervals are not clamped.
pub fn confidence_intervals(p: &GaussPred4) -> [Interval; 4] {
    let mean = p.mean();
    let sigma = p.sigma();
    std::array::from_fn(|d| Interval {
        lo: mean[d] - Z_95 * sigma[d],
        hi: mean[d] + Z_95 * sigma[d],
    })
}

fn candidate(intervals: &[Interval; 4], i: usize, k: usize) -> [f64; 4] {
    [
        intervals[0].division_midpoint(i, k),
        intervals[1].division_midpoint(i, k),
        intervals[2].division_midpoint(i, k).max(MIN_CANDIDATE_SIZE),
        intervals[3].division_midpoint(i, k).max(MIN_CANDIDATE_SIZE),
    ]
}

/// The `k` candidate boxes as `(cx, cy, w, h)` arrays, in index order.
pub fn candidate_boxes(p: &GaussPred4, k: usize) -> Vec<[f64; 4]> {
    let intervals = confidence_intervals(p);
    (1..=k).map(|i| candidate(&intervals, i, k)).collect()
}

/// Keeps the `TOP_N` largest values; on equal values the earlier index wins.
#[derive(Default)]
struct TopN {
    values: [f64; TOP_N],
    len: usize,
}

impl TopN {
    fn push(&mut self, v: f64) {
        let mut pos = self.len;
        while pos > 0 && v > self.values[pos - 1] {
            pos -= 1;
        }
        if pos >= TOP_N {
            return;
        }
        let end = self.len.min(TOP_N - 1);
        self.values.copy_within(pos..end, pos + 1);
        self.values[pos] = v;
        self.len = (self.len + 1).min(TOP_N);
    }

    fn mean(&self) -> f64 {
        self.values[..self.len].iter().sum::<f64>() / self.len as f64
    }
}

/// Localization uncertainty of a single prediction with `k ≥ 5` divisions.
pub fn localization_uncertainty(p: &GaussPred4, k: usize) -> Result<UncertaintyReport> {
    if k < TOP_N {
        return Err(Error::KTooSmall(k));
    }
    let reference = IouRef::new(p.mean());
    let intervals = confidence_intervals(p);
    let mut top = TopN::default();
    for i in 1..=k {
        top.push(reference.iou(candidate(&intervals, i, k)));
    }
    let avg = top.mean();
    Ok(UncertaintyReport {
        uncertainty: 1.0 - avg,
        avg_top5_iou: avg,
        k,
        combined_metric: None,
    })
}

/// Per-prediction reports in input order; work is spread over the current
/// rayon pool and the result does not depend on its size.
pub fn localization_uncertainty_batch(preds: &[GaussPred4], k: usize) -> Result<Vec<UncertaintyReport>> {
    if k < TOP_N {
        return Err(Error::KTooSmall(k));
    }
    preds
        .par_iter()
        .map(|p| localization_uncertainty(p, k))
        .collect()
}

/// Joint score/overlap quality `s · √u`.
pub fn combined_metric(score: f64, iou: f64) -> f64 {
    score * iou.sqrt()
}
