//! Synthetic scenes, calibration statistics, metric counterexamples, heatmap
//! binning and a single-threshold average-precision evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::{gt_to_gaussian, GaussPred4};
use crate::geometry::{ciou, giou, iou, BBox};
use crate::metrics::gw_sq_diag;
use crate::uncertainty::{combined_metric, localization_uncertainty_batch, TOP_N};

/// Number of object classes drawn by the generator.
pub const SYNTHETIC_CLASSES: u32 = 3;

/// Recorded sigma for detections generated without noise.
pub const SIGMA_FLOOR: f64 = 1e-9;

/// Smallest size a perturbed detection is clamped to.
pub const MIN_DET_SIZE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDet {
    pub class_id: u32,
    pub score: f64,
    pub bbox: BBox,
    pub sigma: [f64; 4],
    /// Index into the scene's `gts` of the box this detection was drawn from.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub gts: Vec<(u32, BBox)>,
    pub dets: Vec<SyntheticDet>,
}

impl SyntheticScene {
    pub fn source_box(&self, det: &SyntheticDet) -> BBox {
        self.gts[det.source].1
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn gen_scene(rng: &mut ChaCha8Rng, dets_per_scene: usize, noise: f64) -> Result<SyntheticScene> {
    let n_gt = rng.random_range(1..=5usize);
    let mut gts = Vec::with_capacity(n_gt);
    for _ in 0..n_gt {
        let w = uniform(rng, 0.05, 0.5);
        let h = uniform(rng, 0.05, 0.5);
        let cx = uniform(rng, w / 2.0, 1.0 - w / 2.0);
        let cy = uniform(rng, h / 2.0, 1.0 - h / 2.0);
        let class_id = rng.random_range(0..SYNTHETIC_CLASSES);
        gts.push((class_id, BBox::new(cx, cy, w, h)?));
    }

    let sigma_lo = noise.min(0.005);
    let mut dets = Vec::with_capacity(dets_per_scene);
    for _ in 0..dets_per_scene {
        let source = rng.random_range(0..n_gt);
        let (class_id, gt) = gts[source];
        let sigma: [f64; 4] = std::array::from_fn(|_| uniform(rng, sigma_lo, noise));
        let src = gt.to_array();
        let mut v: [f64; 4] = std::array::from_fn(|i| {
            let z: f64 = StandardNormal.sample(rng);
            src[i] + sigma[i] * z
        });
        v[0] = v[0].clamp(0.0, 1.0);
        v[1] = v[1].clamp(0.0, 1.0);
        v[2] = v[2].clamp(MIN_DET_SIZE, 1.0);
        v[3] = v[3].clamp(MIN_DET_SIZE, 1.0);
        let bbox = BBox::from_array(v)?;
        let z: f64 = StandardNormal.sample(rng);
        let score = (0.3 + 0.6 * iou(&gt, &bbox) + 0.1 * z).clamp(0.0, 1.0);
        dets.push(SyntheticDet {
            class_id,
            score,
            bbox,
            sigma: sigma.map(|s| s.max(SIGMA_FLOOR)),
            source,
        });
    }
    Ok(SyntheticScene { gts, dets })
}

/// Seeded scenes with 1 to 5 ground-truth boxes each (sizes in [0.05, 0.5],
/// fully inside the unit square).
///
/// Each detection copies a random ground truth of the scene, draws
/// `σ_i ~ U[min(0.005, noise), noise]` per component and adds `N(0, σ_i²)`
/// noise. Its score is `0.3 + 0.6·IoU + N(0, 0.01)` clamped to [0, 1]. Scene
/// `i` uses stream `i` of the seeded generator, so scenes are generated in
/// parallel with a result independent of the thread count.
pub fn gen_synthetic(seed: u64, n_scenes: usize, dets_per_scene: usize, noise: f64) -> Result<Vec<SyntheticScene>> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidArgument(format!("noise level {noise} must lie in [0, 1]")));
    }
    (0..n_scenes)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            gen_scene(&mut rng, dets_per_scene, noise)
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // 1-based average rank of the tie group
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

fn spearman_named(x: &[f64], y: &[f64], x_name: &'static str, y_name: &'static str) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", x.len()),
            found: format!("{} values", y.len()),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput);
    }
    if is_constant(x) {
        return Err(Error::DegenerateRanks(x_name));
    }
    if is_constant(y) {
        return Err(Error::DegenerateRanks(y_name));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}

/// Spearman rank correlation; tied values share their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    spearman_named(x, y, "x", "y")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPair {
    pub uncertainty: f64,
    pub combined_metric: f64,
    pub one_minus_iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationStats {
    /// Spearman(uncertainty, 1 − IoU).
    pub spearman_uncertainty_error: f64,
    /// Spearman(combined metric, uncertainty).
    pub spearman_combined_uncertainty: f64,
    /// One entry per detection, scenes and detections in input order.
    pub pairs: Vec<CalibrationPair>,
}

/// Minimum detection count for a calibration run.
pub const MIN_CALIBRATION_DETS: usize = 30;

/// Relates localization uncertainty to the actual localization error and to
/// the combined metric, one detection at a time.
pub fn calibration_experiment(scenes: &[SyntheticScene], k: usize) -> Result<CalibrationStats> {
    let total: usize = scenes.iter().map(|s| s.dets.len()).sum();
    if total < MIN_CALIBRATION_DETS {
        return Err(Error::TooFewDetections {
            needed: MIN_CALIBRATION_DETS,
            found: total,
        });
    }
    if k < TOP_N {
        return Err(Error::KTooSmall(k));
    }

    let mut preds = Vec::with_capacity(total);
    let mut overlaps = Vec::with_capacity(total);
    for scene in scenes {
        for det in &scene.dets {
            preds.push(GaussPred4::from_sigma(det.bbox.to_array(), det.sigma)?);
            overlaps.push((det.score, iou(&scene.source_box(det), &det.bbox)));
        }
    }
    let reports = localization_uncertainty_batch(&preds, k)?;

    let pairs: Vec<CalibrationPair> = reports
        .iter()
        .zip(&overlaps)
        .map(|(r, &(score, u))| CalibrationPair {
            uncertainty: r.uncertainty,
            combined_metric: combined_metric(score, u),
            one_minus_iou: 1.0 - u,
        })
        .collect();

    let unc: Vec<f64> = pairs.iter().map(|p| p.uncertainty).collect();
    let err: Vec<f64> = pairs.iter().map(|p| p.one_minus_iou).collect();
    let comb: Vec<f64> = pairs.iter().map(|p| p.combined_metric).collect();
    Ok(CalibrationStats {
        spearman_uncertainty_error: spearman_named(&unc, &err, "uncertainty", "one_minus_iou")?,
        spearman_combined_uncertainty: spearman_named(&comb, &unc, "combined_metric", "uncertainty")?,
        pairs,
    })
}

/// Variance placed on the size components of counterexample predictions.
pub const COUNTEREXAMPLE_EPS: f64 = 1e-3;

/// GW² between the ground-truth Gaussian of `gt` and the prediction
/// covariance `Diag(ŵ²/4, ĥ²/4, eps, eps)`.
pub fn counterexample_gw(gt: &BBox, pred: &BBox, eps: f64) -> f64 {
    let pv = gt_to_gaussian(pred).var();
    gw_sq_diag(gt_to_gaussian(gt).var(), [pv[0], pv[1], eps, eps])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexamplePair {
    pub gt: BBox,
    pub pred_a: BBox,
    pub pred_b: BBox,
    pub giou_gap: f64,
    pub ciou_gap: f64,
    pub gw_gap: f64,
    /// Trial on which the pair was found; 0 is the nested-square seed.
    pub trial: usize,
}

impl CounterexamplePair {
    pub fn evaluate(gt: BBox, pred_a: BBox, pred_b: BBox, trial: usize) -> Self {
        Self {
            gt,
            pred_a,
            pred_b,
            giou_gap: (giou(&gt, &pred_a) - giou(&gt, &pred_b)).abs(),
            ciou_gap: (ciou(&gt, &pred_a) - ciou(&gt, &pred_b)).abs(),
            gw_gap: (counterexample_gw(&gt, &pred_a, COUNTEREXAMPLE_EPS)
                - counterexample_gw(&gt, &pred_b, COUNTEREXAMPLE_EPS))
            .abs(),
            trial,
        }
    }

    pub fn satisfies(&self, tol: f64, min_gap: f64) -> bool {
        self.giou_gap < tol && self.ciou_gap < tol && self.gw_gap > min_gap
    }
}

/// A square centered in the image with one square twice as small and one
/// twice as large around it. Both have IoU 1/4 with it.
pub fn nested_squares() -> (BBox, BBox, BBox) {
    let b = |s: f64| BBox::new(0.5, 0.5, s, s).expect("valid square");
    (b(0.4), b(0.2), b(0.8))
}

/// Concentric boxes with the aspect ratio of the ground truth, scaled by `r`
/// and `1/r`: both overlap the ground truth with IoU `r²` and neither has a
/// center or aspect penalty.
fn concentric_trial<R: Rng + ?Sized>(rng: &mut R) -> Option<(BBox, BBox, BBox)> {
    let w = uniform(rng, 0.05, 0.9);
    let h = uniform(rng, 0.05, 0.9);
    let cx = uniform(rng, 0.0, 1.0);
    let cy = uniform(rng, 0.0, 1.0);
    let r = uniform(rng, 0.2, 0.95);
    let gt = BBox::new(cx, cy, w, h).ok()?;
    let a = BBox::new(cx, cy, w * r, h * r).ok()?;
    let b = BBox::new(cx, cy, w / r, h / r).ok()?;
    Some((gt, a, b))
}

/// Finds a ground truth and two predictions that GIoU and CIoU score alike
/// (gaps below `tol`) but whose GW² values differ by more than `min_gap`.
///
/// With `analytic_seed` the nested-square triple is tried first; then up to
/// `max_trials` random concentric triples are drawn.
pub fn counterexample_search(
    seed: u64,
    tol: f64,
    min_gap: f64,
    max_trials: usize,
    analytic_seed: bool,
) -> Result<CounterexamplePair> {
    if !(tol > 0.0) || !(min_gap > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol = {tol} and min_gap = {min_gap} must be positive"
        )));
    }
    if analytic_seed {
        let (gt, a, b) = nested_squares();
        let pair = CounterexamplePair::evaluate(gt, a, b, 0);
        if pair.satisfies(tol, min_gap) {
            return Ok(pair);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 1..=max_trials {
        if let Some((gt, a, b)) = concentric_trial(&mut rng) {
            let pair = CounterexamplePair::evaluate(gt, a, b, trial);
            if pair.satisfies(tol, min_gap) {
                return Ok(pair);
            }
        }
    }
    Err(Error::NoneFound {
        trials: max_trials + usize::from(analytic_seed),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `counts[i][j]` holds the pairs in x bin `i` and y bin `j`.
    pub counts: Vec<Vec<usize>>,
    /// Pairs outside the ranges (or not finite).
    pub dropped: usize,
}

impl HeatmapGrid {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

fn edges(range: (f64, f64), bins: usize) -> Vec<f64> {
    let (lo, hi) = range;
    let mut e: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    e[bins] = hi;
    e
}

/// Bins are `[e_i, e_{i+1})`, except the last, which includes its upper edge.
fn bin_of(v: f64, e: &[f64]) -> Option<usize> {
    let bins = e.len() - 1;
    if !(v >= e[0] && v <= e[bins]) {
        return None;
    }
    // first edge strictly greater than v, minus one
    let upper = e.partition_point(|&edge| edge <= v);
    Some(upper.saturating_sub(1).min(bins - 1))
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} range [{lo}, {hi}] is empty or not finite")))
    }
}

/// Two-dimensional histogram of `(x, y)` pairs over equal-width bins.
pub fn heatmap_bins(
    pairs: &[(f64, f64)],
    x_bins: usize,
    y_bins: usize,
    x_range: (f64, f64),
    y_range: (f64, f64),
) -> Result<HeatmapGrid> {
    if x_bins == 0 || y_bins == 0 {
        return Err(Error::InvalidArgument("bin counts must be at least 1".into()));
    }
    check_range("x", x_range)?;
    check_range("y", y_range)?;
    let x_edges = edges(x_range, x_bins);
    let y_edges = edges(y_range, y_bins);
    let mut counts = vec![vec![0usize; y_bins]; x_bins];
    let mut dropped = 0;
    for &(x, y) in pairs {
        match (bin_of(x, &x_edges), bin_of(y, &y_edges)) {
            (Some(i), Some(j)) => counts[i][j] += 1,
            _ => dropped += 1,
        }
    }
    Ok(HeatmapGrid {
        x_edges,
        y_edges,
        counts,
        dropped,
    })
}

/// Detections and ground truths of one image for one class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageEval {
    pub dets: Vec<(f64, BBox)>,
    pub gts: Vec<BBox>,
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("IoU threshold {t} must lie in (0, 1)")))
    }
}

/// Average precision over several images at one IoU threshold.
///
/// Within each image detections are matched greedily by descending score,
/// each to the best still-unmatched ground truth with IoU ≥ threshold.
/// Detections of all images are then ranked together (ties keep input order)
/// and the all-point interpolated area under the precision-recall curve is
/// returned. No ground truths at all gives 0.
pub fn average_precision_multi(images: &[ImageEval], iou_threshold: f64) -> Result<f64> {
    check_threshold(iou_threshold)?;
    let n_gt: usize = images.iter().map(|im| im.gts.len()).sum();
    if n_gt == 0 {
        return Ok(0.0);
    }

    let mut scored: Vec<(f64, bool)> = Vec::new();
    for im in images {
        let mut order: Vec<usize> = (0..im.dets.len()).collect();
        order.sort_by(|&a, &b| im.dets[b].0.total_cmp(&im.dets[a].0));
        let mut taken = vec![false; im.gts.len()];
        let mut hits = vec![false; im.dets.len()];
        for &d in &order {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in im.gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let o = iou(&im.dets[d].1, gt);
                if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                hits[d] = true;
            }
        }
        scored.extend(im.dets.iter().zip(hits).map(|(d, h)| (d.0, h)));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut recall = Vec::with_capacity(scored.len());
    let mut precision = Vec::with_capacity(scored.len());
    let mut tp = 0usize;
    for (i, &(_, hit)) in scored.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    Ok(ap)
}

/// Average precision for a single image.
pub fn average_precision(dets: &[(f64, BBox)], gts: &[BBox], iou_threshold: f64) -> Result<f64> {
    average_precision_multi(
        &[ImageEval {
            dets: dets.to_vec(),
            gts: gts.to_vec(),
        }],
        iou_threshold,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_synthetic(7, 20, 8, 0.1).unwrap();
        let b = gen_synthetic(7, 20, 8, 0.1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(8, 20, 8, 0.1).unwrap());
        assert!(gen_synthetic(7, 0, 8, 0.1).unwrap().is_empty());
    }

    #[test]
    fn generator_respects_invariants() {
        let scenes = gen_synthetic(1, 1000, 10, 0.2).unwrap();
        let mut n = 0;
        for s in &scenes {
            assert!((1..=5).contains(&s.gts.len()));
            for (_, g) in &s.gts {
                assert!(g.w() >= 0.05 && g.w() <= 0.5 && g.h() >= 0.05 && g.h() <= 0.5);
                let c = g.to_corners();
                assert!(c.x1 >= -1e-12 && c.y1 >= -1e-12 && c.x2 <= 1.0 + 1e-12 && c.y2 <= 1.0 + 1e-12);
            }
            for d in &s.dets {
                n += 1;
                assert!(BBox::from_array(d.bbox.to_array()).is_ok());
                assert!((0.0..=1.0).contains(&d.score));
                assert!(d.sigma.iter().all(|&x| x > 0.0 && x <= 1.0));
                assert!(d.source < s.gts.len());
                assert_eq!(d.class_id, s.gts[d.source].0);
            }
        }
        assert_eq!(n, 10_000);
    }

    #[test]
    fn zero_noise_is_degenerate() {
        let scenes = gen_synthetic(3, 10, 5, 0.0).unwrap();
        for s in &scenes {
            for d in &s.dets {
                assert_eq!(d.bbox, s.source_box(d));
                assert_eq!(d.sigma, [SIGMA_FLOOR; 4]);
            }
        }
        assert!(matches!(calibration_experiment(&scenes, 300), Err(Error::DegenerateRanks(_))));
    }

    #[test]
    fn calibration_bookkeeping_and_errors() {
        let scenes = gen_synthetic(5, 10, 5, 0.1).unwrap();
        let stats = calibration_experiment(&scenes, 50).unwrap();
        assert_eq!(stats.pairs.len(), 50);
        assert!(stats.pairs.iter().all(|p| (0.0..=1.0).contains(&p.one_minus_iou)));
        assert_eq!(
            calibration_experiment(&scenes[..2], 50),
            Err(Error::TooFewDetections { needed: 30, found: 10 })
        );
        assert_eq!(calibration_experiment(&scenes, 4), Err(Error::KTooSmall(4)));
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 40.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        // ranks x = (1, 2.5, 2.5, 4), y = (1, 2, 3, 4)
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::DegenerateRanks("x")));
        assert!(spearman(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nested_square_values() {
        let (gt, a, b) = nested_squares();
        assert!((giou(&gt, &a) - 0.25).abs() < 1e-9);
        assert!((giou(&gt, &b) - 0.25).abs() < 1e-9);
        assert!((ciou(&gt, &a) - 0.25).abs() < 1e-9);
        assert!((ciou(&gt, &b) - 0.25).abs() < 1e-9);
        assert!((counterexample_gw(&gt, &a, 0.0) - 0.0288).abs() < 1e-9);
        assert!((counterexample_gw(&gt, &b, 0.0) - 0.4608).abs() < 1e-9);
    }

    #[test]
    fn search_returns_verified_pair() {
        let p = counterexample_search(0, 1e-6, 0.01, 100, true).unwrap();
        assert_eq!(p.trial, 0);
        assert!(p.satisfies(1e-6, 0.01));
        let p = counterexample_search(0, 1e-6, 0.01, 1000, false).unwrap();
        assert!(p.trial >= 1);
        let again = CounterexamplePair::evaluate(p.gt, p.pred_a, p.pred_b, p.trial);
        assert_eq!(p, again);
        assert!(again.satisfies(1e-6, 0.01));
    }

    #[test]
    fn search_exhausts() {
        assert_eq!(
            counterexample_search(0, 1e-6, 0.01, 0, false),
            Err(Error::NoneFound { trials: 0 })
        );
        assert!(matches!(
            counterexample_search(0, 1e-6, 100.0, 10, true),
            Err(Error::NoneFound { trials: 11 })
        ));
        assert!(counterexample_search(0, 0.0, 0.01, 10, true).is_err());
    }

    #[test]
    fn heatmap_examples() {
        let g = heatmap_bins(&[(0.3, 0.4)], 1, 1, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(g.counts, vec![vec![1]]);

        let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
        let g = heatmap_bins(&corners, 2, 2, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(g.counts, vec![vec![1, 1], vec![1, 1]]);

        let mid = [(0.5, 0.5), (-0.1, 0.2), (0.2, 1.5), (f64::NAN, 0.1)];
        let g = heatmap_bins(&mid, 2, 2, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(g.counts, vec![vec![0, 0], vec![0, 1]]);
        assert_eq!(g.dropped, 3);
        assert_eq!(g.total() + g.dropped, mid.len());

        assert!(heatmap_bins(&mid, 0, 2, (0.0, 1.0), (0.0, 1.0)).is_err());
        assert!(heatmap_bins(&mid, 2, 2, (1.0, 1.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn ap_examples() {
        let gt = bx(0.5, 0.5, 0.4, 0.4);
        let hit = bx(0.48, 0.5, 0.36, 0.4);
        let miss = bx(0.5, 0.5, 0.4, 0.12);
        assert!((iou(&gt, &hit) - 0.9).abs() < 1e-12);
        assert!((iou(&gt, &miss) - 0.3).abs() < 1e-12);
        assert_eq!(average_precision(&[(0.9, hit)], &[gt], 0.5).unwrap(), 1.0);
        assert_eq!(average_precision(&[(0.9, miss)], &[gt], 0.5).unwrap(), 0.0);
        assert_eq!(average_precision(&[(0.9, hit), (0.8, miss)], &[gt], 0.5).unwrap(), 1.0);
        assert_eq!(average_precision(&[(0.9, miss), (0.8, hit)], &[gt], 0.5).unwrap(), 0.5);
        assert_eq!(average_precision(&[(0.9, hit)], &[], 0.5).unwrap(), 0.0);
        assert_eq!(average_precision(&[], &[gt], 0.5).unwrap(), 0.0);
        assert!(average_precision(&[], &[gt], 1.0).is_err());
    }

    #[test]
    fn ap_matches_each_gt_once() {
        let gt = bx(0.5, 0.5, 0.4, 0.4);
        let dets = [(0.9, gt), (0.8, gt)];
        // second duplicate is a false positive: PR points (1, 1), (1, 0.5)
        assert_eq!(average_precision(&dets, &[gt], 0.5).unwrap(), 1.0);
        let images = [
            ImageEval { dets: vec![(0.9, gt)], gts: vec![gt] },
            ImageEval { dets: vec![(0.95, bx(0.1, 0.1, 0.05, 0.05))], gts: vec![gt] },
        ];
        // ranked: miss (0.95), hit (0.9); recall 0.5 at precision 0.5
        assert_eq!(average_precision_multi(&images, 0.5).unwrap(), 0.25);
    }
}
