use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use gaussbox::harness::{
    average_precision_multi, calibration_experiment, counterexample_search, gen_synthetic, heatmap_bins,
    CounterexamplePair, ImageEval,
};
use gaussbox::matching::{build_cost_matrix, hungarian};
use gaussbox::metrics::{gromov_wasserstein_sq, wasserstein2_sq};
use gaussbox::regress::{fit_box, FitOptions, FitParams, Optimizer};
use gaussbox::uncertainty::localization_uncertainty_batch;
use gaussbox::{ciou, diou, giou, gt_to_gaussian, iou, BBox, LossConfig};
use rayon::prelude::*;

use crate::records::{parse_detections, parse_ground_truths, DetectionRecord, GroundTruthRecord};
use crate::{CliError, Command, GlobalOpts, OptimizerArg};

type Result<T> = std::result::Result<T, CliError>;

/// A CSV file held in memory until every output of a command is ready.
struct Table {
    path: PathBuf,
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(path: impl Into<PathBuf>, header: &'static [&'static str]) -> Self {
        Self {
            path: path.into(),
            header,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self) -> Result<()> {
        let csv_err = |source| CliError::Csv {
            path: self.path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&self.path).map_err(csv_err)?;
        w.write_record(self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Shortest representation that parses back to the same value.
fn num(x: f64) -> String {
    format!("{x}")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    parse_detections(&read(path)?).map_err(|source| CliError::Record {
        path: path.to_path_buf(),
        source,
    })
}

fn load_ground_truths(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    parse_ground_truths(&read(path)?).map_err(|source| CliError::Record {
        path: path.to_path_buf(),
        source,
    })
}

/// Record indices grouped by image, images in order of first appearance.
struct Grouped {
    order: Vec<String>,
    members: HashMap<String, Vec<usize>>,
}

impl Grouped {
    fn new<'a>(ids: impl Iterator<Item = &'a str>) -> Self {
        let mut order = Vec::new();
        let mut members: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, id) in ids.enumerate() {
            members
                .entry(id.to_string())
                .or_insert_with(|| {
                    order.push(id.to_string());
                    Vec::new()
                })
                .push(i);
        }
        Self { order, members }
    }

    fn get(&self, id: &str) -> &[usize] {
        self.members.get(id).map_or(&[], Vec::as_slice)
    }
}

fn loss_config(g: &GlobalOpts) -> Result<LossConfig> {
    Ok(LossConfig::new(g.lambda_iou, g.lambda_l1, g.lambda_gw)?)
}

pub(crate) fn execute(global: &GlobalOpts, command: &Command) -> Result<()> {
    // Validate the loss weights for every command so a bad flag never goes unnoticed.
    let cfg = loss_config(global)?;
    let tables = match command {
        Command::Metric { gt, det, out } => metric(gt, det, out)?,
        Command::Match {
            gt,
            det,
            out,
            per_class,
        } => matching(gt, det, out, *per_class)?,
        Command::Uncertainty { det, out } => uncertainty(det, out, global.k)?,
        Command::FitDemo {
            out,
            gt_box,
            steps,
            lr,
            optimizer,
        } => fit_demo(out, gt_box, *steps, *lr, *optimizer, global.seed, &cfg)?,
        Command::Calibrate {
            out_dir,
            scenes,
            dets_per_scene,
            noise,
            bins,
        } => calibrate(out_dir, *scenes, *dets_per_scene, *noise, *bins, global)?,
        Command::Counterexample {
            out,
            tol,
            min_gap,
            max_trials,
            no_analytic_seed,
        } => counterexample(out, *tol, *min_gap, *max_trials, !no_analytic_seed, global.seed)?,
        Command::Eval {
            gt,
            det,
            out,
            iou_threshold,
        } => eval(gt, det, out, *iou_threshold)?,
    };
    for t in &tables {
        t.write()?;
    }
    Ok(())
}

fn metric(gt_path: &Path, det_path: &Path, out: &Path) -> Result<Vec<Table>> {
    let gts = load_ground_truths(gt_path)?;
    let dets = load_detections(det_path)?;
    let g_groups = Grouped::new(gts.iter().map(|g| g.image_id.as_str()));
    let d_groups = Grouped::new(dets.iter().map(|d| d.image_id.as_str()));
    for id in d_groups.order.iter().chain(&g_groups.order) {
        let (nd, ng) = (d_groups.get(id).len(), g_groups.get(id).len());
        if nd != ng {
            return Err(CliError::Invalid(format!(
                "image {id:?} has {nd} detections but {ng} ground truths; metric pairs them one to one"
            )));
        }
    }

    let mut table = Table::new(
        out,
        &["image_id", "index", "iou", "giou", "diou", "ciou", "w2_sq", "gw_sq"],
    );
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for d in &dets {
        let slot = seen.entry(d.image_id.as_str()).or_insert(0);
        let index = *slot;
        *slot += 1;
        let g = gts[g_groups.get(&d.image_id)[index]].to_bbox();
        let b = d.to_bbox();
        table.push(vec![
            d.image_id.clone(),
            index.to_string(),
            num(iou(&g, &b)),
            num(giou(&g, &b)),
            num(diou(&g, &b)),
            num(ciou(&g, &b)),
            num(wasserstein2_sq(&g, &b)),
            num(gromov_wasserstein_sq(&gt_to_gaussian(&g), &d.to_gaussian())),
        ]);
    }
    Ok(vec![table])
}

fn match_group(
    dets: &[DetectionRecord],
    gts: &[GroundTruthRecord],
    det_idx: &[usize],
    gt_idx: &[usize],
) -> Result<Vec<(usize, usize, f64)>> {
    if det_idx.is_empty() || gt_idx.is_empty() {
        return Ok(Vec::new());
    }
    let d: Vec<_> = det_idx
        .iter()
        .map(|&i| (dets[i].score, dets[i].to_bbox(), dets[i].to_gaussian()))
        .collect();
    let g: Vec<BBox> = gt_idx.iter().map(|&i| gts[i].to_bbox()).collect();
    let cost = build_cost_matrix(&d, &g)?;
    Ok(hungarian(&cost)
        .pairs
        .into_iter()
        .map(|(r, c)| (r, c, cost.get(r, c)))
        .collect())
}

fn matching(gt_path: &Path, det_path: &Path, out: &Path, per_class: bool) -> Result<Vec<Table>> {
    let gts = load_ground_truths(gt_path)?;
    let dets = load_detections(det_path)?;
    let g_groups = Grouped::new(gts.iter().map(|g| g.image_id.as_str()));
    let d_groups = Grouped::new(dets.iter().map(|d| d.image_id.as_str()));

    // (det index within image, gt index within image, cost)
    let per_image: Vec<Vec<(usize, usize, f64)>> = d_groups
        .order
        .par_iter()
        .map(|id| {
            let di = d_groups.get(id);
            let gi = g_groups.get(id);
            let local = |all: &[usize], keep: &[usize]| -> Vec<usize> {
                keep.iter().map(|k| all.iter().position(|a| a == k).expect("member")).collect()
            };
            let mut pairs = Vec::new();
            if per_class {
                let classes: BTreeSet<u32> = di.iter().map(|&i| dets[i].class_id).collect();
                for class in classes {
                    let dc: Vec<usize> = di.iter().copied().filter(|&i| dets[i].class_id == class).collect();
                    let gc: Vec<usize> = gi.iter().copied().filter(|&i| gts[i].class_id == class).collect();
                    let (dl, gl) = (local(di, &dc), local(gi, &gc));
                    for (r, c, cost) in match_group(&dets, &gts, &dc, &gc)? {
                        pairs.push((dl[r], gl[c], cost));
                    }
                }
            } else {
                pairs = match_group(&dets, &gts, di, gi)?;
            }
            pairs.sort_by_key(|p| p.0);
            Ok(pairs)
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(out, &["image_id", "det_index", "gt_index", "cost"]);
    for (id, pairs) in d_groups.order.iter().zip(per_image) {
        for (d, g, cost) in pairs {
            table.push(vec![id.clone(), d.to_string(), g.to_string(), num(cost)]);
        }
    }
    Ok(vec![table])
}

fn uncertainty(det_path: &Path, out: &Path, k: usize) -> Result<Vec<Table>> {
    let dets = load_detections(det_path)?;
    let preds: Vec<_> = dets.iter().map(DetectionRecord::to_gaussian).collect();
    let reports = localization_uncertainty_batch(&preds, k)?;
    let mut table = Table::new(out, &["image_id", "index", "uncertainty", "avg_top5_iou"]);
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (d, r) in dets.iter().zip(reports) {
        let slot = seen.entry(d.image_id.as_str()).or_insert(0);
        table.push(vec![
            d.image_id.clone(),
            slot.to_string(),
            num(r.uncertainty),
            num(r.avg_top5_iou),
        ]);
        *slot += 1;
    }
    Ok(vec![table])
}

fn fit_demo(
    out: &Path,
    gt_box: &[f64; 4],
    steps: usize,
    lr: f64,
    optimizer: OptimizerArg,
    seed: u64,
    cfg: &LossConfig,
) -> Result<Vec<Table>> {
    let gt = BBox::from_array(*gt_box)?;
    let opts = FitOptions {
        steps,
        lr,
        optimizer: match optimizer {
            OptimizerArg::Rprop => Optimizer::Rprop,
            OptimizerArg::Gd => Optimizer::GradientDescent,
        },
        ..FitOptions::default()
    };
    let fit = fit_box(&gt, FitParams::seeded(seed), cfg, &opts)?;
    let mut table = Table::new(
        out,
        &["step", "loss", "gw", "l1", "iou", "var_cx", "var_cy", "var_w", "var_h"],
    );
    for (i, s) in fit.trace.steps.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            num(s.loss),
            num(s.terms.gw),
            num(s.terms.l1),
            num(s.terms.iou),
        ];
        row.extend(s.var.iter().map(|&v| num(v)));
        table.push(row);
    }
    println!(
        "final box {:?}, variances {:?}, gw_sq {}, l1 {}",
        fit.pred_box.to_array(),
        fit.pred.var(),
        fit.terms.gw,
        fit.terms.l1
    );
    Ok(vec![table])
}

fn calibrate(
    out_dir: &Path,
    scenes: usize,
    dets_per_scene: usize,
    noise: f64,
    bins: usize,
    global: &GlobalOpts,
) -> Result<Vec<Table>> {
    let data = gen_synthetic(global.seed, scenes, dets_per_scene, noise)?;
    let stats = calibration_experiment(&data, global.k)?;
    let points: Vec<(f64, f64)> = stats
        .pairs
        .iter()
        .map(|p| (p.combined_metric, p.uncertainty))
        .collect();
    let grid = heatmap_bins(&points, bins, bins, (0.0, 1.0), (0.0, 1.0))?;
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut pairs = Table::new(
        out_dir.join("pairs.csv"),
        &["uncertainty", "combined_metric", "one_minus_iou"],
    );
    for p in &stats.pairs {
        pairs.push(vec![num(p.uncertainty), num(p.combined_metric), num(p.one_minus_iou)]);
    }

    let mut heat = Table::new(out_dir.join("heatmap.csv"), &["x_lo", "x_hi", "y_lo", "y_hi", "count"]);
    for (i, row) in grid.counts.iter().enumerate() {
        for (j, count) in row.iter().enumerate() {
            heat.push(vec![
                num(grid.x_edges[i]),
                num(grid.x_edges[i + 1]),
                num(grid.y_edges[j]),
                num(grid.y_edges[j + 1]),
                count.to_string(),
            ]);
        }
    }

    let mut summary = Table::new(out_dir.join("stats.csv"), &["name", "value"]);
    for (name, value) in [
        ("detections", stats.pairs.len().to_string()),
        ("k", global.k.to_string()),
        ("seed", global.seed.to_string()),
        ("spearman_uncertainty_vs_error", num(stats.spearman_uncertainty_error)),
        ("spearman_combined_vs_uncertainty", num(stats.spearman_combined_uncertainty)),
        ("heatmap_dropped", grid.dropped.to_string()),
    ] {
        summary.push(vec![name.to_string(), value]);
    }
    println!(
        "{} detections: spearman(uncertainty, 1-iou) = {:.4}, spearman(combined, uncertainty) = {:.4}",
        stats.pairs.len(),
        stats.spearman_uncertainty_error,
        stats.spearman_combined_uncertainty
    );
    Ok(vec![pairs, heat, summary])
}

fn counterexample(
    out: &Path,
    tol: f64,
    min_gap: f64,
    max_trials: usize,
    analytic_seed: bool,
    seed: u64,
) -> Result<Vec<Table>> {
    let CounterexamplePair {
        gt,
        pred_a,
        pred_b,
        giou_gap,
        ciou_gap,
        gw_gap,
        trial,
    } = counterexample_search(seed, tol, min_gap, max_trials, analytic_seed)?;
    let mut table = Table::new(
        out,
        &[
            "trial", "gt_cx", "gt_cy", "gt_w", "gt_h", "a_cx", "a_cy", "a_w", "a_h", "b_cx", "b_cy", "b_w",
            "b_h", "giou_gap", "ciou_gap", "gw_gap",
        ],
    );
    let mut row = vec![trial.to_string()];
    for b in [gt, pred_a, pred_b] {
        row.extend(b.to_array().iter().map(|&v| num(v)));
    }
    row.extend([num(giou_gap), num(ciou_gap), num(gw_gap)]);
    table.push(row);
    Ok(vec![table])
}

fn eval(gt_path: &Path, det_path: &Path, out: &Path, threshold: f64) -> Result<Vec<Table>> {
    let gts = load_ground_truths(gt_path)?;
    let dets = load_detections(det_path)?;
    let images = Grouped::new(
        dets.iter()
            .map(|d| d.image_id.as_str())
            .chain(gts.iter().map(|g| g.image_id.as_str())),
    );
    let classes: BTreeSet<u32> = dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id))
        .collect();

    let mut table = Table::new(out, &["class_id", "detections", "ground_truths", "ap"]);
    let mut aps = Vec::new();
    for class in classes {
        let mut per_image: HashMap<&str, ImageEval> = HashMap::new();
        for d in dets.iter().filter(|d| d.class_id == class) {
            per_image
                .entry(&d.image_id)
                .or_default()
                .dets
                .push((d.score, d.to_bbox()));
        }
        for g in gts.iter().filter(|g| g.class_id == class) {
            per_image.entry(&g.image_id).or_default().gts.push(g.to_bbox());
        }
        let evals: Vec<ImageEval> = images
            .order
            .iter()
            .filter_map(|id| per_image.remove(id.as_str()))
            .collect();
        let n_det: usize = evals.iter().map(|e| e.dets.len()).sum();
        let n_gt: usize = evals.iter().map(|e| e.gts.len()).sum();
        let ap = average_precision_multi(&evals, threshold)?;
        if n_gt > 0 {
            aps.push(ap);
        }
        table.push(vec![class.to_string(), n_det.to_string(), n_gt.to_string(), num(ap)]);
    }
    let mean = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    table.push(vec!["mean".into(), dets.len().to_string(), gts.len().to_string(), num(mean)]);
    Ok(vec![table])
}
