//! One-to-one assignment of predictions to ground truths.
//!
//! [`hungarian`] is the O(n³) shortest-augmenting-path formulation with dual
//! potentials. Among several optimal assignments it returns the
//! lexicographically smallest pair list; the canonicalization walks the
//! subgraph of zero-reduced-cost edges, where every optimal assignment lives.

use crate::error::{Error, Result};
use crate::gauss::GaussPred4;
use crate::geometry::{iou, BBox};
use crate::risk::{bayes_risk, br_match_quality};

/// Row-major `rows × cols` matrix of finite costs; rows are predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("cost entry {v} is not finite")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch {
                expected: format!("{cols} columns"),
                found: format!("{} columns", r.len()),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Sum of the entries at `pairs`, accumulated in the given order.
    pub fn assignment_cost(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(prediction, ground truth)` pairs sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Cost matrix with entry `(i, j) = −br_match_quality(s_i, IoU(pred_i, gt_j), Risk*_i)`.
pub fn build_cost_matrix(dets: &[(f64, BBox, GaussPred4)], gts: &[BBox]) -> Result<CostMatrix> {
    if dets.is_empty() || gts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut data = Vec::with_capacity(dets.len() * gts.len());
    for (score, pred, gauss) in dets {
        let risk = bayes_risk(gauss);
        for gt in gts {
            data.push(-br_match_quality(*score, iou(pred, gt), risk));
        }
    }
    CostMatrix::new(dets.len(), gts.len(), data)
}

/// Square working copy; rectangular inputs are padded with a constant larger
/// than the sum of all absolute entries.
struct Square {
    n: usize,
    a: Vec<f64>,
}

impl Square {
    fn from_cost(c: &CostMatrix) -> Self {
        let n = c.rows.max(c.cols);
        let pad = c.data.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        let mut a = vec![pad; n * n];
        for r in 0..c.rows {
            a[r * n..r * n + c.cols].copy_from_slice(&c.data[r * c.cols..(r + 1) * c.cols]);
        }
        Self { n, a }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.n + c]
    }
}

struct Solution {
    row_to_col: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn solve(sq: &Square) -> Solution {
    let n = sq.n;
    // 1-based potentials and column owners; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = sq.at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    Solution {
        row_to_col,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

/// Rewrites an optimal assignment into the lexicographically smallest one
/// that only uses tight (zero reduced cost) edges.
fn canonicalize(sq: &Square, sol: &Solution) -> Vec<usize> {
    let n = sq.n;
    let scale = sq.a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-9 * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|r| {
            (0..n)
                .filter(|&c| sq.at(r, c) - sol.u[r] - sol.v[c] <= eps)
                .collect()
        })
        .collect();

    let mut row_to_col = sol.row_to_col.clone();
    let mut col_to_row = vec![0; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut fixed_col = vec![false; n];

    for r in 0..n {
        for &target in &tight[r] {
            if fixed_col[target] {
                continue;
            }
            if row_to_col[r] == target {
                break;
            }
            if reroute(r, target, &tight, &mut row_to_col, &mut col_to_row, &fixed_col) {
                break;
            }
        }
        fixed_col[row_to_col[r]] = true;
    }
    row_to_col
}

/// Tries to give column `target` to row `r` by an alternating path that hands
/// `r`'s current column to the row displaced along the way. Only rows after
/// `r` may move.
fn reroute(
    r: usize,
    target: usize,
    tight: &[Vec<usize>],
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
    fixed_col: &[bool],
) -> bool {
    let n = row_to_col.len();
    let freed = row_to_col[r];
    let start = col_to_row[target];

    // BFS over displaced rows; claimed_by[c] is the row that reached column c.
    let mut seen_col = vec![false; n];
    seen_col[target] = true;
    let mut claimed_by = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([start]);
    let mut end = None;
    'search: while let Some(row) = queue.pop_front() {
        for &c in &tight[row] {
            if seen_col[c] || fixed_col[c] {
                continue;
            }
            seen_col[c] = true;
            claimed_by[c] = row;
            if c == freed {
                end = Some(c);
                break 'search;
            }
            let next = col_to_row[c];
            if next != r {
                queue.push_back(next);
            }
        }
    }
    let Some(mut col) = end else {
        return false;
    };

    // Walk back: each claiming row takes `col` and releases its previous column.
    loop {
        let row = claimed_by[col];
        let released = row_to_col[row];
        row_to_col[row] = col;
        col_to_row[col] = row;
        if row == start {
            debug_assert_eq!(released, target);
            break;
        }
        col = released;
    }
    row_to_col[r] = target;
    col_to_row[target] = r;
    true
}

fn real_pairs(c: &CostMatrix, row_to_col: &[usize]) -> Vec<(usize, usize)> {
    row_to_col
        .iter()
        .enumerate()
        .filter(|&(r, &col)| r < c.rows && col < c.cols)
        .map(|(r, &col)| (r, col))
        .collect()
}

/// Minimum-cost one-to-one assignment of size `min(rows, cols)`.
pub fn hungarian(c: &CostMatrix) -> MatchResult {
    if c.rows == 0 || c.cols == 0 {
        return MatchResult {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    let sq = Square::from_cost(c);
    let sol = solve(&sq);
    let raw = real_pairs(c, &sol.row_to_col);
    let raw_cost = c.assignment_cost(&raw);

    let canon = real_pairs(c, &canonicalize(&sq, &sol));
    let canon_cost = c.assignment_cost(&canon);
    // Keep the canonical form only if it is still optimal up to summation rounding.
    let magnitude: f64 = raw
        .iter()
        .chain(&canon)
        .map(|&(r, col)| c.get(r, col).abs())
        .sum();
    if canon_cost <= raw_cost + 4.0 * f64::EPSILON * magnitude {
        MatchResult {
            pairs: canon,
            total_cost: canon_cost,
        }
    } else {
        MatchResult {
            pairs: raw,
            total_cost: raw_cost,
        }
    }
}

/// Exhaustive search over all injective assignments; intended for matrices
/// with at most a handful of rows and columns.
///
/// Returns the minimum total (accumulated in prediction order) and, among
/// assignments attaining it exactly, the lexicographically smallest pair list.
pub fn brute_force_assignment(c: &CostMatrix) -> MatchResult {
    let k = c.rows.min(c.cols);
    let mut best: Option<MatchResult> = None;
    let transpose = c.rows > c.cols;
    let (short, long) = if transpose {
        (c.cols, c.rows)
    } else {
        (c.rows, c.cols)
    };

    let mut chosen = Vec::with_capacity(k);
    let mut used = vec![false; long];
    enumerate(short, long, &mut chosen, &mut used, &mut |picks| {
        let mut pairs: Vec<(usize, usize)> = picks
            .iter()
            .enumerate()
            .map(|(s, &l)| if transpose { (l, s) } else { (s, l) })
            .collect();
        pairs.sort_unstable();
        let total = c.assignment_cost(&pairs);
        let better = match &best {
            None => true,
            Some(b) => total < b.total_cost || (total == b.total_cost && pairs < b.pairs),
        };
        if better {
            best = Some(MatchResult {
                pairs,
                total_cost: total,
            });
        }
    });
    best.unwrap_or(MatchResult {
        pairs: Vec::new(),
        total_cost: 0.0,
    })
}

fn enumerate(
    short: usize,
    long: usize,
    chosen: &mut Vec<usize>,
    used: &mut [bool],
    visit: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == short {
        visit(chosen);
        return;
    }
    for l in 0..long {
        if !used[l] {
            used[l] = true;
            chosen.push(l);
            enumerate(short, long, chosen, used, visit);
            chosen.pop();
            used[l] = false;
        }
    }
}
