//! Gradient-boosted regression trees (exact greedy CART, no subsampling)
//! with squared or pinball loss, and a contiguous-fold cross-validated grid
//! search over depth and learning rate.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

fn check_design(x: &[Vec<f64>], y_len: usize) -> Result<usize> {
    if x.len() != y_len {
        return Err(Error::Alignment(format!("{} rows for {y_len} targets", x.len())));
    }
    if x.is_empty() {
        return Err(Error::Parameter("no training samples".into()));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::Shape("rows have different widths".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("features must be finite".into()));
    }
    Ok(p)
}

/// Row indices sorted by each feature (ties by row index).
fn presort(x: &[Vec<f64>], p: usize) -> Vec<Vec<usize>> {
    (0..p)
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

enum Arena {
    Leaf(Vec<usize>),
    Split(usize, f64, usize, usize),
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grow one least-squares tree on `targets` level by level. Each level scans
/// every presorted feature once. `leaf_value` maps a leaf's rows to its
/// output.
fn grow_tree(
    x: &[Vec<f64>],
    sorted: &[Vec<usize>],
    targets: &[f64],
    max_depth: usize,
    leaf_value: &dyn Fn(&[usize]) -> f64,
) -> TreeNode {
    const NONE: usize = usize::MAX;
    let n = targets.len();
    let mut arena: Vec<Arena> = vec![Arena::Leaf((0..n).collect())];
    let mut frontier: Vec<usize> = vec![0];
    // position of each row's node within the frontier
    let mut slot = vec![0usize; n];

    for _ in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        let m = frontier.len();
        let mut total = vec![0.0; m];
        let mut count = vec![0usize; m];
        for i in 0..n {
            if slot[i] != NONE {
                total[slot[i]] += targets[i];
                count[slot[i]] += 1;
            }
        }
        let mut best: Vec<Option<Candidate>> = vec![None; m];
        let mut left_sum = vec![0.0; m];
        let mut left_n = vec![0usize; m];
        let mut last_x = vec![0.0; m];
        for (f, order) in sorted.iter().enumerate() {
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            left_n.iter_mut().for_each(|v| *v = 0);
            for &i in order {
                let k = slot[i];
                if k == NONE {
                    continue;
                }
                let xi = x[i][f];
                let ln = left_n[k];
                if ln > 0 && xi > last_x[k] {
                    let (ls, ts, tn) = (left_sum[k], total[k], count[k]);
                    let rn = tn - ln;
                    let gain = ls * ls / ln as f64 + (ts - ls) * (ts - ls) / rn as f64 - ts * ts / tn as f64;
                    if best[k].is_none_or(|b| gain > b.gain) {
                        best[k] = Some(Candidate {
                            gain,
                            feature: f,
                            threshold: 0.5 * (last_x[k] + xi),
                        });
                    }
                }
                left_sum[k] += targets[i];
                left_n[k] += 1;
                last_x[k] = xi;
            }
        }

        let mut next = Vec::new();
        let mut next_slot_of = vec![NONE; 2 * m];
        for (k, &node) in frontier.iter().enumerate() {
            let scale = total[k].abs().max(1.0);
            let Some(c) = best[k].filter(|c| count[k] >= 2 && c.gain > 1e-12 * scale) else {
                continue;
            };
            let Arena::Leaf(rows) = core::mem::replace(&mut arena[node], Arena::Leaf(Vec::new())) else {
                unreachable!("frontier nodes are leaves");
            };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][c.feature] <= c.threshold);
            let (li, ri) = (arena.len(), arena.len() + 1);
            arena.push(Arena::Leaf(l));
            arena.push(Arena::Leaf(r));
            arena[node] = Arena::Split(c.feature, c.threshold, li, ri);
            next_slot_of[2 * k] = next.len();
            next.push(li);
            next_slot_of[2 * k + 1] = next.len();
            next.push(ri);
        }
        for i in 0..n {
            let k = slot[i];
            if k == NONE {
                continue;
            }
            slot[i] = match arena[frontier[k]] {
                Arena::Split(f, thr, _, _) => next_slot_of[2 * k + usize::from(x[i][f] > thr)],
                Arena::Leaf(_) => NONE,
            };
        }
        frontier = next;
    }

    fn build(arena: &[Arena], node: usize, leaf_value: &dyn Fn(&[usize]) -> f64) -> TreeNode {
        match &arena[node] {
            Arena::Leaf(rows) => TreeNode::Leaf {
                value: leaf_value(rows),
            },
            Arena::Split(f, thr, l, r) => TreeNode::Split {
                feature: *f,
                threshold: *thr,
                left: Box::new(build(arena, *l, leaf_value)),
                right: Box::new(build(arena, *r, leaf_value)),
            },
        }
    }
    build(&arena, 0, leaf_value)
}

/// Least-squares regression tree: greedy variance-reduction splits at
/// midpoints between distinct sorted values, leaves holding residual means.
/// A node is split only when it has at least two rows and the best split
/// strictly reduces the squared error.
pub fn fit_regression_tree(x: &[Vec<f64>], residuals: &[f64], max_depth: usize) -> Result<TreeNode> {
    let p = check_design(x, residuals.len())?;
    let sorted = presort(x, p);
    let leaf = |rows: &[usize]| mean(&rows.iter().map(|&i| residuals[i]).collect::<Vec<_>>());
    Ok(grow_tree(x, &sorted, residuals, max_depth, &leaf))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "q")]
pub enum GbmLoss {
    #[default]
    Squared,
    /// Pinball loss at the given quantile level.
    Quantile(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub loss: GbmLoss,
    /// Training-target mean (squared loss) or quantile (pinball loss).
    pub init_value: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_trees: usize,
    pub trees: Vec<TreeNode>,
    /// Training loss after 0, 1, ..., n_trees boosting rounds.
    pub train_loss: Vec<f64>,
}

impl GbmModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.init_value + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

pub fn gbm_predict(model: &GbmModel, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().map(|r| model.predict_row(r)).collect()
}

fn pinball(z: f64, q: f64) -> f64 {
    if z < 0.0 {
        (q - 1.0) * z
    } else {
        q * z
    }
}

fn mean_loss(loss: GbmLoss, y: &[f64], f: &[f64]) -> f64 {
    let total: f64 = y
        .iter()
        .zip(f)
        .map(|(a, b)| match loss {
            GbmLoss::Squared => (a - b) * (a - b),
            GbmLoss::Quantile(q) => pinball(a - b, q),
        })
        .sum();
    total / y.len() as f64
}

/// Squared-error boosting: `init = mean(y)`, then `n_trees` trees fitted to
/// the current residuals, each added with weight `learning_rate`.
pub fn gbm_fit(x: &[Vec<f64>], y: &[f64], depth: usize, lr: f64, n_trees: usize) -> Result<GbmModel> {
    gbm_fit_with_loss(x, y, depth, lr, n_trees, GbmLoss::Squared)
}

/// Boosting under `loss`. For the pinball loss each tree is grown on the
/// negative gradient and its leaves are then set to the `q`-quantile of the
/// residuals they contain.
pub fn gbm_fit_with_loss(
    x: &[Vec<f64>],
    y: &[f64],
    depth: usize,
    lr: f64,
    n_trees: usize,
    loss: GbmLoss,
) -> Result<GbmModel> {
    let p = check_design(x, y.len())?;
    if !(lr > 0.0 && lr <= 1.0) {
        return Err(Error::Parameter("learning rate must lie in (0, 1]".into()));
    }
    if let GbmLoss::Quantile(q) = loss {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Parameter(format!("quantile level {q} outside (0, 1)")));
        }
    }
    let sorted = presort(x, p);
    let init_value = match loss {
        GbmLoss::Squared => mean(y),
        GbmLoss::Quantile(q) => quantile(y, q),
    };
    let mut f = vec![init_value; y.len()];
    let mut train_loss = Vec::with_capacity(n_trees + 1);
    train_loss.push(mean_loss(loss, y, &f));
    let mut trees = Vec::with_capacity(n_trees);
    let mut residual = vec![0.0; y.len()];
    let mut target = vec![0.0; y.len()];
    for _ in 0..n_trees {
        for i in 0..y.len() {
            residual[i] = y[i] - f[i];
            target[i] = match loss {
                GbmLoss::Squared => residual[i],
                GbmLoss::Quantile(q) => {
                    if residual[i] < 0.0 {
                        q - 1.0
                    } else {
                        q
                    }
                }
            };
        }
        let tree = match loss {
            GbmLoss::Squared => {
                let leaf = |rows: &[usize]| rows.iter().map(|&i| residual[i]).sum::<f64>() / rows.len() as f64;
                grow_tree(x, &sorted, &target, depth, &leaf)
            }
            GbmLoss::Quantile(q) => {
                let leaf = |rows: &[usize]| quantile(&rows.iter().map(|&i| residual[i]).collect::<Vec<_>>(), q);
                grow_tree(x, &sorted, &target, depth, &leaf)
            }
        };
        let step: Vec<f64> = f.iter().zip(x).map(|(fi, row)| fi + lr * tree.predict(row)).collect();
        let before = *train_loss.last().expect("initial loss is recorded");
        let after = mean_loss(loss, y, &step);
        // Each leaf moves its rows part of the way towards their loss
        // minimiser, so a rise can only come from rounding once the fit has
        // converged; such a round is kept as a zero tree.
        if after > before {
            train_loss.push(before);
            trees.push(TreeNode::Leaf { value: 0.0 });
        } else {
            f = step;
            train_loss.push(after);
            trees.push(tree);
        }
    }
    Ok(GbmModel {
        loss,
        init_value,
        learning_rate: lr,
        max_depth: depth,
        n_trees,
        trees,
        train_loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSearchConfig {
    pub depth_grid: Vec<usize>,
    pub lr_grid: Vec<f64>,
    pub folds: usize,
    pub n_trees: usize,
    /// Kept for reproducibility records; tree construction itself is
    /// deterministic and draws no random numbers.
    pub seed: u64,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self {
            depth_grid: vec![1, 3, 5, 7, 9],
            lr_grid: vec![0.01, 0.21, 0.41, 0.61, 0.81, 0.99],
            folds: 10,
            n_trees: 100,
            seed: 0,
        }
    }
}

impl GridSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth_grid.is_empty() || self.lr_grid.is_empty() {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("at least two folds are required".into()));
        }
        if self.lr_grid.iter().any(|lr| !(*lr > 0.0 && *lr <= 1.0)) {
            return Err(Error::Config("learning rates must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.depth_grid
            .iter()
            .flat_map(|&d| self.lr_grid.iter().map(move |&lr| (d, lr)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub depth: usize,
    pub learning_rate: f64,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_depth: usize,
    pub best_lr: f64,
    pub table: Vec<CvCell>,
}

/// Row ranges of `folds` contiguous, time-ordered blocks.
pub fn contiguous_folds(n: usize, folds: usize) -> Vec<core::ops::Range<usize>> {
    (0..folds).map(|k| k * n / folds..(k + 1) * n / folds).collect()
}

/// Validation MSE of one grid cell on every fold.
pub fn cv_cell(x: &[Vec<f64>], y: &[f64], depth: usize, lr: f64, cfg: &GridSearchConfig) -> Result<CvCell> {
    let mut fold_mse = Vec::with_capacity(cfg.folds);
    for fold in contiguous_folds(y.len(), cfg.folds) {
        let train_idx: Vec<usize> = (0..y.len()).filter(|i| !fold.contains(i)).collect();
        let xt: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
        let yt: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let model = gbm_fit(&xt, &yt, depth, lr, cfg.n_trees)?;
        let se: f64 = fold
            .clone()
            .map(|i| {
                let e = model.predict_row(&x[i]) - y[i];
                e * e
            })
            .sum();
        fold_mse.push(se / fold.len() as f64);
    }
    let mean_mse = mean(&fold_mse);
    Ok(CvCell {
        depth,
        learning_rate: lr,
        fold_mse,
        mean_mse,
    })
}

/// Pick the cell with the lowest mean validation MSE; ties go to the smaller
/// depth, then the smaller learning rate.
pub fn select_best(table: Vec<CvCell>) -> Result<GridSearchResult> {
    let best = table
        .iter()
        .min_by(|a, b| {
            a.mean_mse
                .total_cmp(&b.mean_mse)
                .then(a.depth.cmp(&b.depth))
                .then(a.learning_rate.total_cmp(&b.learning_rate))
        })
        .ok_or_else(|| Error::Parameter("empty grid".into()))?;
    Ok(GridSearchResult {
        best_depth: best.depth,
        best_lr: best.learning_rate,
        table: table.clone(),
    })
}

/// Grid search over depth x learning rate with contiguous k-fold CV.
pub fn cv_grid_search(x: &[Vec<f64>], y: &[f64], cfg: &GridSearchConfig) -> Result<GridSearchResult> {
    cfg.validate()?;
    check_design(x, y.len())?;
    if y.len() < cfg.folds {
        return Err(Error::Parameter(format!("{} samples for {} folds", y.len(), cfg.folds)));
    }
    let table = cfg
        .cells()
        .into_iter()
        .map(|(d, lr)| cv_cell(x, y, d, lr, cfg))
        .collect::<Result<Vec<_>>>()?;
    select_best(table)
}
