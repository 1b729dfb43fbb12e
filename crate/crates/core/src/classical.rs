//! Gradient boosting with exact greedy least-squares regression trees.
//!
//! Under squared loss the negative gradient is the residual, so every round
//! fits a depth-limited tree to the current residuals and adds it scaled by
//! the shrinkage rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn mean_of(idx: &[usize], r: &[f64]) -> f64 {
    idx.iter().map(|&i| r[i]).sum::<f64>() / idx.len() as f64
}

/// Best (feature, midpoint) split of the rows in `idx`, scanning features
/// and thresholds in ascending order and keeping the first strict maximum of
/// the SSE reduction.
fn best_split(x: &[Vec<f64>], r: &[f64], idx: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let total: f64 = idx.iter().map(|&i| r[i]).sum();
    let parent_sse: f64 = {
        let m = total / n as f64;
        idx.iter().map(|&i| (r[i] - m) * (r[i] - m)).sum()
    };
    if parent_sse == 0.0 {
        return None;
    }
    let base = total * total / n as f64;
    let mut best: Option<SplitChoice> = None;
    let mut sorted = idx.to_vec();
    for f in 0..x[idx[0]].len() {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for pos in 1..n {
            left_sum += r[sorted[pos - 1]];
            let (lo, hi) = (x[sorted[pos - 1]][f], x[sorted[pos]][f]);
            if pos < min_leaf.max(1) || n - pos < min_leaf.max(1) || lo >= hi {
                continue;
            }
            let right_sum = total - left_sum;
            // SSE(parent) − SSE(left) − SSE(right).
            let gain = left_sum * left_sum / pos as f64 + right_sum * right_sum / (n - pos) as f64 - base;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(SplitChoice { feature: f, threshold, gain });
            }
        }
    }
    best.filter(|b| b.gain > 0.0 && b.gain > 1e-12 * parent_sse)
}

fn grow(x: &[Vec<f64>], r: &[f64], idx: &[usize], depth_left: usize, min_leaf: usize) -> TreeNode {
    let leaf = || TreeNode::Leaf { value: mean_of(idx, r) };
    if depth_left == 0 {
        return leaf();
    }
    let Some(split) = best_split(x, r, idx, min_leaf) else {
        return leaf();
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(x, r, &left, depth_left - 1, min_leaf)),
        right: Box::new(grow(x, r, &right, depth_left - 1, min_leaf)),
    }
}

fn check_rows(x: &[Vec<f64>], expected_width: Option<usize>) -> Result<usize> {
    let d = expected_width.or_else(|| x.first().map(Vec::len)).unwrap_or(0);
    for row in x {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: row.len() });
        }
    }
    Ok(d)
}

/// Greedy least-squares tree; leaves hold residual means.
pub fn fit_tree(x: &[Vec<f64>], residuals: &[f64], max_depth: usize, min_samples_leaf: usize) -> Result<TreeNode> {
    if x.is_empty() {
        return Err(Error::Empty("tree training set".into()));
    }
    if x.len() != residuals.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: residuals.len() });
    }
    check_rows(x, None)?;
    let idx: Vec<usize> = (0..x.len()).collect();
    Ok(grow(x, residuals, &idx, max_depth, min_samples_leaf))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub rounds: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams { rounds: 300, shrinkage: 0.1, max_depth: 4, min_samples_leaf: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub init_value: f64,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmFit {
    pub model: GbmModel,
    /// Training MSE of the initial constant (entry 0) and after each round.
    pub mse_trace: Vec<f64>,
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

pub fn fit_gbm(x: &[Vec<f64>], y: &[f64], params: &GbmParams) -> Result<GbmFit> {
    if !(params.shrinkage > 0.0 && params.shrinkage <= 1.0) {
        return Err(Error::Config(format!("shrinkage {} outside (0, 1]", params.shrinkage)));
    }
    if x.is_empty() {
        return Err(Error::Empty("boosting training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite training target".into()));
    }
    let n_features = check_rows(x, None)?;
    let init_value = y.iter().sum::<f64>() / y.len() as f64;
    let mut pred = vec![init_value; y.len()];
    let mut trace = vec![mse(&pred, y)];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        let residuals: Vec<f64> = y.iter().zip(&pred).map(|(t, p)| t - p).collect();
        let tree = fit_tree(x, &residuals, params.max_depth, params.min_samples_leaf)?;
        for (p, row) in pred.iter_mut().zip(x) {
            *p += params.shrinkage * tree.predict(row);
        }
        trace.push(mse(&pred, y));
        trees.push(tree);
    }
    let model = GbmModel {
        init_value,
        shrinkage: params.shrinkage,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        n_features,
        trees,
    };
    Ok(GbmFit { model, mse_trace: trace })
}

impl GbmModel {
    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, found: x.len() });
        }
        Ok(self.init_value + self.trees.iter().map(|t| self.shrinkage * t.predict(x)).sum::<f64>())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|row| self.predict_row(row)).collect()
    }
}

pub fn predict(model: &GbmModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    model.predict(x)
}
