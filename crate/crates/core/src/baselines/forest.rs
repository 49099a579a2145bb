use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numcore::{argmax, Matrix, SeededRng};
use crate::{Error, Result, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 300, max_depth: 15, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Class counts of the bootstrap samples reaching the leaf.
    Leaf { votes: [usize; N_CLASSES] },
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf_votes(&self, x: &[f64]) -> [usize; N_CLASSES] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { votes } => return *votes,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the leaf reached by `x`, ties to the lowest class.
    pub fn predict(&self, x: &[f64]) -> usize {
        let v = self.leaf_votes(x);
        argmax(&v.map(|c| c as f64))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[usize; N_CLASSES]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { votes } => Some(votes),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub config: ForestConfig,
}

fn gini(counts: &[usize; N_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let mut sorted = *counts;
    sorted.sort_unstable();
    1.0 - sorted.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn class_counts(y: &[usize], idx: &[usize]) -> [usize; N_CLASSES] {
    let mut c = [0; N_CLASSES];
    for &i in idx {
        c[y[i]] += 1;
    }
    c
}

/// Best gini split of `idx` over the candidate features: `(feature, threshold)`.
/// Ties go to the lowest feature, then the lowest threshold.
pub fn best_split(x: &Matrix, y: &[usize], idx: &[usize], features: &[usize]) -> Option<(usize, f64)> {
    let n = idx.len();
    let parent = gini(&class_counts(y, idx), n);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted_feats = features.to_vec();
    sorted_feats.sort_unstable();
    let total = class_counts(y, idx);
    for &f in &sorted_feats {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]));
        let mut left = [0usize; N_CLASSES];
        for k in 0..n - 1 {
            left[y[order[k]]] += 1;
            let (lo, hi) = (x[(order[k], f)], x[(order[k + 1], f)]);
            if lo == hi {
                continue;
            }
            let nl = k + 1;
            let mut right = total;
            for c in 0..N_CLASSES {
                right[c] -= left[c];
            }
            let imp = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
            let thr = lo + (hi - lo) / 2.0;
            let better = match best {
                None => true,
                Some((bi, _, _)) => imp < bi,
            };
            if better {
                best = Some((imp, f, thr));
            }
        }
    }
    best.filter(|(imp, _, _)| *imp < parent - 1e-12).map(|(_, f, t)| (f, t))
}

#[allow(clippy::too_many_arguments)]
fn grow(
    x: &Matrix,
    y: &[usize],
    idx: Vec<usize>,
    depth: usize,
    max_depth: usize,
    mtry: usize,
    rng: &mut SeededRng,
    nodes: &mut Vec<Node>,
) -> usize {
    let counts = class_counts(y, &idx);
    let id = nodes.len();
    nodes.push(Node::Leaf { votes: counts });
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if depth >= max_depth || pure || idx.len() < 2 {
        return id;
    }
    let features = rng.sample_indices(x.cols(), mtry);
    let Some((feature, threshold)) = best_split(x, y, &idx, &features) else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[(i, feature)] <= threshold);
    let left = grow(x, y, l, depth + 1, max_depth, mtry, rng, nodes);
    let right = grow(x, y, r, depth + 1, max_depth, mtry, rng, nodes);
    nodes[id] = Node::Split { feature, threshold, left, right };
    id
}

/// Grows one tree on the given sample indices with `mtry` features per node.
pub fn grow_tree(
    x: &Matrix,
    y: &[usize],
    idx: Vec<usize>,
    max_depth: usize,
    mtry: usize,
    rng: &mut SeededRng,
) -> DecisionTree {
    let mut nodes = Vec::new();
    grow(x, y, idx, 0, max_depth, mtry.clamp(1, x.cols()), rng, &mut nodes);
    DecisionTree { nodes }
}

/// Bootstrap forest with `⌊√d⌋` candidate features per node.
pub fn forest_fit(x: &Matrix, y: &[usize], cfg: &ForestConfig) -> Result<ForestModel> {
    if x.rows() == 0 || x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "forest needs matching nonempty X/y, got {} rows and {} labels",
            x.rows(),
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= N_CLASSES) {
        return Err(Error::Param(format!("class index {bad} outside 0..{N_CLASSES}")));
    }
    if cfg.n_trees == 0 {
        return Err(Error::Param("n_trees must be >= 1".into()));
    }
    let mtry = ((x.cols() as f64).sqrt().floor() as usize).max(1);
    let root = SeededRng::new(cfg.seed);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = root.derive_indexed("tree", t as u64);
            let idx: Vec<usize> = (0..x.rows()).map(|_| rng.below(x.rows())).collect();
            grow_tree(x, y, idx, cfg.max_depth, mtry, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees, n_features: x.cols(), config: cfg.clone() })
}

/// Fraction of trees voting for each class.
pub fn forest_predict_proba(m: &ForestModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != m.n_features {
        return Err(Error::Shape(format!("forest expects {} features, got {}", m.n_features, x.cols())));
    }
    let mut p = Matrix::zeros(x.rows(), N_CLASSES);
    let n_trees = m.trees.len() as f64;
    for i in 0..x.rows() {
        let mut votes = [0usize; N_CLASSES];
        for t in &m.trees {
            votes[t.predict(x.row(i))] += 1;
        }
        for (c, &v) in votes.iter().enumerate() {
            p[(i, c)] = v as f64 / n_trees;
        }
    }
    Ok(p)
}
