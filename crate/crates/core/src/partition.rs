//! Support partitioning from data: k-means clustering, elbow selection of
//! the cluster count, an axis-aligned classification tree over the cluster
//! labels, and the nominal distribution induced by a partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DroError, Result};
use crate::model::{AxisBox, NominalDistribution, PartitionScheme};

const MAX_LLOYD_ITERS: usize = 300;
const RESTARTS: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub distortion: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

/// Lloyd iterations from the given centroids. Returns the model and the
/// distortion after each assignment step.
pub(crate) fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> (ClusterModel, Vec<f64>) {
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut distortion = 0.0;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let (k, d) = nearest(p, &centroids);
            if *l != k {
                *l = k;
                changed = true;
            }
            distortion += d;
        }
        history.push(distortion);
        if !changed || iterations == MAX_LLOYD_ITERS {
            break;
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (k, c) in centroids.iter_mut().enumerate() {
            // an empty cluster keeps its previous centroid
            if counts[k] > 0 {
                for (ci, s) in c.iter_mut().zip(&sums[k]) {
                    *ci = s / counts[k] as f64;
                }
            }
        }
    }
    let distortion = *history.last().unwrap();
    (
        ClusterModel {
            centroids,
            labels,
            distortion,
            iterations,
        },
        history,
    )
}

/// K-means with k-means++ seeding. The best of a fixed number of restarts
/// (seeded from `seed`) is returned, with centroids sorted
/// lexicographically and labels renumbered to match.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(DroError::InvalidRange("k-means needs K >= 1".into()));
    }
    if points.len() < k {
        return Err(DroError::InsufficientData {
            points: points.len(),
            clusters: k,
        });
    }
    let mut best: Option<ClusterModel> = None;
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart);
        let init = plus_plus_seeds(points, k, &mut rng);
        let (model, _) = lloyd(points, init);
        if best.as_ref().is_none_or(|b| model.distortion < b.distortion) {
            best = Some(model);
        }
    }
    let mut model = best.unwrap();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        model.centroids[a]
            .iter()
            .zip(&model.centroids[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    model.centroids = order.iter().map(|&o| model.centroids[o].clone()).collect();
    model.labels.iter_mut().for_each(|l| *l = rank[*l]);
    Ok(model)
}

/// Elbow from a distortion curve `d(1), d(2), ...`: the `K` maximizing the
/// second difference `D(K-1) - 2 D(K) + D(K+1)` of `D = ln d`, i.e. where
/// the relative improvement drops the most. Ties go to the lowest `K`.
pub fn elbow_from_distortions(distortions: &[f64]) -> Result<usize> {
    if distortions.len() < 3 {
        return Err(DroError::InvalidRange(format!(
            "elbow needs distortions for K = 1..3 at least, got {}",
            distortions.len()
        )));
    }
    let floor = distortions[0].abs().max(f64::MIN_POSITIVE) * 1e-12;
    let logs: Vec<f64> = distortions.iter().map(|d| d.max(floor).ln()).collect();
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..logs.len() {
        let second = logs[k - 2] - 2.0 * logs[k - 1] + logs[k];
        if second > best.1 + 1e-12 {
            best = (k, second);
        }
    }
    Ok(best.0)
}

pub fn elbow_select(points: &[Vec<f64>], k_max: usize, seed: u64) -> Result<usize> {
    if k_max < 3 {
        return Err(DroError::InvalidRange(format!("K_max must be >= 3, got {k_max}")));
    }
    let curve = (1..=k_max)
        .map(|k| kmeans(points, k, seed).map(|m| m.distortion))
        .collect::<Result<Vec<_>>>()?;
    elbow_from_distortions(&curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        region: usize,
        label: usize,
    },
}

/// Axis-aligned binary tree; node 0 is the root. Points with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegionTree {
    pub fn single_leaf(label: usize) -> Self {
        RegionTree {
            nodes: vec![TreeNode::Leaf { region: 0, label }],
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Region index of the leaf reached by `point`.
    pub fn classify(&self, point: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { region, .. } => return *region,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if point[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Renumber leaves left to right.
    fn number_leaves(&mut self) {
        let mut next = 0;
        let mut stack = vec![0];
        while let Some(at) = stack.pop() {
            match &mut self.nodes[at] {
                TreeNode::Leaf { region, .. } => {
                    *region = next;
                    next += 1;
                }
                TreeNode::Split { left, right, .. } => {
                    let (l, r) = (*left, *right);
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Weighted impurity decrease of the best midpoint split of `idx`.
fn best_split(
    points: &[Vec<f64>],
    labels: &[usize],
    n_labels: usize,
    idx: &[usize],
) -> Option<SplitCandidate> {
    let n = idx.len();
    let mut total = vec![0usize; n_labels];
    for &i in idx {
        total[labels[i]] += 1;
    }
    let parent = n as f64 * gini(&total, n);
    if parent <= 0.0 {
        return None;
    }
    let dim = points[idx[0]].len();
    let mut best: Option<SplitCandidate> = None;
    let mut sorted = idx.to_vec();
    for f in 0..dim {
        sorted.sort_by(|&a, &b| points[a][f].total_cmp(&points[b][f]).then(a.cmp(&b)));
        let mut left = vec![0usize; n_labels];
        for pos in 0..n - 1 {
            left[labels[sorted[pos]]] += 1;
            let here = points[sorted[pos]][f];
            let next = points[sorted[pos + 1]][f];
            if next <= here {
                continue;
            }
            let nl = pos + 1;
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let child = nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl);
            let gain = parent - child;
            if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12) {
                best = Some(SplitCandidate {
                    gain,
                    feature: f,
                    threshold: 0.5 * (here + next),
                });
            }
        }
    }
    best.filter(|b| b.gain > 1e-12)
}

fn majority(labels: &[usize], idx: &[usize], n_labels: usize) -> usize {
    let mut counts = vec![0usize; n_labels];
    for &i in idx {
        counts[labels[i]] += 1;
    }
    // ties to lowest label
    (0..n_labels).fold(0, |b, k| if counts[k] > counts[b] { k } else { b })
}

/// Greedy best-first CART growth on Gini impurity with midpoint thresholds,
/// stopping at `max_leaves` leaves or when no split reduces impurity.
pub fn fit_axis_tree(points: &[Vec<f64>], labels: &[usize], max_leaves: usize) -> Result<RegionTree> {
    if max_leaves < 2 {
        return Err(DroError::InvalidRange(format!(
            "max_leaves must be >= 2, got {max_leaves}"
        )));
    }
    if points.len() != labels.len() {
        return Err(DroError::DimensionMismatch {
            expected: points.len(),
            found: labels.len(),
        });
    }
    if points.is_empty() {
        return Ok(RegionTree::single_leaf(0));
    }
    let n_labels = labels.iter().max().map_or(1, |m| m + 1);
    let all: Vec<usize> = (0..points.len()).collect();
    let mut tree = RegionTree {
        nodes: vec![TreeNode::Leaf {
            region: 0,
            label: majority(labels, &all, n_labels),
        }],
    };
    // open leaves: (node index, member indices, best split)
    let mut open = vec![(0usize, all.clone(), best_split(points, labels, n_labels, &all))];
    while tree.leaf_count() < max_leaves {
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(k, (_, _, s))| s.as_ref().map(|s| (k, s.gain)))
            .fold(None::<(usize, f64)>, |b, (k, g)| match b {
                Some((_, bg)) if bg >= g => b,
                _ => Some((k, g)),
            });
        let Some((k, _)) = pick else { break };
        let (node, members, split) = open.swap_remove(k);
        let split = split.unwrap();
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) = members
            .iter()
            .partition(|&&i| points[i][split.feature] <= split.threshold);
        let left = tree.nodes.len();
        tree.nodes.push(TreeNode::Leaf {
            region: 0,
            label: majority(labels, &l_idx, n_labels),
        });
        tree.nodes.push(TreeNode::Leaf {
            region: 0,
            label: majority(labels, &r_idx, n_labels),
        });
        tree.nodes[node] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right: left + 1,
        };
        let ls = best_split(points, labels, n_labels, &l_idx);
        let rs = best_split(points, labels, n_labels, &r_idx);
        open.push((left, l_idx, ls));
        open.push((left + 1, r_idx, rs));
        // keep scan order stable: by node index
        open.sort_by_key(|(n, _, _)| *n);
    }
    tree.number_leaves();
    Ok(tree)
}

/// Leaf boxes of `tree` clipped to `support`, indexed by leaf order.
pub fn regions(tree: &RegionTree, support: &AxisBox) -> PartitionScheme {
    let mut boxes = vec![None; tree.leaf_count()];
    let mut stack = vec![(0usize, support.clone())];
    while let Some((at, b)) = stack.pop() {
        match &tree.nodes[at] {
            TreeNode::Leaf { region, .. } => boxes[*region] = Some(b),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let t = threshold.clamp(b.lower[*feature], b.upper[*feature]);
                let mut lb = b.clone();
                lb.upper[*feature] = t;
                let mut rb = b;
                rb.lower[*feature] = t;
                stack.push((*left, lb));
                stack.push((*right, rb));
            }
        }
    }
    PartitionScheme {
        support: support.clone(),
        regions: boxes.into_iter().map(Option::unwrap).collect(),
        tree: Some(tree.clone()),
    }
}

/// How the number of regions is chosen when partitioning from data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionCount {
    Fixed(usize),
    Elbow { k_max: usize },
}

/// Clustering followed by tree fitting: the full data-driven partition.
pub fn partition_from_data(
    points: &[Vec<f64>],
    support: &AxisBox,
    count: RegionCount,
    seed: u64,
) -> Result<PartitionScheme> {
    let k = match count {
        RegionCount::Fixed(k) => k,
        RegionCount::Elbow { k_max } => elbow_select(points, k_max, seed)?,
    };
    if k <= 1 {
        return Ok(PartitionScheme::single(support.clone()));
    }
    let model = kmeans(points, k, seed)?;
    let tree = fit_axis_tree(points, &model.labels, k)?;
    Ok(regions(&tree, support))
}

/// Empirical weights and conditional atoms over `scheme`. Regions without
/// data get weight `1/(N + |I'|)` and no atoms.
pub fn build_nominal(samples: &[Vec<f64>], scheme: &PartitionScheme) -> Result<NominalDistribution> {
    let mut atoms = vec![Vec::new(); scheme.len()];
    for (index, s) in samples.iter().enumerate() {
        let region = if scheme.support.contains(s) {
            scheme.classify(s)
        } else {
            None
        };
        match region {
            Some(r) => atoms[r].push(s.clone()),
            None => {
                return Err(DroError::OutOfSupport {
                    index,
                    point: s.clone(),
                })
            }
        }
    }
    let empty: Vec<usize> = (0..scheme.len()).filter(|&i| atoms[i].is_empty()).collect();
    let denom = (samples.len() + empty.len()) as f64;
    let weights = atoms
        .iter()
        .map(|a: &Vec<Vec<f64>>| a.len().max(1) as f64 / denom)
        .collect();
    Ok(NominalDistribution {
        weights,
        atoms,
        empty,
        sample_count: samples.len(),
    })
}
