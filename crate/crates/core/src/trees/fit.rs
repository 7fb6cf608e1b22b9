//! Greedy least-squares growth of constrained multi-output trees.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{project_l1_box, MultiTree, NodeRef, SplitNode};
use crate::error::{Error, Result};

/// Which thresholds are tried for each feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCandidates {
    /// Every midpoint between consecutive distinct values.
    Exhaustive,
    /// At most this many midpoints, evenly spaced in rank.
    Quantile(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Number of leaves of the fitted tree.
    pub p: usize,
    pub tau: f64,
    pub min_samples_leaf: usize,
    pub split_candidates: SplitCandidates,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { p: 2, tau: 1.0, min_samples_leaf: 1, split_candidates: SplitCandidates::Exhaustive }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::InvalidParameter(format!("trees need p >= 2 leaves, got {}", self.p)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("min_samples_leaf must be at least 1".into()));
        }
        if self.split_candidates == SplitCandidates::Quantile(0) {
            return Err(Error::InvalidParameter("quantile candidate count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Leaf {
    rows: Vec<usize>,
    /// Unprojected weighted mean of the residuals.
    mean: Vec<f64>,
    /// Where this leaf hangs: (node, is_left). `None` for the root leaf.
    parent: Option<(usize, bool)>,
    best: Option<Split>,
}

/// Fits a tree with exactly `cfg.p` leaves to residuals `r` (rows of length
/// `q`) with per-example `weights`.
///
/// Leaves are split best-first by the reduction of the weighted squared
/// error summed over outputs. When no leaf admits a split with positive
/// gain the tree is completed with trivial splits that send every training
/// point left; the empty right child copies its parent's value. Leaf values
/// are the projected weighted means.
pub fn fit_tree(x: &[Vec<f64>], r: &[Vec<f64>], weights: &[f64], cfg: &TreeConfig) -> Result<MultiTree> {
    cfg.validate()?;
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyData("cannot fit a tree to zero rows".into()));
    }
    if r.len() != n || weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: if r.len() != n { r.len() } else { weights.len() } });
    }
    let d = x[0].len();
    let q = r[0].len();
    if d == 0 || q == 0 {
        return Err(Error::EmptyData("features and outputs must be non-empty".into()));
    }
    for i in 0..n {
        if x[i].len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x[i].len() });
        }
        if r[i].len() != q {
            return Err(Error::DimensionMismatch { expected: q, got: r[i].len() });
        }
        if x[i].iter().chain(&r[i]).any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in row {i}")));
        }
        if !(weights[i] >= 0.0 && weights[i].is_finite()) {
            return Err(Error::Data(format!("weight {} of row {i} is not a finite non-negative number", weights[i])));
        }
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Data("weights sum to zero".into()));
    }

    let ctx = Ctx { x, r, w: weights, q, d, cfg };
    let all: Vec<usize> = (0..n).collect();
    let mut leaves = vec![Leaf { mean: ctx.mean(&all, None), best: ctx.best_split(&all), rows: all, parent: None }];
    let mut nodes: Vec<SplitNode> = Vec::with_capacity(cfg.p - 1);

    while leaves.len() < cfg.p {
        let chosen = leaves
            .iter()
            .enumerate()
            .filter_map(|(l, leaf)| leaf.best.map(|s| (l, s)))
            .fold(None::<(usize, Split)>, |acc, (l, s)| match acc {
                Some((_, b)) if b.gain >= s.gain => acc,
                _ => Some((l, s)),
            });
        let (l, split) = match chosen {
            Some(c) => c,
            None => (0, trivial_split(&ctx, &leaves[0])),
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            leaves[l].rows.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        let parent_mean = leaves[l].mean.clone();
        let node = nodes.len();
        nodes.push(SplitNode {
            feature: split.feature,
            threshold: split.threshold,
            left: NodeRef::Leaf(l),
            right: NodeRef::Leaf(leaves.len()),
        });
        if let Some((pn, is_left)) = leaves[l].parent {
            let slot = if is_left { &mut nodes[pn].left } else { &mut nodes[pn].right };
            *slot = NodeRef::Node(node);
        }
        let right = Leaf {
            mean: ctx.mean(&right_rows, Some(&parent_mean)),
            best: ctx.best_split(&right_rows),
            rows: right_rows,
            parent: Some((node, false)),
        };
        leaves[l] = Leaf {
            mean: ctx.mean(&left_rows, Some(&parent_mean)),
            best: ctx.best_split(&left_rows),
            rows: left_rows,
            parent: Some((node, true)),
        };
        leaves.push(right);
    }

    let tree = MultiTree {
        nodes,
        leaves: leaves.iter().map(|leaf| project_l1_box(&leaf.mean, cfg.tau)).collect(),
        tau: cfg.tau,
        d,
        q,
    };
    debug_assert!(tree.validate().is_ok());
    Ok(tree)
}

fn trivial_split(ctx: &Ctx, leaf: &Leaf) -> Split {
    let threshold = leaf.rows.iter().map(|&i| ctx.x[i][0]).fold(f64::NEG_INFINITY, f64::max);
    Split { gain: 0.0, feature: 0, threshold: if threshold.is_finite() { threshold } else { 0.0 } }
}

struct Ctx<'a> {
    x: &'a [Vec<f64>],
    r: &'a [Vec<f64>],
    w: &'a [f64],
    q: usize,
    d: usize,
    cfg: &'a TreeConfig,
}

impl Ctx<'_> {
    fn mean(&self, rows: &[usize], fallback: Option<&[f64]>) -> Vec<f64> {
        let mut s = vec![0.0; self.q];
        let mut total = 0.0;
        for &i in rows {
            total += self.w[i];
            for (acc, v) in s.iter_mut().zip(&self.r[i]) {
                *acc += self.w[i] * v;
            }
        }
        if total > 0.0 {
            s.iter_mut().for_each(|v| *v /= total);
            s
        } else {
            fallback.map_or(s, <[f64]>::to_vec)
        }
    }

    /// Best positive-gain split of `rows`; ties prefer the lower feature and
    /// then the lower threshold.
    fn best_split(&self, rows: &[usize]) -> Option<Split> {
        if rows.len() < 2 * self.cfg.min_samples_leaf {
            return None;
        }
        (0..self.d)
            .into_par_iter()
            .filter_map(|f| self.best_on_feature(rows, f))
            .reduce_with(|a, b| {
                let a_first = (a.feature, a.threshold) <= (b.feature, b.threshold);
                let (first, second) = if a_first { (a, b) } else { (b, a) };
                if second.gain > first.gain {
                    second
                } else {
                    first
                }
            })
    }

    fn best_on_feature(&self, rows: &[usize], f: usize) -> Option<Split> {
        let q = self.q;
        let mut order = rows.to_vec();
        order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));

        let mut total = vec![0.0; q];
        let mut w_total = 0.0;
        for &i in &order {
            w_total += self.w[i];
            for (t, v) in total.iter_mut().zip(&self.r[i]) {
                *t += self.w[i] * v;
            }
        }
        let score = |s: &[f64], w: f64| if w > 0.0 { s.iter().map(|v| v * v).sum::<f64>() / w } else { 0.0 };
        let parent = score(&total, w_total);

        // Boundaries k: rows order[..k] go left. Valid where the value changes.
        let m = order.len();
        let min_leaf = self.cfg.min_samples_leaf;
        let boundaries: Vec<usize> = (min_leaf..=m - min_leaf)
            .filter(|&k| k > 0 && k < m && self.x[order[k - 1]][f] < self.x[order[k]][f])
            .collect();
        if boundaries.is_empty() {
            return None;
        }
        let keep: Vec<usize> = match self.cfg.split_candidates {
            SplitCandidates::Quantile(c) if c < boundaries.len() => {
                let mut picked: Vec<usize> = (0..c)
                    .map(|j| boundaries[((j as f64 + 0.5) * boundaries.len() as f64 / c as f64) as usize])
                    .collect();
                picked.dedup();
                picked
            }
            _ => boundaries,
        };

        let mut left = vec![0.0; q];
        let mut w_left = 0.0;
        let mut next = 0;
        let mut best: Option<Split> = None;
        for &k in &keep {
            while next < k {
                let i = order[next];
                w_left += self.w[i];
                for (acc, v) in left.iter_mut().zip(&self.r[i]) {
                    *acc += self.w[i] * v;
                }
                next += 1;
            }
            let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let gain = score(&left, w_left) + score(&right, w_total - w_left) - parent;
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                let lo = self.x[order[k - 1]][f];
                let hi = self.x[order[k]][f];
                let mut threshold = (lo + hi) / 2.0;
                if !threshold.is_finite() {
                    threshold = lo + 0.5 * (hi - lo);
                }
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split { gain, feature: f, threshold });
            }
        }
        best
    }
}
