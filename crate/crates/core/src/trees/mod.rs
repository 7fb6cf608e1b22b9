//! Axis-aligned multi-output regression trees with constrained leaves.
//!
//! A tree with `p` leaves maps `x` to the weight row of the leaf it lands
//! in. Every row satisfies `||w||_1 <= tau` and `||w||_inf <= 1`, so a tree
//! is a member of the constrained class used by the complexity bounds.

mod fit;
mod projection;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use fit::{fit_tree, SplitCandidates, TreeConfig};
pub use projection::project_l1_box;

/// Slack allowed on the leaf constraints.
pub const CONSTRAINT_SLACK: f64 = 1e-12;

/// Child reference of an internal node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRef {
    Node(usize),
    Leaf(usize),
}

/// Internal node: `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: NodeRef,
    pub right: NodeRef,
}

/// A binary tree rooted at `nodes[0]` with `p = leaves.len()` leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTree {
    pub nodes: Vec<SplitNode>,
    pub leaves: Vec<Vec<f64>>,
    pub tau: f64,
    pub d: usize,
    pub q: usize,
}

impl MultiTree {
    /// A stump on `feature` with the given leaf rows, projected onto the
    /// constraint set.
    pub fn stump(d: usize, feature: usize, threshold: f64, left: &[f64], right: &[f64], tau: f64) -> Result<MultiTree> {
        let tree = MultiTree {
            nodes: vec![SplitNode { feature, threshold, left: NodeRef::Leaf(0), right: NodeRef::Leaf(1) }],
            leaves: vec![project_l1_box(left, tau), project_l1_box(right, tau)],
            tau,
            d,
            q: left.len(),
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn p(&self) -> usize {
        self.leaves.len()
    }

    /// 0-based index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> Result<usize> {
        check_dim(self.d, x.len())?;
        Ok(self.route(x))
    }

    fn route(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            let node = &self.nodes[at];
            let next = if x[node.feature] <= node.threshold { node.left } else { node.right };
            match next {
                NodeRef::Node(i) => at = i,
                NodeRef::Leaf(l) => return l,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<&[f64]> {
        Ok(&self.leaves[self.leaf_index(x)?])
    }

    /// Prediction without the dimension check; `x` must have length `d`.
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> &[f64] {
        &self.leaves[self.route(x)]
    }

    /// Checks the tree shape and the leaf constraints.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("invalid tree: {msg}")));
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        let p = self.leaves.len();
        if p < 2 || self.nodes.len() != p - 1 {
            return bad(format!("{} internal nodes cannot carry {p} leaves", self.nodes.len()));
        }
        let mut node_seen = vec![false; self.nodes.len()];
        let mut leaf_seen = vec![false; p];
        node_seen[0] = true;
        for node in &self.nodes {
            if node.feature >= self.d {
                return bad(format!("feature {} outside 0..{}", node.feature, self.d));
            }
            if node.threshold.is_nan() {
                return bad("NaN threshold".into());
            }
            for child in [node.left, node.right] {
                let slot = match child {
                    NodeRef::Node(i) if i > 0 && i < node_seen.len() => &mut node_seen[i],
                    NodeRef::Leaf(l) if l < p => &mut leaf_seen[l],
                    other => return bad(format!("dangling child {other:?}")),
                };
                if *slot {
                    return bad(format!("child {child:?} referenced twice"));
                }
                *slot = true;
            }
        }
        // n-1 nodes with 2(n-1) distinct child slots covering every node but
        // the root and every leaf is a tree only if there is no cycle; a
        // cycle would leave some node unreachable from the root.
        if !self.all_reachable() {
            return bad("not every node is reachable from the root".into());
        }
        for (l, row) in self.leaves.iter().enumerate() {
            if row.len() != self.q {
                return bad(format!("leaf {l} has {} outputs, expected {}", row.len(), self.q));
            }
            let l1: f64 = row.iter().map(|w| w.abs()).sum();
            let linf = row.iter().map(|w| w.abs()).fold(0.0, f64::max);
            if !(l1 <= self.tau + CONSTRAINT_SLACK) || !(linf <= 1.0 + CONSTRAINT_SLACK) {
                return bad(format!("leaf {l} violates the constraints (l1 {l1}, max {linf})"));
            }
        }
        Ok(())
    }

    fn all_reachable(&self) -> bool {
        let mut count = 0;
        let mut stack = vec![0usize];
        let mut visited = vec![false; self.nodes.len()];
        while let Some(i) = stack.pop() {
            if visited[i] {
                return false;
            }
            visited[i] = true;
            count += 1;
            for child in [self.nodes[i].left, self.nodes[i].right] {
                if let NodeRef::Node(j) = child {
                    stack.push(j);
                }
            }
        }
        count == self.nodes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1_stump() -> MultiTree {
        MultiTree::stump(2, 0, 0.5, &[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn routing_follows_threshold() {
        let t = e1_stump();
        assert_eq!(t.leaf_index(&[0.3, 9.0]).unwrap(), 0);
        assert_eq!(t.leaf_index(&[0.5, 9.0]).unwrap(), 0);
        assert_eq!(t.leaf_index(&[0.7, 9.0]).unwrap(), 1);
        assert_eq!(t.predict(&[0.7, 0.0]).unwrap(), &[-1.0, 0.0, 0.0]);
        assert!(t.leaf_index(&[0.1]).is_err());
    }

    #[test]
    fn zero_leaves_predict_zero() {
        let t = MultiTree::stump(1, 0, 0.0, &[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(t.predict(&[-4.0]).unwrap(), &[0.0, 0.0]);
        assert_eq!(t.predict(&[4.0]).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn validate_rejects_broken_trees() {
        let mut t = e1_stump();
        t.leaves[0] = vec![0.8, 0.8, 0.0];
        assert!(t.validate().is_err());

        let mut t = e1_stump();
        t.nodes[0].right = NodeRef::Leaf(0);
        assert!(t.validate().is_err());

        let mut t = e1_stump();
        t.nodes[0].feature = 5;
        assert!(t.validate().is_err());

        let t = MultiTree {
            nodes: vec![
                SplitNode { feature: 0, threshold: 0.0, left: NodeRef::Leaf(0), right: NodeRef::Node(1) },
                SplitNode { feature: 0, threshold: 1.0, left: NodeRef::Node(1), right: NodeRef::Leaf(1) },
            ],
            leaves: vec![vec![0.0]; 3],
            tau: 1.0,
            d: 1,
            q: 1,
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = e1_stump();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"leaf\":0"));
        let back: MultiTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
