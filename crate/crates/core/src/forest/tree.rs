use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Fraction of positive training samples that reached this leaf.
    Leaf { value: f64 },
}

/// A binary tree stored as a flat node array; node 0 is the root and
/// children always sit after their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let tree = DecisionTree { nodes };
        tree.validate(usize::MAX)?;
        Ok(tree)
    }

    pub fn leaf(value: f64) -> Result<Self> {
        Self::from_nodes(vec![Node::Leaf { value }])
    }

    /// One split on `feature` at `threshold` with the given leaf values.
    pub fn stump(feature: usize, threshold: f64, left: f64, right: f64) -> Result<Self> {
        Self::from_nodes(vec![
            Node::Split {
                feature,
                threshold,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: left },
            Node::Leaf { value: right },
        ])
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::CorruptModel("tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } => {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(Error::CorruptModel(format!("leaf value {value} outside [0, 1]")));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let in_range = |c: usize| c > i && c < self.nodes.len();
                    if !in_range(left) || !in_range(right) || left == right {
                        return Err(Error::CorruptModel(format!("node {i} has invalid children")));
                    }
                    if feature >= n_features || !threshold.is_finite() {
                        return Err(Error::CorruptModel(format!("node {i} has an invalid split")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Column-major training matrix.
pub(crate) struct Matrix<'a> {
    pub columns: &'a [Vec<f64>],
    pub labels: &'a [bool],
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub features_per_split: usize,
}

struct Grower<'a> {
    data: &'a Matrix<'a>,
    params: &'a GrowParams,
    rng: &'a mut Rng,
    nodes: Vec<Node>,
    pairs: Vec<(f64, bool)>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Grows one tree on the (possibly repeated) sample indices `samples`.
pub(crate) fn grow(data: &Matrix<'_>, params: &GrowParams, samples: Vec<usize>, rng: &mut Rng) -> DecisionTree {
    let mut g = Grower {
        data,
        params,
        rng,
        nodes: Vec::new(),
        pairs: Vec::with_capacity(samples.len()),
    };
    g.build(samples, 0);
    DecisionTree { nodes: g.nodes }
}

impl Grower<'_> {
    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let n = samples.len();
        let pos = samples.iter().filter(|&&i| self.data.labels[i]).count();
        let at = self.nodes.len();
        let leaf = Node::Leaf {
            value: pos as f64 / n as f64,
        };
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf || pos == 0 || pos == n {
            self.nodes.push(leaf);
            return at;
        }
        let Some(best) = self.best_split(&samples, pos) else {
            self.nodes.push(leaf);
            return at;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.data.columns[best.feature][i] <= best.threshold);
        self.nodes.push(Node::Leaf { value: 0.0 });
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        at
    }

    /// Sampled feature indices, ascending.
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.columns.len();
        let k = self.params.features_per_split.min(d);
        let mut all: Vec<usize> = (0..d).collect();
        for i in 0..k {
            let j = self.rng.random_range(i..d);
            all.swap(i, j);
        }
        let mut chosen = all[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }

    /// Lowest weighted Gini impurity over midpoint thresholds. The score
    /// maximized is `sum_side (pos^2 + neg^2) / n_side`, which orders splits
    /// the same way. Exact ties keep the earliest (feature, threshold).
    fn best_split(&mut self, samples: &[usize], pos: usize) -> Option<Best> {
        let n = samples.len();
        let min_leaf = self.params.min_leaf;
        let parent = ((pos * pos + (n - pos) * (n - pos)) as f64) / n as f64;
        let mut best: Option<Best> = None;
        for f in self.candidate_features() {
            let col = &self.data.columns[f];
            self.pairs.clear();
            self.pairs
                .extend(samples.iter().map(|&i| (col[i], self.data.labels[i])));
            self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0usize;
            for i in 1..n {
                left_pos += usize::from(self.pairs[i - 1].1);
                let (a, b) = (self.pairs[i - 1].0, self.pairs[i].0);
                if a == b || i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (nl, nr) = (i, n - i);
                let (pl, pr) = (left_pos, pos - left_pos);
                let score = ((pl * pl + (nl - pl) * (nl - pl)) as f64) / nl as f64
                    + ((pr * pr + (nr - pr) * (nr - pr)) as f64) / nr as f64;
                if score <= parent {
                    continue;
                }
                if best.as_ref().is_none_or(|bst| score > bst.score) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some(Best {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
