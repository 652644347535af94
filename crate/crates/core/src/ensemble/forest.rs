//! Random forest of Gini-split decision trees over bootstrap samples.
//!
//! Tree `t` draws all of its randomness from a ChaCha stream keyed by
//! `(seed, t)`, so trees are independent of fitting order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{class_index, EnsembleError};
use crate::corpus::Label;
use crate::scorers::ProbVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 1,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class distribution `[human, ai]` of the training samples in the leaf.
    Leaf { dist: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_distribution(&self, row: &[f64]) -> [f64; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { dist } => return *dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict_proba(&self, row: &[f64]) -> ProbVector {
        let p_ai = self
            .trees
            .iter()
            .map(|t| t.leaf_distribution(row)[1])
            .sum::<f64>()
            / self.trees.len() as f64;
        ProbVector::from_p_ai(p_ai)
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - a * a - b * b
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    classes: &'a [usize],
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0, 0];
        for &i in idx {
            c[self.classes[i]] += 1;
        }
        c
    }

    fn leaf(&mut self, counts: [usize; 2]) -> usize {
        let n = (counts[0] + counts[1]) as f64;
        self.nodes.push(Node::Leaf {
            dist: [counts[0] as f64 / n, counts[1] as f64 / n],
        });
        self.nodes.len() - 1
    }

    /// Best split over a random subset of features: `(feature, threshold, weighted gini)`.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64, f64)> {
        let d = self.rows[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        for k in 0..self.mtry.min(d) {
            let j = rng.random_range(k..d);
            features.swap(k, j);
        }
        let total = self.class_counts(idx);
        let n = idx.len() as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for &f in &features[..self.mtry.min(d)] {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let mut left = [0usize; 2];
            for pos in 0..order.len() - 1 {
                left[self.classes[order[pos]]] += 1;
                let (x, next) = (self.rows[order[pos]][f], self.rows[order[pos + 1]][f]);
                if x == next {
                    continue;
                }
                let n_left = pos + 1;
                if n_left < self.cfg.min_leaf || order.len() - n_left < self.cfg.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let score = (n_left as f64 * gini(left) + (n - n_left as f64) * gini(right)) / n;
                if best.is_none_or(|(_, _, s)| score < s) {
                    best = Some((f, x + (next - x) / 2.0, score));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_counts(&idx);
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_leaf.max(1) {
            return self.leaf(counts);
        }
        let Some((feature, threshold, _)) = self.best_split(&idx, rng) else {
            return self.leaf(counts);
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { dist: [0.0, 0.0] });
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

pub fn fit_random_forest(
    rows: &[Vec<f64>],
    labels: &[Label],
    cfg: &ForestConfig,
    seed: u64,
) -> Result<Forest, EnsembleError> {
    if cfg.n_trees == 0 {
        return Err(EnsembleError::InvalidConfig("n_trees must be at least 1".into()));
    }
    if rows.is_empty() {
        return Err(EnsembleError::InvalidConfig("no training rows".into()));
    }
    let d = rows[0].len();
    let mtry = cfg
        .mtry
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d.max(1));
    let n = rows.len();
    let classes: Vec<usize> = labels.iter().map(|&l| class_index(l)).collect();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = Builder {
                rows,
                classes: &classes,
                cfg,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(sample, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(Forest { trees })
}
