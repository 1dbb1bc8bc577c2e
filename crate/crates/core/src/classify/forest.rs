use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{check_xy, Scorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        prob: f64,
    },
    /// `row[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(prob: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { prob }],
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { prob } => return prob,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub tree_count: usize,
    pub max_depth: Option<usize>,
    pub rng_seed: u64,
    pub n_features: usize,
}

impl Scorer for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree_count: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            tree_count: 100,
            max_depth: None,
            max_features: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

/// Bootstrap-aggregated CART trees with Gini splits over random feature
/// subsets. Tree `i` draws from its own ChaCha stream, so results do not
/// depend on thread scheduling.
pub fn train_forest(x: &[Vec<f64>], y: &[bool], params: &ForestParams) -> Result<ForestModel> {
    let d = check_xy(x, y)?;
    if x.len() < 2 {
        return Err(Error::Training(
            "random forest needs at least 2 samples".into(),
        ));
    }
    if params.tree_count == 0 {
        return Err(Error::arg("tree_count must be > 0"));
    }
    let mtry = params
        .max_features
        .unwrap_or(((d as f64).sqrt().floor() as usize).max(1))
        .clamp(1, d.max(1));
    let trees = (0..params.tree_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let sample: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
            let mut builder = TreeBuilder {
                x,
                y,
                d,
                mtry,
                max_depth: params.max_depth,
                min_split: params.min_samples_split.max(2),
                rng,
                nodes: Vec::new(),
            };
            builder.grow(sample, 0);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();
    Ok(ForestModel {
        trees,
        tree_count: params.tree_count,
        max_depth: params.max_depth,
        rng_seed: params.seed,
        n_features: d,
    })
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    d: usize,
    mtry: usize,
    max_depth: Option<usize>,
    min_split: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let prob = pos as f64 / idx.len() as f64;
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { prob });
        let pure = pos == 0 || pos == idx.len();
        if pure || idx.len() < self.min_split || self.max_depth.is_some_and(|m| depth >= m) {
            return me;
        }
        let Some(split) = self.best_split(&idx) else {
            return me;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        me
    }

    /// Examines `mtry` random features, continuing past that count only while
    /// no valid partition has been found.
    fn best_split(&mut self, idx: &[usize]) -> Option<SplitChoice> {
        let mut features: Vec<usize> = (0..self.d).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<SplitChoice> = None;
        let total_pos = idx.iter().filter(|&&i| self.y[i]).count() as f64;
        let n = idx.len() as f64;
        let mut order: Vec<usize> = idx.to_vec();
        for (k, &f) in features.iter().enumerate() {
            if k >= self.mtry && best.is_some() {
                break;
            }
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left_pos = 0.0;
            for s in 1..order.len() {
                if self.y[order[s - 1]] {
                    left_pos += 1.0;
                }
                let (a, b) = (self.x[order[s - 1]][f], self.x[order[s]][f]);
                if a == b {
                    continue;
                }
                let nl = s as f64;
                let nr = n - nl;
                let right_pos = total_pos - left_pos;
                // weighted child Gini, to be minimized
                let gini = |p: f64, m: f64| 2.0 * p / m * (1.0 - p / m);
                let score = nl * gini(left_pos, nl) + nr * gini(right_pos, nr);
                if best.as_ref().is_none_or(|bs| score < bs.score) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(SplitChoice {
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
