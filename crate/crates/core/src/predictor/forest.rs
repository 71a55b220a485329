//! Bagged regression trees with per-split feature subsampling.

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    /// Bootstrap sample size as a fraction of the training rows.
    pub bootstrap: f64,
    /// Features tried per split; `None` means `ceil(n / 3)`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 10,
            bootstrap: 1.0,
            max_features: None,
            min_samples_leaf: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node<F> {
    Leaf {
        value: F,
    },
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
    },
}

/// Nodes in preorder; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<F> {
    pub nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tree<F> {
    pub fn predict(&self, x: &[F]) -> F {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<F>(nodes: &[Node<F>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<F> {
    pub trees: Vec<Tree<F>>,
}

impl<F: Scalar> Forest<F> {
    /// Fits on rows `x` (all the same width) and targets `y`. Columns whose
    /// value never varies are never split on and do not count toward the
    /// per-split subsample, so adding one leaves the fit unchanged.
    pub fn fit(x: &[Vec<F>], y: &[F], params: &ForestParams, seed: u64) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!y.is_empty(), "cannot fit on zero rows");
        let active: Vec<usize> = (0..x[0].len())
            .filter(|&c| x.iter().any(|r| r[c] != x[0][c]))
            .collect();
        let mtry = params
            .max_features
            .unwrap_or(active.len().div_ceil(3))
            .clamp(1.min(active.len()), active.len());
        let n = y.len();
        let sample = ((n as f64 * params.bootstrap).round() as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..params.trees)
            .map(|_| {
                let mut tree_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
                let rows: Vec<usize> = (0..sample).map(|_| tree_rng.random_range(0..n)).collect();
                let mut b = Builder {
                    x,
                    y,
                    active: &active,
                    mtry,
                    params,
                    rng: tree_rng,
                    nodes: Vec::new(),
                };
                b.grow(rows, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Self { trees }
    }

    /// Mean over trees.
    pub fn predict(&self, x: &[F]) -> F {
        let sum: F = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / F::lit(self.trees.len() as f64)
    }
}

struct Builder<'a, F> {
    x: &'a [Vec<F>],
    y: &'a [F],
    active: &'a [usize],
    mtry: usize,
    params: &'a ForestParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node<F>>,
}

struct Cut<F> {
    feature: usize,
    threshold: F,
    gain: F,
}

impl<F: Scalar> Builder<'_, F> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let sum: F = rows.iter().map(|&r| self.y[r]).sum();
        let mean = sum / F::lit(rows.len() as f64);
        self.nodes.push(Node::Leaf { value: mean });
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || rows.len() < 2 * min_leaf || self.mtry == 0 {
            return id;
        }
        let Some(cut) = self.best_cut(&rows, sum, min_leaf) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[i][cut.feature] <= cut.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: cut.feature,
            threshold: cut.threshold,
            left,
            right,
        };
        id
    }

    /// Largest reduction in squared error over a random subset of features.
    fn best_cut(&mut self, rows: &[usize], total: F, min_leaf: usize) -> Option<Cut<F>> {
        let n = rows.len();
        let mut picked: Vec<usize> = index::sample(&mut self.rng, self.active.len(), self.mtry)
            .into_iter()
            .map(|k| self.active[k])
            .collect();
        picked.sort_unstable();
        let base = total * total / F::lit(n as f64);
        let mut best: Option<Cut<F>> = None;
        let mut order = rows.to_vec();
        for f in picked {
            order.sort_by(|&a, &b| {
                self.x[a][f]
                    .partial_cmp(&self.x[b][f])
                    .expect("finite features")
                    .then(a.cmp(&b))
            });
            let mut left = F::zero();
            for k in 1..n {
                left = left + self.y[order[k - 1]];
                let (lo, hi) = (self.x[order[k - 1]][f], self.x[order[k]][f]);
                if k < min_leaf || n - k < min_leaf || lo == hi {
                    continue;
                }
                let right = total - left;
                let (nl, nr) = (F::lit(k as f64), F::lit((n - k) as f64));
                let gain = left * left / nl + right * right / nr - base;
                if gain > F::zero() && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = (lo + hi) / F::lit(2.0);
                    // midpoint can round up to `hi` when the values are adjacent floats
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Cut {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}
