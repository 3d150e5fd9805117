//! Extremely randomized regression trees.
//!
//! Every tree sees the full training set. At each node a random subset of
//! the non-constant features is visited; each visited feature gets a single
//! uniform threshold in `[min, max)` of its node values, and the candidate
//! with the smallest summed child squared error wins. Rows with `x <= t` go
//! left.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::check_design;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features visited per node; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 12,
            min_samples_leaf: 2,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { value, samples } => Some((value, samples)),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub seed: u64,
    pub n_features: usize,
}

/// Tree `i` draws from `derive_seed(seed, [i])`, so trees are independent of
/// build order.
pub fn fit_forest(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    check_design(x, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if params.n_trees == 0 || params.max_depth == 0 || params.min_samples_leaf == 0 {
        return Err(Error::invalid("n_trees, max_depth and min_samples_leaf must be positive"));
    }
    if x.nrows() < 2 * params.min_samples_leaf {
        return Err(Error::invalid(format!(
            "{} rows cannot be split with min_samples_leaf = {}",
            x.nrows(),
            params.min_samples_leaf
        )));
    }
    let d = x.ncols();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
        .clamp(1, d.max(1));

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut builder = TreeBuilder {
                x,
                y,
                params,
                max_features,
                rng: rng_from(derive_seed(seed, &[t as u64])),
                nodes: Vec::new(),
                features: (0..d).collect(),
            };
            let mut idx: Vec<usize> = (0..x.nrows()).collect();
            builder.grow(&mut idx, 0);
            Tree { nodes: builder.nodes }
        })
        .collect();

    Ok(ForestModel {
        trees,
        params: params.clone(),
        seed,
        n_features: d,
    })
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    params: &'a ForestParams,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            samples: idx.len(),
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let min_leaf = self.params.min_samples_leaf;
        let y0 = self.y[idx[0]];
        if depth >= self.params.max_depth
            || idx.len() < 2 * min_leaf
            || idx.iter().all(|&i| self.y[i] == y0)
        {
            return self.leaf(idx);
        }

        let Some((feature, threshold)) = self.best_split(idx) else {
            return self.leaf(idx);
        };

        // Partition in place: `x <= threshold` first.
        let mut split = 0;
        for k in 0..idx.len() {
            if self.x[[idx[k], feature]] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }

        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0, samples: 0 });
        let (lo, hi) = idx.split_at_mut(split);
        let left = self.grow(lo, depth + 1);
        let right = self.grow(hi, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let min_leaf = self.params.min_samples_leaf;
        self.features.shuffle(&mut self.rng);
        let mut visited = 0;
        let mut best: Option<(f64, usize, f64)> = None;

        for fi in 0..self.features.len() {
            if visited == self.max_features {
                break;
            }
            let f = self.features[fi];
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.x[[i, f]];
                (lo.min(v), hi.max(v))
            });
            if hi <= lo {
                // Constant at this node; does not count towards the budget.
                continue;
            }
            visited += 1;
            let mut t = lo + self.rng.gen::<f64>() * (hi - lo);
            if t >= hi {
                t = lo;
            }

            let (mut nl, mut sl, mut ql) = (0usize, 0.0, 0.0);
            let (mut nr, mut sr, mut qr) = (0usize, 0.0, 0.0);
            for &i in idx {
                let y = self.y[i];
                if self.x[[i, f]] <= t {
                    nl += 1;
                    sl += y;
                    ql += y * y;
                } else {
                    nr += 1;
                    sr += y;
                    qr += y * y;
                }
            }
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let sse = (ql - sl * sl / nl as f64) + (qr - sr * sr / nr as f64);
            if best.map_or(true, |(b, _, _)| sse < b) {
                best = Some((sse, f, t));
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

impl ForestModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: (x.nrows(), self.n_features),
                found: x.dim(),
            });
        }
        let n = self.trees.len() as f64;
        Ok(x
            .outer_iter()
            .map(|row| self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / n)
            .collect())
    }
}

pub fn predict_forest(model: &ForestModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn wavy(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = rng_from(seed);
        let x = Array2::from_shape_simple_fn((n, 3), || rng.gen::<f64>());
        let y = x.rows().into_iter().map(|r| (r[0] * 6.0).sin() + r[1]).collect();
        (x, y)
    }

    #[test]
    fn constant_target_gives_constant_prediction() {
        let (x, _) = wavy(40, 1);
        let y = Array1::from_elem(40, 0.42);
        let m = fit_forest(x.view(), y.view(), &ForestParams::default(), 3).unwrap();
        let p = m.predict(x.view()).unwrap();
        assert!(p.iter().all(|&v| (v - 0.42).abs() < 1e-12));
    }

    #[test]
    fn step_function_with_structural_gap() {
        // Values sit at exactly -1 and +1, so any threshold in [-1, 1)
        // separates the classes.
        let x = array![[-1.0], [-1.0], [-1.0], [1.0], [1.0], [1.0]];
        let y = array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let params = ForestParams {
            n_trees: 1,
            max_depth: 1,
            min_samples_leaf: 1,
            max_features: None,
        };
        for seed in 0..20 {
            let m = fit_forest(x.view(), y.view(), &params, seed).unwrap();
            assert_eq!(m.trees[0].nodes.len(), 3);
            let p = m.predict(array![[-3.0], [-1.0], [1.0], [3.0]].view()).unwrap();
            assert_eq!(p.to_vec(), vec![0.0, 0.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn leaves_respect_min_samples() {
        let (x, y) = wavy(120, 4);
        let params = ForestParams {
            n_trees: 10,
            min_samples_leaf: 5,
            ..Default::default()
        };
        let m = fit_forest(x.view(), y.view(), &params, 9).unwrap();
        for t in &m.trees {
            assert!(t.leaves().all(|(_, s)| s >= 5));
            assert_eq!(t.leaves().map(|(_, s)| s).sum::<usize>(), 120);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, y) = wavy(80, 2);
        let a = fit_forest(x.view(), y.view(), &ForestParams::default(), 5).unwrap();
        let b = fit_forest(x.view(), y.view(), &ForestParams::default(), 5).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(x.view(), y.view(), &ForestParams::default(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn learns_signal() {
        let (x, y) = wavy(400, 7);
        let m = fit_forest(x.view(), y.view(), &ForestParams::default(), 1).unwrap();
        let (xt, yt) = wavy(200, 8);
        let p = m.predict(xt.view()).unwrap();
        let mse = (&p - &yt).mapv(|v| v * v).mean().unwrap();
        let var = yt.var(0.0);
        assert!(mse < 0.2 * var, "mse {mse} var {var}");
    }

    #[test]
    fn too_few_rows() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = array![1.0, 2.0, 3.0];
        assert!(fit_forest(x.view(), y.view(), &ForestParams::default(), 0).is_err());
    }
}
