//! Residual prediction functions.
//!
//! [`ResidualPredictor`] is the pluggable regression used to predict leftover
//! signal from auxiliary residuals. The built-in [`RandomForest`] grows CART
//! regression trees on bootstrap resamples, choosing at each node the split
//! with the largest reduction in squared error among `mtry` randomly drawn
//! features. [`ZeroPredictor`] and [`LinearRefitPredictor`] exist to drive
//! the degenerate branch of the goodness-of-fit test.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrpError, Result};
use crate::linalg::OrthoBasis;
use crate::rng::{child_rng, GrpRng};

pub trait ResidualPredictor: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn fit(&mut self, x: ArrayView2<f64>, r: ArrayView1<f64>) -> Result<()>;
    fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// `None` grows until nodes are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means `max(1, floor(p / 3))`.
    pub mtry: Option<usize>,
    /// Resample size as a fraction of `n`, drawn with replacement.
    pub bootstrap_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            num_trees: 500,
            max_depth: None,
            min_leaf: 5,
            mtry: None,
            bootstrap_fraction: 1.0,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or((p / 3).max(1))
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.num_trees < 1 {
            return Err(GrpError::InvalidInput("num_trees must be at least 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(GrpError::InvalidInput("min_leaf must be at least 1".into()));
        }
        let m = self.mtry_for(p);
        if m < 1 || m > p {
            return Err(GrpError::InvalidInput(format!("mtry {m} must lie in 1..={p}")));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction.is_finite()) {
            return Err(GrpError::InvalidInput("bootstrap_fraction must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    r: ArrayView1<'a, f64>,
    cfg: &'a ForestConfig,
    mtry: usize,
    rng: GrpRng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let m = idx.len();
        let sum: f64 = idx.iter().map(|&i| self.r[i]).sum();
        let mean = sum / m as f64;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));

        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        let first = self.r[idx[0]];
        let pure = idx.iter().all(|&i| self.r[i] == first);
        if !depth_ok || pure || m < 2 * self.cfg.min_leaf {
            return slot;
        }
        let Some(best) = self.best_split(idx, sum) else {
            return slot;
        };

        let mut lo = 0;
        for k in 0..m {
            if self.x[[idx[k], best.feature]] <= best.threshold {
                idx.swap(lo, k);
                lo += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(lo);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&mut self, idx: &[usize], sum: f64) -> Option<BestSplit> {
        let m = idx.len();
        let p = self.x.ncols();
        let mut features = sample(&mut self.rng, p, self.mtry).into_vec();
        features.sort_unstable();

        let sum_sq: f64 = idx.iter().map(|&i| self.r[i] * self.r[i]).sum();
        let total_ss = sum_sq - sum * sum / m as f64;
        let min_gain = 1e-12 * total_ss.abs().max(f64::MIN_POSITIVE);
        let min_leaf = self.cfg.min_leaf;
        let mut best: Option<BestSplit> = None;

        for f in features {
            self.scratch.clear();
            self.scratch.extend(idx.iter().map(|&i| (self.x[[i, f]], self.r[i])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.scratch[0].0 == self.scratch[m - 1].0 {
                continue;
            }
            let mut left_sum = 0.0;
            for k in 1..m {
                left_sum += self.scratch[k - 1].1;
                if k < min_leaf || m - k < min_leaf {
                    continue;
                }
                let (lv, rv) = (self.scratch[k - 1].0, self.scratch[k].0);
                if lv == rv {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (m - k) as f64
                    - sum * sum / m as f64;
                let better = match &best {
                    None => gain > min_gain,
                    Some(b) => gain > b.gain,
                };
                if better {
                    let mut threshold = 0.5 * (lv + rv);
                    if threshold >= rv {
                        threshold = lv;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}

fn grow_tree(x: ArrayView2<f64>, r: ArrayView1<f64>, cfg: &ForestConfig, tree_index: u64) -> Tree {
    let n = x.nrows();
    let mut rng = child_rng(cfg.seed, tree_index);
    let size = ((cfg.bootstrap_fraction * n as f64).round() as usize).max(1);
    let mut idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
    let mut g = Grower {
        x,
        r,
        cfg,
        mtry: cfg.mtry_for(x.ncols()),
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(size),
    };
    g.grow(&mut idx, 0);
    Tree { nodes: g.nodes }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    config: ForestConfig,
    trees: Vec<Tree>,
    ncols: usize,
}

impl RandomForest {
    pub fn new(config: ForestConfig) -> Self {
        RandomForest {
            config,
            trees: Vec::new(),
            ncols: 0,
        }
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }
}

impl ResidualPredictor for RandomForest {
    fn name(&self) -> &'static str {
        "forest"
    }

    fn fit(&mut self, x: ArrayView2<f64>, r: ArrayView1<f64>) -> Result<()> {
        let (n, p) = x.dim();
        if n != r.len() {
            return Err(GrpError::DimensionMismatch(format!("X has {n} rows, targets {}", r.len())));
        }
        if n < 2 {
            return Err(GrpError::InvalidInput(format!("need at least 2 rows, got {n}")));
        }
        self.config.validate(p)?;
        let cfg = &self.config;
        self.trees = (0..cfg.num_trees as u64)
            .into_par_iter()
            .map(|t| grow_tree(x, r, cfg, t))
            .collect();
        self.ncols = p;
        Ok(())
    }

    fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
        if self.trees.is_empty() {
            return Err(GrpError::NotFitted);
        }
        check_columns(self.ncols, x_new)?;
        let t = self.trees.len() as f64;
        let out: Vec<f64> = (0..x_new.nrows())
            .into_par_iter()
            .map(|i| {
                let row = x_new.row(i);
                self.trees.iter().map(|tree| tree.predict_row(row)).sum::<f64>() / t
            })
            .collect();
        Ok(Array1::from(out))
    }
}

fn check_columns(expected: usize, x_new: ArrayView2<f64>) -> Result<()> {
    if x_new.ncols() != expected {
        return Err(GrpError::DimensionMismatch(format!(
            "predictor trained on {expected} columns, got {}",
            x_new.ncols()
        )));
    }
    Ok(())
}

pub fn forest_fit(x: ArrayView2<f64>, r: ArrayView1<f64>, config: &ForestConfig) -> Result<RandomForest> {
    let mut f = RandomForest::new(config.clone());
    f.fit(x, r)?;
    Ok(f)
}

pub fn forest_predict(forest: &RandomForest, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
    forest.predict(x_new)
}

/// Predicts zero everywhere.
#[derive(Debug, Clone, Default)]
pub struct ZeroPredictor {
    ncols: Option<usize>,
}

impl ResidualPredictor for ZeroPredictor {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn fit(&mut self, x: ArrayView2<f64>, r: ArrayView1<f64>) -> Result<()> {
        if x.nrows() != r.len() {
            return Err(GrpError::DimensionMismatch(format!("X has {} rows, targets {}", x.nrows(), r.len())));
        }
        self.ncols = Some(x.ncols());
        Ok(())
    }

    fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_columns(self.ncols.ok_or(GrpError::NotFitted)?, x_new)?;
        Ok(Array1::zeros(x_new.nrows()))
    }
}

/// Least-squares fit of the residuals on an intercept and all columns.
#[derive(Debug, Clone, Default)]
pub struct LinearRefitPredictor {
    coef: Option<(f64, Array1<f64>)>,
}

impl ResidualPredictor for LinearRefitPredictor {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn fit(&mut self, x: ArrayView2<f64>, r: ArrayView1<f64>) -> Result<()> {
        let (n, p) = x.dim();
        if n != r.len() {
            return Err(GrpError::DimensionMismatch(format!("X has {n} rows, targets {}", r.len())));
        }
        let mut design = ndarray::Array2::ones((n, p + 1));
        design.slice_mut(ndarray::s![.., 1..]).assign(&x);
        let c = OrthoBasis::new(design.view()).least_squares(r);
        self.coef = Some((c[0], c.slice(ndarray::s![1..]).to_owned()));
        Ok(())
    }

    fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
        let (c0, c) = self.coef.as_ref().ok_or(GrpError::NotFitted)?;
        check_columns(c.len(), x_new)?;
        Ok(x_new.dot(c) + *c0)
    }
}

/// Predictor choice, resolvable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    Forest(ForestConfig),
    Zero,
    LinearRefit,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec::Forest(ForestConfig::default())
    }
}

impl PredictorSpec {
    pub const NAMES: [&'static str; 3] = ["forest", "zero", "linear"];

    pub fn from_name(name: &str, forest: ForestConfig) -> Result<Self> {
        match name {
            "forest" | "rf" => Ok(PredictorSpec::Forest(forest)),
            "zero" => Ok(PredictorSpec::Zero),
            "linear" => Ok(PredictorSpec::LinearRefit),
            other => Err(GrpError::InvalidInput(format!(
                "unknown predictor '{other}'; available: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    /// Fresh, unfitted predictor. A forest's seed is replaced by `seed`.
    pub fn build(&self, seed: u64) -> Box<dyn ResidualPredictor> {
        match self {
            PredictorSpec::Forest(cfg) => Box::new(RandomForest::new(ForestConfig {
                seed,
                ..cfg.clone()
            })),
            PredictorSpec::Zero => Box::new(ZeroPredictor::default()),
            PredictorSpec::LinearRefit => Box::new(LinearRefitPredictor::default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::{array, Array2, ShapeBuilder};
    use rand_distr::StandardNormal;

    fn normal_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from_seed(seed);
        Array2::from_shape_simple_fn((n, p).f(), || rng.sample::<f64, _>(StandardNormal))
    }

    fn small_cfg(seed: u64) -> ForestConfig {
        ForestConfig {
            num_trees: 50,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = normal_matrix(40, 3, 1);
        let r = Array1::from_elem(40, 2.5);
        let f = forest_fit(x.view(), r.view(), &small_cfg(1)).unwrap();
        let pred = forest_predict(&f, normal_matrix(7, 3, 2).view()).unwrap();
        assert!(pred.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let pred = forest_predict(&f, x.view()).unwrap();
        assert!(pred.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn depth_zero_single_tree_is_resample_mean() {
        let x = normal_matrix(30, 2, 3);
        let r = normal_matrix(30, 1, 4).column(0).to_owned();
        let cfg = ForestConfig { num_trees: 1, max_depth: Some(0), seed: 9, ..Default::default() };
        let f = forest_fit(x.view(), r.view(), &cfg).unwrap();
        // replay the resample draw
        let mut rng = child_rng(9, 0);
        let idx: Vec<usize> = (0..30).map(|_| rng.random_range(0..30)).collect();
        let mean = idx.iter().map(|&i| r[i]).sum::<f64>() / 30.0;
        let pred = f.predict(normal_matrix(5, 2, 5).view()).unwrap();
        assert!(pred.iter().all(|&v| v == mean));
    }

    #[test]
    fn constant_design_gives_stumps() {
        let x = Array2::from_elem((20, 2), 1.0);
        let r = normal_matrix(20, 1, 6).column(0).to_owned();
        let f = forest_fit(x.view(), r.view(), &small_cfg(2)).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn step_function_beats_mean() {
        let (n, p) = (500, 5);
        let x = normal_matrix(n, p, 7);
        let r = x.column(0).mapv(|v| f64::from(v > 0.0));
        let f = forest_fit(x.view(), r.view(), &small_cfg(3)).unwrap();
        let pred = f.predict(x.view()).unwrap();
        let mse = (&pred - &r).mapv(|v| v * v).mean().unwrap();
        let m = r.mean().unwrap();
        let var = r.mapv(|v| (v - m) * (v - m)).mean().unwrap();
        assert!(mse < var, "mse {mse} var {var}");
    }

    #[test]
    fn prediction_shape_and_duplicates() {
        let x = normal_matrix(50, 3, 8);
        let r = normal_matrix(50, 1, 9).column(0).to_owned();
        let f = forest_fit(x.view(), r.view(), &small_cfg(4)).unwrap();
        let row = x.row(3).to_owned();
        let dup = ndarray::stack![ndarray::Axis(0), row, row];
        let p = f.predict(dup.view()).unwrap();
        assert_eq!(p[0], p[1]);
        assert_eq!(f.predict(x.slice(ndarray::s![0..1, ..])).unwrap().len(), 1);
        assert!(f.predict(normal_matrix(2, 4, 1).view()).is_err());
    }

    #[test]
    fn predictions_within_target_range_and_seeded() {
        let x = normal_matrix(80, 4, 10);
        let r = normal_matrix(80, 1, 11).column(0).to_owned();
        let a = forest_fit(x.view(), r.view(), &small_cfg(5)).unwrap();
        let b = forest_fit(x.view(), r.view(), &small_cfg(5)).unwrap();
        let xn = normal_matrix(30, 4, 12) * 3.0;
        let (pa, pb) = (a.predict(xn.view()).unwrap(), b.predict(xn.view()).unwrap());
        assert_eq!(pa, pb);
        let (lo, hi) = r.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(pa.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        let c = forest_fit(x.view(), r.view(), &small_cfg(6)).unwrap();
        assert_ne!(c.predict(xn.view()).unwrap(), pa);
    }

    #[test]
    fn min_leaf_respected() {
        let x = normal_matrix(60, 2, 13);
        let r = normal_matrix(60, 1, 14).column(0).to_owned();
        let cfg = ForestConfig { num_trees: 1, min_leaf: 7, bootstrap_fraction: 1.0, seed: 1, ..Default::default() };
        let f = forest_fit(x.view(), r.view(), &cfg).unwrap();
        // count resampled rows reaching each leaf
        let mut rng = child_rng(1, 0);
        let idx: Vec<usize> = (0..60).map(|_| rng.random_range(0..60)).collect();
        let mut counts = std::collections::HashMap::new();
        for &i in &idx {
            let row = x.row(i);
            let mut k = 0;
            while let Node::Split { feature, threshold, left, right } = f.trees[0].nodes[k] {
                k = if row[feature] <= threshold { left } else { right };
            }
            *counts.entry(k).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 7));
    }

    #[test]
    fn config_validation() {
        let x = normal_matrix(10, 3, 1);
        let r = Array1::zeros(10);
        assert!(forest_fit(x.view(), r.view(), &ForestConfig { num_trees: 0, ..Default::default() }).is_err());
        assert!(forest_fit(x.view(), r.view(), &ForestConfig { mtry: Some(4), ..Default::default() }).is_err());
        assert!(forest_fit(x.view(), r.view(), &ForestConfig { min_leaf: 0, ..Default::default() }).is_err());
        assert!(forest_fit(x.slice(ndarray::s![0..1, ..]), r.slice(ndarray::s![0..1]), &ForestConfig::default()).is_err());
    }

    #[test]
    fn zero_and_linear_predictors() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0]];
        let r = array![1.0, 2.0, 3.0, 0.0]; // x1 + 2 x2
        let mut z = PredictorSpec::Zero.build(0);
        assert!(z.predict(x.view()).is_err());
        z.fit(x.view(), r.view()).unwrap();
        assert_eq!(z.predict(x.view()).unwrap(), Array1::<f64>::zeros(4));
        let mut l = PredictorSpec::from_name("linear", ForestConfig::default()).unwrap().build(0);
        l.fit(x.view(), r.view()).unwrap();
        let p = l.predict(array![[3.0, 3.0]].view()).unwrap();
        assert!((p[0] - 9.0).abs() < 1e-10);
        assert!(PredictorSpec::from_name("boosted", ForestConfig::default()).is_err());
    }
}
