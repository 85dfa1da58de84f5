//! K-fold cross-validation over a geometric λ grid.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrpError, Result};
use crate::glm::{mean_deviance, select_rows, GlmFamily};
use crate::lasso::{lambda_max, path_inner, LassoFit, LassoOptions};
use crate::rng::child_rng;

const MAX_FOLD_DRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    MinDeviance,
    OneSe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub num_folds: usize,
    pub lambda_grid_size: usize,
    pub lambda_min_ratio: f64,
    pub selection_rule: SelectionRule,
    pub lasso: LassoOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            num_folds: 10,
            lambda_grid_size: 100,
            lambda_min_ratio: 0.01,
            selection_rule: SelectionRule::MinDeviance,
            lasso: LassoOptions::default(),
        }
    }
}

impl CvConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.num_folds < 2 {
            return Err(GrpError::InvalidInput(format!(
                "num_folds must be at least 2, got {}",
                self.num_folds
            )));
        }
        if n < self.num_folds {
            return Err(GrpError::InvalidInput(format!(
                "{} folds requested for {n} observations",
                self.num_folds
            )));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(GrpError::InvalidInput(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        if self.lambda_grid_size < 1 {
            return Err(GrpError::InvalidInput("lambda_grid_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub fit: LassoFit,
    pub lambda_chosen: f64,
    /// Grid entries that every fold reached.
    pub lambdas: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub fold_of: Vec<usize>,
}

/// Geometric grid from `lmax` down to `lmax * min_ratio`.
pub fn lambda_grid(lmax: f64, size: usize, min_ratio: f64) -> Vec<f64> {
    if size == 1 {
        return vec![lmax];
    }
    let step = min_ratio.ln() / (size - 1) as f64;
    (0..size).map(|k| lmax * (step * k as f64).exp()).collect()
}

fn assign_folds(n: usize, k: usize, seed: u64, attempt: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut child_rng(seed, attempt));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    fold_of
}

fn training_sets_have_both_classes(y: ArrayView1<f64>, fold_of: &[usize], k: usize) -> bool {
    let total_ones = y.iter().filter(|&&v| v == 1.0).count();
    let n = y.len();
    (0..k).all(|f| {
        let (mut size, mut ones) = (0, 0);
        for (i, &fo) in fold_of.iter().enumerate() {
            if fo == f {
                size += 1;
                if y[i] == 1.0 {
                    ones += 1;
                }
            }
        }
        let train_ones = total_ones - ones;
        let train_n = n - size;
        train_ones > 0 && train_ones < train_n
    })
}

/// Cross-validated GLM Lasso. The λ grid comes from the full data; each
/// fold's path is scored by held-out mean deviance, the rule picks an index
/// (ties go to the larger λ), and the full data are refitted along the grid
/// down to that index.
pub fn glm_lasso_cv(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: GlmFamily,
    config: &CvConfig,
    seed: u64,
) -> Result<CvResult> {
    let n = x.nrows();
    if y.len() != n {
        return Err(GrpError::DimensionMismatch(format!("design has {n} rows, response {}", y.len())));
    }
    config.validate(n)?;
    family.validate_response(y)?;
    let k = config.num_folds;

    let mut fold_of = None;
    for attempt in 0..MAX_FOLD_DRAWS as u64 {
        let f = assign_folds(n, k, seed, attempt);
        if family != GlmFamily::Logistic || training_sets_have_both_classes(y, &f, k) {
            fold_of = Some(f);
            break;
        }
    }
    let fold_of = fold_of.ok_or_else(|| GrpError::Resampling {
        attempts: MAX_FOLD_DRAWS,
        reason: "a cross-validation training set had a single response class".into(),
    })?;

    let lmax = lambda_max(x, y, family, config.lasso.intercept);
    let lmax = if lmax > 0.0 { lmax } else { 1e-8 };
    let grid = lambda_grid(lmax, config.lambda_grid_size, config.lambda_min_ratio);

    let fold_devs: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<Vec<f64>> {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let xt = select_rows(x, &train);
            let yt = Array1::from_iter(train.iter().map(|&i| y[i]));
            let xv = select_rows(x, &test);
            let yv = Array1::from_iter(test.iter().map(|&i| y[i]));
            let path = path_inner(xt.view(), yt.view(), family, &grid, &config.lasso, true)?;
            Ok(path
                .iter()
                .map(|fit| mean_deviance(family, yv.view(), fit.linear_predictor(xv.view()).view()))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let len = fold_devs.iter().map(Vec::len).min().unwrap_or(0).max(1);
    let kf = k as f64;
    let mut cv_mean = Vec::with_capacity(len);
    let mut cv_se = Vec::with_capacity(len);
    for idx in 0..len {
        let vals: Vec<f64> = fold_devs.iter().map(|d| d[idx.min(d.len() - 1)]).collect();
        let m = vals.iter().sum::<f64>() / kf;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (kf - 1.0);
        cv_mean.push(m);
        cv_se.push((var / kf).sqrt());
    }

    let mut best = 0;
    for idx in 1..len {
        if cv_mean[idx] < cv_mean[best] {
            best = idx;
        }
    }
    let chosen = match config.selection_rule {
        SelectionRule::MinDeviance => best,
        SelectionRule::OneSe => {
            let bound = cv_mean[best] + cv_se[best];
            (0..=best).find(|&i| cv_mean[i] <= bound).unwrap_or(best)
        }
    };

    let lambdas = grid[..len].to_vec();
    let full = path_inner(x, y, family, &lambdas[..=chosen], &config.lasso, false)?;
    let fit = full.into_iter().last().expect("non-empty path");
    Ok(CvResult {
        lambda_chosen: lambdas[chosen],
        fit,
        lambdas,
        cv_mean,
        cv_se,
        fold_of,
    })
}
