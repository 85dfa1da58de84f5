//! Group significance test with a Gaussian multiplier bootstrap.
//!
//! For `H0: β_G = 0`: fit the GLM Lasso of `Y` on `X_{-G}`, form Pearson
//! residuals `R` with weights `d_i^2 = μ'(η_i)`, build one direction per
//! `j ∈ G` from the weighted square-root Lasso of `X_j` on `X_{-G}`, and
//! compare `T = max_j |w_j'R|` with draws
//! `T^b = max_j |Σ_i w_{j,i} R_i e_i^b|`, `e^b ~ N(0, I)`.

use ndarray::{Array2, ArrayView1, ShapeBuilder};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::CvConfig;
use crate::error::{GrpError, Result};
use crate::glm::{pearson_residuals, select_columns, Dataset, GlmFamily, WeightDiag};
use crate::gof::fit_lasso;
use crate::rng::{child_rng, derive_seed, stream};
use crate::sqrt_lasso::{default_lambda, nodewise_sqrt_lasso, Direction};
use crate::{LambdaChoice, SqrtLambdaChoice};

pub const MAX_BOOTSTRAP_DRAWS: usize = 100_000;
const DRAW_BLOCK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTestConfig {
    /// Zero-based column indices under test.
    pub group: Vec<usize>,
    pub bootstrap_draws: usize,
    pub lambda: LambdaChoice,
    pub lambda_nw: SqrtLambdaChoice,
    pub intercept: bool,
    #[serde(skip)]
    pub cv: CvConfig,
    pub seed: u64,
}

impl GroupTestConfig {
    pub fn new(group: Vec<usize>) -> Self {
        GroupTestConfig {
            group,
            bootstrap_draws: 1000,
            lambda: LambdaChoice::Cv,
            lambda_nw: SqrtLambdaChoice::DefaultRate,
            intercept: true,
            cv: CvConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStat {
    pub feature: usize,
    /// `|w_j'R|`.
    pub stat: f64,
    /// `||X_{-G}' D w_j||_∞`.
    pub near_ortho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTestResult {
    pub statistic: f64,
    pub per_feature_stats: Vec<FeatureStat>,
    pub bootstrap_stats: Vec<f64>,
    pub p_value: f64,
    pub degenerate_features: Vec<usize>,
    pub lambda: f64,
    pub lambda_nw: f64,
    pub support_rest: Vec<usize>,
}

/// Observed maximum statistic, per-direction values and bootstrap draws.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    pub statistic: f64,
    pub per_direction: Vec<f64>,
    pub draws: Vec<f64>,
}

/// Draw `b` uses its own generator seeded from `(seed, b)`, so the result
/// does not depend on how draws are scheduled.
pub fn multiplier_bootstrap(
    directions: &[Direction],
    residuals: ArrayView1<f64>,
    draws: usize,
    seed: u64,
) -> Result<BootstrapOutcome> {
    if directions.is_empty() {
        return Err(GrpError::InvalidInput("no directions supplied".into()));
    }
    if draws < 1 || draws > MAX_BOOTSTRAP_DRAWS {
        return Err(GrpError::InvalidInput(format!(
            "bootstrap draws must lie in 1..={MAX_BOOTSTRAP_DRAWS}, got {draws}"
        )));
    }
    let n = residuals.len();
    if let Some(d) = directions.iter().find(|d| d.len() != n) {
        return Err(GrpError::DimensionMismatch(format!(
            "direction of length {} for {n} residuals",
            d.len()
        )));
    }
    let mut products = Array2::<f64>::zeros((n, directions.len()).f());
    for (k, d) in directions.iter().enumerate() {
        products.column_mut(k).assign(&(&d.view() * &residuals));
    }
    let per_direction: Vec<f64> = products.columns().into_iter().map(|c| c.sum().abs()).collect();
    let statistic = per_direction.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let blocks: Vec<Vec<f64>> = (0..draws.div_ceil(DRAW_BLOCK))
        .into_par_iter()
        .map(|blk| {
            let start = blk * DRAW_BLOCK;
            let end = (start + DRAW_BLOCK).min(draws);
            let mut e = Array2::<f64>::zeros((end - start, n));
            for (row, b) in (start..end).enumerate() {
                let mut rng = child_rng(seed, b as u64);
                for v in e.row_mut(row).iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
            e.dot(&products)
                .rows()
                .into_iter()
                .map(|r| r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .collect()
        })
        .collect();
    Ok(BootstrapOutcome {
        statistic,
        per_direction,
        draws: blocks.into_iter().flatten().collect(),
    })
}

/// `(1 + #{T^b >= T}) / (B + 1)`.
pub fn bootstrap_p_value(statistic: f64, draws: &[f64]) -> f64 {
    let exceed = draws.iter().filter(|&&t| t >= statistic).count();
    (1 + exceed) as f64 / (draws.len() + 1) as f64
}

/// Smallest order statistic `t` with `#{T^b <= t} / B >= alpha`.
pub fn bootstrap_quantile(draws: &[f64], alpha: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(GrpError::InvalidInput("no bootstrap draws".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GrpError::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let b = s.len() as f64;
    let k = (0..s.len()).collect::<Vec<_>>().partition_point(|&i| ((i + 1) as f64 / b) < alpha);
    Ok(s[k.min(s.len() - 1)])
}

fn validate_group(group: &[usize], p: usize) -> Result<Vec<usize>> {
    if group.is_empty() {
        return Err(GrpError::InvalidInput("group is empty".into()));
    }
    let mut g = group.to_vec();
    g.sort_unstable();
    g.dedup();
    if let Some(&j) = g.iter().find(|&&j| j >= p) {
        return Err(GrpError::InvalidInput(format!("group index {j} out of range for {p} columns")));
    }
    if g.len() == p {
        return Err(GrpError::InvalidInput(
            "group covers every column; no complement model remains".into(),
        ));
    }
    Ok(g)
}

pub fn group_test(data: &Dataset, family: GlmFamily, config: &GroupTestConfig) -> Result<GroupTestResult> {
    family.validate_response(data.y())?;
    let (n, p) = (data.n(), data.p());
    let group = validate_group(&config.group, p)?;
    if config.bootstrap_draws < 1 || config.bootstrap_draws > MAX_BOOTSTRAP_DRAWS {
        return Err(GrpError::InvalidInput(format!(
            "bootstrap draws must lie in 1..={MAX_BOOTSTRAP_DRAWS}, got {}",
            config.bootstrap_draws
        )));
    }
    let rest: Vec<usize> = (0..p).filter(|j| group.binary_search(j).is_err()).collect();
    let x_rest = select_columns(data.x(), &rest);
    let y = data.y();

    let fit = fit_lasso(
        x_rest.view(),
        y,
        family,
        config.lambda,
        &config.cv,
        config.intercept,
        derive_seed(config.seed, stream::CV_MAIN),
    )?;
    let coef = fit.coefficients();
    let weights = WeightDiag::from_fit(family, x_rest.view(), &coef);
    let resid = pearson_residuals(x_rest.view(), y, family, &coef, &weights)?;

    let lambda_nw = match config.lambda_nw {
        SqrtLambdaChoice::Fixed(l) => l,
        SqrtLambdaChoice::DefaultRate => default_lambda(rest.len(), n),
    };
    let x = data.x();
    let fits: Vec<(usize, Result<_>)> = group
        .par_iter()
        .map(|&j| {
            (
                j,
                nodewise_sqrt_lasso(x_rest.view(), x.column(j), &weights, lambda_nw, config.intercept),
            )
        })
        .collect();

    let mut directions = Vec::with_capacity(group.len());
    let mut kept = Vec::with_capacity(group.len());
    let mut degenerate_features = Vec::new();
    for (j, res) in fits {
        match res {
            Ok(nw) => {
                kept.push((j, nw.near_ortho));
                directions.push(nw.direction);
            }
            Err(GrpError::Degenerate(msg)) => {
                log::warn!("skipping feature {j}: {msg}");
                degenerate_features.push(j);
            }
            Err(e) => return Err(e),
        }
    }
    if directions.is_empty() {
        return Err(GrpError::Degenerate("every nodewise regression in the group is degenerate".into()));
    }

    let boot = multiplier_bootstrap(
        &directions,
        resid.view(),
        config.bootstrap_draws,
        derive_seed(config.seed, stream::BOOTSTRAP),
    )?;
    let p_value = bootstrap_p_value(boot.statistic, &boot.draws);
    let per_feature_stats = kept
        .into_iter()
        .zip(boot.per_direction.iter())
        .map(|((feature, near_ortho), &stat)| FeatureStat {
            feature,
            stat,
            near_ortho,
        })
        .collect();
    Ok(GroupTestResult {
        statistic: boot.statistic,
        per_feature_stats,
        bootstrap_stats: boot.draws,
        p_value,
        degenerate_features,
        lambda: fit.lambda,
        lambda_nw,
        support_rest: fit.support.iter().map(|&k| rest[k]).collect(),
    })
}
