//! Goodness-of-fit test by generalized residual prediction.
//!
//! 1. Split the rows into a main and an auxiliary half.
//! 2. Fit the GLM Lasso on each half.
//! 3. Fit the residual predictor to the auxiliary raw residuals and
//!    evaluate it on the main design, giving `f(X)`.
//! 4. Weights `d_i^2 = μ'(x_i' β_A)` on the main rows.
//! 5. Weighted square-root Lasso of `f(X)` on `X`; with exact
//!    orthogonalization the main-fit support is left unpenalized, and when
//!    the GLM fits carry an intercept the constant column is too.
//! 6. `w` = unit residual, `R = D^{-1}(Y - μ(X β))`, `T = w'R`,
//!    `p = 1 - Φ(T)`.

use ndarray::{Array2, ArrayView1, ArrayView2, ShapeBuilder};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cv::{glm_lasso_cv, CvConfig};
use crate::error::{GrpError, Result};
use crate::forest::PredictorSpec;
use crate::glm::{pearson_residuals, Dataset, GlmFamily, WeightDiag};
use crate::lasso::{glm_lasso, LassoFit};
use crate::rng::{child_rng, derive_seed, stream};
use crate::sim::McScenario;
use crate::sqrt_lasso::{default_lambda, direction_from_sqrt_lasso, sqrt_lasso};
use crate::stats::normal_sf;
use crate::{LambdaChoice, SqrtLambdaChoice};

const MAX_SPLIT_DRAWS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofConfig {
    /// Fraction of rows placed in the auxiliary sample.
    pub split_fraction: f64,
    pub lambda_main: LambdaChoice,
    pub lambda_aux: LambdaChoice,
    pub lambda_sq: SqrtLambdaChoice,
    pub predictor: PredictorSpec,
    pub exact_orthogonalization: bool,
    /// Report `2(1 - Φ(|T|))` instead of the one-sided p-value.
    pub two_sided: bool,
    pub intercept: bool,
    #[serde(skip)]
    pub cv: CvConfig,
    pub seed: u64,
}

impl Default for GofConfig {
    fn default() -> Self {
        GofConfig {
            split_fraction: 0.5,
            lambda_main: LambdaChoice::Cv,
            lambda_aux: LambdaChoice::Cv,
            lambda_sq: SqrtLambdaChoice::DefaultRate,
            predictor: PredictorSpec::default(),
            exact_orthogonalization: true,
            two_sided: false,
            intercept: true,
            cv: CvConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub main: Vec<usize>,
    pub aux: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    /// `T = w'R`; absent when the direction is degenerate.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub degenerate: bool,
    /// `||w||_∞`.
    pub direction_sup_norm: Option<f64>,
    /// `max_{j penalized} |x_j' D w|`.
    pub kkt_near_ortho: Option<f64>,
    /// `max_{j exempt} |x_j' D w| / ||D x_j||`.
    pub exempt_ortho: Option<f64>,
    pub support_main: Vec<usize>,
    pub lambda_main: f64,
    pub lambda_aux: f64,
    pub lambda_sq: f64,
    pub two_sided: bool,
    pub split_indices: SplitIndices,
}

fn split_rows(y: ArrayView1<f64>, family: GlmFamily, frac: f64, seed: u64) -> Result<SplitIndices> {
    let n = y.len();
    if !(frac > 0.0 && frac < 1.0) {
        return Err(GrpError::InvalidInput(format!("split_fraction must lie in (0, 1), got {frac}")));
    }
    let n_aux = (frac * n as f64).round() as usize;
    if n_aux < 2 || n - n_aux < 2 {
        return Err(GrpError::InvalidInput(format!(
            "split of {n} rows at fraction {frac} leaves fewer than 2 rows in a half"
        )));
    }
    let two_classes = |idx: &[usize]| {
        let ones = idx.iter().filter(|&&i| y[i] == 1.0).count();
        ones > 0 && ones < idx.len()
    };
    for attempt in 0..MAX_SPLIT_DRAWS {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut child_rng(seed, attempt));
        let mut aux = perm[..n_aux].to_vec();
        let mut main = perm[n_aux..].to_vec();
        aux.sort_unstable();
        main.sort_unstable();
        if family != GlmFamily::Logistic || (two_classes(&aux) && two_classes(&main)) {
            return Ok(SplitIndices { main, aux });
        }
    }
    Err(GrpError::Resampling {
        attempts: MAX_SPLIT_DRAWS as usize,
        reason: "sample split left a half with a single response class".into(),
    })
}

pub(crate) fn fit_lasso(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: GlmFamily,
    choice: LambdaChoice,
    cv: &CvConfig,
    intercept: bool,
    seed: u64,
) -> Result<LassoFit> {
    let mut cv = cv.clone();
    cv.lasso.intercept = intercept;
    match choice {
        LambdaChoice::Fixed(l) => glm_lasso(x, y, family, l, &cv.lasso),
        LambdaChoice::Cv => Ok(glm_lasso_cv(x, y, family, &cv, seed)?.fit),
    }
}

/// Prepends a constant column when `intercept` is set.
pub(crate) fn with_intercept_column(x: ArrayView2<f64>, intercept: bool) -> Array2<f64> {
    if !intercept {
        return x.to_owned();
    }
    let (n, p) = x.dim();
    let mut d = Array2::ones((n, p + 1).f());
    d.slice_mut(ndarray::s![.., 1..]).assign(&x);
    d
}

pub fn gof_test(data: &Dataset, family: GlmFamily, config: &GofConfig) -> Result<GofResult> {
    family.validate_response(data.y())?;
    let split = split_rows(
        data.y(),
        family,
        config.split_fraction,
        derive_seed(config.seed, stream::SPLIT),
    )?;
    debug_assert!(split.main.iter().all(|i| split.aux.binary_search(i).is_err()));
    let main = data.rows(&split.main)?;
    let aux = data.rows(&split.aux)?;
    let (x, y) = (main.x(), main.y());
    let (x_aux, y_aux) = (aux.x(), aux.y());
    let (n, p) = x.dim();

    let fit_main = fit_lasso(
        x,
        y,
        family,
        config.lambda_main,
        &config.cv,
        config.intercept,
        derive_seed(config.seed, stream::CV_MAIN),
    )?;
    let fit_aux = fit_lasso(
        x_aux,
        y_aux,
        family,
        config.lambda_aux,
        &config.cv,
        config.intercept,
        derive_seed(config.seed, stream::CV_AUX),
    )?;

    let eta_aux = fit_aux.linear_predictor(x_aux);
    let resid_aux = ndarray::Zip::from(&y_aux)
        .and(&eta_aux)
        .map_collect(|&yi, &e| yi - family.inverse_link(e));
    let mut predictor = config.predictor.build(derive_seed(config.seed, stream::PREDICTOR));
    predictor.fit(x_aux, resid_aux.view())?;
    let prediction = predictor.predict(x)?;

    let weights = WeightDiag::from_linear_predictor(family, fit_aux.linear_predictor(x).view());
    let lambda_sq = match config.lambda_sq {
        SqrtLambdaChoice::Fixed(l) => l,
        SqrtLambdaChoice::DefaultRate => default_lambda(p, n),
    };
    let offset = usize::from(config.intercept);
    let design = with_intercept_column(x, config.intercept);
    let mut exempt: Vec<usize> = (0..offset).collect();
    if config.exact_orthogonalization {
        exempt.extend(fit_main.support.iter().map(|&j| j + offset));
    }
    let sq = sqrt_lasso(design.view(), prediction.view(), &weights, lambda_sq, &exempt)?;

    let mut result = GofResult {
        statistic: None,
        p_value: None,
        degenerate: sq.degenerate,
        direction_sup_norm: None,
        kkt_near_ortho: None,
        exempt_ortho: None,
        support_main: fit_main.support.clone(),
        lambda_main: fit_main.lambda,
        lambda_aux: fit_aux.lambda,
        lambda_sq,
        two_sided: config.two_sided,
        split_indices: split,
    };
    if sq.degenerate {
        log::debug!("degenerate square-root lasso residual ({:e})", sq.residual_norm);
        return Ok(result);
    }
    let direction = direction_from_sqrt_lasso(&sq)?;
    let resid = pearson_residuals(x, y, family, &fit_main.coefficients(), &weights)?;
    let t = direction.view().dot(&resid);
    result.statistic = Some(t);
    result.p_value = Some(if config.two_sided {
        (2.0 * normal_sf(t.abs())).min(1.0)
    } else {
        normal_sf(t)
    });
    result.direction_sup_norm = Some(direction.sup_norm());
    result.kkt_near_ortho = Some(sq.penalized_ortho);
    result.exempt_ortho = Some(sq.exempt_ortho);
    Ok(result)
}

/// `T = w'R` for a given direction and residual vector.
pub fn gof_statistic(direction: ArrayView1<f64>, residuals: ArrayView1<f64>) -> f64 {
    direction.dot(&residuals)
}

/// Fraction of replications of `scenario` rejecting at `level`.
pub fn gof_power_point(scenario: &McScenario, level: f64, reps: usize, seed: u64) -> Result<f64> {
    Ok(crate::sim::run_mc(scenario, reps, level, seed)?.rejection_rate)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::ForestConfig;
    use crate::sim::{gen_glm_response, gen_toeplitz_design, Misspec};

    fn null_data(n: usize, p: usize, seed: u64) -> Dataset {
        let x = gen_toeplitz_design(n, p, 0.5, seed).unwrap();
        let mut beta = vec![0.0; p];
        beta[..3].fill(1.0);
        let y = gen_glm_response(x.view(), GlmFamily::Logistic, &beta, &Misspec::None, 0.0, seed + 1).unwrap();
        Dataset::for_family(x, y, GlmFamily::Logistic).unwrap()
    }

    fn quick_config(seed: u64) -> GofConfig {
        GofConfig {
            predictor: PredictorSpec::Forest(ForestConfig { num_trees: 40, ..Default::default() }),
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_predictor_is_degenerate() {
        let data = null_data(120, 10, 3);
        let cfg = GofConfig { predictor: PredictorSpec::Zero, ..quick_config(1) };
        let r = gof_test(&data, GlmFamily::Logistic, &cfg).unwrap();
        assert!(r.degenerate);
        assert!(r.p_value.is_none() && r.statistic.is_none());
    }

    #[test]
    fn zero_residuals_give_half() {
        assert_eq!(gof_statistic(ndarray::array![0.6, 0.8].view(), ndarray::array![0.0, 0.0].view()), 0.0);
        assert_eq!(normal_sf(0.0), 0.5);
    }

    #[test]
    fn result_invariants_and_determinism() {
        let data = null_data(200, 20, 5);
        let cfg = quick_config(9);
        let a = gof_test(&data, GlmFamily::Logistic, &cfg).unwrap();
        let b = gof_test(&data, GlmFamily::Logistic, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.degenerate);
        let t = a.statistic.unwrap();
        let p = a.p_value.unwrap();
        assert!((p - (1.0 - crate::stats::normal_cdf(t))).abs() < 1e-12);
        let n_main = a.split_indices.main.len() as f64;
        assert!(a.kkt_near_ortho.unwrap() <= n_main.sqrt() * a.lambda_sq + 1e-6);
        assert!(a.exempt_ortho.unwrap() <= 1e-8);
        assert_eq!(a.split_indices.main.len() + a.split_indices.aux.len(), 200);
        let c = gof_test(&data, GlmFamily::Logistic, &quick_config(10)).unwrap();
        assert_ne!(a.split_indices, c.split_indices);
    }

    #[test]
    fn two_sided_option() {
        let data = null_data(150, 8, 7);
        let one = gof_test(&data, GlmFamily::Logistic, &quick_config(2)).unwrap();
        let two = gof_test(&data, GlmFamily::Logistic, &GofConfig { two_sided: true, ..quick_config(2) }).unwrap();
        let t = one.statistic.unwrap();
        assert!((two.p_value.unwrap() - (2.0 * normal_sf(t.abs())).min(1.0)).abs() < 1e-15);
    }

    #[test]
    fn fixed_lambdas_and_gaussian_family() {
        let x = gen_toeplitz_design(100, 6, 0.3, 1).unwrap();
        let y = gen_glm_response(x.view(), GlmFamily::Gaussian, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0], &Misspec::None, 0.0, 2).unwrap();
        let data = Dataset::new(x, y).unwrap();
        let cfg = GofConfig {
            lambda_main: LambdaChoice::Fixed(0.05),
            lambda_aux: LambdaChoice::Fixed(0.05),
            lambda_sq: SqrtLambdaChoice::Fixed(0.2),
            ..quick_config(3)
        };
        let r = gof_test(&data, GlmFamily::Gaussian, &cfg).unwrap();
        assert_eq!(r.lambda_main, 0.05);
        assert_eq!(r.lambda_sq, 0.2);
        assert!(r.p_value.is_some());
    }

    #[test]
    fn bad_split_fraction() {
        let data = null_data(50, 4, 1);
        let cfg = GofConfig { split_fraction: 1.0, ..quick_config(1) };
        assert!(gof_test(&data, GlmFamily::Logistic, &cfg).is_err());
    }

    #[test]
    fn single_class_half_errors() {
        // one positive among many rows: some splits put it on one side only
        let x = gen_toeplitz_design(40, 3, 0.0, 1).unwrap();
        let mut y = ndarray::Array1::zeros(40);
        y[0] = 1.0;
        let err = split_rows(y.view(), GlmFamily::Logistic, 0.5, 1).unwrap_err();
        assert!(matches!(err, GrpError::Resampling { .. }));
        let _ = x;
    }
}
