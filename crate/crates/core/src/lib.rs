//! Generalized residual prediction (GRP) tests for high-dimensional
//! generalized linear models.
//!
//! * [`gof`]: goodness-of-fit test. A flexible regression of auxiliary-sample
//!   residuals builds a direction in observation space; a weighted
//!   square-root Lasso makes it nearly orthogonal to the design, and the
//!   projection of the Pearson residuals onto it is compared to N(0, 1).
//! * [`group`]: significance test for a group of coefficients, using
//!   nodewise square-root Lasso directions and a Gaussian multiplier
//!   bootstrap for the maximum statistic.
//! * [`sim`]: synthetic designs, responses and a Monte Carlo driver.

pub mod cv;
pub mod error;
pub mod forest;
pub mod glm;
pub mod gof;
pub mod group;
pub(crate) mod linalg;
pub mod lasso;
pub mod report;
pub mod rng;
pub mod sim;
pub mod sqrt_lasso;
pub mod stats;

pub use cv::{glm_lasso_cv, CvConfig, CvResult, SelectionRule};
pub use error::{GrpError, Result};
pub use forest::{
    forest_fit, forest_predict, ForestConfig, LinearRefitPredictor, PredictorSpec, RandomForest,
    ResidualPredictor, ZeroPredictor,
};
pub use glm::{
    glm_negloglik, inverse_link, inverse_link_deriv, pearson_residuals, Coefficients, Dataset,
    GlmFamily, WeightDiag,
};
pub use gof::{gof_power_point, gof_test, GofConfig, GofResult};
pub use group::{
    bootstrap_p_value, bootstrap_quantile, group_test, multiplier_bootstrap, GroupTestConfig,
    GroupTestResult,
};
pub use lasso::{glm_lasso, glm_lasso_path, lambda_max, LassoFit, LassoOptions};
pub use report::{emit_report, parse_csv_report, parse_json_report, write_report, ReportFormat};
pub use sim::{
    catalog, find_scenario, gen_glm_response, gen_toeplitz_design, run_mc, McReport, McScenario,
    Misspec, ScenarioTest,
};
pub use sqrt_lasso::{
    default_lambda, direction_from_sqrt_lasso, nodewise_sqrt_lasso, sqrt_lasso, Direction,
    NodewiseFit, SqrtLassoFit,
};

/// Penalty level: a fixed value or chosen by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Cv,
}

/// Square-root Lasso penalty: fixed, or `sqrt(2 log(p) / n)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqrtLambdaChoice {
    Fixed(f64),
    DefaultRate,
}
