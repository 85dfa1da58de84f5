//! JSON documents written by the subcommands. Feature and row indices are
//! 1-based; `schema_version` changes whenever a key is renamed or removed.

use anyhow::Result;
use grp_core::{CvResult, Dataset, GlmFamily, GofConfig, GofResult, GroupTestResult, LassoFit};
use serde::Serialize;

use crate::DataArgs;

pub const SCHEMA_VERSION: u32 = 1;

pub fn to_text<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

fn one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&j| j + 1).collect()
}

#[derive(Serialize)]
struct Header<'a> {
    schema_version: u32,
    command: &'a str,
    family: GlmFamily,
    n: usize,
    p: usize,
    seed: u64,
    intercept: bool,
}

fn header<'a>(command: &'a str, args: &DataArgs, data: &Dataset) -> Header<'a> {
    Header {
        schema_version: SCHEMA_VERSION,
        command,
        family: args.family,
        n: data.n(),
        p: data.p(),
        seed: args.seed,
        intercept: !args.no_intercept,
    }
}

#[derive(Serialize)]
pub struct GofDoc<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    statistic: Option<f64>,
    p_value: Option<f64>,
    degenerate: bool,
    two_sided: bool,
    predictor: String,
    exact_orthogonalization: bool,
    direction_sup_norm: Option<f64>,
    kkt_near_ortho: Option<f64>,
    exempt_ortho: Option<f64>,
    lambda_main: f64,
    lambda_aux: f64,
    lambda_sq: f64,
    support_main: Vec<usize>,
    support_main_names: Vec<String>,
    n_main: usize,
    n_aux: usize,
}

pub fn gof_json<'a>(args: &DataArgs, data: &Dataset, names: &[String], cfg: &GofConfig, res: &GofResult) -> GofDoc<'a> {
    let predictor = match &cfg.predictor {
        grp_core::PredictorSpec::Forest(_) => "forest",
        grp_core::PredictorSpec::Zero => "zero",
        grp_core::PredictorSpec::LinearRefit => "linear",
    };
    GofDoc {
        header: header("gof", args, data),
        statistic: res.statistic,
        p_value: res.p_value,
        degenerate: res.degenerate,
        two_sided: res.two_sided,
        predictor: predictor.into(),
        exact_orthogonalization: cfg.exact_orthogonalization,
        direction_sup_norm: res.direction_sup_norm,
        kkt_near_ortho: res.kkt_near_ortho,
        exempt_ortho: res.exempt_ortho,
        lambda_main: res.lambda_main,
        lambda_aux: res.lambda_aux,
        lambda_sq: res.lambda_sq,
        support_main: one_based(&res.support_main),
        support_main_names: res.support_main.iter().map(|&j| names[j].clone()).collect(),
        n_main: res.split_indices.main.len(),
        n_aux: res.split_indices.aux.len(),
    }
}

#[derive(Serialize)]
struct FeatureDoc {
    feature: usize,
    name: String,
    stat: f64,
    near_ortho: f64,
}

#[derive(Serialize)]
struct BootstrapSummary {
    draws: usize,
    min: f64,
    median: f64,
    max: f64,
}

#[derive(Serialize)]
pub struct GroupDoc<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    group: Vec<usize>,
    statistic: Option<f64>,
    p_value: Option<f64>,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    per_feature: Vec<FeatureDoc>,
    degenerate_features: Vec<usize>,
    bootstrap: Option<BootstrapSummary>,
    lambda: Option<f64>,
    lambda_nw: Option<f64>,
    support_rest: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap_stats: Option<Vec<f64>>,
}

fn summarize(draws: &[f64]) -> BootstrapSummary {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    let median = if m % 2 == 1 { s[m / 2] } else { 0.5 * (s[m / 2 - 1] + s[m / 2]) };
    BootstrapSummary {
        draws: m,
        min: s[0],
        median,
        max: s[m - 1],
    }
}

pub fn group_json<'a>(
    args: &DataArgs,
    data: &Dataset,
    names: &[String],
    group: &[usize],
    res: &GroupTestResult,
    emit_bootstrap: bool,
) -> GroupDoc<'a> {
    GroupDoc {
        header: header("group", args, data),
        group: one_based(group),
        statistic: Some(res.statistic),
        p_value: Some(res.p_value),
        degenerate: false,
        message: None,
        per_feature: res
            .per_feature_stats
            .iter()
            .map(|f| FeatureDoc {
                feature: f.feature + 1,
                name: names[f.feature].clone(),
                stat: f.stat,
                near_ortho: f.near_ortho,
            })
            .collect(),
        degenerate_features: one_based(&res.degenerate_features),
        bootstrap: Some(summarize(&res.bootstrap_stats)),
        lambda: Some(res.lambda),
        lambda_nw: Some(res.lambda_nw),
        support_rest: one_based(&res.support_rest),
        bootstrap_stats: emit_bootstrap.then(|| res.bootstrap_stats.clone()),
    }
}

pub fn group_degenerate_json<'a>(args: &DataArgs, data: &Dataset, group: &[usize], message: &str) -> GroupDoc<'a> {
    GroupDoc {
        header: header("group", args, data),
        group: one_based(group),
        statistic: None,
        p_value: None,
        degenerate: true,
        message: Some(message.to_string()),
        per_feature: Vec::new(),
        degenerate_features: one_based(group),
        bootstrap: None,
        lambda: None,
        lambda_nw: None,
        support_rest: Vec::new(),
        bootstrap_stats: None,
    }
}

#[derive(Serialize)]
struct CoefDoc {
    feature: usize,
    name: String,
    value: f64,
}

#[derive(Serialize)]
struct CvDoc {
    folds: usize,
    lambdas: Vec<f64>,
    cv_mean: Vec<f64>,
    cv_se: Vec<f64>,
}

#[derive(Serialize)]
pub struct FitDoc<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    lambda: f64,
    lambda_source: &'static str,
    intercept_value: f64,
    coefficients: Vec<CoefDoc>,
    support: Vec<usize>,
    kkt_violation: f64,
    objective: f64,
    converged: bool,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv: Option<CvDoc>,
}

pub fn fit_json<'a>(args: &DataArgs, data: &Dataset, names: &[String], fit: &LassoFit, cv: Option<&CvResult>) -> FitDoc<'a> {
    FitDoc {
        header: header("fit", args, data),
        lambda: fit.lambda,
        lambda_source: if cv.is_some() { "cv" } else { "fixed" },
        intercept_value: fit.intercept,
        coefficients: fit
            .beta
            .iter()
            .enumerate()
            .map(|(j, &v)| CoefDoc {
                feature: j + 1,
                name: names[j].clone(),
                value: v,
            })
            .collect(),
        support: one_based(&fit.support),
        kkt_violation: fit.kkt_violation,
        objective: fit.objective,
        converged: fit.converged,
        iterations: fit.iterations,
        cv: cv.map(|r| CvDoc {
            folds: r.fold_of.iter().copied().max().map_or(0, |m| m + 1),
            lambdas: r.lambdas.clone(),
            cv_mean: r.cv_mean.clone(),
            cv_se: r.cv_se.clone(),
        }),
    }
}
