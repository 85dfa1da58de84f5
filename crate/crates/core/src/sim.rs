//! Simulation designs, scenario catalog and the Monte Carlo driver.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GrpError, Result};
use crate::forest::{ForestConfig, PredictorSpec};
use crate::glm::{Dataset, GlmFamily};
use crate::gof::{gof_test, GofConfig};
use crate::group::{group_test, GroupTestConfig};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// Share of failed replications above which a run is aborted.
pub const FAILURE_CAP: f64 = 0.10;

/// Misspecification term `g(u)`; indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Misspec {
    None,
    /// `2 u_k^2`
    Quad(usize),
    /// `u_k^2 / 2`
    QuadHalf(usize),
    /// `u_k u_l`
    Interact(usize, usize),
}

impl Misspec {
    pub fn eval(&self, u: ArrayView1<f64>) -> f64 {
        match *self {
            Misspec::None => 0.0,
            Misspec::Quad(k) => 2.0 * u[k] * u[k],
            Misspec::QuadHalf(k) => 0.5 * u[k] * u[k],
            Misspec::Interact(k, l) => u[k] * u[l],
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            Misspec::None => None,
            Misspec::Quad(k) | Misspec::QuadHalf(k) => Some(k),
            Misspec::Interact(k, l) => Some(k.max(l)),
        }
    }
}

/// Rows drawn from `N(0, Σ)` with `Σ_ij = rho^|i-j|` via the AR(1) recursion.
pub fn gen_toeplitz_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(GrpError::InvalidInput(format!("rho must lie in [0, 1), got {rho}")));
    }
    if n == 0 || p == 0 {
        return Err(GrpError::InvalidInput(format!("empty design {n}x{p}")));
    }
    let mut rng = rng_from_seed(seed);
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = Array2::<f64>::zeros((n, p).f());
    for i in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        x[[i, 0]] = prev;
        for j in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innov * z;
            x[[i, j]] = prev;
        }
    }
    Ok(x)
}

/// Draws `Y_i` with mean `mu(x_i'beta0 + sigma g(x_i))`; gaussian noise is standard normal.
pub fn gen_glm_response(
    x: ArrayView2<f64>,
    family: GlmFamily,
    beta0: &[f64],
    misspec: &Misspec,
    sigma: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    let (n, p) = x.dim();
    if beta0.len() != p {
        return Err(GrpError::DimensionMismatch(format!(
            "beta0 has {} entries for {p} columns",
            beta0.len()
        )));
    }
    if let Some(k) = misspec.max_index() {
        if k >= p {
            return Err(GrpError::InvalidInput(format!("misspecification index {k} out of range for {p} columns")));
        }
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(GrpError::InvalidInput(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let beta = ArrayView1::from(beta0);
    let mut rng = rng_from_seed(seed);
    let mut y = Array1::<f64>::zeros(n);
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut eta = row.dot(&beta);
        if sigma > 0.0 {
            eta += sigma * misspec.eval(row);
        }
        let mean = family.inverse_link(eta);
        y[i] = match family {
            GlmFamily::Logistic => {
                let b = Bernoulli::new(mean.clamp(0.0, 1.0)).expect("probability in [0, 1]");
                if b.sample(&mut rng) {
                    1.0
                } else {
                    0.0
                }
            }
            GlmFamily::Poisson => {
                if mean > 0.0 {
                    let d = Poisson::new(mean).map_err(|e| {
                        GrpError::InvalidInput(format!("poisson mean {mean} at row {i}: {e}"))
                    })?;
                    d.sample(&mut rng)
                } else {
                    0.0
                }
            }
            GlmFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                mean + z
            }
        };
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "config")]
pub enum ScenarioTest {
    Gof(GofConfig),
    Group(GroupTestConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McScenario {
    pub name: String,
    pub description: String,
    pub n_total: usize,
    pub p: usize,
    pub rho: f64,
    pub beta0: Vec<f64>,
    pub misspec: Misspec,
    pub sigma: f64,
    pub family: GlmFamily,
    pub test: ScenarioTest,
}

impl McScenario {
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Sets the fifth coefficient, the signal tested in the group scenarios.
    pub fn with_theta(mut self, theta: f64) -> Self {
        if self.beta0.len() > 4 {
            self.beta0[4] = theta;
        }
        self
    }

    pub fn with_num_trees(mut self, trees: usize) -> Self {
        if let ScenarioTest::Gof(cfg) = &mut self.test {
            if let PredictorSpec::Forest(f) = &mut cfg.predictor {
                f.num_trees = trees;
            }
        }
        self
    }

    pub fn with_bootstrap_draws(mut self, draws: usize) -> Self {
        if let ScenarioTest::Group(cfg) = &mut self.test {
            cfg.bootstrap_draws = draws;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta0.len() != self.p {
            return Err(GrpError::DimensionMismatch(format!(
                "scenario {}: beta0 has {} entries for p = {}",
                self.name,
                self.beta0.len(),
                self.p
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(GrpError::InvalidInput(format!("scenario {}: rho {} not in [0, 1)", self.name, self.rho)));
        }
        if !(self.sigma >= 0.0) {
            return Err(GrpError::InvalidInput(format!("scenario {}: sigma must be >= 0", self.name)));
        }
        if let Some(k) = self.misspec.max_index() {
            if k >= self.p {
                return Err(GrpError::InvalidInput(format!("scenario {}: misspecification index out of range", self.name)));
            }
        }
        Ok(())
    }
}

fn leading_ones(p: usize, s: usize) -> Vec<f64> {
    (0..p).map(|j| if j < s { 1.0 } else { 0.0 }).collect()
}

fn gof_scenario(name: &str, description: &str, n_total: usize, p: usize, rho: f64, s: usize, misspec: Misspec) -> McScenario {
    McScenario {
        name: name.into(),
        description: description.into(),
        n_total,
        p,
        rho,
        beta0: leading_ones(p, s),
        misspec,
        sigma: 0.0,
        family: GlmFamily::Logistic,
        test: ScenarioTest::Gof(GofConfig {
            predictor: PredictorSpec::Forest(ForestConfig::default()),
            ..GofConfig::default()
        }),
    }
}

fn group_scenario(name: &str, description: &str, n: usize, p: usize) -> McScenario {
    McScenario {
        name: name.into(),
        description: description.into(),
        n_total: n,
        p,
        rho: 0.6,
        beta0: leading_ones(p, 4),
        misspec: Misspec::None,
        sigma: 0.0,
        family: GlmFamily::Logistic,
        test: ScenarioTest::Group(GroupTestConfig::new((4..p).collect())),
    }
}

/// Every named scenario. Misspecification scale and group signal start at zero.
pub fn catalog() -> Vec<McScenario> {
    let mut out = vec![
        gof_scenario("lowdim-a", "logistic N=300 p=10 rho=0.6, g=2u1^2", 300, 10, 0.6, 3, Misspec::Quad(0)),
        gof_scenario("lowdim-b", "logistic N=300 p=10 rho=0.6, g=2u5^2", 300, 10, 0.6, 3, Misspec::Quad(4)),
        gof_scenario("lowdim-c", "logistic N=300 p=10 rho=0.6, g=u1u2", 300, 10, 0.6, 3, Misspec::Interact(0, 1)),
        gof_scenario("lowdim-d", "logistic N=300 p=10 rho=0.6, g=u1u3", 300, 10, 0.6, 3, Misspec::Interact(0, 2)),
        gof_scenario("lowdim-f", "logistic N=300 p=10 rho=0.6, g=u1u4", 300, 10, 0.6, 3, Misspec::Interact(0, 3)),
        gof_scenario("lowdim-g", "logistic N=300 p=10 rho=0.6, g=u4u7", 300, 10, 0.6, 3, Misspec::Interact(3, 6)),
    ];
    for (tag, rho) in [("04", 0.4), ("06", 0.6), ("08", 0.8)] {
        out.push(gof_scenario(
            &format!("tab1-rho{tag}-quad"),
            &format!("logistic N=800 p=500 rho={rho}, g=u1^2/2"),
            800,
            500,
            rho,
            5,
            Misspec::QuadHalf(0),
        ));
    }
    for (tag, rho) in [("04", 0.4), ("06", 0.6), ("08", 0.8)] {
        out.push(gof_scenario(
            &format!("tab2-rho{tag}-inter"),
            &format!("logistic N=800 p=500 rho={rho}, g=u1u2"),
            800,
            500,
            rho,
            5,
            Misspec::Interact(0, 1),
        ));
    }
    out.push(group_scenario("group-n500-p100", "group test n=500 p=100 rho=0.6, G={5..p}", 500, 100));
    out.push(group_scenario("group-n600-p800", "group test n=600 p=800 rho=0.6, G={5..p}", 600, 800));
    out.push(gof_scenario("desk-null-p50", "logistic N=300 p=50 rho=0.6 s=3, correctly specified", 300, 50, 0.6, 3, Misspec::None));
    out.push(gof_scenario("desk-quad-rho04", "logistic N=300 p=100 rho=0.4, g=u1^2/2", 300, 100, 0.4, 5, Misspec::QuadHalf(0)));
    out.push(gof_scenario("desk-inter-rho06", "logistic N=300 p=100 rho=0.6, g=u1u2", 300, 100, 0.6, 5, Misspec::Interact(0, 1)));
    out
}

pub fn find_scenario(name: &str) -> Result<McScenario> {
    let all = catalog();
    match all.iter().find(|s| s.name == name) {
        Some(s) => Ok(s.clone()),
        None => Err(GrpError::UnknownScenario {
            name: name.to_string(),
            available: all.into_iter().map(|s| s.name).collect::<Vec<_>>().join(", "),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: McScenario,
    pub reps: usize,
    pub level: f64,
    pub rejection_rate: f64,
    /// P-values of the successful, non-degenerate replications, ascending.
    pub p_values: Vec<f64>,
    pub records: Vec<RepRecord>,
    pub failures: usize,
    pub degenerate_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

enum RepOutcome {
    PValue(f64),
    Degenerate,
}

fn run_one(scenario: &McScenario, seed: u64) -> Result<RepOutcome> {
    let x = gen_toeplitz_design(scenario.n_total, scenario.p, scenario.rho, derive_seed(seed, stream::DESIGN))?;
    let y = gen_glm_response(
        x.view(),
        scenario.family,
        &scenario.beta0,
        &scenario.misspec,
        scenario.sigma,
        derive_seed(seed, stream::RESPONSE),
    )?;
    let data = Dataset::new(x, y)?;
    let test_seed = derive_seed(seed, stream::TEST);
    match &scenario.test {
        ScenarioTest::Gof(cfg) => {
            let cfg = GofConfig { seed: test_seed, ..cfg.clone() };
            let res = gof_test(&data, scenario.family, &cfg)?;
            Ok(match res.p_value {
                Some(p) if !res.degenerate => RepOutcome::PValue(p),
                _ => RepOutcome::Degenerate,
            })
        }
        ScenarioTest::Group(cfg) => {
            let cfg = GroupTestConfig { seed: test_seed, ..cfg.clone() };
            match group_test(&data, scenario.family, &cfg) {
                Ok(res) => Ok(RepOutcome::PValue(res.p_value)),
                Err(GrpError::Degenerate(_)) => Ok(RepOutcome::Degenerate),
                Err(e) => Err(e),
            }
        }
    }
}

/// Replication `r` draws everything from `derive_seed(seed, r)`, so the
/// report does not depend on thread count or scheduling.
pub fn run_mc(scenario: &McScenario, reps: usize, level: f64, seed: u64) -> Result<McReport> {
    if reps == 0 {
        return Err(GrpError::InvalidInput("reps must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(GrpError::InvalidInput(format!("level must lie in [0, 1], got {level}")));
    }
    scenario.validate()?;
    let start = Instant::now();
    let records: Vec<RepRecord> = (0..reps)
        .into_par_iter()
        .map(|rep| match run_one(scenario, derive_seed(seed, rep as u64)) {
            Ok(RepOutcome::PValue(p)) => RepRecord {
                rep,
                p_value: Some(p),
                reject: p <= level,
                degenerate: false,
                error: None,
            },
            Ok(RepOutcome::Degenerate) => RepRecord {
                rep,
                p_value: None,
                reject: false,
                degenerate: true,
                error: None,
            },
            Err(e) => {
                log::warn!("replication {rep} failed: {e}");
                RepRecord {
                    rep,
                    p_value: None,
                    reject: false,
                    degenerate: false,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();

    let failures = records.iter().filter(|r| r.error.is_some()).count();
    if failures as f64 > FAILURE_CAP * reps as f64 {
        let last = records
            .iter()
            .rev()
            .find_map(|r| r.error.clone())
            .unwrap_or_default();
        return Err(GrpError::FailureCap { failures, reps, last });
    }
    let degenerate_count = records.iter().filter(|r| r.degenerate).count();
    let rejects = records.iter().filter(|r| r.reject).count();
    let mut p_values: Vec<f64> = records.iter().filter_map(|r| r.p_value).collect();
    p_values.sort_by(f64::total_cmp);
    Ok(McReport {
        scenario: scenario.clone(),
        reps,
        level,
        rejection_rate: rejects as f64 / reps as f64,
        p_values,
        records,
        failures,
        degenerate_count,
        wall_time_secs: Some(start.elapsed().as_secs_f64()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_cov(x: &Array2<f64>, a: usize, b: usize) -> f64 {
        let n = x.nrows() as f64;
        let (ca, cb) = (x.column(a), x.column(b));
        let (ma, mb) = (ca.sum() / n, cb.sum() / n);
        ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn toeplitz_covariance_block() {
        let rho: f64 = 0.6;
        let x = gen_toeplitz_design(5000, 8, rho, 3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let target = rho.powi((i as i32 - j as i32).abs());
                assert!((sample_cov(&x, i, j) - target).abs() < 0.05, "({i},{j})");
            }
        }
    }

    #[test]
    fn toeplitz_independent_when_rho_zero() {
        let x = gen_toeplitz_design(1000, 3, 0.0, 9).unwrap();
        assert!(sample_cov(&x, 0, 1).abs() < 0.1);
    }

    #[test]
    fn toeplitz_rejects_bad_rho() {
        assert!(gen_toeplitz_design(10, 3, 1.0, 0).is_err());
        assert!(gen_toeplitz_design(10, 3, -0.1, 0).is_err());
    }

    #[test]
    fn design_is_seeded() {
        assert_eq!(gen_toeplitz_design(20, 4, 0.5, 1).unwrap(), gen_toeplitz_design(20, 4, 0.5, 1).unwrap());
        assert_ne!(gen_toeplitz_design(20, 4, 0.5, 1).unwrap(), gen_toeplitz_design(20, 4, 0.5, 2).unwrap());
    }

    #[test]
    fn sigma_zero_ignores_misspec() {
        let x = gen_toeplitz_design(50, 4, 0.3, 1).unwrap();
        let beta = [1.0, -1.0, 0.0, 0.5];
        let a = gen_glm_response(x.view(), GlmFamily::Gaussian, &beta, &Misspec::None, 0.0, 4).unwrap();
        let b = gen_glm_response(x.view(), GlmFamily::Gaussian, &beta, &Misspec::Quad(2), 0.0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn logistic_saturates() {
        let x = Array2::from_elem((2000, 1), 1.0);
        let y = gen_glm_response(x.view(), GlmFamily::Logistic, &[10.0], &Misspec::None, 0.0, 1).unwrap();
        assert!(y.mean().unwrap() > 0.99);
    }

    #[test]
    fn poisson_mean_matches() {
        let x = Array2::from_elem((5000, 1), 1.0);
        let y = gen_glm_response(x.view(), GlmFamily::Poisson, &[1.0f64.ln() + 1.0], &Misspec::None, 0.0, 2).unwrap();
        assert!((y.mean().unwrap() - 1.0f64.exp()).abs() < 0.1);
    }

    #[test]
    fn misspec_values() {
        let u = ndarray::array![1.0, 2.0, 3.0];
        assert_eq!(Misspec::Quad(1).eval(u.view()), 8.0);
        assert_eq!(Misspec::QuadHalf(2).eval(u.view()), 4.5);
        assert_eq!(Misspec::Interact(0, 2).eval(u.view()), 3.0);
        let x = gen_toeplitz_design(5, 3, 0.0, 0).unwrap();
        assert!(gen_glm_response(x.view(), GlmFamily::Logistic, &[0.0; 3], &Misspec::Quad(3), 1.0, 0).is_err());
    }

    #[test]
    fn catalog_names_resolve() {
        let all = catalog();
        for s in &all {
            s.validate().unwrap();
            assert_eq!(find_scenario(&s.name).unwrap(), *s);
        }
        match find_scenario("nope") {
            Err(GrpError::UnknownScenario { available, .. }) => assert_eq!(available.split(", ").count(), all.len()),
            other => panic!("{other:?}"),
        }
    }

    fn small_gof() -> McScenario {
        let mut s = find_scenario("lowdim-a").unwrap().with_num_trees(20);
        s.n_total = 120;
        s
    }

    #[test]
    fn level_one_rejects_everything() {
        let r = run_mc(&small_gof(), 4, 1.0, 3).unwrap();
        assert_eq!(r.rejection_rate, 1.0 - r.degenerate_count as f64 / 4.0 - r.failures as f64 / 4.0);
        assert_eq!(r.records.len(), 4);
    }

    #[test]
    fn level_zero_rejects_nothing() {
        let r = run_mc(&small_gof(), 3, 0.0, 3).unwrap();
        assert_eq!(r.rejection_rate, 0.0);
    }

    #[test]
    fn reports_are_reproducible() {
        let mut a = run_mc(&small_gof(), 3, 0.05, 8).unwrap();
        let mut b = run_mc(&small_gof(), 3, 0.05, 8).unwrap();
        a.wall_time_secs = None;
        b.wall_time_secs = None;
        assert_eq!(a, b);
        assert!(run_mc(&small_gof(), 0, 0.05, 8).is_err());
    }
}
