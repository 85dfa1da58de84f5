//! Model families, linear predictors, variance weights and Pearson residuals.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{GrpError, Result};

/// Lower bound applied to `μ'(η)` before square roots and reciprocals.
pub const WEIGHT_FLOOR: f64 = 1e-10;

/// Canonical-link GLM family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmFamily {
    Logistic,
    Poisson,
    Gaussian,
}

impl GlmFamily {
    pub fn name(self) -> &'static str {
        match self {
            GlmFamily::Logistic => "logistic",
            GlmFamily::Poisson => "poisson",
            GlmFamily::Gaussian => "gaussian",
        }
    }

    /// Inverse link `μ(u)`.
    #[inline]
    pub fn inverse_link(self, u: f64) -> f64 {
        match self {
            GlmFamily::Logistic => sigmoid(u),
            GlmFamily::Poisson => u.exp(),
            GlmFamily::Gaussian => u,
        }
    }

    /// `μ'(u)`, which under the canonical link is also the conditional variance.
    #[inline]
    pub fn inverse_link_deriv(self, u: f64) -> f64 {
        match self {
            GlmFamily::Logistic => {
                let e = (-u.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            GlmFamily::Poisson => u.exp(),
            GlmFamily::Gaussian => 1.0,
        }
    }

    /// Cumulant function `d(u)` with `d' = μ`.
    #[inline]
    pub fn cumulant(self, u: f64) -> f64 {
        match self {
            GlmFamily::Logistic => log1p_exp(u),
            GlmFamily::Poisson => u.exp(),
            GlmFamily::Gaussian => 0.5 * u * u,
        }
    }

    /// Per-observation loss `ρ(y, u) = -y u + d(u)`.
    #[inline]
    pub fn loss(self, y: f64, u: f64) -> f64 {
        -y * u + self.cumulant(u)
    }

    /// Loss at the saturated fit, so that `2 (loss - saturated)` is the unit deviance.
    fn saturated_loss(self, y: f64) -> f64 {
        match self {
            GlmFamily::Logistic => 0.0,
            GlmFamily::Poisson => {
                if y > 0.0 {
                    -y * y.ln() + y
                } else {
                    0.0
                }
            }
            GlmFamily::Gaussian => -0.5 * y * y,
        }
    }

    #[inline]
    pub fn unit_deviance(self, y: f64, u: f64) -> f64 {
        (2.0 * (self.loss(y, u) - self.saturated_loss(y))).max(0.0)
    }

    /// Canonical parameter for a constant mean `m` (the intercept-only fit).
    pub fn link(self, m: f64) -> f64 {
        match self {
            GlmFamily::Logistic => (m / (1.0 - m)).ln(),
            GlmFamily::Poisson => m.ln(),
            GlmFamily::Gaussian => m,
        }
    }

    pub fn validate_response(self, y: ArrayView1<f64>) -> Result<()> {
        for (row, &v) in y.iter().enumerate() {
            let ok = v.is_finite()
                && match self {
                    GlmFamily::Logistic => v == 0.0 || v == 1.0,
                    GlmFamily::Poisson => v >= 0.0 && v.fract() == 0.0,
                    GlmFamily::Gaussian => true,
                };
            if !ok {
                return Err(GrpError::InvalidResponse {
                    family: self.name(),
                    row,
                    value: v,
                });
            }
        }
        match self {
            GlmFamily::Logistic => {
                let ones = y.iter().filter(|&&v| v == 1.0).count();
                if ones == 0 || ones == y.len() {
                    return Err(GrpError::InvalidInput(
                        "logistic response has a single class".into(),
                    ));
                }
            }
            GlmFamily::Poisson => {
                if y.iter().all(|&v| v == 0.0) {
                    return Err(GrpError::InvalidInput("poisson response is all zero".into()));
                }
            }
            GlmFamily::Gaussian => {}
        }
        Ok(())
    }
}

impl std::str::FromStr for GlmFamily {
    type Err = GrpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "binomial" => Ok(GlmFamily::Logistic),
            "poisson" => Ok(GlmFamily::Poisson),
            "gaussian" => Ok(GlmFamily::Gaussian),
            other => Err(GrpError::InvalidInput(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^u)` without overflow.
#[inline]
pub fn log1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

pub fn inverse_link(family: GlmFamily, u: f64) -> f64 {
    family.inverse_link(u)
}

pub fn inverse_link_deriv(family: GlmFamily, u: f64) -> f64 {
    family.inverse_link_deriv(u)
}

/// Design matrix and response. Columns are stored contiguously.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, p) = x.dim();
        if n != y.len() {
            return Err(GrpError::DimensionMismatch(format!(
                "design has {n} rows but response has {} entries",
                y.len()
            )));
        }
        if n < 2 {
            return Err(GrpError::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(GrpError::InvalidInput("design has no columns".into()));
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(GrpError::InvalidInput(format!(
                "non-finite covariate at row {i}, column {j}"
            )));
        }
        if let Some((i, _)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GrpError::InvalidInput(format!("non-finite response at row {i}")));
        }
        Ok(Dataset {
            x: to_column_major(x),
            y,
        })
    }

    /// Like [`Dataset::new`], additionally checking responses against `family`.
    pub fn for_family(x: Array2<f64>, y: Array1<f64>, family: GlmFamily) -> Result<Self> {
        let d = Self::new(x, y)?;
        family.validate_response(d.y.view())?;
        Ok(d)
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn rows(&self, idx: &[usize]) -> Result<Dataset> {
        let x = select_rows(self.x.view(), idx);
        let y = Array1::from_iter(idx.iter().map(|&i| self.y[i]));
        Dataset::new(x, y)
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.x, self.y)
    }
}

pub(crate) fn to_column_major(x: Array2<f64>) -> Array2<f64> {
    if x.t().is_standard_layout() {
        x
    } else {
        let mut out = Array2::zeros(x.dim().f());
        out.assign(&x);
        out
    }
}

pub(crate) fn select_rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let p = x.ncols();
    let mut out = Array2::zeros((idx.len(), p).f());
    for j in 0..p {
        let src = x.column(j);
        let mut dst = out.column_mut(j);
        for (k, &i) in idx.iter().enumerate() {
            dst[k] = src[i];
        }
    }
    out
}

pub(crate) fn select_columns(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), idx.len()).f());
    for (k, &j) in idx.iter().enumerate() {
        out.column_mut(k).assign(&x.column(j));
    }
    out
}

/// Intercept plus slope vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub intercept: f64,
    pub beta: Array1<f64>,
}

impl Coefficients {
    pub fn zeros(p: usize) -> Self {
        Coefficients {
            intercept: 0.0,
            beta: Array1::zeros(p),
        }
    }

    pub fn without_intercept(beta: Array1<f64>) -> Self {
        Coefficients {
            intercept: 0.0,
            beta,
        }
    }

    /// Linear predictor `intercept + X beta`.
    pub fn linear_predictor(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut eta = x.dot(&self.beta);
        eta += self.intercept;
        eta
    }
}

/// Square roots of the variance weights, `d_i = sqrt(max(μ'(η_i), floor))`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiag {
    d: Array1<f64>,
}

impl WeightDiag {
    pub fn new(d: Array1<f64>) -> Result<Self> {
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(GrpError::InvalidInput(format!(
                "weight {i} must be finite and positive, got {v}"
            )));
        }
        Ok(WeightDiag { d })
    }

    pub fn ones(n: usize) -> Self {
        WeightDiag { d: Array1::ones(n) }
    }

    pub fn from_linear_predictor(family: GlmFamily, eta: ArrayView1<f64>) -> Self {
        let d = eta.mapv(|u| family.inverse_link_deriv(u).max(WEIGHT_FLOOR).sqrt());
        WeightDiag { d }
    }

    pub fn from_fit(family: GlmFamily, x: ArrayView2<f64>, coef: &Coefficients) -> Self {
        Self::from_linear_predictor(family, coef.linear_predictor(x).view())
    }

    pub fn d(&self) -> ArrayView1<'_, f64> {
        self.d.view()
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Row-scaled copy `D X`.
    pub fn scale_rows(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = to_column_major(x.to_owned());
        for mut col in out.columns_mut() {
            col *= &self.d;
        }
        out
    }

    pub fn scale(&self, v: ArrayView1<f64>) -> Array1<f64> {
        &v * &self.d
    }
}

/// `R_i = (Y_i - μ(x_i' β)) / d_i`.
pub fn pearson_residuals(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: GlmFamily,
    coef: &Coefficients,
    weights: &WeightDiag,
) -> Result<Array1<f64>> {
    let n = x.nrows();
    if y.len() != n || weights.len() != n || coef.beta.len() != x.ncols() {
        return Err(GrpError::DimensionMismatch(format!(
            "pearson residuals: X is {}x{}, y has {}, weights {}, beta {}",
            n,
            x.ncols(),
            y.len(),
            weights.len(),
            coef.beta.len()
        )));
    }
    let eta = coef.linear_predictor(x);
    Ok(ndarray::Zip::from(&y)
        .and(&eta)
        .and(&weights.d)
        .map_collect(|&yi, &ei, &di| (yi - family.inverse_link(ei)) / di))
}

/// Mean loss `(1/n) Σ ρ(Y_i, η_i)`.
pub fn glm_negloglik(family: GlmFamily, y: ArrayView1<f64>, eta: ArrayView1<f64>) -> Result<f64> {
    if y.len() != eta.len() {
        return Err(GrpError::DimensionMismatch(format!(
            "response has {} entries, linear predictor {}",
            y.len(),
            eta.len()
        )));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = y.iter().zip(eta.iter()).map(|(&yi, &ei)| family.loss(yi, ei)).sum();
    Ok(s / y.len() as f64)
}

/// Mean unit deviance, used for cross-validation.
pub fn mean_deviance(family: GlmFamily, y: ArrayView1<f64>, eta: ArrayView1<f64>) -> f64 {
    let s: f64 = y
        .iter()
        .zip(eta.iter())
        .map(|(&yi, &ei)| family.unit_deviance(yi, ei))
        .sum();
    s / y.len().max(1) as f64
}
