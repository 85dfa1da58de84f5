//! Weighted square-root Lasso with penalty-exempt coordinates.
//!
//! Minimizes `(1/√n) ||D (t - Xβ)||_2 + λ Σ_{j ∉ E} |β_j|`.
//!
//! Exempt columns are handled by projecting them out: for fixed penalized
//! coefficients the exempt block is a least-squares fit, so the residual is
//! `M (Dt - DX_P β_P)` with `M` the projector onto the orthogonal complement
//! of `span(DX_E)`. The remaining problem in `β_P` is solved by the scaled
//! Lasso alternation: `σ = ||r||_2 / √n`, then an ordinary Lasso with penalty
//! `σλ`, repeated to a fixed point. At the fixed point the stationarity
//! conditions read `|x_j' D r| / ||r||_2 <= √n λ` for penalized `j` and
//! `x_j' D r = 0` for exempt `j`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{GrpError, Result};
use crate::glm::WeightDiag;
use crate::lasso::{coordinate_descent, SUPPORT_EPS};
use crate::linalg::{norm2, OrthoBasis};

const MAX_ALTERNATIONS: usize = 500;
const SIGMA_REL_TOL: f64 = 1e-11;
/// Residual scale below which a fit is declared degenerate.
pub const DEGENERATE_SIGMA: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SqrtLassoFit {
    pub beta: Array1<f64>,
    pub lambda_sq: f64,
    /// `D (target - Xβ)`.
    pub residual: Array1<f64>,
    pub residual_norm: f64,
    pub degenerate: bool,
    pub exempt_set: Vec<usize>,
    /// `max_{j penalized} |x_j' D r| / ||r||_2`, zero when degenerate.
    pub penalized_ortho: f64,
    /// `max_{j exempt} |x_j' D r| / (||r||_2 ||D x_j||_2)`, zero when degenerate.
    pub exempt_ortho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A unit vector in observation space.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Array1<f64>);

impl Direction {
    pub fn from_vector(v: ArrayView1<f64>) -> Result<Self> {
        let nv = norm2(v);
        if !(nv > 0.0 && nv.is_finite()) {
            return Err(GrpError::Degenerate("cannot normalize a zero vector".into()));
        }
        Ok(Direction(v.mapv(|a| a / nv)))
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

/// `sqrt(2 log(p) / n)`, with `p` floored at 2 so the rate stays positive.
pub fn default_lambda(p: usize, n: usize) -> f64 {
    (2.0 * (p.max(2) as f64).ln() / n as f64).sqrt()
}

pub fn sqrt_lasso_objective(
    x: ArrayView2<f64>,
    target: ArrayView1<f64>,
    weights: &WeightDiag,
    lambda_sq: f64,
    exempt: &[usize],
    beta: ArrayView1<f64>,
) -> f64 {
    let r = weights.scale((&target - &x.dot(&beta)).view());
    let pen: f64 = beta
        .iter()
        .enumerate()
        .filter(|(j, _)| !exempt.contains(j))
        .map(|(_, b)| b.abs())
        .sum();
    norm2(r.view()) / (x.nrows() as f64).sqrt() + lambda_sq * pen
}

pub fn sqrt_lasso(
    x: ArrayView2<f64>,
    target: ArrayView1<f64>,
    weights: &WeightDiag,
    lambda_sq: f64,
    exempt_set: &[usize],
) -> Result<SqrtLassoFit> {
    let (n, p) = x.dim();
    if target.len() != n || weights.len() != n {
        return Err(GrpError::DimensionMismatch(format!(
            "square-root lasso: X has {n} rows, target {}, weights {}",
            target.len(),
            weights.len()
        )));
    }
    if !(lambda_sq > 0.0 && lambda_sq.is_finite()) {
        return Err(GrpError::InvalidInput(format!("lambda_sq must be positive, got {lambda_sq}")));
    }
    let mut exempt = exempt_set.to_vec();
    exempt.sort_unstable();
    exempt.dedup();
    if let Some(&j) = exempt.iter().find(|&&j| j >= p) {
        return Err(GrpError::InvalidInput(format!("exempt index {j} out of range for {p} columns")));
    }

    let a = weights.scale_rows(x);
    let b = weights.scale(target);
    for &j in &exempt {
        if a.column(j).iter().all(|v| *v == 0.0) {
            return Err(GrpError::InvalidInput(format!("exempt column {j} is identically zero")));
        }
    }
    let penalized: Vec<usize> = (0..p).filter(|j| exempt.binary_search(j).is_err()).collect();

    let a_exempt = crate::glm::select_columns(a.view(), &exempt);
    let basis = OrthoBasis::new(a_exempt.view());
    let mut ap = Array2::zeros((n, penalized.len()).f());
    for (k, &j) in penalized.iter().enumerate() {
        let mut col = a.column(j).to_owned();
        basis.project_out(&mut col);
        ap.column_mut(k).assign(&col);
    }
    let mut bp = b.clone();
    basis.project_out(&mut bp);

    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let mut beta_p = Array1::<f64>::zeros(penalized.len());
    let mut r = bp.clone();
    let mut sigma = norm2(r.view()) / sqrt_n;
    let mut iterations = 0;
    let mut converged = true;
    let mut degenerate = sigma < DEGENERATE_SIGMA;

    if !degenerate && !penalized.is_empty() {
        let ones = Array1::<f64>::ones(n);
        let curv = Array1::from_iter(ap.columns().into_iter().map(|c| c.dot(&c) / nf));
        converged = false;
        while iterations < MAX_ALTERNATIONS {
            iterations += 1;
            let mut b0 = 0.0;
            coordinate_descent(
                ap.view(),
                &ones,
                nf,
                &curv,
                sigma * lambda_sq,
                false,
                &mut r,
                &mut beta_p,
                &mut b0,
                100_000,
                1e-12 * sigma / sqrt_n,
            );
            // refresh to avoid drift from incremental updates
            r = &bp - &ap.dot(&beta_p);
            let new_sigma = norm2(r.view()) / sqrt_n;
            if new_sigma < DEGENERATE_SIGMA {
                degenerate = true;
                break;
            }
            let change = (new_sigma - sigma).abs();
            sigma = new_sigma;
            if change <= SIGMA_REL_TOL * sigma {
                converged = true;
                break;
            }
        }
    }

    for v in beta_p.iter_mut() {
        if v.abs() < SUPPORT_EPS {
            *v = 0.0;
        }
    }
    let mut beta = Array1::<f64>::zeros(p);
    for (k, &j) in penalized.iter().enumerate() {
        beta[j] = beta_p[k];
    }
    if !exempt.is_empty() {
        let mut rest = b.clone();
        for (k, &j) in penalized.iter().enumerate() {
            if beta_p[k] != 0.0 {
                rest.scaled_add(-beta_p[k], &a.column(j));
            }
        }
        let be = basis.least_squares(rest.view());
        for (k, &j) in exempt.iter().enumerate() {
            beta[j] = be[k];
        }
    }

    let residual_norm = norm2(r.view());
    let (mut penalized_ortho, mut exempt_ortho) = (0.0f64, 0.0f64);
    if !degenerate {
        for &j in &penalized {
            penalized_ortho = penalized_ortho.max(a.column(j).dot(&r).abs() / residual_norm);
        }
        for &j in &exempt {
            let col = a.column(j);
            exempt_ortho = exempt_ortho.max(col.dot(&r).abs() / (residual_norm * norm2(col)));
        }
    }
    Ok(SqrtLassoFit {
        beta,
        lambda_sq,
        residual: r,
        residual_norm,
        degenerate,
        exempt_set: exempt,
        penalized_ortho,
        exempt_ortho,
        iterations,
        converged: converged || degenerate,
    })
}

/// Unit-normalized residual of a non-degenerate fit.
pub fn direction_from_sqrt_lasso(fit: &SqrtLassoFit) -> Result<Direction> {
    if fit.degenerate {
        return Err(GrpError::Degenerate(format!(
            "square-root lasso residual norm {:e} is numerically zero",
            fit.residual_norm
        )));
    }
    Direction::from_vector(fit.residual.view())
}

#[derive(Debug, Clone)]
pub struct NodewiseFit {
    pub gamma: Array1<f64>,
    pub intercept: f64,
    pub direction: Direction,
    /// `||X_{-G}' D w||_∞`.
    pub near_ortho: f64,
}

/// Square-root Lasso of `x_j` on `x_rest` and its unit residual direction.
/// With `intercept`, a constant column is added and left unpenalized.
pub fn nodewise_sqrt_lasso(
    x_rest: ArrayView2<f64>,
    x_j: ArrayView1<f64>,
    weights: &WeightDiag,
    lambda_nw: f64,
    intercept: bool,
) -> Result<NodewiseFit> {
    let (n, q) = x_rest.dim();
    let (design, exempt, offset) = if intercept {
        let mut d = Array2::ones((n, q + 1).f());
        d.slice_mut(ndarray::s![.., 1..]).assign(&x_rest);
        (d, vec![0], 1)
    } else {
        (x_rest.to_owned(), vec![], 0)
    };
    let fit = sqrt_lasso(design.view(), x_j, weights, lambda_nw, &exempt)?;
    let direction = direction_from_sqrt_lasso(&fit).map_err(|_| {
        GrpError::Degenerate(format!(
            "nodewise residual vanished (norm {:e}); the column lies in the span of the others",
            fit.residual_norm
        ))
    })?;
    let dw = weights.scale(direction.view());
    let near_ortho = x_rest.t().dot(&dw).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(NodewiseFit {
        gamma: fit.beta.slice(ndarray::s![offset..]).to_owned(),
        intercept: if intercept { fit.beta[0] } else { 0.0 },
        direction,
        near_ortho,
    })
}
