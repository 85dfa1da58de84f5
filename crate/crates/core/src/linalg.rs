//! Orthogonal projection onto a set of columns, via modified Gram-Schmidt
//! with one re-orthogonalization pass.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

const RANK_TOL: f64 = 1e-10;

#[inline]
pub(crate) fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

#[derive(Debug, Clone)]
pub(crate) struct OrthoBasis {
    /// Orthonormal columns, one per kept input column.
    q: Vec<Array1<f64>>,
    /// Upper-triangular factor restricted to kept columns: `A_kept = Q R`.
    r: Array2<f64>,
    /// Positions (in the input) of linearly independent columns.
    kept: Vec<usize>,
    ncols: usize,
}

impl OrthoBasis {
    pub fn new(a: ArrayView2<f64>) -> Self {
        let ncols = a.ncols();
        let mut q: Vec<Array1<f64>> = Vec::with_capacity(ncols);
        let mut kept = Vec::with_capacity(ncols);
        let mut r = Array2::zeros((ncols, ncols));
        for j in 0..ncols {
            let col = a.column(j);
            let orig = norm2(col);
            if orig == 0.0 {
                continue;
            }
            let mut v = col.to_owned();
            let mut coef = vec![0.0; q.len()];
            for _pass in 0..2 {
                for (k, qk) in q.iter().enumerate() {
                    let c = qk.dot(&v);
                    v.scaled_add(-c, qk);
                    coef[k] += c;
                }
            }
            let nv = norm2(v.view());
            if nv <= RANK_TOL * orig {
                continue;
            }
            let slot = q.len();
            for (k, c) in coef.iter().enumerate() {
                r[[k, slot]] = *c;
            }
            r[[slot, slot]] = nv;
            v /= nv;
            q.push(v);
            kept.push(j);
        }
        let rank = q.len();
        let r = r.slice(ndarray::s![..rank, ..rank]).to_owned();
        OrthoBasis { q, r, kept, ncols }
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    /// `v <- (I - QQ') v`, applied twice.
    pub fn project_out(&self, v: &mut Array1<f64>) {
        for _ in 0..2 {
            for qk in &self.q {
                let c = qk.dot(v);
                v.scaled_add(-c, qk);
            }
        }
    }

    /// Least-squares coefficients of `v` on the input columns. Dependent
    /// columns get coefficient zero.
    pub fn least_squares(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let rank = self.rank();
        let qtv: Vec<f64> = self.q.iter().map(|qk| qk.dot(&v)).collect();
        let mut c = vec![0.0; rank];
        for i in (0..rank).rev() {
            let mut s = qtv[i];
            for k in i + 1..rank {
                s -= self.r[[i, k]] * c[k];
            }
            c[i] = s / self.r[[i, i]];
        }
        let mut out = Array1::zeros(self.ncols);
        for (slot, &j) in self.kept.iter().enumerate() {
            out[j] = c[slot];
        }
        out
    }
}
