//! Randomized truncated SVD (range finder with power iterations).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Anything that can be multiplied by a dense block from the left, directly
/// or transposed.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `self * x`
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// `self^T * x`
    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(x)
    }
}

/// Sparse 0/1 matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct BinaryCsr {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
}

impl BinaryCsr {
    /// Rows given as column-index lists; duplicates within a row collapse.
    pub fn from_rows(rows: &[Vec<u32>], n_cols: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in rows {
            let mut r = row.clone();
            r.sort_unstable();
            r.dedup();
            debug_assert!(r.last().is_none_or(|&c| (c as usize) < n_cols));
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols,
            row_ptr,
            cols,
        }
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for &c in self.row(r) {
                m[(r, c as usize)] = 1.0;
            }
        }
        m
    }
}

impl LinearOperator for BinaryCsr {
    fn nrows(&self) -> usize {
        self.n_rows
    }
    fn ncols(&self) -> usize {
        self.n_cols
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, x.ncols());
        for j in 0..x.ncols() {
            let xc = x.column(j);
            for r in 0..self.n_rows {
                out[(r, j)] = self.row(r).iter().map(|&c| xc[c as usize]).sum();
            }
        }
        out
    }
    fn apply_transpose(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_cols, x.ncols());
        for j in 0..x.ncols() {
            for r in 0..self.n_rows {
                let v = x[(r, j)];
                if v != 0.0 {
                    for &c in self.row(r) {
                        out[(c as usize, j)] += v;
                    }
                }
            }
        }
        out
    }
}

/// Rank-r factors with `a ≈ u * diag(s) * vt`, singular values descending.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub vt: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * &self.vt
    }
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Randomized SVD: Gaussian sketch of `rank + oversampling` columns,
/// `n_power_iterations` re-orthonormalized power iterations, then an exact
/// SVD of the small projected matrix.
pub fn randomized_svd<A: LinearOperator, R: Rng>(
    a: &A,
    rank: usize,
    oversampling: usize,
    n_power_iterations: usize,
    rng: &mut R,
) -> Result<TruncatedSvd> {
    let (m, n) = (a.nrows(), a.ncols());
    let limit = m.min(n);
    if rank == 0 || rank > limit {
        return Err(Error::RankTooLarge { rank, limit });
    }
    let width = (rank + oversampling).min(limit);

    let omega = DMatrix::from_fn(n, width, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormal_basis(a.apply(&omega));
    for _ in 0..n_power_iterations {
        let z = orthonormal_basis(a.apply_transpose(&q));
        q = orthonormal_basis(a.apply(&z));
    }

    // b = q^T a, formed as (a^T q)^T
    let b = a.apply_transpose(&q).transpose();
    let svd = b.svd(true, true);
    let ub = svd
        .u
        .ok_or_else(|| Error::Serialization("svd produced no U".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Serialization("svd produced no V^T".into()))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    let keep = &order[..rank];

    let u_small = DMatrix::from_fn(ub.nrows(), rank, |r, c| ub[(r, keep[c])]);
    let vt = DMatrix::from_fn(rank, n, |r, c| vt[(keep[r], c)]);
    let singular_values = keep.iter().map(|&i| svd.singular_values[i]).collect();
    Ok(TruncatedSvd {
        u: q * u_small,
        singular_values,
        vt,
    })
}
