//! Thin adapters between nalgebra storage and faer's sparse Cholesky.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Symmetric sparse matrix assembled from triplets; duplicates are summed.
#[derive(Debug, Clone)]
pub struct SymmetricSparse {
    csr: CsrMatrix<f64>,
}

impl SymmetricSparse {
    pub fn from_triplets(n: usize, rows: &[usize], cols: &[usize], vals: &[f64]) -> Self {
        let coo = CooMatrix::try_from_triplets(n, n, rows.to_vec(), cols.to_vec(), vals.to_vec())
            .expect("triplet indices in range");
        SymmetricSparse {
            csr: CsrMatrix::from(&coo),
        }
    }

    pub fn dim(&self) -> usize {
        self.csr.nrows()
    }

    pub fn csr(&self) -> &CsrMatrix<f64> {
        &self.csr
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.csr.nrows(),
            self.csr
                .row_iter()
                .map(|row| row.col_indices().iter().zip(row.values()).map(|(&j, &v)| v * x[j]).sum()),
        )
    }

    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.mul_vec(x))
    }

    /// Largest entry of `|K - K^T|` relative to the largest entry of `|K|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.csr.transpose();
        let diff = &self.csr - &t;
        let max = self.csr.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let d = diff.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            0.0
        } else {
            d / max
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, &v) in self.csr.triplet_iter() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn cholesky(&self) -> Result<SparseCholesky> {
        let n = self.dim();
        let triplets: Vec<Triplet<usize, usize, f64>> = self
            .csr
            .triplet_iter()
            .filter(|(i, j, _)| i >= j)
            .map(|(i, j, &v)| Triplet::new(i, j, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Numerical(format!("sparse matrix construction failed: {e:?}")))?;
        let llt = mat.sp_cholesky(Side::Lower).map_err(|e| {
            let (lo, hi) = diagonal_range(&self.csr);
            Error::Numerical(format!(
                "sparse Cholesky failed ({e:?}); diagonal range [{lo:e}, {hi:e}]"
            ))
        })?;
        Ok(SparseCholesky { n, llt })
    }
}

fn diagonal_range(csr: &CsrMatrix<f64>) -> (f64, f64) {
    csr.triplet_iter()
        .filter(|(i, j, _)| i == j)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, _, &v)| (lo.min(v), hi.max(v)))
}

/// Immutable sparse `L L^T` factorization, reusable for any number of
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl SparseCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(rhs.nrows(), self.n, "right-hand side height");
        let mut m = Mat::<f64>::from_fn(rhs.nrows(), rhs.ncols(), |i, j| rhs[(i, j)]);
        self.llt.solve_in_place(m.as_mut());
        DMatrix::from_fn(rhs.nrows(), rhs.ncols(), |i, j| m[(i, j)])
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        DVector::from_column_slice(self.solve(&m).as_slice())
    }
}

/// Dense symmetric positive-definite solve with a Cholesky factorization;
/// `what` names the matrix in the error.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Sparse times dense product with a CSR left factor.
pub fn csr_mul_dense(a: &CsrMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for (i, row) in a.row_iter().enumerate() {
        for (&k, &v) in row.col_indices().iter().zip(row.values()) {
            for j in 0..b.ncols() {
                out[(i, j)] += v * b[(k, j)];
            }
        }
    }
    out
}

/// Trace of the product of a sparse and a dense matrix.
pub fn trace_csr_dense(a: &CsrMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.triplet_iter().map(|(i, k, &v)| v * b[(k, i)]).sum()
}

/// Principal submatrix `a[idx, idx]`.
pub fn restrict_csr(a: &CsrMatrix<f64>, idx: &[usize]) -> CsrMatrix<f64> {
    let mut slot = vec![usize::MAX; a.nrows()];
    for (k, &i) in idx.iter().enumerate() {
        slot[i] = k;
    }
    let mut coo = CooMatrix::new(idx.len(), idx.len());
    for (i, j, &v) in a.triplet_iter() {
        if slot[i] != usize::MAX && slot[j] != usize::MAX {
            coo.push(slot[i], slot[j], v);
        }
    }
    CsrMatrix::from(&coo)
}
