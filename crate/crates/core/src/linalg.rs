//! Dense/sparse glue used by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;

use crate::error::{Error, Result};

pub fn to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    restrict(m, &(0..m.nrows()).collect::<Vec<_>>(), &(0..m.ncols()).collect::<Vec<_>>())
}

/// Dense submatrix `m[rows, cols]`. Both index lists must be sorted.
pub fn restrict(m: &CsrMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let mut col_pos = vec![usize::MAX; m.ncols()];
    for (j, &c) in cols.iter().enumerate() {
        col_pos[c] = j;
    }
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        let row = m.row(r);
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            let j = col_pos[c];
            if j != usize::MAX {
                out[(i, j)] += v;
            }
        }
    }
    out
}

/// Scatters a vector on `free` indices into a zero vector of length `n`.
pub fn lift(free: &[usize], x: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (&i, &v) in free.iter().zip(x.iter()) {
        out[i] = v;
    }
    out
}

pub fn gather(free: &[usize], x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(free.len(), free.iter().map(|&i| x[i]))
}

pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Factorization("matrix is not positive definite on the free DOFs".into()))
}

/// Numerical rank by column-pivoted QR with threshold `rel_tol · max|R_ii|`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    // QR wants at least as many rows as columns for a full diagonal
    let a = if m.nrows() >= m.ncols() { m.clone() } else { m.transpose() };
    let r = a.col_piv_qr().r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    diag.iter().filter(|&&d| d > rel_tol * max).count()
}

/// Orthonormal (Euclidean) basis of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let mut gram = m.transpose() * m;
    symmetrize(&mut gram);
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.amax();
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= rel_tol * max.max(f64::MIN_POSITIVE))
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm solution of a symmetric positive semidefinite system via
/// its eigendecomposition, dropping eigenvalues below `rel_tol · max`.
pub fn psd_pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    if a.nrows() == 0 {
        return DVector::zeros(0);
    }
    let mut s = a.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.amax();
    let mut out = DVector::zeros(a.nrows());
    for i in 0..a.nrows() {
        let l = eig.eigenvalues[i];
        if l > rel_tol * max {
            let v = eig.eigenvectors.column(i);
            out += v * (v.dot(b) / l);
        }
    }
    out
}

/// Column-wise [`psd_pseudo_solve`] for several right-hand sides.
pub fn psd_pseudo_solve_many(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let mut s = a.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.amax();
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        let l = eig.eigenvalues[i];
        if l > rel_tol * max {
            let v = eig.eigenvectors.column(i);
            let coef = v.transpose() * b / l;
            out += v * coef;
        }
    }
    out
}
