//! Dense kernels over row-major buffers, backed by faer.
//!
//! All products run single-threaded inside faer so results do not depend on
//! the worker count; parallelism lives in residual assembly instead.

use faer::linalg::matmul::triangular::{matmul as triangular_matmul, BlockStructure};
use faer::prelude::*;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

fn view(buf: &[f64], rows: usize, cols: usize) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(buf, rows, cols)
}

fn mirror_lower(mut a: Mat<f64>) -> Mat<f64> {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            a[(i, j)] = a[(j, i)];
        }
    }
    a
}

/// `J^T J` for a row-major `m x p` matrix; symmetric by construction.
pub fn normal_matrix(j: &[f64], m: usize, p: usize) -> Mat<f64> {
    let jv = view(j, m, p);
    let mut a = Mat::<f64>::zeros(p, p);
    triangular_matmul(
        a.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        jv.transpose(),
        BlockStructure::Rectangular,
        jv,
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    mirror_lower(a)
}

/// `G G^T` for a row-major `m x p` matrix; symmetric by construction.
pub fn row_gram(g: &[f64], m: usize, p: usize) -> Mat<f64> {
    let gv = view(g, m, p);
    let mut k = Mat::<f64>::zeros(m, m);
    triangular_matmul(
        k.as_mut(),
        BlockStructure::TriangularLower,
        Accum::Replace,
        gv,
        BlockStructure::Rectangular,
        gv.transpose(),
        BlockStructure::Rectangular,
        1.0,
        Par::Seq,
    );
    mirror_lower(k)
}

/// `J^T r`.
pub fn transpose_times(j: &[f64], m: usize, p: usize, r: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (row, &ri) in j.chunks_exact(p).zip(r).take(m) {
        if ri != 0.0 {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += ri * v;
            }
        }
    }
    out
}

/// `J v`.
pub fn times(j: &[f64], m: usize, p: usize, v: &[f64]) -> Vec<f64> {
    j.chunks_exact(p).take(m).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Solves `A x = b` for symmetric positive definite `A` (lower triangle read).
pub fn solve_spd(a: &Mat<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.nrows();
    let llt = a.llt(Side::Lower).ok()?;
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = llt.solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Eigenvalues of a symmetric matrix, sorted in descending order.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    let ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::InvalidArgument(format!("eigensolver failed: {e:?}")))?;
    let mut ev: Vec<f64> = ev.into_iter().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

pub fn from_row_major(buf: &[f64], n: usize) -> Mat<f64> {
    Mat::<f64>::from_fn(n, n, |i, j| buf[i * n + j])
}

pub fn to_row_major(a: &Mat<f64>) -> Vec<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Determinant of a small row-major square matrix by partial-pivot
/// elimination.
pub fn small_det(a: &[f64], n: usize) -> f64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut m = a.to_vec();
            let mut det = 1.0;
            for c in 0..n {
                let piv = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).unwrap();
                if m[piv * n + c] == 0.0 {
                    return 0.0;
                }
                if piv != c {
                    for k in 0..n {
                        m.swap(piv * n + k, c * n + k);
                    }
                    det = -det;
                }
                det *= m[c * n + c];
                for r in c + 1..n {
                    let f = m[r * n + c] / m[c * n + c];
                    for k in c..n {
                        m[r * n + k] -= f * m[c * n + k];
                    }
                }
            }
            det
        }
    }
}
