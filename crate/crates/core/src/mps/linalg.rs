//! Row-major dense helpers on top of faer.

use std::sync::Once;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

/// Pin faer to sequential kernels so results never depend on thread count.
pub(crate) fn ensure_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// `a (m×k) · b (k×n)`, all row-major.
pub(crate) fn matmul_rm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 {
        return out;
    }
    let lhs = MatRef::from_row_major_slice(a, m, k);
    let rhs = MatRef::from_row_major_slice(b, k, n);
    let dst = MatMut::from_row_major_slice_mut(&mut out, m, n);
    matmul(dst, Accum::Replace, lhs, rhs, 1.0, Par::Seq);
    out
}

/// `aᵀ · b` with `a (k×m)` and `b (k×n)` row-major.
pub(crate) fn matmul_tn(a: &[f64], k: usize, m: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 {
        return out;
    }
    let lhs = MatRef::from_row_major_slice(a, k, m).transpose();
    let rhs = MatRef::from_row_major_slice(b, k, n);
    let dst = MatMut::from_row_major_slice_mut(&mut out, m, n);
    matmul(dst, Accum::Replace, lhs, rhs, 1.0, Par::Seq);
    out
}

pub(crate) fn to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Thin SVD of a row-major `m×n` matrix: `(U m×k, S, Vᵀ k×n)` row-major.
///
/// The input is rescaled to unit max-norm first. If the iteration fails to
/// converge, the transpose and then a QR-preconditioned factorization are tried.
pub(crate) fn svd_rm(a: &[f64], m: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let top = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if !top.is_finite() {
        return Err(Error::Svd);
    }
    let k = m.min(n);
    if top == 0.0 {
        let mut u = vec![0.0; m * k];
        let mut vt = vec![0.0; k * n];
        for i in 0..k {
            u[i * k + i] = 1.0;
            vt[i * n + i] = 1.0;
        }
        return Ok((u, vec![0.0; k], vt));
    }
    let scaled: Vec<f64> = a.iter().map(|x| x / top).collect();
    let (u, mut s, vt) = svd_direct(&scaled, m, n)
        .or_else(|| {
            let t = transpose(&scaled, m, n);
            svd_direct(&t, n, m).map(|(u, s, vt)| (transpose(&vt, k, m), s, transpose(&u, n, k)))
        })
        .or_else(|| svd_via_qr(&scaled, m, n))
        .ok_or(Error::Svd)?;
    s.iter_mut().for_each(|x| *x *= top);
    Ok((u, s, vt))
}

fn svd_direct(a: &[f64], m: usize, n: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let svd = MatRef::from_row_major_slice(a, m, n).thin_svd().ok()?;
    let s: Vec<f64> = (0..m.min(n)).map(|i| svd.S()[i]).collect();
    let (u, vt) = (to_row_major(svd.U()), to_row_major(svd.V().transpose()));
    if s.iter().chain(&u).chain(&vt).any(|x| !x.is_finite()) {
        return None;
    }
    Some((u, s, vt))
}

fn svd_via_qr(a: &[f64], m: usize, n: usize) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if m >= n {
        let (q, r) = qr_rm(a, m, n);
        let (ur, s, vt) = svd_direct(&r, n, n)?;
        Some((matmul_rm(&q, m, n, &ur, n), s, vt))
    } else {
        let (l, q) = lq_rm(a, m, n);
        let (u, s, vl) = svd_direct(&l, m, m)?;
        Some((u, s, matmul_rm(&vl, m, m, &q, n)))
    }
}

fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// Thin QR of a row-major `m×n` matrix: `(Q m×k, R k×n)` row-major, `k = min(m, n)`.
pub(crate) fn qr_rm(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mat = MatRef::from_row_major_slice(a, m, n);
    let qr = mat.qr();
    let q: Mat<f64> = qr.compute_thin_Q();
    let r = qr.thin_R();
    (to_row_major(q.as_ref()), to_row_major(r))
}

/// Thin LQ of a row-major `m×n` matrix: `(L m×k, Q k×n)` row-major, `k = min(m, n)`.
pub(crate) fn lq_rm(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mat = MatRef::from_row_major_slice(a, m, n).transpose();
    let qr = mat.qr();
    let q: Mat<f64> = qr.compute_thin_Q();
    let r = qr.thin_R();
    (to_row_major(r.transpose()), to_row_major(q.as_ref().transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_and_factorizations() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        assert_eq!(matmul_rm(&a, 2, 3, &b, 2), vec![4.0, 5.0, 10.0, 11.0]);
        // aᵀ (3x2) · a (2x3)
        let ata = matmul_tn(&a, 2, 3, &a, 3);
        assert_eq!(ata[0], 17.0);
        assert_eq!(ata[4], 29.0);

        let (u, s, vt) = svd_rm(&a, 2, 3).unwrap();
        let us: Vec<f64> = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| u[i * 2 + j] * s[j]).collect();
        let back = matmul_rm(&us, 2, 2, &vt, 3);
        for (x, y) in back.iter().zip(a) {
            assert!((x - y).abs() < 1e-12);
        }
        let (q, r) = qr_rm(&a, 2, 3);
        let back = matmul_rm(&q, 2, 2, &r, 3);
        for (x, y) in back.iter().zip(a) {
            assert!((x - y).abs() < 1e-12);
        }
        let (l, q) = lq_rm(&a, 2, 3);
        let back = matmul_rm(&l, 2, 2, &q, 3);
        for (x, y) in back.iter().zip(a) {
            assert!((x - y).abs() < 1e-12);
        }
        let qqt = matmul_rm(&q, 2, 3, &[q[0], q[3], q[1], q[4], q[2], q[5]], 2);
        assert!((qqt[0] - 1.0).abs() < 1e-12 && qqt[1].abs() < 1e-12);
    }
}
