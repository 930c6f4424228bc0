//! Dense linear algebra used by the forecaster and the effective dimension.
//!
//! Matrices are row-major `Vec<f64>` buffers. The growing Cholesky factor of
//! the forecaster is stored column-packed ([`PackedUpper`]) so that appending
//! a column is a push and forward substitution walks contiguous memory.

use crate::error::{Error, Result};

// LAPACK symbols come from the system OpenBLAS.
#[link(name = "openblas")]
extern "C" {}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

/// Upper-triangular factor `R` stored column by column: column `j` holds
/// `R[0..=j][j]` contiguously, so `R^T` rows are contiguous too.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PackedUpper {
    n: usize,
    data: Vec<f64>,
}

impl PackedUpper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        PackedUpper { n: 0, data: Vec::with_capacity(n * (n + 1) / 2) }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn col_start(j: usize) -> usize {
        j * (j + 1) / 2
    }

    /// Column `j` above and on the diagonal.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let s = Self::col_start(j);
        &self.data[s..s + j + 1]
    }

    /// Entry `R[i][j]`; zero below the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > j {
            0.0
        } else {
            self.data[Self::col_start(j) + i]
        }
    }

    pub fn diag(&self, j: usize) -> f64 {
        self.data[Self::col_start(j) + j]
    }

    /// Appends column `(r, pivot)`, growing the factor by one.
    pub fn push_column(&mut self, r: &[f64], pivot: f64) {
        debug_assert_eq!(r.len(), self.n);
        self.data.extend_from_slice(r);
        self.data.push(pivot);
        self.n += 1;
    }

    /// Solves `R^T r = b` (forward substitution).
    pub fn solve_transposed(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut r = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let col = self.column(i);
            let s = dot(&col[..i], &r);
            r.push((b[i] - s) / col[i]);
        }
        r
    }

    /// Solves `R c = z` (back substitution).
    pub fn solve(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.n);
        let mut c = z.to_vec();
        for j in (0..self.n).rev() {
            let col = self.column(j);
            c[j] /= col[j];
            let cj = c[j];
            for (ci, &rij) in c[..j].iter_mut().zip(&col[..j]) {
                *ci -= rij * cj;
            }
        }
        c
    }

    /// Dense row-major `R^T R`.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let m = i.min(j) + 1;
                let v = dot(&self.column(i)[..m], &self.column(j)[..m]);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }

    /// Upper Cholesky factor of a dense symmetric positive-definite matrix.
    pub fn factorize(a: &[f64], n: usize) -> Result<Self> {
        check_square(a, n)?;
        let mut f = PackedUpper::with_capacity(n);
        for j in 0..n {
            let b: Vec<f64> = (0..j).map(|i| a[i * n + j]).collect();
            let r = f.solve_transposed(&b);
            let pivot_sq = a[j * n + j] - dot(&r, &r);
            if !(pivot_sq > 0.0) {
                return Err(Error::Numerical(format!("non-positive pivot {pivot_sq:e} at column {j}")));
            }
            f.push_column(&r, pivot_sq.sqrt());
        }
        Ok(f)
    }
}

fn check_square(a: &[f64], n: usize) -> Result<()> {
    if a.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: a.len() });
    }
    Ok(())
}

/// Solves the SPD system `A x = b` by a fresh Cholesky factorization.
pub fn cholesky_solve(a: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let f = PackedUpper::factorize(a, n)?;
    Ok(f.solve(&f.solve_transposed(b)))
}

/// Trace of `A^{-1}` for SPD `A`, as the squared Frobenius norm of `R^{-T}`.
pub fn trace_of_inverse(a: &[f64], n: usize) -> Result<f64> {
    let f = PackedUpper::factorize(a, n)?;
    let mut total = 0.0;
    let mut e = vec![0.0; n];
    for k in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[k] = 1.0;
        // Column k of R^{-T} has zeros above row k; solve only the tail.
        let w = f.solve_transposed(&e);
        total += dot(&w[k..], &w[k..]);
    }
    Ok(total)
}

/// Eigenvalues of a dense symmetric matrix, in nonincreasing order.
///
/// Uses LAPACK's two-stage tridiagonal reduction (`dsyev_2stage`), which
/// keeps an eigenvalues-only solve on an 8192-square Gram matrix within a
/// couple of minutes on one core.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    check_square(a, n)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let n_i = i32::try_from(n).map_err(|_| Error::InvalidParams(format!("matrix too large: {n}")))?;
    let mut buf = a.to_vec();
    let mut w = vec![0.0; n];
    let jobz = b'N' as std::os::raw::c_char;
    let uplo = b'L' as std::os::raw::c_char;
    let mut info = 0;
    let mut query = 0.0;
    let lwork_query = -1;
    // SAFETY: all pointers reference live buffers of the sizes LAPACK expects
    // (n*n for A, n for W, lwork for work); the workspace query writes one f64.
    unsafe {
        lapack_sys::dsyev_2stage_(
            &jobz,
            &uplo,
            &n_i,
            buf.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            &mut query,
            &lwork_query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("dsyev_2stage workspace query failed: info={info}")));
    }
    let lwork = (query as usize).max(1);
    let lwork_i = i32::try_from(lwork).map_err(|_| Error::Numerical("workspace too large".into()))?;
    let mut work = vec![0.0; lwork];
    unsafe {
        lapack_sys::dsyev_2stage_(
            &jobz,
            &uplo,
            &n_i,
            buf.as_mut_ptr(),
            &n_i,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork_i,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numerical(format!("symmetric eigensolver failed: info={info}")));
    }
    w.reverse();
    Ok(w)
}

/// Largest absolute asymmetry `|A_ij - A_ji|`.
pub fn max_asymmetry(a: &[f64], n: usize) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((a[i * n + j] - a[j * n + i]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (-((i as f64 - j as f64).abs()) * 0.3).exp();
            }
            a[i * n + i] += 0.5;
        }
        a
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..7).map(|i| i as f64).collect();
        assert_eq!(dot(&a, &a), 91.0);
        assert_eq!(dot(&[], &[]), 0.0);
    }

    #[test]
    fn factorization_reproduces_matrix() {
        let n = 9;
        let a = spd(n);
        let f = PackedUpper::factorize(&a, n).unwrap();
        let g = f.gram();
        for (x, y) in a.iter().zip(&g) {
            assert!((x - y).abs() < 1e-13);
        }
        assert_eq!(f.get(3, 1), 0.0);
    }

    #[test]
    fn solve_round_trip() {
        let n = 6;
        let a = spd(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = cholesky_solve(&a, n, &b).unwrap();
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(PackedUpper::factorize(&a, 2), Err(Error::Numerical(_))));
        assert!(PackedUpper::factorize(&a, 3).is_err());
    }

    #[test]
    fn eigenvalues_of_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let ev = symmetric_eigenvalues(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((ev[0] - 3.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
        assert!(symmetric_eigenvalues(&[], 0).unwrap().is_empty());
    }

    #[test]
    fn trace_of_inverse_matches_eigenvalues() {
        let n = 12;
        let a = spd(n);
        let ev = symmetric_eigenvalues(&a, n).unwrap();
        let direct: f64 = ev.iter().map(|l| 1.0 / l).sum();
        assert!((trace_of_inverse(&a, n).unwrap() - direct).abs() < 1e-11);
    }
}
