//! The Sobolev (Matérn-family) reproducing kernel on `R^d` and Gram matrices.
//!
//! For smoothness `s > d/2` the kernel of `W^s(R^d)` is
//!
//! ```text
//! k(x, y) = 2^{1-s} / Gamma(s) * r^{s - d/2} * K_{d/2 - s}(r),   r = |x - y|_2
//! ```
//!
//! which is translation invariant and bounded by its diagonal value
//! `2^{-d/2} Gamma(s - d/2) / Gamma(s)`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::special_fn::{gamma, BesselOrder};

/// Below this distance the product `r^nu K_nu(r)` is replaced by its limit.
pub const R_MIN: f64 = 1e-10;

/// Dimension and smoothness of the RKHS, with the cached diagonal `kappa^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    d: usize,
    s: f64,
    kappa_sq: f64,
    order: BesselOrder,
    log_norm: f64,
}

impl KernelParams {
    /// Rejects `s <= d/2`, where point evaluation is unbounded.
    pub fn new(d: usize, s: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParams("dimension d must be positive".into()));
        }
        let kappa_sq = diagonal_value(d, s)?;
        let order = BesselOrder::new(d as f64 / 2.0 - s)?;
        let log_norm = (1.0 - s) * std::f64::consts::LN_2 - gamma(s)?.ln();
        Ok(KernelParams { d, s, kappa_sq, order, log_norm })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `kappa^2 = sup_x k(x, x)`.
    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }

    /// Bessel order `nu = s - d/2` of the radial profile.
    pub fn nu(&self) -> f64 {
        self.order.value()
    }

    /// Kernel as a function of the distance `r >= 0`.
    pub fn radial(&self, r: f64) -> f64 {
        if r <= R_MIN {
            return self.kappa_sq;
        }
        let nu = self.order.value();
        match self.order.eval(r) {
            Ok(k) => (self.log_norm + nu * r.ln()).exp() * k,
            // K_nu(r) only overflows for tiny r, where the limit applies.
            Err(_) => self.kappa_sq,
        }
    }
}

/// `k(x, x)`: the `r -> 0` limit `2^{-d/2} Gamma(s - d/2) / Gamma(s)`.
pub fn diagonal_value(d: usize, s: f64) -> Result<f64> {
    let half_d = d as f64 / 2.0;
    if !s.is_finite() || s <= half_d {
        return Err(Error::Domain(format!("smoothness must satisfy s > d/2 = {half_d}, got {s}")));
    }
    Ok((-half_d * std::f64::consts::LN_2).exp() * gamma(s - half_d)? / gamma(s)?)
}

/// Euclidean distance between two points of equal dimension.
#[inline]
pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Evaluates `k(x, y)`.
///
/// ```
/// use kaar::kernel::{kernel_eval, KernelParams};
/// let p = KernelParams::new(1, 1.0).unwrap();
/// let k = kernel_eval(&p, &[0.0], &[0.7]).unwrap();
/// let closed = (std::f64::consts::PI / 2.0).sqrt() * (-0.7f64).exp();
/// assert!((k - closed).abs() < 1e-14);
/// ```
pub fn kernel_eval(params: &KernelParams, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(params.d, x.len())?;
    check_dim(params.d, y.len())?;
    Ok(params.radial(distance(x, y)))
}

/// Symmetric kernel matrix `K[i][j] = k(x_i, x_j)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    /// Wraps an existing row-major buffer; the caller vouches for symmetry.
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: entries.len() });
        }
        Ok(GramMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        linalg::max_asymmetry(&self.entries, self.n)
    }

    /// Eigenvalues, nonincreasing.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::symmetric_eigenvalues(&self.entries, self.n)
    }

    /// `K + tau I` as a fresh row-major buffer.
    pub fn shifted(&self, tau: f64) -> Vec<f64> {
        let mut a = self.entries.clone();
        for i in 0..self.n {
            a[i * self.n + i] += tau;
        }
        a
    }

    /// Debug dump, row-major with header `i,j,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,value")?;
        for i in 0..self.n {
            for j in 0..self.n {
                writeln!(w, "{i},{j},{}", self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Assembles the Gram matrix of `points`, evaluating each unordered pair once.
pub fn gram(params: &KernelParams, points: &[Vec<f64>]) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::Empty("gram requires at least one point"));
    }
    for p in points {
        check_dim(params.d, p.len())?;
    }
    let n = points.len();
    let mut entries = vec![0.0; n * n];
    // Each row owns its upper-triangular part; mirrored afterwards.
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        row[i] = params.kappa_sq;
        for j in i + 1..n {
            row[j] = params.radial(distance(&points[i], &points[j]));
        }
    });
    for i in 0..n {
        for j in i + 1..n {
            entries[j * n + i] = entries[i * n + j];
        }
    }
    Ok(GramMatrix { n, entries })
}
