//! Effective dimension `d_eff(tau) = Tr((K + tau I)^{-1} K) = sum_j l_j / (l_j + tau)`.
//!
//! One symmetric eigendecomposition serves any number of `tau` values, so
//! grid studies factor the Gram matrix once per point set.

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::linalg;
use crate::stats::{log_log_fit, LineFit};

/// Relative threshold below which an eigenvalue does not count towards the rank.
pub const RANK_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EffDimReport {
    pub n: usize,
    pub tau: f64,
    pub value: f64,
    /// Gram eigenvalues, nonincreasing, negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
}

impl EffDimReport {
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `#{l_j > 1e-12 l_1}`.
    pub fn rank_proxy(&self) -> usize {
        let cut = RANK_REL_TOL * self.lambda_max();
        self.eigenvalues.iter().filter(|&&l| l > cut).count()
    }

    /// Same spectrum at another scale.
    pub fn at_tau(&self, tau: f64) -> Result<EffDimReport> {
        from_eigenvalues(self.eigenvalues.clone(), tau)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("tau must be positive and finite, got {tau}")))
    }
}

/// Symmetry tolerance relative to the largest absolute entry.
const SYMMETRY_REL_TOL: f64 = 1e-12;

/// Eigenvalue form of the effective dimension.
///
/// ```
/// use kaar::{effdim::effective_dimension, kernel::{gram, KernelParams}};
/// let p = KernelParams::new(1, 1.0).unwrap();
/// let k = gram(&p, &[vec![0.0]]).unwrap();
/// let r = effective_dimension(&k, p.kappa_sq()).unwrap();
/// assert!((r.value - 0.5).abs() < 1e-15);
/// ```
pub fn effective_dimension(gram: &GramMatrix, tau: f64) -> Result<EffDimReport> {
    check_tau(tau)?;
    let scale = gram.entries().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let asym = gram.max_asymmetry();
    if !(asym <= SYMMETRY_REL_TOL * scale) {
        return Err(Error::Numerical(format!("Gram matrix is not symmetric (max asymmetry {asym:e})")));
    }
    from_eigenvalues(gram.eigenvalues()?, tau)
}

/// Builds a report from a spectrum, clamping roundoff negatives to zero.
pub fn from_eigenvalues(mut eigenvalues: Vec<f64>, tau: f64) -> Result<EffDimReport> {
    check_tau(tau)?;
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }
    eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    // Ascending order adds the small terms first.
    let value = eigenvalues.iter().rev().map(|&l| l / (l + tau)).sum();
    Ok(EffDimReport { n: eigenvalues.len(), tau, value, eigenvalues })
}

/// Trace form `n - tau Tr((K + tau I)^{-1})`, via one Cholesky factorization.
pub fn effective_dimension_trace(gram: &GramMatrix, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let n = gram.n();
    let inv_trace = linalg::trace_of_inverse(&gram.shifted(tau), n)?;
    Ok(n as f64 - tau * inv_trace)
}

/// OLS of `log d_eff` on `log(n / tau)`.
pub fn scaling_fit(reports: &[EffDimReport]) -> Result<LineFit> {
    if reports.len() < 4 {
        return Err(Error::InvalidParams(format!("scaling fit needs at least 4 reports, got {}", reports.len())));
    }
    let xs: Vec<f64> = reports.iter().map(|r| r.n as f64 / r.tau).collect();
    let ys: Vec<f64> = reports.iter().map(|r| r.value).collect();
    log_log_fit(&xs, &ys)
}
