//! Kernel Aggregating Algorithm for Regression (KAAR) over a Sobolev RKHS.
//!
//! At round `t` the forecast is `y~^T (K_t + tau I)^{-1} k~(x_t)` with
//! `y~ = (y_1, .., y_{t-1}, 0)` and `k~(x_t) = (k(x_1, x_t), .., k(x_t, x_t))`.
//! The state keeps the upper Cholesky factor `R` of `K_{t-1} + tau I`
//! together with `z = R^{-T} y`. Extending `R` by the provisional point costs
//! one triangular solve `R^T r = b`, after which the forecast reduces to
//!
//! ```text
//! y_hat = (z . r) * tau / rho^2,   rho^2 = k(x_t, x_t) + tau - r . r
//! ```
//!
//! so a round is `O(t^2)` and a game of `n` rounds is `O(n^3 + n^2 d)`.

use crate::error::{check_dim, Error, Result};
use crate::kernel::{distance, KernelParams};
use crate::linalg::{dot, PackedUpper};

/// Online KAAR state after `t - 1` committed rounds.
#[derive(Debug, Clone)]
pub struct KaarState {
    params: KernelParams,
    tau: f64,
    clip_m: Option<f64>,
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
    chol: PackedUpper,
    // R^{-T} y for the committed labels.
    z: Vec<f64>,
}

/// One provisional Cholesky extension for a query point, not yet committed.
#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    x: Vec<f64>,
    r: Vec<f64>,
    rho: f64,
    prediction: f64,
}

impl Extension {
    /// The unclipped KAAR forecast for the query point.
    pub fn prediction(&self) -> f64 {
        self.prediction
    }

    pub fn point(&self) -> &[f64] {
        &self.x
    }

    /// New diagonal entry of the extended factor.
    pub fn pivot(&self) -> f64 {
        self.rho
    }
}

impl KaarState {
    pub fn new(params: KernelParams, tau: f64, clip_m: Option<f64>) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParams(format!("tau must be positive and finite, got {tau}")));
        }
        if let Some(m) = clip_m {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidParams(format!("clip level must be positive, got {m}")));
            }
        }
        Ok(KaarState {
            params,
            tau,
            clip_m,
            inputs: Vec::new(),
            labels: Vec::new(),
            chol: PackedUpper::new(),
            z: Vec::new(),
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn clip_m(&self) -> Option<f64> {
        self.clip_m
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn factor(&self) -> &PackedUpper {
        &self.chol
    }

    /// Computes the provisional extension of the factor for `x` without
    /// touching committed state.
    pub fn extend(&self, x: &[f64]) -> Result<Extension> {
        check_dim(self.params.d(), x.len())?;
        let b: Vec<f64> = self.inputs.iter().map(|xi| self.params.radial(distance(xi, x))).collect();
        let r = self.chol.solve_transposed(&b);
        let rho_sq = self.params.kappa_sq() + self.tau - dot(&r, &r);
        if !(rho_sq > 0.0) || !rho_sq.is_finite() {
            return Err(Error::Numerical(format!(
                "non-positive pivot {rho_sq:e} extending a factor of size {}",
                self.len()
            )));
        }
        let prediction = dot(&self.z, &r) * self.tau / rho_sq;
        Ok(Extension { x: x.to_vec(), r, rho: rho_sq.sqrt(), prediction })
    }

    /// KAAR forecast for `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.extend(x)?.prediction)
    }

    /// Forecast clipped to `[-M, M]`.
    pub fn predict_clipped(&self, x: &[f64]) -> Result<f64> {
        let m = self.clip_m.ok_or_else(|| Error::InvalidParams("clipped prediction requires a clip level".into()))?;
        Ok(clip(self.predict(x)?, m))
    }

    /// Commits `(x_t, y_t)` using an extension computed for the same point.
    pub fn commit(&mut self, ext: Extension, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::InvalidParams(format!("label must be finite, got {y}")));
        }
        if ext.r.len() != self.len() {
            return Err(Error::InvalidParams("extension is stale for this state".into()));
        }
        let z_new = (y - dot(&ext.r, &self.z)) / ext.rho;
        self.chol.push_column(&ext.r, ext.rho);
        self.z.push(z_new);
        self.inputs.push(ext.x);
        self.labels.push(y);
        Ok(())
    }

    /// Commits `(x_t, y_t)`, extending the factor by one column in `O(t^2)`.
    ///
    /// A non-positive pivot triggers one full refactorization of
    /// `K_t + tau I`; if that also fails the error is returned.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::InvalidParams(format!("label must be finite, got {y}")));
        }
        match self.extend(x) {
            Ok(ext) => self.commit(ext, y),
            Err(Error::Numerical(_)) => {
                self.inputs.push(x.to_vec());
                self.labels.push(y);
                if let Err(e) = self.refactorize() {
                    self.inputs.pop();
                    self.labels.pop();
                    self.refactorize()?;
                    return Err(e);
                }
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Rebuilds the factor and `z` from the stored history.
    pub fn refactorize(&mut self) -> Result<()> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.params.kappa_sq() + self.tau;
            for j in i + 1..n {
                let v = self.params.radial(distance(&self.inputs[i], &self.inputs[j]));
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        let chol = PackedUpper::factorize(&a, n)?;
        self.z = chol.solve_transposed(&self.labels);
        self.chol = chol;
        Ok(())
    }

    /// Max absolute entry of `R^T R - (K + tau I)`.
    pub fn factor_residual(&self) -> f64 {
        let n = self.len();
        let rtr = self.chol.gram();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let k = if i == j {
                    self.params.kappa_sq() + self.tau
                } else {
                    self.params.radial(distance(&self.inputs[i], &self.inputs[j]))
                };
                worst = worst.max((rtr[i * n + j] - k).abs());
            }
        }
        worst
    }

    /// Right-hand side of the KAAR regret bound,
    /// `tau |f|^2 + M^2 (1 + ln(1 + n kappa^2 / tau)) d_eff(tau)`.
    pub fn regret_certificate(&self, f_norm_sq: f64, n: usize, d_eff: f64) -> Result<f64> {
        let m = self.clip_m.ok_or_else(|| Error::InvalidParams("the certificate needs the label bound M".into()))?;
        regret_certificate(self.tau, self.params.kappa_sq(), m, f_norm_sq, n, d_eff)
    }
}

/// `min(max(-m, v), m)`.
#[inline]
pub fn clip(v: f64, m: f64) -> f64 {
    v.clamp(-m, m)
}

/// Free-standing form of [`KaarState::regret_certificate`].
pub fn regret_certificate(tau: f64, kappa_sq: f64, m: f64, f_norm_sq: f64, n: usize, d_eff: f64) -> Result<f64> {
    let v = tau * f_norm_sq + m * m * (1.0 + (n as f64 * kappa_sq / tau).ln_1p()) * d_eff;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParams("non-finite regret certificate inputs".into()))
    }
}

/// Which theory-driven rule picks `(s, tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `beta > d/2`: `s = beta`, `tau = n^{d/(2 beta + d)}`.
    Smooth,
    /// `d/p < beta <= d/2`: `s = d/2 + eps`, tau from the hard-regime exponent.
    Hard,
    /// User supplied `s` and `tau`.
    Manual { s: f64, tau: f64 },
}

/// Parameter schedule for a horizon `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub regime: Regime,
    pub beta: f64,
    /// Integrability exponent `p >= 2`; `f64::INFINITY` for Hölder balls.
    pub p: f64,
    pub epsilon: f64,
    pub horizon: usize,
}

pub const DEFAULT_EPSILON: f64 = 0.05;

impl Schedule {
    pub fn smooth(beta: f64, horizon: usize) -> Self {
        Schedule { regime: Regime::Smooth, beta, p: 2.0, epsilon: DEFAULT_EPSILON, horizon }
    }

    pub fn hard(beta: f64, p: f64, epsilon: f64, horizon: usize) -> Self {
        Schedule { regime: Regime::Hard, beta, p, epsilon, horizon }
    }

    pub fn manual(s: f64, tau: f64, horizon: usize) -> Self {
        Schedule { regime: Regime::Manual { s, tau }, beta: s, p: 2.0, epsilon: DEFAULT_EPSILON, horizon }
    }

    pub fn with_horizon(self, horizon: usize) -> Self {
        Schedule { horizon, ..self }
    }

    /// Checks the regime's admissible range for `beta` in dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let half_d = d as f64 / 2.0;
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        match self.regime {
            Regime::Smooth => {
                if !(self.beta > half_d) {
                    return Err(Error::InvalidParams(format!(
                        "smooth regime requires beta > d/2 = {half_d}, got {}",
                        self.beta
                    )));
                }
            }
            Regime::Hard => {
                if !(self.p > 2.0) {
                    return Err(Error::InvalidParams(format!("hard regime requires p > 2, got {}", self.p)));
                }
                let lo = d as f64 / self.p;
                if !(self.beta > lo && self.beta <= half_d) {
                    return Err(Error::InvalidParams(format!(
                        "hard regime requires d/p = {lo} < beta <= d/2 = {half_d}, got {}",
                        self.beta
                    )));
                }
                if !(self.epsilon > 0.0 && self.epsilon < self.beta) {
                    return Err(Error::InvalidParams(format!(
                        "hard regime requires 0 < epsilon < beta, got {}",
                        self.epsilon
                    )));
                }
            }
            Regime::Manual { s, tau } => {
                if !(s > half_d) || !(tau > 0.0) {
                    return Err(Error::InvalidParams(format!(
                        "manual schedule requires s > d/2 and tau > 0, got s={s}, tau={tau}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Regret growth exponent predicted for this regime, if any.
    pub fn target_exponent(&self, d: usize) -> Option<f64> {
        let d = d as f64;
        match self.regime {
            Regime::Smooth => Some(1.0 - 2.0 * self.beta / (2.0 * self.beta + d)),
            Regime::Hard => {
                if self.p.is_infinite() {
                    Some(1.0 - self.beta / d)
                } else {
                    Some(1.0 - (self.beta / d) * (self.p - d / self.beta) / (self.p - 2.0))
                }
            }
            Regime::Manual { .. } => None,
        }
    }
}

/// Returns the RKHS smoothness `s` and regularization `tau` for `sched`.
pub fn schedule_tau(sched: &Schedule, d: usize) -> Result<(f64, f64)> {
    sched.validate(d)?;
    let n = sched.horizon as f64;
    let df = d as f64;
    Ok(match sched.regime {
        Regime::Smooth => (sched.beta, n.powf(df / (2.0 * sched.beta + df))),
        Regime::Hard => {
            let beta_prime = sched.beta - sched.epsilon;
            let inv_p = 1.0 / sched.p;
            let exponent = 1.0 - (df * (1.0 - inv_p) - beta_prime) / (df * (1.0 - 2.0 * inv_p));
            (df / 2.0 + sched.epsilon, n.powf(exponent))
        }
        Regime::Manual { s, tau } => (s, tau),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(d: usize, s: f64, tau: f64) -> KaarState {
        KaarState::new(KernelParams::new(d, s).unwrap(), tau, Some(1.0)).unwrap()
    }

    #[test]
    fn first_round_predicts_zero() {
        let st = state(1, 1.0, 1.0);
        assert_eq!(st.predict(&[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn first_update_factor() {
        let mut st = state(1, 1.0, 2.0);
        st.update(&[0.1], 0.5).unwrap();
        let expect = (st.params().kappa_sq() + 2.0).sqrt();
        assert!((st.factor().diag(0) - expect).abs() < 1e-15);
        assert_eq!(st.factor().dim(), 1);
    }

    #[test]
    fn duplicate_point_prediction() {
        // Direct 2x2 solve: y_hat = c / (2c + 1) with c = sqrt(pi/2).
        let mut st = state(1, 1.0, 1.0);
        st.update(&[0.0], 1.0).unwrap();
        let p = st.predict(&[0.0]).unwrap();
        assert!((p - 0.357_412_887_582_840_65).abs() < 1e-15, "{p}");
    }

    #[test]
    fn heavy_regularization_shrinks_to_zero() {
        let mut st = state(1, 1.0, 1e12);
        for i in 0..20 {
            let x = -1.0 + 0.1 * i as f64;
            st.update(&[x], if i % 2 == 0 { 1.0 } else { -0.7 }).unwrap();
        }
        assert!(st.predict(&[0.05]).unwrap().abs() <= 1e-9);
    }

    #[test]
    fn clipping_examples() {
        assert_eq!(clip(3.2, 1.0), 1.0);
        assert_eq!(clip(-0.4, 1.0), -0.4);
        assert_eq!(clip(-7.0, 2.0), -2.0);
        let st = KaarState::new(KernelParams::new(1, 1.0).unwrap(), 1.0, None).unwrap();
        assert!(st.predict_clipped(&[0.0]).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = KernelParams::new(1, 1.0).unwrap();
        assert!(KaarState::new(p, 0.0, None).is_err());
        assert!(KaarState::new(p, 1.0, Some(-1.0)).is_err());
        let mut st = state(1, 1.0, 1.0);
        assert!(st.update(&[0.0], f64::NAN).is_err());
        assert!(matches!(st.predict(&[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(st.is_empty());
    }

    #[test]
    fn stale_extension_is_rejected() {
        let mut st = state(1, 1.0, 1.0);
        let ext = st.extend(&[0.0]).unwrap();
        st.update(&[0.5], 1.0).unwrap();
        assert!(st.commit(ext, 1.0).is_err());
    }

    #[test]
    fn refactorize_matches_incremental() {
        let mut st = state(2, 2.0, 0.5);
        for i in 0..30 {
            let x = [(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()];
            st.update(&x, (i as f64).sin()).unwrap();
        }
        let before = st.predict(&[0.1, -0.2]).unwrap();
        st.refactorize().unwrap();
        let after = st.predict(&[0.1, -0.2]).unwrap();
        assert!((before - after).abs() < 1e-12);
        assert!(st.factor_residual() < 1e-12);
    }

    #[test]
    fn certificate_examples() {
        let st = state(1, 1.0, 1.0);
        assert_eq!(st.regret_certificate(0.0, 1, 0.0).unwrap(), 0.0);
        // n kappa^2 / tau = e - 1 makes the log term exactly 1.
        let kappa_sq = st.params().kappa_sq();
        let v = regret_certificate(1.0, kappa_sq, 1.0, 4.0, 1, 3.0).unwrap();
        let expect = 4.0 + (1.0 + (kappa_sq).ln_1p()) * 3.0;
        assert!((v - expect).abs() < 1e-14);
        let e_minus_one = std::f64::consts::E - 1.0;
        let v = regret_certificate(1.0, e_minus_one, 1.0, 4.0, 1, 2.5).unwrap();
        assert!((v - (4.0 + 2.0 * 2.5)).abs() < 1e-14);
        let unclipped = KaarState::new(KernelParams::new(1, 1.0).unwrap(), 1.0, None).unwrap();
        assert!(unclipped.regret_certificate(1.0, 1, 1.0).is_err());
    }

    #[test]
    fn schedule_examples() {
        let (s, tau) = schedule_tau(&Schedule::smooth(1.0, 1000), 1).unwrap();
        assert_eq!(s, 1.0);
        assert!((tau - 10.0).abs() < 1e-12);
        let (_, tau) = schedule_tau(&Schedule::smooth(2.0, 4096), 2).unwrap();
        assert!((tau - 16.0).abs() < 1e-12);
        let (s, tau) = schedule_tau(&Schedule::hard(0.9, 4.0, 0.05, 1000), 2).unwrap();
        assert!((s - 1.05).abs() < 1e-15);
        assert!((tau - 11.220_184_543_019_633).abs() < 1e-10);
        let (s, tau) = schedule_tau(&Schedule::manual(1.5, 3.0, 10), 1).unwrap();
        assert_eq!((s, tau), (1.5, 3.0));
    }

    #[test]
    fn schedule_rejects_inconsistent_regimes() {
        assert!(schedule_tau(&Schedule::smooth(0.5, 100), 1).is_err());
        assert!(schedule_tau(&Schedule::hard(1.5, 4.0, 0.05, 100), 2).is_err());
        assert!(schedule_tau(&Schedule::hard(0.4, 4.0, 0.05, 100), 2).is_err());
        assert!(schedule_tau(&Schedule::manual(0.4, 1.0, 100), 1).is_err());
        assert!(schedule_tau(&Schedule::smooth(1.0, 0), 1).is_err());
    }

    #[test]
    fn target_exponents() {
        let smooth = Schedule::smooth(1.0, 10).target_exponent(1).unwrap();
        assert!((smooth - 1.0 / 3.0).abs() < 1e-15);
        let hard = Schedule::hard(0.9, 4.0, 0.05, 10).target_exponent(2).unwrap();
        assert!((hard - 0.6).abs() < 1e-12);
        let holder = Schedule::hard(0.5, f64::INFINITY, 0.05, 10).target_exponent(1).unwrap();
        assert!((holder - 0.5).abs() < 1e-15);
        assert!(Schedule::manual(1.0, 1.0, 10).target_exponent(1).is_none());
    }
}
