//! Self-check suite run by `kaar verify`.

use crate::adversary::{
    bump_comparator, cells_per_axis, mollifier_g, mollifier_profile, Comparator, RepresenterComparator,
};
use crate::effdim::{effective_dimension, effective_dimension_trace};
use crate::error::Result;
use crate::ewa::build_net;
use crate::harness::{play, EwaForecaster, KaarForecaster};
use crate::kaar::{clip, KaarState};
use crate::kernel::{distance, gram, GramMatrix, KernelParams};
use crate::linalg::{cholesky_solve, dot};
use crate::rng::StreamRng;
use crate::special_fn::{bessel_k, gamma};

const BESSEL_REFERENCE: &str = include_str!("../fixtures/bessel_k_reference.csv");
const GAMMA_REFERENCE: &str = include_str!("../fixtures/gamma_reference.csv");

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Test hook: make every Gram matrix in the PSD check indefinite.
    pub corrupt_gram: bool,
}

/// Runs every check; errors inside a check count as failures.
pub fn run_all(opts: VerifyOptions) -> Vec<CheckResult> {
    type Check = fn(VerifyOptions) -> Result<(bool, String)>;
    let checks: [(&'static str, Check); 11] = [
        ("bessel_reference", |_| bessel_reference()),
        ("gamma_reference", |_| gamma_reference()),
        ("bessel_closed_forms", |_| bessel_closed_forms()),
        ("kernel_psd", kernel_psd),
        ("kaar_oracle", |_| kaar_oracle()),
        ("kaar_factor", |_| kaar_factor()),
        ("clipping_dominance", |_| clipping_dominance()),
        ("ewa_aggregation", |_| ewa_aggregation()),
        ("mollifier", |_| mollifier()),
        ("bump_class", |_| bump_class()),
        ("effdim_forms", |_| effdim_forms()),
    ];
    checks
        .iter()
        .map(|&(name, f)| match f(opts) {
            Ok((passed, detail)) => CheckResult { name, passed, detail },
            Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn csv_rows(text: &str) -> impl Iterator<Item = Vec<f64>> + '_ {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|v| v.trim().parse::<f64>().expect("fixture values are numeric")).collect())
}

fn bessel_reference() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for row in csv_rows(BESSEL_REFERENCE) {
        worst = worst.max(rel(bessel_k(row[0], row[1])?, row[2]));
        count += 1;
    }
    Ok((worst <= 1e-10, format!("{count} points, max rel err {worst:.2e} (tol 1e-10)")))
}

fn gamma_reference() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    let mut count = 0;
    for row in csv_rows(GAMMA_REFERENCE) {
        worst = worst.max(rel(gamma(row[0])?, row[1]));
        count += 1;
    }
    Ok((worst <= 1e-12, format!("{count} points, max rel err {worst:.2e} (tol 1e-12)")))
}

fn bessel_closed_forms() -> Result<(bool, String)> {
    let mut closed = 0.0_f64;
    for i in 0..20 {
        let x = 0.05 * (400f64).powf(i as f64 / 19.0);
        let k_half = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
        closed = closed.max(rel(bessel_k(0.5, x)?, k_half));
        closed = closed.max(rel(bessel_k(1.5, x)?, k_half * (1.0 + 1.0 / x)));
    }
    let mut recur = 0.0_f64;
    for &nu in &[1.0, 2.3, 4.7] {
        for i in 0..20 {
            let x = 0.05 * (400f64).powf(i as f64 / 19.0);
            let lhs = bessel_k(nu + 1.0, x)?;
            let rhs = bessel_k(nu - 1.0, x)? + 2.0 * nu / x * bessel_k(nu, x)?;
            recur = recur.max(rel(rhs, lhs));
        }
    }
    Ok((
        closed <= 1e-10 && recur <= 1e-8,
        format!("closed forms {closed:.2e} (tol 1e-10), recurrence {recur:.2e} (tol 1e-8)"),
    ))
}

/// `(d, s)` pairs used by the random Gram checks.
pub fn psd_cases() -> Vec<(usize, f64)> {
    (1..=3).flat_map(|d| [(d, d as f64 / 2.0 + 0.6), (d, d as f64), (d, 2.0 * d as f64)]).collect()
}

fn kernel_psd(opts: VerifyOptions) -> Result<(bool, String)> {
    let cases = psd_cases();
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for i in 0..50u64 {
        let mut rng = StreamRng::new(i, 0);
        let (d, s) = cases[i as usize % cases.len()];
        let n = 2 + (rng.next_u64() % 63) as usize;
        let p = KernelParams::new(d, s)?;
        let pts: Vec<Vec<f64>> = (0..n).map(|_| rng.cube_point(d)).collect();
        let mut k = gram(&p, &pts)?;
        if opts.corrupt_gram {
            corrupt(&mut k, p.kappa_sq());
        }
        let ev = k.eigenvalues()?;
        let ratio = ev[n - 1] / k.trace();
        worst = worst.min(ratio);
        if ratio < -1e-8 {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("50 matrices, min lambda_min/trace {worst:.2e}, {failures} below -1e-8")))
}

// Symmetric corruption that breaks positive semidefiniteness.
fn corrupt(k: &mut GramMatrix, kappa_sq: f64) {
    let n = k.n();
    let e = k.entries_mut();
    e[1] = 3.0 * kappa_sq;
    e[n] = 3.0 * kappa_sq;
}

/// `y~^T (K_t + tau I)^{-1} k~(x)` from a fresh factorization.
pub fn direct_prediction(params: &KernelParams, tau: f64, xs: &[Vec<f64>], ys: &[f64], x: &[f64]) -> Result<f64> {
    let t = xs.len() + 1;
    let mut pts: Vec<Vec<f64>> = xs.to_vec();
    pts.push(x.to_vec());
    let k = gram(params, &pts)?;
    let kt: Vec<f64> = pts.iter().map(|p| params.radial(distance(p, x))).collect();
    let c = cholesky_solve(&k.shifted(tau), t, &kt)?;
    Ok(dot(&c[..t - 1], ys))
}

fn kaar_oracle() -> Result<(bool, String)> {
    let p = KernelParams::new(2, 2.0)?;
    let mut st = KaarState::new(p, 1.0, None)?;
    let mut rng = StreamRng::new(42, 0);
    let mut worst = 0.0_f64;
    for _ in 0..128 {
        let x = rng.cube_point(2);
        let y = rng.uniform_in(-1.0, 1.0);
        let inc = st.predict(&x)?;
        let direct = direct_prediction(&p, 1.0, st.inputs(), st.labels(), &x)?;
        worst = worst.max((inc - direct).abs());
        st.update(&x, y)?;
    }
    Ok((worst <= 1e-8, format!("128 rounds, max |incremental - direct| {worst:.2e} (tol 1e-8)")))
}

fn kaar_factor() -> Result<(bool, String)> {
    let p = KernelParams::new(1, 1.0)?;
    let tau = 0.5;
    let mut st = KaarState::new(p, tau, None)?;
    let mut rng = StreamRng::new(3, 0);
    for _ in 0..200 {
        st.update(&rng.cube_point(1), rng.uniform_in(-1.0, 1.0))?;
    }
    let res = st.factor_residual();
    let tol = 1e-9 * (p.kappa_sq() + tau);
    Ok((res <= tol, format!("200 rounds, max |R^T R - (K + tau I)| {res:.2e} (tol {tol:.2e})")))
}

fn clipping_dominance() -> Result<(bool, String)> {
    let p = KernelParams::new(1, 1.0)?;
    let f = RepresenterComparator::random(p, 5, 4.0, 8)?;
    let s = crate::adversary::iid_stream(&f, 0.3, 400, 1.0, 8)?;
    let st = KaarState::new(p, 0.3, Some(1.0))?;
    let tr = play(KaarForecaster::new(st, true)?, &s, &[&f], &[])?;
    let mut violations = 0;
    for i in 0..tr.len() {
        let y = tr.y[i];
        if (y - clip(tr.yhat_raw[i], 1.0)).powi(2) > (y - tr.yhat_raw[i]).powi(2) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{} rounds, {violations} violations", tr.len())))
}

fn ewa_aggregation() -> Result<(bool, String)> {
    let net = build_net(1.0, 1.0, 0.5, 1)?;
    let mut worst_slack = f64::INFINITY;
    for seed in 0..3 {
        let mut rng = StreamRng::new(seed, 0);
        let xs: Vec<Vec<f64>> = (0..300).map(|_| rng.cube_point(1)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin().clamp(-1.0, 1.0) * rng.uniform()).collect();
        let stream = crate::adversary::Stream::new(1, xs.clone(), ys.clone())?;
        let tr = play(EwaForecaster::new(net.clone()), &stream, &[], &[])?;
        let best = (0..net.len())
            .map(|i| xs.iter().zip(&ys).map(|(x, y)| (y - net.expert_value(i, x[0])).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        worst_slack = worst_slack.min(net.aggregation_bound() - (tr.cumulative_forecaster_loss - best));
    }
    Ok((worst_slack >= 0.0, format!("N = {}, min slack to ln N / eta {worst_slack:.3}", net.len())))
}

fn mollifier() -> Result<(bool, String)> {
    let values_ok = mollifier_g(&[0.0]) == 0.5 && mollifier_g(&[0.6]) == 0.0 && mollifier_g(&[0.25]) == 0.5;
    let h = 1e-4;
    let (mut d1, mut d2) = (0.0_f64, 0.0_f64);
    for i in 1..6000 {
        let r = i as f64 * 1e-4;
        let (a, b, c) = (mollifier_profile(r - h), mollifier_profile(r), mollifier_profile(r + h));
        d1 = d1.max(((c - a) / (2.0 * h)).abs());
        d2 = d2.max(((c - 2.0 * b + a) / (h * h)).abs());
    }
    let bounded = d1 < 1e2 && d2 < 1e4;
    Ok((values_ok && bounded, format!("g(0), g(0.25), g(0.6) exact: {values_ok}; max |G'| {d1:.2}, max |G''| {d2:.1}")))
}

fn bump_class() -> Result<(bool, String)> {
    let mut ok = true;
    let mut details = Vec::new();
    for &(d, beta, m, n_grid) in &[(1usize, 0.5, 1.0, 64usize), (2, 1.0, 2.0, 16)] {
        let count = cells_per_axis(n_grid, d).pow(d as u32);
        let mut rng = StreamRng::new(5, 0);
        let signs: Vec<f64> = (0..count).map(|_| rng.sign()).collect();
        let f = bump_comparator(n_grid, d, beta, m, signs)?;
        let mut sup = 0.0_f64;
        for _ in 0..20_000 {
            sup = sup.max(f.eval(&rng.cube_point(d)).abs());
        }
        let center_err =
            (0..count).map(|t| (f.eval(&f.center(t)) - f.signs()[t] * f.amplitude() * 0.5).abs()).fold(0.0, f64::max);
        ok &= sup <= m / 4.0 && center_err <= 1e-12;
        details.push(format!("d={d}: sup {sup:.3e} <= {}, center err {center_err:.1e}", m / 4.0));
    }
    Ok((ok, details.join("; ")))
}

fn effdim_forms() -> Result<(bool, String)> {
    let p = KernelParams::new(1, 1.0)?;
    let mut rng = StreamRng::new(9, 0);
    let pts: Vec<Vec<f64>> = (0..128).map(|_| rng.cube_point(1)).collect();
    let k = gram(&p, &pts)?;
    let mut worst = 0.0_f64;
    for &tau in &[0.01, 1.0, 100.0] {
        let a = effective_dimension(&k, tau)?.value;
        let b = effective_dimension_trace(&k, tau)?;
        worst = worst.max((a - b).abs());
    }
    Ok((worst <= 1e-9, format!("max |eigen - trace| {worst:.2e} (tol 1e-9)")))
}
