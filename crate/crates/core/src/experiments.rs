//! End-to-end drivers behind the command-line subcommands.
//!
//! Each driver turns an [`ExperimentConfig`] into a report struct; writing
//! files and printing tables is left to the caller.

use std::sync::Arc;

use rayon::prelude::*;

use crate::adversary::{
    bump_comparator, cells_per_axis, iid_stream, shattering_stream, Comparator, RepresenterComparator, Stream,
    ZeroComparator,
};
use crate::config::{ComparatorKind, ExperimentConfig, ForecasterKind, Layout, StreamKind, Tuning};
use crate::effdim::{effective_dimension, scaling_fit, EffDimReport};
use crate::error::{Error, Result};
use crate::ewa::{balanced_epsilon, build_net_capped, cell_count, ExpertNet};
use crate::harness::{estimate_exponent, play, EwaForecaster, ExponentFit, GameTrace, KaarForecaster, ZeroForecaster};
use crate::kaar::{schedule_tau, KaarState};
use crate::kernel::{gram, KernelParams};
use crate::output::{EffDimRow, SummaryRow};
use crate::rng::{streams, StreamRng};
use crate::stats::LineFit;

/// Stream plus the comparator regret is measured against.
pub struct GameSetup {
    pub stream: Stream,
    pub comparator: Arc<dyn Comparator>,
}

/// Kernel smoothness and regularization used for a horizon.
pub fn kaar_parameters(cfg: &ExperimentConfig, horizon: usize) -> Result<(KernelParams, f64)> {
    let d = cfg.kernel.d;
    let (s, tau) = schedule_tau(&cfg.schedule(horizon)?, d)?;
    let params = KernelParams::new(d, cfg.kernel.s.unwrap_or(s))?;
    Ok((params, tau))
}

/// Shattering stream over the smallest cube grid with at least `n` cubes,
/// truncated to `n` rounds.
pub fn shattering_for_horizon(
    n: usize,
    d: usize,
    m: f64,
    beta: f64,
    seed: u64,
) -> Result<(Stream, Arc<dyn Comparator>)> {
    let per_axis = (n as f64).powf(1.0 / d as f64).ceil() as usize;
    let mut n_grid = ((per_axis as f64 / 2.0).powi(d as i32)).ceil().max(1.0) as usize;
    while cells_per_axis(n_grid, d) < per_axis {
        n_grid += 1;
    }
    let (stream, f) = shattering_stream(n_grid, d, m, beta, seed)?;
    Ok((stream.prefix(n), Arc::new(f)))
}

/// Builds the stream and comparator for one game.
pub fn build_game(cfg: &ExperimentConfig, seed: u64, horizon: usize) -> Result<GameSetup> {
    let d = cfg.kernel.d;
    let m = cfg.experiment.label_bound;
    let a = &cfg.adversary;
    if a.stream == StreamKind::Shattering {
        let (stream, comparator) = shattering_for_horizon(horizon, d, m, cfg.schedule.beta, seed)?;
        return Ok(GameSetup { stream, comparator });
    }
    let comparator: Arc<dyn Comparator> = match a.comparator {
        ComparatorKind::Zero => Arc::new(ZeroComparator { d }),
        ComparatorKind::Representer => {
            let (params, _) = kaar_parameters(cfg, horizon)?;
            Arc::new(RepresenterComparator::random(params, a.n_centers, a.norm_sq, seed)?)
        }
        ComparatorKind::Bump => {
            let count = cells_per_axis(a.n_grid, d).pow(d as u32);
            let mut rng = StreamRng::new(seed, streams::COMPARATOR);
            let signs = (0..count).map(|_| rng.sign()).collect();
            Arc::new(bump_comparator(a.n_grid, d, cfg.schedule.beta, m, signs)?)
        }
    };
    let stream = match a.stream {
        StreamKind::Iid => iid_stream(comparator.as_ref(), a.noise_sd, horizon, m, seed)?,
        StreamKind::Replay => {
            let path = a.stream_file.as_ref().ok_or_else(|| Error::Config("replay needs a stream file".into()))?;
            let file =
                std::fs::File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
            let s = Stream::read_csv(std::io::BufReader::new(file))?;
            if s.d() != d {
                return Err(Error::Config(format!("stream has d = {}, config has d = {d}", s.d())));
            }
            if s.len() < horizon {
                return Err(Error::Config(format!("stream has {} rounds, horizon is {horizon}", s.len())));
            }
            s.prefix(horizon)
        }
        StreamKind::Shattering => unreachable!(),
    };
    Ok(GameSetup { stream, comparator })
}

/// Expert net for the configured class, coarsening an automatic scale until
/// the net fits under `ewa.max_experts`.
pub fn ewa_net(cfg: &ExperimentConfig, horizon: usize) -> Result<ExpertNet> {
    let beta = cfg.schedule.beta;
    let m = cfg.experiment.label_bound;
    let cap = cfg.ewa.max_experts;
    match cfg.ewa.epsilon {
        Some(eps) => build_net_capped(beta, m, eps, cfg.kernel.d, cap),
        None => {
            let mut eps = balanced_epsilon(horizon, beta, cfg.kernel.d);
            loop {
                match build_net_capped(beta, m, eps, cfg.kernel.d, cap) {
                    Err(Error::InvalidParams(msg)) if msg.contains("exceeds") => eps *= 1.25,
                    other => return other,
                }
            }
        }
    }
}

/// Plays one game of the configured forecaster, with regret sampled at `checkpoints`.
pub fn run_game(cfg: &ExperimentConfig, seed: u64, horizon: usize, checkpoints: &[usize]) -> Result<GameTrace> {
    let setup = build_game(cfg, seed, horizon)?;
    play_configured(cfg, cfg.forecaster.kind, &setup, horizon, checkpoints)
}

fn play_configured(
    cfg: &ExperimentConfig,
    kind: ForecasterKind,
    setup: &GameSetup,
    horizon: usize,
    checkpoints: &[usize],
) -> Result<GameTrace> {
    let comps: [&dyn Comparator; 1] = [setup.comparator.as_ref()];
    match kind {
        ForecasterKind::Kaar | ForecasterKind::KaarClipped => {
            let (params, tau) = kaar_parameters(cfg, horizon)?;
            let state = KaarState::new(params, tau, Some(cfg.experiment.label_bound))?;
            let f = KaarForecaster::new(state, kind == ForecasterKind::KaarClipped)?;
            play(f, &setup.stream, &comps, checkpoints)
        }
        ForecasterKind::Ewa => play(EwaForecaster::new(ewa_net(cfg, horizon)?), &setup.stream, &comps, checkpoints),
        ForecasterKind::Zero => play(ZeroForecaster, &setup.stream, &comps, checkpoints),
    }
}

/// Regret curve of one seed.
#[derive(Debug, Clone)]
pub struct SeedCurve {
    pub seed: u64,
    pub ns: Vec<usize>,
    pub regrets: Vec<f64>,
    pub fit: Option<ExponentFit>,
    /// Trace of the longest game played for this seed.
    pub trace: GameTrace,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub target: Option<f64>,
    pub curves: Vec<SeedCurve>,
    /// Mean of the per-seed slopes that could be fitted.
    pub mean_slope: Option<f64>,
    /// Fit of the seed-averaged regret curve.
    pub pooled: Option<ExponentFit>,
    pub notices: Vec<String>,
}

impl BenchReport {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for c in &self.curves {
            for (&n, &r) in c.ns.iter().zip(&c.regrets) {
                rows.push(SummaryRow { seed: c.seed, n, regret: r, slope: c.fit.as_ref().map(|f| f.slope) });
            }
        }
        rows
    }

    /// Checkpoint horizons with the seed-averaged regret.
    pub fn mean_curve(&self) -> Vec<(usize, f64)> {
        let Some(first) = self.curves.first() else { return Vec::new() };
        let k = self.curves.len() as f64;
        first
            .ns
            .iter()
            .enumerate()
            .map(|(i, &n)| (n, self.curves.iter().map(|c| c.regrets[i]).sum::<f64>() / k))
            .collect()
    }
}

/// Regret of one seed at every checkpoint.
pub fn seed_curve(cfg: &ExperimentConfig, seed: u64) -> Result<SeedCurve> {
    let cps = cfg.checkpoints();
    let horizon = cfg.experiment.horizon;
    let (regrets, trace) = match cfg.experiment.tuning {
        Tuning::Fixed => {
            let trace = run_game(cfg, seed, horizon, &cps)?;
            (trace.checkpoints.iter().map(|c| c.regrets[0]).collect(), trace)
        }
        Tuning::PerHorizon => {
            let mut regrets = Vec::with_capacity(cps.len());
            let mut last = None;
            for &n in &cps {
                let trace = run_game(cfg, seed, n, &[n])?;
                regrets.push(trace.regret(0));
                last = Some(trace);
            }
            (regrets, last.expect("at least one checkpoint"))
        }
    };
    let fit = if cps.len() >= 4 { estimate_exponent(&cps, &regrets, cfg.experiment.regret_floor).ok() } else { None };
    Ok(SeedCurve { seed, ns: cps, regrets, fit, trace })
}

/// Runs every seed and fits regret growth exponents.
pub fn bench(cfg: &ExperimentConfig) -> Result<BenchReport> {
    let curves: Vec<SeedCurve> =
        cfg.seeds().into_par_iter().map(|seed| seed_curve(cfg, seed)).collect::<Result<_>>()?;
    let mut notices = Vec::new();
    let cps = cfg.checkpoints();
    let target = cfg.schedule(cfg.experiment.horizon)?.target_exponent(cfg.kernel.d);
    let slopes: Vec<f64> = curves.iter().filter_map(|c| c.fit.as_ref().map(|f| f.slope)).collect();
    let mean_slope = (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64);
    let mut report = BenchReport { target, curves, mean_slope, pooled: None, notices: Vec::new() };
    if cps.len() < 4 {
        notices.push(format!("{} checkpoint(s): fewer than 4, exponent fit skipped", cps.len()));
    } else {
        let mean: Vec<f64> = report.mean_curve().iter().map(|&(_, r)| r).collect();
        match estimate_exponent(&cps, &mean, cfg.experiment.regret_floor) {
            Ok(fit) => {
                if fit.any_floored() {
                    notices.push("nonpositive mean regret floored before fitting".into());
                }
                report.pooled = Some(fit);
            }
            Err(e) => notices.push(format!("exponent fit skipped: {e}")),
        }
        let floored = report.curves.iter().filter(|c| c.fit.as_ref().is_some_and(|f| f.any_floored())).count();
        if floored > 0 {
            notices.push(format!("{floored} seed(s) had nonpositive regret floored before fitting"));
        }
    }
    report.notices = notices;
    Ok(report)
}

/// KAAR and EWA regret on the same stream.
#[derive(Debug, Clone)]
pub struct CompareCurve {
    pub seed: u64,
    pub regret_kaar: Vec<f64>,
    pub regret_ewa: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub horizon: usize,
    pub tau: f64,
    pub ewa_epsilon: f64,
    pub ewa_experts: usize,
    pub curves: Vec<CompareCurve>,
}

impl CompareReport {
    /// Seed-averaged final regrets `(kaar, ewa)`.
    pub fn mean_final(&self) -> (f64, f64) {
        let k = self.curves.len() as f64;
        let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
        (
            self.curves.iter().map(|c| last(&c.regret_kaar)).sum::<f64>() / k,
            self.curves.iter().map(|c| last(&c.regret_ewa)).sum::<f64>() / k,
        )
    }
}

/// Plays KAAR and EWA on identical streams (`d = 1`, `beta <= 1`).
pub fn compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    if cfg.kernel.d != 1 {
        return Err(Error::Unsupported(format!(
            "compare runs the expert-net baseline, which supports d = 1 only (got d = {})",
            cfg.kernel.d
        )));
    }
    let horizon = cfg.experiment.horizon;
    let net = ewa_net(cfg, horizon)?;
    let (_, tau) = kaar_parameters(cfg, horizon)?;
    let curves = cfg
        .seeds()
        .into_par_iter()
        .map(|seed| {
            let setup = build_game(cfg, seed, horizon)?;
            let kaar = play_configured(cfg, ForecasterKind::KaarClipped, &setup, horizon, &[])?;
            let comps: [&dyn Comparator; 1] = [setup.comparator.as_ref()];
            let ewa = play(EwaForecaster::new(net.clone()), &setup.stream, &comps, &[])?;
            Ok(CompareCurve { seed, regret_kaar: kaar.regrets[0].clone(), regret_ewa: ewa.regrets[0].clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport { horizon, tau, ewa_epsilon: net.epsilon(), ewa_experts: net.len(), curves })
}

/// Point set of `n` points in `[-1, 1]^d`.
pub fn layout_points(layout: Layout, n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    match layout {
        Layout::Equispaced => {
            let per_axis = ((n as f64).powf(1.0 / d as f64).ceil() as usize).max(2);
            (0..n)
                .map(|i| {
                    let mut rest = i;
                    let mut x = vec![0.0; d];
                    for slot in x.iter_mut().rev() {
                        *slot = -1.0 + 2.0 * (rest % per_axis) as f64 / (per_axis - 1) as f64;
                        rest /= per_axis;
                    }
                    x
                })
                .collect()
        }
        Layout::Uniform => {
            let mut rng = StreamRng::new(seed, streams::POINTS);
            (0..n).map(|_| rng.cube_point(d)).collect()
        }
        Layout::Clustered => {
            let mut rng = StreamRng::new(seed, streams::POINTS);
            let centers: Vec<Vec<f64>> = (0..CLUSTERS).map(|_| rng.cube_point(d)).collect();
            (0..n)
                .map(|i| {
                    let c = &centers[i % CLUSTERS];
                    c.iter().map(|v| (v + CLUSTER_SD * rng.normal()).clamp(-1.0, 1.0)).collect()
                })
                .collect()
        }
    }
}

const CLUSTERS: usize = 5;
const CLUSTER_SD: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct EffDimFit {
    pub layout: Layout,
    pub tau: f64,
    pub fit: Option<LineFit>,
}

#[derive(Debug, Clone)]
pub struct EffDimStudy {
    pub s: f64,
    /// `d / (2 s)`.
    pub target: f64,
    pub rows: Vec<(Layout, EffDimRow)>,
    pub fits: Vec<EffDimFit>,
    pub notices: Vec<String>,
}

/// Effective dimension over the configured `(layout, n, tau)` grid.
pub fn effdim_study(cfg: &ExperimentConfig) -> Result<EffDimStudy> {
    let d = cfg.kernel.d;
    let s = match cfg.kernel.s {
        Some(s) => s,
        None => kaar_parameters(cfg, cfg.experiment.horizon)?.0.s(),
    };
    let params = KernelParams::new(d, s)?;
    let ed = &cfg.effdim;
    let jobs: Vec<(Layout, usize)> = ed.layouts.iter().flat_map(|&l| ed.n.iter().map(move |&n| (l, n))).collect();
    let spectra: Vec<(Layout, usize, EffDimReport)> = jobs
        .into_par_iter()
        .map(|(layout, n)| {
            let pts = layout_points(layout, n, d, cfg.experiment.seed);
            let k = gram(&params, &pts)?;
            Ok((layout, n, effective_dimension(&k, ed.tau.first().copied().unwrap_or(1.0))?))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut notices = Vec::new();
    for &layout in &ed.layouts {
        for &tau in &ed.tau {
            let mut reports = Vec::new();
            for (l, _, base) in &spectra {
                if *l != layout {
                    continue;
                }
                let r = base.at_tau(tau)?;
                rows.push((
                    layout,
                    EffDimRow { n: r.n, tau, d_eff: r.value, lambda_max: r.lambda_max(), lambda_min: r.lambda_min() },
                ));
                reports.push(r);
            }
            let fit = if reports.len() >= 4 {
                Some(scaling_fit(&reports)?)
            } else {
                notices.push(format!("{layout:?}, tau = {tau}: fewer than 4 sizes, slope skipped"));
                None
            };
            fits.push(EffDimFit { layout, tau, fit });
        }
    }
    Ok(EffDimStudy { s, target: d as f64 / (2.0 * s), rows, fits, notices })
}

/// Parameters of the configured expert net, computed without building it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInfo {
    pub beta: f64,
    pub label_bound: f64,
    pub epsilon: f64,
    pub balanced_epsilon: f64,
    pub cells: usize,
    pub n_experts: Option<usize>,
    pub eta: f64,
    /// `ln N / eta`.
    pub aggregation_bound: Option<f64>,
}

pub fn net_info(cfg: &ExperimentConfig) -> Result<NetInfo> {
    let beta = cfg.schedule.beta;
    let m = cfg.experiment.label_bound;
    let horizon = cfg.experiment.horizon;
    let balanced = balanced_epsilon(horizon, beta, cfg.kernel.d);
    match ewa_net(cfg, horizon) {
        Ok(net) => Ok(NetInfo {
            beta,
            label_bound: m,
            epsilon: net.epsilon(),
            balanced_epsilon: balanced,
            cells: net.cells(),
            n_experts: Some(net.len()),
            eta: net.eta(),
            aggregation_bound: Some(net.aggregation_bound()),
        }),
        Err(Error::InvalidParams(msg)) if msg.contains("exceeds") => {
            let eps = cfg.ewa.epsilon.unwrap_or(balanced);
            Ok(NetInfo {
                beta,
                label_bound: m,
                epsilon: eps,
                balanced_epsilon: balanced,
                cells: cell_count(beta, m, eps),
                n_experts: None,
                eta: crate::ewa::default_eta(m),
                aggregation_bound: None,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn shattering_horizon_sizes() {
        for &(n, d) in &[(128, 1), (100, 1), (64, 2), (50, 2), (27, 3)] {
            let (s, _) = shattering_for_horizon(n, d, 1.0, 1.0, 0).unwrap();
            assert_eq!(s.len(), n, "n={n} d={d}");
        }
    }

    #[test]
    fn single_round_bench_skips_fit() {
        let c = cfg("[experiment]\nhorizon = 1\n");
        let r = bench(&c).unwrap();
        assert!(r.pooled.is_none() && r.mean_slope.is_none());
        assert!(r.notices[0].contains("fewer than 4"));
        assert_eq!(r.curves[0].regrets.len(), 1);
    }

    #[test]
    fn bench_is_reproducible() {
        let c = cfg("[experiment]\nhorizon = 64\nn_seeds = 2\n[adversary]\nstream = \"iid\"\n");
        let a = bench(&c).unwrap();
        let b = bench(&c).unwrap();
        assert_eq!(a.summary_rows(), b.summary_rows());
        assert_eq!(a.curves[1].trace, b.curves[1].trace);
    }

    #[test]
    fn compare_rejects_higher_dimension() {
        let c = cfg("[kernel]\nd = 2\n[schedule]\nbeta = 1.5\n");
        assert!(matches!(compare(&c), Err(Error::Unsupported(_))));
    }

    #[test]
    fn compare_aligned_columns() {
        let c = cfg("[experiment]\nhorizon = 32\n[ewa]\nepsilon = 0.5\n");
        let r = compare(&c).unwrap();
        assert_eq!(r.curves[0].regret_kaar.len(), 32);
        assert_eq!(r.curves[0].regret_ewa.len(), 32);
    }

    #[test]
    fn layouts_stay_in_cube() {
        for layout in [Layout::Equispaced, Layout::Uniform, Layout::Clustered] {
            for d in 1..=3 {
                let pts = layout_points(layout, 30, d, 4);
                assert_eq!(pts.len(), 30);
                assert!(pts.iter().flatten().all(|v| v.abs() <= 1.0));
            }
        }
        let eq = layout_points(Layout::Equispaced, 5, 1, 0);
        assert_eq!(eq, vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]);
    }

    #[test]
    fn net_info_reports_oversized_nets() {
        let c = cfg("[experiment]\nhorizon = 4096\n[ewa]\nepsilon = 0.01\n");
        let info = net_info(&c).unwrap();
        assert_eq!(info.n_experts, None);
        assert_eq!(info.cells, 200);
        let c = cfg("[ewa]\nepsilon = 0.5\n");
        assert!(net_info(&c).unwrap().n_experts.is_some());
    }
}
