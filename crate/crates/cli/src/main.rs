//! `kaar`: runs regret benchmarks, effective-dimension studies, the
//! verification suite and the KAAR/EWA comparison from a config file.
//!
//! Exit codes: 0 success, 1 usage, 2 config, 3 numerical failure,
//! 4 verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kaar::config::ExperimentConfig;
use kaar::experiments::{bench, compare, effdim_study, net_info};
use kaar::output::{write_effdim_csv, write_plot_data, write_summary_csv, EffDimRow, OutputSet};
use kaar::verify::{run_all, VerifyOptions};
use kaar::Error;

/// Default output directory when `--out` is absent.
const OUT_ENV: &str = "KAAR_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "kaar", version, about = "Online kernel regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regret growth study: games at every checkpoint, fitted exponents.
    Bench(Common),
    /// Effective dimension over a grid of sizes, layouts and tau.
    Effdim(Common),
    /// Runs the property suite and prints a pass/fail table.
    Verify(VerifyArgs),
    /// KAAR against the expert-net baseline on the same streams (d = 1).
    Compare(Common),
    /// Size and learning rate of the configured expert net.
    NetInfo(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML); defaults apply to absent keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// First seed, overriding experiment.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $KAAR_OUT_DIR, else ./out].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, overriding experiment.threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// `section.key=value`, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Test hook: perturb the Gram matrices of the PSD check.
    #[arg(long, hide = true)]
    inject_corrupt_gram: bool,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParams(_) | Error::Unsupported(_) => 2,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Bench(c) => run_bench(&c),
        Command::Effdim(c) => run_effdim(&c),
        Command::Verify(v) => run_verify(&v),
        Command::Compare(c) => run_compare(&c),
        Command::NetInfo(c) => run_net_info(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Parses and validates the config before anything runs.
fn load(c: &Common) -> std::result::Result<ExperimentConfig, Failure> {
    let mut overrides = c.overrides.clone();
    if let Some(seed) = c.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    if let Some(t) = c.threads {
        overrides.push(format!("experiment.threads={t}"));
    }
    let text = match &c.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure { code: 2, message: format!("cannot read {}: {e}", path.display()) })?,
        None => String::new(),
    };
    let cfg = ExperimentConfig::from_toml_with_overrides(&text, &overrides)?;
    set_threads(cfg.experiment.threads);
    Ok(cfg)
}

fn set_threads(n: usize) {
    // Only fails if a pool already exists, which never happens here.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

fn out_dir(c: &Common) -> PathBuf {
    c.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn opened(c: &Common, cfg: &ExperimentConfig) -> std::result::Result<OutputSet, Failure> {
    let mut out = OutputSet::create(&out_dir(c))?;
    let resolved = cfg.to_toml_string()?;
    out.write("config.toml", |w| w.write_all(resolved.as_bytes()))?;
    Ok(out)
}

fn finish(out: OutputSet) -> Outcome {
    let root = out.root().to_path_buf();
    let files = out.commit()?;
    println!("wrote {} file(s) to {}", files.len(), root.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.4}"))
}

fn run_bench(c: &Common) -> Outcome {
    let cfg = load(c)?;
    let report = bench(&cfg)?;
    let mut out = opened(c, &cfg)?;
    for curve in &report.curves {
        out.write(&format!("trace_seed{}.csv", curve.seed), |w| curve.trace.write_csv(w))?;
    }
    out.write("summary.csv", |w| write_summary_csv(w, &report.summary_rows()))?;
    let mean: Vec<Vec<f64>> = report.mean_curve().iter().map(|&(n, r)| vec![n as f64, r]).collect();
    out.write("regret.dat", |w| write_plot_data(w, &["n", "mean_regret"], &mean))?;

    println!("experiment {}: {} seed(s), horizon {}", cfg.experiment.name, report.curves.len(), cfg.experiment.horizon);
    for (n, r) in report.mean_curve() {
        println!("  n = {n:>7}  mean regret = {r:.6}");
    }
    for curve in &report.curves {
        println!("  seed {:>4}: slope {}", curve.seed, fmt_opt(curve.fit.as_ref().map(|f| f.slope)));
    }
    println!("target exponent: {}", fmt_opt(report.target));
    println!("slope of mean regret: {}", fmt_opt(report.pooled.as_ref().map(|f| f.slope)));
    println!("mean per-seed slope: {}", fmt_opt(report.mean_slope));
    for n in &report.notices {
        println!("notice: {n}");
    }
    finish(out)
}

fn run_effdim(c: &Common) -> Outcome {
    let cfg = load(c)?;
    let study = effdim_study(&cfg)?;
    let mut out = opened(c, &cfg)?;
    for &layout in &cfg.effdim.layouts {
        let name = layout_name(layout);
        let rows: Vec<EffDimRow> = study.rows.iter().filter(|(l, _)| *l == layout).map(|(_, r)| r.clone()).collect();
        out.write(&format!("effdim_{name}.csv"), |w| write_effdim_csv(w, &rows))?;
        for &tau in &cfg.effdim.tau {
            let plot: Vec<Vec<f64>> = rows.iter().filter(|r| r.tau == tau).map(|r| vec![r.n as f64, r.d_eff]).collect();
            out.write(&format!("effdim_{name}_tau{tau}.dat"), |w| write_plot_data(w, &["n", "d_eff"], &plot))?;
        }
    }
    println!("d = {}, s = {}: target slope d/2s = {:.4}", cfg.kernel.d, study.s, study.target);
    for f in &study.fits {
        match &f.fit {
            Some(fit) => println!(
                "  {:<10} tau = {:<6} slope {:.4}  r^2 {:.4}",
                layout_name(f.layout),
                f.tau,
                fit.slope,
                fit.r_squared
            ),
            None => println!("  {:<10} tau = {:<6} slope skipped", layout_name(f.layout), f.tau),
        }
    }
    for n in &study.notices {
        println!("notice: {n}");
    }
    finish(out)
}

fn layout_name(l: kaar::config::Layout) -> &'static str {
    match l {
        kaar::config::Layout::Equispaced => "equispaced",
        kaar::config::Layout::Uniform => "uniform",
        kaar::config::Layout::Clustered => "clustered",
    }
}

fn run_verify(v: &VerifyArgs) -> Outcome {
    set_threads(v.threads.unwrap_or(0));
    let results = run_all(VerifyOptions { corrupt_gram: v.inject_corrupt_gram });
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!("{:<width$}  {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure { code: 4, message: format!("{failed} verification check(s) failed") })
    }
}

fn run_compare(c: &Common) -> Outcome {
    let cfg = load(c)?;
    let report = compare(&cfg)?;
    let mut out = opened(c, &cfg)?;
    for curve in &report.curves {
        out.write(&format!("compare_seed{}.csv", curve.seed), |w| {
            writeln!(w, "t,regret_kaar,regret_ewa")?;
            for (t, (a, b)) in curve.regret_kaar.iter().zip(&curve.regret_ewa).enumerate() {
                writeln!(w, "{},{a},{b}", t + 1)?;
            }
            Ok(())
        })?;
    }
    let k = report.curves.len() as f64;
    let mean = |pick: fn(&kaar::experiments::CompareCurve) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..report.horizon)
            .map(|t| vec![(t + 1) as f64, report.curves.iter().map(|c| pick(c)[t]).sum::<f64>() / k])
            .collect()
    };
    let (kaar_mean, ewa_mean) = (mean(|c| &c.regret_kaar), mean(|c| &c.regret_ewa));
    out.write("regret_kaar.dat", |w| write_plot_data(w, &["t", "regret_kaar"], &kaar_mean))?;
    out.write("regret_ewa.dat", |w| write_plot_data(w, &["t", "regret_ewa"], &ewa_mean))?;
    let (a, b) = report.mean_final();
    println!("horizon {}, tau = {:.4}", report.horizon, report.tau);
    println!("expert net: {} experts, epsilon = {:.4}", report.ewa_experts, report.ewa_epsilon);
    println!("mean final regret: kaar {a:.6}, ewa {b:.6}");
    finish(out)
}

fn run_net_info(c: &Common) -> Outcome {
    let cfg = load(c)?;
    let info = net_info(&cfg)?;
    println!("beta = {}, M = {}, horizon = {}", info.beta, info.label_bound, cfg.experiment.horizon);
    println!("balanced epsilon n^(-beta/(beta+1)) = {:.6}", info.balanced_epsilon);
    println!("epsilon = {:.6}, cells = {}, eta = {:.6}", info.epsilon, info.cells, info.eta);
    match (info.n_experts, info.aggregation_bound) {
        (Some(n), Some(b)) => println!("experts = {n}, aggregation bound ln N / eta = {b:.4}"),
        _ => println!("experts: exceeds ewa.max_experts = {}", cfg.ewa.max_experts),
    }
    Ok(())
}
