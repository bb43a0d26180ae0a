use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bss_core::asymptotics::{d_finite, d_limit, statistic_covariance_constant, Design, LimitOptions, ScalingChoice};
use bss_core::covariation::{correlation_ratio, realised_covariation, relative_covolatility};
use bss_core::family::Target;
use bss_core::scaling::{tau_case1, tau_tilde_empirical};
use bss_core::simulate::{build_core_covariance, simulate_bss, simulate_gaussian_core, GridSpec, SimOptions, SIZE_CAP};
use bss_toolkit::config::{ExperimentConfig, ExperimentKind, RegimeChoice};
use bss_toolkit::io::{emit_report, ingest_paths, write_json, write_matrix, write_paths, write_series, MatrixHeader, ReportFormat};
use bss_toolkit::{run_experiment, ToolkitError, ToolkitResult};
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "bss", version, about = "Simulate BSS processes and test realised-covariation limit theory")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the config scaling regime.
    #[arg(long, global = true, value_enum)]
    scaling: Option<RegimeChoice>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths from a config and write one CSV (+ JSON sidecar) per path.
    Simulate {
        config: PathBuf,
        /// Overrides the config path count.
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Scaled realised covariation of a path file.
    Covariation {
        paths: PathBuf,
        /// Kernel config for kernel-based scaling (not needed for tilde_empirical).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Relative covolatility and correlation ratio of a path file.
    Feasible {
        paths: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Limit (or finite-n) covariance D and the statistic covariance.
    Asymptotics {
        config: PathBuf,
        /// Exact finite-n D at the config grid instead of the n → ∞ limit.
        #[arg(long)]
        finite: bool,
    },
    /// Kernel assumption audit.
    Audit { config: PathBuf },
    /// Run configured experiments.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    Run { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> ToolkitResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.scaling {
        cfg.regime = Some(r);
    }
    Ok(cfg)
}

fn experiment(cli: &Cli, cfg: &ExperimentConfig) -> ToolkitResult<()> {
    let report = run_experiment(cfg)?;
    let dir = cfg.out_dir.clone().unwrap_or_else(|| cli.out_dir.join(&report.name));
    let files = emit_report(&report, &dir, &[ReportFormat::Json, ReportFormat::Table, ReportFormat::PlotData])?;
    for r in &report.records {
        let mark = if r.pass { "ok  " } else if r.gating { "FAIL" } else { "info" };
        println!("{mark} {:<48} empirical={:?} target={:?} z={:?}", r.statistic, r.empirical, r.target, r.z);
    }
    println!("{}: {}", report.name, if report.pass { "PASS" } else { "FAIL" });
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> ToolkitResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| ToolkitError::Config(format!("thread pool: {e}")))?;
    }
    let out = &cli.out_dir;
    match &cli.command {
        Command::Simulate { config, paths } => {
            let cfg = load(cli, config)?;
            let spec = cfg.kernel_spec()?;
            let g = cfg.grid()?;
            let grid = GridSpec::for_spec(g.horizon, g.n, &spec)?;
            let m = paths.unwrap_or(cfg.paths);
            let bundles = match (cfg.kind, cfg.regime.and_then(RegimeChoice::variant)) {
                (ExperimentKind::GaussianCoreClt, _) | (_, None) => {
                    let cov = build_core_covariance(&spec, &grid, Target::Components, SIZE_CAP)?;
                    simulate_gaussian_core(&cov, m, cfg.seed)?
                }
                (_, Some(variant)) => {
                    let vol = cfg.volatility_spec(spec.p());
                    let drift = cfg.drift_models(spec.p())?;
                    simulate_bss(&spec, &vol, &drift, &grid, variant, m, cfg.seed, &SimOptions::default())?
                        .into_iter()
                        .map(|p| p.observed)
                        .collect()
                }
            };
            for (i, b) in bundles.iter().enumerate() {
                let path = out.join(format!("path_{i:05}.csv"));
                write_paths(b, &path)?;
            }
            println!("wrote {} paths to {}", bundles.len(), out.display());
        }
        Command::Covariation { paths, config } => {
            let bundle = ingest_paths(paths)?;
            let regime = cli.scaling.unwrap_or(RegimeChoice::TildeEmpirical);
            let scaling = match regime {
                RegimeChoice::TildeEmpirical => tau_tilde_empirical(&bundle)?,
                _ => {
                    let cfg = load(cli, config.as_deref().ok_or_else(|| ToolkitError::Config("--config needed for kernel scaling".into()))?)?;
                    let spec = cfg.kernel_spec()?;
                    let n = bundle.grid.n;
                    match regime {
                        RegimeChoice::CaseI => tau_case1(&spec, n)?,
                        RegimeChoice::BarSum | RegimeChoice::BarMax => {
                            bss_core::scaling::tau_bar(&spec, n, regime.bar_mode().expect("bar regime"))?
                        }
                        _ => bss_core::scaling::tau_tilde_theoretical(&spec, &cfg.volatility_spec(spec.p()).second_moments()?, n)?,
                    }
                }
            };
            let cov = realised_covariation(&bundle, &scaling)?;
            write_series(&out.join("covariation.csv"), &cov.series)?;
            write_json(&out.join("scaling.json"), &scaling)?;
            println!("wrote covariation.csv and scaling.json to {}", out.display());
        }
        Command::Feasible { paths, epsilon } => {
            let bundle = ingest_paths(paths)?;
            write_series(&out.join("relative_covolatility.csv"), &relative_covolatility(&bundle)?)?;
            if bundle.p() > 1 {
                write_series(&out.join("correlation_ratio.csv"), &correlation_ratio(&bundle, *epsilon)?)?;
            }
            println!("wrote feasible statistics to {}", out.display());
        }
        Command::Asymptotics { config, finite } => {
            let cfg = load(cli, config)?;
            let spec = cfg.kernel_spec()?;
            let p = spec.p();
            let vol = cfg.volatility_spec(p);
            let design = match cfg.regime.unwrap_or(RegimeChoice::CaseI) {
                RegimeChoice::CaseI if cfg.kind == ExperimentKind::GaussianCoreClt => Design::gaussian(&spec, ScalingChoice::CaseI)?,
                RegimeChoice::CaseI => Design::case1_bss(&spec, true)?,
                r @ (RegimeChoice::BarSum | RegimeChoice::BarMax) => Design::bar(&spec, r.bar_mode().expect("bar regime"), true)?,
                _ => Design::scenario2(&spec, vol.second_moments()?, true)?,
            };
            let d = if *finite {
                let g = cfg.grid()?;
                d_finite(&design, g.n, GridSpec::new(g.horizon, g.n, 0.0)?.steps())?
            } else {
                d_limit(&design, &LimitOptions::default())?
            };
            let header = MatrixHeader {
                name: "D".into(),
                rows: d.values.nrows(),
                cols: d.values.ncols(),
                row_labels: vec![],
                notes: json!({ "descriptor": d.descriptor, "diagnostics": d.diagnostics }),
            };
            write_matrix(&out.join("d.csv"), &d.values, &header)?;
            if vol.all_constant() {
                let sigma: Vec<Vec<f64>> = if cfg.kind == ExperimentKind::GaussianCoreClt {
                    vec![vec![1.0; p]; p]
                } else {
                    vol.cells.iter().map(|r| r.iter().map(|c| c.and_then(|m| m.constant()).unwrap_or(0.0)).collect()).collect()
                };
                let t = cfg.grid.map_or(1.0, |g| g.horizon);
                let s = statistic_covariance_constant(&d, &sigma, t)?;
                let header = MatrixHeader { name: "statistic covariance".into(), rows: s.matrix.nrows(), cols: s.matrix.ncols(), row_labels: vec![], notes: json!({ "t": t }) };
                write_matrix(&out.join("statistic_covariance.csv"), &s.matrix, &header)?;
            }
            println!("D: {}×{}, converged = {}", d.values.nrows(), d.values.ncols(), d.diagnostics.converged);
        }
        Command::Audit { config } => {
            let mut cfg = load(cli, config)?;
            cfg.kind = ExperimentKind::Audit;
            experiment(cli, &cfg)?;
        }
        Command::Experiment { action: ExperimentAction::Run { config } } => {
            let cfg = load(cli, config)?;
            experiment(cli, &cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
