//! Monte Carlo experiments comparing simulated statistics with their limits.
//!
//! Paths are generated in parallel from per-path RNG substreams; every
//! reduction below runs sequentially in path order, so a report depends only
//! on (config, seed).

use std::time::Instant;

use bss_core::asymptotics::{
    d_finite, ratio_limit_covariance, statistic_covariance, statistic_covariance_constant, AsymptoticCovariance, Design,
    RatioCoupling, RatioKind, StatisticCovariance,
};
use bss_core::covariation::{
    bias_from_weights, bias_term, clt_statistic, correlation_ratio, realised_covariation, relative_covolatility,
    VechSeries,
};
use bss_core::family::Target;
use bss_core::kernel::{
    check_assumption_pi_decay, check_assumption_squared_correlations, past_increment_ratio, CorrelationTable, Verdict,
};
use bss_core::scaling::{tau_case1, tau_tilde_empirical, ScalingFactors};
use bss_core::simulate::{
    build_core_covariance, simulate_bss, simulate_gaussian_core, BssPath, DriftModel, GridSpec, PathBundle, SimOptions,
    TimeFunction, Variant, VolatilityModel, VolatilityPath, VolatilitySpec, SIZE_CAP,
};
use bss_core::{GammaKernel, KernelSpec};
use nalgebra::DMatrix;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, RegimeChoice};
use crate::error::{ToolkitError, ToolkitResult};
use crate::report::{Check, ExperimentReport, Record, TargetProvenance, Timing};
use crate::stats::{correlation, covariance_with_se, jarque_bera, mean_se};

/// Jarque–Bera level for the per-entry normality checks.
pub const NORMALITY_LEVEL: f64 = 0.005;

/// Resolution at which lag-0 weights stand in for their n → ∞ limits.
pub const LIMIT_N: usize = 1 << 14;

/// Paths re-derived for the bit-for-bit invariance checks.
pub const BITWISE_PATHS: usize = 50;

/// Power-of-two factors applied componentwise in the rescaling checks.
const RESCALE: [f64; 4] = [2.0, 0.25, 8.0, 0.5];

pub fn run_experiment(cfg: &ExperimentConfig) -> ToolkitResult<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = match cfg.kind {
        ExperimentKind::Lln => run_lln_experiment(cfg),
        ExperimentKind::Clt => run_clt_experiment(cfg),
        ExperimentKind::Feasible => run_feasible_experiment(cfg),
        ExperimentKind::Audit => run_assumption_audit(cfg),
        ExperimentKind::GaussianCoreClt => run_gaussian_core_clt(cfg),
    }?;
    report.timing = Some(Timing { wall_seconds: start.elapsed().as_secs_f64(), threads: rayon::current_num_threads() });
    Ok(report)
}

fn vech_entries(p: usize) -> Vec<(usize, usize)> {
    (0..p).flat_map(|k| (0..=k).map(move |l| (k, l))).collect()
}

fn entry_label((k, l): (usize, usize)) -> String {
    format!("({},{})", k + 1, l + 1)
}

fn row_of(fraction: f64, steps: usize) -> usize {
    (fraction * steps as f64).round() as usize
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A BSS experiment at one resolution.
struct Bss {
    spec: KernelSpec,
    vol: VolatilitySpec,
    drift: Vec<DriftModel>,
    grid: GridSpec,
    n: usize,
    regime: RegimeChoice,
    variant: Variant,
    design: Design,
    /// Kernel scaling factors; None when estimated per path.
    scaling: Option<ScalingFactors>,
}

impl Bss {
    fn new(cfg: &ExperimentConfig, n: usize) -> ToolkitResult<Self> {
        let spec = cfg.kernel_spec()?;
        let p = spec.p();
        let vol = cfg.volatility_spec(p);
        vol.validate(p)?;
        if vol.cells.iter().flatten().all(Option::is_none) {
            return Err(ToolkitError::Config("volatility is identically zero".into()));
        }
        let regime = cfg.regime.unwrap_or(RegimeChoice::TildeTheoretical);
        let (variant, design) = match regime {
            RegimeChoice::CaseI => (Variant::Y, Design::case1_bss(&spec, true)?),
            RegimeChoice::BarSum | RegimeChoice::BarMax => {
                (Variant::Y, Design::bar(&spec, regime.bar_mode().expect("bar regime"), true)?)
            }
            RegimeChoice::TildeTheoretical | RegimeChoice::TildeEmpirical => {
                (Variant::X, Design::scenario2(&spec, vol.second_moments()?, true)?)
            }
        };
        let scaling = match regime {
            RegimeChoice::TildeEmpirical => None,
            _ => Some(design.scaling_at(n)?),
        };
        let grid = GridSpec::for_spec(cfg.grid()?.horizon, n, &spec)?;
        Ok(Self { drift: cfg.drift_models(p)?, spec, vol, grid, n, regime, variant, design, scaling })
    }

    fn p(&self) -> usize {
        self.spec.p()
    }

    fn simulate(&self, vol: &VolatilitySpec, m: usize, seed: u64) -> ToolkitResult<Vec<BssPath>> {
        let opts = SimOptions { keep_components: self.regime == RegimeChoice::CaseI, ..SimOptions::default() };
        Ok(simulate_bss(&self.spec, vol, &self.drift, &self.grid, self.variant, m, seed, &opts)?)
    }

    /// The bundle the scaled statistic is built from.
    fn statistic_bundle<'a>(&self, path: &'a BssPath) -> &'a PathBundle {
        match self.regime {
            RegimeChoice::CaseI => path.components.as_ref().expect("components kept for Case I"),
            _ => &path.observed,
        }
    }

    fn scaling_for(&self, path: &BssPath) -> ToolkitResult<ScalingFactors> {
        match &self.scaling {
            Some(s) => Ok(s.clone()),
            None => Ok(tau_tilde_empirical(&path.observed)?),
        }
    }

    /// σ as a constant matrix, if every cell is constant.
    fn constant_sigma(&self) -> Option<Vec<Vec<f64>>> {
        self.vol.all_constant().then(|| {
            self.vol.cells.iter().map(|r| r.iter().map(|c| c.and_then(|m| m.constant()).unwrap_or(0.0)).collect()).collect()
        })
    }

    /// Covariance of the CLT statistic at grid row `rows`, averaged over σ paths
    /// when σ is random.
    fn statistic_target(&self, d: &AsymptoticCovariance, rows: usize, paths: &[BssPath]) -> ToolkitResult<StatisticCovariance> {
        let t = rows as f64 / self.n as f64;
        if let Some(sigma) = self.constant_sigma() {
            return Ok(statistic_covariance_constant(d, &sigma, t)?);
        }
        let mut acc: Option<StatisticCovariance> = None;
        for path in paths {
            let s = statistic_covariance(d, &path.volatility, 1.0 / self.n as f64, rows)?;
            acc = Some(match acc {
                None => s,
                Some(mut a) => {
                    a.matrix += s.matrix;
                    a
                }
            });
        }
        let mut a = acc.ok_or_else(|| ToolkitError::Config("no paths".into()))?;
        a.matrix /= paths.len() as f64;
        Ok(a)
    }
}

/// Covariance and normality records for samples[entry][path] against `target`.
fn covariance_records(
    samples: &[Vec<f64>],
    entries: &[(usize, usize)],
    target: &StatisticCovariance,
    t: f64,
    cfg: &ExperimentConfig,
    prov: &TargetProvenance,
) -> ToolkitResult<Vec<Record>> {
    let mut out = Vec::new();
    let normal = TargetProvenance::new("Gaussian limit law", "√n(statistic − centring) ⇒ N(0, ∫V D Vᵀ)");
    for (a, &ea) in entries.iter().enumerate() {
        let ia = target.index(ea.0, ea.1)?;
        for (b, &eb) in entries.iter().enumerate().take(a + 1) {
            let ib = target.index(eb.0, eb.1)?;
            let est = covariance_with_se(&samples[a], &samples[b], cfg.seed ^ ((a * 64 + b) as u64));
            let name = format!("cov[{},{}]", entry_label(ea), entry_label(eb));
            out.push(
                Record::new(name, Check::Covariance, prov)
                    .z_test(est.value, target.matrix[(ia, ib)], est.se, cfg.se_multiplier)
                    .at(t)
                    .note(format!("{:?}", est.method).to_lowercase()),
            );
        }
    }
    for (a, &ea) in entries.iter().enumerate() {
        let var = target.matrix[(target.index(ea.0, ea.1)?, target.index(ea.0, ea.1)?)];
        if !(var > 0.0) {
            continue;
        }
        let sd = var.sqrt();
        let standardised: Vec<f64> = samples[a].iter().map(|x| x / sd).collect();
        let jb = jarque_bera(&standardised);
        out.push(
            Record::new(format!("jarque_bera{}", entry_label(ea)), Check::Normality, &normal)
                .values(Some(jb.p_value), Some(NORMALITY_LEVEL))
                .pass(jb.p_value >= NORMALITY_LEVEL)
                .at(t)
                .note(format!("JB={:.4}, skewness={:.4}, excess kurtosis={:.4}", jb.statistic, jb.skewness, jb.excess_kurtosis)),
        );
    }
    Ok(out)
}

/// Sample correlation of each statistic entry with each terminal level; the
/// limit is independent of the driving process.
fn independence_records(samples: &[Vec<f64>], entries: &[(usize, usize)], levels: &[Vec<f64>], t: f64, mult: f64) -> Vec<Record> {
    let prov = TargetProvenance::new("stable convergence", "corr(limit statistic, terminal level) = 0");
    let m = samples.first().map_or(0, Vec::len) as f64;
    let mut out = Vec::new();
    for (a, &e) in entries.iter().enumerate() {
        for (k, lv) in levels.iter().enumerate() {
            let r = correlation(&samples[a], lv);
            out.push(
                Record::new(format!("corr[{},level {}]", entry_label(e), k + 1), Check::Independence, &prov)
                    .z_test(r, 0.0, 1.0 / m.sqrt(), mult)
                    .at(t)
                    .informational(),
            );
        }
    }
    out
}

fn unit_sigma(p: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0; p]; p]
}

/// CLT for the Gaussian core under Case I scaling, with the exact finite-n
/// covariance of the statistic as target.
pub fn run_gaussian_core_clt(cfg: &ExperimentConfig) -> ToolkitResult<ExperimentReport> {
    if !matches!(cfg.regime, None | Some(RegimeChoice::CaseI)) {
        return Err(ToolkitError::Config("the Gaussian-core CLT uses Case I scaling".into()));
    }
    let spec = cfg.kernel_spec()?;
    let p = spec.p();
    let g = cfg.grid()?;
    let grid = GridSpec::for_spec(g.horizon, g.n, &spec)?;
    let steps = grid.steps();
    let core = build_core_covariance(&spec, &grid, Target::Components, SIZE_CAP)?;
    let paths = simulate_gaussian_core(&core, cfg.paths, cfg.seed)?;
    let scaling = tau_case1(&spec, g.n)?;
    let design = Design::gaussian(&spec, bss_core::asymptotics::ScalingChoice::CaseI)?;
    let at = design.at(g.n, 0)?;
    let bias = bias_term(&at, &VolatilityPath::constant(p, &unit_sigma(p), steps + 1))?;
    let entries = vech_entries(p);
    let mut samples = vec![Vec::with_capacity(paths.len()); entries.len()];
    let mut levels = vec![Vec::with_capacity(paths.len()); p];
    for path in &paths {
        let stat = clt_statistic(&realised_covariation(path, &scaling)?, &bias)?;
        for (a, &(k, l)) in entries.iter().enumerate() {
            samples[a].push(stat.get(steps, k, l));
        }
        for (k, lv) in levels.iter_mut().enumerate() {
            lv.push(path.level(steps, k));
        }
    }
    let d = d_finite(&design, g.n, steps)?;
    let t = grid.time(steps);
    let target = statistic_covariance_constant(&d, &unit_sigma(p), t)?;
    let prov = TargetProvenance::new(
        "Gaussian-core functional CLT",
        "Cov = t·Σ_{|h|<N}(1−|h|/N)[ρ_xz(h)ρ_yw(h) + ρ_xw(h)ρ_yz(h)]",
    );
    let mut records = covariance_records(&samples, &entries, &target, t, cfg, &prov)?;
    records.extend(independence_records(&samples, &entries, &levels, t, cfg.se_multiplier));
    let details = json!({
        "scaling": scaling,
        "target_covariance": matrix_rows(&target.matrix),
        "d": matrix_rows(&d.values),
        "d_diagnostics": d.diagnostics,
        "cholesky_size": core.matrix.nrows(),
    });
    Ok(ExperimentReport::new(cfg, records, details))
}

/// CLT for the BSS statistic in the configured Case I / bar / tilde regime.
pub fn run_clt_experiment(cfg: &ExperimentConfig) -> ToolkitResult<ExperimentReport> {
    let g = cfg.grid()?;
    let b = Bss::new(cfg, g.n)?;
    let p = b.p();
    let steps = b.grid.steps();
    let paths = b.simulate(&b.vol, cfg.paths, cfg.seed)?;
    let at = b.design.at(b.n, 0)?;
    let entries = vech_entries(p);
    let mut samples = vec![Vec::with_capacity(paths.len()); entries.len()];
    let mut levels = vec![Vec::with_capacity(paths.len()); p];
    for path in &paths {
        let cov = realised_covariation(b.statistic_bundle(path), &b.scaling_for(path)?)?;
        let stat = clt_statistic(&cov, &bias_term(&at, &path.volatility)?)?;
        for (a, &(k, l)) in entries.iter().enumerate() {
            samples[a].push(stat.get(steps, k, l));
        }
        for (k, lv) in levels.iter_mut().enumerate() {
            lv.push(path.observed.level(steps, k));
        }
    }
    let d = d_finite(&b.design, b.n, steps)?;
    let target = b.statistic_target(&d, steps, &paths)?;
    let t = b.grid.time(steps);
    let prov = TargetProvenance::new(
        match b.regime {
            RegimeChoice::CaseI => "vech CLT, Case I scaling",
            RegimeChoice::BarSum | RegimeChoice::BarMax => "vech CLT, bar scaling",
            _ => "vech CLT, tilde scaling",
        },
        "Cov(√n(cov_t − R_{t,n})) = ∫₀ᵗ V_s D V_sᵀ ds",
    );
    let mut records = covariance_records(&samples, &entries, &target, t, cfg, &prov)?;
    records.extend(independence_records(&samples, &entries, &levels, t, cfg.se_multiplier));
    let details = json!({
        "scaling": b.scaling,
        "target_covariance": matrix_rows(&target.matrix),
        "d": matrix_rows(&d.values),
        "d_diagnostics": d.diagnostics,
    });
    Ok(ExperimentReport::new(cfg, records, details))
}

/// Weak LLN: realised covariation against the limit-weight centring R̄_t at the
/// checkpoints, for each configured resolution.
pub fn run_lln_experiment(cfg: &ExperimentConfig) -> ToolkitResult<ExperimentReport> {
    let regime = cfg.regime.unwrap_or(RegimeChoice::TildeTheoretical);
    if matches!(regime, RegimeChoice::CaseI) {
        return Err(ToolkitError::Config("the LLN experiment uses bar or tilde scaling".into()));
    }
    let g = cfg.grid()?;
    let resolutions = cfg.resolutions.clone().unwrap_or_else(|| vec![g.n / 2, g.n, 2 * g.n]);
    let checkpoints = cfg.checkpoints();
    let prov = TargetProvenance::new("weak LLN", "(1/n)Σ ΔY⁽ᵏ⁾ΔY⁽ˡ⁾/(τ⁽ᵏ⁾τ⁽ˡ⁾) → Σ r̄(0)·∫₀ᵗσσ ds");
    let mut records = Vec::new();
    let mut rms = Vec::new();
    let mut details = Vec::new();
    for &n in &resolutions {
        let b = Bss::new(cfg, n)?;
        let steps = b.grid.steps();
        let entries = vech_entries(b.p());
        let limit = b.design.at(LIMIT_N, 0)?.bias_weights();
        let paths = b.simulate(&b.vol, cfg.paths, cfg.seed)?;
        let rows: Vec<usize> = checkpoints.iter().map(|c| row_of(*c, steps)).collect();
        // [checkpoint][entry] → (values, targets)
        let mut vals = vec![vec![(Vec::new(), Vec::new()); entries.len()]; rows.len()];
        let mut sq = 0.0;
        for path in &paths {
            let cov = realised_covariation(b.statistic_bundle(path), &b.scaling_for(path)?)?;
            let rbar = bias_from_weights(&b.design.descriptor, cov.regime, n, &limit, &path.volatility)?.series;
            for (c, &row) in rows.iter().enumerate() {
                for (a, &(k, l)) in entries.iter().enumerate() {
                    vals[c][a].0.push(cov.series.get(row, k, l));
                    vals[c][a].1.push(rbar.get(row, k, l));
                }
            }
            for &(k, l) in &entries {
                sq += (cov.series.get(steps, k, l) - rbar.get(steps, k, l)).powi(2);
            }
        }
        rms.push((sq / (paths.len() * entries.len()) as f64).sqrt());
        for (c, &row) in rows.iter().enumerate() {
            let t = b.grid.time(row);
            for (a, &e) in entries.iter().enumerate() {
                let (v, r) = &vals[c][a];
                let err: Vec<f64> = v.iter().zip(r).map(|(x, y)| x - y).collect();
                let (_, se) = mean_se(&err);
                let (mv, _) = mean_se(v);
                let (mr, _) = mean_se(r);
                records.push(
                    Record::new(format!("covariation{} n={n}", entry_label(e)), Check::Mean, &prov)
                        .z_test(mv, mr, se, cfg.se_multiplier)
                        .at(t),
                );
            }
        }
        details.push(json!({ "n": n, "scaling": b.scaling, "limit_weights": limit, "rms_error_at_horizon": rms.last() }));
    }
    let decreasing = rms.windows(2).all(|w| w[1] < w[0]);
    let mono = TargetProvenance::new("weak LLN", "RMS over paths of (cov_T − R̄_T) strictly decreasing in n");
    records.push(
        Record::new("rms_error_decreasing", Check::Monotone, &mono)
            .values(rms.last().copied(), None)
            .pass(decreasing)
            .note(format!("{:?} over n = {:?}", rms, resolutions)),
    );
    Ok(ExperimentReport::new(cfg, records, json!({ "resolutions": details })))
}

fn scale_model(m: &VolatilityModel, c: f64) -> VolatilityModel {
    match *m {
        VolatilityModel::Constant { c: v } => VolatilityModel::Constant { c: c * v },
        VolatilityModel::Deterministic { function } => VolatilityModel::Deterministic {
            function: match function {
                TimeFunction::Linear { a, b } => TimeFunction::Linear { a: c * a, b: c * b },
                TimeFunction::Sinusoid { level, amplitude, frequency } => {
                    TimeFunction::Sinusoid { level: c * level, amplitude: c * amplitude, frequency }
                }
            },
        },
        VolatilityModel::SmoothStochastic { level, eta, theta, kappa, alpha } => {
            VolatilityModel::SmoothStochastic { level: c * level, eta, theta, kappa, alpha }
        }
    }
}

fn series_bits(s: &VechSeries) -> Vec<u64> {
    s.values.iter().map(|v| v.to_bits()).collect()
}

/// Feasible statistics: WLLN and CLT of the relative covolatility and the
/// correlation ratio, plus their exact and bitwise invariances.
pub fn run_feasible_experiment(cfg: &ExperimentConfig) -> ToolkitResult<ExperimentReport> {
    let g = cfg.grid()?;
    let b = Bss::new(cfg, g.n)?;
    if b.regime == RegimeChoice::CaseI {
        return Err(ToolkitError::Config("feasible statistics use bar or tilde scaling".into()));
    }
    let p = b.p();
    let steps = b.grid.steps();
    let frac = cfg.ratio_time.unwrap_or(0.5);
    let row_t = row_of(frac, steps);
    let t = b.grid.time(row_t);
    let horizon = b.grid.time(steps);
    let mult = cfg.se_multiplier;
    let root = (b.n as f64).sqrt();
    let paths = b.simulate(&b.vol, cfg.paths, cfg.seed)?;
    let at = b.design.at(b.n, 0)?;
    let entries = vech_entries(p);
    let cross: Vec<(usize, usize)> = entries.iter().copied().filter(|(k, l)| k != l).collect();

    // Centring R_{t,n}, R_{T,n} per path (identical for constant σ).
    let mut rel = vec![Vec::new(); entries.len()];
    let mut rel_target = vec![Vec::new(); entries.len()];
    let mut corr = vec![Vec::new(); cross.len()];
    let mut corr_target = vec![Vec::new(); cross.len()];
    let mut terminal_exact = true;
    let mut bounded = true;
    let mut bias_mats = Vec::with_capacity(paths.len());
    for path in &paths {
        let bias = bias_term(&at, &path.volatility)?.series;
        let (rt, rterm) = (bias.matrix_at(row_t), bias.matrix_at(steps));
        let rc = relative_covolatility(&path.observed)?;
        for (a, &(k, l)) in entries.iter().enumerate() {
            rel[a].push(rc.get(row_t, k, l));
            rel_target[a].push(rt[k][l] / rterm[k][l]);
            terminal_exact &= rc.get(steps, k, l) == 1.0;
        }
        if !cross.is_empty() {
            let cr = correlation_ratio(&path.observed, None)?;
            bounded &= cr.values.iter().all(|v| (-1.0..=1.0).contains(v));
            let i = cr.row_at(t);
            for (a, &(k, l)) in cross.iter().enumerate() {
                corr[a].push(cr.get(i, k, l));
                corr_target[a].push(rt[k][l] / (rt[k][k] * rt[l][l]).sqrt());
            }
        }
        bias_mats.push((rt, rterm));
    }

    let wlln_rc = TargetProvenance::new("relative covolatility WLLN", "Σ_{i≤nt}ΔY⁽ᵏ⁾ΔY⁽ˡ⁾/Σ_{i≤nT}ΔY⁽ᵏ⁾ΔY⁽ˡ⁾ → R̄ᵏˡ_t/R̄ᵏˡ_T");
    let wlln_cr = TargetProvenance::new("correlation ratio WLLN", "ρ̂ᵏˡ_t → R̄ᵏˡ_t/sqrt(R̄ᵏᵏ_t R̄ˡˡ_t)");
    let clt_rc = TargetProvenance::new(
        "relative covolatility CLT",
        "Var = Var(Z_t)/R_T² − 2R_t Cov(Z_t,Z_T)/R_T³ + R_t² Var(Z_T)/R_T⁴, Cov(Z_t,Z_T) = Var(Z_t)",
    );
    let clt_cr = TargetProvenance::new(
        "correlation ratio CLT",
        "s = 1/sqrt(R_kk R_ll); coefficients s on (k,l), −s R_kl/(2R_kk) on (k,k), −s R_kl/(2R_ll) on (l,l)",
    );
    let mut records = Vec::new();
    let mut rel_valid = Vec::new();
    for (a, &e) in entries.iter().enumerate() {
        let (m, se) = mean_se(&rel[a]);
        let (target, _) = mean_se(&rel_target[a]);
        if !target.is_finite() {
            continue;
        }
        rel_valid.push(a);
        records.push(Record::new(format!("relative_covolatility{}", entry_label(e)), Check::Mean, &wlln_rc).z_test(m, target, se, mult).at(t));
    }
    for (a, &e) in cross.iter().enumerate() {
        let (m, se) = mean_se(&corr[a]);
        let (target, _) = mean_se(&corr_target[a]);
        records.push(Record::new(format!("correlation_ratio{}", entry_label(e)), Check::Mean, &wlln_cr).z_test(m, target, se, mult).at(t));
    }
    let exact = TargetProvenance::new("feasible statistic identities", "relative covolatility at T = 1; |correlation ratio| ≤ 1");
    records.push(Record::new("relative_covolatility_at_horizon_is_one", Check::Exact, &exact).pass(terminal_exact).at(horizon));
    if !cross.is_empty() {
        records.push(Record::new("correlation_ratio_bounded", Check::Exact, &exact).pass(bounded));
    }

    // CLT of the √n-centred ratios.
    let d_t = d_finite(&b.design, b.n, row_t)?;
    let d_terminal = d_finite(&b.design, b.n, steps)?;
    let constant = b.constant_sigma().is_some();
    let sample_paths: &[BssPath] = if constant { &paths[..1] } else { &paths };
    let couplings = [RatioCoupling::Independent, RatioCoupling::Joint];
    let rc_entries: Vec<(usize, usize)> = rel_valid.iter().map(|&a| entries[a]).collect();
    let mut rc_var = vec![vec![0.0; rc_entries.len()]; couplings.len()];
    let mut cr_var = vec![vec![0.0; cross.len()]; couplings.len()];
    for (i, path) in sample_paths.iter().enumerate() {
        let st = b.statistic_target(&d_t, row_t, std::slice::from_ref(path))?;
        let sterm = b.statistic_target(&d_terminal, steps, std::slice::from_ref(path))?;
        let (rt, rterm) = &bias_mats[i];
        for (c, &coupling) in couplings.iter().enumerate() {
            if !rc_entries.is_empty() {
                let m = ratio_limit_covariance(RatioKind::RelativeCovolatility, coupling, &rc_entries, &st, Some(&sterm), rt, Some(rterm))?;
                for j in 0..rc_entries.len() {
                    rc_var[c][j] += m[(j, j)] / sample_paths.len() as f64;
                }
            }
            if !cross.is_empty() {
                let m = ratio_limit_covariance(RatioKind::CorrelationRatio, coupling, &cross, &st, None, rt, None)?;
                for j in 0..cross.len() {
                    cr_var[c][j] += m[(j, j)] / sample_paths.len() as f64;
                }
            }
        }
    }
    let centred = |xs: &[f64], ts: &[f64]| -> Vec<f64> { xs.iter().zip(ts).map(|(x, y)| root * (x - y)).collect() };
    for (c, coupling) in couplings.iter().enumerate() {
        let tag = format!("{coupling:?}").to_lowercase();
        for (j, &a) in rel_valid.iter().enumerate() {
            let z = centred(&rel[a], &rel_target[a]);
            let est = covariance_with_se(&z, &z, cfg.seed ^ (a as u64 + 1000));
            records.push(
                Record::new(format!("var_relative_covolatility{} [{tag}]", entry_label(entries[a])), Check::Covariance, &clt_rc)
                    .z_test(est.value, rc_var[c][j], est.se, mult)
                    .at(t),
            );
        }
        for (j, &e) in cross.iter().enumerate() {
            let z = centred(&corr[j], &corr_target[j]);
            let est = covariance_with_se(&z, &z, cfg.seed ^ (j as u64 + 2000));
            records.push(
                Record::new(format!("var_correlation_ratio{} [{tag}]", entry_label(e)), Check::Covariance, &clt_cr)
                    .z_test(est.value, cr_var[c][j], est.se, mult)
                    .at(t),
            );
        }
    }

    // Bit-for-bit invariance under power-of-two rescaling.
    let inv = TargetProvenance::new("τ-free feasible statistics", "ratios invariant under Y⁽ᵏ⁾ ↦ c_k Y⁽ᵏ⁾");
    let take = paths.len().min(BITWISE_PATHS);
    let stats_of = |bundle: &PathBundle| -> ToolkitResult<(Vec<u64>, Vec<u64>)> {
        let cr = if p > 1 { series_bits(&correlation_ratio(bundle, None)?) } else { Vec::new() };
        Ok((series_bits(&relative_covolatility(bundle)?), cr))
    };
    let mut same = true;
    for path in &paths[..take] {
        let mut scaled = path.observed.clone();
        for k in 0..p {
            scaled.scale_component(k, RESCALE[k % RESCALE.len()]);
        }
        same &= stats_of(&path.observed)? == stats_of(&scaled)?;
    }
    records.push(Record::new("componentwise_rescaling_bitwise", Check::Bitwise, &inv).pass(same));
    if b.drift.iter().all(|d| *d == DriftModel::Zero) {
        let doubled = VolatilitySpec {
            cells: b.vol.cells.iter().map(|r| r.iter().map(|c| c.map(|m| scale_model(&m, 2.0))).collect()).collect(),
        };
        let again = b.simulate(&doubled, take, cfg.seed)?;
        let mut same = true;
        for (x, y) in paths[..take].iter().zip(&again) {
            same &= stats_of(&x.observed)? == stats_of(&y.observed)?;
        }
        records.push(
            Record::new("volatility_doubling_bitwise", Check::Bitwise, &inv).pass(same).note("σ ↦ 2σ, shared seed"),
        );
    }
    let details = json!({
        "ratio_time": t,
        "relative_covolatility_variance": { "independent": rc_var[0], "joint": rc_var[1] },
        "correlation_ratio_variance": { "independent": cr_var[0], "joint": cr_var[1] },
        "d_t_diagnostics": d_t.diagnostics,
    });
    Ok(ExperimentReport::new(cfg, records, details))
}

/// Runs the kernel assumption diagnostics over a δ × λ grid. δ outside the
/// admissible range must be rejected by the kernel constructor.
pub fn run_assumption_audit(cfg: &ExperimentConfig) -> ToolkitResult<ExperimentReport> {
    let a = cfg.audit.as_ref().ok_or_else(|| ToolkitError::Config("missing [audit]".into()))?;
    let domain = TargetProvenance::new("gamma kernel validity range", "δ ∈ (−1/2, 1/2), λ > 0");
    let a1 = TargetProvenance::new("π_n decay", "π_n((n^{−κ},∞)) = O(n^{λ(1−κ)}) with λ < −1");
    let a2 = TargetProvenance::new("square-summable correlations", "lim_n Σ_k r⁽ⁿ⁾(k)² < ∞");
    let a3 = TargetProvenance::new("bounded past increments", "sqrt(∫₀^∞ψ²)/τ_n bounded in n");
    let mut records = Vec::new();
    let mut details = Vec::new();
    for &delta in &a.deltas {
        for &lambda in &a.lambdas {
            let tag = format!("δ={delta} λ={lambda}");
            let admissible = delta > -0.5 && delta < 0.5 && lambda > 0.0;
            records.push(
                Record::new(format!("domain {tag}"), Check::Domain, &domain)
                    .values(Some(delta), None)
                    .pass(true)
                    .note(if admissible { "inside the validity range" } else { "rejected: outside the validity range" }),
            );
            if !admissible {
                continue;
            }
            let kernel = GammaKernel::new(delta, lambda)?;
            let spec = KernelSpec::uniform(1, kernel);
            let table = CorrelationTable::case1(&spec, a.n, a.max_lag)?;
            let sq = check_assumption_squared_correlations(&table, a.max_lag, Some(delta))?;
            let fitted = sq.pairs.first().and_then(|pr| pr.fitted_exponent);
            records.push(
                Record::new(format!("square_summable {tag}"), Check::Assumption, &a2)
                    .values(fitted, Some(-1.0))
                    .pass(sq.verdict == Verdict::Pass)
                    .note(format!("{:?}", sq.verdict).to_lowercase()),
            );
            let pi = check_assumption_pi_decay(&kernel, &a.pi_ns, &a.kappas)?;
            let worst = pi.fits.iter().map(|f| f.lambda).fold(f64::NEG_INFINITY, f64::max);
            records.push(
                Record::new(format!("pi_decay {tag}"), Check::Assumption, &a1)
                    .values(Some(worst), Some(-1.0))
                    .pass(pi.verdict == Verdict::Pass),
            );
            let ratios = a.pi_ns.iter().map(|&n| past_increment_ratio(&kernel, n)).collect::<Result<Vec<_>, _>>()?;
            let max = ratios.iter().copied().fold(0.0, f64::max);
            records.push(
                Record::new(format!("bounded_past {tag}"), Check::Assumption, &a3)
                    .values(Some(max), Some(1.0))
                    .pass(ratios.iter().all(|r| r.is_finite() && *r <= 1.0 + 1e-9)),
            );
            details.push(json!({ "delta": delta, "lambda": lambda, "squared_correlations": sq, "pi_decay": pi, "past_ratios": ratios }));
        }
    }
    Ok(ExperimentReport::new(cfg, records, json!({ "kernels": details })))
}
