//! End-to-end acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the verdict lines are always printed; exits
//! non-zero when any criterion fails. Every tolerance is pinned below.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bss_core::asymptotics::{d_finite, d_gaussian, v_matrix, Design, LimitOptions, ScalingChoice};
use bss_core::indexing::*;
use bss_core::kernel::{increment_correlation, limiting_correlation, quadrature_numerator, series_numerator};
use bss_core::quad::TanhSinh;
use bss_core::special::SeriesControl;
use bss_core::{GammaKernel, KernelSpec};
use bss_toolkit::config::{ExperimentConfig, RegimeChoice};
use bss_toolkit::report::{Check, ExperimentReport, Record};
use bss_toolkit::run_experiment;

const CORR_DELTAS: [f64; 4] = [-0.25, 0.1, 0.25, 0.4];
const CORR_LAMBDAS: [f64; 3] = [0.5, 1.0, 2.0];
const CORR_MAX_LAG: u64 = 20;
const CORR_TOL: f64 = 1e-2;
const CORR_EXPONENTS: std::ops::RangeInclusive<u32> = 8..=14;

const DEGENERATE_LAGS: u64 = 1000;
const D_BROWNIAN: f64 = 2.0;
const D_TOL: f64 = 1e-6;
const BRUTE_N: usize = 64;
const BRUTE_TOL: f64 = 1e-10;

const SERIES_DELTAS: [f64; 3] = [-0.3, 0.1, 0.35];
const SERIES_LAMBDAS: [f64; 3] = [0.5, 1.0, 2.0];
const SERIES_LAGS: [i64; 5] = [1, 2, 3, 5, 8];
const SERIES_N: f64 = 16.0;
const SERIES_CONTROL_TOL: f64 = 1e-9;
const SERIES_TOL: f64 = 1e-8;

const CHI_XI: [(usize, usize); 15] =
    [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3), (4, 1), (4, 2), (4, 3), (4, 4), (5, 1), (5, 2), (5, 3), (5, 4), (5, 5)];
const MAX_P: usize = 4;

/// Monte Carlo settings every experiment must carry.
const SE_MULTIPLIER: f64 = 3.0;
const CLT_PATHS: usize = 2000;
const CLT_N: usize = 500;
const NORMALITY_LEVEL: f64 = 0.005;
const CHECKPOINTS: [f64; 3] = [0.25, 0.5, 1.0];
const LLN_RESOLUTIONS: [usize; 3] = [250, 500, 1000];
const RATIO_TIME: f64 = 0.5;
const HALF: f64 = 0.5;
const EXACT_TOL: f64 = 1e-12;

const EXPERIMENTS: [&str; 6] = ["gaussian_core_clt", "clt_tilde", "lln_bar", "feasible_pair", "feasible_single", "audit"];

struct Verdict {
    pass: bool,
    summary: String,
    failures: Vec<String>,
}

impl Verdict {
    fn new(summary: impl Into<String>) -> Self {
        Self { pass: true, summary: summary.into(), failures: Vec::new() }
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.pass = false;
            self.failures.push(what());
        }
    }
}

fn k(d: f64, l: f64) -> GammaKernel {
    GammaKernel::new(d, l).expect("valid kernel")
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn correlation_limit() -> Verdict {
    let mut v = Verdict::new("correlation limit at n = 2^14 and monotone error");
    for d in CORR_DELTAS {
        for l in CORR_LAMBDAS {
            let spec = KernelSpec::uniform(1, k(d, l));
            let errs: Vec<f64> = CORR_EXPONENTS
                .map(|e| {
                    let n = (1u64 << e) as f64;
                    (1..=CORR_MAX_LAG)
                        .map(|lag| {
                            let r = increment_correlation(&spec, n, 0, 0, lag as i64).expect("correlation");
                            (r - limiting_correlation(d, lag).expect("limit")).abs()
                        })
                        .fold(0.0, f64::max)
                })
                .collect();
            let last = *errs.last().unwrap();
            v.require(last <= CORR_TOL, || format!("δ={d} λ={l}: max error {last:.3e} at n=2^14 > {CORR_TOL:e}"));
            v.require(errs.windows(2).all(|w| w[1] < w[0]), || format!("δ={d} λ={l}: errors not decreasing {errs:?}"));
        }
    }
    v
}

fn degeneracy() -> Verdict {
    let mut v = Verdict::new("δ = 0 limits vanish and D = 2");
    for lag in 1..=DEGENERATE_LAGS {
        let r = limiting_correlation(0.0, lag).expect("limit");
        v.require(r == 0.0, || format!("ρ({lag}) = {r:e}"));
    }
    for l in CORR_LAMBDAS {
        let spec = KernelSpec::uniform(1, k(0.0, l));
        let d = d_gaussian(&spec, ScalingChoice::CaseI, &LimitOptions::default()).expect("D limit").values[(0, 0)];
        v.require((d - D_BROWNIAN).abs() <= D_TOL, || format!("λ={l}: D = {d}"));
        // Brute-force double sum of 2ρ² at finite n against the Fejér evaluation.
        let nf = BRUTE_N as f64;
        let rho: Vec<f64> =
            (0..BRUTE_N as i64).map(|h| increment_correlation(&spec, nf, 0, 0, h).expect("correlation")).collect();
        let mut brute = 0.0;
        for i in 0..BRUTE_N {
            for j in 0..BRUTE_N {
                brute += 2.0 * rho[i.abs_diff(j)].powi(2);
            }
        }
        brute /= nf;
        let fin = d_finite(&Design::gaussian(&spec, ScalingChoice::CaseI).expect("design"), BRUTE_N, BRUTE_N)
            .expect("finite D")
            .values[(0, 0)];
        v.require((fin - brute).abs() <= BRUTE_TOL, || format!("λ={l}: finite D {fin} vs brute force {brute}"));
    }
    v
}

fn series_oracle() -> Verdict {
    let mut v = Verdict::new("series numerator equals quadrature on the 3×3×5 grid");
    let ctl = SeriesControl { rel_tol: SERIES_CONTROL_TOL, ..SeriesControl::default() };
    let q = TanhSinh::default();
    let mut worst: f64 = 0.0;
    for d in SERIES_DELTAS {
        for l in SERIES_LAMBDAS {
            let spec = KernelSpec::uniform(1, k(d, l));
            for lag in SERIES_LAGS {
                match series_numerator(&spec, SERIES_N, 0, 0, lag, &ctl) {
                    Ok(s) => {
                        let qv = quadrature_numerator(&q, &spec, SERIES_N, 0, 0, lag).expect("quadrature");
                        let e = rel_err(s.value, qv);
                        worst = worst.max(e);
                        v.require(e <= SERIES_TOL, || format!("δ={d} λ={l} k={lag}: {} vs {qv}", s.value));
                    }
                    Err(e) => v.require(false, || format!("δ={d} λ={l} k={lag}: series failed: {e}")),
                }
            }
        }
    }
    v.summary.push_str(&format!(" (worst relative error {worst:.1e})"));
    v
}

fn index_maps() -> Verdict {
    let mut v = Verdict::new("index maps: vech sequence, bijections for p ≤ 4, Case I dimensions");
    for (i, want) in CHI_XI.iter().enumerate() {
        let got = vech_chi_xi(i + 1).expect("χ/ξ");
        v.require(got == *want, || format!("χ/ξ({}) = {got:?}, want {want:?}", i + 1));
    }
    for p in 1..=MAX_P {
        let mut pairs = HashSet::new();
        for z in 1..=p * p {
            let (x, y) = pair_from_flat(z, p).expect("pair");
            v.require(flat_from_pair(x, y, p).ok() == Some(z) && pairs.insert((x, y)), || format!("pair map p={p} z={z}"));
        }
        for (s, nu) in nu_enumerate(p).into_iter().enumerate() {
            v.require(nu_index(nu, p).ok() == Some(s + 1), || format!("ν map p={p} s={}", s + 1));
        }
        for (s, mu) in mu_enumerate(p).into_iter().enumerate() {
            v.require(mu_index(mu, p).ok() == Some(s + 1), || format!("μ map p={p} s={}", s + 1));
        }
        let mut seen = HashSet::new();
        for z in 1..=p.pow(6) {
            let (nu, a, b) = case1_flat_map(z, p).expect("Case I map");
            v.require(case1_flat_index(nu, a, b, p).ok() == Some(z) && seen.insert((nu, a, b)), || format!("Case I map p={p} z={z}"));
        }
        let mut seen = HashSet::new();
        for z in 1..=p.pow(4) {
            let (mu, a, b) = scenario2_flat_map(z, p).expect("scenario map");
            v.require(scenario2_flat_index(mu, a, b, p).ok() == Some(z) && seen.insert((mu, a, b)), || format!("scenario map p={p} z={z}"));
        }
        for scheme in [IndexScheme::PairSquare, IndexScheme::CaseIFull, IndexScheme::CaseIVech, IndexScheme::Scenario2Full, IndexScheme::Scenario2Vech] {
            let d = IndexMapDescriptor::new(p, scheme);
            let decoded: HashSet<_> = (1..=d.flat_size).filter_map(|z| d.decode(z).ok()).collect();
            v.require(decoded.len() == d.flat_size, || format!("{scheme:?} p={p} not bijective"));
        }
    }
    let spec = KernelSpec::diagonal(&[k(0.1, 1.0), k(-0.2, 2.0)]);
    let design = Design::case1_bss(&spec, false).expect("design");
    let d = d_finite(&design, 16, 16).expect("finite D");
    v.require(d.values.shape() == (64, 64), || format!("D is {:?}", d.values.shape()));
    let vm = v_matrix(&vec![vec![1.0; 2]; 2], &IndexMapDescriptor::new(2, IndexScheme::CaseIFull)).expect("V");
    v.require(vm.shape() == (4, 64), || format!("V is {:?}", vm.shape()));
    v
}

fn experiments_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&experiments_dir().join(format!("{name}.toml"))).expect("experiment config")
}

fn records<'a>(r: &'a ExperimentReport, check: Check) -> impl Iterator<Item = &'a Record> {
    r.records.iter().filter(move |x| x.check == check)
}

fn require_records<'a>(v: &mut Verdict, rs: impl Iterator<Item = &'a Record>, min: usize) {
    let mut count = 0;
    for r in rs {
        count += 1;
        v.require(r.pass, || format!("{} (t={:?}): empirical {:?} target {:?} z {:?}{}", r.statistic, r.time, r.empirical, r.target, r.z, r.note.as_ref().map(|n| format!(" [{n}]")).unwrap_or_default()));
    }
    v.require(count >= min, || format!("expected at least {min} records, found {count}"));
}

fn require_settings(v: &mut Verdict, cfg: &ExperimentConfig) {
    v.require(cfg.se_multiplier == SE_MULTIPLIER, || format!("se_multiplier {}", cfg.se_multiplier));
}

fn require_clt_size(v: &mut Verdict, cfg: &ExperimentConfig) {
    require_settings(v, cfg);
    v.require(cfg.paths == CLT_PATHS, || format!("paths {}", cfg.paths));
    v.require(cfg.grid.map(|g| g.n) == Some(CLT_N), || format!("grid {:?}", cfg.grid));
}

fn gaussian_core_clt(r: &ExperimentReport, cfg: &ExperimentConfig) -> Verdict {
    let mut v = Verdict::new("Gaussian-core covariance within 3·SE; Jarque–Bera per entry");
    require_clt_size(&mut v, cfg);
    require_records(&mut v, records(r, Check::Covariance), 6);
    let mut count = 0;
    for rec in records(r, Check::Normality) {
        count += 1;
        let p = rec.empirical.unwrap_or(0.0);
        v.require(p >= NORMALITY_LEVEL, || format!("{}: p = {p:.2e} < {NORMALITY_LEVEL} [{}]", rec.statistic, rec.note.clone().unwrap_or_default()));
    }
    v.require(count == 3, || format!("{count} normality records"));
    v
}

fn bss_clt(r: &ExperimentReport, cfg: &ExperimentConfig) -> Verdict {
    let mut v = Verdict::new("BSS statistic covariance within 3·SE (τ̃ theoretical, distinct constant σ)");
    require_clt_size(&mut v, cfg);
    v.require(cfg.regime == Some(RegimeChoice::TildeTheoretical), || format!("regime {:?}", cfg.regime));
    require_records(&mut v, records(r, Check::Covariance), 6);
    v
}

fn lln(r: &ExperimentReport, cfg: &ExperimentConfig) -> Verdict {
    let mut v = Verdict::new("realised covariation within 3·SE of R̄_t; RMS error strictly decreasing");
    require_settings(&mut v, cfg);
    v.require(cfg.checkpoints() == CHECKPOINTS, || format!("checkpoints {:?}", cfg.checkpoints()));
    v.require(cfg.resolutions.as_deref() == Some(&LLN_RESOLUTIONS[..]), || format!("resolutions {:?}", cfg.resolutions));
    require_records(&mut v, records(r, Check::Mean), CHECKPOINTS.len() * LLN_RESOLUTIONS.len() * 3);
    require_records(&mut v, records(r, Check::Monotone), 1);
    v
}

fn feasible(r: &ExperimentReport, cfg: &ExperimentConfig) -> Verdict {
    let mut v = Verdict::new("relative covolatility and correlation ratio: means, exact identities, rescaling");
    require_settings(&mut v, cfg);
    v.require(cfg.ratio_time == Some(RATIO_TIME), || format!("ratio_time {:?}", cfg.ratio_time));
    let rc: Vec<_> = r.records.iter().filter(|x| x.check == Check::Mean && x.statistic.starts_with("relative_covolatility")).collect();
    for rec in &rc {
        v.require(rec.target.is_some_and(|t| (t - HALF).abs() <= EXACT_TOL), || format!("{} target {:?}", rec.statistic, rec.target));
    }
    // Off-diagonal entries of independent components have R̄_T = 0 and are skipped.
    require_records(&mut v, rc.into_iter(), 2);
    let cr: Vec<_> = r.records.iter().filter(|x| x.check == Check::Mean && x.statistic.starts_with("correlation_ratio")).collect();
    for rec in &cr {
        v.require(rec.target == Some(0.0), || format!("{} target {:?}", rec.statistic, rec.target));
    }
    require_records(&mut v, cr.into_iter(), 1);
    require_records(&mut v, records(r, Check::Exact), 2);
    require_records(&mut v, records(r, Check::Bitwise), 1);
    v
}

fn feasible_clt(single: &ExperimentReport, pair: &ExperimentReport, cfgs: [&ExperimentConfig; 2]) -> Verdict {
    let mut v = Verdict::new("feasible ratio variances within 3·SE of the limit");
    for cfg in cfgs {
        require_clt_size(&mut v, cfg);
    }
    let var = |r: &ExperimentReport, prefix: &str| -> Vec<Record> {
        r.records.iter().filter(|x| x.check == Check::Covariance && x.statistic.starts_with(prefix)).cloned().collect()
    };
    require_records(&mut v, var(single, "var_relative_covolatility").iter(), 1);
    require_records(&mut v, var(pair, "var_correlation_ratio").iter(), 1);
    v
}

fn audit(r: &ExperimentReport) -> Verdict {
    let mut v = Verdict::new("assumption diagnostics pass inside the validity range; outside rejected");
    let mut rejected = 0;
    for rec in records(r, Check::Domain) {
        let note = rec.note.clone().unwrap_or_default();
        let inside = rec.empirical.is_some_and(|d| d > -0.5 && d < 0.5);
        if inside {
            v.require(!note.contains("rejected"), || format!("{}: {note}", rec.statistic));
        } else {
            rejected += 1;
            v.require(note.contains("rejected"), || format!("{}: not rejected", rec.statistic));
        }
    }
    v.require(rejected > 0, || "no out-of-range δ in the audit grid".into());
    let checks = r.records.iter().filter(|x| x.check == Check::Assumption && (x.statistic.starts_with("square_summable") || x.statistic.starts_with("pi_decay")));
    require_records(&mut v, checks, 2);
    v
}

/// `prior` is time already spent producing the inputs (the experiment runs).
fn run(name: &str, f: impl FnOnce() -> Verdict, budget: Duration, prior: Duration, results: &mut Vec<bool>) {
    let start = Instant::now();
    let mut v = f();
    let took = prior + start.elapsed();
    v.require(took <= budget, || format!("took {took:.1?}, budget {budget:?}"));
    let n = results.len() + 1;
    println!("criterion {n:>2} {} {name}: {} [{took:.1?}]", if v.pass { "PASS" } else { "FAIL" }, v.summary);
    for f in &v.failures {
        println!("    - {f}");
    }
    results.push(v.pass);
}

fn main() -> ExitCode {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let mut results = Vec::new();
    run("correlation limit", correlation_limit, mins(2), Duration::ZERO, &mut results);
    run("zero-δ degeneracy", degeneracy, mins(1), Duration::ZERO, &mut results);
    run("series/quadrature oracle", series_oracle, mins(1), Duration::ZERO, &mut results);
    run("index maps", index_maps, mins(1), Duration::ZERO, &mut results);

    let cfgs: Vec<ExperimentConfig> = EXPERIMENTS.iter().map(|n| load(n)).collect();
    let mut reports = Vec::new();
    let mut elapsed = Vec::new();
    for cfg in &cfgs {
        let start = Instant::now();
        reports.push(run_experiment(cfg));
        elapsed.push(start.elapsed());
    }
    let get = |i: usize| -> Result<&ExperimentReport, String> {
        reports[i].as_ref().map_err(|e| format!("{} failed to run: {e}", EXPERIMENTS[i]))
    };
    let guarded = |i: &[usize], f: &dyn Fn() -> Verdict| -> Verdict {
        for &j in i {
            if let Err(e) = get(j) {
                let mut v = Verdict::new("experiment error");
                v.require(false, || e);
                return v;
            }
        }
        f()
    };
    let spent = |i: &[usize]| -> Duration { i.iter().map(|&j| elapsed[j]).sum() };

    run("Gaussian-core CLT", || guarded(&[0], &|| gaussian_core_clt(get(0).unwrap(), &cfgs[0])), mins(10), spent(&[0]), &mut results);
    run("BSS CLT", || guarded(&[1], &|| bss_clt(get(1).unwrap(), &cfgs[1])), mins(10), spent(&[1]), &mut results);
    run("weak LLN", || guarded(&[2], &|| lln(get(2).unwrap(), &cfgs[2])), mins(5), spent(&[2]), &mut results);
    run("feasible statistics", || guarded(&[3], &|| feasible(get(3).unwrap(), &cfgs[3])), mins(5), spent(&[3]), &mut results);
    run(
        "feasible CLT",
        || guarded(&[3, 4], &|| feasible_clt(get(4).unwrap(), get(3).unwrap(), [&cfgs[4], &cfgs[3]])),
        mins(10), spent(&[3, 4]),
        &mut results,
    );
    run("assumption audit", || guarded(&[5], &|| audit(get(5).unwrap())), mins(2), spent(&[5]), &mut results);
    run(
        "determinism",
        || {
            let mut v = Verdict::new("same-seed reruns give byte-identical reports");
            for (i, cfg) in cfgs.iter().enumerate() {
                match (get(i), run_experiment(cfg)) {
                    (Ok(a), Ok(b)) => v.require(a.to_json() == b.to_json(), || format!("{} differs", EXPERIMENTS[i])),
                    (Err(e), _) => v.require(false, || e),
                    (_, Err(e)) => v.require(false, || format!("{} rerun failed: {e}", EXPERIMENTS[i])),
                }
            }
            v
        },
        mins(30),
        Duration::ZERO,
        &mut results,
    );

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
