use bss_core::asymptotics::*;
use bss_core::kernel::increment_correlation;
use bss_core::scaling::TauBarMode;
use bss_core::simulate::VolatilityPath;
use bss_core::{Error, GammaKernel, KernelSpec};

fn k(d: f64, l: f64) -> GammaKernel {
    GammaKernel::new(d, l).unwrap()
}

fn mixed() -> KernelSpec {
    KernelSpec::full(vec![vec![k(0.1, 1.0), k(-0.2, 2.0)], vec![k(0.3, 0.5), k(0.0, 1.5)]]).unwrap()
}

#[test]
fn brownian_limit_is_two() {
    let spec = KernelSpec::uniform(1, k(0.0, 1.0));
    let d = d_gaussian(&spec, ScalingChoice::CaseI, &LimitOptions::default()).unwrap();
    assert!((d.values[(0, 0)] - 2.0).abs() < 1e-6, "{}", d.values[(0, 0)]);
    assert!(d.diagnostics.converged);
    assert_eq!(d.diagnostics.n_sequence, vec![1024, 4096, 16384]);
}

#[test]
fn finite_d_matches_brute_force_double_sum() {
    let spec = mixed();
    let n = 48usize;
    let design = Design::gaussian(&spec, ScalingChoice::CaseI).unwrap();
    let d = d_finite(&design, n, n).unwrap();
    let nf = n as f64;
    // ρ_ab(h) for h of either sign through the C-difference path, tabulated once.
    let lag = |a: usize, b: usize, h: i64| {
        if h >= 0 {
            increment_correlation(&spec, nf, a, b, h).unwrap()
        } else {
            increment_correlation(&spec, nf, b, a, -h).unwrap()
        }
    };
    let m = n as i64;
    let table: Vec<Vec<f64>> = (0..4).map(|ab| (-m + 1..m).map(|h| lag(ab / 2, ab % 2, h)).collect()).collect();
    let rho = |a: usize, b: usize, h: i64| table[a * 2 + b][(h + m - 1) as usize];
    for z1 in 0..4 {
        for z2 in 0..4 {
            let (x, y, z, w) = (z1 / 2, z1 % 2, z2 / 2, z2 % 2);
            let mut s = 0.0;
            for i in 0..n as i64 {
                for j in 0..n as i64 {
                    let h = j - i;
                    s += rho(x, z, h) * rho(y, w, h) + rho(x, w, h) * rho(y, z, h);
                }
            }
            s /= nf;
            assert!((d.values[(z1, z2)] - s).abs() < 1e-10, "({z1},{z2}): {} vs {s}", d.values[(z1, z2)]);
        }
    }
}

#[test]
fn d_is_symmetric_psd_and_exchange_symmetric() {
    let d = d_finite(&Design::gaussian(&mixed(), ScalingChoice::CaseI).unwrap(), 200, 200).unwrap();
    let m = &d.values;
    assert!((m - m.transpose()).amax() <= 1e-9);
    assert!(m.clone().symmetric_eigen().eigenvalues.min() >= -1e-8);
    let swap = |z: usize| (z % 2) * 2 + z / 2;
    for a in 0..4 {
        for b in 0..4 {
            assert!((m[(a, b)] - m[(swap(a), b)]).abs() < 1e-12);
            assert!((m[(a, b)] - m[(a, swap(b))]).abs() < 1e-12);
        }
    }
}

#[test]
fn independent_components_decouple() {
    let spec = KernelSpec::diagonal(&[k(0.1, 1.0), k(0.1, 1.0)]);
    let d = d_finite(&Design::gaussian(&spec, ScalingChoice::CaseI).unwrap(), 100, 100).unwrap();
    // Flat 1 = (1,1), 4 = (2,2): their covariance needs a cross correlation.
    assert_eq!(d.values[(0, 3)], 0.0);
    assert_eq!(d.values[(0, 1)], 0.0);
    assert!(d.values[(1, 1)] > 0.0);
}

#[test]
fn vech_restricts_full() {
    let spec = mixed();
    let full = d_finite(&Design::case1_bss(&spec, false).unwrap(), 32, 32).unwrap();
    let vech = d_finite(&Design::case1_bss(&spec, true).unwrap(), 32, 32).unwrap();
    assert_eq!(full.values.nrows(), 64);
    assert_eq!(vech.values.nrows(), 48);
    let fd = full.descriptor;
    let vd = vech.descriptor;
    for a in 1..=48 {
        for b in 1..=48 {
            let (ea, eb) = (vd.decode(a).unwrap(), vd.decode(b).unwrap());
            let pos = |e: bss_core::indexing::FlatEntry| (1..=64).find(|&z| fd.decode(z).unwrap() == e).unwrap();
            let (fa, fb) = (pos(ea), pos(eb));
            assert!((vech.values[(a - 1, b - 1)] - full.values[(fa - 1, fb - 1)]).abs() < 1e-12);
        }
    }
}

#[test]
fn scenario_sizes_and_caps() {
    let spec = mixed();
    let s2 = d_finite(&Design::scenario2(&spec, vec![vec![1.0; 2]; 2], false).unwrap(), 16, 16).unwrap();
    assert_eq!(s2.values.nrows(), 16);
    let three = KernelSpec::uniform(3, k(0.1, 1.0));
    assert!(matches!(Design::case1_bss(&three, false), Err(Error::SizeCap { .. })));
    assert!(Design::case1_bss(&three, true).is_ok());
    let one = KernelSpec::uniform(1, k(0.2, 1.0));
    let a = d_finite(&Design::case1_bss(&one, false).unwrap(), 64, 64).unwrap();
    let b = d_finite(&Design::gaussian(&one, ScalingChoice::CaseI).unwrap(), 64, 64).unwrap();
    assert!((a.values[(0, 0)] - b.values[(0, 0)]).abs() < 1e-12);
}

#[test]
fn cross_measure_lag_zero_weights_vanish() {
    let spec = mixed();
    for design in [Design::bar(&spec, TauBarMode::SumDiagonal, false).unwrap(), Design::scenario2(&spec, vec![vec![1.0; 2]; 2], false).unwrap()] {
        let at = design.at(64, 0).unwrap();
        for block in at.bias_weights() {
            for w in block {
                let [(_, m), (_, w2)] = w.cells.unwrap();
                assert_eq!(m, w2);
            }
        }
    }
}

#[test]
fn statistic_covariance_properties() {
    let spec = mixed();
    let d = d_finite(&Design::scenario2(&spec, vec![vec![1.0; 2]; 2], true).unwrap(), 32, 32).unwrap();
    let ones = vec![vec![1.0; 2]; 2];
    let twos = vec![vec![2.0; 2]; 2];
    let a = statistic_covariance_constant(&d, &ones, 1.0).unwrap();
    let b = statistic_covariance_constant(&d, &twos, 1.0).unwrap();
    assert!((&b.matrix - &a.matrix * 16.0).amax() < 1e-12);
    let path = VolatilityPath::constant(2, &ones, 33);
    let half = statistic_covariance(&d, &path, 1.0 / 32.0, 16).unwrap();
    let whole = statistic_covariance(&d, &path, 1.0 / 32.0, 32).unwrap();
    assert!((&whole.matrix - &a.matrix).amax() < 1e-12);
    let diff = &whole.matrix - &half.matrix;
    assert!(diff.symmetric_eigen().eigenvalues.min() >= -1e-12);
}

#[test]
fn ratio_limits_degenerate_cases() {
    let spec = mixed();
    let d = d_finite(&Design::gaussian(&spec, ScalingChoice::CaseI).unwrap(), 32, 32).unwrap();
    let s = statistic_covariance_constant(&d, &[vec![1.0; 2], vec![1.0; 2]], 1.0).unwrap();
    let r = vec![vec![1.0, 0.3], vec![0.3, 1.0]];
    for coupling in [RatioCoupling::Independent, RatioCoupling::Joint] {
        let v = ratio_limit_covariance(RatioKind::CorrelationRatio, coupling, &[(0, 0), (1, 1)], &s, None, &r, None).unwrap();
        assert!(v.amax() < 1e-15);
        let v = ratio_limit_covariance(RatioKind::RelativeCovolatility, coupling, &[(0, 1)], &s, Some(&s), &r, Some(&r)).unwrap();
        assert!(v[(0, 0)].abs() < 1e-14);
    }
    let zero = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
    assert!(matches!(
        ratio_limit_covariance(RatioKind::CorrelationRatio, RatioCoupling::Joint, &[(0, 1)], &s, None, &zero, None),
        Err(Error::DegenerateLimit(_))
    ));
}

#[test]
fn unconverged_limit_is_reported() {
    // Σρ(k)² diverges logarithmically at δ = ¼, so the sequence does not settle.
    let spec = KernelSpec::uniform(1, k(0.25, 1.0));
    let opts = LimitOptions { n_sequence: vec![256, 1024, 4096], ..LimitOptions::default() };
    let d = d_limit(&Design::gaussian(&spec, ScalingChoice::CaseI).unwrap(), &opts).unwrap();
    assert!(!d.diagnostics.converged);
    assert!(matches!(d.require_converged(), Err(Error::NotConverged { .. })));
}
