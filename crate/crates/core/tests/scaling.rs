use bss_core::scaling::*;
use bss_core::simulate::{GridSpec, PathBundle, PathMeta};
use bss_core::{Error, GammaKernel, KernelSpec};

fn k(d: f64, l: f64) -> GammaKernel {
    GammaKernel::new(d, l).unwrap()
}

#[test]
fn case1_exponential_kernel() {
    let spec = KernelSpec::uniform(1, k(0.0, 1.0));
    let t = tau_case1(&spec, 1).unwrap();
    assert!((t.values[0] - (1.0 - (-1.0f64).exp()).sqrt()).abs() < 1e-13);
    assert_eq!(t.regime, Regime::CaseI);
    assert_eq!(t.provenance, Provenance::Kernel);
}

#[test]
fn case1_decreases_with_the_right_rate() {
    let spec = KernelSpec::uniform(1, k(0.25, 1.0));
    let ns: Vec<usize> = (8..=14).map(|e| 1 << e).collect();
    let taus: Vec<f64> = ns.iter().map(|&n| tau_case1(&spec, n).unwrap().values[0]).collect();
    assert!(taus.windows(2).all(|w| w[1] < w[0]));
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.75).abs() < 0.02, "{slope}");
}

#[test]
fn partition_factors() {
    let spec = KernelSpec::diagonal(&[k(0.1, 1.0), k(0.1, 1.0), k(-0.2, 2.0)]);
    let c1 = tau_case1(&spec, 200).unwrap();
    let single = tau_partition(&spec, 200, &[vec![0], vec![1], vec![2]]).unwrap();
    for i in 0..3 {
        assert!((single.values[i] - c1.values[i]).abs() < 1e-15);
    }
    let joined = tau_partition(&spec, 200, &[vec![0, 1], vec![2]]).unwrap();
    assert!((joined.values[0] - 2f64.sqrt() * c1.values[0]).abs() < 1e-12);
    for j in 0..3 {
        assert!(joined.component(j).unwrap() / c1.values[j] >= 1.0 - 1e-9);
    }
    assert!(matches!(tau_partition(&spec, 200, &[vec![0, 1]]), Err(Error::InvalidPartition(_))));
    assert!(matches!(tau_partition(&spec, 200, &[vec![0, 1], vec![1, 2]]), Err(Error::InvalidPartition(_))));
}

#[test]
fn bar_factors() {
    let one = KernelSpec::uniform(1, k(0.2, 1.0));
    let c1 = tau_case1(&one, 100).unwrap().values[0];
    for mode in [TauBarMode::SumDiagonal, TauBarMode::MaxOverR] {
        assert!((tau_bar(&one, 100, mode).unwrap().values[0] - c1).abs() < 1e-15);
    }
    let two = KernelSpec::uniform(2, k(0.2, 1.0));
    let sum = tau_bar(&two, 100, TauBarMode::SumDiagonal).unwrap();
    let max = tau_bar(&two, 100, TauBarMode::MaxOverR).unwrap();
    assert!((sum.values[0] - 2f64.sqrt() * c1).abs() < 1e-12);
    assert!(max.values.iter().zip(&sum.values).all(|(m, s)| m <= s));
    assert_eq!(sum.mode, Some(TauBarMode::SumDiagonal));
}

#[test]
fn tilde_factors() {
    let spec = KernelSpec::full(vec![vec![k(0.1, 1.0), k(0.2, 2.0)], vec![k(-0.1, 0.5), k(0.3, 1.0)]]).unwrap();
    let ones = vec![vec![1.0; 2]; 2];
    let t = tau_tilde_theoretical(&spec, &ones, 300).unwrap();
    let b = tau_bar(&spec, 300, TauBarMode::SumDiagonal).unwrap();
    for i in 0..2 {
        assert!((t.values[i] - b.values[i]).abs() < 1e-15);
    }
    let nines = vec![vec![9.0; 2]; 2];
    let t3 = tau_tilde_theoretical(&spec, &nines, 300).unwrap();
    for i in 0..2 {
        assert!((t3.values[i] - 3.0 * t.values[i]).abs() < 1e-13);
    }
    assert!(matches!(tau_tilde_theoretical(&spec, &[vec![1.0]], 300), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn empirical_tilde() {
    let grid = GridSpec::new(1.0, 40, 0.0).unwrap();
    let inc: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
    let a = PathBundle::from_increments(grid, vec!["C1".into()], &inc, PathMeta::ingested()).unwrap();
    let t = tau_tilde_empirical(&a).unwrap();
    assert!((t.values[0] - 0.5).abs() < 1e-15);
    assert_eq!(t.provenance, Provenance::Data);
    let shifted: Vec<f64> = a.levels().iter().map(|v| v + 3.0).collect();
    let b = PathBundle::from_levels(grid, vec!["C1".into()], shifted, PathMeta::ingested()).unwrap();
    assert!((tau_tilde_empirical(&b).unwrap().values[0] - 0.5).abs() < 1e-15);
    let short = GridSpec::new(1.0, 20, 0.0).unwrap();
    let c = PathBundle::from_increments(short, vec!["C1".into()], &[0.1; 20], PathMeta::ingested()).unwrap();
    assert!(matches!(tau_tilde_empirical(&c), Err(Error::InsufficientData { needed: 30, got: 20 })));
}
