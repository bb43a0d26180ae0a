use bss_toolkit::stats::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn moments() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    let (m, se) = mean_se(&xs);
    assert_eq!(m, 2.5);
    assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    assert!((covariance(&xs, &xs) - 5.0 / 3.0).abs() < 1e-15);
    assert!((correlation(&xs, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn jarque_bera_separates_normal_from_skewed() {
    let x = normals(5000, 1);
    let jb = jarque_bera(&x);
    assert!(jb.p_value > 0.005, "{jb:?}");
    assert!((jb.p_value - (-jb.statistic / 2.0).exp()).abs() < 1e-15);
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let e: Vec<f64> = (0..5000).map(|_| Exp::new(1.0).unwrap().sample(&mut rng)).collect();
    let jb = jarque_bera(&e);
    assert!(jb.p_value < 1e-10);
    assert!((jb.skewness - 2.0).abs() < 0.3);
}

#[test]
fn covariance_se_is_calibrated() {
    // Var of the sample covariance of independent standard normals is 1/M.
    let x = normals(4000, 3);
    let y = normals(4000, 4);
    let est = covariance_with_se(&x, &y, 0);
    assert_eq!(est.method, SeMethod::FourthMoment);
    assert!((est.se * 4000f64.sqrt() - 1.0).abs() < 0.1);
    let boot = bootstrap_covariance_se(&x, &y, 5);
    assert!((boot / est.se - 1.0).abs() < 0.15);
    assert_eq!(boot, bootstrap_covariance_se(&x, &y, 5));
}

#[test]
fn heavy_tails_fall_back_to_bootstrap() {
    let mut x = vec![0.0; 1000];
    x[0] = 1e6;
    x[1] = -1.0;
    let y = normals(1000, 6);
    let est = covariance_with_se(&x, &y, 1);
    assert_eq!(est.method, SeMethod::Bootstrap);
    assert!(est.se.is_finite());
}
