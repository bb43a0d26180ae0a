//! Sample moments, standard errors and normality tests for Monte Carlo output.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Resamples used when the fourth-moment SE is unusable.
pub const BOOTSTRAP_RESAMPLES: usize = 500;

/// Standardised fourth moment above which the moment-based SE is distrusted.
pub const KURTOSIS_LIMIT: f64 = 50.0;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Unbiased sample covariance.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / x.len() as f64;
    m4 / (m2 * m2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMethod {
    FourthMoment,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub value: f64,
    pub se: f64,
    pub method: SeMethod,
}

/// Sample covariance with its SE from the asymptotic formula
/// Var ≈ (E[(X−μ)²(Y−ν)²] − c²)/M, falling back to a seeded bootstrap when
/// that estimate is non-positive or either margin is extremely heavy-tailed.
pub fn covariance_with_se(x: &[f64], y: &[f64], seed: u64) -> CovarianceEstimate {
    let m = x.len();
    let value = covariance(x, y);
    let (mx, my) = (mean(x), mean(y));
    let m22 = x.iter().zip(y).map(|(a, b)| ((a - mx) * (b - my)).powi(2)).sum::<f64>() / m as f64;
    let var = (m22 - value * value) / m as f64;
    let stable = var > 0.0 && var.is_finite() && kurtosis(x) < KURTOSIS_LIMIT && kurtosis(y) < KURTOSIS_LIMIT;
    if stable {
        return CovarianceEstimate { value, se: var.sqrt(), method: SeMethod::FourthMoment };
    }
    CovarianceEstimate { value, se: bootstrap_covariance_se(x, y, seed), method: SeMethod::Bootstrap }
}

pub fn bootstrap_covariance_se(x: &[f64], y: &[f64], seed: u64) -> f64 {
    let m = x.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut bx = vec![0.0; m];
    let mut by = vec![0.0; m];
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for i in 0..m {
                let j = rng.random_range(0..m);
                bx[i] = x[j];
                by[i] = y[j];
            }
            covariance(&bx, &by)
        })
        .collect();
    let c = mean(&reps);
    (reps.iter().map(|r| (r - c).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JarqueBera {
    pub statistic: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// χ²₂ upper tail, exp(−JB/2).
    pub p_value: f64,
}

pub fn jarque_bera(xs: &[f64]) -> JarqueBera {
    let n = xs.len() as f64;
    let m = mean(xs);
    let c = |k: i32| xs.iter().map(|v| (v - m).powi(k)).sum::<f64>() / n;
    let m2 = c(2);
    let skewness = c(3) / m2.powf(1.5);
    let excess_kurtosis = c(4) / (m2 * m2) - 3.0;
    let statistic = n / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0);
    JarqueBera { statistic, skewness, excess_kurtosis, p_value: (-statistic / 2.0).exp() }
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    covariance(x, y) / (covariance(x, x) * covariance(y, y)).sqrt()
}
