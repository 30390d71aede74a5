//! Statistical validation battery for uniform variates: chi-square
//! uniformity, Kolmogorov-Smirnov distance, serial autocorrelation and
//! binned Shannon entropy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestError {
    #[error("insufficient samples: {needed} required, {got} supplied")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series has zero variance")]
    DegenerateSeries,
    #[error("sample {index} = {value} lies outside [0, 1)")]
    OutOfRange { index: usize, value: f64 },
    #[error("{test}: {source}")]
    InTest {
        test: &'static str,
        #[source]
        source: Box<TestError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovSmirnov {
    pub statistic: f64,
    pub critical_1pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCorrelation {
    pub lag: usize,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_bool(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Outcome::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub chi_square: Outcome,
    pub ks: Outcome,
    pub autocorrelation: Outcome,
    pub entropy: Outcome,
    pub overall: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub source_id: String,
    pub sample_count: usize,
    pub chi_square: ChiSquare,
    pub ks: KolmogorovSmirnov,
    pub autocorrelation: Vec<LagCorrelation>,
    pub entropy_bits: f64,
    pub verdict: Verdict,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.passed() { "pass" } else { "fail" })
    }
}

/// `field: value` lines, nested fields joined with dots.
impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "source_id: {}", self.source_id)?;
        writeln!(f, "sample_count: {}", self.sample_count)?;
        writeln!(f, "chi_square.statistic: {}", self.chi_square.statistic)?;
        writeln!(f, "chi_square.dof: {}", self.chi_square.dof)?;
        writeln!(f, "chi_square.p_value: {}", self.chi_square.p_value)?;
        writeln!(f, "ks.statistic: {}", self.ks.statistic)?;
        writeln!(f, "ks.critical_1pct: {}", self.ks.critical_1pct)?;
        for c in &self.autocorrelation {
            writeln!(f, "autocorrelation.{}: {}", c.lag, c.r)?;
        }
        writeln!(f, "entropy_bits: {}", self.entropy_bits)?;
        writeln!(f, "verdict.chi_square: {}", self.verdict.chi_square)?;
        writeln!(f, "verdict.ks: {}", self.verdict.ks)?;
        writeln!(f, "verdict.autocorrelation: {}", self.verdict.autocorrelation)?;
        writeln!(f, "verdict.entropy: {}", self.verdict.entropy)?;
        writeln!(f, "verdict.overall: {}", self.verdict.overall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub chi_square_bins: usize,
    pub max_lag: usize,
    pub entropy_bins: usize,
    /// Chi-square passes when `p >= significance`.
    pub significance: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            chi_square_bins: 256,
            max_lag: 10,
            entropy_bins: 1 << 16,
            significance: 0.01,
        }
    }
}

impl BatteryConfig {
    /// Fewest samples every sub-test accepts.
    pub fn min_samples(&self) -> usize {
        (5 * self.chi_square_bins).max(self.max_lag + 2)
    }
}

/// Asymptotic 1% two-sided KS critical value, `1.63 / sqrt(n)`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Band `3 / sqrt(n)` inside which serial correlations count as zero.
pub fn autocorrelation_band(n: usize) -> f64 {
    3.0 / (n as f64).sqrt()
}

fn bin_counts(samples: &[f64], bins: usize) -> Result<Vec<u64>, TestError> {
    let mut counts = vec![0u64; bins];
    for (index, &value) in samples.iter().enumerate() {
        if !(0.0..1.0).contains(&value) {
            return Err(TestError::OutOfRange { index, value });
        }
        let bin = ((value * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}

/// Pearson chi-square of equal-width bin counts on `[0, 1)` against a flat
/// expectation.
pub fn chi_square_uniformity(samples: &[f64], bins: usize) -> Result<ChiSquare, TestError> {
    if bins < 2 {
        return Err(TestError::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    if samples.len() < 5 * bins {
        return Err(TestError::InsufficientSamples {
            needed: 5 * bins,
            got: samples.len(),
        });
    }
    chi_square_from_counts(&bin_counts(samples, bins)?)
}

/// Chi-square of observed counts against equal expected counts.
pub fn chi_square_from_counts(counts: &[u64]) -> Result<ChiSquare, TestError> {
    if counts.len() < 2 {
        return Err(TestError::InvalidParameter("need at least 2 bins".into()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(TestError::InsufficientSamples { needed: 1, got: 0 });
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = counts.len() - 1;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: chi_square_survival(statistic, dof),
    })
}

/// `P(X >= statistic)` for a chi-square variable with `dof` degrees of freedom.
pub fn chi_square_survival(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// Regularized upper incomplete gamma `Q(a, x)`: power series below
/// `x = a + 1`, modified Lentz continued fraction above.
fn gamma_q(a: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const MAX_ITER: usize = 10_000;
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        1.0 - sum * log_prefactor.exp()
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        log_prefactor.exp() * h
    }
}

/// Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Kolmogorov-Smirnov distance between the empirical CDF and `U(0, 1)`.
pub fn ks_uniform(samples: &[f64]) -> Result<f64, TestError> {
    if samples.is_empty() {
        return Err(TestError::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            let above = ((i + 1) as f64 / n - x).abs();
            let below = (x - i as f64 / n).abs();
            above.max(below)
        })
        .fold(0.0, f64::max))
}

/// Sample autocorrelation `r(k)` for `k = 1..=max_lag`.
pub fn autocorrelation(samples: &[f64], max_lag: usize) -> Result<Vec<LagCorrelation>, TestError> {
    if samples.len() <= max_lag + 1 {
        return Err(TestError::InsufficientSamples {
            needed: max_lag + 2,
            got: samples.len(),
        });
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Err(TestError::DegenerateSeries);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let denominator: f64 = centered.iter().map(|d| d * d).sum();
    if denominator == 0.0 {
        return Err(TestError::DegenerateSeries);
    }
    Ok((1..=max_lag)
        .map(|lag| {
            let numerator: f64 = centered.iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum();
            LagCorrelation {
                lag,
                r: numerator / denominator,
            }
        })
        .collect())
}

/// Shannon entropy in bits of the equal-width binned empirical distribution.
pub fn binned_entropy(samples: &[f64], bins: usize) -> Result<f64, TestError> {
    if bins < 2 {
        return Err(TestError::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    if samples.is_empty() {
        return Err(TestError::InsufficientSamples { needed: 1, got: 0 });
    }
    let n = samples.len() as f64;
    Ok(bin_counts(samples, bins)?
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum())
}

fn in_test<T>(test: &'static str, result: Result<T, TestError>) -> Result<T, TestError> {
    result.map_err(|e| TestError::InTest {
        test,
        source: Box::new(e),
    })
}

/// Runs all four tests and applies the pass thresholds:
///
/// * chi-square: `p >= significance`
/// * KS: `D < 1.63 / sqrt(n)`
/// * autocorrelation: every `|r(k)| < 3 / sqrt(n)`
/// * entropy: at least 99% of `log2(min(entropy_bins, n))`
pub fn run_battery(
    source_id: impl Into<String>,
    samples: &[f64],
    config: &BatteryConfig,
) -> Result<ValidationReport, TestError> {
    let n = samples.len();
    let chi_square = in_test("chi_square", chi_square_uniformity(samples, config.chi_square_bins))?;
    let ks_statistic = in_test("ks", ks_uniform(samples))?;
    let autocorrelation = in_test("autocorrelation", autocorrelation(samples, config.max_lag))?;
    let entropy_bits = in_test("entropy", binned_entropy(samples, config.entropy_bins))?;

    let ks = KolmogorovSmirnov {
        statistic: ks_statistic,
        critical_1pct: ks_critical_1pct(n),
    };
    let band = autocorrelation_band(n);
    let max_entropy = (config.entropy_bins.min(n) as f64).log2();

    let chi_pass = chi_square.p_value >= config.significance;
    let ks_pass = ks.statistic < ks.critical_1pct;
    let ac_pass = autocorrelation.iter().all(|c| c.r.abs() < band);
    let entropy_pass = entropy_bits >= 0.99 * max_entropy;
    Ok(ValidationReport {
        source_id: source_id.into(),
        sample_count: n,
        chi_square,
        ks,
        autocorrelation,
        entropy_bits,
        verdict: Verdict {
            chi_square: Outcome::from_bool(chi_pass),
            ks: Outcome::from_bool(ks_pass),
            autocorrelation: Outcome::from_bool(ac_pass),
            entropy: Outcome::from_bool(entropy_pass),
            overall: Outcome::from_bool(chi_pass && ks_pass && ac_pass && entropy_pass),
        },
    })
}

#[cfg(test)]
use crate::oracle;
