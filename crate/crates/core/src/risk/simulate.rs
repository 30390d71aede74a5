use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RiskError;
use crate::bits::uniform_to_normal;
use crate::market::{cholesky, Moments, Portfolio};
use crate::source::{fill_uniforms, variate_capacity, BitStore};

/// Paths simulated per work unit. Each block decodes its own contiguous
/// variate range, so results do not depend on the number of workers.
pub const BLOCK_PATHS: usize = 4096;

/// How daily draws become an h-day asset return.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonRule {
    /// Sum of h daily log returns, aggregated across assets as is.
    #[default]
    DailyLogSum,
    /// Sum of h daily log returns converted to a simple return, `exp(s) - 1`.
    DailySimple,
    /// One draw per path: `h mu + sqrt(h) L z`.
    SqrtScaled,
}

impl HorizonRule {
    fn draws_per_path(self, horizon_days: u32) -> usize {
        match self {
            HorizonRule::SqrtScaled => 1,
            _ => horizon_days as usize,
        }
    }
}

impl std::fmt::Display for HorizonRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HorizonRule::DailyLogSum => "daily-log-sum",
            HorizonRule::DailySimple => "daily-simple",
            HorizonRule::SqrtScaled => "sqrt-scaled",
        })
    }
}

impl FromStr for HorizonRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "daily-log-sum" | "log" => Ok(HorizonRule::DailyLogSum),
            "daily-simple" | "simple" => Ok(HorizonRule::DailySimple),
            "sqrt-scaled" | "sqrt" => Ok(HorizonRule::SqrtScaled),
            other => Err(format!("unknown horizon rule {other:?}")),
        }
    }
}

/// Normal variates a run of `paths` paths consumes.
pub fn variates_required(assets: usize, horizon_days: u32, rule: HorizonRule, paths: usize) -> u64 {
    paths as u64 * assets as u64 * rule.draws_per_path(horizon_days) as u64
}

/// Simulated h-day portfolio returns, one per path.
///
/// Path `i`, day `d`, asset `j` uses variate `(i * D + d) * M + j` of the
/// store, where `D` is the number of daily draws per path and `M` the asset
/// count.
pub fn simulate_scenarios(
    moments: &Moments,
    portfolio: &Portfolio,
    horizon_days: u32,
    rule: HorizonRule,
    paths: usize,
    store: &dyn BitStore,
) -> Result<Vec<f64>, RiskError> {
    if horizon_days == 0 {
        return Err(RiskError::InvalidConfig("horizon must be at least one day".into()));
    }
    let m = moments.tickers.len();
    let weights = portfolio.aligned_weights(&moments.tickers)?;
    let factor = match &moments.chol {
        Some(f) => f.lower.clone(),
        None => cholesky(&moments.covariance)?.lower,
    };
    let lower: Vec<Vec<f64>> = (0..m).map(|i| factor.row(i)[..=i].to_vec()).collect();

    let days = rule.draws_per_path(horizon_days);
    let per_path = m * days;
    let required = variates_required(m, horizon_days, rule, paths);
    if let Some(available) = variate_capacity(store) {
        if available < required {
            return Err(RiskError::EntropyExhausted { required, available });
        }
    }
    let (mean_scale, shock_scale) = match rule {
        HorizonRule::SqrtScaled => (horizon_days as f64, (horizon_days as f64).sqrt()),
        _ => (1.0, 1.0),
    };

    let mut out = vec![0.0; paths];
    out.par_chunks_mut(BLOCK_PATHS)
        .enumerate()
        .try_for_each(|(block, chunk)| -> Result<(), RiskError> {
            let first_path = block * BLOCK_PATHS;
            let mut z = vec![0.0; chunk.len() * per_path];
            fill_uniforms(store, (first_path * per_path) as u64, &mut z)?;
            z.iter_mut().for_each(|v| *v = uniform_to_normal(*v));

            let mut asset = vec![0.0; m];
            for (path, r) in chunk.iter_mut().enumerate() {
                asset.iter_mut().for_each(|a| *a = 0.0);
                for day in 0..days {
                    let draw = &z[(path * days + day) * m..][..m];
                    for (j, row) in lower.iter().enumerate() {
                        let shock: f64 = row.iter().zip(draw).map(|(l, z)| l * z).sum();
                        asset[j] += mean_scale * moments.mean[j] + shock_scale * shock;
                    }
                }
                *r = asset
                    .iter()
                    .zip(&weights)
                    .map(|(&x, w)| match rule {
                        HorizonRule::DailySimple => w * x.exp_m1(),
                        _ => w * x,
                    })
                    .sum();
            }
            Ok(())
        })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{CholeskyFactor, Matrix};
    use crate::source::{ChaChaBits, MemoryBits};

    fn single(mu: f64, sigma: f64) -> (Moments, Portfolio) {
        let m = Moments::new(
            vec!["A".into()],
            vec![mu],
            Matrix::from_rows(&[vec![sigma * sigma]]).unwrap(),
        )
        .unwrap()
        .factorized()
        .unwrap();
        (m, Portfolio::new(vec!["A".into()], vec![1.0]).unwrap())
    }

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn zero_moments_give_zero_returns() {
        let m = Moments::new(vec!["A".into(), "B".into()], vec![0.0, 0.0], Matrix::zeros(2, 2))
            .unwrap()
            .factorized()
            .unwrap();
        let p = Portfolio::new(vec!["A".into(), "B".into()], vec![0.4, 0.6]).unwrap();
        let r = simulate_scenarios(&m, &p, 2, HorizonRule::DailyLogSum, 1000, &ChaChaBits::new("s", 1, 0)).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn variates_follow_documented_order() {
        let (m, p) = single(0.0, 1.0);
        let store = ChaChaBits::new("s", 4, 0);
        let r = simulate_scenarios(&m, &p, 1, HorizonRule::DailyLogSum, 5000, &store).unwrap();
        let mut u = vec![0.0; 5000];
        fill_uniforms(&store, 0, &mut u).unwrap();
        for (got, u) in r.iter().zip(&u) {
            assert_eq!(*got, uniform_to_normal(*u));
        }

        // two days: path i sums variates 2i and 2i + 1
        let r2 = simulate_scenarios(&m, &p, 2, HorizonRule::DailyLogSum, 2500, &store).unwrap();
        for (i, got) in r2.iter().enumerate() {
            assert_eq!(
                *got,
                0.0 + uniform_to_normal(u[2 * i]) + uniform_to_normal(u[2 * i + 1])
            );
        }
    }

    #[test]
    fn multi_day_std_scales_with_sqrt_horizon() {
        let sigma = 0.01;
        let (m, p) = single(0.0, sigma);
        for h in [1u32, 2, 5] {
            let r = simulate_scenarios(
                &m,
                &p,
                h,
                HorizonRule::DailyLogSum,
                100_000,
                &ChaChaBits::new("s", 11, 0),
            )
            .unwrap();
            let (_, std) = mean_std(&r);
            let want = sigma * (h as f64).sqrt();
            assert!((std / want - 1.0).abs() < 0.01, "h={h} std={std}");
        }
    }

    #[test]
    fn horizon_rules() {
        let (m, p) = single(0.001, 0.01);
        let store = ChaChaBits::new("s", 2, 0);
        let log = simulate_scenarios(&m, &p, 4, HorizonRule::DailyLogSum, 50_000, &store).unwrap();
        let simple = simulate_scenarios(&m, &p, 4, HorizonRule::DailySimple, 50_000, &store).unwrap();
        for (l, s) in log.iter().zip(&simple) {
            assert!((s - l.exp_m1()).abs() < 1e-15);
        }
        let sqrt = simulate_scenarios(&m, &p, 4, HorizonRule::SqrtScaled, 50_000, &store).unwrap();
        let (mean, std) = mean_std(&sqrt);
        assert!((mean - 0.004).abs() < 3.0 * 0.02 / (50_000f64).sqrt());
        assert!((std / 0.02 - 1.0).abs() < 0.02);
        assert_eq!(variates_required(40, 2, HorizonRule::SqrtScaled, 10), 400);
        assert_eq!(variates_required(40, 2, HorizonRule::DailyLogSum, 10), 800);
    }

    #[test]
    fn perfect_correlation_collapses_to_single_asset() {
        let sigma = 0.02;
        let (single_m, single_p) = single(0.0, sigma);
        let mut twin = Moments::new(
            vec!["A".into(), "B".into()],
            vec![0.0, 0.0],
            Matrix::from_rows(&[vec![sigma * sigma; 2], vec![sigma * sigma; 2]]).unwrap(),
        )
        .unwrap();
        twin.chol = Some(CholeskyFactor {
            lower: Matrix::from_rows(&[vec![sigma, 0.0], vec![sigma, 0.0]]).unwrap(),
            jitter: 0.0,
        });
        let twin_p = Portfolio::new(vec!["A".into(), "B".into()], vec![0.5, 0.5]).unwrap();
        let n = 100_000;
        let a = simulate_scenarios(
            &single_m,
            &single_p,
            1,
            HorizonRule::DailyLogSum,
            n,
            &ChaChaBits::new("s", 1, 0),
        )
        .unwrap();
        let b = simulate_scenarios(
            &twin,
            &twin_p,
            1,
            HorizonRule::DailyLogSum,
            n,
            &ChaChaBits::new("s", 1, 1),
        )
        .unwrap();
        let (ma, sa) = mean_std(&a);
        let (mb, sb) = mean_std(&b);
        let se_mean = sigma * (2.0 / n as f64).sqrt();
        let se_std = sigma * (1.0 / n as f64).sqrt();
        assert!((ma - mb).abs() < 3.0 * se_mean, "{ma} {mb}");
        assert!((sa - sb).abs() < 3.0 * se_std, "{sa} {sb}");
    }

    #[test]
    fn independent_of_worker_count() {
        let (m, p) = single(0.0005, 0.01);
        let store = ChaChaBits::new("s", 9, 0);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_scenarios(&m, &p, 3, HorizonRule::DailyLogSum, 3 * BLOCK_PATHS + 17, &store))
                .unwrap()
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(
            one.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            four.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn finite_store_exhaustion() {
        let (m, p) = single(0.0, 1.0);
        // 100 bytes hold 15 variates
        let store = MemoryBits::new("mem", vec![0x5a; 100]);
        assert!(simulate_scenarios(&m, &p, 1, HorizonRule::DailyLogSum, 15, &store).is_ok());
        match simulate_scenarios(&m, &p, 2, HorizonRule::DailyLogSum, 8, &store) {
            Err(RiskError::EntropyExhausted {
                required: 16,
                available: 15,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
