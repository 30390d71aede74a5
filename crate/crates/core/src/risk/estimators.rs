use super::RiskError;

/// Slack on `N * alpha` before flooring, so that decimal levels such as
/// `0.29` with `N = 100` give rank 29 rather than 28.
const RANK_SLACK: f64 = 1e-12;

/// 1-based rank `k = floor(N alpha)` of the VaR order statistic.
pub fn rank(n: usize, alpha: f64) -> Result<usize, RiskError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RiskError::InvalidAlpha(alpha));
    }
    let k = (n as f64 * alpha * (1.0 + RANK_SLACK)).floor() as usize;
    if k == 0 {
        return Err(RiskError::InsufficientPaths {
            required: required_paths(alpha)?,
            available: n,
        });
    }
    Ok(k.min(n))
}

/// Smallest sample size with a non-empty tail at level `alpha`.
pub fn required_paths(alpha: f64) -> Result<usize, RiskError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RiskError::InvalidAlpha(alpha));
    }
    let has_tail = |n: usize| (n as f64 * alpha * (1.0 + RANK_SLACK)).floor() >= 1.0;
    let mut n = (1.0 / alpha).ceil() as usize;
    while n > 1 && has_tail(n - 1) {
        n -= 1;
    }
    while !has_tail(n) {
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub var: f64,
    pub cvar: f64,
    /// Number of tail observations `k`.
    pub tail_size: usize,
}

/// Both estimators from one partial sort. The tail is the `k` smallest
/// returns, so ties at the threshold are split by rank, never dropped.
pub(crate) fn estimate(returns: &[f64], alpha: f64) -> Result<TailEstimate, RiskError> {
    let k = rank(returns.len(), alpha)?;
    let mut work = returns.to_vec();
    let (tail, kth, _) = work.select_nth_unstable_by(k - 1, f64::total_cmp);
    let kth = *kth;
    tail.sort_unstable_by(f64::total_cmp);
    let sum: f64 = tail.iter().chain(std::iter::once(&kth)).sum();
    Ok(TailEstimate {
        var: -kth,
        cvar: -sum / k as f64,
        tail_size: k,
    })
}

/// `-R_(k)` with `k = floor(N alpha)` over ascending returns.
pub fn sorted_quantile_var(returns: &[f64], alpha: f64) -> Result<f64, RiskError> {
    estimate(returns, alpha).map(|e| e.var)
}

/// Negated mean of the `k` smallest returns.
pub fn tail_mean_cvar(returns: &[f64], alpha: f64) -> Result<f64, RiskError> {
    estimate(returns, alpha).map(|e| e.cvar)
}

/// VaR and CVaR read off an empirical return series.
pub fn historical_risk(series: &[f64], alpha: f64) -> Result<TailEstimate, RiskError> {
    estimate(series, alpha)
}

#[cfg(test)]
use crate::oracle;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_examples() {
        assert_eq!(rank(252, 0.01).unwrap(), 2);
        assert_eq!(rank(10, 0.2).unwrap(), 2);
        assert_eq!(rank(100, 0.29).unwrap(), 29);
        assert_eq!(rank(2_000_000, 0.01).unwrap(), 20_000);
        assert!(matches!(
            rank(99, 0.01),
            Err(RiskError::InsufficientPaths {
                required: 100,
                available: 99
            })
        ));
        assert!(matches!(
            rank(0, 0.5),
            Err(RiskError::InsufficientPaths { required: 2, .. })
        ));
        assert!(matches!(rank(10, 1.0), Err(RiskError::InvalidAlpha(_))));
        assert!(matches!(rank(10, 0.0), Err(RiskError::InvalidAlpha(_))));
        assert!(matches!(rank(10, f64::NAN), Err(RiskError::InvalidAlpha(_))));
        assert_eq!(required_paths(0.05).unwrap(), 20);
        assert_eq!(required_paths(0.3).unwrap(), 4);
    }

    #[test]
    fn quantile_examples() {
        let r = [-0.05, -0.02, 0.01, 0.03];
        assert_eq!(sorted_quantile_var(&r, 0.25).unwrap(), 0.05);
        assert_eq!(tail_mean_cvar(&r, 0.25).unwrap(), 0.05);

        let ten = [0.07, -0.10, 0.04, -0.05, 0.01, 0.02, 0.03, 0.05, -0.02, 0.06];
        assert_eq!(sorted_quantile_var(&ten, 0.2).unwrap(), 0.05);
        assert!((tail_mean_cvar(&ten, 0.2).unwrap() - 0.075).abs() < 1e-15);

        assert_eq!(sorted_quantile_var(&[0.01; 20], 0.1).unwrap(), -0.01);
        assert_eq!(tail_mean_cvar(&[-0.04; 20], 0.1).unwrap(), 0.04);
    }

    #[test]
    fn historical_examples() {
        let series: Vec<f64> = (0..252).map(|i| (i as f64 * 0.37).sin() * 0.02).collect();
        let mut sorted = series.clone();
        sorted.sort_by(f64::total_cmp);
        let e = historical_risk(&series, 0.01).unwrap();
        assert_eq!(e.tail_size, 2);
        assert_eq!(e.var, -sorted[1]);

        assert_eq!(historical_risk(&[-0.03, 0.02], 0.5).unwrap().var, 0.03);
        assert!(matches!(
            historical_risk(&[], 0.5),
            Err(RiskError::InsufficientPaths { .. })
        ));
    }

    #[test]
    fn matches_enumeration_on_dyadic_grid() {
        // every vector of length <= 8 over a small value set with ties
        let values = [-0.5, -0.25, 0.0, 0.125, 1.0];
        for n in 1..=8usize {
            let total = values.len().pow(n as u32);
            let step = (total / 2000).max(1);
            for code in (0..total).step_by(step) {
                let mut c = code;
                let returns: Vec<f64> = (0..n)
                    .map(|_| {
                        let v = values[c % values.len()];
                        c /= values.len();
                        v
                    })
                    .collect();
                for a in 1..=7 {
                    let alpha = a as f64 / 8.0;
                    let k = (n * a) / 8;
                    if k == 0 {
                        assert!(rank(n, alpha).is_err());
                        continue;
                    }
                    let (var, cvar) = oracle::var_cvar_enumerate(&returns, k);
                    let got = estimate(&returns, alpha).unwrap();
                    assert_eq!(got.var.to_bits(), var.to_bits(), "{returns:?} alpha={alpha}");
                    assert_eq!(got.cvar.to_bits(), cvar.to_bits(), "{returns:?} alpha={alpha}");
                }
            }
        }
    }

    fn returns_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, 20..300)
    }

    proptest! {
        #[test]
        fn matches_enumeration_random(returns in proptest::collection::vec(-1.0f64..1.0, 1..=8), a in 1usize..=7) {
            let alpha = a as f64 / 8.0;
            let k = returns.len() * a / 8;
            prop_assume!(k >= 1);
            let (var, cvar) = oracle::var_cvar_enumerate(&returns, k);
            let got = estimate(&returns, alpha).unwrap();
            prop_assert_eq!(got.var, var);
            prop_assert_eq!(got.cvar, cvar);
        }

        #[test]
        fn monotone_in_alpha(returns in returns_strategy(), a1 in 0.05f64..0.5, gap in 0.0f64..0.45) {
            let a2 = a1 + gap;
            prop_assert!(sorted_quantile_var(&returns, a1).unwrap() >= sorted_quantile_var(&returns, a2).unwrap());
        }

        #[test]
        fn cvar_dominates_var(returns in returns_strategy(), alpha in 0.05f64..0.95) {
            let e = estimate(&returns, alpha).unwrap();
            prop_assert!(e.cvar >= e.var);
        }

        #[test]
        fn translation(returns in proptest::collection::vec(-64i32..64, 20..200), shift in -16i32..16, alpha in 0.05f64..0.95) {
            // dyadic values keep the shifted sums exact
            let base: Vec<f64> = returns.iter().map(|&r| r as f64 / 64.0).collect();
            let c = shift as f64 / 64.0;
            let moved: Vec<f64> = base.iter().map(|r| r + c).collect();
            let (e0, e1) = (estimate(&base, alpha).unwrap(), estimate(&moved, alpha).unwrap());
            prop_assert_eq!(e1.var, e0.var - c);
            prop_assert!((e1.cvar - (e0.cvar - c)).abs() <= 1e-12);
        }

        #[test]
        fn positive_scaling(returns in returns_strategy(), s in 0.01f64..100.0, alpha in 0.05f64..0.95) {
            let scaled: Vec<f64> = returns.iter().map(|r| r * s).collect();
            let (e0, e1) = (estimate(&returns, alpha).unwrap(), estimate(&scaled, alpha).unwrap());
            prop_assert_eq!(e1.var, e0.var * s);
            prop_assert!((e1.cvar - e0.cvar * s).abs() <= 1e-12 * s.max(1.0));
        }
    }
}
