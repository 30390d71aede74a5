//! Reference routines used only by tests. They deliberately share no code
//! with the library so that agreement between the two is meaningful.

#![allow(dead_code)]

/// Standard normal CDF.
///
/// For |z| < 3 the all-positive-term erf series
/// `erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (1*3*...*(2n+1))`
/// is used; it has no cancellation. Further out the tail comes from
/// Laplace's continued fraction `Q(z) = phi(z) / (z + 1/(z + 2/(z + ...)))`,
/// evaluated bottom-up, which keeps relative accuracy deep in the tail.
pub fn normal_cdf(z: f64) -> f64 {
    if z.abs() >= 3.0 {
        let t = z.abs();
        let mut frac = t;
        for k in (1..=400).rev() {
            frac = t + k as f64 / frac;
        }
        let tail = normal_pdf(t) / frac;
        return if z > 0.0 { 1.0 - tail } else { tail };
    }
    let x = z.abs() / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x * x / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-18 {
            break;
        }
    }
    let erf = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum;
    if z >= 0.0 {
        0.5 + 0.5 * erf
    } else {
        0.5 - 0.5 * erf
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quantile by bisection on [`normal_cdf`].
pub fn normal_quantile_bisect(u: f64) -> f64 {
    let (mut lo, mut hi) = (-38.0f64, 38.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lower-tail VaR and CVaR by enumeration: for every rank k, count how many
/// entries are strictly smaller and how many are equal, then pick the value
/// whose rank window contains `k`. No sorting involved.
pub fn var_cvar_enumerate(returns: &[f64], k: usize) -> (f64, f64) {
    let n = returns.len();
    assert!(k >= 1 && k <= n);
    let order_stat = |rank: usize| -> f64 {
        for &candidate in returns {
            let below = returns.iter().filter(|&&r| r < candidate).count();
            let equal = returns.iter().filter(|&&r| r == candidate).count();
            if below < rank && rank <= below + equal {
                return candidate;
            }
        }
        unreachable!("every rank maps to a value")
    };
    let var = -order_stat(k);
    let tail: f64 = (1..=k).map(order_stat).sum();
    (var, -tail / k as f64)
}

/// Regularised upper incomplete gamma for integer or half-integer shape via
/// the closed forms of the chi-square survival function.
pub fn chi_square_survival_closed_form(statistic: f64, dof: usize) -> f64 {
    let x = statistic / 2.0;
    if dof.is_multiple_of(2) {
        // Poisson tail: exp(-x) * sum_{j < dof/2} x^j / j!
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..dof / 2 {
            term *= x / j as f64;
            sum += term;
        }
        (-x).exp() * sum
    } else {
        // Q(1/2, x) = 2 * (1 - Phi(sqrt(2x))), then the upward recurrence
        // Q(a + 1, x) = Q(a, x) + x^a e^-x / Gamma(a + 1).
        let mut q = 2.0 * (1.0 - normal_cdf((2.0 * x).sqrt()));
        let mut a = 0.5f64;
        for _ in 0..dof / 2 {
            q += x.powf(a) * (-x).exp() / gamma_fn(a + 1.0);
            a += 1.0;
        }
        q
    }
}

fn gamma_fn(x: f64) -> f64 {
    // half-integer or integer arguments only
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|v| v as f64).product()
    } else {
        let mut value = std::f64::consts::PI.sqrt(); // Gamma(0.5)
        let mut a = 0.5;
        while a < x - 0.25 {
            value *= a;
            a += 1.0;
        }
        value
    }
}

/// Covariance by explicit double loop over pairs, divisor n - 1.
pub fn covariance_double_loop(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let m = rows[0].len();
    let mut means = vec![0.0; m];
    for j in 0..m {
        for row in rows {
            means[j] += row[j];
        }
        means[j] /= n as f64;
    }
    let mut cov = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..m {
            let mut s = 0.0;
            for row in rows {
                s += (row[a] - means[a]) * (row[b] - means[b]);
            }
            cov[a][b] = s / (n as f64 - 1.0);
        }
    }
    cov
}
