use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::estimators::{estimate, required_paths};
use super::simulate::{simulate_scenarios, variates_required, HorizonRule};
use super::RiskError;
use crate::market::{
    compute_returns, estimate_moments, portfolio_returns, Moments, Portfolio, PriceTable, ReturnKind, ReturnMatrix,
};
use crate::source::{open_store, BitStore, OpenRequest, RandomSourceDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Historical,
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Historical => "historical",
            Method::MonteCarlo => "monte-carlo",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hist" | "historical" => Ok(Method::Historical),
            "mc" | "monte-carlo" => Ok(Method::MonteCarlo),
            other => Err(format!("unknown method {other:?} (expected hist or mc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskJobConfig {
    pub portfolio: Portfolio,
    pub method: Method,
    pub alpha: f64,
    pub horizon_days: u32,
    /// Simulated paths; ignored by historical runs.
    pub paths: usize,
    #[serde(default)]
    pub horizon_rule: HorizonRule,
    /// Randomness for Monte Carlo runs.
    #[serde(default)]
    pub source: Option<RandomSourceDescriptor>,
    /// Generator substream for seeded sources.
    #[serde(default)]
    pub substream: u64,
}

impl RiskJobConfig {
    pub fn validate(&self) -> Result<(), RiskError> {
        let required = required_paths(self.alpha)?;
        if self.horizon_days == 0 {
            return Err(RiskError::InvalidConfig("horizon must be at least one day".into()));
        }
        if self.method == Method::MonteCarlo {
            if self.paths < required {
                return Err(RiskError::InsufficientPaths {
                    required,
                    available: self.paths,
                });
            }
            if self.source.is_none() {
                return Err(RiskError::InvalidConfig(
                    "Monte Carlo runs need a randomness source".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Inputs estimated from a price history.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub moments: Moments,
    /// Per-period asset returns; needed by historical runs.
    pub returns: Option<ReturnMatrix>,
}

impl Calibration {
    /// Daily log returns, their moments and the Cholesky factor.
    pub fn from_prices(prices: &PriceTable) -> Result<Self, RiskError> {
        let returns = compute_returns(prices, ReturnKind::Log)?;
        let moments = estimate_moments(&returns)?.factorized()?;
        Ok(Self {
            moments,
            returns: Some(returns),
        })
    }

    pub fn from_moments(moments: Moments) -> Self {
        Self { moments, returns: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// Loss threshold as a positive fraction of portfolio value.
    pub var: f64,
    pub cvar: f64,
    pub method: Method,
    pub alpha: f64,
    pub horizon_days: u32,
    /// Simulated paths, or the length of the historical series.
    pub paths: usize,
    pub source_id: Option<String>,
    pub elapsed_secs: f64,
}

impl fmt::Display for RiskReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method: {}", self.method)?;
        writeln!(f, "alpha: {}", format_percent(self.alpha))?;
        writeln!(f, "horizon_days: {}", self.horizon_days)?;
        writeln!(f, "paths: {}", self.paths)?;
        writeln!(f, "source: {}", self.source_id.as_deref().unwrap_or("-"))?;
        writeln!(f, "var: {}", format_percent(self.var))?;
        writeln!(f, "cvar: {}", format_percent(self.cvar))?;
        writeln!(f, "elapsed_secs: {:.3}", self.elapsed_secs)
    }
}

/// A fraction as a percentage with four decimals, e.g. `2.1051%`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.4}%", fraction * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskOutcome {
    pub report: RiskReport,
    /// The portfolio return series the estimates were read from.
    pub returns: Vec<f64>,
}

/// Normal variates a Monte Carlo run of `config` consumes.
pub fn variates_needed(config: &RiskJobConfig, calibration: &Calibration) -> u64 {
    variates_required(
        calibration.moments.tickers.len(),
        config.horizon_days,
        config.horizon_rule,
        config.paths,
    )
}

/// Runs a job, opening the configured source for Monte Carlo methods.
pub fn run_risk_job(config: &RiskJobConfig, calibration: &Calibration) -> Result<RiskOutcome, RiskError> {
    config.validate()?;
    match (config.method, &config.source) {
        (Method::MonteCarlo, Some(source)) => {
            let request = OpenRequest::variates(config.substream, variates_needed(config, calibration));
            let store = open_store(source, &request)?;
            run_risk_job_with(config, calibration, Some(store.as_ref()))
        }
        _ => run_risk_job_with(config, calibration, None),
    }
}

/// Runs a job on an already opened store. Monte Carlo runs read variates
/// from offset 0 of `store`; historical runs ignore it.
pub fn run_risk_job_with(
    config: &RiskJobConfig,
    calibration: &Calibration,
    store: Option<&dyn BitStore>,
) -> Result<RiskOutcome, RiskError> {
    config.validate()?;
    let started = Instant::now();
    let (returns, source_id) = match config.method {
        Method::Historical => {
            let history = calibration
                .returns
                .as_ref()
                .ok_or_else(|| RiskError::InvalidConfig("historical runs need a return history".into()))?;
            (portfolio_returns(history, &config.portfolio)?, None)
        }
        Method::MonteCarlo => {
            let store = store.ok_or_else(|| RiskError::InvalidConfig("Monte Carlo runs need a bit store".into()))?;
            let returns = simulate_scenarios(
                &calibration.moments,
                &config.portfolio,
                config.horizon_days,
                config.horizon_rule,
                config.paths,
                store,
            )?;
            (returns, config.source.as_ref().map(|s| s.id.clone()))
        }
    };
    let tail = estimate(&returns, config.alpha)?;
    Ok(RiskOutcome {
        report: RiskReport {
            var: tail.var,
            cvar: tail.cvar,
            method: config.method,
            alpha: config.alpha,
            horizon_days: config.horizon_days,
            paths: returns.len(),
            source_id,
            elapsed_secs: started.elapsed().as_secs_f64(),
        },
        returns,
    })
}
