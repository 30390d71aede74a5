//! VaR and CVaR estimation: discrete estimators, historical simulation,
//! correlated Monte Carlo scenarios and the repeated-run precision study.

mod estimators;
mod histogram;
mod job;
mod simulate;
mod study;

use thiserror::Error;

use crate::market::MarketError;
use crate::source::SourceError;

pub use estimators::{historical_risk, rank, required_paths, sorted_quantile_var, tail_mean_cvar, TailEstimate};
pub use histogram::{histogram, Histogram};
pub use job::{
    format_percent, run_risk_job, run_risk_job_with, variates_needed, Calibration, Method, RiskJobConfig, RiskOutcome,
    RiskReport,
};
pub use simulate::{simulate_scenarios, variates_required, HorizonRule, BLOCK_PATHS};
pub use study::{precision_study, precision_study_with, PrecisionReport, RunEstimate};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("insufficient paths: at least {required} needed, {available} available")]
    InsufficientPaths { required: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("entropy exhausted: run needs {required} variates, source supplies {available}")]
    EntropyExhausted { required: u64, available: u64 },
    #[error("study stopped after {completed} of {requested} runs: {source}")]
    PartialStudy {
        completed: usize,
        requested: usize,
        #[source]
        source: Box<RiskError>,
    },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Source(#[from] SourceError),
}
