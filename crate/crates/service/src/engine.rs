//! Execution path shared by the CLI and the HTTP API, so both produce the
//! same numbers for the same configuration and entropy.

use std::path::PathBuf;

use qrisk_core::bits::UNIFORM_BITS;
use qrisk_core::market::PriceTable;
use qrisk_core::pool::EntropyPool;
use qrisk_core::randtest::{run_battery, BatteryConfig, ValidationReport};
use qrisk_core::risk::{
    run_risk_job, run_risk_job_with, variates_needed, Calibration, Method, RiskJobConfig, RiskOutcome,
};
use qrisk_core::source::{draw_uniforms, RandomSourceDescriptor, SourceKind};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::store::Store;

pub fn calibrate(prices: &PriceTable) -> Result<Calibration> {
    Ok(Calibration::from_prices(prices)?)
}

/// Looks `text` up in the registry, falling back to an inline
/// `kind:key=value,...` descriptor.
pub fn resolve_source(store: Option<&Store>, text: &str) -> Result<RandomSourceDescriptor> {
    if let Some(store) = store {
        if let Ok(entry) = store.source(text) {
            return Ok(entry.descriptor);
        }
    }
    if text.contains(':') {
        return Ok(RandomSourceDescriptor::parse_inline(text)?);
    }
    Err(ServiceError::not_found("source", text))
}

/// Pool bytes a job consumed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntropyRange {
    pub pool: PathBuf,
    /// Payload offset of the first byte.
    pub offset: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub outcome: RiskOutcome,
    pub entropy: Option<EntropyRange>,
}

/// Rejects configurations that cannot run against `calibration`.
pub fn check_config(config: &RiskJobConfig, calibration: &Calibration) -> Result<()> {
    config.validate()?;
    config
        .portfolio
        .aligned_weights(&calibration.moments.tickers)
        .map_err(qrisk_core::risk::RiskError::from)?;
    if config.method == Method::Historical && calibration.returns.is_none() {
        return Err(ServiceError::Invalid("historical runs need a price history".into()));
    }
    Ok(())
}

pub fn execute(config: &RiskJobConfig, calibration: &Calibration) -> Result<Execution> {
    check_config(config, calibration)?;
    match (&config.method, &config.source) {
        (Method::MonteCarlo, Some(source)) if source.kind == SourceKind::Pool => {
            let path = source.path()?;
            let pool = EntropyPool::open(&path)?;
            let bits = variates_needed(config, calibration) * UNIFORM_BITS as u64;
            let range = pool.reserve(bits.div_ceil(8))?;
            let entropy = EntropyRange {
                pool: path,
                offset: range.payload_start(),
                bytes: range.len(),
            };
            let outcome = run_risk_job_with(config, calibration, Some(&range))?;
            Ok(Execution {
                outcome,
                entropy: Some(entropy),
            })
        }
        _ => Ok(Execution {
            outcome: run_risk_job(config, calibration)?,
            entropy: None,
        }),
    }
}

/// Runs the battery on `samples` fresh uniforms from `source`.
pub fn validate_source(
    source: &RandomSourceDescriptor,
    samples: usize,
    battery: &BatteryConfig,
) -> Result<ValidationReport> {
    let needed = battery.min_samples();
    if samples < needed {
        return Err(qrisk_core::randtest::TestError::InsufficientSamples { needed, got: samples }.into());
    }
    let uniforms = draw_uniforms(source, samples, 0)?;
    Ok(run_battery(source.id.clone(), &uniforms, battery)?)
}
