use serde::{Deserialize, Serialize};

use super::RiskError;

/// Equal-width bins over `[min, max]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram, RiskError> {
    if bins == 0 {
        return Err(RiskError::InvalidConfig("histogram needs at least one bin".into()));
    }
    if values.is_empty() {
        return Err(RiskError::InvalidConfig("histogram of an empty series".into()));
    }
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}
