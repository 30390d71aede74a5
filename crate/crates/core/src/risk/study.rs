use serde::{Deserialize, Serialize};

use super::job::{run_risk_job, Calibration, RiskJobConfig, RiskReport};
use super::RiskError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunEstimate {
    pub var: f64,
    pub cvar: f64,
}

/// Dispersion of repeated estimates; standard deviations use divisor `K - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub runs: usize,
    pub per_run: Vec<RunEstimate>,
    pub mean_var: f64,
    pub std_var: f64,
    pub mean_cvar: f64,
    pub std_cvar: f64,
}

impl PrecisionReport {
    pub fn from_runs(per_run: Vec<RunEstimate>) -> Result<Self, RiskError> {
        if per_run.len() < 2 {
            return Err(RiskError::InvalidConfig(
                "a precision study needs at least two runs".into(),
            ));
        }
        let (mean_var, std_var) = mean_std(per_run.iter().map(|r| r.var));
        let (mean_cvar, std_cvar) = mean_std(per_run.iter().map(|r| r.cvar));
        Ok(Self {
            runs: per_run.len(),
            per_run,
            mean_var,
            std_var,
            mean_cvar,
            std_cvar,
        })
    }
}

impl std::fmt::Display for PrecisionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        use super::job::format_percent as pct;
        writeln!(f, "runs: {}", self.runs)?;
        for (i, r) in self.per_run.iter().enumerate() {
            writeln!(f, "run {}: var {} cvar {}", i + 1, pct(r.var), pct(r.cvar))?;
        }
        writeln!(f, "mean_var: {}", pct(self.mean_var))?;
        writeln!(f, "std_var: {}", pct(self.std_var))?;
        writeln!(f, "mean_cvar: {}", pct(self.mean_cvar))?;
        writeln!(f, "std_cvar: {}", pct(self.std_cvar))
    }
}

/// Sample mean and std computed on values shifted by the first one, which
/// keeps identical inputs at exactly zero spread and the mean in range.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let shift = v[0];
    let mean_dev = v.iter().map(|x| x - shift).sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - shift - mean_dev).powi(2)).sum();
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    ((shift + mean_dev).clamp(lo, hi), (ss / (n - 1.0)).sqrt())
}

/// Runs `config` `runs` times, run `r` on substream `config.substream + r`.
/// Pools hand each run a fresh range on their own.
pub fn precision_study(
    config: &RiskJobConfig,
    calibration: &Calibration,
    runs: usize,
) -> Result<PrecisionReport, RiskError> {
    precision_study_with(runs, |r| {
        let mut run = config.clone();
        run.substream = config.substream + r as u64;
        run_risk_job(&run, calibration).map(|o| o.report)
    })
}

/// Precision study over an arbitrary run function.
pub fn precision_study_with(
    runs: usize,
    mut run: impl FnMut(usize) -> Result<RiskReport, RiskError>,
) -> Result<PrecisionReport, RiskError> {
    if runs < 2 {
        return Err(RiskError::InvalidConfig(
            "a precision study needs at least two runs".into(),
        ));
    }
    let mut per_run = Vec::with_capacity(runs);
    for r in 0..runs {
        match run(r) {
            Ok(report) => per_run.push(RunEstimate {
                var: report.var,
                cvar: report.cvar,
            }),
            Err(source) => {
                return Err(RiskError::PartialStudy {
                    completed: r,
                    requested: runs,
                    source: Box::new(source),
                })
            }
        }
    }
    PrecisionReport::from_runs(per_run)
}
