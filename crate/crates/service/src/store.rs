//! On-disk state under the data directory:
//!
//! ```text
//! sources.json            registered source descriptors
//! prices/<id>.csv         uploaded price histories, stored verbatim
//! portfolios.json         named portfolios
//! validation/<id>.json    validation reports
//! returns/<job>.bin       simulated return series, little-endian f64
//! jobs.log                job records, see `jobs`
//! ```

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use qrisk_core::market::{parse_prices, Portfolio, PriceTable};
use qrisk_core::randtest::ValidationReport;
use qrisk_core::risk::Calibration;
use qrisk_core::source::RandomSourceDescriptor;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    #[serde(flatten)]
    pub descriptor: RandomSourceDescriptor,
    pub registered_at: DateTime<Utc>,
    /// Id of the most recent validation report.
    #[serde(default)]
    pub validation_report: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSummary {
    pub id: String,
    pub tickers: Vec<String>,
    pub rows: usize,
    pub dropped_rows: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
}

impl PriceSummary {
    fn of(id: &str, table: &PriceTable) -> Self {
        Self {
            id: id.to_string(),
            tickers: table.tickers.clone(),
            rows: table.prices.len(),
            dropped_rows: table.dropped_rows,
            first_date: table.dates.first().copied(),
            last_date: table.dates.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPortfolio {
    pub id: String,
    #[serde(flatten)]
    pub portfolio: Portfolio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredValidation {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub report: ValidationReport,
}

pub struct Store {
    root: PathBuf,
    sources: RwLock<BTreeMap<String, SourceEntry>>,
    prices: RwLock<BTreeMap<String, PriceSummary>>,
    portfolios: RwLock<BTreeMap<String, Portfolio>>,
    calibrations: Mutex<HashMap<String, Arc<Calibration>>>,
}

/// Ids become file names, so keep them to a portable character set.
pub fn check_id(kind: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::Invalid(format!(
            "{kind} id {id:?} must be 1-128 characters from [A-Za-z0-9._-]"
        )))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: DeserializeOwned + Default>(path: &Path) -> Result<T> {
    match std::fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(|source| ServiceError::Json {
            path: path.to_path_buf(),
            source,
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Writes through a temporary file and rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).expect("serializable");
    write_atomic(path, &bytes)
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in ["prices", "validation", "returns"] {
            let d = root.join(dir);
            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        let sources: Vec<SourceEntry> = read_json(&root.join("sources.json"))?;
        let portfolios: Vec<NamedPortfolio> = read_json(&root.join("portfolios.json"))?;

        let mut prices = BTreeMap::new();
        let dir = root.join("prices");
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let table = parse_prices(bytes.as_slice())?;
            prices.insert(id.clone(), PriceSummary::of(&id, &table));
        }

        Ok(Self {
            sources: RwLock::new(sources.into_iter().map(|s| (s.descriptor.id.clone(), s)).collect()),
            portfolios: RwLock::new(portfolios.into_iter().map(|p| (p.id, p.portfolio)).collect()),
            prices: RwLock::new(prices),
            calibrations: Mutex::new(HashMap::new()),
            root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn jobs_log(&self) -> PathBuf {
        self.root.join("jobs.log")
    }

    pub fn register_source(&self, descriptor: RandomSourceDescriptor) -> Result<SourceEntry> {
        descriptor.validate()?;
        if descriptor.id.is_empty() || descriptor.id.contains('/') {
            return Err(ServiceError::Invalid(format!("bad source id {:?}", descriptor.id)));
        }
        let mut sources = self.sources.write().expect("registry lock");
        if sources.contains_key(&descriptor.id) {
            return Err(ServiceError::Conflict(format!(
                "source {:?} already registered",
                descriptor.id
            )));
        }
        let entry = SourceEntry {
            descriptor,
            registered_at: Utc::now(),
            validation_report: None,
        };
        sources.insert(entry.descriptor.id.clone(), entry.clone());
        self.persist_sources(&sources)?;
        Ok(entry)
    }

    fn persist_sources(&self, sources: &BTreeMap<String, SourceEntry>) -> Result<()> {
        write_json(&self.root.join("sources.json"), &sources.values().collect::<Vec<_>>())
    }

    pub fn sources(&self) -> Vec<SourceEntry> {
        self.sources.read().expect("registry lock").values().cloned().collect()
    }

    pub fn source(&self, id: &str) -> Result<SourceEntry> {
        self.sources
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found("source", id))
    }

    /// Stores a validation report and links it to its source.
    pub fn save_validation(&self, source_id: &str, report: ValidationReport) -> Result<StoredValidation> {
        let stored = StoredValidation {
            id: uuid::Uuid::new_v4().to_string(),
            created_at: Utc::now(),
            report,
        };
        write_json(
            &self.root.join("validation").join(format!("{}.json", stored.id)),
            &stored,
        )?;
        let mut sources = self.sources.write().expect("registry lock");
        let entry = sources
            .get_mut(source_id)
            .ok_or_else(|| ServiceError::not_found("source", source_id))?;
        entry.validation_report = Some(stored.id.clone());
        self.persist_sources(&sources)?;
        Ok(stored)
    }

    pub fn validation(&self, id: &str) -> Result<StoredValidation> {
        check_id("validation report", id)?;
        let path = self.root.join("validation").join(format!("{id}.json"));
        if !path.exists() {
            return Err(ServiceError::not_found("validation report", id));
        }
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        serde_json::from_slice(&bytes).map_err(|source| ServiceError::Json { path, source })
    }

    /// Parses and stores a CSV upload verbatim.
    pub fn put_prices(&self, id: Option<String>, csv: &[u8]) -> Result<PriceSummary> {
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        check_id("prices", &id)?;
        let table = parse_prices(csv)?;
        if table.prices.len() < 3 {
            return Err(ServiceError::Invalid(format!(
                "price history needs at least 3 complete rows, got {}",
                table.prices.len()
            )));
        }
        let mut prices = self.prices.write().expect("prices lock");
        if prices.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("prices {id:?} already uploaded")));
        }
        write_atomic(&self.price_path(&id), csv)?;
        let summary = PriceSummary::of(&id, &table);
        prices.insert(id, summary.clone());
        Ok(summary)
    }

    fn price_path(&self, id: &str) -> PathBuf {
        self.root.join("prices").join(format!("{id}.csv"))
    }

    pub fn prices(&self) -> Vec<PriceSummary> {
        self.prices.read().expect("prices lock").values().cloned().collect()
    }

    pub fn price_summary(&self, id: &str) -> Result<PriceSummary> {
        self.prices
            .read()
            .expect("prices lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found("prices", id))
    }

    pub fn price_table(&self, id: &str) -> Result<PriceTable> {
        self.price_summary(id)?;
        let path = self.price_path(id);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        Ok(parse_prices(bytes.as_slice())?)
    }

    /// Calibration of a stored price history, computed once.
    pub fn calibration(&self, prices_id: &str) -> Result<Arc<Calibration>> {
        if let Some(c) = self.calibrations.lock().expect("cache lock").get(prices_id) {
            return Ok(c.clone());
        }
        let calibration = Arc::new(crate::engine::calibrate(&self.price_table(prices_id)?)?);
        self.calibrations
            .lock()
            .expect("cache lock")
            .insert(prices_id.to_string(), calibration.clone());
        Ok(calibration)
    }

    pub fn put_portfolio(&self, id: Option<String>, portfolio: Portfolio) -> Result<NamedPortfolio> {
        let id = id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        check_id("portfolio", &id)?;
        let mut portfolios = self.portfolios.write().expect("portfolio lock");
        if portfolios.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("portfolio {id:?} already exists")));
        }
        portfolios.insert(id.clone(), portfolio.clone());
        let all: Vec<NamedPortfolio> = portfolios
            .iter()
            .map(|(id, p)| NamedPortfolio {
                id: id.clone(),
                portfolio: p.clone(),
            })
            .collect();
        write_json(&self.root.join("portfolios.json"), &all)?;
        Ok(NamedPortfolio { id, portfolio })
    }

    pub fn portfolios(&self) -> Vec<NamedPortfolio> {
        self.portfolios
            .read()
            .expect("portfolio lock")
            .iter()
            .map(|(id, p)| NamedPortfolio {
                id: id.clone(),
                portfolio: p.clone(),
            })
            .collect()
    }

    pub fn portfolio(&self, id: &str) -> Result<Portfolio> {
        self.portfolios
            .read()
            .expect("portfolio lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found("portfolio", id))
    }

    fn returns_path(&self, job_id: &str) -> PathBuf {
        self.root.join("returns").join(format!("{job_id}.bin"))
    }

    pub fn save_returns(&self, job_id: &str, returns: &[f64]) -> Result<()> {
        let bytes: Vec<u8> = returns.iter().flat_map(|r| r.to_le_bytes()).collect();
        write_atomic(&self.returns_path(job_id), &bytes)
    }

    pub fn load_returns(&self, job_id: &str) -> Result<Vec<f64>> {
        let path = self.returns_path(job_id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ServiceError::not_found("return series", job_id))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn delete_returns(&self, job_id: &str) -> Result<()> {
        let path = self.returns_path(job_id);
        match std::fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}
