//! Job records and their append-only JSON-lines log. Each line is either a
//! full record (`{"put": ...}`) or a deletion (`{"delete": "<id>"}`); the
//! latest line for an id wins on replay.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use qrisk_core::risk::{HorizonRule, Method, RiskJobConfig, RiskReport};
use serde::{Deserialize, Serialize};

use crate::engine::EntropyRange;
use crate::error::{ErrorBody, Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Queued, JobStatus::Running)
                | (JobStatus::Running, JobStatus::Done)
                | (JobStatus::Running, JobStatus::Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

/// Body of `POST /jobs`, referring to stored inputs by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub prices: String,
    pub portfolio: String,
    #[serde(deserialize_with = "method_alias")]
    pub method: Method,
    pub alpha: f64,
    pub horizon_days: u32,
    #[serde(default)]
    pub paths: usize,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub horizon_rule: HorizonRule,
    #[serde(default)]
    pub substream: u64,
}

fn method_alias<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Method, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub request: JobRequest,
    pub config: RiskJobConfig,
    pub status: JobStatus,
    pub report: Option<RiskReport>,
    pub error: Option<ErrorBody>,
    /// Pool bytes the run consumed, for pool-backed jobs.
    pub entropy: Option<EntropyRange>,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
}

impl JobRecord {
    pub fn new(request: JobRequest, config: RiskJobConfig) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            request,
            config,
            status: JobStatus::Queued,
            report: None,
            error: None,
            entropy: None,
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LogEntry {
    Put(Box<JobRecord>),
    Delete(String),
}

pub struct JobStore {
    path: PathBuf,
    log: Mutex<File>,
    records: RwLock<BTreeMap<String, JobRecord>>,
}

impl JobStore {
    /// Opens or creates the log and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let io = |source| ServiceError::Io {
            path: path.clone(),
            source,
        };
        let mut records = BTreeMap::new();
        if path.exists() {
            let mut text = std::fs::read(&path).map_err(io)?;
            // a crash mid-append leaves a torn last line; cut it off
            if !text.is_empty() && !text.ends_with(b"\n") {
                let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                text.truncate(keep);
                OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .and_then(|f| f.set_len(keep as u64))
                    .map_err(io)?;
            }
            for line in BufReader::new(text.as_slice()).lines() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<LogEntry>(&line) {
                    Ok(LogEntry::Put(r)) => {
                        records.insert(r.id.clone(), *r);
                    }
                    Ok(LogEntry::Delete(id)) => {
                        records.remove(&id);
                    }
                    Err(source) => return Err(ServiceError::Json { path, source }),
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self {
            path,
            log: Mutex::new(log),
            records: RwLock::new(records),
        })
    }

    fn append(&self, entry: &LogEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry).expect("serializable");
        line.push(b'\n');
        let mut log = self.log.lock().expect("log lock");
        log.write_all(&line)
            .and_then(|_| log.flush())
            .map_err(|source| ServiceError::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn insert(&self, record: JobRecord) -> Result<()> {
        let mut records = self.records.write().expect("jobs lock");
        if records.contains_key(&record.id) {
            return Err(ServiceError::Conflict(format!("job {} exists", record.id)));
        }
        self.append(&LogEntry::Put(Box::new(record.clone())))?;
        records.insert(record.id.clone(), record);
        Ok(())
    }

    /// Applies `change` and moves the job to `status`, rejecting transitions
    /// outside queued -> running -> done | failed.
    pub fn transition(&self, id: &str, status: JobStatus, change: impl FnOnce(&mut JobRecord)) -> Result<JobRecord> {
        let mut records = self.records.write().expect("jobs lock");
        let current = records.get(id).ok_or_else(|| ServiceError::not_found("job", id))?;
        if !current.status.can_become(status) {
            return Err(ServiceError::Conflict(format!(
                "job {id} cannot move from {:?} to {status:?}",
                current.status
            )));
        }
        let mut next = current.clone();
        next.status = status;
        change(&mut next);
        self.append(&LogEntry::Put(Box::new(next.clone())))?;
        records.insert(id.to_string(), next.clone());
        Ok(next)
    }

    pub fn get(&self, id: &str) -> Result<JobRecord> {
        self.records
            .read()
            .expect("jobs lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found("job", id))
    }

    pub fn list(&self) -> Vec<JobRecord> {
        let mut all: Vec<_> = self.records.read().expect("jobs lock").values().cloned().collect();
        all.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        all
    }

    pub fn delete(&self, id: &str) -> Result<JobRecord> {
        let mut records = self.records.write().expect("jobs lock");
        let record = records
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::not_found("job", id))?;
        if !record.status.is_terminal() {
            return Err(ServiceError::Conflict(format!("job {id} is still {:?}", record.status)));
        }
        self.append(&LogEntry::Delete(id.to_string()))?;
        records.remove(id);
        Ok(record)
    }

    /// After a restart: jobs caught mid-run are marked failed, and the ids
    /// of still-queued jobs are returned in submission order.
    pub fn recover(&self) -> Result<Vec<String>> {
        let interrupted: Vec<String> = self
            .list()
            .into_iter()
            .filter(|r| r.status == JobStatus::Running)
            .map(|r| r.id)
            .collect();
        for id in interrupted {
            self.transition(&id, JobStatus::Failed, |r| {
                r.finished_at = Some(Utc::now());
                r.error = Some(ErrorBody {
                    code: "interrupted".into(),
                    message: "service restarted while the job was running".into(),
                    detail: serde_json::Value::Null,
                });
            })?;
        }
        Ok(self
            .list()
            .into_iter()
            .filter(|r| r.status == JobStatus::Queued)
            .map(|r| r.id)
            .collect())
    }
}
