use chrono::Utc;
use qrisk_core::market::Portfolio;
use qrisk_core::risk::{HorizonRule, Method, RiskJobConfig, RiskReport};
use qrisk_core::source::RandomSourceDescriptor;
use qrisk_service::engine::EntropyRange;
use qrisk_service::jobs::{JobRecord, JobRequest, JobStatus, JobStore};

fn record(paths: usize) -> JobRecord {
    let request = JobRequest {
        prices: "px".into(),
        portfolio: "pf".into(),
        method: Method::MonteCarlo,
        alpha: 0.01,
        horizon_days: 2,
        paths,
        source: Some("pool".into()),
        horizon_rule: HorizonRule::SqrtScaled,
        substream: 4,
    };
    let config = RiskJobConfig {
        portfolio: Portfolio::new(vec!["A".into(), "B".into(), "C".into()], vec![0.1, 0.2, 0.7]).unwrap(),
        method: Method::MonteCarlo,
        alpha: 0.01,
        horizon_days: 2,
        paths,
        horizon_rule: HorizonRule::SqrtScaled,
        source: Some(RandomSourceDescriptor::pool("pool", "/tmp/x.pool")),
        substream: 4,
    };
    JobRecord::new(request, config)
}

#[test]
fn finished_records_round_trip_field_for_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("jobs.log");
    let store = JobStore::open(&path).unwrap();
    let done = record(1000);
    let failed = record(2000);
    let deleted = record(3000);
    for r in [&done, &failed, &deleted] {
        store.insert(r.clone()).unwrap();
        store
            .transition(&r.id, JobStatus::Running, |r| r.started_at = Some(Utc::now()))
            .unwrap();
    }
    store
        .transition(&done.id, JobStatus::Done, |r| {
            r.finished_at = Some(Utc::now());
            // values with long decimal expansions must survive the text log
            r.report = Some(RiskReport {
                var: 0.1 + 0.2,
                cvar: std::f64::consts::PI / 97.0,
                method: Method::MonteCarlo,
                alpha: 0.01,
                horizon_days: 2,
                paths: 1000,
                source_id: Some("pool".into()),
                elapsed_secs: 1e-7 / 3.0,
            });
            r.entropy = Some(EntropyRange {
                pool: "/tmp/x.pool".into(),
                offset: 12_345,
                bytes: 13_250,
            });
        })
        .unwrap();
    store
        .transition(&failed.id, JobStatus::Failed, |r| r.finished_at = Some(Utc::now()))
        .unwrap();
    store
        .transition(&deleted.id, JobStatus::Done, |r| r.finished_at = Some(Utc::now()))
        .unwrap();
    store.delete(&deleted.id).unwrap();
    let before = store.list();
    drop(store);

    let reopened = JobStore::open(&path).unwrap();
    assert_eq!(reopened.list(), before);
    assert_eq!(before.len(), 2);
    let report = reopened.get(&done.id).unwrap().report.unwrap();
    assert_eq!(report.var.to_bits(), (0.1f64 + 0.2).to_bits());
    assert!(reopened.get(&deleted.id).is_err());
    assert!(reopened.recover().unwrap().is_empty());
}

#[test]
fn only_terminal_jobs_can_be_deleted() {
    let dir = tempfile::tempdir().unwrap();
    let store = JobStore::open(dir.path().join("jobs.log")).unwrap();
    let r = record(500);
    store.insert(r.clone()).unwrap();
    assert!(store.delete(&r.id).is_err());
    assert!(store.insert(r.clone()).is_err());
    store.transition(&r.id, JobStatus::Running, |_| {}).unwrap();
    assert!(store.delete(&r.id).is_err());
    store.transition(&r.id, JobStatus::Failed, |_| {}).unwrap();
    assert!(store.transition(&r.id, JobStatus::Done, |_| {}).is_err());
    store.delete(&r.id).unwrap();
    assert!(store.list().is_empty());
}
