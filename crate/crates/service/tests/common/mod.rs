#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use qrisk_service::api::{serve_on, AppState};
use serde_json::Value;

/// A running API server on an ephemeral port. Dropping it shuts the
/// runtime down.
pub struct Server {
    pub base: String,
    agent: ureq::Agent,
    runtime: Option<tokio::runtime::Runtime>,
}

impl Server {
    pub fn start(data_dir: &Path, workers: usize) -> Server {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let state = AppState::open(data_dir, workers).unwrap();
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr = listener.local_addr().unwrap();
        runtime.spawn(async move { serve_on(state, listener).await.unwrap() });
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Server {
            base: format!("http://{addr}"),
            agent,
            runtime: Some(runtime),
        }
    }

    fn finish(mut response: ureq::http::Response<ureq::Body>) -> (u16, Value) {
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().unwrap();
        let value = if text.is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        (status, value)
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call().unwrap())
    }

    pub fn delete(&self, path: &str) -> (u16, Value) {
        Self::finish(self.agent.delete(format!("{}{path}", self.base)).call().unwrap())
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        Self::finish(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body.to_string())
                .unwrap(),
        )
    }

    pub fn post_raw(&self, path: &str, content_type: &str, body: &[u8]) -> (u16, Value) {
        Self::finish(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("content-type", content_type)
                .send(body)
                .unwrap(),
        )
    }

    /// Polls a job until it leaves queued/running.
    pub fn wait_for(&self, job_id: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(600);
        loop {
            let (status, job) = self.get(&format!("/jobs/{job_id}"));
            assert_eq!(status, 200, "{job}");
            if job["status"] == "done" || job["status"] == "failed" {
                return job;
            }
            assert!(Instant::now() < deadline, "job {job_id} did not finish");
            std::thread::sleep(Duration::from_millis(20));
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_timeout(Duration::from_secs(10));
        }
    }
}

/// Small synthetic price history as CSV bytes.
pub fn price_csv(assets: usize, days: usize, seed: u64) -> Vec<u8> {
    let table = qrisk_core::market::synthetic_prices(assets, days, seed);
    let mut out = Vec::new();
    qrisk_core::market::write_prices(&table, &mut out).unwrap();
    out
}
