#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use embedscape::IngestRow;
use embedscape_server::serve::{serve, ServeConfig};
use serde_json::Value;

pub const LABELS: [&str; 3] = ["alpha", "beta", "gamma"];

/// A service instance on an ephemeral port, stopped on drop.
pub struct Server {
    pub base: String,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(data_dir: &Path) -> Server {
        Server::start_with(data_dir, None)
    }

    pub fn start_with(data_dir: &Path, provider_url: Option<String>) -> Server {
        let mut config = ServeConfig::new(data_dir.to_path_buf());
        config.port = 0;
        config.provider_url = provider_url;
        config.provider_timeout = Duration::from_millis(500);
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let shutdown = async move {
                    while !flag.load(Ordering::SeqCst) {
                        tokio::time::sleep(Duration::from_millis(10)).await;
                    }
                };
                serve(config, move |a| tx.send(a).unwrap(), shutdown).await.unwrap();
            });
        });
        let addr = rx.recv_timeout(Duration::from_secs(30)).expect("server did not start");
        Server {
            base: format!("http://{addr}"),
            stop,
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Deterministic uniform draws in [0, 1).
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Three labelled clusters in `dim` dimensions, `per_class` rows each, ids `{prefix}{i:04}`.
pub fn clustered_rows(per_class: usize, dim: usize, seed: u64, prefix: &str) -> Vec<IngestRow> {
    let mut r = Lcg::new(seed);
    (0..per_class * LABELS.len())
        .map(|i| {
            let c = i % LABELS.len();
            let v = (0..dim)
                .map(|j| (if j == c { 6.0 } else { 0.0 } + r.next() - 0.5) as f32)
                .collect();
            IngestRow::new(format!("{prefix}{i:04}"), v).with_label(LABELS[c])
        })
        .collect()
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder().timeout(Duration::from_secs(120)).build().unwrap()
}

pub async fn create(c: &reqwest::Client, s: &Server, name: &str, dim: usize) -> String {
    let resp = c
        .post(s.url("/projects"))
        .json(&serde_json::json!({"name": name, "dim": dim, "label_schema": LABELS}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 201);
    resp.json::<Value>().await.unwrap()["project_id"].as_str().unwrap().to_string()
}

pub async fn ingest_ndjson(c: &reqwest::Client, s: &Server, pid: &str, rows: &[IngestRow]) -> u64 {
    let resp = c
        .post(s.url(&format!("/projects/{pid}/records")))
        .header("content-type", "application/x-ndjson")
        .body(embedscape::wire::write_ndjson(rows))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    resp.json::<Value>().await.unwrap()["count"].as_u64().unwrap()
}

/// Polls a job until it finishes; returns the final ticket.
pub async fn wait_job(c: &reqwest::Client, s: &Server, job_id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(300);
    loop {
        let t: Value = c.get(s.url(&format!("/jobs/{job_id}"))).send().await.unwrap().json().await.unwrap();
        match t["state"].as_str().unwrap() {
            "done" | "failed" => return t,
            _ => {}
        }
        assert!(Instant::now() < deadline, "job {job_id} did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

/// Submits a fit and waits for it; returns the layout id.
pub async fn fit(c: &reqwest::Client, s: &Server, pid: &str, reducer: &str, out_dim: usize, seed: u64) -> String {
    let resp = c
        .post(s.url(&format!("/projects/{pid}/layouts")))
        .json(&serde_json::json!({"reducer": reducer, "out_dim": out_dim, "seed": seed}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 202);
    let job = resp.json::<Value>().await.unwrap()["job_id"].as_str().unwrap().to_string();
    let t = wait_job(c, s, &job).await;
    assert_eq!(t["state"], "done", "{t}");
    assert_eq!(t["progress"], 1.0);
    t["result_ref"].as_str().unwrap().to_string()
}

pub async fn get_bytes(c: &reqwest::Client, s: &Server, path: &str) -> (u16, Vec<u8>) {
    let resp = c.get(s.url(path)).send().await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.bytes().await.unwrap().to_vec())
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_embedscape"))
}
