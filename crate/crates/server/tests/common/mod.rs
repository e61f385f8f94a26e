#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use hopaas_core::storage::{SqliteStore, Store};
use hopaas_server::{start, RunningServer, ServerConfig};
use serde_json::Value;
use tempfile::TempDir;

pub const ADMIN: &str = "admin-credential-for-tests";

pub struct Harness {
    pub server: RunningServer,
    pub token: String,
    pub http: reqwest::Client,
    _dir: TempDir,
}

impl Harness {
    pub async fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = SqliteStore::open(dir.path()).unwrap();
        Self::with_store(Arc::new(store), dir).await
    }

    pub async fn with_store(store: Arc<dyn Store>, dir: TempDir) -> Self {
        let token = store.issue_token("worker", Duration::from_secs(3600)).unwrap().secret;
        let config = ServerConfig { admin_credential: Some(ADMIN.into()), ..Default::default() };
        let server = start(store, &config, "127.0.0.1:0".parse().unwrap()).await.unwrap();
        Harness { server, token, http: reqwest::Client::new(), _dir: dir }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.server.url())
    }

    /// POSTs a raw body to `/api/{endpoint}/{token}`.
    pub async fn post_raw(&self, endpoint: &str, token: &str, body: &str) -> (u16, String) {
        let resp = self
            .http
            .post(self.url(&format!("/api/{endpoint}/{token}")))
            .header("content-type", "application/json")
            .body(body.to_owned())
            .send()
            .await
            .unwrap();
        (resp.status().as_u16(), resp.text().await.unwrap())
    }

    pub async fn post(&self, endpoint: &str, body: &Value) -> (u16, Value) {
        let (status, text) = self.post_raw(endpoint, &self.token.clone(), &body.to_string()).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    pub async fn get_as(&self, path: &str, bearer: &str) -> (u16, Value) {
        let resp = self.http.get(self.url(path)).bearer_auth(bearer).send().await.unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn admin_get(&self, path: &str) -> (u16, Value) {
        self.get_as(path, ADMIN).await
    }
}

pub fn study(name: &str, sampler: Value, pruner: Value) -> Value {
    serde_json::json!({
        "study_name": name,
        "properties": {"direction": "minimize", "sampler": sampler, "pruner": pruner},
        "space": {
            "x": {"kind": "uniform", "low": -5.0, "high": 5.0},
            "n": {"kind": "integer", "low": 1, "high": 8},
            "act": {"kind": "categorical", "choices": ["relu", "tanh"]}
        }
    })
}
