//! Minimal async HTTP client for the worker and read endpoints.

use std::time::Duration;

use hopaas_core::{Params, StudyDefinition, TrialState};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("server unreachable: {0}")]
    Unreachable(String),
    #[error("unauthorized")]
    Unauthorized,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Unauthorized => Some(401),
            ClientError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }

    /// The error code carried in a JSON error body, if any.
    pub fn code(&self) -> Option<String> {
        let ClientError::Status { body, .. } = self else {
            return None;
        };
        let v: serde_json::Value = serde_json::from_str(body).ok()?;
        Some(v.get("error")?.as_str()?.to_owned())
    }
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        if e.is_decode() {
            ClientError::Decode(e.to_string())
        } else {
            ClientError::Unreachable(e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub study_id: String,
    pub trial_id: String,
    pub trial_index: u64,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub study_id: String,
    pub name: String,
    pub n_trials: u64,
    pub n_running: u64,
    pub n_completed: u64,
    pub n_pruned: u64,
    pub n_failed: u64,
    pub best_objective: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub step: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_id: String,
    pub index: u64,
    pub state: TrialState,
    pub params: Params,
    pub objective: Option<f64>,
    pub intermediates: Vec<Point>,
}

#[derive(Debug, Clone)]
pub struct HopaasClient {
    http: reqwest::Client,
    base: String,
    token: String,
}

impl HopaasClient {
    pub fn new(base: &str, token: &str) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .expect("client without TLS always builds");
        HopaasClient { http, base: base.trim_end_matches('/').to_owned(), token: token.to_owned() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn finish<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let body = resp.text().await?;
        if status == StatusCode::UNAUTHORIZED {
            return Err(ClientError::Unauthorized);
        }
        if !status.is_success() {
            return Err(ClientError::Status { status: status.as_u16(), body });
        }
        serde_json::from_str(&body).map_err(|e| ClientError::Decode(format!("{e}: {body}")))
    }

    async fn post<T: DeserializeOwned>(&self, endpoint: &str, body: &impl Serialize) -> Result<T, ClientError> {
        let url = format!("{}/api/{endpoint}/{}", self.base, self.token);
        Self::finish(self.http.post(url).json(body).send().await?).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        Self::finish(self.http.get(url).bearer_auth(&self.token).send().await?).await
    }

    pub async fn ask(&self, def: &StudyDefinition) -> Result<Assignment, ClientError> {
        self.post("ask", def).await
    }

    /// Completes a trial; returns the study's best objective so far.
    pub async fn tell(&self, trial_id: &str, objective: f64) -> Result<Option<f64>, ClientError> {
        let v: serde_json::Value = self.post("tell", &json!({"trial_id": trial_id, "objective": objective})).await?;
        Ok(v.get("best_objective").and_then(|b| b.as_f64()))
    }

    pub async fn tell_failed(&self, trial_id: &str) -> Result<(), ClientError> {
        let _: serde_json::Value = self.post("tell", &json!({"trial_id": trial_id, "state": "failed"})).await?;
        Ok(())
    }

    pub async fn should_prune(&self, trial_id: &str, step: u64, value: f64) -> Result<bool, ClientError> {
        #[derive(Deserialize)]
        struct Verdict {
            prune: bool,
        }
        let v: Verdict =
            self.post("should_prune", &json!({"trial_id": trial_id, "step": step, "value": value})).await?;
        Ok(v.prune)
    }

    /// Studies visible to this token's owner.
    pub async fn studies(&self) -> Result<Vec<StudyRow>, ClientError> {
        self.get("/api/studies").await
    }

    pub async fn trials(&self, study_id: &str) -> Result<Vec<TrialRow>, ClientError> {
        self.get(&format!("/api/studies/{study_id}/trials")).await
    }
}
