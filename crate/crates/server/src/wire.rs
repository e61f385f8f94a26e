//! Request and response bodies of the HTTP protocol.

use chrono::{DateTime, Utc};
use hopaas_core::storage::{StudySummary, TokenRecord};
use hopaas_core::study::Intermediate;
use hopaas_core::{Direction, Params, SearchSpace, StudyId, StudyProperties, Trial, TrialId, TrialState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub study_id: StudyId,
    pub trial_id: TrialId,
    pub trial_index: u64,
    pub params: Params,
}

/// `{trial_id, objective}` or `{trial_id, state: "failed"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TellRequest {
    pub trial_id: TrialId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TellResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneRequest {
    pub trial_id: TrialId,
    pub step: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneResponse {
    pub prune: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRequest {
    pub validity_seconds: u64,
    #[serde(default)]
    pub owner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginRequest {
    pub credential: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenView {
    pub token_id: String,
    pub owner: String,
    pub issued_at: DateTime<Utc>,
    pub validity_seconds: u64,
    pub expires_at: DateTime<Utc>,
    pub revoked: bool,
    /// Present only in the response that issued the token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<String>,
}

impl TokenView {
    pub fn new(record: &TokenRecord, secret: Option<String>) -> Self {
        TokenView {
            token_id: record.token_id.clone(),
            owner: record.owner.clone(),
            issued_at: record.issued_at,
            validity_seconds: record.validity_seconds,
            expires_at: record.expires_at(),
            revoked: record.revoked,
            secret,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyView {
    pub study_id: StudyId,
    pub name: String,
    pub owner: String,
    pub fingerprint: String,
    pub direction: Direction,
    pub created_at: DateTime<Utc>,
    pub n_trials: u64,
    pub n_running: u64,
    pub n_completed: u64,
    pub n_pruned: u64,
    pub n_failed: u64,
    pub best_objective: Option<f64>,
}

impl From<&StudySummary> for StudyView {
    fn from(s: &StudySummary) -> Self {
        StudyView {
            study_id: s.study.study_id.clone(),
            name: s.study.name.clone(),
            owner: s.study.owner.clone(),
            fingerprint: s.study.fingerprint.to_hex(),
            direction: s.study.properties.direction,
            created_at: s.study.created_at,
            n_trials: s.study.trial_counter,
            n_running: s.n_running,
            n_completed: s.n_completed,
            n_pruned: s.n_pruned,
            n_failed: s.n_failed,
            best_objective: s.best_objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDetail {
    #[serde(flatten)]
    pub summary: StudyView,
    pub properties: StudyProperties,
    pub space: SearchSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial_id: TrialId,
    pub index: u64,
    pub state: TrialState,
    pub params: Params,
    pub objective: Option<f64>,
    pub opened_at: DateTime<Utc>,
    pub closed_at: Option<DateTime<Utc>>,
    pub intermediates: Vec<Intermediate>,
}

impl From<Trial> for TrialView {
    fn from(t: Trial) -> Self {
        TrialView {
            trial_id: t.trial_id,
            index: t.index,
            state: t.state,
            params: t.params,
            objective: t.objective,
            opened_at: t.opened_at,
            closed_at: t.closed_at,
            intermediates: t.intermediates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub trial_id: TrialId,
    pub index: u64,
    pub state: TrialState,
    pub objective: Option<f64>,
    /// `[step, value]` pairs in step order.
    pub points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub study_id: StudyId,
    pub direction: Direction,
    pub best_objective: Option<f64>,
    pub series: Vec<CurveSeries>,
}
