//! System of record for studies, trials, intermediate values and API tokens.

mod sqlite;
mod token;

use std::collections::HashMap;
use std::fmt::Debug;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::Serialize;
use thiserror::Error;

pub use sqlite::{SqliteStore, SCHEMA_VERSION};
pub use token::{generate_secret, hash_secret};

use crate::fingerprint::StudyDefinition;
use crate::pruner::StepSnapshot;
use crate::sampler::ObservationHistory;
use crate::space::Params;
use crate::study::{IllegalTransition, Outcome, Study, StudyId, Trial, TrialId, TrialState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Unknown,
    Expired,
    Revoked,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage unavailable: {0}")]
    Unavailable(String),
    #[error("stored data is corrupt: {0}")]
    Corrupt(String),
    #[error("unsupported schema version {0}")]
    UnsupportedSchema(i64),
    #[error("unknown study {0}")]
    UnknownStudy(StudyId),
    #[error("unknown trial {0}")]
    UnknownTrial(TrialId),
    #[error("unknown token {0}")]
    UnknownToken(String),
    #[error("params do not match the study search space")]
    ParamsMismatch,
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
    #[error("trial is {0}, not running")]
    TrialNotRunning(TrialState),
    #[error("step {step} does not follow last recorded step {last}")]
    NonMonotonicStep { last: u64, step: u64 },
    #[error("value {0} is not finite")]
    NonFiniteValue(f64),
    #[error("token validity must be positive")]
    InvalidValidity,
    #[error("authentication rejected")]
    AuthRejected(RejectReason),
}

impl From<rusqlite::Error> for StoreError {
    fn from(e: rusqlite::Error) -> Self {
        StoreError::Unavailable(e.to_string())
    }
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenRecord {
    pub token_id: String,
    pub owner: String,
    pub issued_at: DateTime<Utc>,
    pub validity_seconds: u64,
    pub revoked: bool,
}

impl TokenRecord {
    pub fn expires_at(&self) -> DateTime<Utc> {
        self.issued_at + chrono::Duration::seconds(self.validity_seconds as i64)
    }
}

/// A freshly issued token. The secret exists only here; the store keeps a
/// salted hash.
#[derive(Debug, Clone)]
pub struct IssuedToken {
    pub record: TokenRecord,
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub study: Study,
    pub n_running: u64,
    pub n_completed: u64,
    pub n_pruned: u64,
    pub n_failed: u64,
    pub best_objective: Option<f64>,
}

/// Durable, transactional storage. Every method is one atomic transaction.
pub trait Store: Send + Sync + Debug {
    /// Returns the study with the definition's fingerprint, creating it if
    /// absent. The flag is true only for the call that inserted it.
    fn create_or_attach_study(&self, def: &StudyDefinition, owner: &str) -> StoreResult<(Study, bool)>;
    fn get_study(&self, study_id: &StudyId) -> StoreResult<Study>;
    /// All studies, or only those created by `owner`.
    fn list_studies(&self, owner: Option<&str>) -> StoreResult<Vec<StudySummary>>;
    fn study_summary(&self, study_id: &StudyId) -> StoreResult<StudySummary>;

    fn open_trial(&self, study_id: &StudyId, params: Params) -> StoreResult<Trial>;
    fn close_trial(&self, trial_id: &TrialId, outcome: Outcome) -> StoreResult<Trial>;
    fn record_intermediate(&self, trial_id: &TrialId, step: u64, value: f64) -> StoreResult<()>;
    fn get_trial(&self, trial_id: &TrialId) -> StoreResult<Trial>;
    /// Trials ordered by index, optionally restricted to one state.
    fn list_trials(&self, study_id: &StudyId, state: Option<TrialState>) -> StoreResult<Vec<Trial>>;
    /// Completed trial optimal under the study direction; lower index wins ties.
    fn best_trial(&self, study_id: &StudyId) -> StoreResult<Option<Trial>>;
    /// Completed trials in completion order.
    fn observation_history(&self, study_id: &StudyId) -> StoreResult<ObservationHistory>;
    fn step_snapshot(&self, study_id: &StudyId, current: &TrialId, step: u64) -> StoreResult<StepSnapshot>;

    fn issue_token(&self, owner: &str, validity: Duration) -> StoreResult<IssuedToken>;
    fn revoke_token(&self, token_id: &str) -> StoreResult<()>;
    fn list_tokens(&self, owner: Option<&str>) -> StoreResult<Vec<TokenRecord>>;
    /// The owner of an unrevoked, unexpired token with this secret.
    fn authenticate(&self, secret: &str) -> StoreResult<String>;

    fn finalize_trial(&self, trial_id: &TrialId, outcome: Outcome) -> StoreResult<Trial> {
        self.close_trial(trial_id, outcome)
    }

    fn mark_pruned(&self, trial_id: &TrialId) -> StoreResult<Trial> {
        self.close_trial(trial_id, Outcome::Pruned)
    }
}

pub trait Clock: Send + Sync + Debug {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Mutex::new(start))
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock() += chrono::Duration::from_std(by).expect("duration in range");
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock()
    }
}

/// One mutex per study, handed out on demand. Holders of a study's lock
/// execute that study's read-decide-write sections in a total order.
#[derive(Debug, Default)]
pub struct StudyLocks {
    locks: Mutex<HashMap<StudyId, Arc<Mutex<()>>>>,
}

impl StudyLocks {
    pub fn get(&self, study_id: &StudyId) -> Arc<Mutex<()>> {
        self.locks.lock().entry(study_id.clone()).or_default().clone()
    }
}
