//! Protocol semantics independent of HTTP: authentication of worker tokens,
//! and the per-study critical sections behind ask, tell and should_prune.

use std::sync::Arc;
use std::time::Duration;

use hopaas_core::pruner;
use hopaas_core::sampler::{check_config, suggest};
use hopaas_core::storage::{IssuedToken, Store, StoreError, StudyLocks, StudySummary, TokenRecord};
use hopaas_core::{validate_space, Outcome, StudyDefinition, StudyId, Trial, TrialId, TrialState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ApiError;
use crate::wire::{AskResponse, CurveSeries, Curves, PruneResponse, StudyDetail, StudyView, TellResponse};

/// Who is making a read or management request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Principal {
    Admin,
    Owner(String),
}

impl Principal {
    fn owner_filter(&self) -> Option<&str> {
        match self {
            Principal::Admin => None,
            Principal::Owner(o) => Some(o),
        }
    }

    fn may_read(&self, owner: &str) -> bool {
        self.owner_filter().is_none_or(|o| o == owner)
    }
}

/// The generator for trial `index` of a study seeded with `seed`: the seed
/// keys the cipher and the index selects the stream, so every trial draws
/// from its own reproducible sequence regardless of arrival order.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug)]
pub struct Coordinator {
    store: Arc<dyn Store>,
    locks: StudyLocks,
}

impl Coordinator {
    pub fn new(store: Arc<dyn Store>) -> Self {
        Self { store, locks: StudyLocks::default() }
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    /// Owner of a worker token, or `Unauthorized` for every kind of rejection.
    pub fn authenticate(&self, secret: &str) -> Result<String, ApiError> {
        self.store.authenticate(secret).map_err(|e| match e {
            StoreError::AuthRejected(reason) => {
                tracing::debug!(?reason, "token rejected");
                ApiError::Unauthorized
            }
            other => other.into(),
        })
    }

    pub fn ask(&self, owner: &str, def: &StudyDefinition) -> Result<AskResponse, ApiError> {
        validate_space(&def.space)?;
        check_config(&def.space, &def.properties.sampler)?;
        let (study, created) = self.store.create_or_attach_study(def, owner)?;
        if created {
            tracing::info!(study_id = %study.study_id, name = %study.name, "study created");
        }
        let lock = self.locks.get(&study.study_id);
        let _guard = lock.lock();
        let study = self.store.get_study(&study.study_id)?;
        let history = self.store.observation_history(&study.study_id)?;
        let index = study.trial_counter;
        let sampler = &study.properties.sampler;
        let params = suggest(&study.space, &history, sampler, index, &mut trial_rng(sampler.seed, index))?;
        let trial = self.store.open_trial(&study.study_id, params)?;
        debug_assert_eq!(trial.index, index);
        tracing::info!(study_id = %study.study_id, trial_id = %trial.trial_id, history = history.len(), "ask");
        Ok(AskResponse {
            study_id: study.study_id,
            trial_id: trial.trial_id,
            trial_index: trial.index,
            params: trial.params,
        })
    }

    pub fn tell(&self, trial_id: &TrialId, outcome: Outcome) -> Result<TellResponse, ApiError> {
        if let Outcome::Completed(v) = outcome {
            if !v.is_finite() {
                return Err(ApiError::Invalid(format!("objective {v} is not finite")));
            }
        }
        let study_id = self.store.get_trial(trial_id)?.study_id;
        let lock = self.locks.get(&study_id);
        let _guard = lock.lock();
        let trial = self.store.finalize_trial(trial_id, outcome)?;
        let best = self.store.best_trial(&study_id)?.and_then(|t| t.objective);
        tracing::info!(study_id = %study_id, trial_id = %trial_id, state = %trial.state, "tell");
        Ok(TellResponse { ok: true, best_objective: best })
    }

    pub fn should_prune(&self, trial_id: &TrialId, step: u64, value: f64) -> Result<PruneResponse, ApiError> {
        if !value.is_finite() {
            return Err(ApiError::Invalid(format!("value {value} is not finite")));
        }
        let study_id = self.store.get_trial(trial_id)?.study_id;
        let lock = self.locks.get(&study_id);
        let _guard = lock.lock();
        self.store.record_intermediate(trial_id, step, value)?;
        let study = self.store.get_study(&study_id)?;
        let snapshot = self.store.step_snapshot(&study_id, trial_id, step)?;
        let prune = pruner::should_prune(value, &snapshot, study.properties.direction, &study.properties.pruner)?;
        if prune {
            self.store.mark_pruned(trial_id)?;
        }
        tracing::info!(study_id = %study_id, trial_id = %trial_id, step, prune, "should_prune");
        Ok(PruneResponse { prune })
    }

    pub fn list_studies(&self, who: &Principal) -> Result<Vec<StudyView>, ApiError> {
        Ok(self.store.list_studies(who.owner_filter())?.iter().map(StudyView::from).collect())
    }

    /// The study if `who` may see it; otherwise the same 404 an unknown id gets.
    fn visible_summary(&self, who: &Principal, study_id: &StudyId) -> Result<StudySummary, ApiError> {
        let summary = self.store.study_summary(study_id)?;
        if !who.may_read(&summary.study.owner) {
            return Err(StoreError::UnknownStudy(study_id.clone()).into());
        }
        Ok(summary)
    }

    pub fn study_detail(&self, who: &Principal, study_id: &StudyId) -> Result<StudyDetail, ApiError> {
        let summary = self.visible_summary(who, study_id)?;
        Ok(StudyDetail {
            summary: StudyView::from(&summary),
            properties: summary.study.properties.clone(),
            space: summary.study.space.clone(),
        })
    }

    pub fn trials(&self, who: &Principal, study_id: &StudyId, state: Option<TrialState>) -> Result<Vec<Trial>, ApiError> {
        self.visible_summary(who, study_id)?;
        Ok(self.store.list_trials(study_id, state)?)
    }

    pub fn curves(&self, who: &Principal, study_id: &StudyId) -> Result<Curves, ApiError> {
        let summary = self.visible_summary(who, study_id)?;
        let series = self
            .store
            .list_trials(study_id, None)?
            .into_iter()
            .map(|t| CurveSeries {
                points: t.intermediates.iter().map(|i| (i.step, i.value)).collect(),
                trial_id: t.trial_id,
                index: t.index,
                state: t.state,
                objective: t.objective,
            })
            .collect();
        Ok(Curves {
            study_id: study_id.clone(),
            direction: summary.study.properties.direction,
            best_objective: summary.best_objective,
            series,
        })
    }

    pub fn issue_token(&self, owner: &str, validity_seconds: u64) -> Result<IssuedToken, ApiError> {
        let issued = self.store.issue_token(owner, Duration::from_secs(validity_seconds))?;
        tracing::info!(token_id = %issued.record.token_id, owner, validity_seconds, "token issued");
        Ok(issued)
    }

    pub fn revoke_token(&self, token_id: &str) -> Result<(), ApiError> {
        self.store.revoke_token(token_id)?;
        tracing::info!(token_id, "token revoked");
        Ok(())
    }

    pub fn list_tokens(&self) -> Result<Vec<TokenRecord>, ApiError> {
        Ok(self.store.list_tokens(None)?)
    }
}
