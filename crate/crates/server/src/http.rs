//! Routes, request decoding and the web-session layer.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use hopaas_core::storage::generate_secret;
use hopaas_core::{Outcome, StudyDefinition, StudyId, TrialState};
use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use crate::error::ApiError;
use crate::service::{Coordinator, Principal};
use crate::wire::{LoginRequest, PruneRequest, TellRequest, TokenRequest, TokenView, TrialView};

pub const SESSION_COOKIE: &str = "hopaas_session";
const SESSION_TTL: Duration = Duration::from_secs(3600);
const ADMIN_OWNER: &str = "admin";

#[derive(Debug, Default)]
struct Sessions(Mutex<HashMap<String, Instant>>);

impl Sessions {
    fn open(&self) -> String {
        let id = generate_secret();
        let mut map = self.0.lock();
        let now = Instant::now();
        map.retain(|_, expiry| *expiry > now);
        map.insert(id.clone(), now + SESSION_TTL);
        id
    }

    fn valid(&self, id: &str) -> bool {
        self.0.lock().get(id).is_some_and(|expiry| *expiry > Instant::now())
    }

    fn close(&self, id: &str) {
        self.0.lock().remove(id);
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    coordinator: Arc<Coordinator>,
    admin_credential: Option<Arc<str>>,
    sessions: Arc<Sessions>,
}

impl AppState {
    pub fn new(coordinator: Arc<Coordinator>, admin_credential: Option<String>) -> Self {
        AppState {
            coordinator,
            admin_credential: admin_credential.filter(|c| !c.is_empty()).map(Into::into),
            sessions: Arc::default(),
        }
    }

    fn is_admin_credential(&self, presented: &str) -> bool {
        self.admin_credential
            .as_deref()
            .is_some_and(|c| constant_time_eq(c.as_bytes(), presented.as_bytes()))
    }

    /// Resolves the caller of a read or management endpoint from the session
    /// cookie or an `Authorization: Bearer` header. The admin credential and
    /// admin sessions see everything; a worker token sees its owner's studies.
    async fn principal(&self, headers: &HeaderMap) -> Result<Principal, ApiError> {
        if let Some(session) = session_cookie(headers) {
            if self.sessions.valid(session) {
                return Ok(Principal::Admin);
            }
        }
        let Some(bearer) = bearer(headers) else {
            return Err(ApiError::Unauthorized);
        };
        if self.is_admin_credential(bearer) {
            return Ok(Principal::Admin);
        }
        let bearer = bearer.to_owned();
        let owner = blocking(self, move |c| c.authenticate(&bearer)).await?;
        Ok(Principal::Owner(owner))
    }

    async fn admin(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        match self.principal(headers).await? {
            Principal::Admin => Ok(()),
            Principal::Owner(_) => Err(ApiError::Unauthorized),
        }
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ").map(str::trim)
}

fn session_cookie(headers: &HeaderMap) -> Option<&str> {
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .find_map(|kv| kv.trim().strip_prefix(SESSION_COOKIE)?.strip_prefix('='))
}

/// Runs a store-bound closure on the blocking pool.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Coordinator) -> Result<T, ApiError> + Send + 'static,
{
    let coordinator = state.coordinator.clone();
    tokio::task::spawn_blocking(move || f(&coordinator))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

/// Every malformed body, including unknown fields, is a 422.
fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Invalid(e.to_string()))
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/ask/{token}", post(ask))
        .route("/api/tell/{token}", post(tell))
        .route("/api/should_prune/{token}", post(should_prune))
        .route("/api/studies", get(list_studies))
        .route("/api/studies/{id}", get(study_detail))
        .route("/api/studies/{id}/trials", get(list_trials))
        .route("/api/studies/{id}/curves", get(curves))
        .route("/api/tokens", post(issue_token).get(list_tokens))
        .route("/api/tokens/{id}", delete(revoke_token))
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(TraceLayer::new_for_http())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "schema_version": hopaas_core::storage::SCHEMA_VERSION}))
}

async fn ask(State(state): State<AppState>, Path(token): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let owner = blocking(&state, move |c| c.authenticate(&token)).await?;
    let def: StudyDefinition = decode(&body)?;
    let resp = blocking(&state, move |c| c.ask(&owner, &def)).await?;
    Ok(Json(resp).into_response())
}

async fn tell(State(state): State<AppState>, Path(token): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    blocking(&state, move |c| c.authenticate(&token)).await?;
    let req: TellRequest = decode(&body)?;
    let outcome = match (req.objective, req.state.as_deref()) {
        (Some(v), None) => Outcome::Completed(v),
        (None, Some("failed")) => Outcome::Failed,
        (None, Some(other)) => return Err(ApiError::Invalid(format!("unsupported state `{other}`"))),
        _ => return Err(ApiError::Invalid("exactly one of `objective` and `state` is required".into())),
    };
    let resp = blocking(&state, move |c| c.tell(&req.trial_id, outcome)).await?;
    Ok(Json(resp).into_response())
}

async fn should_prune(
    State(state): State<AppState>,
    Path(token): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    blocking(&state, move |c| c.authenticate(&token)).await?;
    let req: PruneRequest = decode(&body)?;
    let resp = blocking(&state, move |c| c.should_prune(&req.trial_id, req.step, req.value)).await?;
    Ok(Json(resp).into_response())
}

async fn list_studies(State(state): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    let who = state.principal(&headers).await?;
    let studies = blocking(&state, move |c| c.list_studies(&who)).await?;
    Ok(Json(studies).into_response())
}

async fn study_detail(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let who = state.principal(&headers).await?;
    let detail = blocking(&state, move |c| c.study_detail(&who, &StudyId(id))).await?;
    Ok(Json(detail).into_response())
}

#[derive(Debug, Deserialize)]
struct TrialFilter {
    state: Option<String>,
}

async fn list_trials(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(filter): Query<TrialFilter>,
) -> Result<Response, ApiError> {
    let who = state.principal(&headers).await?;
    let wanted = match filter.state.as_deref() {
        None | Some("") => None,
        Some(s) => Some(TrialState::parse(s).ok_or_else(|| ApiError::Invalid(format!("unknown state `{s}`")))?),
    };
    let trials = blocking(&state, move |c| c.trials(&who, &StudyId(id), wanted)).await?;
    Ok(Json(trials.into_iter().map(TrialView::from).collect::<Vec<_>>()).into_response())
}

async fn curves(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Result<Response, ApiError> {
    let who = state.principal(&headers).await?;
    let curves = blocking(&state, move |c| c.curves(&who, &StudyId(id))).await?;
    Ok(Json(curves).into_response())
}

async fn issue_token(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    state.admin(&headers).await?;
    let req: TokenRequest = decode(&body)?;
    if req.validity_seconds == 0 {
        return Err(ApiError::Invalid("validity_seconds must be positive".into()));
    }
    let owner = req.owner.unwrap_or_else(|| ADMIN_OWNER.to_owned());
    let issued = blocking(&state, move |c| c.issue_token(&owner, req.validity_seconds)).await?;
    Ok((StatusCode::CREATED, Json(TokenView::new(&issued.record, Some(issued.secret)))).into_response())
}

async fn list_tokens(State(state): State<AppState>, headers: HeaderMap) -> Result<Response, ApiError> {
    state.admin(&headers).await?;
    let tokens = blocking(&state, |c| c.list_tokens()).await?;
    Ok(Json(tokens.iter().map(|t| TokenView::new(t, None)).collect::<Vec<_>>()).into_response())
}

async fn revoke_token(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    state.admin(&headers).await?;
    blocking(&state, move |c| c.revoke_token(&id)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn login(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: LoginRequest = decode(&body)?;
    if !state.is_admin_credential(&req.credential) {
        return Err(ApiError::Unauthorized);
    }
    let session = state.sessions.open();
    let cookie = format!(
        "{SESSION_COOKIE}={session}; HttpOnly; SameSite=Strict; Path=/; Max-Age={}",
        SESSION_TTL.as_secs()
    );
    Ok(([(header::SET_COOKIE, cookie)], Json(json!({"ok": true}))).into_response())
}

async fn logout(State(state): State<AppState>, headers: HeaderMap) -> Response {
    if let Some(session) = session_cookie(&headers) {
        state.sessions.close(session);
    }
    let cookie = format!("{SESSION_COOKIE}=; HttpOnly; SameSite=Strict; Path=/; Max-Age=0");
    ([(header::SET_COOKIE, cookie)], Json(json!({"ok": true}))).into_response()
}
