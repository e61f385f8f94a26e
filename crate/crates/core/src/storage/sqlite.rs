//! SQLite-backed [`Store`].
//!
//! One writer connection serializes all mutations; reads run on a small pool
//! of WAL reader connections and see the last committed state. The database
//! runs with `synchronous=FULL`, so a transaction that returned has reached
//! stable storage.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use parking_lot::Mutex;
use rusqlite::{params, Connection, OptionalExtension, Transaction, TransactionBehavior};

use super::token::{constant_time_eq, generate_salt, generate_secret, hash_secret};
use super::{
    Clock, IssuedToken, RejectReason, Store, StoreError, StoreResult, StudySummary, SystemClock,
    TokenRecord,
};
use crate::fingerprint::{Fingerprint, StudyDefinition};
use crate::pruner::StepSnapshot;
use crate::sampler::ObservationHistory;
use crate::space::{validate_space, Params};
use crate::study::{Intermediate, Outcome, Study, StudyId, Trial, TrialId, TrialState};

pub const SCHEMA_VERSION: i64 = 1;
const DB_FILE: &str = "hopaas.db";
const READERS: usize = 4;

const SCHEMA: &str = r#"
CREATE TABLE meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE studies (
    study_id      TEXT PRIMARY KEY,
    name          TEXT NOT NULL,
    owner         TEXT NOT NULL,
    fingerprint   TEXT NOT NULL UNIQUE,
    definition    TEXT NOT NULL,
    created_at    INTEGER NOT NULL,
    trial_counter INTEGER NOT NULL,
    revision      INTEGER NOT NULL
);
CREATE TABLE trials (
    trial_id       TEXT PRIMARY KEY,
    study_id       TEXT NOT NULL REFERENCES studies(study_id),
    idx            INTEGER NOT NULL,
    params         TEXT NOT NULL,
    state          TEXT NOT NULL,
    objective      REAL,
    opened_at      INTEGER NOT NULL,
    closed_at      INTEGER,
    completion_seq INTEGER,
    revision       INTEGER NOT NULL,
    UNIQUE (study_id, idx)
);
CREATE INDEX trials_by_state ON trials(study_id, state);
CREATE TABLE intermediates (
    trial_id TEXT NOT NULL REFERENCES trials(trial_id),
    study_id TEXT NOT NULL REFERENCES studies(study_id),
    step     INTEGER NOT NULL,
    value    REAL NOT NULL,
    PRIMARY KEY (trial_id, step)
);
CREATE INDEX intermediates_by_step ON intermediates(study_id, step);
CREATE TABLE tokens (
    token_id     TEXT PRIMARY KEY,
    owner        TEXT NOT NULL,
    salt         BLOB NOT NULL,
    secret_hash  BLOB NOT NULL,
    issued_at    INTEGER NOT NULL,
    validity_sec INTEGER NOT NULL,
    revoked      INTEGER NOT NULL DEFAULT 0
);
"#;

#[derive(Debug)]
pub struct SqliteStore {
    path: PathBuf,
    writer: Mutex<Connection>,
    readers: Vec<Mutex<Connection>>,
    next_reader: AtomicUsize,
    clock: Arc<dyn Clock>,
}

fn millis(t: DateTime<Utc>) -> i64 {
    t.timestamp_millis()
}

fn from_millis(ms: i64) -> StoreResult<DateTime<Utc>> {
    Utc.timestamp_millis_opt(ms)
        .single()
        .ok_or_else(|| StoreError::Corrupt(format!("timestamp {ms}")))
}

fn corrupt(e: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt(e.to_string())
}

fn configure(conn: &Connection) -> StoreResult<()> {
    conn.busy_timeout(Duration::from_secs(10))?;
    conn.pragma_update(None, "journal_mode", "WAL")?;
    conn.pragma_update(None, "synchronous", "FULL")?;
    conn.pragma_update(None, "foreign_keys", "ON")?;
    Ok(())
}

struct TrialRow {
    trial_id: String,
    study_id: String,
    index: i64,
    params: String,
    state: String,
    objective: Option<f64>,
    opened_at: i64,
    closed_at: Option<i64>,
}

const TRIAL_COLUMNS: &str = "trial_id, study_id, idx, params, state, objective, opened_at, closed_at";

impl TrialRow {
    fn read(row: &rusqlite::Row<'_>) -> rusqlite::Result<Self> {
        Ok(TrialRow {
            trial_id: row.get(0)?,
            study_id: row.get(1)?,
            index: row.get(2)?,
            params: row.get(3)?,
            state: row.get(4)?,
            objective: row.get(5)?,
            opened_at: row.get(6)?,
            closed_at: row.get(7)?,
        })
    }

    fn into_trial(self, intermediates: Vec<Intermediate>) -> StoreResult<Trial> {
        Ok(Trial {
            trial_id: TrialId(self.trial_id),
            study_id: StudyId(self.study_id),
            index: self.index as u64,
            params: serde_json::from_str(&self.params).map_err(corrupt)?,
            state: TrialState::parse(&self.state).ok_or_else(|| corrupt(&self.state))?,
            intermediates,
            objective: self.objective,
            opened_at: from_millis(self.opened_at)?,
            closed_at: self.closed_at.map(from_millis).transpose()?,
        })
    }
}

fn load_intermediates(conn: &Connection, trial_id: &str) -> StoreResult<Vec<Intermediate>> {
    let mut stmt = conn.prepare_cached("SELECT step, value FROM intermediates WHERE trial_id = ?1 ORDER BY step")?;
    let rows = stmt.query_map([trial_id], |r| {
        Ok(Intermediate { step: r.get::<_, i64>(0)? as u64, value: r.get(1)? })
    })?;
    Ok(rows.collect::<Result<_, _>>()?)
}

fn load_trial(conn: &Connection, trial_id: &TrialId) -> StoreResult<Trial> {
    let row = conn
        .query_row(&format!("SELECT {TRIAL_COLUMNS} FROM trials WHERE trial_id = ?1"), [&trial_id.0], TrialRow::read)
        .optional()?
        .ok_or_else(|| StoreError::UnknownTrial(trial_id.clone()))?;
    let intermediates = load_intermediates(conn, &trial_id.0)?;
    row.into_trial(intermediates)
}

fn load_study(conn: &Connection, study_id: &StudyId) -> StoreResult<Study> {
    let row = conn
        .query_row(
            "SELECT study_id, name, owner, fingerprint, definition, created_at, trial_counter
             FROM studies WHERE study_id = ?1",
            [&study_id.0],
            |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, String>(3)?,
                    r.get::<_, String>(4)?,
                    r.get::<_, i64>(5)?,
                    r.get::<_, i64>(6)?,
                ))
            },
        )
        .optional()?
        .ok_or_else(|| StoreError::UnknownStudy(study_id.clone()))?;
    let (id, name, owner, fingerprint, definition, created_at, counter) = row;
    let def: StudyDefinition = serde_json::from_str(&definition).map_err(corrupt)?;
    Ok(Study {
        study_id: StudyId(id),
        name,
        owner,
        fingerprint: Fingerprint::from_hex(&fingerprint).ok_or_else(|| corrupt("fingerprint"))?,
        space: def.space,
        properties: def.properties,
        created_at: from_millis(created_at)?,
        trial_counter: counter as u64,
    })
}

fn summarize(conn: &Connection, study: Study) -> StoreResult<StudySummary> {
    let mut summary = StudySummary {
        n_running: 0,
        n_completed: 0,
        n_pruned: 0,
        n_failed: 0,
        best_objective: None,
        study,
    };
    let mut stmt = conn.prepare_cached("SELECT state, COUNT(*) FROM trials WHERE study_id = ?1 GROUP BY state")?;
    let rows = stmt.query_map([&summary.study.study_id.0], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)?)))?;
    for row in rows {
        let (state, n) = row?;
        let n = n as u64;
        match TrialState::parse(&state).ok_or_else(|| corrupt(&state))? {
            TrialState::Running => summary.n_running = n,
            TrialState::Completed => summary.n_completed = n,
            TrialState::Pruned => summary.n_pruned = n,
            TrialState::Failed => summary.n_failed = n,
        }
    }
    summary.best_objective = best_completed(conn, &summary.study)?.and_then(|t| t.objective);
    Ok(summary)
}

fn best_completed(conn: &Connection, study: &Study) -> StoreResult<Option<Trial>> {
    let order = match study.properties.direction {
        crate::study::Direction::Minimize => "ASC",
        crate::study::Direction::Maximize => "DESC",
    };
    let row = conn
        .query_row(
            &format!(
                "SELECT {TRIAL_COLUMNS} FROM trials WHERE study_id = ?1 AND state = 'completed'
                 ORDER BY objective {order}, idx ASC LIMIT 1"
            ),
            [&study.study_id.0],
            TrialRow::read,
        )
        .optional()?;
    match row {
        Some(row) => {
            let intermediates = load_intermediates(conn, &row.trial_id)?;
            Ok(Some(row.into_trial(intermediates)?))
        }
        None => Ok(None),
    }
}

impl SqliteStore {
    /// Opens (creating if needed) the store in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> StoreResult<Self> {
        Self::open_with_clock(dir, Arc::new(SystemClock))
    }

    pub fn open_with_clock(dir: impl AsRef<Path>, clock: Arc<dyn Clock>) -> StoreResult<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| StoreError::Unavailable(e.to_string()))?;
        let path = dir.join(DB_FILE);
        let mut writer = Connection::open(&path)?;
        configure(&writer)?;
        migrate(&mut writer)?;
        let readers = (0..READERS)
            .map(|_| {
                let conn = Connection::open(&path)?;
                configure(&conn)?;
                Ok(Mutex::new(conn))
            })
            .collect::<StoreResult<Vec<_>>>()?;
        Ok(SqliteStore { path, writer: Mutex::new(writer), readers, next_reader: AtomicUsize::new(0), clock })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write<T>(&self, f: impl FnOnce(&Transaction<'_>) -> StoreResult<T>) -> StoreResult<T> {
        let mut conn = self.writer.lock();
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    fn read<T>(&self, f: impl FnOnce(&Transaction<'_>) -> StoreResult<T>) -> StoreResult<T> {
        let start = self.next_reader.fetch_add(1, Ordering::Relaxed);
        let mut guard = (0..self.readers.len())
            .find_map(|i| self.readers[(start + i) % self.readers.len()].try_lock())
            .unwrap_or_else(|| self.readers[start % self.readers.len()].lock());
        let tx = guard.transaction_with_behavior(TransactionBehavior::Deferred)?;
        let out = f(&tx)?;
        tx.finish()?;
        Ok(out)
    }
}

fn migrate(conn: &mut Connection) -> StoreResult<()> {
    let version: i64 = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
    match version {
        0 => {
            let tx = conn.transaction_with_behavior(TransactionBehavior::Exclusive)?;
            tx.execute_batch(SCHEMA)?;
            tx.execute("INSERT INTO meta (key, value) VALUES ('schema_version', ?1)", [SCHEMA_VERSION.to_string()])?;
            tx.pragma_update(None, "user_version", SCHEMA_VERSION)?;
            tx.commit()?;
            Ok(())
        }
        SCHEMA_VERSION => Ok(()),
        other => Err(StoreError::UnsupportedSchema(other)),
    }
}

impl Store for SqliteStore {
    fn create_or_attach_study(&self, def: &StudyDefinition, owner: &str) -> StoreResult<(Study, bool)> {
        validate_space(&def.space).map_err(|_| StoreError::ParamsMismatch)?;
        let fingerprint = def.fingerprint();
        let now = self.clock.now();
        self.write(|tx| {
            let existing: Option<String> = tx
                .query_row("SELECT study_id FROM studies WHERE fingerprint = ?1", [fingerprint.to_hex()], |r| r.get(0))
                .optional()?;
            if let Some(id) = existing {
                return Ok((load_study(tx, &StudyId(id))?, false));
            }
            let study_id = StudyId::from_fingerprint(&fingerprint);
            tx.execute(
                "INSERT INTO studies (study_id, name, owner, fingerprint, definition, created_at, trial_counter, revision)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, 0, 1)",
                params![study_id.0, def.study_name, owner, fingerprint.to_hex(), def.canonical_text(), millis(now)],
            )?;
            Ok((load_study(tx, &study_id)?, true))
        })
    }

    fn get_study(&self, study_id: &StudyId) -> StoreResult<Study> {
        self.read(|tx| load_study(tx, study_id))
    }

    fn list_studies(&self, owner: Option<&str>) -> StoreResult<Vec<StudySummary>> {
        self.read(|tx| {
            let ids: Vec<String> = {
                let mut stmt = tx.prepare(
                    "SELECT study_id FROM studies WHERE ?1 IS NULL OR owner = ?1 ORDER BY created_at, study_id",
                )?;
                let rows = stmt.query_map([owner], |r| r.get(0))?;
                rows.collect::<Result<_, _>>()?
            };
            ids.into_iter().map(|id| summarize(tx, load_study(tx, &StudyId(id))?)).collect()
        })
    }

    fn study_summary(&self, study_id: &StudyId) -> StoreResult<StudySummary> {
        self.read(|tx| summarize(tx, load_study(tx, study_id)?))
    }

    fn open_trial(&self, study_id: &StudyId, params: Params) -> StoreResult<Trial> {
        let now = self.clock.now();
        self.write(|tx| {
            let study = load_study(tx, study_id)?;
            if !study.space.conforms(&params) {
                return Err(StoreError::ParamsMismatch);
            }
            let index = study.trial_counter;
            let trial = Trial::open(study_id.clone(), index, params, now);
            tx.execute(
                "UPDATE studies SET trial_counter = trial_counter + 1, revision = revision + 1 WHERE study_id = ?1",
                [&study_id.0],
            )?;
            tx.execute(
                "INSERT INTO trials (trial_id, study_id, idx, params, state, opened_at, revision)
                 VALUES (?1, ?2, ?3, ?4, 'running', ?5, 1)",
                params![
                    trial.trial_id.0,
                    study_id.0,
                    index as i64,
                    serde_json::to_string(&trial.params).map_err(corrupt)?,
                    millis(now)
                ],
            )?;
            Ok(trial)
        })
    }

    fn close_trial(&self, trial_id: &TrialId, outcome: Outcome) -> StoreResult<Trial> {
        if let Outcome::Completed(v) = outcome {
            if !v.is_finite() {
                return Err(StoreError::NonFiniteValue(v));
            }
        }
        let now = self.clock.now();
        self.write(|tx| {
            let mut trial = load_trial(tx, trial_id)?;
            trial.close(outcome, now)?;
            let seq: Option<i64> = match outcome {
                Outcome::Completed(_) => Some(tx.query_row(
                    "SELECT COALESCE(MAX(completion_seq), 0) + 1 FROM trials WHERE study_id = ?1",
                    [&trial.study_id.0],
                    |r| r.get(0),
                )?),
                _ => None,
            };
            tx.execute(
                "UPDATE trials SET state = ?2, objective = ?3, closed_at = ?4, completion_seq = ?5,
                 revision = revision + 1 WHERE trial_id = ?1",
                params![trial_id.0, trial.state.as_str(), trial.objective, millis(now), seq],
            )?;
            Ok(trial)
        })
    }

    fn record_intermediate(&self, trial_id: &TrialId, step: u64, value: f64) -> StoreResult<()> {
        if !value.is_finite() {
            return Err(StoreError::NonFiniteValue(value));
        }
        let step_i64 = i64::try_from(step).map_err(|_| StoreError::NonMonotonicStep { last: u64::MAX, step })?;
        self.write(|tx| {
            let (study_id, state): (String, String) = tx
                .query_row("SELECT study_id, state FROM trials WHERE trial_id = ?1", [&trial_id.0], |r| {
                    Ok((r.get(0)?, r.get(1)?))
                })
                .optional()?
                .ok_or_else(|| StoreError::UnknownTrial(trial_id.clone()))?;
            let state = TrialState::parse(&state).ok_or_else(|| corrupt(&state))?;
            if state != TrialState::Running {
                return Err(StoreError::TrialNotRunning(state));
            }
            let last: Option<i64> =
                tx.query_row("SELECT MAX(step) FROM intermediates WHERE trial_id = ?1", [&trial_id.0], |r| r.get(0))?;
            if let Some(last) = last {
                if step_i64 <= last {
                    return Err(StoreError::NonMonotonicStep { last: last as u64, step });
                }
            }
            tx.execute(
                "INSERT INTO intermediates (trial_id, study_id, step, value) VALUES (?1, ?2, ?3, ?4)",
                params![trial_id.0, study_id, step_i64, value],
            )?;
            tx.execute("UPDATE trials SET revision = revision + 1 WHERE trial_id = ?1", [&trial_id.0])?;
            Ok(())
        })
    }

    fn get_trial(&self, trial_id: &TrialId) -> StoreResult<Trial> {
        self.read(|tx| load_trial(tx, trial_id))
    }

    fn list_trials(&self, study_id: &StudyId, state: Option<TrialState>) -> StoreResult<Vec<Trial>> {
        self.read(|tx| {
            load_study(tx, study_id)?;
            let rows: Vec<TrialRow> = {
                let mut stmt = tx.prepare_cached(&format!(
                    "SELECT {TRIAL_COLUMNS} FROM trials WHERE study_id = ?1 AND (?2 IS NULL OR state = ?2) ORDER BY idx"
                ))?;
                let rows = stmt.query_map(params![study_id.0, state.map(TrialState::as_str)], TrialRow::read)?;
                rows.collect::<Result<_, _>>()?
            };
            let mut by_trial: std::collections::HashMap<String, Vec<Intermediate>> = Default::default();
            {
                let mut stmt = tx.prepare_cached(
                    "SELECT trial_id, step, value FROM intermediates WHERE study_id = ?1 ORDER BY trial_id, step",
                )?;
                let rows = stmt.query_map([&study_id.0], |r| {
                    Ok((r.get::<_, String>(0)?, Intermediate { step: r.get::<_, i64>(1)? as u64, value: r.get(2)? }))
                })?;
                for row in rows {
                    let (id, i) = row?;
                    by_trial.entry(id).or_default().push(i);
                }
            }
            rows.into_iter()
                .map(|row| {
                    let intermediates = by_trial.remove(&row.trial_id).unwrap_or_default();
                    row.into_trial(intermediates)
                })
                .collect()
        })
    }

    fn best_trial(&self, study_id: &StudyId) -> StoreResult<Option<Trial>> {
        self.read(|tx| best_completed(tx, &load_study(tx, study_id)?))
    }

    fn observation_history(&self, study_id: &StudyId) -> StoreResult<ObservationHistory> {
        self.read(|tx| {
            let study = load_study(tx, study_id)?;
            let mut history = ObservationHistory::new(study.properties.direction);
            let mut stmt = tx.prepare_cached(
                "SELECT params, objective FROM trials WHERE study_id = ?1 AND state = 'completed'
                 ORDER BY completion_seq",
            )?;
            let rows = stmt.query_map([&study_id.0], |r| Ok((r.get::<_, String>(0)?, r.get::<_, f64>(1)?)))?;
            for row in rows {
                let (params, objective) = row?;
                history.push(serde_json::from_str(&params).map_err(corrupt)?, objective);
            }
            Ok(history)
        })
    }

    fn step_snapshot(&self, study_id: &StudyId, current: &TrialId, step: u64) -> StoreResult<StepSnapshot> {
        self.read(|tx| {
            let mut stmt = tx.prepare_cached(
                "SELECT value FROM intermediates WHERE study_id = ?1 AND step = ?2 AND trial_id != ?3",
            )?;
            let rows = stmt.query_map(params![study_id.0, step as i64, current.0], |r| r.get(0))?;
            Ok(StepSnapshot { step, peer_values: rows.collect::<Result<_, _>>()? })
        })
    }

    fn issue_token(&self, owner: &str, validity: Duration) -> StoreResult<IssuedToken> {
        let validity_seconds = validity.as_secs();
        if validity_seconds == 0 || validity_seconds > i64::MAX as u64 / 1000 {
            return Err(StoreError::InvalidValidity);
        }
        let secret = generate_secret();
        let salt = generate_salt();
        let hash = hash_secret(&salt, &secret);
        let token_id = format!("tok_{}", hex::encode(&generate_salt()[..8]));
        let issued_at = self.clock.now();
        self.write(|tx| {
            tx.execute(
                "INSERT INTO tokens (token_id, owner, salt, secret_hash, issued_at, validity_sec, revoked)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, 0)",
                params![token_id, owner, &salt[..], &hash[..], millis(issued_at), validity_seconds as i64],
            )?;
            Ok(())
        })?;
        // Round to what was persisted.
        let issued_at = from_millis(millis(issued_at))?;
        Ok(IssuedToken {
            record: TokenRecord { token_id, owner: owner.to_owned(), issued_at, validity_seconds, revoked: false },
            secret,
        })
    }

    fn revoke_token(&self, token_id: &str) -> StoreResult<()> {
        self.write(|tx| {
            let n = tx.execute("UPDATE tokens SET revoked = 1 WHERE token_id = ?1", [token_id])?;
            if n == 0 {
                return Err(StoreError::UnknownToken(token_id.to_owned()));
            }
            Ok(())
        })
    }

    fn list_tokens(&self, owner: Option<&str>) -> StoreResult<Vec<TokenRecord>> {
        self.read(|tx| {
            let mut stmt = tx.prepare_cached(
                "SELECT token_id, owner, issued_at, validity_sec, revoked FROM tokens
                 WHERE ?1 IS NULL OR owner = ?1 ORDER BY issued_at, token_id",
            )?;
            let rows = stmt.query_map([owner], |r| {
                Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, i64>(2)?, r.get::<_, i64>(3)?, r.get::<_, bool>(4)?))
            })?;
            rows.map(|row| {
                let (token_id, owner, issued, validity, revoked) = row?;
                Ok(TokenRecord {
                    token_id,
                    owner,
                    issued_at: from_millis(issued)?,
                    validity_seconds: validity as u64,
                    revoked,
                })
            })
            .collect()
        })
    }

    fn authenticate(&self, secret: &str) -> StoreResult<String> {
        let now = millis(self.clock.now());
        self.read(|tx| {
            let mut stmt =
                tx.prepare_cached("SELECT owner, salt, secret_hash, issued_at, validity_sec, revoked FROM tokens")?;
            let mut rows = stmt.query([])?;
            while let Some(row) = rows.next()? {
                let salt: Vec<u8> = row.get(1)?;
                let stored: Vec<u8> = row.get(2)?;
                if !constant_time_eq(&hash_secret(&salt, secret), &stored) {
                    continue;
                }
                let issued: i64 = row.get(3)?;
                let validity: i64 = row.get(4)?;
                if row.get::<_, bool>(5)? {
                    return Err(StoreError::AuthRejected(RejectReason::Revoked));
                }
                if now >= issued.saturating_add(validity.saturating_mul(1000)) {
                    return Err(StoreError::AuthRejected(RejectReason::Expired));
                }
                return Ok(row.get(0)?);
            }
            Err(StoreError::AuthRejected(RejectReason::Unknown))
        })
    }
}
