//! Concurrent worker campaigns against a live server.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use hopaas_core::{Direction, PrunerConfig, SamplerConfig, StudyDefinition, StudyProperties, TrialState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientError, HopaasClient};
use crate::objective::{Curve, Objective};
use crate::report::{CampaignReport, Reconciliation, StudyReport, WorkerReport};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum BenchError {
    #[error("server unreachable: {0}")]
    ServerUnreachable(String),
    #[error("token rejected by the server")]
    AuthRejected,
    #[error("study `{0}` has no points left to ask")]
    BudgetExhausted(String),
    #[error("unexpected server response: {0}")]
    Protocol(String),
    #[error("worker process failed: {0}")]
    Worker(String),
}

impl BenchError {
    fn from_client(e: ClientError, study: &str) -> Self {
        match e {
            ClientError::Unreachable(m) => BenchError::ServerUnreachable(m),
            ClientError::Unauthorized => BenchError::AuthRejected,
            ref s if s.code().as_deref() == Some("grid_exhausted") => BenchError::BudgetExhausted(study.to_owned()),
            other => BenchError::Protocol(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerChoice {
    Tpe,
    Random,
    Grid { points: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrunerChoice {
    None,
    Median { n_warmup_steps: u64, n_min_trials: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub server: String,
    pub token: String,
    pub objective: Objective,
    pub workers: usize,
    /// Trial budget of the whole campaign, split as evenly as possible
    /// across the studies.
    pub trials: u64,
    pub studies: usize,
    pub sampler: SamplerChoice,
    pub pruner: PrunerChoice,
    pub seed: u64,
    /// Length of each simulated training curve; 0 skips intermediate reports.
    pub steps: u64,
    /// Probability that a trial reports failure halfway through.
    pub fail_rate: f64,
    pub study_prefix: String,
}

impl CampaignConfig {
    pub fn new(server: &str, token: &str, objective: Objective) -> Self {
        CampaignConfig {
            server: server.to_owned(),
            token: token.to_owned(),
            objective,
            workers: 1,
            trials: 10,
            studies: 1,
            sampler: SamplerChoice::Tpe,
            pruner: PrunerChoice::None,
            seed: 0,
            steps: 0,
            fail_rate: 0.0,
            study_prefix: "bench".to_owned(),
        }
    }

    pub fn study_definitions(&self) -> Vec<StudyDefinition> {
        (0..self.studies)
            .map(|k| {
                let seed = self.seed.wrapping_add(k as u64);
                let space = self.objective.space();
                let sampler = match self.sampler {
                    SamplerChoice::Tpe => SamplerConfig::tpe(seed),
                    SamplerChoice::Random => SamplerConfig::random(seed),
                    SamplerChoice::Grid { points } => SamplerConfig::grid(
                        seed,
                        space.params().iter().map(|p| (p.name.clone(), points)).collect(),
                    ),
                };
                let pruner = match self.pruner {
                    PrunerChoice::None => PrunerConfig::None,
                    PrunerChoice::Median { n_warmup_steps, n_min_trials } => {
                        PrunerConfig::median(n_warmup_steps, n_min_trials)
                    }
                };
                let name = format!("{}-{}-{k}", self.study_prefix, self.objective);
                StudyDefinition::new(name, space, StudyProperties::new(Direction::Minimize, sampler, pruner))
            })
            .collect()
    }

    pub fn quotas(&self) -> Vec<u64> {
        let s = self.studies.max(1) as u64;
        (0..s).map(|k| self.trials / s + u64::from(k < self.trials % s)).collect()
    }

    /// Study index of each ticket for a fixed split, round-robin over
    /// studies until every quota is used.
    fn ticket_order(&self) -> Vec<usize> {
        let mut left = self.quotas();
        let mut order = Vec::new();
        while left.iter().any(|q| *q > 0) {
            for (k, q) in left.iter_mut().enumerate() {
                if *q > 0 {
                    *q -= 1;
                    order.push(k);
                }
            }
        }
        order
    }
}

/// What one worker observed about one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub worker: usize,
    pub study: usize,
    pub study_id: String,
    pub trial_id: String,
    pub trial_index: u64,
    pub params: hopaas_core::Params,
    pub state: TrialState,
    pub objective: Option<f64>,
    pub steps: u64,
    /// Seconds since the campaign started when the trial closed.
    pub closed_after: f64,
}

enum Tickets {
    Shared { claimed: Arc<Vec<AtomicU64>>, quotas: Vec<u64> },
    Fixed(VecDeque<usize>),
}

impl Tickets {
    fn next(&mut self, worker: usize) -> Option<usize> {
        match self {
            Tickets::Fixed(queue) => queue.pop_front(),
            Tickets::Shared { claimed, quotas } => {
                let s = quotas.len();
                (0..s).map(|o| (worker + o) % s).find(|&k| claimed[k].fetch_add(1, Ordering::SeqCst) < quotas[k])
            }
        }
    }
}

/// Per-trial generator for evaluation noise and failures, fixed by the
/// trial's identity so results do not depend on which worker ran it.
fn trial_noise(seed: u64, study: usize, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (study as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(index);
    rng
}

struct Worker {
    id: usize,
    client: HopaasClient,
    config: Arc<CampaignConfig>,
    defs: Arc<Vec<StudyDefinition>>,
    started: Instant,
    abort: Arc<AtomicBool>,
}

impl Worker {
    async fn run(self, mut tickets: Tickets) -> Result<Vec<TrialRecord>, BenchError> {
        let mut records = Vec::new();
        while !self.abort.load(Ordering::SeqCst) {
            let Some(study) = tickets.next(self.id) else { break };
            match self.trial(study).await {
                Ok(r) => records.push(r),
                Err(e) => {
                    self.abort.store(true, Ordering::SeqCst);
                    return Err(e);
                }
            }
        }
        Ok(records)
    }

    async fn trial(&self, study: usize) -> Result<TrialRecord, BenchError> {
        let def = &self.defs[study];
        let err = |e| BenchError::from_client(e, &def.study_name);
        let a = self.client.ask(def).await.map_err(err)?;
        let objective = self.config.objective;
        let mut rng = trial_noise(self.config.seed, study, a.trial_index);
        let final_value = objective.evaluate(&a.params, &mut rng);
        let fails = self.config.fail_rate > 0.0 && rng.random::<f64>() < self.config.fail_rate;
        let fail_at = self.config.steps / 2;
        let curve = Curve::new(objective, self.config.steps);

        let mut state = TrialState::Completed;
        let mut steps = 0;
        for step in 1..=self.config.steps {
            if fails && step > fail_at {
                break;
            }
            steps = step;
            let value = curve.at(&a.params, final_value, step, &mut rng);
            if self.client.should_prune(&a.trial_id, step, value).await.map_err(err)? {
                state = TrialState::Pruned;
                break;
            }
        }
        let mut reported = None;
        if state == TrialState::Completed {
            if fails {
                state = TrialState::Failed;
                self.client.tell_failed(&a.trial_id).await.map_err(err)?;
            } else {
                self.client.tell(&a.trial_id, final_value).await.map_err(err)?;
                reported = Some(final_value);
            }
        }
        Ok(TrialRecord {
            worker: self.id,
            study,
            study_id: a.study_id,
            trial_id: a.trial_id,
            trial_index: a.trial_index,
            params: a.params,
            state,
            objective: reported,
            steps,
            closed_after: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// Runs `config.workers` concurrent tasks sharing one trial budget, then
/// reconciles the result with the server's accounting.
pub async fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, BenchError> {
    let started = Instant::now();
    if config.trials == 0 {
        return Ok(CampaignReport::build(config, Vec::new(), 0.0));
    }
    let config_arc = Arc::new(config.clone());
    let defs = Arc::new(config.study_definitions());
    let claimed: Arc<Vec<AtomicU64>> = Arc::new(config.quotas().iter().map(|_| AtomicU64::new(0)).collect());
    let abort = Arc::new(AtomicBool::new(false));
    let client = HopaasClient::new(&config.server, &config.token);
    let mut set = tokio::task::JoinSet::new();
    for id in 0..config.workers.max(1) {
        let worker = Worker {
            id,
            client: client.clone(),
            config: config_arc.clone(),
            defs: defs.clone(),
            started,
            abort: abort.clone(),
        };
        let tickets = Tickets::Shared { claimed: claimed.clone(), quotas: config.quotas() };
        set.spawn(worker.run(tickets));
    }
    let mut records = Vec::new();
    let mut first_error = None;
    while let Some(joined) = set.join_next().await {
        match joined {
            Ok(Ok(r)) => records.extend(r),
            Ok(Err(e)) => {
                first_error.get_or_insert(e);
            }
            Err(e) => {
                first_error.get_or_insert(BenchError::Worker(e.to_string()));
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let mut report = CampaignReport::build(config, records, started.elapsed().as_secs_f64());
    report.reconciliation = reconcile(&client, &report).await?;
    Ok(report)
}

/// Body of one forked worker process: a fixed stripe of the ticket order.
pub async fn run_worker_stripe(config: &CampaignConfig, worker: usize) -> Result<Vec<TrialRecord>, BenchError> {
    let n = config.workers.max(1);
    let tickets: VecDeque<usize> =
        config.ticket_order().into_iter().enumerate().filter(|(i, _)| i % n == worker).map(|(_, k)| k).collect();
    let w = Worker {
        id: worker,
        client: HopaasClient::new(&config.server, &config.token),
        config: Arc::new(config.clone()),
        defs: Arc::new(config.study_definitions()),
        started: Instant::now(),
        abort: Arc::new(AtomicBool::new(false)),
    };
    w.run(Tickets::Fixed(tickets)).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WorkerOutput {
    pub records: Vec<TrialRecord>,
    pub error: Option<BenchError>,
}

/// Like `run_campaign`, but each worker is a separate OS process running
/// `exe worker --config <json> --index <i>`.
pub async fn run_campaign_forked(config: &CampaignConfig, exe: &Path) -> Result<CampaignReport, BenchError> {
    let started = Instant::now();
    if config.trials == 0 {
        return Ok(CampaignReport::build(config, Vec::new(), 0.0));
    }
    let json = serde_json::to_string(config).expect("config serializes");
    let mut children = Vec::new();
    for i in 0..config.workers.max(1) {
        let child = tokio::process::Command::new(exe)
            .args(["worker", "--config", &json, "--index", &i.to_string()])
            .stdout(std::process::Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| BenchError::Worker(e.to_string()))?;
        children.push(child);
    }
    let mut records = Vec::new();
    let mut first_error = None;
    for child in children {
        let out = child.wait_with_output().await.map_err(|e| BenchError::Worker(e.to_string()))?;
        match serde_json::from_slice::<WorkerOutput>(&out.stdout) {
            Ok(w) => {
                records.extend(w.records);
                if let Some(e) = w.error {
                    first_error.get_or_insert(e);
                }
            }
            Err(e) => {
                first_error.get_or_insert(BenchError::Worker(format!("{e} (exit {})", out.status)));
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let client = HopaasClient::new(&config.server, &config.token);
    let mut report = CampaignReport::build(config, records, started.elapsed().as_secs_f64());
    report.reconciliation = reconcile(&client, &report).await?;
    Ok(report)
}

/// Cross-checks the workers' view of the campaign against the server's.
pub async fn reconcile(client: &HopaasClient, report: &CampaignReport) -> Result<Reconciliation, BenchError> {
    let err = |e| BenchError::from_client(e, "");
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for r in &report.trials {
        if !seen.insert(&r.trial_id) {
            problems.push(format!("trial {} handed to more than one ask", r.trial_id));
        }
    }
    let rows: BTreeMap<String, _> =
        client.studies().await.map_err(err)?.into_iter().map(|s| (s.study_id.clone(), s)).collect();
    for s in &report.studies {
        let Some(study_id) = &s.study_id else { continue };
        let Some(row) = rows.get(study_id) else {
            problems.push(format!("study {study_id} missing from the server listing"));
            continue;
        };
        let expect = [
            ("trials", s.asks, row.n_trials),
            ("completed", s.completed, row.n_completed),
            ("pruned", s.pruned, row.n_pruned),
            ("failed", s.failed, row.n_failed),
            ("running", 0, row.n_running),
        ];
        for (what, mine, theirs) in expect {
            if mine != theirs {
                problems.push(format!("study {study_id}: {what} {mine} locally, {theirs} on the server"));
            }
        }
        if row.best_objective != s.best_objective {
            problems.push(format!(
                "study {study_id}: best {:?} locally, {:?} on the server",
                s.best_objective, row.best_objective
            ));
        }
        let trials = client.trials(study_id).await.map_err(err)?;
        if trials.iter().enumerate().any(|(i, t)| t.index != i as u64) {
            problems.push(format!("study {study_id}: trial indices are not 0..{}", trials.len()));
        }
        let mine: BTreeMap<&str, _> =
            report.trials.iter().filter(|r| &r.study_id == study_id).map(|r| (r.trial_id.as_str(), r)).collect();
        for t in &trials {
            let Some(r) = mine.get(t.trial_id.as_str()) else {
                problems.push(format!("trial {} on the server was never handed out", t.trial_id));
                continue;
            };
            if r.state != t.state || r.objective != t.objective {
                problems.push(format!(
                    "trial {}: {} {:?} locally, {} {:?} on the server",
                    t.trial_id, r.state, r.objective, t.state, t.objective
                ));
            }
            if r.params != t.params {
                problems.push(format!("trial {}: params differ from the server's", t.trial_id));
            }
            if t.intermediates.len() as u64 != r.steps {
                problems.push(format!(
                    "trial {}: {} steps reported, {} stored",
                    t.trial_id,
                    r.steps,
                    t.intermediates.len()
                ));
            }
        }
    }
    Ok(Reconciliation { ok: problems.is_empty(), problems })
}

pub(crate) fn study_reports(config: &CampaignConfig, records: &[TrialRecord]) -> Vec<StudyReport> {
    if config.trials == 0 {
        return Vec::new();
    }
    config
        .study_definitions()
        .iter()
        .enumerate()
        .map(|(k, def)| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.study == k).collect();
            let count = |s: TrialState| mine.iter().filter(|r| r.state == s).count() as u64;
            StudyReport {
                name: def.study_name.clone(),
                study_id: mine.first().map(|r| r.study_id.clone()),
                asks: mine.len() as u64,
                completed: count(TrialState::Completed),
                pruned: count(TrialState::Pruned),
                failed: count(TrialState::Failed),
                best_objective: best_of(mine.iter().filter_map(|r| r.objective)),
                total_steps: mine.iter().map(|r| r.steps).sum(),
                wall_clock_seconds: mine.iter().map(|r| r.closed_after).fold(0.0, f64::max),
            }
        })
        .collect()
}

pub(crate) fn worker_reports(config: &CampaignConfig, records: &[TrialRecord]) -> Vec<WorkerReport> {
    if config.trials == 0 {
        return Vec::new();
    }
    (0..config.workers.max(1))
        .map(|w| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.worker == w).collect();
            let count = |s: TrialState| mine.iter().filter(|r| r.state == s).count() as u64;
            WorkerReport {
                worker: w,
                asks: mine.len() as u64,
                completed: count(TrialState::Completed),
                pruned: count(TrialState::Pruned),
                failed: count(TrialState::Failed),
            }
        })
        .collect()
}

fn best_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |best, v| Some(best.map_or(v, |b: f64| b.min(v))))
}
