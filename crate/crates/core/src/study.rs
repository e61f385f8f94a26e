//! Studies, trials and the configuration that defines how a study searches.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Fingerprint;
use crate::space::{Params, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// Maps an objective onto a scale where smaller is always better.
    pub fn orient(self, value: f64) -> f64 {
        match self {
            Direction::Minimize => value,
            Direction::Maximize => -value,
        }
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        self.orient(a) < self.orient(b)
    }

    pub fn flip(self) -> Self {
        match self {
            Direction::Minimize => Direction::Maximize,
            Direction::Maximize => Direction::Minimize,
        }
    }
}

pub const DEFAULT_GAMMA: f64 = 0.25;
pub const DEFAULT_STARTUP_TRIALS: u32 = 10;
pub const DEFAULT_CANDIDATES: u32 = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerKind {
    Random,
    Tpe { n_startup_trials: u32, gamma: f64, n_candidates: u32 },
    /// Points per numeric parameter. Integer parameters without an entry
    /// enumerate every integer in range; categoricals always use all choices.
    Grid { grid_points: BTreeMap<String, u32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub kind: SamplerKind,
}

impl SamplerConfig {
    pub fn random(seed: u64) -> Self {
        Self { seed, kind: SamplerKind::Random }
    }

    pub fn tpe(seed: u64) -> Self {
        Self {
            seed,
            kind: SamplerKind::Tpe {
                n_startup_trials: DEFAULT_STARTUP_TRIALS,
                gamma: DEFAULT_GAMMA,
                n_candidates: DEFAULT_CANDIDATES,
            },
        }
    }

    pub fn grid(seed: u64, grid_points: BTreeMap<String, u32>) -> Self {
        Self { seed, kind: SamplerKind::Grid { grid_points } }
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::tpe(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrunerConfig {
    #[default]
    None,
    Median { n_warmup_steps: u64, n_min_trials: u32 },
}

impl PrunerConfig {
    pub fn median(n_warmup_steps: u64, n_min_trials: u32) -> Self {
        PrunerConfig::Median { n_warmup_steps, n_min_trials }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyProperties {
    pub direction: Direction,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub pruner: PrunerConfig,
}

impl StudyProperties {
    pub fn new(direction: Direction, sampler: SamplerConfig, pruner: PrunerConfig) -> Self {
        Self { direction, sampler, pruner }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown sampler kind `{0}`")]
    UnknownSampler(String),
    #[error("unknown pruner kind `{0}`")]
    UnknownPruner(String),
    #[error("field `{field}` does not apply to kind `{kind}`")]
    NotApplicable { field: &'static str, kind: String },
    #[error("gamma must lie strictly between 0 and 1")]
    Gamma,
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
    #[error("grid_points for `{0}` must be positive")]
    GridPoints(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplerWire {
    kind: String,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_startup_trials: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_candidates: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_points: Option<BTreeMap<String, u32>>,
}

impl TryFrom<SamplerWire> for SamplerConfig {
    type Error = ConfigError;

    fn try_from(w: SamplerWire) -> Result<Self, ConfigError> {
        let not_applicable = |field| ConfigError::NotApplicable { field, kind: w.kind.clone() };
        let tpe_fields = [
            ("n_startup_trials", w.n_startup_trials.is_some()),
            ("gamma", w.gamma.is_some()),
            ("n_candidates", w.n_candidates.is_some()),
        ];
        let kind = match w.kind.as_str() {
            "random" | "grid" => {
                if let Some((field, _)) = tpe_fields.iter().find(|(_, set)| *set) {
                    return Err(not_applicable(field));
                }
                if w.kind == "random" {
                    if w.grid_points.is_some() {
                        return Err(not_applicable("grid_points"));
                    }
                    SamplerKind::Random
                } else {
                    let grid_points = w.grid_points.clone().unwrap_or_default();
                    if let Some((name, _)) = grid_points.iter().find(|(_, n)| **n == 0) {
                        return Err(ConfigError::GridPoints(name.clone()));
                    }
                    SamplerKind::Grid { grid_points }
                }
            }
            "tpe" => {
                if w.grid_points.is_some() {
                    return Err(not_applicable("grid_points"));
                }
                let gamma = w.gamma.unwrap_or(DEFAULT_GAMMA);
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(ConfigError::Gamma);
                }
                let n_startup_trials = w.n_startup_trials.unwrap_or(DEFAULT_STARTUP_TRIALS);
                if n_startup_trials == 0 {
                    return Err(ConfigError::NotPositive("n_startup_trials"));
                }
                let n_candidates = w.n_candidates.unwrap_or(DEFAULT_CANDIDATES);
                if n_candidates == 0 {
                    return Err(ConfigError::NotPositive("n_candidates"));
                }
                SamplerKind::Tpe { n_startup_trials, gamma, n_candidates }
            }
            other => return Err(ConfigError::UnknownSampler(other.to_owned())),
        };
        Ok(SamplerConfig { seed: w.seed, kind })
    }
}

impl From<&SamplerConfig> for SamplerWire {
    fn from(c: &SamplerConfig) -> Self {
        let mut w = SamplerWire {
            kind: String::new(),
            seed: c.seed,
            n_startup_trials: None,
            gamma: None,
            n_candidates: None,
            grid_points: None,
        };
        match &c.kind {
            SamplerKind::Random => w.kind = "random".into(),
            SamplerKind::Tpe { n_startup_trials, gamma, n_candidates } => {
                w.kind = "tpe".into();
                w.n_startup_trials = Some(*n_startup_trials);
                w.gamma = Some(*gamma);
                w.n_candidates = Some(*n_candidates);
            }
            SamplerKind::Grid { grid_points } => {
                w.kind = "grid".into();
                w.grid_points = Some(grid_points.clone());
            }
        }
        w
    }
}

impl Serialize for SamplerConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SamplerWire::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SamplerConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        SamplerWire::deserialize(deserializer)?.try_into().map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrunerWire {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_warmup_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_min_trials: Option<u32>,
}

impl Serialize for PrunerConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = match *self {
            PrunerConfig::None => {
                PrunerWire { kind: "none".into(), n_warmup_steps: None, n_min_trials: None }
            }
            PrunerConfig::Median { n_warmup_steps, n_min_trials } => PrunerWire {
                kind: "median".into(),
                n_warmup_steps: Some(n_warmup_steps),
                n_min_trials: Some(n_min_trials),
            },
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PrunerConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = PrunerWire::deserialize(deserializer)?;
        match w.kind.as_str() {
            "none" => {
                if w.n_warmup_steps.is_some() {
                    return Err(D::Error::custom(ConfigError::NotApplicable {
                        field: "n_warmup_steps",
                        kind: w.kind,
                    }));
                }
                if w.n_min_trials.is_some() {
                    return Err(D::Error::custom(ConfigError::NotApplicable {
                        field: "n_min_trials",
                        kind: w.kind,
                    }));
                }
                Ok(PrunerConfig::None)
            }
            "median" => {
                let n_min_trials = w.n_min_trials.unwrap_or(1);
                if n_min_trials == 0 {
                    return Err(D::Error::custom(ConfigError::NotPositive("n_min_trials")));
                }
                Ok(PrunerConfig::Median { n_warmup_steps: w.n_warmup_steps.unwrap_or(0), n_min_trials })
            }
            other => Err(D::Error::custom(ConfigError::UnknownPruner(other.to_owned()))),
        }
    }
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(StudyId);
string_id!(TrialId);

impl StudyId {
    /// Study ids are derived from the fingerprint so that replaying the same
    /// sequence of requests against a fresh store yields identical responses.
    pub fn from_fingerprint(fp: &Fingerprint) -> Self {
        StudyId(fp.to_hex()[..32].to_owned())
    }
}

impl TrialId {
    pub fn new(study: &StudyId, index: u64) -> Self {
        TrialId(format!("{study}-{index}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub study_id: StudyId,
    pub name: String,
    pub owner: String,
    pub fingerprint: Fingerprint,
    pub space: SearchSpace,
    pub properties: StudyProperties,
    pub created_at: DateTime<Utc>,
    pub trial_counter: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    Running,
    Completed,
    Pruned,
    Failed,
}

impl TrialState {
    pub const ALL: [TrialState; 4] =
        [TrialState::Running, TrialState::Completed, TrialState::Pruned, TrialState::Failed];

    /// Running is the only state with outgoing edges, and it cannot loop.
    pub fn can_transition_to(self, to: TrialState) -> bool {
        self == TrialState::Running && to != TrialState::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrialState::Running => "running",
            TrialState::Completed => "completed",
            TrialState::Pruned => "pruned",
            TrialState::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|state| state.as_str() == s)
    }
}

impl fmt::Display for TrialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal trial transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: TrialState,
    pub to: TrialState,
}

/// How a trial ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed(f64),
    Pruned,
    Failed,
}

impl Outcome {
    pub fn state(self) -> TrialState {
        match self {
            Outcome::Completed(_) => TrialState::Completed,
            Outcome::Pruned => TrialState::Pruned,
            Outcome::Failed => TrialState::Failed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intermediate {
    pub step: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: TrialId,
    pub study_id: StudyId,
    pub index: u64,
    pub params: Params,
    pub state: TrialState,
    pub intermediates: Vec<Intermediate>,
    pub objective: Option<f64>,
    pub opened_at: DateTime<Utc>,
    pub closed_at: Option<DateTime<Utc>>,
}

impl Trial {
    pub fn open(study_id: StudyId, index: u64, params: Params, at: DateTime<Utc>) -> Self {
        Trial {
            trial_id: TrialId::new(&study_id, index),
            study_id,
            index,
            params,
            state: TrialState::Running,
            intermediates: Vec::new(),
            objective: None,
            opened_at: at,
            closed_at: None,
        }
    }

    pub fn close(&mut self, outcome: Outcome, at: DateTime<Utc>) -> Result<(), IllegalTransition> {
        let to = outcome.state();
        if !self.state.can_transition_to(to) {
            return Err(IllegalTransition { from: self.state, to });
        }
        self.state = to;
        self.objective = match outcome {
            Outcome::Completed(v) => Some(v),
            _ => None,
        };
        self.closed_at = Some(at);
        Ok(())
    }

    pub fn last_step(&self) -> Option<u64> {
        self.intermediates.last().map(|i| i.step)
    }

    pub fn value_at(&self, step: u64) -> Option<f64> {
        self.intermediates
            .binary_search_by_key(&step, |i| i.step)
            .ok()
            .map(|pos| self.intermediates[pos].value)
    }

    /// Checks the structural invariants every committed trial must satisfy.
    pub fn check_invariants(&self, space: &SearchSpace) -> Result<(), String> {
        if !space.conforms(&self.params) {
            return Err(format!("trial {} params do not conform", self.trial_id));
        }
        if self.intermediates.windows(2).any(|w| w[0].step >= w[1].step) {
            return Err(format!("trial {} steps not strictly increasing", self.trial_id));
        }
        if self.objective.is_some() != (self.state == TrialState::Completed) {
            return Err(format!("trial {} objective/state mismatch", self.trial_id));
        }
        if self.closed_at.is_some() != (self.state != TrialState::Running) {
            return Err(format!("trial {} closed_at/state mismatch", self.trial_id));
        }
        Ok(())
    }
}
