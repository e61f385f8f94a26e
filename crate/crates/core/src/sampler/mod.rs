//! Suggestion of the next hyperparameter set from a study's history.
//!
//! Three modalities: uniform random sampling, a Tree-structured Parzen
//! Estimator that takes over after a random start-up phase, and grid search.
//! Every function here is pure given its explicit inputs and random source.

mod grid;
mod parzen;

use ordered_float::OrderedFloat;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{axis, check_grid, grid_next, lattice_size};
pub use parzen::{fit_parzen, CategoricalParzen, NumericParzen, ParzenDensity};

use crate::space::{sample_uniform_random, Params, SearchSpace};
use crate::study::{Direction, SamplerConfig, SamplerKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("history entry {0} does not conform to the search space")]
    IncompatibleHistory(usize),
    #[error("value {value} is out of range for parameter `{name}`")]
    ValueOutOfRange { name: String, value: String },
    #[error("grid is exhausted")]
    GridExhausted,
    #[error("grid search needs a point count for parameter `{0}`")]
    GridMissing(String),
    #[error("grid point count given for unknown parameter `{0}`")]
    GridUnknown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub params: Params,
    pub objective: f64,
}

/// Completed trials of one study, in completion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationHistory {
    pub direction: Direction,
    pub entries: Vec<Observation>,
}

impl ObservationHistory {
    pub fn new(direction: Direction) -> Self {
        Self { direction, entries: Vec::new() }
    }

    pub fn push(&mut self, params: Params, objective: f64) {
        self.entries.push(Observation { params, objective });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Checks sampler settings that depend on the search space.
pub fn check_config(space: &SearchSpace, config: &SamplerConfig) -> Result<(), SamplerError> {
    match &config.kind {
        SamplerKind::Grid { grid_points } => check_grid(space, grid_points),
        _ => Ok(()),
    }
}

/// Splits the history into the best `max(1, ceil(gamma * n))` entries and
/// the rest. Ties go to the entry completed first.
pub fn split_good_bad(
    history: &ObservationHistory,
    gamma: f64,
) -> Result<(Vec<&Observation>, Vec<&Observation>), SamplerError> {
    if history.is_empty() {
        return Err(SamplerError::EmptyHistory);
    }
    let n = history.len();
    let n_good = ((gamma * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps completion order among equal objectives.
    order.sort_by_key(|&i| OrderedFloat(history.direction.orient(history.entries[i].objective)));
    let mut is_good = vec![false; n];
    for &i in &order[..n_good] {
        is_good[i] = true;
    }
    let (good, bad): (Vec<_>, Vec<_>) = history.entries.iter().zip(is_good).partition(|(_, g)| *g);
    Ok((good.into_iter().map(|(e, _)| e).collect(), bad.into_iter().map(|(e, _)| e).collect()))
}

/// Proposes the parameters for trial number `trial_index` of a study.
pub fn suggest<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &ObservationHistory,
    config: &SamplerConfig,
    trial_index: u64,
    rng: &mut R,
) -> Result<Params, SamplerError> {
    if let Some(i) = history.entries.iter().position(|e| !space.conforms(&e.params) || !e.objective.is_finite()) {
        return Err(SamplerError::IncompatibleHistory(i));
    }
    match &config.kind {
        SamplerKind::Random => Ok(sample_uniform_random(space, rng)),
        SamplerKind::Tpe { n_startup_trials, .. } if history.len() < *n_startup_trials as usize => {
            Ok(sample_uniform_random(space, rng))
        }
        SamplerKind::Tpe { gamma, n_candidates, .. } => tpe(space, history, *gamma, *n_candidates, rng),
        SamplerKind::Grid { grid_points } => {
            grid_next(space, trial_index, grid_points)?.ok_or(SamplerError::GridExhausted)
        }
    }
}

fn tpe<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &ObservationHistory,
    gamma: f64,
    n_candidates: u32,
    rng: &mut R,
) -> Result<Params, SamplerError> {
    let (good, bad) = split_good_bad(history, gamma)?;
    let models = space
        .sorted()
        .into_iter()
        .map(|spec| {
            let good_values: Vec<_> = good.iter().map(|e| &e.params[&spec.name]).collect();
            let bad_values: Vec<_> = bad.iter().map(|e| &e.params[&spec.name]).collect();
            Ok((spec, fit_parzen(&good_values, spec)?, fit_parzen(&bad_values, spec)?))
        })
        .collect::<Result<Vec<_>, SamplerError>>()?;

    let mut best: Option<(f64, Params)> = None;
    for _ in 0..n_candidates {
        let mut score = 0.0;
        let mut candidate = Params::new();
        for (spec, l, g) in &models {
            let value = l.sample(rng);
            score += l.log_density(&value) - g.log_density(&value);
            candidate.insert(spec.name.clone(), value);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, candidate));
        }
    }
    Ok(best.expect("n_candidates is positive").1)
}
