//! Median pruning of running trials.

use thiserror::Error;

use crate::study::{Direction, PrunerConfig, Trial, TrialId};

/// Values reported at exactly `step` by the other trials of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSnapshot {
    pub step: u64,
    pub peer_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PrunerError {
    #[error("intermediate value {0} is not finite")]
    NonFiniteValue(f64),
}

/// Gathers the value every trial other than `current` reported at exactly
/// `step`, whatever its state. Trials that skipped the step do not count.
pub fn collect_snapshot<'a>(
    trials: impl IntoIterator<Item = &'a Trial>,
    current: &TrialId,
    step: u64,
) -> StepSnapshot {
    let peer_values = trials
        .into_iter()
        .filter(|t| &t.trial_id != current)
        .filter_map(|t| t.value_at(step))
        .collect();
    StepSnapshot { step, peer_values }
}

/// Median of a non-empty list; the mean of the two central values when
/// the length is even.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 0 { 0.5 * (sorted[mid - 1] + sorted[mid]) } else { sorted[mid] })
}

pub fn should_prune(
    current_value: f64,
    snapshot: &StepSnapshot,
    direction: Direction,
    config: &PrunerConfig,
) -> Result<bool, PrunerError> {
    if !current_value.is_finite() {
        return Err(PrunerError::NonFiniteValue(current_value));
    }
    if let Some(bad) = snapshot.peer_values.iter().find(|v| !v.is_finite()) {
        return Err(PrunerError::NonFiniteValue(*bad));
    }
    match *config {
        PrunerConfig::None => Ok(false),
        PrunerConfig::Median { n_warmup_steps, n_min_trials } => {
            if snapshot.step < n_warmup_steps || snapshot.peer_values.len() < n_min_trials as usize {
                return Ok(false);
            }
            let median = median(&snapshot.peer_values).expect("n_min_trials >= 1 keeps peers non-empty");
            // Ties with the median survive.
            Ok(direction.better(median, current_value))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Params;
    use crate::study::Intermediate;
    use chrono::Utc;
    use proptest::prelude::*;

    fn snapshot(step: u64, peers: &[f64]) -> StepSnapshot {
        StepSnapshot { step, peer_values: peers.to_vec() }
    }

    fn trial(index: u64, steps: &[(u64, f64)]) -> Trial {
        let mut t = Trial::open("s".into(), index, Params::new(), Utc::now());
        t.intermediates = steps.iter().map(|&(step, value)| Intermediate { step, value }).collect();
        t
    }

    const MEDIAN_ANY: PrunerConfig = PrunerConfig::Median { n_warmup_steps: 0, n_min_trials: 1 };

    #[test]
    fn worse_than_median_is_pruned() {
        let s = snapshot(5, &[1.0, 2.0, 3.0]);
        assert!(should_prune(4.0, &s, Direction::Minimize, &MEDIAN_ANY).unwrap());
        assert!(!should_prune(1.5, &s, Direction::Minimize, &MEDIAN_ANY).unwrap());
    }

    #[test]
    fn warmup_forces_survival() {
        let s = snapshot(5, &[1.0, 2.0, 3.0]);
        let cfg = PrunerConfig::median(10, 1);
        assert!(!should_prune(1e9, &s, Direction::Minimize, &cfg).unwrap());
    }

    #[test]
    fn too_few_peers_forces_survival() {
        let s = snapshot(5, &[1.0, 2.0]);
        assert!(!should_prune(1e9, &s, Direction::Minimize, &PrunerConfig::median(0, 3)).unwrap());
    }

    #[test]
    fn ties_with_median_survive() {
        let s = snapshot(1, &[1.0, 3.0]);
        assert!(!should_prune(2.0, &s, Direction::Minimize, &MEDIAN_ANY).unwrap());
        assert!(should_prune(2.0 + 1e-12, &s, Direction::Minimize, &MEDIAN_ANY).unwrap());
    }

    #[test]
    fn disabled_pruner_never_prunes() {
        let s = snapshot(100, &[0.0; 10]);
        assert!(!should_prune(1e9, &s, Direction::Minimize, &PrunerConfig::None).unwrap());
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let s = snapshot(1, &[1.0]);
        assert_eq!(
            should_prune(f64::INFINITY, &s, Direction::Minimize, &MEDIAN_ANY),
            Err(PrunerError::NonFiniteValue(f64::INFINITY))
        );
    }

    #[test]
    fn snapshot_matches_exact_steps_only() {
        let peers = [trial(0, &[(0, 1.0), (1, 1.0), (2, 1.0)]), trial(1, &[(0, 2.0), (1, 2.0), (2, 2.0)]), trial(2, &[(0, 3.0), (1, 3.0), (2, 3.0)])];
        let me = trial(3, &[]);
        let all: Vec<&Trial> = peers.iter().chain([&me]).collect();
        assert_eq!(collect_snapshot(all.iter().copied(), &me.trial_id, 2).peer_values.len(), 3);

        let early = [trial(0, &[(0, 1.0)])];
        let s = collect_snapshot(&early, &me.trial_id, 3);
        assert!(s.peer_values.is_empty());
        assert!(!should_prune(9.0, &s, Direction::Minimize, &MEDIAN_ANY).unwrap());

        let gappy = [trial(0, &[(0, 1.0), (2, 1.0)])];
        assert!(collect_snapshot(&gappy, &me.trial_id, 1).peer_values.is_empty());
    }

    #[test]
    fn snapshot_excludes_the_current_trial() {
        let ts = [trial(0, &[(1, 1.0)]), trial(1, &[(1, 5.0)])];
        let s = collect_snapshot(&ts, &ts[1].trial_id, 1);
        assert_eq!(s.peer_values, vec![1.0]);
    }

    #[test]
    fn bad_curves_pruned_after_good_ones() {
        // K good trials report 1/step, K bad ones 2 + 1/step.
        let k = 4u64;
        let steps = 1..=10u64;
        let mut trials: Vec<Trial> =
            (0..k).map(|i| trial(i, &steps.clone().map(|s| (s, 1.0 / s as f64)).collect::<Vec<_>>())).collect();
        let cfg = PrunerConfig::median(1, k as u32);
        for b in 0..k {
            let index = k + b;
            let first = 1;
            let value = 2.0 + 1.0 / first as f64;
            let me = trial(index, &[(first, value)]);
            let s = collect_snapshot(&trials, &me.trial_id, first);
            assert!(should_prune(value, &s, Direction::Minimize, &cfg).unwrap(), "bad trial {b}");
            trials.push(me);
        }
    }

    proptest! {
        #[test]
        fn direction_symmetry(
            current in -1e6f64..1e6,
            peers in prop::collection::vec(-1e6f64..1e6, 0..12),
            step in 0u64..20,
            warmup in 0u64..10,
            min_trials in 1u32..6,
        ) {
            let cfg = PrunerConfig::median(warmup, min_trials);
            let a = should_prune(current, &snapshot(step, &peers), Direction::Minimize, &cfg).unwrap();
            let negated: Vec<f64> = peers.iter().map(|v| -v).collect();
            let b = should_prune(-current, &snapshot(step, &negated), Direction::Maximize, &cfg).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn strictly_best_trial_survives(
            peers in prop::collection::vec(-1e6f64..1e6, 1..12),
            margin in 1e-6f64..10.0,
            maximize in any::<bool>(),
        ) {
            let direction = if maximize { Direction::Maximize } else { Direction::Minimize };
            let best = peers.iter().copied().map(|v| direction.orient(v)).fold(f64::INFINITY, f64::min);
            let current = direction.orient(best - margin);
            prop_assert!(!should_prune(current, &snapshot(3, &peers), direction, &MEDIAN_ANY).unwrap());
        }
    }
}
