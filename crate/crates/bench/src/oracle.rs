//! In-process uniform random search, the baseline every statistical claim
//! about the server's samplers is compared against.

use hopaas_core::sample_uniform_random;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::objective::Objective;

/// Best value found by `n_trials` uniform draws, or `None` when `n_trials` is 0.
pub fn oracle_random_search(objective: Objective, n_trials: u64, seed: u64) -> Option<f64> {
    oracle_trace(objective, n_trials, seed).last().copied()
}

/// Running minimum after each draw. A longer search with the same seed
/// extends a shorter one.
pub fn oracle_trace(objective: Objective, n_trials: u64, seed: u64) -> Vec<f64> {
    let space = objective.space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    (0..n_trials)
        .map(|_| {
            let params = sample_uniform_random(&space, &mut rng);
            best = best.min(objective.evaluate(&params, &mut rng));
            best
        })
        .collect()
}
