use std::f64::consts::PI;

use hopaas_core::sampler::{split_good_bad, suggest, ObservationHistory};
use hopaas_core::{
    sample_uniform_random, Direction, ParamSpec, ParamValue, Params, SamplerConfig, SamplerKind, SearchSpace,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tpe(seed: u64, n_startup_trials: u32, gamma: f64, n_candidates: u32) -> SamplerConfig {
    SamplerConfig { seed, kind: SamplerKind::Tpe { n_startup_trials, gamma, n_candidates } }
}

fn arb_spec(name: String) -> impl Strategy<Value = ParamSpec> {
    let n1 = name.clone();
    let n2 = name.clone();
    let n3 = name.clone();
    prop_oneof![
        (-100.0f64..100.0, 1e-3f64..50.0).prop_map(move |(low, w)| ParamSpec::uniform(n1.clone(), low, low + w)),
        (1e-6f64..1.0, 1.5f64..1e4).prop_map(move |(low, f)| ParamSpec::log_uniform(n2.clone(), low, low * f)),
        (-20i64..20, 1i64..30).prop_map(move |(low, w)| ParamSpec::integer(n3.clone(), low, low + w)),
        (1usize..5).prop_map(move |k| ParamSpec::categorical(name.clone(), (0..k).map(|i| format!("c{i}")))),
    ]
}

fn arb_space() -> impl Strategy<Value = SearchSpace> {
    prop::collection::btree_set("[a-z]{1,6}", 1..5)
        .prop_flat_map(|names| names.into_iter().map(arb_spec).collect::<Vec<_>>())
        .prop_map(SearchSpace::new)
}

/// A space plus a history of random in-range observations.
fn arb_problem() -> impl Strategy<Value = (SearchSpace, ObservationHistory, u64)> {
    (arb_space(), 0usize..40, any::<u64>(), any::<bool>()).prop_map(|(space, n, seed, maximize)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let direction = if maximize { Direction::Maximize } else { Direction::Minimize };
        let mut history = ObservationHistory::new(direction);
        for _ in 0..n {
            let p = sample_uniform_random(&space, &mut rng);
            history.push(p, rng.random_range(-10.0..10.0));
        }
        (space, history, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn suggestions_are_valid_and_deterministic((space, history, seed) in arb_problem()) {
        for config in [SamplerConfig::random(seed), tpe(seed, 3, 0.25, 24), tpe(seed, 1, 0.9, 5)] {
            let a = suggest(&space, &history, &config, history.len() as u64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = suggest(&space, &history, &config, history.len() as u64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(space.conforms(&a));
            prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
    }

    #[test]
    fn flipping_direction_and_sign_changes_nothing((space, history, seed) in arb_problem()) {
        let mut mirrored = ObservationHistory::new(history.direction.flip());
        for e in &history.entries {
            mirrored.push(e.params.clone(), -e.objective);
        }
        let config = tpe(seed, 2, 0.3, 16);
        let a = suggest(&space, &history, &config, 0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = suggest(&space, &mirrored, &config, 0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn split_is_translation_invariant(
        objectives in prop::collection::vec(-100i32..100, 1..60),
        shift in -1000i32..1000,
        gamma in 0.01f64..0.99,
    ) {
        // Integer-valued objectives keep the shifted comparison exact.
        let build = |delta: f64| {
            let mut h = ObservationHistory::new(Direction::Minimize);
            for (i, o) in objectives.iter().enumerate() {
                let mut p = Params::new();
                p.insert("i".into(), ParamValue::Int(i as i64));
                h.push(p, f64::from(*o) + delta);
            }
            h
        };
        let (h0, h1) = (build(0.0), build(f64::from(shift)));
        let ids = |h: &ObservationHistory| {
            let (g, b) = split_good_bad(h, gamma).unwrap();
            let f = |v: Vec<&hopaas_core::sampler::Observation>| v.iter().map(|e| e.params["i"].clone()).collect::<Vec<_>>();
            (f(g), f(b))
        };
        let (g0, b0) = ids(&h0);
        let (g1, b1) = ids(&h1);
        prop_assert_eq!(g0.len(), ((gamma * objectives.len() as f64).ceil() as usize).max(1));
        prop_assert_eq!(g0.len() + b0.len(), objectives.len());
        prop_assert_eq!((g0, b0), (g1, b1));
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 0 {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    } else {
        v[n / 2]
    }
}

#[test]
fn tpe_concentrates_on_the_minimum_of_a_parabola() {
    let space = SearchSpace::new(vec![ParamSpec::uniform("x", -5.0, 5.0)]);
    let config = tpe(0, 10, 0.25, 24);
    let mut tpe_abs = Vec::new();
    let mut oracle_abs = Vec::new();
    for rep in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(rep);
        let mut history = ObservationHistory::new(Direction::Minimize);
        for _ in 0..40 {
            let p = sample_uniform_random(&space, &mut rng);
            let x = p["x"].as_f64().unwrap();
            history.push(p, x * x);
        }
        let s = suggest(&space, &history, &config, 40, &mut ChaCha8Rng::seed_from_u64(10_000 + rep)).unwrap();
        tpe_abs.push(s["x"].as_f64().unwrap().abs());
        let oracle = rng.random_range(-5.0..5.0f64);
        oracle_abs.push(oracle.abs());
    }
    let (t, o) = (median(tpe_abs), median(oracle_abs));
    eprintln!("median abs x: tpe {t:.3}, random {o:.3}");
    assert!(t < o, "tpe median |x| {t} vs oracle {o}");
}

#[test]
fn tpe_prefers_the_better_category() {
    let space = SearchSpace::new(vec![ParamSpec::categorical("c", ["a", "b"])]);
    let mut history = ObservationHistory::new(Direction::Minimize);
    for i in 0..20 {
        let c = if i % 2 == 0 { "a" } else { "b" };
        let mut p = Params::new();
        p.insert("c".into(), ParamValue::Choice(c.into()));
        history.push(p, if c == "a" { 0.0 } else { 1.0 });
    }
    let config = tpe(0, 10, 0.25, 24);
    let hits = (0..500u64)
        .filter(|seed| {
            let s = suggest(&space, &history, &config, 20, &mut ChaCha8Rng::seed_from_u64(*seed)).unwrap();
            s["c"] == ParamValue::Choice("a".into())
        })
        .count();
    assert!(hits as f64 / 500.0 > 0.9, "{hits}/500");
}

fn branin(x: f64, y: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (y - b * x * x + c * x - 6.0).powi(2) + 10.0 * (1.0 - t) * x.cos() + 10.0
}

fn branin_run(config: &SamplerConfig, seed: u64, n_trials: u64) -> f64 {
    let space = SearchSpace::new(vec![ParamSpec::uniform("x", -5.0, 10.0), ParamSpec::uniform("y", 0.0, 15.0)]);
    let mut history = ObservationHistory::new(Direction::Minimize);
    let mut best = f64::INFINITY;
    for i in 0..n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i));
        let p = suggest(&space, &history, config, i, &mut rng).unwrap();
        let v = branin(p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap());
        best = best.min(v);
        history.push(p, v);
    }
    best
}

/// Exact one-sided p-value of the Wilcoxon signed-rank statistic W+ (sum of
/// ranks of positive differences) being at least `w_plus`, by enumerating
/// the null distribution over all sign assignments with a counting DP.
/// Assumes no zero differences; tied ranks are averaged (doubled to stay integral).
fn wilcoxon_greater(diffs: &[f64]) -> f64 {
    let mut abs: Vec<(f64, usize)> = diffs.iter().map(|d| d.abs()).zip(0..).collect();
    abs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = abs.len();
    let mut ranks2 = vec![0usize; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[j + 1].0 == abs[i].0 {
            j += 1;
        }
        for k in i..=j {
            ranks2[abs[k].1] = i + j + 2;
        }
        i = j + 1;
    }
    let w2: usize = (0..n).filter(|&k| diffs[k] > 0.0).map(|k| ranks2[k]).sum();
    let total: usize = ranks2.iter().sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for r in &ranks2 {
        for s in (*r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let tail: f64 = counts[w2..].iter().sum();
    tail / 2f64.powi(n as i32)
}

#[test]
fn wilcoxon_oracle_sanity() {
    // All 5 differences positive: p = 1/32.
    assert!((wilcoxon_greater(&[1.0, 2.0, 3.0, 4.0, 5.0]) - 1.0 / 32.0).abs() < 1e-12);
    // Symmetric split: W+ = 0 gives p = 1.
    assert!((wilcoxon_greater(&[-1.0, -2.0]) - 1.0).abs() < 1e-12);
}

#[test]
fn tpe_beats_random_search_on_branin() {
    let global_min = branin(-PI, 12.275);
    assert!((global_min - 0.397887).abs() < 1e-6);
    let diffs: Vec<f64> = (0..20u64)
        .map(|seed| branin_run(&SamplerConfig::random(seed), seed, 100) - branin_run(&SamplerConfig::tpe(seed), seed, 100))
        .collect();
    let p = wilcoxon_greater(&diffs);
    eprintln!("branin wilcoxon p = {p:.3e}");
    assert!(p < 0.05, "p = {p}, diffs = {diffs:?}");
}
