use std::sync::Arc;
use std::time::Duration;

use hopaas_bench::objective::sphere;
use hopaas_bench::{
    oracle_random_search, oracle_trace, run_campaign, BenchError, CampaignConfig, CampaignReport, Objective,
    PrunerChoice, SamplerChoice,
};
use hopaas_core::sample_uniform_random;
use hopaas_core::storage::{SqliteStore, Store};
use hopaas_server::{start, RunningServer, ServerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Live {
    server: RunningServer,
    token: String,
    _dir: TempDir,
}

async fn live() -> Live {
    let dir = tempfile::tempdir().unwrap();
    let store: Arc<dyn Store> = Arc::new(SqliteStore::open(dir.path()).unwrap());
    let token = store.issue_token("bench", Duration::from_secs(3600)).unwrap().secret;
    let server = start(store, &ServerConfig::default(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    Live { server, token, _dir: dir }
}

impl Live {
    fn config(&self, objective: Objective) -> CampaignConfig {
        CampaignConfig::new(&self.server.url(), &self.token, objective)
    }
}

#[test]
fn oracle_single_trial_is_the_first_sample() {
    let space = Objective::Sphere.space();
    let p = sample_uniform_random(&space, &mut ChaCha8Rng::seed_from_u64(5));
    let expected = sphere(&[p["x0"].as_f64().unwrap(), p["x1"].as_f64().unwrap()]);
    assert_eq!(oracle_random_search(Objective::Sphere, 1, 5), Some(expected));
    assert_eq!(oracle_random_search(Objective::Sphere, 1, 5), oracle_random_search(Objective::Sphere, 1, 5));
    assert_eq!(oracle_random_search(Objective::Sphere, 0, 5), None);
}

#[test]
fn dense_oracle_finds_the_branin_basin() {
    let best = oracle_random_search(Objective::Branin, 10_000, 0).unwrap();
    assert!(best < 0.5, "{best}");
    assert!(best >= hopaas_bench::BRANIN_MINIMUM - 1e-6);
}

#[test]
fn oracle_best_never_increases() {
    for objective in Objective::ALL {
        let trace = oracle_trace(objective, 500, 3);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        for n in [1u64, 10, 100, 500] {
            assert_eq!(oracle_random_search(objective, n, 3), Some(trace[n as usize - 1]));
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn tpe_beats_the_oracle_on_sphere_most_of_the_time() {
    let l = live().await;
    let mut wins = 0;
    for seed in 0..20u64 {
        let mut c = l.config(Objective::Sphere);
        c.trials = 30;
        c.seed = seed;
        c.study_prefix = format!("sphere-{seed}");
        let report = run_campaign(&c).await.unwrap();
        let tpe = report.best_objective().unwrap();
        let oracle = oracle_random_search(Objective::Sphere, 30, seed).unwrap();
        if tpe < oracle {
            wins += 1;
        }
    }
    eprintln!("tpe won {wins}/20 sphere runs");
    assert!(wins >= 12, "{wins}/20");
}

#[tokio::test(flavor = "multi_thread")]
async fn many_workers_reconcile_with_the_server() {
    let l = live().await;
    let mut c = l.config(Objective::Branin);
    c.workers = 20;
    c.studies = 3;
    c.trials = 200;
    c.steps = 8;
    c.pruner = PrunerChoice::Median { n_warmup_steps: 2, n_min_trials: 3 };
    c.fail_rate = 0.05;
    let report = run_campaign(&c).await.unwrap();
    assert!(report.reconciliation.ok, "{:?}", report.reconciliation.problems);
    assert_eq!(report.trials.len(), 200);
    assert_eq!(report.studies.iter().map(|s| s.asks).collect::<Vec<_>>(), vec![67, 67, 66]);
    assert!(report.studies.iter().all(|s| s.completed + s.pruned + s.failed == s.asks));
}

fn sequence(r: &CampaignReport) -> Vec<(String, String, Option<f64>, u64)> {
    r.trials.iter().map(|t| (t.trial_id.clone(), serde_json::to_string(&t.params).unwrap(), t.objective, t.steps)).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn single_worker_campaigns_repeat_exactly() {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let l = live().await;
        let mut c = l.config(Objective::NoisyRosenbrock);
        c.trials = 25;
        c.seed = 9;
        c.steps = 10;
        c.pruner = PrunerChoice::Median { n_warmup_steps: 3, n_min_trials: 2 };
        runs.push(run_campaign(&c).await.unwrap());
    }
    assert_eq!(sequence(&runs[0]), sequence(&runs[1]));
    assert!(runs[0].trials.iter().any(|t| t.steps < 10), "expected some pruning");
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_token_is_auth_rejected() {
    let l = live().await;
    let mut c = l.config(Objective::Sphere);
    c.token = "not-a-token".into();
    assert_eq!(run_campaign(&c).await.unwrap_err(), BenchError::AuthRejected);
}

#[tokio::test(flavor = "multi_thread")]
async fn grid_budget_runs_out() {
    let l = live().await;
    let mut c = l.config(Objective::Sphere);
    c.sampler = SamplerChoice::Grid { points: 2 };
    c.trials = 5;
    let err = run_campaign(&c).await.unwrap_err();
    assert!(matches!(err, BenchError::BudgetExhausted(_)), "{err:?}");
    c.study_prefix = "fits".into();
    c.trials = 4;
    assert!(run_campaign(&c).await.unwrap().reconciliation.ok);
}

#[tokio::test(flavor = "multi_thread")]
async fn forked_workers_reconcile() {
    let l = live().await;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = tokio::process::Command::new(env!("CARGO_BIN_EXE_bench"))
        .args(["run", "--server", &l.server.url(), "--token", &l.token, "--objective", "sphere"])
        .args(["--workers", "4", "--studies", "2", "--trials", "24", "--steps", "5", "--pruner", "median"])
        .args(["--sampler", "random", "--seed", "7", "--fork", "--report"])
        .arg(&out)
        .status()
        .await
        .unwrap();
    assert!(status.success());
    let report: CampaignReport = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(report.reconciliation.ok);
    assert_eq!(report.trials.len(), 24);
    let workers: std::collections::BTreeSet<usize> = report.trials.iter().map(|t| t.worker).collect();
    assert_eq!(workers.len(), 4);
}

#[tokio::test(flavor = "multi_thread")]
async fn cli_exit_codes() {
    let l = live().await;
    let run = |token: &str, trials: &str| {
        let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_bench"));
        cmd.args(["run", "--server", &l.server.url(), "--token", token, "--trials", trials, "--objective", "sphere"]);
        cmd.stdout(std::process::Stdio::null()).stderr(std::process::Stdio::null());
        cmd
    };
    let mut ok = run(&l.token, "3");
    let mut zero = run("whatever", "0");
    let mut denied = run("whatever", "3");
    let (ok, zero, denied) = tokio::task::spawn_blocking(move || {
        (ok.status().unwrap(), zero.status().unwrap(), denied.status().unwrap())
    })
    .await
    .unwrap();
    assert_eq!(ok.code(), Some(0));
    assert_eq!(zero.code(), Some(0));
    assert_eq!(denied.code(), Some(4));
}
