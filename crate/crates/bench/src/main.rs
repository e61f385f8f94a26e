use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hopaas_bench::campaign::{run_worker_stripe, WorkerOutput};
use hopaas_bench::{
    oracle_random_search, run_campaign, run_campaign_forked, BenchError, CampaignConfig, Objective, PrunerChoice,
    SamplerChoice,
};

#[derive(Debug, Parser)]
#[command(name = "bench", version, about = "Drive optimization campaigns against a hopaas server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplerArg {
    Tpe,
    Random,
    Grid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrunerArg {
    None,
    Median,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a campaign and reconcile it with the server. Exits 0 iff the
    /// counts agree.
    Run {
        #[arg(long, env = "HOPAAS_SERVER")]
        server: String,
        #[arg(long, env = "HOPAAS_TOKEN")]
        token: String,
        #[arg(long, default_value = "branin")]
        objective: Objective,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Total trial budget across all studies.
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        studies: usize,
        #[arg(long, value_enum, default_value_t = SamplerArg::Tpe)]
        sampler: SamplerArg,
        /// Points per parameter for the grid sampler.
        #[arg(long, default_value_t = 10)]
        grid_points: u32,
        #[arg(long, value_enum, default_value_t = PrunerArg::None)]
        pruner: PrunerArg,
        #[arg(long, default_value_t = 5)]
        warmup_steps: u64,
        #[arg(long, default_value_t = 5)]
        min_trials: u32,
        /// Simulated training steps per trial; 0 reports no intermediates.
        #[arg(long, default_value_t = 20)]
        steps: u64,
        #[arg(long, default_value_t = 0.0)]
        fail_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Study name prefix; defaults to one unique to this run.
        #[arg(long)]
        name: Option<String>,
        /// Run each worker as a separate process.
        #[arg(long)]
        fork: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Best value of an in-process random search.
    Oracle {
        #[arg(long, default_value = "branin")]
        objective: Objective,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        config: String,
        #[arg(long)]
        index: usize,
    },
}

fn exit_code(e: &BenchError) -> ExitCode {
    match e {
        BenchError::ServerUnreachable(_) => ExitCode::from(3),
        BenchError::AuthRejected => ExitCode::from(4),
        BenchError::BudgetExhausted(_) => ExitCode::from(5),
        _ => ExitCode::from(2),
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Oracle { objective, trials, seed } => {
            match oracle_random_search(objective, trials, seed) {
                Some(best) => println!("{best}"),
                None => println!("-"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Worker { config, index } => {
            let config: CampaignConfig = serde_json::from_str(&config)?;
            let output = match run_worker_stripe(&config, index).await {
                Ok(records) => WorkerOutput { records, error: None },
                Err(e) => WorkerOutput { records: Vec::new(), error: Some(e) },
            };
            println!("{}", serde_json::to_string(&output)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            server,
            token,
            objective,
            workers,
            trials,
            studies,
            sampler,
            grid_points,
            pruner,
            warmup_steps,
            min_trials,
            steps,
            fail_rate,
            seed,
            name,
            fork,
            report: report_file,
        } => {
            let prefix = name.unwrap_or_else(|| {
                let ms = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_millis())
                    .unwrap_or_default();
                format!("bench-{ms}")
            });
            let config = CampaignConfig {
                server,
                token,
                objective,
                workers,
                trials,
                studies,
                sampler: match sampler {
                    SamplerArg::Tpe => SamplerChoice::Tpe,
                    SamplerArg::Random => SamplerChoice::Random,
                    SamplerArg::Grid => SamplerChoice::Grid { points: grid_points },
                },
                pruner: match pruner {
                    PrunerArg::None => PrunerChoice::None,
                    PrunerArg::Median => PrunerChoice::Median { n_warmup_steps: warmup_steps, n_min_trials: min_trials },
                },
                seed,
                steps,
                fail_rate,
                study_prefix: prefix,
            };
            let result = if fork {
                run_campaign_forked(&config, &std::env::current_exe()?).await
            } else {
                run_campaign(&config).await
            };
            let report = match result {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("bench: {e}");
                    return Ok(exit_code(&e));
                }
            };
            print!("{report}");
            if let Some(path) = report_file {
                std::fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
            }
            Ok(if report.reconciliation.ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
