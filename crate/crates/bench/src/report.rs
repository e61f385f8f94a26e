use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::campaign::{study_reports, worker_reports, CampaignConfig, PrunerChoice, SamplerChoice, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub name: String,
    pub study_id: Option<String>,
    pub asks: u64,
    pub completed: u64,
    pub pruned: u64,
    pub failed: u64,
    pub best_objective: Option<f64>,
    pub total_steps: u64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerReport {
    pub worker: usize,
    pub asks: u64,
    pub completed: u64,
    pub pruned: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub ok: bool,
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub objective: String,
    pub sampler: SamplerChoice,
    pub pruner: PrunerChoice,
    pub seed: u64,
    pub workers: usize,
    pub trials_requested: u64,
    pub steps_per_trial: u64,
    pub wall_clock_seconds: f64,
    pub studies: Vec<StudyReport>,
    pub per_worker: Vec<WorkerReport>,
    /// Every trial, ordered by study then index.
    pub trials: Vec<TrialRecord>,
    pub reconciliation: Reconciliation,
}

impl CampaignReport {
    pub fn build(config: &CampaignConfig, mut trials: Vec<TrialRecord>, wall_clock_seconds: f64) -> Self {
        trials.sort_by_key(|r| (r.study, r.trial_index));
        CampaignReport {
            objective: config.objective.to_string(),
            sampler: config.sampler,
            pruner: config.pruner,
            seed: config.seed,
            workers: config.workers,
            trials_requested: config.trials,
            steps_per_trial: config.steps,
            wall_clock_seconds,
            studies: study_reports(config, &trials),
            per_worker: worker_reports(config, &trials),
            trials,
            reconciliation: Reconciliation { ok: true, problems: Vec::new() },
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.studies.iter().map(|s| s.total_steps).sum()
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.studies.iter().filter_map(|s| s.best_objective).reduce(f64::min)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"))
}

impl fmt::Display for CampaignReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(
            out,
            "objective {}  workers {}  trials {}  seed {}  wall {:.2}s",
            self.objective, self.workers, self.trials_requested, self.seed, self.wall_clock_seconds
        )?;
        writeln!(
            out,
            "{:<28} {:>6} {:>9} {:>6} {:>6} {:>14} {:>8} {:>8}",
            "study", "asks", "completed", "pruned", "failed", "best", "steps", "wall(s)"
        )?;
        for s in &self.studies {
            writeln!(
                out,
                "{:<28} {:>6} {:>9} {:>6} {:>6} {:>14} {:>8} {:>8.2}",
                s.name,
                s.asks,
                s.completed,
                s.pruned,
                s.failed,
                opt(s.best_objective),
                s.total_steps,
                s.wall_clock_seconds
            )?;
        }
        if !self.per_worker.is_empty() {
            writeln!(out, "{:<8} {:>6} {:>9} {:>6} {:>6}", "worker", "asks", "completed", "pruned", "failed")?;
            for w in &self.per_worker {
                writeln!(out, "{:<8} {:>6} {:>9} {:>6} {:>6}", w.worker, w.asks, w.completed, w.pruned, w.failed)?;
            }
        }
        if self.reconciliation.ok {
            writeln!(out, "reconciliation: ok")?;
        } else {
            writeln!(out, "reconciliation: FAILED")?;
            for p in &self.reconciliation.problems {
                writeln!(out, "  {p}")?;
            }
        }
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Objective;
    use hopaas_core::TrialState;

    fn record(worker: usize, study: usize, index: u64, state: TrialState, objective: Option<f64>) -> TrialRecord {
        TrialRecord {
            worker,
            study,
            study_id: format!("s{study}"),
            trial_id: format!("s{study}-{index}"),
            trial_index: index,
            params: Default::default(),
            state,
            objective,
            steps: 3,
            closed_after: index as f64,
        }
    }

    #[test]
    fn aggregates_by_study_and_worker() {
        let mut c = CampaignConfig::new("http://x", "t", Objective::Sphere);
        c.trials = 4;
        c.studies = 2;
        c.workers = 2;
        let trials = vec![
            record(0, 0, 1, TrialState::Completed, Some(2.0)),
            record(1, 0, 0, TrialState::Completed, Some(1.0)),
            record(0, 1, 0, TrialState::Pruned, None),
            record(1, 1, 1, TrialState::Failed, None),
        ];
        let r = CampaignReport::build(&c, trials, 1.0);
        assert_eq!(r.studies[0].completed, 2);
        assert_eq!(r.studies[0].best_objective, Some(1.0));
        assert_eq!((r.studies[1].pruned, r.studies[1].failed), (1, 1));
        assert_eq!(r.studies[1].best_objective, None);
        assert_eq!(r.per_worker[0].asks, 2);
        assert_eq!(r.total_steps(), 12);
        assert_eq!(r.trials[0].trial_id, "s0-0");
        assert!(r.to_string().contains("reconciliation: ok"));
        let back: CampaignReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
