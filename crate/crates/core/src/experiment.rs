//! Stage orchestration: policy fit, lower bound, integrand fit, dual bounds.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, StageSeeds};
use crate::dual_ab::ab_upper_bound;
use crate::dual_tm::{fit_integrands, tm_upper_bound, MartingaleModel, MartingaleTerms, TmConfig};
use crate::error::Result;
use crate::estimate::BoundEstimate;
use crate::model::{simulate_paths, DiscretizationGrids, PathBundle};
use crate::policy::{fit_policy, lower_bound, DateFit, Policy};

/// Result of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seeds: StageSeeds,
    /// Undiscounted payoff of exercising at time zero.
    pub immediate_exercise: f64,
    pub estimates: Vec<BoundEstimate>,
    pub policy_fits: Vec<DateFit>,
    pub jump_part_disabled: Option<bool>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// A validated configuration with its grids and stage seeds. Each stage
/// method reproduces its output exactly from the recorded seeds.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    grids: DiscretizationGrids,
    seeds: StageSeeds,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grids = DiscretizationGrids::new(&cfg.model, cfg.grids)?;
        let seeds = cfg.seeds();
        Ok(Self { cfg, grids, seeds })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn grids(&self) -> &DiscretizationGrids {
        &self.grids
    }

    pub fn seeds(&self) -> StageSeeds {
        self.seeds
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<PathBundle> {
        simulate_paths(&self.cfg.model, &self.grids, n, seed)
    }

    pub fn fit_policy(&self) -> Result<Policy> {
        let paths = self.simulate(self.cfg.samples.n_fit_policy, self.seeds.policy_fit)?;
        fit_policy(&paths, &self.cfg.model, &self.cfg.pricer, self.cfg.policy)
    }

    pub fn lower_bound(&self, policy: &Policy) -> Result<BoundEstimate> {
        let paths = self.simulate(self.cfg.samples.n1_lb, self.seeds.lower_bound)?;
        lower_bound(policy, &paths)
    }

    pub fn integrand_paths(&self) -> Result<PathBundle> {
        self.simulate(self.cfg.samples.n_fit_integrands, self.seeds.integrand_fit)
    }

    pub fn tm_paths(&self) -> Result<PathBundle> {
        self.simulate(self.cfg.samples.nbar_tm, self.seeds.tm_eval)
    }

    pub fn fit_martingale(&self, policy: &Policy, tm: TmConfig) -> Result<MartingaleModel> {
        fit_integrands(policy, &self.integrand_paths()?, tm)
    }

    pub fn tm_bound(
        &self,
        model: &MartingaleModel,
        terms: MartingaleTerms,
    ) -> Result<BoundEstimate> {
        tm_upper_bound(model, &self.tm_paths()?, terms)
    }

    pub fn ab_bound(&self, policy: &Policy) -> Result<BoundEstimate> {
        ab_upper_bound(policy, &self.grids, self.cfg.nested(), self.seeds.ab)
    }

    /// Runs every requested stage and writes the configured output files.
    pub fn run(&self) -> Result<ExperimentReport> {
        let cfg = &self.cfg;
        let timed = |est: BoundEstimate, start: Instant| {
            if cfg.record_timings {
                est.with_wall_time(start.elapsed().as_secs_f64())
            } else {
                est
            }
        };
        let policy = self.fit_policy()?;
        let mut estimates = Vec::new();
        if cfg.bounds.lb {
            let start = Instant::now();
            estimates.push(timed(self.lower_bound(&policy)?, start));
        }
        let mut jump_part_disabled = None;
        if cfg.bounds.tm {
            let start = Instant::now();
            let model = self.fit_martingale(&policy, cfg.tm)?;
            jump_part_disabled = Some(model.diagnostics().jump_part_disabled);
            estimates.push(timed(self.tm_bound(&model, cfg.terms)?, start));
            if let Some(path) = &cfg.output.martingale {
                std::fs::write(path, serde_json::to_string(&model)?)?;
            }
        }
        if cfg.bounds.ab {
            let start = Instant::now();
            estimates.push(timed(self.ab_bound(&policy)?, start));
        }
        if let Some(path) = &cfg.output.policy {
            std::fs::write(path, serde_json::to_string(&policy)?)?;
        }
        let report = ExperimentReport {
            config: cfg.clone(),
            seeds: self.seeds,
            immediate_exercise: cfg.model.payoff(&cfg.model.x0),
            estimates,
            policy_fits: policy.diagnostics().to_vec(),
            jump_part_disabled,
        };
        if let Some(path) = &cfg.output.report {
            std::fs::write(path, report.to_json()?)?;
        }
        Ok(report)
    }
}

/// Validates `cfg` and runs every requested stage.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Experiment::new(cfg.clone())?.run()
}
