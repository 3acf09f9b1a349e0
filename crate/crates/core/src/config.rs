//! Experiment configuration and seed derivation.

use serde::{Deserialize, Serialize};

use crate::analytic::EuroPricerConfig;
use crate::dual_ab::NestedConfig;
use crate::dual_tm::{MartingaleTerms, TmConfig};
use crate::error::{Error, Result};
use crate::model::{DiscretizationGrids, GridSpec, ModelParams};
use crate::policy::PolicyConfig;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSizes {
    /// Paths for the continuation regressions.
    pub n_fit_policy: usize,
    /// Paths for the integrand regressions.
    pub n_fit_integrands: usize,
    /// Paths for the lower bound.
    pub n1_lb: usize,
    /// Outer paths of the nested bound.
    pub n2_outer: usize,
    /// Inner paths per conditional expectation of the nested bound.
    pub n3_inner: usize,
    /// Paths for the true-martingale bound.
    pub nbar_tm: usize,
}

impl Default for SampleSizes {
    fn default() -> Self {
        Self {
            n_fit_policy: 50_000,
            n_fit_integrands: 50_000,
            n1_lb: 100_000,
            n2_outer: 1_000,
            n3_inner: 500,
            nbar_tm: 2_500,
        }
    }
}

impl SampleSizes {
    /// Every size multiplied by `scale`, with small floors so each stage
    /// still runs.
    pub fn scaled(&self, scale: f64) -> Self {
        let s = |n: usize, floor: usize| ((n as f64 * scale).round() as usize).max(floor);
        Self {
            n_fit_policy: s(self.n_fit_policy, 200),
            n_fit_integrands: s(self.n_fit_integrands, 200),
            n1_lb: s(self.n1_lb, 200),
            n2_outer: s(self.n2_outer, 10),
            n3_inner: s(self.n3_inner, 10),
            nbar_tm: s(self.nbar_tm, 100),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSelection {
    pub lb: bool,
    pub tm: bool,
    pub ab: bool,
}

impl Default for BoundSelection {
    fn default() -> Self {
        Self {
            lb: true,
            tm: true,
            ab: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub report: Option<String>,
    pub policy: Option<String>,
    pub martingale: Option<String>,
}

/// Full description of one run. Every field has a default; the defaults are
/// the reference single-asset experiment at `lambda = 1, X0 = 40`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub grids: GridSpec,
    pub pricer: EuroPricerConfig,
    pub samples: SampleSizes,
    pub policy: PolicyConfig,
    pub tm: TmConfig,
    pub terms: MartingaleTerms,
    pub bounds: BoundSelection,
    pub seed: u64,
    /// Adds wall times to the estimates. Reports are then no longer
    /// byte-reproducible.
    pub record_timings: bool,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            grids: GridSpec::default(),
            pricer: EuroPricerConfig::default(),
            samples: SampleSizes::default(),
            policy: PolicyConfig::default(),
            tm: TmConfig::default(),
            terms: MartingaleTerms::Complete,
            bounds: BoundSelection::default(),
            seed: 20_240_601,
            record_timings: false,
            output: OutputPaths::default(),
        }
    }
}

/// Seeds of the independent sampling stages, all derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub policy_fit: u64,
    pub integrand_fit: u64,
    pub lower_bound: u64,
    pub tm_eval: u64,
    pub ab: u64,
}

impl StageSeeds {
    pub fn derive(root: u64) -> Self {
        Self {
            policy_fit: derive_seed(root, &[1]),
            integrand_fit: derive_seed(root, &[2]),
            lower_bound: derive_seed(root, &[3]),
            tm_eval: derive_seed(root, &[4]),
            ab: derive_seed(root, &[5]),
        }
    }

    pub fn all(&self) -> [u64; 5] {
        [
            self.policy_fit,
            self.integrand_fit,
            self.lower_bound,
            self.tm_eval,
            self.ab,
        ]
    }

    fn pairwise_distinct(&self) -> bool {
        let all = self.all();
        all.iter()
            .enumerate()
            .all(|(i, a)| all[i + 1..].iter().all(|b| a != b))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn nested(&self) -> NestedConfig {
        NestedConfig {
            n_outer: self.samples.n2_outer,
            n_inner: self.samples.n3_inner,
        }
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::derive(self.seed)
    }

    /// Every violated constraint, collected in one pass.
    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .model
            .violations()
            .into_iter()
            .map(|e| format!("model: {e}"))
            .collect();
        v.extend(
            self.pricer
                .violations()
                .into_iter()
                .map(|e| format!("pricer: {e}")),
        );
        if !(self.grids.euler_step > 0.0 && self.grids.euler_step.is_finite()) {
            v.push("grids: euler_step must be finite and > 0".into());
        }
        if self.grids.cells < 1 {
            v.push("grids: cells must be >= 1".into());
        }
        if v.is_empty() {
            if let Err(e) = DiscretizationGrids::new(&self.model, self.grids) {
                v.push(format!("grids: {e}"));
            }
        }
        let s = &self.samples;
        for (name, value) in [
            ("n_fit_policy", s.n_fit_policy),
            ("n_fit_integrands", s.n_fit_integrands),
            ("n1_lb", s.n1_lb),
            ("n2_outer", s.n2_outer),
            ("n3_inner", s.n3_inner),
            ("nbar_tm", s.nbar_tm),
        ] {
            if value < 1 {
                v.push(format!("samples: {name} must be >= 1"));
            }
        }
        if self.bounds.ab && s.n3_inner < 2 {
            v.push("samples: n3_inner must be >= 2 when the nested bound is requested".into());
        }
        if !(self.bounds.lb || self.bounds.tm || self.bounds.ab) {
            v.push("bounds: nothing to compute".into());
        }
        if !self.seeds().pairwise_distinct() {
            v.push("seed: derived stage seeds collide".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.model.x0, vec![40.0]);
        assert_eq!(cfg.samples.n1_lb, 100_000);
    }

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(
            ExperimentConfig::from_json("{}").unwrap(),
            ExperimentConfig::default()
        );
        assert!(ExperimentConfig::from_json(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn all_violations_reported_together() {
        let mut cfg = ExperimentConfig::default();
        cfg.samples.n3_inner = 0;
        cfg.samples.nbar_tm = 0;
        cfg.bounds.ab = true;
        cfg.model.sigma = -1.0;
        cfg.grids.euler_step = 0.3;
        let v = cfg.violations();
        assert!(v.iter().any(|e| e.contains("n3_inner must be >= 2")));
        assert!(v.iter().any(|e| e.contains("nbar_tm")));
        assert!(v.iter().any(|e| e.starts_with("model:")));
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn non_divisible_step_reported() {
        let mut cfg = ExperimentConfig::default();
        cfg.grids.euler_step = 0.03;
        assert!(cfg.violations().iter().any(|e| e.starts_with("grids:")));
    }

    #[test]
    fn stage_seeds_distinct() {
        for root in [0u64, 1, 42, u64::MAX] {
            assert!(StageSeeds::derive(root).pairwise_distinct());
        }
    }

    #[test]
    fn scaling_keeps_floors() {
        let s = SampleSizes::default().scaled(1e-6);
        assert_eq!(s.n3_inner, 10);
        assert_eq!(s.n_fit_policy, 200);
        assert_eq!(SampleSizes::default().scaled(1.0), SampleSizes::default());
    }
}
