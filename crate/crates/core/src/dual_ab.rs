//! Nested-simulation dual bound used as the benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{BoundEstimate, BoundKind};
use crate::model::{simulate_paths, DiscretizationGrids, PathStepper, PathView};
use crate::policy::Policy;
use crate::rng::{derive_seed, path_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedConfig {
    pub n_outer: usize,
    pub n_inner: usize,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            n_outer: 1000,
            n_inner: 500,
        }
    }
}

impl NestedConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_outer < 1 {
            v.push("n_outer must be >= 1".into());
        }
        if self.n_inner < 2 {
            v.push("n_inner must be >= 2".into());
        }
        v
    }
}

const OUTER_TAG: u64 = 0;
const INNER_TAG: u64 = 1;

/// Inner estimate of `E_{T_j}[H(tau_{j+1})]` from state `x` at `T_j`.
fn inner_continuation(
    policy: &Policy,
    grids: &DiscretizationGrids,
    j: usize,
    x: &[f64],
    n_inner: usize,
    seed: u64,
) -> f64 {
    let params = policy.params();
    let time = &grids.time;
    let last = time.n_exercise_intervals();
    let spi = time.steps_per_interval();
    let start = time.exercise_index()[j];
    let mut prices = vec![0.0; x.len()];
    let mut total = 0.0;
    for k in 0..n_inner {
        let mut rng = path_rng(seed, k as u64);
        let mut stepper = PathStepper::new(params, grids, start, x, &mut rng);
        let mut value = 0.0;
        for d in j + 1..=last {
            for _ in 0..spi {
                stepper.step(&mut rng, None, None);
            }
            stepper.write_prices(&mut prices);
            if policy.stops_at(d, &prices) {
                value = params.discount(time.exercise_time(d)) * params.payoff(&prices);
                break;
            }
        }
        total += value;
    }
    total / n_inner as f64
}

/// Pathwise `max_j (H_j - M_j)` with `M` built from inner simulations.
fn outer_sample(
    policy: &Policy,
    grids: &DiscretizationGrids,
    path: &PathView<'_>,
    n_inner: usize,
    seed: u64,
) -> f64 {
    let params = policy.params();
    let time = &grids.time;
    let last = time.n_exercise_intervals();
    let h: Vec<f64> = (0..=last)
        .map(|j| params.discount(time.exercise_time(j)) * params.payoff(path.exercise_price(j)))
        .collect();
    let cont: Vec<f64> = (0..last)
        .map(|j| {
            let s = derive_seed(seed, &[INNER_TAG, path.index() as u64, j as u64]);
            inner_continuation(policy, grids, j, path.exercise_price(j), n_inner, s)
        })
        .collect();
    let mut m = 0.0;
    let mut best = h[0];
    for j in 0..last {
        let v_next = if j + 1 == last || policy.stops_at(j + 1, path.exercise_price(j + 1)) {
            h[j + 1]
        } else {
            cont[j + 1]
        };
        m += v_next - cont[j];
        best = best.max(h[j + 1] - m);
    }
    best
}

/// Dual bound with the martingale of the policy's value process, whose
/// conditional expectations are estimated by inner simulation on `grids`.
pub fn ab_upper_bound(
    policy: &Policy,
    grids: &DiscretizationGrids,
    cfg: NestedConfig,
    seed: u64,
) -> Result<BoundEstimate> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::InvalidConfig(v));
    }
    policy.check_grids(grids)?;
    let outer = simulate_paths(
        policy.params(),
        grids,
        cfg.n_outer,
        derive_seed(seed, &[OUTER_TAG]),
    )?;
    let samples: Vec<f64> = (0..outer.len())
        .into_par_iter()
        .map(|i| outer_sample(policy, grids, &outer.path(i), cfg.n_inner, seed))
        .collect();
    Ok(BoundEstimate::from_samples(
        BoundKind::NestedUpper,
        &samples,
        seed,
    ))
}
