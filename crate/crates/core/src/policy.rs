//! Regression policy for the primal problem and the lower-bound estimator.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::EuroPricerConfig;
use crate::error::{Error, Result};
use crate::estimate::{BoundEstimate, BoundKind};
use crate::model::{DiscretizationGrids, ModelParams, PathBundle, PathView};
use crate::regression::{solve_least_squares, BasisEvaluator, BasisExtras, BasisSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Regress only on in-the-money paths.
    pub itm_only: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { itm_only: true }
    }
}

/// Per-date fit information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateFit {
    pub date: usize,
    /// Paths used in the regression.
    pub n_regressed: usize,
    /// The in-the-money set was too small and all paths were used instead.
    pub all_paths_fallback: bool,
    pub effective_rank: usize,
    pub residual_rms: f64,
}

/// Serialized form of a [`Policy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub params: ModelParams,
    pub pricer: EuroPricerConfig,
    pub config: PolicyConfig,
    /// Seed of the bundle the regressions were fitted on.
    pub fit_seed: Option<u64>,
    /// Continuation coefficients for dates `1..J`, in date order. An empty
    /// vector disables early exercise at that date.
    pub coefficients: Vec<Vec<f64>>,
    pub diagnostics: Vec<DateFit>,
}

/// Exercise rule `stop at T_j iff h > 0 and e^{-r T_j} h >= continuation`.
///
/// No decision is taken at `T_0`; at `T_J` the holder exercises iff the
/// payoff is positive.
#[derive(Debug, Clone)]
pub struct Policy {
    doc: PolicyDocument,
    basis: BasisEvaluator,
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = PolicyDocument::deserialize(d)?;
        Policy::from_document(doc).map_err(serde::de::Error::custom)
    }
}

impl Policy {
    pub fn from_document(doc: PolicyDocument) -> Result<Self> {
        doc.params.validate()?;
        let basis = BasisEvaluator::new(BasisSpec::LsPolicy, &doc.params, &doc.pricer)?;
        let j = doc.params.exercise_intervals;
        if doc.coefficients.len() != j - 1 {
            return Err(Error::param(format!(
                "policy needs {} coefficient vectors, got {}",
                j - 1,
                doc.coefficients.len()
            )));
        }
        if doc
            .coefficients
            .iter()
            .any(|c| !c.is_empty() && c.len() != basis.dimension())
        {
            return Err(Error::param(
                "policy coefficient length differs from basis dimension",
            ));
        }
        Ok(Self { doc, basis })
    }

    /// Policy that never exercises before maturity.
    pub fn maturity_only(params: &ModelParams, pricer: &EuroPricerConfig) -> Result<Self> {
        params.validate()?;
        let j = params.exercise_intervals;
        Self::from_document(PolicyDocument {
            params: params.clone(),
            pricer: *pricer,
            config: PolicyConfig::default(),
            fit_seed: None,
            coefficients: vec![Vec::new(); j - 1],
            diagnostics: Vec::new(),
        })
    }

    pub fn document(&self) -> &PolicyDocument {
        &self.doc
    }

    pub fn params(&self) -> &ModelParams {
        &self.doc.params
    }

    pub fn diagnostics(&self) -> &[DateFit] {
        &self.doc.diagnostics
    }

    pub fn n_dates(&self) -> usize {
        self.doc.params.exercise_intervals
    }

    /// Fitted discounted continuation value at `T_j`, `0 < j < J`.
    pub fn continuation(&self, j: usize, x: &[f64]) -> f64 {
        let coef = &self.doc.coefficients[j - 1];
        if coef.is_empty() {
            return f64::INFINITY;
        }
        let mut row = vec![0.0; coef.len()];
        self.basis
            .row(self.doc.params.exercise_date(j), x, no_extras(), &mut row);
        dot(&row, coef)
    }

    /// Whether the rule stops at `T_j` in state `x`.
    pub fn stops_at(&self, j: usize, x: &[f64]) -> bool {
        let p = &self.doc.params;
        let h = p.payoff(x);
        if j == 0 || h <= 0.0 {
            return false;
        }
        if j == p.exercise_intervals {
            return true;
        }
        p.discount(p.exercise_date(j)) * h >= self.continuation(j, x)
    }

    /// `tau_j`: first date `>= max(j, 1)` at which the rule stops, else `J`.
    pub fn exercise_from(&self, path: &PathView<'_>, j: usize) -> usize {
        let last = self.n_dates();
        (j.max(1)..last)
            .find(|&d| self.stops_at(d, path.exercise_price(d)))
            .unwrap_or(last)
    }

    /// `tau_1`, the exercise date of the rule along `path`.
    pub fn exercise_time(&self, path: &PathView<'_>) -> usize {
        self.exercise_from(path, 1)
    }

    /// `tau_j` for every `j = 0..=J`.
    pub fn stopping_schedule(&self, path: &PathView<'_>) -> Vec<usize> {
        let last = self.n_dates();
        let mut out = vec![last; last + 1];
        let mut next = last;
        for j in (1..last).rev() {
            if self.stops_at(j, path.exercise_price(j)) {
                next = j;
            }
            out[j] = next;
        }
        out[0] = out[1.min(last)];
        out
    }

    /// Discounted payoff `e^{-r T_j} h(X_{T_j})` along `path`.
    pub fn discounted_payoff(&self, path: &PathView<'_>, j: usize) -> f64 {
        let p = &self.doc.params;
        p.discount(p.exercise_date(j)) * p.payoff(path.exercise_price(j))
    }

    /// Fails when `paths` is the bundle the policy was fitted on.
    pub fn check_independent(&self, paths: &PathBundle) -> Result<()> {
        if self.doc.fit_seed == Some(paths.seed()) {
            return Err(Error::SeedReuse(format!(
                "bundle with seed {} was used to fit the policy",
                paths.seed()
            )));
        }
        Ok(())
    }

    /// Fails unless `grids` is the discretization this policy's model builds.
    pub fn check_grids(&self, grids: &DiscretizationGrids) -> Result<()> {
        DiscretizationGrids::new(&self.doc.params, grids.spec())?.ensure_same(grids)
    }
}

fn no_extras() -> BasisExtras {
    BasisExtras {
        next_exercise: f64::NAN,
        cell_rep: 0.0,
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the continuation regressions by backward induction on `paths`.
///
/// Targets are realized discounted payoffs under the already fitted future
/// rule. Dates with fewer in-the-money paths than basis functions fall back
/// to all paths.
pub fn fit_policy(
    paths: &PathBundle,
    params: &ModelParams,
    pricer: &EuroPricerConfig,
    config: PolicyConfig,
) -> Result<Policy> {
    params.validate()?;
    DiscretizationGrids::new(params, paths.grids().spec())?.ensure_same(paths.grids())?;
    let basis = BasisEvaluator::new(BasisSpec::LsPolicy, params, pricer)?;
    let dim = basis.dimension();
    let last = params.exercise_intervals;
    let n = paths.len();

    let mut cash: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = paths.path(i).exercise_price(last);
            params.discount(params.exercise_date(last)) * params.payoff(x)
        })
        .collect();
    let mut coefficients = vec![Vec::new(); last.saturating_sub(1)];
    let mut diagnostics = Vec::new();

    for j in (1..last).rev() {
        let t = params.exercise_date(j);
        let df = params.discount(t);
        let rows: Vec<(f64, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = paths.path(i).exercise_price(j);
                let mut row = vec![0.0; dim];
                basis.row(t, x, no_extras(), &mut row);
                (params.payoff(x), row)
            })
            .collect();
        let itm: Vec<usize> = (0..n).filter(|&i| rows[i].0 > 0.0).collect();
        let fallback = !config.itm_only || itm.len() < dim;
        let used: Vec<usize> = if fallback { (0..n).collect() } else { itm };
        let design = DMatrix::from_fn(used.len(), dim, |r, c| rows[used[r]].1[c]);
        let target: Vec<f64> = used.iter().map(|&i| cash[i]).collect();
        let fit = solve_least_squares(&design, &target)?;
        for (i, (h, row)) in rows.iter().enumerate() {
            if *h > 0.0 && df * h >= dot(row, &fit.coefficients) {
                cash[i] = df * h;
            }
        }
        diagnostics.push(DateFit {
            date: j,
            n_regressed: used.len(),
            all_paths_fallback: fallback && config.itm_only,
            effective_rank: fit.effective_rank,
            residual_rms: fit.residual_rms,
        });
        coefficients[j - 1] = fit.coefficients;
    }
    diagnostics.reverse();

    Ok(Policy {
        doc: PolicyDocument {
            params: params.clone(),
            pricer: *pricer,
            config,
            fit_seed: Some(paths.seed()),
            coefficients,
            diagnostics,
        },
        basis,
    })
}

/// Mean discounted payoff of `policy` on `paths`, floored by immediate
/// exercise at `T_0`.
pub fn lower_bound(policy: &Policy, paths: &PathBundle) -> Result<BoundEstimate> {
    policy.check_grids(paths.grids())?;
    policy.check_independent(paths)?;
    let samples: Vec<f64> = (0..paths.len())
        .into_par_iter()
        .map(|i| {
            let path = paths.path(i);
            policy.discounted_payoff(&path, policy.exercise_time(&path))
        })
        .collect();
    let mut est = BoundEstimate::from_samples(BoundKind::Lower, &samples, paths.seed());
    let p = policy.params();
    let immediate = p.payoff(&p.x0);
    if immediate > est.mean {
        est.mean = immediate;
        est.stderr = 0.0;
        est.ci95_halfwidth = 0.0;
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_paths, GridSpec};

    fn setup(params: &ModelParams, n: usize, seed: u64) -> PathBundle {
        let grids = DiscretizationGrids::new(params, GridSpec::default()).unwrap();
        simulate_paths(params, &grids, n, seed).unwrap()
    }

    #[test]
    fn single_interval_has_no_coefficients() {
        let mut p = ModelParams::table(1, 1.0, 40.0);
        p.exercise_intervals = 1;
        let paths = setup(&p, 200, 1);
        let pol = fit_policy(
            &paths,
            &p,
            &EuroPricerConfig::default(),
            PolicyConfig::default(),
        )
        .unwrap();
        assert!(pol.document().coefficients.is_empty());
        for path in paths.paths() {
            assert_eq!(pol.exercise_time(&path), 1);
        }
    }

    #[test]
    fn zero_strike_never_exercises_early() {
        let mut p = ModelParams::table(1, 1.0, 40.0);
        p.sk = 0.0;
        let paths = setup(&p, 300, 2);
        let pol = fit_policy(
            &paths,
            &p,
            &EuroPricerConfig::default(),
            PolicyConfig::default(),
        )
        .unwrap();
        assert!(pol.diagnostics().iter().all(|d| d.all_paths_fallback));
        for path in paths.paths() {
            assert_eq!(pol.exercise_time(&path), p.exercise_intervals);
        }
        assert!(matches!(
            lower_bound(&pol, &paths),
            Err(Error::SeedReuse(_))
        ));
        let lb = lower_bound(&pol, &setup(&p, 300, 7)).unwrap();
        assert_eq!(lb.mean, 0.0);
        assert_eq!(lb.stderr, 0.0);
    }

    #[test]
    fn schedule_matches_exercise_from() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let fit = setup(&p, 4000, 3);
        let pol = fit_policy(
            &fit,
            &p,
            &EuroPricerConfig::default(),
            PolicyConfig::default(),
        )
        .unwrap();
        let eval = setup(&p, 200, 4);
        for path in eval.paths() {
            let sched = pol.stopping_schedule(&path);
            for (j, &tau) in sched.iter().enumerate() {
                assert_eq!(tau, pol.exercise_from(&path, j));
                assert!(tau >= j);
            }
        }
    }

    #[test]
    fn ties_exercise() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let dim = BasisSpec::LsPolicy.dimension(1);
        let x = [35.0];
        let j = 3;
        let value = p.discount(p.exercise_date(j)) * p.payoff(&x);
        let mut coefficients = vec![vec![0.0; dim]; 9];
        // Intercept-only continuation equal to the discounted payoff.
        coefficients[j - 1][0] = value;
        let pol = Policy::from_document(PolicyDocument {
            params: p.clone(),
            pricer: EuroPricerConfig::default(),
            config: PolicyConfig::default(),
            fit_seed: None,
            coefficients,
            diagnostics: Vec::new(),
        })
        .unwrap();
        assert!(pol.stops_at(j, &x));
        assert!(!pol.stops_at(j, &[45.0]));
        assert!(!pol.stops_at(0, &x));
        assert!(pol.stops_at(10, &x));
    }

    #[test]
    fn document_round_trip() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let fit = setup(&p, 2000, 5);
        let pol = fit_policy(
            &fit,
            &p,
            &EuroPricerConfig::default(),
            PolicyConfig::default(),
        )
        .unwrap();
        let json = serde_json::to_string(&pol).unwrap();
        let back: Policy = serde_json::from_str(&json).unwrap();
        assert_eq!(back.document(), pol.document());
        let bad = json.replacen("\"coefficients\":[[", "\"coefficients\":[[1.0,", 1);
        assert!(serde_json::from_str::<Policy>(&bad).is_err());
    }

    #[test]
    fn foreign_grid_rejected() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let mut q = p.clone();
        q.lambda = 3.0;
        let paths = setup(&q, 50, 6);
        assert!(fit_policy(
            &paths,
            &p,
            &EuroPricerConfig::default(),
            PolicyConfig::default()
        )
        .is_err());
    }
}
