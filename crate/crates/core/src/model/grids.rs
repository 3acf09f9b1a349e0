use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::error::{Error, Result};
use crate::normal;

const DIVISIBILITY_TOL: f64 = 1e-12;

/// Equidistant time partition of `[0, T]` that contains every exercise date.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    step: f64,
    exercise_index: Vec<usize>,
}

impl TimeGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Length of step `l`, i.e. `t_{l+1} - t_l`.
    #[inline]
    pub fn dt(&self, l: usize) -> f64 {
        self.nodes[l + 1] - self.nodes[l]
    }

    /// Grid index of each exercise date `T_0..=T_J`.
    pub fn exercise_index(&self) -> &[usize] {
        &self.exercise_index
    }

    pub fn n_exercise_intervals(&self) -> usize {
        self.exercise_index.len() - 1
    }

    pub fn steps_per_interval(&self) -> usize {
        self.exercise_index[1] - self.exercise_index[0]
    }

    /// `T_j`, read off the node it sits on.
    #[inline]
    pub fn exercise_time(&self, j: usize) -> f64 {
        self.nodes[self.exercise_index[j]]
    }

    /// Exercise interval `j` with `T_j <= t_l < T_{j+1}`.
    #[inline]
    pub fn interval_of_step(&self, l: usize) -> usize {
        l / self.steps_per_interval()
    }
}

/// Builds an equidistant grid of spacing `euler_step` on `[0, maturity]` whose
/// nodes include the `intervals + 1` equally spaced exercise dates.
pub fn build_time_grid(maturity: f64, intervals: usize, euler_step: f64) -> Result<TimeGrid> {
    if !(maturity > 0.0 && maturity.is_finite()) {
        return Err(Error::param("maturity must be finite and > 0"));
    }
    if intervals == 0 {
        return Err(Error::param("need at least one exercise interval"));
    }
    if !(euler_step > 0.0 && euler_step.is_finite()) {
        return Err(Error::param("euler_step must be finite and > 0"));
    }
    let interval = maturity / intervals as f64;
    let ratio = interval / euler_step;
    let per_interval = ratio.round();
    if per_interval < 1.0 || (ratio - per_interval).abs() > DIVISIBILITY_TOL * ratio {
        return Err(Error::NonDivisibleStep {
            step: euler_step,
            interval,
        });
    }
    let per_interval = per_interval as usize;
    let n_steps = per_interval * intervals;
    let nodes: Vec<f64> = (0..=n_steps)
        .map(|l| {
            if l == n_steps {
                maturity
            } else {
                l as f64 * maturity / n_steps as f64
            }
        })
        .collect();
    let exercise_index = (0..=intervals).map(|j| j * per_interval).collect();
    Ok(TimeGrid {
        nodes,
        step: maturity / n_steps as f64,
        exercise_index,
    })
}

/// Equiprobable partition of the log-amplitude line into `K` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacePartition {
    bounds: Vec<f64>,
    reps: Vec<f64>,
    mass: Vec<f64>,
    intensity: Vec<f64>,
}

impl SpacePartition {
    pub fn n_cells(&self) -> usize {
        self.reps.len()
    }

    /// `K + 1` cell bounds; the outer ones are infinite.
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Representative log-amplitude of each cell.
    pub fn reps(&self) -> &[f64] {
        &self.reps
    }

    /// Probability mass of each cell under the amplitude law.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Intensity `mu([t_l, t_{l+1}] x A_k)` of one Euler step, per cell.
    pub fn step_intensity(&self) -> &[f64] {
        &self.intensity
    }

    /// Cell containing log-amplitude `y`. Cells are `[b_k, b_{k+1})`.
    #[inline]
    pub fn cell_of(&self, y: f64) -> usize {
        let inner = &self.bounds[1..self.bounds.len() - 1];
        inner.partition_point(|&b| b <= y)
    }
}

/// Cells are bounded by the `k/K` quantiles of `Normal(m, theta^2)`, and each
/// cell is represented by the conditional mean of the amplitude inside it.
pub fn build_space_partition(
    m: f64,
    theta: f64,
    lambda: f64,
    cells: usize,
    euler_step: f64,
) -> Result<SpacePartition> {
    if cells == 0 {
        return Err(Error::param("amplitude partition needs at least one cell"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::param("theta must be finite and > 0"));
    }
    if lambda < 0.0 || euler_step <= 0.0 {
        return Err(Error::param(
            "lambda and euler_step must be nonnegative / positive",
        ));
    }
    let kf = cells as f64;
    let z: Vec<f64> = (0..=cells)
        .map(|k| match k {
            0 => f64::NEG_INFINITY,
            k if k == cells => f64::INFINITY,
            k => normal::quantile(k as f64 / kf),
        })
        .collect();
    let bounds = z.iter().map(|&q| m + theta * q).collect();
    let reps = z
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let mass = normal::cdf(b) - normal::cdf(a);
            m + theta * (normal::pdf(a) - normal::pdf(b)) / mass
        })
        .collect();
    Ok(SpacePartition {
        bounds,
        reps,
        mass: vec![1.0 / kf; cells],
        intensity: vec![lambda * euler_step / kf; cells],
    })
}

/// Serializable description from which [`DiscretizationGrids`] are rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub euler_step: f64,
    pub cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            euler_step: 0.01,
            cells: 10,
        }
    }
}

/// Time grid plus amplitude partition shared by simulation and the dual estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationGrids {
    pub time: TimeGrid,
    pub space: SpacePartition,
    spec: GridSpec,
}

impl DiscretizationGrids {
    pub fn new(params: &ModelParams, spec: GridSpec) -> Result<Self> {
        let time = build_time_grid(params.maturity, params.exercise_intervals, spec.euler_step)?;
        // The partition only matters when jumps occur; a unit theta keeps it
        // well defined for jump-free models.
        let theta = if params.theta > 0.0 {
            params.theta
        } else {
            1.0
        };
        let space = build_space_partition(params.m, theta, params.lambda, spec.cells, time.step())?;
        Ok(Self { time, space, spec })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// Fails unless both grids describe the same discretization.
    pub fn ensure_same(&self, other: &Self) -> Result<()> {
        if self.time != other.time {
            return Err(Error::GridMismatch("time grids differ".into()));
        }
        if self.space != other.space {
            return Err(Error::GridMismatch("amplitude partitions differ".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_time_grid() {
        let g = build_time_grid(1.0, 10, 0.01).unwrap();
        assert_eq!(g.n_nodes(), 101);
        let expected: Vec<usize> = (0..=10).map(|j| 10 * j).collect();
        assert_eq!(g.exercise_index(), expected.as_slice());
        assert_eq!(g.nodes()[100], 1.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.interval_of_step(0), 0);
        assert_eq!(g.interval_of_step(19), 1);
        assert_eq!(g.interval_of_step(99), 9);
    }

    #[test]
    fn coarsest_time_grid() {
        let g = build_time_grid(1.0, 1, 1.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        assert_eq!(g.exercise_index(), &[0, 1]);
    }

    #[test]
    fn non_divisible_step_rejected() {
        let err = build_time_grid(1.0, 10, 0.3).unwrap_err();
        assert!(matches!(err, Error::NonDivisibleStep { .. }));
        assert!(build_time_grid(1.0, 10, 0.03).is_err());
        assert!(build_time_grid(1.0, 10, 0.05).is_ok());
    }

    #[test]
    fn table_partition() {
        let p = build_space_partition(0.06, 0.2, 1.0, 10, 0.01).unwrap();
        assert_eq!(p.n_cells(), 10);
        for &mu in p.step_intensity() {
            assert!((mu - 0.001).abs() < 1e-15);
        }
        // Lower bound of the second cell is the 10% quantile.
        assert!((p.bounds()[1] - (0.06 + 0.2 * -1.281_551_565_544_600_5)).abs() < 1e-12);
        assert!((p.bounds()[1] + 0.1963).abs() < 1e-4);
        assert!((p.mass().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for (k, &y) in p.reps().iter().enumerate() {
            assert!(y > p.bounds()[k] && y < p.bounds()[k + 1]);
        }
        // Conditional means are symmetric about m.
        assert!((p.reps()[0] - 0.06 + p.reps()[9] - 0.06).abs() < 1e-12);
    }

    #[test]
    fn single_cell_partition() {
        let p = build_space_partition(0.06, 0.2, 1.0, 1, 0.01).unwrap();
        assert_eq!(p.bounds(), &[f64::NEG_INFINITY, f64::INFINITY]);
        assert_eq!(p.mass(), &[1.0]);
        assert!((p.reps()[0] - 0.06).abs() < 1e-15);
        assert_eq!(p.cell_of(-3.0), 0);
        assert_eq!(p.cell_of(3.0), 0);
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(build_space_partition(0.06, 0.2, 1.0, 0, 0.01).is_err());
    }

    #[test]
    fn cell_lookup() {
        let p = build_space_partition(0.0, 1.0, 1.0, 4, 0.01).unwrap();
        assert_eq!(p.cell_of(-1.0), 0);
        assert_eq!(p.cell_of(-0.1), 1);
        assert_eq!(p.cell_of(0.0), 2);
        assert_eq!(p.cell_of(0.5), 2);
        assert_eq!(p.cell_of(0.7), 3);
    }

    #[test]
    fn conditional_mean_matches_numerical_integral() {
        // Oracle: midpoint-rule integration of y f(y) over a finite cell.
        let p = build_space_partition(0.06, 0.2, 1.0, 10, 0.01).unwrap();
        let (a, b) = (p.bounds()[3], p.bounds()[4]);
        let n = 200_000;
        let h = (b - a) / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let y = a + (i as f64 + 0.5) * h;
            let f = normal::pdf((y - 0.06) / 0.2);
            num += y * f;
            den += f;
        }
        assert!((num / den - p.reps()[3]).abs() < 1e-9);
    }
}
