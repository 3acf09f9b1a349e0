use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DiscretizationGrids, ModelParams};
use crate::error::{Error, Result};
use crate::rng::path_rng;

/// One jump of the systemic compound Poisson component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    /// Arrival time.
    pub time: f64,
    /// Euler step `l` with `t_l <= time < t_{l+1}`.
    pub step: u32,
    /// Amplitude cell containing `log_amplitude`.
    pub cell: u32,
    pub log_amplitude: f64,
}

/// Advances one path through the time grid using the exact log-price solution.
///
/// Jump arrivals are drawn from exponential clocks and binned into the step and
/// amplitude cell they fall in.
pub(crate) struct PathStepper<'g> {
    grids: &'g DiscretizationGrids,
    log_drift: f64,
    sigma: f64,
    lambda: f64,
    m: f64,
    theta: f64,
    node: usize,
    log_x: Vec<f64>,
    next_jump: f64,
}

impl<'g> PathStepper<'g> {
    pub(crate) fn new<R: Rng + ?Sized>(
        params: &ModelParams,
        grids: &'g DiscretizationGrids,
        start_node: usize,
        x: &[f64],
        rng: &mut R,
    ) -> Self {
        let t0 = grids.time.nodes()[start_node];
        let next_jump = if params.lambda > 0.0 {
            let e: f64 = rng.sample(Exp1);
            t0 + e / params.lambda
        } else {
            f64::INFINITY
        };
        Self {
            grids,
            log_drift: params.log_drift(),
            sigma: params.sigma,
            lambda: params.lambda,
            m: params.m,
            theta: params.theta,
            node: start_node,
            log_x: x.iter().map(|v| v.ln()).collect(),
            next_jump,
        }
    }

    pub(crate) fn write_prices(&self, out: &mut [f64]) {
        for (o, l) in out.iter_mut().zip(&self.log_x) {
            *o = l.exp();
        }
    }

    /// Advances one Euler step. Wiener increments are written to `dw` and
    /// jumps pushed onto `jumps` when those sinks are given.
    pub(crate) fn step<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        mut dw: Option<&mut [f64]>,
        mut jumps: Option<&mut Vec<JumpEvent>>,
    ) {
        let l = self.node;
        let time = &self.grids.time;
        let dt = time.dt(l);
        let sqrt_dt = dt.sqrt();
        let drift = self.log_drift * dt;
        for i in 0..self.log_x.len() {
            let z: f64 = rng.sample(StandardNormal);
            let inc = sqrt_dt * z;
            if let Some(dw) = dw.as_deref_mut() {
                dw[i] = inc;
            }
            self.log_x[i] += drift + self.sigma * inc;
        }
        let t_end = time.nodes()[l + 1];
        let mut jump_sum = 0.0;
        while self.next_jump < t_end {
            let z: f64 = rng.sample(StandardNormal);
            let y = self.m + self.theta * z;
            jump_sum += y;
            if let Some(jumps) = jumps.as_deref_mut() {
                jumps.push(JumpEvent {
                    time: self.next_jump,
                    step: l as u32,
                    cell: self.grids.space.cell_of(y) as u32,
                    log_amplitude: y,
                });
            }
            let e: f64 = rng.sample(Exp1);
            self.next_jump += e / self.lambda;
        }
        if jump_sum != 0.0 {
            for lx in &mut self.log_x {
                *lx += jump_sum;
            }
        }
        self.node += 1;
    }
}

/// Immutable ensemble of simulated paths on a [`DiscretizationGrids`].
///
/// Prices are stored at every node, Wiener increments for every step, and
/// jumps sparsely as binned events.
#[derive(Debug, Clone)]
pub struct PathBundle {
    grids: DiscretizationGrids,
    n_paths: usize,
    n_assets: usize,
    prices: Vec<f64>,
    dw: Vec<f64>,
    jump_offsets: Vec<usize>,
    jumps: Vec<JumpEvent>,
    seed: u64,
}

struct SimulatedPath {
    prices: Vec<f64>,
    dw: Vec<f64>,
    jumps: Vec<JumpEvent>,
}

fn simulate_one(
    params: &ModelParams,
    grids: &DiscretizationGrids,
    seed: u64,
    index: u64,
) -> SimulatedPath {
    let n = params.n_assets();
    let n_steps = grids.time.n_steps();
    let mut rng = path_rng(seed, index);
    let mut prices = vec![0.0; (n_steps + 1) * n];
    let mut dw = vec![0.0; n_steps * n];
    let mut jumps = Vec::new();
    prices[..n].copy_from_slice(&params.x0);
    let mut stepper = PathStepper::new(params, grids, 0, &params.x0, &mut rng);
    for l in 0..n_steps {
        stepper.step(
            &mut rng,
            Some(&mut dw[l * n..(l + 1) * n]),
            Some(&mut jumps),
        );
        stepper.write_prices(&mut prices[(l + 1) * n..(l + 2) * n]);
    }
    SimulatedPath { prices, dw, jumps }
}

/// Simulates `n_paths` independent paths. Path `i` uses stream `i` of `seed`,
/// so the bundle is identical for any thread count.
pub fn simulate_paths(
    params: &ModelParams,
    grids: &DiscretizationGrids,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::param("need at least one path"));
    }
    let expected = DiscretizationGrids::new(params, grids.spec())?;
    expected.ensure_same(grids)?;

    let paths: Vec<SimulatedPath> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_one(params, grids, seed, i))
        .collect();

    let n = params.n_assets();
    let n_nodes = grids.time.n_nodes();
    let mut prices = Vec::with_capacity(n_paths * n_nodes * n);
    let mut dw = Vec::with_capacity(n_paths * (n_nodes - 1) * n);
    let mut jump_offsets = Vec::with_capacity(n_paths + 1);
    let mut jumps = Vec::new();
    jump_offsets.push(0);
    for p in paths {
        prices.extend_from_slice(&p.prices);
        dw.extend_from_slice(&p.dw);
        jumps.extend_from_slice(&p.jumps);
        jump_offsets.push(jumps.len());
    }
    Ok(PathBundle {
        grids: grids.clone(),
        n_paths,
        n_assets: n,
        prices,
        dw,
        jump_offsets,
        jumps,
        seed,
    })
}

impl PathBundle {
    pub fn grids(&self) -> &DiscretizationGrids {
        &self.grids
    }

    pub fn len(&self) -> usize {
        self.n_paths
    }

    pub fn is_empty(&self) -> bool {
        self.n_paths == 0
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self, index: usize) -> PathView<'_> {
        assert!(index < self.n_paths, "path index out of range");
        PathView {
            bundle: self,
            index,
        }
    }

    pub fn paths(&self) -> impl ExactSizeIterator<Item = PathView<'_>> + '_ {
        (0..self.n_paths).map(move |i| self.path(i))
    }

    /// Splices path tails: for every path `i`, all increments of steps
    /// `l >= from_node` come from path `perm[i]`, and prices after `from_node`
    /// are rebuilt from those increments. Everything up to `from_node` is kept.
    pub fn permute_tails(&self, from_node: usize, perm: &[usize]) -> Result<PathBundle> {
        if perm.len() != self.n_paths || perm.iter().any(|&p| p >= self.n_paths) {
            return Err(Error::param(
                "permutation must map every path to a valid path",
            ));
        }
        if from_node >= self.grids.time.n_nodes() {
            return Err(Error::param("from_node outside the grid"));
        }
        let n = self.n_assets;
        let n_nodes = self.grids.time.n_nodes();
        let mut out = self.clone();
        out.jumps.clear();
        out.jump_offsets.clear();
        out.jump_offsets.push(0);
        for (i, &src) in perm.iter().enumerate() {
            let own = self.path(i);
            let other = self.path(src);
            for l in from_node..n_nodes - 1 {
                let range = (i * (n_nodes - 1) + l) * n..(i * (n_nodes - 1) + l + 1) * n;
                out.dw[range].copy_from_slice(other.dw(l));
            }
            for l in from_node + 1..n_nodes {
                for a in 0..n {
                    let ratio = other.price(l)[a] / other.price(from_node)[a];
                    out.prices[(i * n_nodes + l) * n + a] = own.price(from_node)[a] * ratio;
                }
            }
            out.jumps
                .extend(own.jumps().iter().filter(|e| (e.step as usize) < from_node));
            out.jumps.extend(
                other
                    .jumps()
                    .iter()
                    .filter(|e| (e.step as usize) >= from_node),
            );
            out.jump_offsets.push(out.jumps.len());
        }
        Ok(out)
    }
}

/// Borrowed view of one path in a [`PathBundle`].
#[derive(Clone, Copy)]
pub struct PathView<'a> {
    bundle: &'a PathBundle,
    index: usize,
}

impl<'a> PathView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn grids(&self) -> &'a DiscretizationGrids {
        &self.bundle.grids
    }

    /// Asset prices at node `l`.
    #[inline]
    pub fn price(&self, l: usize) -> &'a [f64] {
        let b = self.bundle;
        let n_nodes = b.grids.time.n_nodes();
        let start = (self.index * n_nodes + l) * b.n_assets;
        &b.prices[start..start + b.n_assets]
    }

    /// Asset prices at exercise date `T_j`.
    #[inline]
    pub fn exercise_price(&self, j: usize) -> &'a [f64] {
        self.price(self.bundle.grids.time.exercise_index()[j])
    }

    /// Wiener increments over step `l`.
    #[inline]
    pub fn dw(&self, l: usize) -> &'a [f64] {
        let b = self.bundle;
        let n_steps = b.grids.time.n_steps();
        let start = (self.index * n_steps + l) * b.n_assets;
        &b.dw[start..start + b.n_assets]
    }

    /// All jumps of this path in time order.
    pub fn jumps(&self) -> &'a [JumpEvent] {
        let b = self.bundle;
        &b.jumps[b.jump_offsets[self.index]..b.jump_offsets[self.index + 1]]
    }

    /// Jumps falling in step `l`.
    pub fn jumps_in_step(&self, l: usize) -> &'a [JumpEvent] {
        let all = self.jumps();
        let lo = all.partition_point(|e| (e.step as usize) < l);
        let hi = all.partition_point(|e| (e.step as usize) <= l);
        &all[lo..hi]
    }

    /// `P([t_l, t_{l+1}] x A_k)`.
    pub fn jump_count(&self, l: usize, k: usize) -> u32 {
        self.jumps_in_step(l)
            .iter()
            .filter(|e| e.cell as usize == k)
            .count() as u32
    }

    /// `P~([t_l, t_{l+1}] x A_k)`, the count minus its intensity.
    pub fn compensated(&self, l: usize, k: usize) -> f64 {
        self.jump_count(l, k) as f64 - self.bundle.grids.space.step_intensity()[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GridSpec;

    fn grids(p: &ModelParams, step: f64) -> DiscretizationGrids {
        DiscretizationGrids::new(
            p,
            GridSpec {
                euler_step: step,
                cells: 10,
            },
        )
        .unwrap()
    }

    #[test]
    fn deterministic_growth_without_noise() {
        let mut p = ModelParams::table(1, 0.0, 40.0);
        p.sigma = 0.0;
        let g = grids(&p, 0.01);
        let b = simulate_paths(&p, &g, 5, 1).unwrap();
        for path in b.paths() {
            let x_t = path.price(100)[0];
            assert!((x_t - 40.0 * 0.04f64.exp()).abs() < 1e-10);
            assert!((x_t - 41.632).abs() < 1e-3);
            assert!(path.jumps().is_empty());
        }
    }

    #[test]
    fn jumps_are_binned_consistently() {
        let p = ModelParams::table(2, 3.0, 40.0);
        let g = grids(&p, 0.01);
        let b = simulate_paths(&p, &g, 300, 9).unwrap();
        let nodes = g.time.nodes();
        let mut total = 0;
        for path in b.paths() {
            for e in path.jumps() {
                let l = e.step as usize;
                assert!(nodes[l] <= e.time && e.time < nodes[l + 1]);
                let k = e.cell as usize;
                let bounds = g.space.bounds();
                assert!(bounds[k] <= e.log_amplitude && e.log_amplitude < bounds[k + 1]);
            }
            for l in 0..g.time.n_steps() {
                let by_cell: u32 = (0..10).map(|k| path.jump_count(l, k)).sum();
                assert_eq!(by_cell as usize, path.jumps_in_step(l).len());
                total += by_cell;
            }
            // Every price move between nodes matches diffusion plus binned jumps.
            for l in 0..g.time.n_steps() {
                let jump: f64 = path.jumps_in_step(l).iter().map(|e| e.log_amplitude).sum();
                for a in 0..2 {
                    let lr = (path.price(l + 1)[a] / path.price(l)[a]).ln();
                    let expected = p.log_drift() * 0.01 + p.sigma * path.dw(l)[a] + jump;
                    assert!((lr - expected).abs() < 1e-10);
                }
            }
        }
        assert_eq!(total as usize, b.jumps.len());
    }

    #[test]
    fn bundle_is_reproducible() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let g = grids(&p, 0.05);
        let a = simulate_paths(&p, &g, 64, 42).unwrap();
        let b = simulate_paths(&p, &g, 64, 42).unwrap();
        assert_eq!(a.prices, b.prices);
        assert_eq!(a.dw, b.dw);
        assert_eq!(a.jumps, b.jumps);
        let c = simulate_paths(&p, &g, 64, 43).unwrap();
        assert_ne!(a.prices, c.prices);
    }

    #[test]
    fn prefix_of_bundle_does_not_depend_on_size() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let g = grids(&p, 0.05);
        let small = simulate_paths(&p, &g, 8, 5).unwrap();
        let large = simulate_paths(&p, &g, 32, 5).unwrap();
        for i in 0..8 {
            assert_eq!(small.path(i).price(20), large.path(i).price(20));
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let mut q = p.clone();
        q.m = 0.1;
        let g = grids(&q, 0.01);
        assert!(matches!(
            simulate_paths(&p, &g, 4, 0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn permuted_tails_keep_prefix() {
        let p = ModelParams::table(1, 3.0, 40.0);
        let g = grids(&p, 0.05);
        let b = simulate_paths(&p, &g, 10, 3).unwrap();
        let perm: Vec<usize> = (0..10).rev().collect();
        let s = b.permute_tails(8, &perm).unwrap();
        for i in 0..10 {
            for l in 0..=8 {
                assert_eq!(s.path(i).price(l), b.path(i).price(l));
            }
            for l in 0..8 {
                assert_eq!(s.path(i).dw(l), b.path(i).dw(l));
                assert_eq!(s.path(i).jumps_in_step(l), b.path(i).jumps_in_step(l));
            }
            for l in 8..20 {
                assert_eq!(s.path(i).dw(l), b.path(9 - i).dw(l));
                assert_eq!(s.path(i).jumps_in_step(l), b.path(9 - i).jumps_in_step(l));
            }
        }
    }
}
