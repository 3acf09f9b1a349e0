//! Non-nested dual bound: regressed Wiener and jump integrands assembled
//! into an exactly adapted martingale by Ito sums.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use crate::analytic::{EuroPricerConfig, PutSlice1d, PutTable1d};
use crate::error::{Error, Result};
use crate::estimate::{BoundEstimate, BoundKind};
use crate::model::{DiscretizationGrids, GridSpec, ModelParams, PathBundle, PathView};
use crate::policy::{dot, Policy};
use crate::regression::{solve_least_squares, BasisEvaluator, BasisSpec, BasisVariant, FitResult};

/// Where integrand regressions are performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionSchedule {
    /// At each `T_j` with increments over `[T_j, T_{j+1}]`, held constant on
    /// the Euler steps of that interval.
    ExerciseDates,
    /// At every Euler node of `[T_j, T_{j+1})` with increments up to
    /// `T_{j+1}`, pooled into one weighted regression per interval.
    #[default]
    PooledIntervals,
    /// At every Euler node with single-step increments.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmConfig {
    pub basis_w: BasisVariant,
    pub basis_p: BasisVariant,
    pub schedule: RegressionSchedule,
}

impl Default for TmConfig {
    fn default() -> Self {
        Self {
            basis_w: BasisVariant::EuroGreeks,
            basis_p: BasisVariant::EuroGreeks,
            schedule: RegressionSchedule::PooledIntervals,
        }
    }
}

/// Which stochastic integrals enter the martingale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleTerms {
    #[default]
    Complete,
    WienerOnly,
    JumpOnly,
}

impl MartingaleTerms {
    fn wiener(self) -> bool {
        !matches!(self, MartingaleTerms::JumpOnly)
    }

    fn jump(self) -> bool {
        !matches!(self, MartingaleTerms::WienerOnly)
    }
}

/// Per-regression diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrandFit {
    pub segment: usize,
    /// `"w<component>"` or `"p<cell>"`.
    pub target: String,
    pub effective_rank: usize,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TmDiagnostics {
    /// Set when the jump intensity is zero and every beta was zeroed.
    pub jump_part_disabled: bool,
    pub fits: Vec<IntegrandFit>,
}

/// Serialized form of a [`MartingaleModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleDocument {
    pub params: ModelParams,
    pub pricer: EuroPricerConfig,
    pub grids: GridSpec,
    pub config: TmConfig,
    /// Seeds of the bundles the policy and the integrands were fitted on.
    pub fit_seeds: Vec<u64>,
    /// `alpha[segment][component]`, coefficients over the Wiener basis.
    pub alpha: Vec<Vec<Vec<f64>>>,
    /// `beta[segment][cell]`, coefficients over the jump basis.
    pub beta: Vec<Vec<Vec<f64>>>,
    pub diagnostics: TmDiagnostics,
}

/// Fitted integrands, piecewise constant in time over regression segments.
#[derive(Debug, Clone)]
pub struct MartingaleModel {
    doc: MartingaleDocument,
    grids: DiscretizationGrids,
    basis_w: BasisEvaluator,
    basis_p: BasisEvaluator,
    /// Single-asset jump basis only: tabulated European slices towards the
    /// next exercise date and towards maturity, one pair per Euler step.
    /// Realized jumps and the compensator read the same tables, so the jump
    /// sum stays an exact martingale.
    jump_tables: Option<Arc<Vec<[PutTable1d; 2]>>>,
    /// Single-asset delta basis only: the same two slices per Euler step.
    wiener_slices: Option<Arc<Vec<[PutSlice1d; 2]>>>,
}

/// Half-width in `ln x` of the tabulated range around the strike.
const TABLE_HALF_WIDTH: f64 = 2.5;
/// Paths per block when building martingales.
const PATH_BLOCK: usize = 64;

impl Serialize for MartingaleModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.doc.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MartingaleModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = MartingaleDocument::deserialize(d)?;
        MartingaleModel::from_document(doc).map_err(serde::de::Error::custom)
    }
}

/// European slices towards the next exercise date and towards maturity at
/// every Euler step.
fn node_slices(grids: &DiscretizationGrids, basis: &BasisEvaluator) -> Vec<[PutSlice1d; 2]> {
    let time = &grids.time;
    let maturity = time.exercise_time(time.n_exercise_intervals());
    (0..time.n_steps())
        .map(|l| {
            let t = time.nodes()[l];
            let next = time.exercise_time(time.interval_of_step(l) + 1);
            [next - t, maturity - t].map(|tau| basis.pricer().slice_1d(tau))
        })
        .collect()
}

fn jump_tables(
    grids: &DiscretizationGrids,
    basis: &BasisEvaluator,
    strike: f64,
) -> Vec<[PutTable1d; 2]> {
    let center = strike.ln();
    node_slices(grids, basis)
        .into_iter()
        .map(|pair| pair.map(|slice| PutTable1d::new(slice, center, TABLE_HALF_WIDTH)))
        .collect()
}

fn segment_count(grids: &DiscretizationGrids, schedule: RegressionSchedule) -> usize {
    match schedule {
        RegressionSchedule::ExerciseDates | RegressionSchedule::PooledIntervals => {
            grids.time.n_exercise_intervals()
        }
        RegressionSchedule::EveryStep => grids.time.n_steps(),
    }
}

impl MartingaleModel {
    pub fn from_document(doc: MartingaleDocument) -> Result<Self> {
        doc.params.validate()?;
        let grids = DiscretizationGrids::new(&doc.params, doc.grids)?;
        let basis_w = BasisEvaluator::new(
            BasisSpec::RhoW(doc.config.basis_w),
            &doc.params,
            &doc.pricer,
        )?;
        let basis_p = BasisEvaluator::new(
            BasisSpec::RhoP(doc.config.basis_p),
            &doc.params,
            &doc.pricer,
        )?;
        let segs = segment_count(&grids, doc.config.schedule);
        let n = doc.params.n_assets();
        let cells = grids.space.n_cells();
        let shape_ok = |c: &Vec<Vec<Vec<f64>>>, inner: usize, dim: usize| {
            c.len() == segs
                && c.iter()
                    .all(|s| s.len() == inner && s.iter().all(|v| v.len() == dim))
        };
        if !shape_ok(&doc.alpha, n, basis_w.dimension()) {
            return Err(Error::param("alpha has the wrong shape for this model"));
        }
        if !shape_ok(&doc.beta, cells, basis_p.dimension()) {
            return Err(Error::param("beta has the wrong shape for this model"));
        }
        let jump_tables = (n == 1
            && doc.config.basis_p == BasisVariant::EuroGreeks
            && doc.params.lambda > 0.0
            && !doc.diagnostics.jump_part_disabled)
            .then(|| Arc::new(jump_tables(&grids, &basis_p, doc.params.sk)));
        let wiener_slices = (n == 1 && doc.config.basis_w == BasisVariant::EuroGreeks)
            .then(|| Arc::new(node_slices(&grids, &basis_w)));
        Ok(Self {
            doc,
            grids,
            basis_w,
            basis_p,
            jump_tables,
            wiener_slices,
        })
    }

    /// Model with every coefficient zero, so `M = 0`.
    pub fn zero(
        params: &ModelParams,
        pricer: &EuroPricerConfig,
        grids: GridSpec,
        config: TmConfig,
    ) -> Result<Self> {
        let g = DiscretizationGrids::new(params, grids)?;
        let segs = segment_count(&g, config.schedule);
        let dw = BasisSpec::RhoW(config.basis_w).dimension(params.n_assets());
        let dp = BasisSpec::RhoP(config.basis_p).dimension(params.n_assets());
        Self::from_document(MartingaleDocument {
            params: params.clone(),
            pricer: *pricer,
            grids,
            config,
            fit_seeds: Vec::new(),
            alpha: vec![vec![vec![0.0; dw]; params.n_assets()]; segs],
            beta: vec![vec![vec![0.0; dp]; g.space.n_cells()]; segs],
            diagnostics: TmDiagnostics::default(),
        })
    }

    pub fn document(&self) -> &MartingaleDocument {
        &self.doc
    }

    pub fn grids(&self) -> &DiscretizationGrids {
        &self.grids
    }

    pub fn diagnostics(&self) -> &TmDiagnostics {
        &self.doc.diagnostics
    }

    #[inline]
    fn segment_of(&self, l: usize) -> usize {
        match self.doc.config.schedule {
            RegressionSchedule::ExerciseDates | RegressionSchedule::PooledIntervals => {
                self.grids.time.interval_of_step(l)
            }
            RegressionSchedule::EveryStep => l,
        }
    }

    /// Discounted payoff at each exercise date along `path`.
    fn discounted_payoffs(&self, path: &PathView<'_>) -> Vec<f64> {
        let p = &self.doc.params;
        (0..=p.exercise_intervals)
            .map(|j| {
                p.discount(self.grids.time.exercise_time(j)) * p.payoff(path.exercise_price(j))
            })
            .collect()
    }

    /// `M_{T_j}` for `j = 0..=J` along each path, using left-endpoint
    /// integrands. Steps form the outer loop so the per-step tables stay in
    /// cache across the block; each path's sum is accumulated in step order.
    fn martingales_block(
        &self,
        paths: &[PathView<'_>],
        terms: MartingaleTerms,
        scratch: &mut Scratch,
    ) -> Vec<Vec<f64>> {
        let time = &self.grids.time;
        let space = &self.grids.space;
        let n = self.doc.params.n_assets();
        let with_w = terms.wiener();
        let with_p = terms.jump()
            && !self.doc.diagnostics.jump_part_disabled
            && self.doc.params.lambda > 0.0;
        let spi = time.steps_per_interval();
        let dim = self.basis_p.dimension();
        let nonzero = |c: &Vec<Vec<f64>>| c.iter().any(|v| v.iter().any(|&x| x != 0.0));
        let mut out: Vec<Vec<f64>> = paths
            .iter()
            .map(|_| {
                let mut v = Vec::with_capacity(time.n_exercise_intervals() + 1);
                v.push(0.0);
                v
            })
            .collect();
        let mut m = vec![0.0; paths.len()];
        for l in 0..time.n_steps() {
            let t = time.nodes()[l];
            let seg = self.segment_of(l);
            let next = time.exercise_time(time.interval_of_step(l) + 1);
            let alpha = &self.doc.alpha[seg];
            let beta = &self.doc.beta[seg];
            let use_w = with_w && nonzero(alpha);
            let use_p = with_p && nonzero(beta);
            for (path, m) in paths.iter().zip(m.iter_mut()) {
                let x = path.price(l);
                if use_w {
                    match self.wiener_slices.as_deref() {
                        Some(slices) => cached_wiener_row(&slices[l], x[0], &mut scratch.row_w),
                        None => self.basis_w.wiener_row(t, x, next, &mut scratch.row_w),
                    }
                    let dw = path.dw(l);
                    for c in 0..n {
                        *m += dot(&scratch.row_w, &alpha[c]) * dw[c];
                    }
                }
                if use_p {
                    match self.jump_tables.as_deref() {
                        Some(tables) => {
                            tabulated_psi(&tables[l], x[0], space.reps(), beta, &mut scratch.psi)
                        }
                        None => {
                            self.basis_p
                                .jump_rows(t, x, next, space.reps(), &mut scratch.rows_p);
                            for (k, (psi, b)) in scratch.psi.iter_mut().zip(beta).enumerate() {
                                *psi = dot(&scratch.rows_p[k * dim..(k + 1) * dim], b);
                            }
                        }
                    }
                    let compensator: f64 = scratch
                        .psi
                        .iter()
                        .zip(space.step_intensity())
                        .map(|(psi, mu)| psi * mu)
                        .sum();
                    let realized: f64 = path
                        .jumps_in_step(l)
                        .iter()
                        .map(|e| scratch.psi[e.cell as usize])
                        .sum();
                    *m += realized - compensator;
                }
            }
            if (l + 1) % spi == 0 {
                for (o, &m) in out.iter_mut().zip(&m) {
                    o.push(m);
                }
            }
        }
        out
    }

    /// Martingales of every path in `paths`, in path order, computed in
    /// parallel blocks.
    fn martingales_all(&self, paths: &PathBundle, terms: MartingaleTerms) -> Vec<Vec<f64>> {
        let index: Vec<usize> = (0..paths.len()).collect();
        index
            .par_chunks(PATH_BLOCK)
            .map_init(
                || self.scratch(),
                |scratch, chunk| {
                    let views: Vec<PathView<'_>> = chunk.iter().map(|&i| paths.path(i)).collect();
                    self.martingales_block(&views, terms, scratch)
                },
            )
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }

    fn scratch(&self) -> Scratch {
        let cells = self.grids.space.n_cells();
        Scratch {
            row_w: vec![0.0; self.basis_w.dimension()],
            rows_p: vec![0.0; self.basis_p.dimension() * cells],
            psi: vec![0.0; cells],
        }
    }
}

/// Jump integrand `psi_k` for every cell from the tabulated single-asset
/// European jump rows.
fn tabulated_psi(
    tables: &[PutTable1d; 2],
    x: f64,
    reps: &[f64],
    beta: &[Vec<f64>],
    psi: &mut [f64],
) {
    let [near, far] = tables;
    let lx = x.ln();
    let (near0, far0) = (near.price_log(lx), far.price_log(lx));
    for ((psi, &y), b) in psi.iter_mut().zip(reps).zip(beta) {
        *psi =
            b[0] + b[1] * (near.price_log(lx + y) - near0) + b[2] * (far.price_log(lx + y) - far0);
    }
}

/// Tabulated single-asset European jump rows, `dimension` entries per cell.
fn tabulated_jump_rows(tables: &[PutTable1d; 2], x: f64, reps: &[f64], rows: &mut [f64]) {
    let [near, far] = tables;
    let lx = x.ln();
    let (near0, far0) = (near.price_log(lx), far.price_log(lx));
    for (row, &y) in rows.chunks_exact_mut(3).zip(reps) {
        row[0] = 1.0;
        row[1] = near.price_log(lx + y) - near0;
        row[2] = far.price_log(lx + y) - far0;
    }
}

/// Single-asset delta row from cached slices.
fn cached_wiener_row(slices: &[PutSlice1d; 2], x: f64, row: &mut [f64]) {
    let lx = x.ln();
    let [near, far] = slices;
    row[0] = 1.0;
    row[1] = near.delta_log(lx) * x;
    row[2] = far.delta_log(lx) * x;
}

struct Scratch {
    row_w: Vec<f64>,
    rows_p: Vec<f64>,
    psi: Vec<f64>,
}

/// Regresses the integrand targets on `paths`, which must be independent of
/// the bundle `policy` was fitted on.
///
/// The default schedule pools windows starting at every Euler node of an
/// interval and ending at `T_{j+1}`, each weighted by its length.
///
/// For a regression window starting at `t_l` in `[T_j, T_{j+1})` the Wiener
/// target for component `c` is `dW_c / dt * H(tau_{j+1})` and the target for
/// cell `k` is `P~_k / mu_k * H(tau_{j+1})`, with increments, length and
/// intensity taken over the window and `H` the discounted payoff.
pub fn fit_integrands(
    policy: &Policy,
    paths: &PathBundle,
    config: TmConfig,
) -> Result<MartingaleModel> {
    policy.check_grids(paths.grids())?;
    policy.check_independent(paths)?;
    let params = policy.params();
    let pricer = policy.document().pricer;
    let grids = paths.grids();
    let time = &grids.time;
    let space = &grids.space;
    let n = params.n_assets();
    let cells = space.n_cells();
    let basis_w = BasisEvaluator::new(BasisSpec::RhoW(config.basis_w), params, &pricer)?;
    let basis_p = BasisEvaluator::new(BasisSpec::RhoP(config.basis_p), params, &pricer)?;
    let (dw_dim, dp_dim) = (basis_w.dimension(), basis_p.dimension());
    let jumps_on = params.lambda > 0.0;
    // Same caches as the evaluation, so fit and evaluation share basis values.
    let wiener_slices = (n == 1 && config.basis_w == BasisVariant::EuroGreeks)
        .then(|| node_slices(grids, &basis_w));
    let tables = (n == 1 && config.basis_p == BasisVariant::EuroGreeks && jumps_on)
        .then(|| jump_tables(grids, &basis_p, params.sk));

    // H(tau_{j+1}) for j = 0..J-1 on every path.
    let continuation_payoffs: Vec<Vec<f64>> = (0..paths.len())
        .into_par_iter()
        .map(|i| {
            let path = paths.path(i);
            let sched = policy.stopping_schedule(&path);
            (0..time.n_exercise_intervals())
                .map(|j| policy.discounted_payoff(&path, sched[j + 1]))
                .collect()
        })
        .collect();

    // Each segment regresses rows at the nodes `l` of `rows` on increments
    // over `[l, end)`.
    let segments: Vec<(Vec<usize>, usize)> = match config.schedule {
        RegressionSchedule::ExerciseDates => time
            .exercise_index()
            .windows(2)
            .map(|w| (vec![w[0]], w[1]))
            .collect(),
        RegressionSchedule::PooledIntervals => time
            .exercise_index()
            .windows(2)
            .map(|w| ((w[0]..w[1]).collect(), w[1]))
            .collect(),
        RegressionSchedule::EveryStep => (0..time.n_steps()).map(|l| (vec![l], l + 1)).collect(),
    };

    let mut alpha = Vec::with_capacity(segments.len());
    let mut beta = Vec::with_capacity(segments.len());
    let mut fits = Vec::new();
    for (seg, (rows, end)) in segments.iter().enumerate() {
        let end = *end;
        let j = time.interval_of_step(rows[0]);
        let next = time.exercise_time(j + 1);
        let t_end = time.nodes()[end];
        let longest = t_end - time.nodes()[rows[0]];
        let per_path = rows.len();

        // Rows and targets are scaled by the square root of the window
        // length, the inverse of the target variance up to a constant.
        struct PathRows {
            row_w: Vec<f64>,
            target_w: Vec<f64>,
            rows_p: Vec<f64>,
            target_p: Vec<f64>,
        }
        let chunks: Vec<PathRows> = (0..paths.len())
            .into_par_iter()
            .map(|i| {
                let path = paths.path(i);
                let h = continuation_payoffs[i][j];
                let mut out = PathRows {
                    row_w: Vec::with_capacity(per_path * dw_dim),
                    target_w: Vec::with_capacity(per_path * n),
                    rows_p: Vec::with_capacity(if jumps_on {
                        per_path * dp_dim * cells
                    } else {
                        0
                    }),
                    target_p: Vec::with_capacity(if jumps_on { per_path * cells } else { 0 }),
                };
                let mut row = vec![0.0; dw_dim];
                let mut rows_p = vec![0.0; dp_dim * cells];
                let mut dw = vec![0.0; n];
                let mut counts = vec![0u32; cells];
                // Walk the rows backwards so increments accumulate to `end`.
                let mut cursor = end;
                for &l in rows.iter().rev() {
                    for step in l..cursor {
                        for (acc, d) in dw.iter_mut().zip(path.dw(step)) {
                            *acc += d;
                        }
                        if jumps_on {
                            for e in path.jumps_in_step(step) {
                                counts[e.cell as usize] += 1;
                            }
                        }
                    }
                    cursor = l;
                    let t = time.nodes()[l];
                    let x = path.price(l);
                    let width = t_end - t;
                    let w = (width / longest).sqrt();
                    match &wiener_slices {
                        Some(slices) => cached_wiener_row(&slices[l], x[0], &mut row),
                        None => basis_w.wiener_row(t, x, next, &mut row),
                    }
                    out.row_w.extend(row.iter().map(|v| v * w));
                    out.target_w.extend(dw.iter().map(|d| w * d / width * h));
                    if jumps_on {
                        match &tables {
                            Some(tables) => {
                                tabulated_jump_rows(&tables[l], x[0], space.reps(), &mut rows_p)
                            }
                            None => basis_p.jump_rows(t, x, next, space.reps(), &mut rows_p),
                        }
                        out.rows_p.extend(rows_p.iter().map(|v| v * w));
                        let span = params.lambda * (t_end - t);
                        for (k, &c) in counts.iter().enumerate() {
                            let mu = span * space.mass()[k];
                            out.target_p.push(w * (c as f64 - mu) / mu * h);
                        }
                    }
                }
                out
            })
            .collect();
        let n_rows = paths.len() * per_path;

        let design_w = DMatrix::from_fn(n_rows, dw_dim, |r, c| {
            chunks[r / per_path].row_w[(r % per_path) * dw_dim + c]
        });
        let mut seg_alpha = Vec::with_capacity(n);
        for comp in 0..n {
            let target: Vec<f64> = (0..n_rows)
                .map(|r| chunks[r / per_path].target_w[(r % per_path) * n + comp])
                .collect();
            let fit = solve_least_squares(&design_w, &target)?;
            fits.push(diag(seg, format!("w{comp}"), &fit));
            seg_alpha.push(fit.coefficients);
        }
        alpha.push(seg_alpha);

        let mut seg_beta = Vec::with_capacity(cells);
        for k in 0..cells {
            if !jumps_on {
                seg_beta.push(vec![0.0; dp_dim]);
                continue;
            }
            let design = DMatrix::from_fn(n_rows, dp_dim, |r, c| {
                chunks[r / per_path].rows_p[((r % per_path) * cells + k) * dp_dim + c]
            });
            let target: Vec<f64> = (0..n_rows)
                .map(|r| chunks[r / per_path].target_p[(r % per_path) * cells + k])
                .collect();
            let fit = solve_least_squares(&design, &target)?;
            fits.push(diag(seg, format!("p{k}"), &fit));
            seg_beta.push(fit.coefficients);
        }
        beta.push(seg_beta);
    }

    MartingaleModel::from_document(MartingaleDocument {
        params: params.clone(),
        pricer,
        grids: grids.spec(),
        config,
        fit_seeds: policy
            .document()
            .fit_seed
            .into_iter()
            .chain([paths.seed()])
            .collect(),
        alpha,
        beta,
        diagnostics: TmDiagnostics {
            jump_part_disabled: !jumps_on,
            fits,
        },
    })
}

fn diag(segment: usize, target: String, fit: &FitResult) -> IntegrandFit {
    IntegrandFit {
        segment,
        target,
        effective_rank: fit.effective_rank,
        residual_rms: fit.residual_rms,
    }
}

/// `M_{T_j}`, `j = 0..=J`, along one path of a bundle on the model's grids.
pub fn build_martingale(
    model: &MartingaleModel,
    path: &PathView<'_>,
    terms: MartingaleTerms,
) -> Result<Vec<f64>> {
    model.grids.ensure_same(path.grids())?;
    let mut out = model.martingales_block(std::slice::from_ref(path), terms, &mut model.scratch());
    Ok(out.pop().expect("one path in, one martingale out"))
}

/// `M_{T_j}` for every path of `paths`, in path order.
pub fn build_martingales(
    model: &MartingaleModel,
    paths: &PathBundle,
    terms: MartingaleTerms,
) -> Result<Vec<Vec<f64>>> {
    model.grids.ensure_same(paths.grids())?;
    Ok(model.martingales_all(paths, terms))
}

/// Mean over `fresh_paths` of `max_j (H_{T_j} - M_{T_j})`.
pub fn tm_upper_bound(
    model: &MartingaleModel,
    fresh_paths: &PathBundle,
    terms: MartingaleTerms,
) -> Result<BoundEstimate> {
    model.grids.ensure_same(fresh_paths.grids())?;
    if model.doc.fit_seeds.contains(&fresh_paths.seed()) {
        return Err(Error::SeedReuse(format!(
            "bundle with seed {} was used for fitting",
            fresh_paths.seed()
        )));
    }
    let samples: Vec<f64> = model
        .martingales_all(fresh_paths, terms)
        .iter()
        .enumerate()
        .map(|(i, m)| {
            model
                .discounted_payoffs(&fresh_paths.path(i))
                .iter()
                .zip(m)
                .map(|(h, m)| h - m)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(BoundEstimate::from_samples(
        BoundKind::TrueMartingaleUpper,
        &samples,
        fresh_paths.seed(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate_paths;
    use crate::policy::{fit_policy, PolicyConfig};

    fn bundle(p: &ModelParams, n: usize, seed: u64) -> PathBundle {
        let g = DiscretizationGrids::new(p, GridSpec::default()).unwrap();
        simulate_paths(p, &g, n, seed).unwrap()
    }

    fn small_policy(p: &ModelParams) -> Policy {
        fit_policy(
            &bundle(p, 3000, 1),
            p,
            &EuroPricerConfig::default(),
            PolicyConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_model_gives_zero_martingale() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let model = MartingaleModel::zero(
            &p,
            &EuroPricerConfig::default(),
            GridSpec::default(),
            TmConfig::default(),
        )
        .unwrap();
        let paths = bundle(&p, 50, 2);
        for m in build_martingales(&model, &paths, MartingaleTerms::Complete).unwrap() {
            assert!(m.iter().all(|&v| v == 0.0));
            assert_eq!(m.len(), 11);
        }
        // With M = 0 the bound is the mean pathwise max of discounted payoffs.
        let ub = tm_upper_bound(&model, &paths, MartingaleTerms::Complete).unwrap();
        let oracle: f64 = paths
            .paths()
            .map(|path| {
                (0..=10)
                    .map(|j| p.discount(p.exercise_date(j)) * p.payoff(path.exercise_price(j)))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / 50.0;
        assert!((ub.mean - oracle).abs() < 1e-12);
    }

    #[test]
    fn constant_integrand_single_step() {
        let mut p = ModelParams::table(1, 0.0, 40.0);
        p.exercise_intervals = 1;
        let spec = GridSpec {
            euler_step: 1.0,
            cells: 10,
        };
        let cfg = TmConfig {
            basis_w: BasisVariant::Constant,
            basis_p: BasisVariant::Constant,
            schedule: RegressionSchedule::ExerciseDates,
        };
        let mut model = MartingaleModel::zero(&p, &EuroPricerConfig::default(), spec, cfg).unwrap();
        model.doc.alpha[0][0][0] = 2.5;
        let g = DiscretizationGrids::new(&p, spec).unwrap();
        let paths = simulate_paths(&p, &g, 20, 3).unwrap();
        for path in paths.paths() {
            let m = build_martingale(&model, &path, MartingaleTerms::Complete).unwrap();
            assert_eq!(m[0], 0.0);
            assert!((m[1] - 2.5 * path.dw(0)[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn intercept_alpha_is_target_mean() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let policy = small_policy(&p);
        let paths = bundle(&p, 2000, 4);
        let cfg = TmConfig {
            basis_w: BasisVariant::Constant,
            basis_p: BasisVariant::Constant,
            schedule: RegressionSchedule::ExerciseDates,
        };
        let model = fit_integrands(&policy, &paths, cfg).unwrap();
        let time = &paths.grids().time;
        for j in [0usize, 4, 9] {
            let (l0, l1) = (time.exercise_index()[j], time.exercise_index()[j + 1]);
            let width = time.exercise_time(j + 1) - time.exercise_time(j);
            let mean: f64 = paths
                .paths()
                .map(|path| {
                    let tau = policy.stopping_schedule(&path)[j + 1];
                    let dw: f64 = (l0..l1).map(|l| path.dw(l)[0]).sum();
                    dw / width * policy.discounted_payoff(&path, tau)
                })
                .sum::<f64>()
                / paths.len() as f64;
            let a = model.document().alpha[j][0][0];
            assert!(
                (a - mean).abs() <= 1e-10 * mean.abs().max(1.0),
                "{a} vs {mean}"
            );
        }
    }

    #[test]
    fn pooled_intercept_is_weighted_target_mean() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let policy = small_policy(&p);
        let paths = bundle(&p, 500, 4);
        let cfg = TmConfig {
            basis_w: BasisVariant::Constant,
            basis_p: BasisVariant::Constant,
            schedule: RegressionSchedule::PooledIntervals,
        };
        let model = fit_integrands(&policy, &paths, cfg).unwrap();
        let time = &paths.grids().time;
        for j in [0usize, 5, 9] {
            let (l0, l1) = (time.exercise_index()[j], time.exercise_index()[j + 1]);
            let t_end = time.exercise_time(j + 1);
            // Weights are proportional to window length, so the fit is the
            // total increment times payoff over the total window length.
            let widths: f64 = (l0..l1).map(|l| t_end - time.nodes()[l]).sum();
            let num: f64 = paths
                .paths()
                .map(|path| {
                    let h = policy.discounted_payoff(&path, policy.stopping_schedule(&path)[j + 1]);
                    (l0..l1)
                        .map(|l| (l..l1).map(|s| path.dw(s)[0]).sum::<f64>())
                        .sum::<f64>()
                        * h
                })
                .sum();
            let mean = num / (paths.len() as f64 * widths);
            let a = model.document().alpha[j][0][0];
            assert!(
                (a - mean).abs() <= 1e-9 * mean.abs().max(1.0),
                "{a} vs {mean}"
            );
        }
    }

    #[test]
    fn cached_rows_match_basis_rows() {
        let p = ModelParams::table(1, 3.0, 40.0);
        let pricer = EuroPricerConfig::default();
        let g = DiscretizationGrids::new(&p, GridSpec::default()).unwrap();
        let bw =
            BasisEvaluator::new(BasisSpec::RhoW(BasisVariant::EuroGreeks), &p, &pricer).unwrap();
        let bp =
            BasisEvaluator::new(BasisSpec::RhoP(BasisVariant::EuroGreeks), &p, &pricer).unwrap();
        let slices = node_slices(&g, &bw);
        let tables = jump_tables(&g, &bp, p.sk);
        let reps = g.space.reps();
        let (mut exact, mut cached) = (vec![0.0; 3 * reps.len()], vec![0.0; 3 * reps.len()]);
        for l in [0usize, 7, 10, 55, 99] {
            let t = g.time.nodes()[l];
            let next = g.time.exercise_time(g.time.interval_of_step(l) + 1);
            for x in [20.0, 36.0, 40.0, 47.5, 80.0] {
                bw.wiener_row(t, &[x], next, &mut exact[..3]);
                cached_wiener_row(&slices[l], x, &mut cached[..3]);
                for (a, b) in exact[..3].iter().zip(&cached[..3]) {
                    assert!((a - b).abs() < 1e-12, "wiener l={l} x={x}: {a} vs {b}");
                }
                bp.jump_rows(t, &[x], next, reps, &mut exact);
                tabulated_jump_rows(&tables[l], x, reps, &mut cached);
                for (a, b) in exact.iter().zip(&cached) {
                    assert!((a - b).abs() < 1e-6, "jump l={l} x={x}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn no_jumps_zeroes_beta() {
        let p = ModelParams::table(1, 0.0, 40.0);
        let policy = small_policy(&p);
        let model = fit_integrands(&policy, &bundle(&p, 500, 5), TmConfig::default()).unwrap();
        assert!(model.diagnostics().jump_part_disabled);
        assert!(model
            .document()
            .beta
            .iter()
            .flatten()
            .flatten()
            .all(|&b| b == 0.0));
    }

    #[test]
    fn every_step_schedule_covers_all_steps() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let policy = small_policy(&p);
        let cfg = TmConfig {
            schedule: RegressionSchedule::EveryStep,
            ..TmConfig::default()
        };
        let model = fit_integrands(&policy, &bundle(&p, 400, 6), cfg).unwrap();
        assert_eq!(model.document().alpha.len(), 100);
        assert_eq!(model.document().beta.len(), 100);
    }

    #[test]
    fn document_round_trip_and_grid_check() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let policy = small_policy(&p);
        let model = fit_integrands(&policy, &bundle(&p, 600, 7), TmConfig::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: MartingaleModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.document(), model.document());

        let coarse = GridSpec {
            euler_step: 0.05,
            cells: 10,
        };
        let g = DiscretizationGrids::new(&p, coarse).unwrap();
        let other = simulate_paths(&p, &g, 5, 8).unwrap();
        assert!(matches!(
            build_martingale(&model, &other.path(0), MartingaleTerms::Complete),
            Err(Error::GridMismatch(_))
        ));
    }
}
