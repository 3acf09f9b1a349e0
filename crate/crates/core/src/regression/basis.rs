use serde::{Deserialize, Serialize};

use crate::analytic::{EuroPricerConfig, MinPutPricer};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Function families for the integrand regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BasisVariant {
    /// `{1}`
    Constant,
    /// `{1, x, x^2, x^3}` per asset.
    Polynomial,
    /// `{1, C, C^2}` with `C` the non-jump European to maturity.
    European,
    /// European deltas (Wiener side) or European jump increments (jump side)
    /// towards the next exercise date and towards maturity.
    EuroGreeks,
}

impl BasisVariant {
    pub const ALL: [BasisVariant; 4] = [
        BasisVariant::Constant,
        BasisVariant::Polynomial,
        BasisVariant::European,
        BasisVariant::EuroGreeks,
    ];

    pub fn number(self) -> u8 {
        self.into()
    }
}

impl TryFrom<u8> for BasisVariant {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::Constant),
            2 => Ok(Self::Polynomial),
            3 => Ok(Self::European),
            4 => Ok(Self::EuroGreeks),
            other => Err(Error::UnknownBasisVariant(other)),
        }
    }
}

impl From<BasisVariant> for u8 {
    fn from(v: BasisVariant) -> u8 {
        match v {
            BasisVariant::Constant => 1,
            BasisVariant::Polynomial => 2,
            BasisVariant::European => 3,
            BasisVariant::EuroGreeks => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "variant", rename_all = "snake_case")]
pub enum BasisSpec {
    /// Continuation-value basis: monomials of total degree <= 3 plus the
    /// non-jump European to maturity, its square and its cube.
    LsPolicy,
    /// Wiener integrand basis.
    RhoW(BasisVariant),
    /// Jump integrand basis, evaluated per amplitude cell.
    RhoP(BasisVariant),
}

impl BasisSpec {
    pub fn dimension(&self, n_assets: usize) -> usize {
        match *self {
            BasisSpec::LsPolicy => monomial_exponents(n_assets).len() + 3,
            BasisSpec::RhoW(v) | BasisSpec::RhoP(v) => match v {
                BasisVariant::Constant => 1,
                BasisVariant::Polynomial => 1 + 3 * n_assets,
                BasisVariant::European => 3,
                BasisVariant::EuroGreeks => match self {
                    BasisSpec::RhoW(_) => 1 + 2 * n_assets,
                    _ => 3,
                },
            },
        }
    }
}

/// Exponent tuples of all monomials of total degree <= 3, graded by degree.
fn monomial_exponents(n: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![0u8; n]];
    for degree in 1..=3u8 {
        let mut current = vec![0u8; n];
        collect_degree(n, 0, degree, &mut current, &mut out);
    }
    out
}

fn collect_degree(n: usize, start: usize, left: u8, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if left == 0 {
        out.push(current.clone());
        return;
    }
    for i in start..n {
        current[i] += 1;
        collect_degree(n, i, left - 1, current, out);
        current[i] -= 1;
    }
}

/// Where a basis row is evaluated beyond `(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisExtras {
    /// Next exercise date `T_{j+1}` for `t` in `[T_j, T_{j+1})`.
    pub next_exercise: f64,
    /// Representative log-amplitude `y_k` (jump basis only).
    pub cell_rep: f64,
}

/// Evaluates one [`BasisSpec`] for a fixed market.
#[derive(Debug, Clone)]
pub struct BasisEvaluator {
    spec: BasisSpec,
    pricer: MinPutPricer,
    maturity: f64,
    n: usize,
    monomials: Vec<Vec<u8>>,
}

impl BasisEvaluator {
    pub fn new(spec: BasisSpec, params: &ModelParams, cfg: &EuroPricerConfig) -> Result<Self> {
        let n = params.n_assets();
        Ok(Self {
            spec,
            pricer: MinPutPricer::new(params, cfg)?,
            maturity: params.maturity,
            n,
            monomials: match spec {
                BasisSpec::LsPolicy => monomial_exponents(n),
                _ => Vec::new(),
            },
        })
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension(self.n)
    }

    pub fn pricer(&self) -> &MinPutPricer {
        &self.pricer
    }

    /// Writes the basis row at `(t, x)` into `out`.
    pub fn row(&self, t: f64, x: &[f64], extras: BasisExtras, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dimension());
        let to_maturity = self.maturity - t;
        match self.spec {
            BasisSpec::LsPolicy => {
                for (o, e) in out.iter_mut().zip(&self.monomials) {
                    *o = x.iter().zip(e).map(|(&xi, &p)| xi.powi(p as i32)).product();
                }
                let c = self.pricer.price(x, to_maturity);
                let k = self.monomials.len();
                out[k] = c;
                out[k + 1] = c * c;
                out[k + 2] = c * c * c;
            }
            BasisSpec::RhoW(v) | BasisSpec::RhoP(v) => match v {
                BasisVariant::Constant => out[0] = 1.0,
                BasisVariant::Polynomial => {
                    out[0] = 1.0;
                    for (i, &xi) in x.iter().enumerate() {
                        out[1 + 3 * i] = xi;
                        out[2 + 3 * i] = xi * xi;
                        out[3 + 3 * i] = xi * xi * xi;
                    }
                }
                BasisVariant::European => {
                    let c = self.pricer.price(x, to_maturity);
                    out[0] = 1.0;
                    out[1] = c;
                    out[2] = c * c;
                }
                BasisVariant::EuroGreeks => {
                    let to_next = extras.next_exercise - t;
                    out[0] = 1.0;
                    if matches!(self.spec, BasisSpec::RhoW(_)) {
                        for (i, &xi) in x.iter().enumerate() {
                            out[1 + i] = self.pricer.delta(x, to_next, i) * xi;
                            out[1 + self.n + i] = self.pricer.delta(x, to_maturity, i) * xi;
                        }
                    } else {
                        let g = extras.cell_rep.exp();
                        let shifted: Vec<f64> = x.iter().map(|&xi| xi * g).collect();
                        out[1] =
                            self.pricer.price(&shifted, to_next) - self.pricer.price(x, to_next);
                        out[2] = self.pricer.price(&shifted, to_maturity)
                            - self.pricer.price(x, to_maturity);
                    }
                }
            },
        }
    }

    /// Jump-basis rows for every cell at once, row `k` at
    /// `out[k * dim..(k + 1) * dim]`. Prices at `x` are shared across cells.
    pub fn jump_rows(&self, t: f64, x: &[f64], next_exercise: f64, reps: &[f64], out: &mut [f64]) {
        let dim = self.dimension();
        debug_assert_eq!(out.len(), dim * reps.len());
        match self.spec {
            BasisSpec::RhoP(BasisVariant::EuroGreeks) => {
                let to_next = next_exercise - t;
                let to_maturity = self.maturity - t;
                if self.n == 1 {
                    let near = self.pricer.slice_1d(to_next);
                    let far = self.pricer.slice_1d(to_maturity);
                    let lx = x[0].ln();
                    let (near0, far0) = (near.price_log(lx), far.price_log(lx));
                    for (k, &y) in reps.iter().enumerate() {
                        let row = &mut out[k * dim..(k + 1) * dim];
                        row[0] = 1.0;
                        row[1] = near.price_log(lx + y) - near0;
                        row[2] = far.price_log(lx + y) - far0;
                    }
                } else {
                    let near0 = self.pricer.price(x, to_next);
                    let far0 = self.pricer.price(x, to_maturity);
                    let mut shifted = x.to_vec();
                    for (k, &y) in reps.iter().enumerate() {
                        let g = y.exp();
                        for (s, &xi) in shifted.iter_mut().zip(x) {
                            *s = xi * g;
                        }
                        let row = &mut out[k * dim..(k + 1) * dim];
                        row[0] = 1.0;
                        row[1] = self.pricer.price(&shifted, to_next) - near0;
                        row[2] = self.pricer.price(&shifted, to_maturity) - far0;
                    }
                }
            }
            _ => {
                // Remaining jump bases do not depend on the cell.
                let extras = BasisExtras {
                    next_exercise,
                    cell_rep: 0.0,
                };
                let (first, rest) = out.split_at_mut(dim);
                self.row(t, x, extras, first);
                for chunk in rest.chunks_mut(dim) {
                    chunk.copy_from_slice(first);
                }
            }
        }
    }

    /// Wiener-basis row, with a single-asset fast path for the delta basis.
    pub fn wiener_row(&self, t: f64, x: &[f64], next_exercise: f64, out: &mut [f64]) {
        if self.n == 1 && self.spec == BasisSpec::RhoW(BasisVariant::EuroGreeks) {
            let lx = x[0].ln();
            let near = self.pricer.slice_1d(next_exercise - t).delta_log(lx);
            let far = self.pricer.slice_1d(self.maturity - t).delta_log(lx);
            out[0] = 1.0;
            out[1] = near * x[0];
            out[2] = far * x[0];
            return;
        }
        let extras = BasisExtras {
            next_exercise,
            cell_rep: 0.0,
        };
        self.row(t, x, extras, out);
    }
}

/// Checked single-row evaluation.
pub fn evaluate_basis(
    spec: BasisSpec,
    params: &ModelParams,
    cfg: &EuroPricerConfig,
    t: f64,
    x: &[f64],
    extras: BasisExtras,
) -> Result<Vec<f64>> {
    if x.len() != params.n_assets() || x.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::param(
            "basis needs a positive price vector of the model's size",
        ));
    }
    if !(t >= 0.0 && t < params.maturity) {
        return Err(Error::param(format!("t = {t} outside [0, T)")));
    }
    if matches!(
        spec,
        BasisSpec::RhoW(BasisVariant::EuroGreeks) | BasisSpec::RhoP(BasisVariant::EuroGreeks)
    ) && !(extras.next_exercise > t && extras.next_exercise <= params.maturity)
    {
        return Err(Error::param("next exercise date must lie in (t, T]"));
    }
    let eval = BasisEvaluator::new(spec, params, cfg)?;
    let mut out = vec![0.0; eval.dimension()];
    eval.row(t, x, extras, &mut out);
    Ok(out)
}
