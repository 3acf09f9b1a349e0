//! Closed-form European min-put prices and deltas.
//!
//! The Black–Scholes ("non-jump") pricer feeds the regression bases; the
//! truncated Merton series for one asset is a validation oracle.

// Negated comparisons below also reject NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::normal;
use crate::quadrature::GaussLegendre;

/// Lower end of the truncated integration range for the multi-asset formula.
const Z_LOWER: f64 = -8.0;
const Z_UPPER: f64 = 8.0;
/// Relative bump for multi-asset finite-difference deltas.
const FD_BUMP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EuroPricerConfig {
    /// Gauss–Legendre nodes for the one-dimensional integral (n >= 2).
    pub quad_nodes: usize,
    /// Largest Poisson index kept in the Merton series.
    pub series_cutoff: usize,
    /// Bound on the discarded Poisson mass.
    pub tail_tol: f64,
}

impl Default for EuroPricerConfig {
    fn default() -> Self {
        Self {
            quad_nodes: 128,
            series_cutoff: 50,
            tail_tol: 1e-12,
        }
    }
}

impl EuroPricerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.quad_nodes < 16 {
            v.push("quad_nodes must be >= 16".into());
        }
        if !(self.tail_tol > 0.0) {
            v.push("tail_tol must be > 0".into());
        }
        v
    }
}

/// Black–Scholes put on one asset with continuous dividend yield.
pub fn bs_put_1d(x: f64, sk: f64, r: f64, q: f64, sigma: f64, tau: f64) -> f64 {
    let s = sigma * tau.sqrt();
    let df_r = (-r * tau).exp();
    let df_q = (-q * tau).exp();
    if s == 0.0 {
        return (sk * df_r - x * df_q).max(0.0);
    }
    let d_plus = ((sk / x).ln() - (r - q - 0.5 * sigma * sigma) * tau) / s;
    let d_minus = d_plus - s;
    sk * df_r * normal::cdf(d_plus) - x * df_q * normal::cdf(d_minus)
}

/// `dP/dx = -e^{-q tau} N(-d_1)`.
pub fn bs_put_delta_1d(x: f64, sk: f64, r: f64, q: f64, sigma: f64, tau: f64) -> f64 {
    let s = sigma * tau.sqrt();
    let df_q = (-q * tau).exp();
    if s == 0.0 {
        let itm = sk * (-r * tau).exp() > x * df_q;
        return if itm { -df_q } else { 0.0 };
    }
    let d_minus = ((sk / x).ln() - (r - q + 0.5 * sigma * sigma) * tau) / s;
    -df_q * normal::cdf(d_minus)
}

/// Black–Scholes min-put pricer for a fixed market, reusable across states.
#[derive(Debug, Clone)]
pub struct MinPutPricer {
    r: f64,
    q: f64,
    sigma: f64,
    sk: f64,
    n: usize,
    quad: Option<GaussLegendre>,
}

impl MinPutPricer {
    pub fn new(params: &ModelParams, cfg: &EuroPricerConfig) -> Result<Self> {
        let v = cfg.violations();
        if !v.is_empty() {
            return Err(Error::param(v.join("; ")));
        }
        let n = params.n_assets();
        Ok(Self {
            r: params.r,
            q: params.delta,
            sigma: params.sigma,
            sk: params.sk,
            n,
            quad: (n >= 2).then(|| GaussLegendre::new(cfg.quad_nodes)),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    /// Price with `tau` years to maturity.
    pub fn price(&self, x: &[f64], tau: f64) -> f64 {
        self.price_with_vol(x, tau, self.sigma)
    }

    fn price_with_vol(&self, x: &[f64], tau: f64, sigma: f64) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        match self.quad.as_ref() {
            None => bs_put_1d(x[0], self.sk, self.r, self.q, sigma, tau),
            Some(quad) => self.price_multi(quad, x, tau, sigma),
        }
    }

    fn price_multi(&self, quad: &GaussLegendre, x: &[f64], tau: f64, sigma: f64) -> f64 {
        let s = sigma * tau.sqrt();
        let df_r = (-self.r * tau).exp();
        let df_q = (-self.q * tau).exp();
        if s == 0.0 {
            let min = x.iter().copied().fold(f64::INFINITY, f64::min);
            return (self.sk * df_r - min * df_q).max(0.0);
        }
        let mu = (self.r - self.q - 0.5 * sigma * sigma) * tau;
        let mut all_above = 1.0;
        let mut share_terms = 0.0;
        for (l, &xl) in x.iter().enumerate() {
            let d_plus = ((self.sk / xl).ln() - mu) / s;
            let d_minus = d_plus - s;
            all_above *= 1.0 - normal::cdf(d_plus);
            let upper = d_minus.min(Z_UPPER);
            if upper <= Z_LOWER {
                continue;
            }
            let shifts: Vec<f64> = x
                .iter()
                .enumerate()
                .filter(|&(o, _)| o != l)
                .map(|(_, &xo)| (xo / xl).ln() / s - s)
                .collect();
            let integral = quad.integrate(Z_LOWER, upper, |z| {
                let weight = (-0.5 * z * z).exp();
                shifts
                    .iter()
                    .fold(weight, |acc, &c| acc * normal::cdf(c - z))
            });
            share_terms += xl * df_q * integral / (2.0 * PI).sqrt();
        }
        df_r * self.sk * (1.0 - all_above) - share_terms
    }

    /// `dC/dx_i` with `tau` years to maturity: analytic for one asset,
    /// central differences with bump `1e-4 x_i` otherwise.
    pub fn delta(&self, x: &[f64], tau: f64, i: usize) -> f64 {
        if self.n == 1 {
            return bs_put_delta_1d(x[0], self.sk, self.r, self.q, self.sigma, tau);
        }
        let h = FD_BUMP * x[i];
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[i] += h;
        down[i] -= h;
        (self.price(&up, tau) - self.price(&down, tau)) / (2.0 * h)
    }

    /// Single-asset constants for pricing many states at one `tau`.
    pub(crate) fn slice_1d(&self, tau: f64) -> PutSlice1d {
        let s = self.sigma * tau.sqrt();
        PutSlice1d {
            sk_df: self.sk * (-self.r * tau).exp(),
            df_q: (-self.q * tau).exp(),
            s,
            inv_s: 1.0 / s,
            log_fwd_strike: self.sk.ln() - (self.r - self.q - 0.5 * self.sigma * self.sigma) * tau,
        }
    }
}

/// Black–Scholes put at a fixed time to maturity, evaluated from `ln x`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PutSlice1d {
    sk_df: f64,
    df_q: f64,
    s: f64,
    inv_s: f64,
    log_fwd_strike: f64,
}

impl PutSlice1d {
    #[inline]
    pub(crate) fn price_log(&self, log_x: f64) -> f64 {
        let d_plus = (self.log_fwd_strike - log_x) * self.inv_s;
        self.sk_df * normal::cdf(d_plus) - log_x.exp() * self.df_q * normal::cdf(d_plus - self.s)
    }

    /// `dC/dx` at `ln x`.
    #[inline]
    pub(crate) fn delta_log(&self, log_x: f64) -> f64 {
        -self.df_q * normal::cdf((self.log_fwd_strike - log_x) * self.inv_s - self.s)
    }

    /// `(price, delta)` at `ln x`.
    #[inline]
    pub(crate) fn price_delta_log(&self, log_x: f64) -> (f64, f64) {
        let d_plus = (self.log_fwd_strike - log_x) * self.inv_s;
        let n_minus = normal::cdf(d_plus - self.s);
        let price = self.sk_df * normal::cdf(d_plus) - log_x.exp() * self.df_q * n_minus;
        (price, -self.df_q * n_minus)
    }
}

/// Cubic Hermite table of a [`PutSlice1d`] on a uniform grid in `ln x`.
/// Spacing is an eighth of the slice's log-volatility, capped at `0.01`,
/// which keeps the interpolation error below `1e-6` per unit of strike.
/// Outside the tabulated range the exact slice is used.
#[derive(Debug, Clone)]
pub(crate) struct PutTable1d {
    slice: PutSlice1d,
    u0: f64,
    inv_h: f64,
    /// Power-basis coefficients of the cubic on each cell, in the local
    /// coordinate `t` in `[0, 1)`.
    cells: Vec<[f64; 4]>,
}

impl PutTable1d {
    pub(crate) fn new(slice: PutSlice1d, center: f64, half_width: f64) -> Self {
        let h = (slice.s / 8.0).min(0.01);
        let count = (2.0 * half_width / h).ceil() as usize + 1;
        let u0 = center - half_width;
        let nodes: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let u = u0 + i as f64 * h;
                let (p, d) = slice.price_delta_log(u);
                (p, h * d * u.exp())
            })
            .collect();
        let cells = nodes
            .windows(2)
            .map(|w| {
                let ((p0, d0), (p1, d1)) = (w[0], w[1]);
                [
                    p0,
                    d0,
                    3.0 * (p1 - p0) - 2.0 * d0 - d1,
                    2.0 * (p0 - p1) + d0 + d1,
                ]
            })
            .collect();
        Self {
            slice,
            u0,
            inv_h: 1.0 / h,
            cells,
        }
    }

    #[inline]
    pub(crate) fn price_log(&self, log_x: f64) -> f64 {
        let s = (log_x - self.u0) * self.inv_h;
        let i = s as usize;
        match self.cells.get(i) {
            Some(c) if s >= 0.0 => {
                let t = s - i as f64;
                c[0] + t * (c[1] + t * (c[2] + t * c[3]))
            }
            _ => self.slice.price_log(log_x),
        }
    }
}

fn check_inputs(t: f64, x: &[f64], maturity: f64, params: &ModelParams) -> Result<()> {
    if !(maturity > t) {
        return Err(Error::param(format!(
            "maturity {maturity} must exceed t = {t}"
        )));
    }
    if x.len() != params.n_assets() {
        return Err(Error::param("price vector length differs from asset count"));
    }
    if x.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::param("prices must be finite and > 0"));
    }
    if !(params.sigma > 0.0) {
        return Err(Error::param(
            "sigma must be > 0 for the Black-Scholes pricer",
        ));
    }
    Ok(())
}

/// Non-jump European min-put value at time `t` for the market in `params`.
pub fn bs_min_put(
    t: f64,
    x: &[f64],
    maturity: f64,
    params: &ModelParams,
    cfg: &EuroPricerConfig,
) -> Result<f64> {
    check_inputs(t, x, maturity, params)?;
    Ok(MinPutPricer::new(params, cfg)?.price(x, maturity - t))
}

/// `dC/dx_i` of [`bs_min_put`].
pub fn bs_min_put_delta(
    t: f64,
    x: &[f64],
    maturity: f64,
    asset: usize,
    params: &ModelParams,
    cfg: &EuroPricerConfig,
) -> Result<f64> {
    check_inputs(t, x, maturity, params)?;
    if asset >= x.len() {
        return Err(Error::param("asset index out of range"));
    }
    Ok(MinPutPricer::new(params, cfg)?.delta(x, maturity - t, asset))
}

/// European put under the jump model, single asset: the Poisson-weighted
/// series of Black–Scholes prices with jump-adjusted volatility and spot.
pub fn merton_put_1d(
    t: f64,
    x: f64,
    maturity: f64,
    params: &ModelParams,
    cfg: &EuroPricerConfig,
) -> Result<f64> {
    if params.n_assets() != 1 {
        return Err(Error::param(
            "the Merton series pricer supports one asset only",
        ));
    }
    check_inputs(t, &[x], maturity, params)?;
    let tau = maturity - t;
    let lt = params.lambda * tau;
    let jump_mean = params.m + 0.5 * params.theta * params.theta;
    let compensator = params.lambda * jump_mean.exp_m1() * tau;
    let mut weight = (-lt).exp();
    let mut covered = 0.0;
    let mut value = 0.0;
    for k in 0..=cfg.series_cutoff {
        if k > 0 {
            weight *= lt / k as f64;
        }
        let kf = k as f64;
        let vol = (params.sigma * params.sigma + kf * params.theta * params.theta / tau).sqrt();
        let x_k = x * (kf * jump_mean - compensator).exp();
        value += weight * bs_put_1d(x_k, params.sk, params.r, params.delta, vol, tau);
        covered += weight;
        if 1.0 - covered < cfg.tail_tol {
            return Ok(value);
        }
    }
    Err(Error::param(format!(
        "series cutoff {} leaves Poisson mass {:e} above tail_tol {:e}",
        cfg.series_cutoff,
        1.0 - covered,
        cfg.tail_tol
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize) -> ModelParams {
        ModelParams::table(n, 1.0, 40.0)
    }

    /// Textbook put `K e^{-r tau} N(-d2) - S e^{-q tau} N(-d1)` written
    /// independently of the implementation's `d_plus` convention.
    fn textbook_put(s: f64, k: f64, r: f64, q: f64, v: f64, tau: f64) -> f64 {
        let d1 = ((s / k).ln() + (r - q + 0.5 * v * v) * tau) / (v * tau.sqrt());
        let d2 = d1 - v * tau.sqrt();
        k * (-r * tau).exp() * normal::cdf(-d2) - s * (-q * tau).exp() * normal::cdf(-d1)
    }

    #[test]
    fn atm_put_value() {
        let p = bs_min_put(0.0, &[40.0], 1.0, &table(1), &EuroPricerConfig::default()).unwrap();
        let oracle = textbook_put(40.0, 40.0, 0.04, 0.0, 0.2, 1.0);
        assert!((p - oracle).abs() < 1e-12);
        assert!((p - 2.402).abs() < 1e-3, "{p}");
    }

    #[test]
    fn deep_itm_limit() {
        let p = bs_min_put(0.0, &[1e-4], 1.0, &table(1), &EuroPricerConfig::default()).unwrap();
        assert!((p - (40.0 * (-0.04f64).exp() - 1e-4)).abs() < 1e-9);
    }

    #[test]
    fn atm_delta() {
        let d = bs_min_put_delta(
            0.0,
            &[40.0],
            1.0,
            0,
            &table(1),
            &EuroPricerConfig::default(),
        )
        .unwrap();
        assert!((d + normal::cdf(-0.3)).abs() < 1e-14);
        assert!((d + 0.3821).abs() < 1e-4);
        let far =
            bs_min_put_delta(0.0, &[1e4], 1.0, 0, &table(1), &EuroPricerConfig::default()).unwrap();
        assert!(far.abs() < 1e-12);
    }

    #[test]
    fn analytic_delta_matches_central_difference() {
        let cfg = EuroPricerConfig::default();
        let p = table(1);
        for x in [36.0, 40.0, 44.0] {
            let d = bs_min_put_delta(0.0, &[x], 1.0, 0, &p, &cfg).unwrap();
            let h = 1e-3;
            let up = bs_min_put(0.0, &[x + h], 1.0, &p, &cfg).unwrap();
            let dn = bs_min_put(0.0, &[x - h], 1.0, &p, &cfg).unwrap();
            let fd = (up - dn) / (2.0 * h);
            assert!(((d - fd) / d).abs() < 1e-6, "x = {x}: {d} vs {fd}");
        }
    }

    #[test]
    fn two_asset_formula_matches_one_asset_when_other_is_far_out() {
        // With asset 2 astronomically high, min(x1, x2) = x1.
        let cfg = EuroPricerConfig::default();
        let two = bs_min_put(0.0, &[40.0, 4e6], 1.0, &table(2), &cfg).unwrap();
        let one = bs_min_put(0.0, &[40.0], 1.0, &table(1), &cfg).unwrap();
        assert!((two - one).abs() < 1e-9, "{two} vs {one}");
    }

    #[test]
    fn two_asset_symmetry_and_delta_symmetry() {
        let cfg = EuroPricerConfig::default();
        let p = table(2);
        let a = bs_min_put(0.2, &[37.0, 43.5], 1.0, &p, &cfg).unwrap();
        let b = bs_min_put(0.2, &[43.5, 37.0], 1.0, &p, &cfg).unwrap();
        assert!((a - b).abs() < 1e-10);
        let d1 = bs_min_put_delta(0.0, &[40.0, 40.0], 1.0, 0, &p, &cfg).unwrap();
        let d2 = bs_min_put_delta(0.0, &[40.0, 40.0], 1.0, 1, &p, &cfg).unwrap();
        assert!((d1 - d2).abs() < 1e-10);
        assert!(d1 < 0.0);
    }

    #[test]
    fn two_asset_quadrature_converged() {
        let p = table(2);
        let base = bs_min_put(0.0, &[36.0, 44.0], 1.0, &p, &EuroPricerConfig::default()).unwrap();
        let cfg = EuroPricerConfig {
            quad_nodes: 256,
            ..Default::default()
        };
        let fine = bs_min_put(0.0, &[36.0, 44.0], 1.0, &p, &cfg).unwrap();
        assert!(((fine - base) / base).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = EuroPricerConfig::default();
        let p = table(1);
        assert!(bs_min_put(1.0, &[40.0], 1.0, &p, &cfg).is_err());
        assert!(bs_min_put(0.0, &[0.0], 1.0, &p, &cfg).is_err());
        assert!(bs_min_put(0.0, &[40.0, 40.0], 1.0, &p, &cfg).is_err());
        assert!(merton_put_1d(0.0, 40.0, 1.0, &table(2), &cfg).is_err());
        let small = EuroPricerConfig {
            series_cutoff: 2,
            ..Default::default()
        };
        assert!(merton_put_1d(0.0, 40.0, 1.0, &p, &small).is_err());
    }

    #[test]
    fn merton_without_jumps_is_black_scholes() {
        let cfg = EuroPricerConfig::default();
        let mut p = table(1);
        p.lambda = 0.0;
        for x in [30.0, 40.0, 50.0] {
            let m = merton_put_1d(0.0, x, 1.0, &p, &cfg).unwrap();
            let b = bs_min_put(0.0, &[x], 1.0, &p, &cfg).unwrap();
            assert_eq!(m, b);
        }
    }

    #[test]
    fn poisson_tail_beyond_cutoff_is_negligible() {
        // Independent tail sum: sum_{k > 50} e^{-1} / k!.
        let mut term = (-1.0f64).exp();
        for k in 1..=50 {
            term /= k as f64;
        }
        let mut tail = 0.0;
        let mut t = term;
        for k in 51..200 {
            t /= k as f64;
            tail += t;
        }
        assert!(tail < 1e-12);
    }

    #[test]
    fn merton_price_bounds_and_monotonicity() {
        let cfg = EuroPricerConfig::default();
        let p = table(1);
        let mut prev = f64::INFINITY;
        for x in [30.0, 36.0, 40.0, 44.0, 50.0] {
            let v = merton_put_1d(0.0, x, 1.0, &p, &cfg).unwrap();
            assert!(v >= 0.0 && v <= 40.0 * (-0.04f64).exp());
            assert!(v < prev);
            prev = v;
        }
        let mut prev = 0.0;
        for lambda in [0.0, 0.5, 1.0, 2.0, 3.0] {
            let mut q = p.clone();
            q.lambda = lambda;
            let v = merton_put_1d(0.0, 40.0, 1.0, &q, &cfg).unwrap();
            assert!(v >= prev, "lambda = {lambda}");
            prev = v;
        }
    }

    #[test]
    fn table_matches_slice() {
        let pricer = MinPutPricer::new(&table(1), &EuroPricerConfig::default()).unwrap();
        for tau in [0.01, 0.1, 1.0] {
            let slice = pricer.slice_1d(tau);
            let tab = PutTable1d::new(slice, 40f64.ln(), 1.0);
            let mut worst: f64 = 0.0;
            for i in 0..5000 {
                let u = 40f64.ln() - 1.2 + 2.4 * i as f64 / 5000.0;
                worst = worst.max((tab.price_log(u) - slice.price_log(u)).abs());
            }
            assert!(worst < 1e-6, "tau {tau}: {worst:e}");
        }
    }

    #[test]
    fn slice_matches_pricer() {
        let p = table(1);
        let pricer = MinPutPricer::new(&p, &EuroPricerConfig::default()).unwrap();
        let s = pricer.slice_1d(0.37);
        for x in [20.0, 39.0, 61.0] {
            let (v, d) = s.price_delta_log(f64::ln(x));
            assert!((v - pricer.price(&[x], 0.37)).abs() < 1e-12);
            assert!((d - pricer.delta(&[x], 0.37, 0)).abs() < 1e-12);
            assert!((s.price_log(f64::ln(x)) - v).abs() < 1e-15);
            assert_eq!(s.delta_log(f64::ln(x)), d);
        }
    }
}
