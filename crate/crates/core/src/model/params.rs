use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Merton jump-diffusion market and the Bermudan min-put contract written on it.
///
/// Log-jump amplitudes are `Normal(m, theta^2)` and arrive at rate `lambda`.
/// A single jump moves every asset by the same factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Risk-free rate per year.
    pub r: f64,
    /// Continuous dividend yield per year.
    pub delta: f64,
    /// Diffusion volatility.
    pub sigma: f64,
    /// Jump intensity per year.
    pub lambda: f64,
    /// Mean of the log-jump amplitude.
    pub m: f64,
    /// Standard deviation of the log-jump amplitude.
    pub theta: f64,
    /// Initial price of each asset.
    pub x0: Vec<f64>,
    /// Strike.
    pub sk: f64,
    /// Maturity in years.
    pub maturity: f64,
    /// Number of exercise intervals; exercise dates are `j * maturity / exercise_intervals`.
    pub exercise_intervals: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::table(1, 1.0, 40.0)
    }
}

impl ModelParams {
    /// The parameter set used throughout the reference experiments:
    /// `SK = 40, r = 4%, delta = 0, sigma = 20%, m = 6%, theta = 20%, T = 1`
    /// and ten exercise intervals.
    pub fn table(n: usize, lambda: f64, x: f64) -> Self {
        Self {
            r: 0.04,
            delta: 0.0,
            sigma: 0.2,
            lambda,
            m: 0.06,
            theta: 0.2,
            x0: vec![x; n],
            sk: 40.0,
            maturity: 1.0,
            exercise_intervals: 10,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.x0.len()
    }

    /// Collects every violated invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let finite = [
            ("r", self.r),
            ("delta", self.delta),
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("m", self.m),
            ("theta", self.theta),
            ("sk", self.sk),
            ("maturity", self.maturity),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                v.push(format!("{name} must be finite"));
            }
        }
        if self.sigma < 0.0 {
            v.push("sigma must be >= 0".into());
        }
        if self.lambda < 0.0 {
            v.push("lambda must be >= 0".into());
        }
        if self.lambda > 0.0 && self.theta <= 0.0 {
            v.push("theta must be > 0 when lambda > 0".into());
        }
        if self.maturity <= 0.0 {
            v.push("maturity must be > 0".into());
        }
        if self.exercise_intervals == 0 {
            v.push("exercise_intervals must be >= 1".into());
        }
        if self.x0.is_empty() {
            v.push("x0 must contain at least one asset".into());
        }
        if self.x0.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            v.push("every x0 component must be finite and > 0".into());
        }
        if self.sk < 0.0 {
            v.push("sk must be >= 0".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::param(v.join("; ")))
        }
    }

    /// `E[e^J - 1]` for one jump.
    pub fn jump_compensator(&self) -> f64 {
        (self.m + 0.5 * self.theta * self.theta).exp_m1()
    }

    /// Risk-neutral log drift `r - delta - sigma^2/2 - lambda E[e^J - 1]`.
    pub fn log_drift(&self) -> f64 {
        self.r - self.delta - 0.5 * self.sigma * self.sigma - self.lambda * self.jump_compensator()
    }

    /// Exercise date `T_j`.
    pub fn exercise_date(&self, j: usize) -> f64 {
        j as f64 * self.maturity / self.exercise_intervals as f64
    }

    /// Undiscounted min-put payoff `(SK - min x)^+`.
    #[inline]
    pub fn payoff(&self, x: &[f64]) -> f64 {
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        (self.sk - min).max(0.0)
    }

    /// Discount factor from `t` back to 0.
    #[inline]
    pub fn discount(&self, t: f64) -> f64 {
        (-self.r * t).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_drift() {
        let p = ModelParams::table(1, 1.0, 40.0);
        let expected = 0.02 - (0.08f64.exp() - 1.0);
        assert!((p.log_drift() - expected).abs() < 1e-15);
        assert!((p.log_drift() + 0.063_287).abs() < 1e-5);
    }

    #[test]
    fn drift_scales_compensator_with_intensity() {
        let p = ModelParams::table(1, 3.0, 40.0);
        let expected = 0.02 - 3.0 * (0.08f64.exp() - 1.0);
        assert!((p.log_drift() - expected).abs() < 1e-15);
    }

    #[test]
    fn invariants_reported_together() {
        let mut p = ModelParams::table(1, 1.0, 40.0);
        p.sigma = -1.0;
        p.theta = 0.0;
        p.exercise_intervals = 0;
        p.x0 = vec![0.0];
        assert_eq!(p.violations().len(), 4);
        assert!(p.validate().is_err());
        assert!(ModelParams::default().validate().is_ok());
    }

    #[test]
    fn min_put_payoff() {
        let p = ModelParams::table(2, 1.0, 40.0);
        assert_eq!(p.payoff(&[36.0, 44.0]), 4.0);
        assert_eq!(p.payoff(&[41.0, 44.0]), 0.0);
    }
}
