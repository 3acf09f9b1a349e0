use serde::{Deserialize, Serialize};

/// Which bound an estimate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundKind {
    #[serde(rename = "LB")]
    Lower,
    #[serde(rename = "AB")]
    NestedUpper,
    #[serde(rename = "TM")]
    TrueMartingaleUpper,
}

impl BoundKind {
    pub fn label(self) -> &'static str {
        match self {
            BoundKind::Lower => "LB",
            BoundKind::NestedUpper => "AB",
            BoundKind::TrueMartingaleUpper => "TM",
        }
    }
}

/// Monte Carlo estimate with its sampling error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub kind: BoundKind,
    pub mean: f64,
    pub stderr: f64,
    pub ci95_halfwidth: f64,
    pub n_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub seed: u64,
}

impl BoundEstimate {
    /// Mean and standard error of `samples`, summed in index order.
    pub fn from_samples(kind: BoundKind, samples: &[f64], seed: u64) -> Self {
        let (mean, stderr) = mean_and_stderr(samples);
        Self {
            kind,
            mean,
            stderr,
            ci95_halfwidth: 1.96 * stderr,
            n_paths: samples.len(),
            wall_time_s: None,
            seed,
        }
    }

    pub fn with_wall_time(mut self, seconds: f64) -> Self {
        self.wall_time_s = Some(seconds);
        self
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn joint_stderr(&self, other: &BoundEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Sample mean and standard error (unbiased variance). One sample gives a
/// zero standard error.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_of_small_sample() {
        let e = BoundEstimate::from_samples(BoundKind::Lower, &[1.0, 2.0, 3.0, 4.0], 9);
        assert_eq!(e.mean, 2.5);
        let se = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((e.stderr - se).abs() < 1e-15);
        assert!((e.ci95_halfwidth - 1.96 * se).abs() < 1e-15);
        assert_eq!(e.n_paths, 4);
        assert_eq!(e.seed, 9);
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let e = BoundEstimate::from_samples(BoundKind::TrueMartingaleUpper, &[0.0; 10], 0);
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn kind_serializes_as_label() {
        for k in [
            BoundKind::Lower,
            BoundKind::NestedUpper,
            BoundKind::TrueMartingaleUpper,
        ] {
            assert_eq!(
                serde_json::to_string(&k).unwrap(),
                format!("\"{}\"", k.label())
            );
        }
    }

    #[test]
    fn wall_time_omitted_unless_set() {
        let e = BoundEstimate::from_samples(BoundKind::Lower, &[1.0], 0);
        assert!(!serde_json::to_string(&e).unwrap().contains("wall_time_s"));
        let e = e.with_wall_time(1.5);
        assert!(serde_json::to_string(&e).unwrap().contains("wall_time_s"));
    }
}
