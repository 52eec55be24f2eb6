use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SUM_TOLERANCE;
use crate::error::{Error, Result};

/// Probability mass over contents `1..=N`, stored zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityVector(Vec<f64>);

impl PopularityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPopularity("no contents".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPopularity(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidPopularity(format!("entries sum to {sum}")));
        }
        Ok(PopularityVector(probs))
    }

    /// Normalizes nonnegative weights into a PMF.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPopularity(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(Error::InvalidPopularity("weights sum to zero".into()));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n_contents: usize) -> Result<Self> {
        if n_contents == 0 {
            return Err(Error::InvalidParameter("n_contents must be positive".into()));
        }
        Ok(PopularityVector(vec![1.0 / n_contents as f64; n_contents]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Probability of the 1-based content `n`.
    pub fn prob(&self, n: usize) -> f64 {
        self.0[n - 1]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// 1-based index of the most probable content (first on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// Local popularity family used for a user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Zipf {
        alpha: f64,
    },
    Poisson {
        rate: f64,
    },
    #[serde(rename = "nbernoulli")]
    NBernoulli {
        p: f64,
    },
    Gaussian {
        mean: f64,
        std: f64,
    },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistributionSpec::Zipf { alpha } => alpha.is_finite() && alpha >= 0.0,
            DistributionSpec::Poisson { rate } => rate.is_finite() && rate > 0.0,
            DistributionSpec::NBernoulli { p } => (0.0..=1.0).contains(&p),
            DistributionSpec::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid distribution parameters {self:?}"
            )))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DistributionSpec::Zipf { .. } => "zipf",
            DistributionSpec::Poisson { .. } => "poisson",
            DistributionSpec::NBernoulli { .. } => "nbernoulli",
            DistributionSpec::Gaussian { .. } => "gaussian",
        }
    }
}

/// Zipf law over `1..=n_contents`: `P_n = (n^alpha * sum_l l^-alpha)^-1`.
pub fn zipf_pmf(alpha: f64, n_contents: usize) -> Result<PopularityVector> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("zipf alpha must be >= 0, got {alpha}")));
    }
    if n_contents == 0 {
        return Err(Error::InvalidParameter("n_contents must be positive".into()));
    }
    let weights: Vec<f64> = (1..=n_contents).map(|n| (n as f64).powf(-alpha)).collect();
    let norm: f64 = weights.iter().sum();
    // Tiny drift from the division is re-absorbed by the final rescale.
    let probs: Vec<f64> = weights.iter().map(|w| w / norm).collect();
    PopularityVector::from_weights(probs)
}

/// PMF over `1..=n_contents` for any supported family.
///
/// Poisson and Gaussian are truncated to the content range and renormalized;
/// `NBernoulli(p)` is Binomial(N-1, p) with `k = 0..N-1` mapped to content `k+1`.
pub fn discrete_pmf(spec: DistributionSpec, n_contents: usize) -> Result<PopularityVector> {
    spec.validate()?;
    if n_contents == 0 {
        return Err(Error::InvalidParameter("n_contents must be positive".into()));
    }
    match spec {
        DistributionSpec::Zipf { alpha } => zipf_pmf(alpha, n_contents),
        DistributionSpec::Poisson { rate } => {
            let ln_rate = rate.ln();
            let mut ln_fact = 0.0;
            let logs: Vec<f64> = (0..n_contents)
                .map(|k| {
                    if k > 0 {
                        ln_fact += (k as f64).ln();
                    }
                    k as f64 * ln_rate - rate - ln_fact
                })
                .collect();
            from_log_weights(&logs)
        }
        DistributionSpec::NBernoulli { p } => {
            let trials = n_contents - 1;
            if p == 0.0 || p == 1.0 || trials == 0 {
                let mut probs = vec![0.0; n_contents];
                let at = if p == 1.0 { trials } else { 0 };
                probs[at] = 1.0;
                return PopularityVector::new(probs);
            }
            let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
            let mut ln_choose = 0.0;
            let logs: Vec<f64> = (0..n_contents)
                .map(|k| {
                    if k > 0 {
                        ln_choose += ((trials - k + 1) as f64).ln() - (k as f64).ln();
                    }
                    ln_choose + k as f64 * ln_p + (trials - k) as f64 * ln_q
                })
                .collect();
            from_log_weights(&logs)
        }
        DistributionSpec::Gaussian { mean, std } => {
            let logs: Vec<f64> = (1..=n_contents)
                .map(|n| {
                    let z = (n as f64 - mean) / std;
                    -0.5 * z * z
                })
                .collect();
            from_log_weights(&logs)
        }
    }
}

fn from_log_weights(logs: &[f64]) -> Result<PopularityVector> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    PopularityVector::from_weights(logs.iter().map(|l| (l - max).exp()).collect())
}

/// Inverse-CDF sampler over a fixed PMF.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CategoricalSampler {
    pub fn new(pmf: &PopularityVector) -> Self {
        let mut acc = 0.0;
        let cdf = pmf
            .as_slice()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = pmf.as_slice().iter().rposition(|p| *p > 0.0).unwrap_or(0);
        CategoricalSampler { cdf, last_positive }
    }

    /// Draws a zero-based index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.last_positive)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zipf_uniform_when_alpha_zero() {
        let p = zipf_pmf(0.0, 4).unwrap();
        assert!(close(p.as_slice(), &[0.25; 4], 1e-15));
    }

    #[test]
    fn zipf_alpha_one_two_contents() {
        let p = zipf_pmf(1.0, 2).unwrap();
        assert!(close(p.as_slice(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
    }

    #[test]
    fn zipf_matches_scalar_summation() {
        // Independent evaluation of the closed form, one content at a time.
        let alpha = 2.14;
        let n = 32;
        let p = zipf_pmf(alpha, n).unwrap();
        for k in 1..=n {
            let mut s = 0.0;
            for l in 1..=n {
                s += 1.0 / (l as f64).powf(alpha);
            }
            let expected = 1.0 / ((k as f64).powf(alpha) * s);
            assert!((p.prob(k) - expected).abs() < 1e-14, "content {k}");
        }
        for w in p.as_slice().windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn zipf_rejects_bad_input() {
        assert!(zipf_pmf(-0.1, 4).is_err());
        assert!(zipf_pmf(1.0, 0).is_err());
        assert!(zipf_pmf(f64::NAN, 4).is_err());
    }

    #[test]
    fn nbernoulli_is_binomial() {
        let p = discrete_pmf(DistributionSpec::NBernoulli { p: 0.5 }, 4).unwrap();
        assert!(close(p.as_slice(), &[0.125, 0.375, 0.375, 0.125], 1e-15));
        let one = discrete_pmf(DistributionSpec::NBernoulli { p: 1.0 }, 4).unwrap();
        assert_eq!(one.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        let zero = discrete_pmf(DistributionSpec::NBernoulli { p: 0.0 }, 4).unwrap();
        assert_eq!(zero.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gaussian_matches_renormalized_density() {
        let p = discrete_pmf(DistributionSpec::Gaussian { mean: 6.0, std: 2.30 }, 32).unwrap();
        assert_eq!(p.mode(), 6);
        let dens: Vec<f64> = (1..=32)
            .map(|n| {
                let z = (n as f64 - 6.0) / 2.30;
                (-0.5 * z * z).exp() / (2.30 * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        let s: f64 = dens.iter().sum();
        let expected: Vec<f64> = dens.iter().map(|d| d / s).collect();
        assert!(close(p.as_slice(), &expected, 1e-14));
    }

    #[test]
    fn poisson_mode_and_mass() {
        let p = discrete_pmf(DistributionSpec::Poisson { rate: 8.0 }, 32).unwrap();
        let sum: f64 = p.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // Poisson(8) has equal mass at k=7 and k=8; content 9 (k=8) is a mode.
        let m = p.as_slice().iter().cloned().fold(0.0, f64::max);
        assert!((p.prob(9) - m).abs() < 1e-15);
        assert!((p.prob(9) - p.prob(8)).abs() < 1e-14);
        // direct mass at k = 3, renormalized over 0..31
        let direct = |k: u32| 8f64.powi(k as i32) * (-8f64).exp() / (1..=k).map(|j| j as f64).product::<f64>();
        let total: f64 = (0..32).map(direct).sum();
        assert!((p.prob(4) - direct(3) / total).abs() < 1e-14);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(discrete_pmf(DistributionSpec::Poisson { rate: 0.0 }, 4).is_err());
        assert!(discrete_pmf(DistributionSpec::NBernoulli { p: 1.5 }, 4).is_err());
        assert!(discrete_pmf(DistributionSpec::Gaussian { mean: 1.0, std: 0.0 }, 4).is_err());
        assert!(discrete_pmf(DistributionSpec::Zipf { alpha: -1.0 }, 4).is_err());
    }

    #[test]
    fn popularity_vector_validation() {
        assert!(PopularityVector::new(vec![0.5, 0.5]).is_ok());
        assert!(PopularityVector::new(vec![0.5, 0.4]).is_err());
        assert!(PopularityVector::new(vec![1.5, -0.5]).is_err());
        assert!(PopularityVector::new(vec![]).is_err());
        assert!(PopularityVector::from_weights(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sampler_never_picks_zero_mass() {
        let p = PopularityVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        let s = CategoricalSampler::new(&p);
        let mut rng = crate::rng::stream(1, crate::rng::Stream::Sampler);
        for _ in 0..1000 {
            assert_eq!(s.sample(&mut rng), 1);
        }
    }
}
