use rand::Rng;

use super::{discrete_pmf, sample_request, CategoricalSampler, DistributionSpec, PopularityVector};
use crate::error::{Error, Result};

/// Arrival-rate-weighted mixture of local popularities:
/// `P_G = sum_i lambda_i P_i / sum_i lambda_i`.
pub fn mixture_global(locals: &[PopularityVector], lambdas: &[f64]) -> Result<PopularityVector> {
    if locals.is_empty() {
        return Err(Error::Empty("local popularity list"));
    }
    if locals.len() != lambdas.len() {
        return Err(Error::InvalidParameter(format!(
            "{} popularity vectors but {} arrival rates",
            locals.len(),
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidParameter("arrival rates must lie in [0,1]".into()));
    }
    let n = locals[0].len();
    if locals.iter().any(|p| p.len() != n) {
        return Err(Error::ShapeMismatch {
            expected: vec![n],
            actual: locals.iter().map(|p| p.len()).collect(),
        });
    }
    let total: f64 = lambdas.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroArrivalRates);
    }
    let mut out = vec![0.0; n];
    for (p, &l) in locals.iter().zip(lambdas) {
        for (o, x) in out.iter_mut().zip(p.as_slice()) {
            *o += l * x;
        }
    }
    PopularityVector::from_weights(out.into_iter().map(|x| x / total).collect())
}

/// A user with a fixed popularity family and constant arrival rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryUser {
    pub spec: DistributionSpec,
    pub arrival_rate: f64,
}

/// Counts the contents requested by all users jointly over `n_slots` and
/// returns their relative frequencies among non-empty requests.
pub fn mc_global_estimate<R: Rng + ?Sized>(
    users: &[StationaryUser],
    n_contents: usize,
    n_slots: usize,
    rng: &mut R,
) -> Result<PopularityVector> {
    if users.is_empty() {
        return Err(Error::Empty("user list"));
    }
    if n_slots == 0 {
        return Err(Error::InvalidParameter("n_slots must be >= 1".into()));
    }
    let samplers = users
        .iter()
        .map(|u| {
            if !(0.0..=1.0).contains(&u.arrival_rate) {
                return Err(Error::InvalidParameter(format!(
                    "arrival rate {} outside [0,1]",
                    u.arrival_rate
                )));
            }
            Ok(CategoricalSampler::new(&discrete_pmf(u.spec, n_contents)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0u64; n_contents];
    for _ in 0..n_slots {
        for (u, s) in users.iter().zip(&samplers) {
            if let Some(c) = sample_request(s, n_contents, u.arrival_rate, rng) {
                counts[c.index()] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoRequests);
    }
    PopularityVector::from_weights(counts.into_iter().map(|c| c as f64).collect())
}
