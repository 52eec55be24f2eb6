use rand::Rng;

use super::{zipf_pmf, CategoricalSampler, ContentId, PopularityVector, UserProfile};
use crate::error::{Error, Result};

/// One user's request history plus the ground truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestTrace {
    pub requests: Vec<Option<ContentId>>,
    pub truth_alpha: Vec<f64>,
    pub truth_popularity: Vec<PopularityVector>,
}

impl RequestTrace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn n_contents(&self) -> usize {
        self.truth_popularity.first().map_or(0, |p| p.len())
    }

    /// Requests in slots `end+1-len ..= end`.
    pub fn window(&self, end: usize, len: usize) -> &[Option<ContentId>] {
        &self.requests[end + 1 - len..=end]
    }
}

/// Returns `None` with probability `1 - arrival_rate`, otherwise a content
/// drawn from `popularity`.
pub fn sample_request<R: Rng + ?Sized>(
    sampler: &CategoricalSampler,
    n_contents: usize,
    arrival_rate: f64,
    rng: &mut R,
) -> Option<ContentId> {
    let u: f64 = rng.random();
    if u >= arrival_rate {
        return None;
    }
    let idx = sampler.sample(rng);
    Some(ContentId::from_index(idx, n_contents).expect("sampler index within content range"))
}

/// Simulates `n_slots` slots: step the chain, record the truth, sample.
/// The profile's chain is advanced in place.
pub fn generate_trace<R: Rng + ?Sized>(
    profile: &mut UserProfile,
    n_contents: usize,
    n_slots: usize,
    rng: &mut R,
) -> Result<RequestTrace> {
    if n_slots == 0 {
        return Err(Error::InvalidParameter("n_slots must be >= 1".into()));
    }
    profile.arrival_rate.validate()?;
    let pmfs = profile
        .chain
        .states()
        .iter()
        .map(|&a| zipf_pmf(a, n_contents))
        .collect::<Result<Vec<_>>>()?;
    let samplers: Vec<CategoricalSampler> = pmfs.iter().map(CategoricalSampler::new).collect();

    let mut trace = RequestTrace {
        requests: Vec::with_capacity(n_slots),
        truth_alpha: Vec::with_capacity(n_slots),
        truth_popularity: Vec::with_capacity(n_slots),
    };
    for slot in 0..n_slots {
        let s = profile.chain.step(rng);
        trace.truth_alpha.push(profile.chain.alpha());
        trace.truth_popularity.push(pmfs[s].clone());
        let rate = profile.arrival_rate.rate_at(slot);
        trace.requests.push(sample_request(&samplers[s], n_contents, rate, rng));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::popdyn::{random_profile, ArrivalRate, MarkovChain, ProfileGenConfig};
    use crate::rng::{stream, Stream};

    fn const_profile(alpha: f64, rate: f64) -> UserProfile {
        UserProfile::new(0, MarkovChain::constant(alpha).unwrap(), ArrivalRate::Constant(rate)).unwrap()
    }

    #[test]
    fn zero_rate_is_always_empty() {
        let s = CategoricalSampler::new(&zipf_pmf(1.0, 8).unwrap());
        let mut rng = stream(1, Stream::Trace(0));
        assert!((0..1000).all(|_| sample_request(&s, 8, 0.0, &mut rng).is_none()));
    }

    #[test]
    fn degenerate_popularity_always_first() {
        let mut probs = vec![0.0; 8];
        probs[0] = 1.0;
        let s = CategoricalSampler::new(&PopularityVector::new(probs).unwrap());
        let mut rng = stream(1, Stream::Trace(0));
        assert!((0..1000).all(|_| sample_request(&s, 8, 1.0, &mut rng).map(|c| c.get()) == Some(1)));
    }

    #[test]
    fn empty_fraction_matches_rate() {
        let s = CategoricalSampler::new(&zipf_pmf(0.08, 32).unwrap());
        let mut rng = stream(2, Stream::Trace(0));
        let n = 100_000;
        let empty = (0..n)
            .filter(|_| sample_request(&s, 32, 0.74, &mut rng).is_none())
            .count();
        assert!((empty as f64 / n as f64 - 0.26).abs() < 0.01);
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = ProfileGenConfig::default();
        let base = random_profile(0, &cfg, &mut stream(11, Stream::ProfileGen)).unwrap();
        let a = generate_trace(&mut base.clone(), 12, 500, &mut stream(11, Stream::Trace(0))).unwrap();
        let b = generate_trace(&mut base.clone(), 12, 500, &mut stream(11, Stream::Trace(0))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
    }

    #[test]
    fn longer_trace_extends_shorter() {
        let cfg = ProfileGenConfig::default();
        let base = random_profile(0, &cfg, &mut stream(12, Stream::ProfileGen)).unwrap();
        let a = generate_trace(&mut base.clone(), 12, 300, &mut stream(12, Stream::Trace(0))).unwrap();
        let b = generate_trace(&mut base.clone(), 12, 400, &mut stream(12, Stream::Trace(0))).unwrap();
        assert_eq!(a.requests[..], b.requests[..300]);
    }

    #[test]
    fn single_state_constant_truth_and_frequencies() {
        let mut p = const_profile(1.2, 1.0);
        let n = 200_000;
        let t = generate_trace(&mut p, 10, n, &mut stream(13, Stream::Trace(0))).unwrap();
        assert!(t.truth_popularity.windows(2).all(|w| w[0] == w[1]));
        let mut counts = [0usize; 10];
        for r in &t.requests {
            counts[r.expect("rate 1 never empty").index()] += 1;
        }
        let truth = &t.truth_popularity[0];
        for (k, c) in counts.iter().enumerate() {
            assert!((*c as f64 / n as f64 - truth.as_slice()[k]).abs() < 0.01);
        }
    }

    #[test]
    fn zero_slots_rejected() {
        let mut p = const_profile(1.0, 0.5);
        assert!(generate_trace(&mut p, 4, 0, &mut stream(1, Stream::Trace(0))).is_err());
    }
}
