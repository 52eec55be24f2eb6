//! Stochastic popularity processes and request generation.
//!
//! Local popularity follows a Zipf law whose skew parameter walks a
//! per-user Markov chain; each slot a user issues at most one request.
//! The global (edge-node) popularity is the arrival-rate-weighted mixture
//! of the local ones, which [`mixture_global`] computes in closed form and
//! [`mc_global_estimate`] estimates by counting sampled requests.

mod markov;
mod mixture;
mod pmf;
mod trace;

pub use markov::{random_profile, ArrivalRate, MarkovChain, ProfileGenConfig, UserProfile};
pub use mixture::{mc_global_estimate, mixture_global, StationaryUser};
pub use pmf::{discrete_pmf, zipf_pmf, CategoricalSampler, DistributionSpec, PopularityVector};
pub use trace::{generate_trace, sample_request, RequestTrace};

use std::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A 1-based content identifier. The empty request is `None`, never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentId(u32);

impl ContentId {
    pub fn new(id: usize, n_contents: usize) -> Result<Self> {
        if id == 0 || id > n_contents || id > u32::MAX as usize {
            return Err(Error::ContentOutOfRange { id, n_contents });
        }
        Ok(ContentId(id as u32))
    }

    /// Builds an id from a zero-based index.
    pub fn from_index(index: usize, n_contents: usize) -> Result<Self> {
        Self::new(index + 1, n_contents)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
