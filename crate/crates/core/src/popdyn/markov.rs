use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::SUM_TOLERANCE;
use crate::error::{Error, Result};

/// Markov chain over a user's set of Zipf skew parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    states: Vec<f64>,
    transition: Vec<Vec<f64>>,
    current: usize,
}

impl MarkovChain {
    pub fn new(states: Vec<f64>, transition: Vec<Vec<f64>>, current: usize) -> Result<Self> {
        let g = states.len();
        if g == 0 {
            return Err(Error::InvalidParameter("chain needs at least one state".into()));
        }
        if let Some(a) = states.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::InvalidParameter(format!("state alpha {a} must be >= 0")));
        }
        if transition.len() != g || transition.iter().any(|row| row.len() != g) {
            return Err(Error::InvalidParameter(format!("transition matrix must be {g}x{g}")));
        }
        for (r, row) in transition.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidParameter(format!("row {r} has entries outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidParameter(format!("row {r} sums to {sum}")));
            }
        }
        if current >= g {
            return Err(Error::InvalidParameter(format!("current state {current} out of range")));
        }
        Ok(MarkovChain {
            states,
            transition,
            current,
        })
    }

    /// Single absorbing state.
    pub fn constant(alpha: f64) -> Result<Self> {
        Self::new(vec![alpha], vec![vec![1.0]], 0)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn alpha(&self) -> f64 {
        self.states[self.current]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Draws the next state from the current row and moves there.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let row = &self.transition[self.current];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = row.iter().rposition(|p| *p > 0.0).unwrap_or(self.current);
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        self.current = next;
        next
    }
}

/// Per-slot request probability, constant or piecewise constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrivalRate {
    Constant(f64),
    /// `(first_slot, rate)` pairs sorted by slot; the first must start at 0.
    Piecewise(Vec<(usize, f64)>),
}

impl ArrivalRate {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: f64| !(0.0..=1.0).contains(&r);
        match self {
            ArrivalRate::Constant(r) if bad(*r) => {
                Err(Error::InvalidParameter(format!("arrival rate {r} outside [0,1]")))
            }
            ArrivalRate::Constant(_) => Ok(()),
            ArrivalRate::Piecewise(steps) => {
                if steps.first().map(|s| s.0) != Some(0) {
                    return Err(Error::InvalidParameter("arrival schedule must start at slot 0".into()));
                }
                if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::InvalidParameter("arrival schedule slots must increase".into()));
                }
                if let Some((_, r)) = steps.iter().find(|(_, r)| bad(*r)) {
                    return Err(Error::InvalidParameter(format!("arrival rate {r} outside [0,1]")));
                }
                Ok(())
            }
        }
    }

    pub fn rate_at(&self, slot: usize) -> f64 {
        match self {
            ArrivalRate::Constant(r) => *r,
            ArrivalRate::Piecewise(steps) => {
                let i = steps.partition_point(|(s, _)| *s <= slot);
                steps[i.saturating_sub(1)].1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: u32,
    pub chain: MarkovChain,
    pub arrival_rate: ArrivalRate,
}

impl UserProfile {
    pub fn new(user_id: u32, chain: MarkovChain, arrival_rate: ArrivalRate) -> Result<Self> {
        arrival_rate.validate()?;
        Ok(UserProfile {
            user_id,
            chain,
            arrival_rate,
        })
    }
}

/// Ranges for randomly drawn user behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileGenConfig {
    /// Inclusive range for the number of chain states.
    pub n_states: (usize, usize),
    pub alpha_range: (f64, f64),
    /// Half-open range `[lo, hi)` for the arrival rate.
    pub lambda_range: (f64, f64),
}

impl Default for ProfileGenConfig {
    fn default() -> Self {
        ProfileGenConfig {
            n_states: (2, 6),
            alpha_range: (0.0, 2.5),
            lambda_range: (0.5, 1.0),
        }
    }
}

/// Draws a profile: uniform state count and alphas, flat-Dirichlet rows,
/// uniform arrival rate, uniform initial state.
pub fn random_profile<R: Rng + ?Sized>(user_id: u32, cfg: &ProfileGenConfig, rng: &mut R) -> Result<UserProfile> {
    let (g_lo, g_hi) = cfg.n_states;
    if g_lo == 0 || g_lo > g_hi {
        return Err(Error::InvalidParameter(format!(
            "bad state count range {:?}",
            cfg.n_states
        )));
    }
    let (a_lo, a_hi) = cfg.alpha_range;
    if !(a_lo >= 0.0 && a_lo <= a_hi) {
        return Err(Error::InvalidParameter(format!(
            "bad alpha range {:?}",
            cfg.alpha_range
        )));
    }
    let (l_lo, l_hi) = cfg.lambda_range;
    if !(0.0 <= l_lo && l_lo <= l_hi && l_hi <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bad lambda range {:?}",
            cfg.lambda_range
        )));
    }
    let g = rng.random_range(g_lo..=g_hi);
    let states: Vec<f64> = (0..g).map(|_| a_lo + (a_hi - a_lo) * rng.random::<f64>()).collect();
    let transition = (0..g)
        .map(|_| {
            let raw: Vec<f64> = (0..g).map(|_| Exp1.sample(rng)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x: f64| x / s).collect()
        })
        .collect();
    let current = rng.random_range(0..g);
    let lambda = l_lo + (l_hi - l_lo) * rng.random::<f64>();
    UserProfile::new(
        user_id,
        MarkovChain::new(states, transition, current)?,
        ArrivalRate::Constant(lambda),
    )
}
