use rand::Rng;

use crate::error::Result;
use crate::metrics::rmse;
use crate::popdyn::{
    discrete_pmf, mc_global_estimate, mixture_global, DistributionSpec, PopularityVector, StationaryUser,
};

/// A named group of stationary users sharing one distribution family.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCase {
    pub name: &'static str,
    pub n_contents: usize,
    pub users: Vec<StationaryUser>,
}

/// Six-user reference groups over 32 contents, one per distribution family.
pub fn reference_cases() -> Vec<MixtureCase> {
    let build = |name, rows: &[(f64, DistributionSpec)]| MixtureCase {
        name,
        n_contents: 32,
        users: rows
            .iter()
            .map(|&(arrival_rate, spec)| StationaryUser { spec, arrival_rate })
            .collect(),
    };
    let zipf = |a| DistributionSpec::Zipf { alpha: a };
    let poisson = |r| DistributionSpec::Poisson { rate: r };
    let bern = |p| DistributionSpec::NBernoulli { p };
    let gauss = |mean, std| DistributionSpec::Gaussian { mean, std };
    vec![
        build(
            "zipf",
            &[
                (0.74, zipf(0.08)),
                (0.91, zipf(2.14)),
                (0.58, zipf(1.56)),
                (0.76, zipf(1.02)),
                (0.74, zipf(0.11)),
                (0.63, zipf(0.15)),
            ],
        ),
        build(
            "poisson",
            &[
                (0.51, poisson(8.0)),
                (0.60, poisson(27.0)),
                (0.68, poisson(24.0)),
                (0.96, poisson(29.0)),
                (0.98, poisson(13.0)),
                (0.79, poisson(11.0)),
            ],
        ),
        build(
            "nbernoulli",
            &[
                (0.94, bern(0.44)),
                (0.91, bern(0.11)),
                (0.91, bern(0.50)),
                (0.68, bern(0.70)),
                (0.76, bern(0.52)),
                (0.70, bern(0.51)),
            ],
        ),
        build(
            "gaussian",
            &[
                (0.88, gauss(6.0, 2.30)),
                (0.82, gauss(31.0, 3.63)),
                (0.97, gauss(17.0, 2.45)),
                (0.87, gauss(28.0, 2.96)),
                (0.68, gauss(15.0, 3.27)),
                (0.94, gauss(9.0, 5.37)),
            ],
        ),
    ]
}

/// Closed-form mixture against a sampled estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCheck {
    pub name: String,
    pub theoretical: PopularityVector,
    pub estimate: PopularityVector,
    pub max_abs_gap: f64,
    pub rmse: f64,
}

pub fn check_case<R: Rng + ?Sized>(case: &MixtureCase, n_slots: usize, rng: &mut R) -> Result<MixtureCheck> {
    let locals = case
        .users
        .iter()
        .map(|u| discrete_pmf(u.spec, case.n_contents))
        .collect::<Result<Vec<_>>>()?;
    let lambdas: Vec<f64> = case.users.iter().map(|u| u.arrival_rate).collect();
    let theoretical = mixture_global(&locals, &lambdas)?;
    let estimate = mc_global_estimate(&case.users, case.n_contents, n_slots, rng)?;
    let max_abs_gap = theoretical
        .as_slice()
        .iter()
        .zip(estimate.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let rmse = rmse(&estimate, &theoretical)?;
    Ok(MixtureCheck {
        name: case.name.to_string(),
        theoretical,
        estimate,
        max_abs_gap,
        rmse,
    })
}
