//! Server-side aggregation. Inputs are parameter sets and scalar losses only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Autoencoder, ParamSet};

/// How FedLWA turns client losses into weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossWeighting {
    /// `γ_i ∝ L_i`.
    #[default]
    Proportional,
    /// `γ_i ∝ 1 / L_i`.
    Inverse,
}

/// `Σ w_i P_i` coordinatewise, for non-negative weights.
pub fn weighted_sum<P: ParamSet>(params: &[&P], weights: &[f64]) -> Result<P> {
    let total: f64 = weights.iter().sum();
    weighted_mean(params, weights, total)
}

/// `factor · Σ w_i P_i / Σ w_i`, accumulated as a running mean so that
/// identical inputs with `factor == 1` come back bit-for-bit.
fn weighted_mean<P: ParamSet>(params: &[&P], weights: &[f64], factor: f64) -> Result<P> {
    let first = *params.first().ok_or(Error::Empty("parameter list"))?;
    if weights.len() != params.len() {
        return Err(Error::Mismatch(format!(
            "{} parameter sets but {} weights",
            params.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weights must be finite and >= 0: {weights:?}"
        )));
    }
    if let Some(bad) = params.iter().find(|p| !p.same_shape(first)) {
        let actual = bad.tensors().iter().map(|t| t.len()).collect();
        let expected = first.tensors().iter().map(|t| t.len()).collect();
        return Err(Error::ShapeMismatch { expected, actual });
    }
    let mut out = first.zeroed();
    let mut seen = 0.0;
    for (p, &w) in params.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        seen += w;
        let step = w / seen;
        for (dst, src) in out.tensors_mut().into_iter().zip(p.tensors()) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += step * (s - *d);
            }
        }
    }
    if factor != 1.0 {
        out.tensors_mut().into_iter().for_each(|t| t.scale(factor));
    }
    Ok(out)
}

/// FedAvg: `(1/I) Σ ω_i Θ_i` over the uploaded sets, plus its encoder half.
pub fn fedavg_aggregate<M: Autoencoder>(params: &[&M], omegas: &[f64]) -> Result<(M, M::Encoder)> {
    if params.is_empty() {
        return Err(Error::Empty("parameter list"));
    }
    let factor = omegas.iter().sum::<f64>() / params.len() as f64;
    let ae = weighted_mean(params, omegas, factor)?;
    let g = ae.encoder();
    Ok((ae, g))
}

/// Normalized loss weights. All losses must be finite and non-negative
/// with a positive sum; inverse weighting additionally needs every loss positive.
pub fn loss_gammas(losses: &[f64], weighting: LossWeighting) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::Empty("loss list"));
    }
    if losses.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "losses must be finite and >= 0: {losses:?}"
        )));
    }
    let raw: Vec<f64> = match weighting {
        LossWeighting::Proportional => losses.to_vec(),
        LossWeighting::Inverse => {
            if losses.contains(&0.0) {
                return Err(Error::ZeroLosses);
            }
            losses.iter().map(|l| 1.0 / l).collect()
        }
    };
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroLosses);
    }
    Ok(raw.iter().map(|r| r / total).collect())
}

/// FedLWA: `Σ ω_i γ_i Θ_i` with `γ` from [`loss_gammas`]. Returns the
/// aggregate, its encoder half, and the weights used.
pub fn fedlwa_aggregate<M: Autoencoder>(
    params: &[&M],
    losses: &[f64],
    omegas: &[f64],
    weighting: LossWeighting,
) -> Result<(M, M::Encoder, Vec<f64>)> {
    if losses.len() != params.len() || omegas.len() != params.len() {
        return Err(Error::Mismatch(
            "params, losses and omegas must have equal length".into(),
        ));
    }
    let gammas = loss_gammas(losses, weighting)?;
    let w: Vec<f64> = gammas.iter().zip(omegas).map(|(g, o)| g * o).collect();
    let ae = weighted_sum(params, &w)?;
    let g = ae.encoder();
    Ok((ae, g, gammas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm_ae::{LayerSpec, ModelParams};
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn model(seed: u64) -> ModelParams {
        let spec = LayerSpec::new(3, vec![4, 3]).unwrap();
        ModelParams::init(&spec, &mut stream(seed, Stream::Init))
    }

    fn filled(v: f64) -> ModelParams {
        let mut m = model(0);
        m.tensors_mut().into_iter().for_each(|t| t.fill(v));
        m
    }

    #[test]
    fn identical_inputs_are_a_fixed_point() {
        let m = model(1);
        let (ae, g) = fedavg_aggregate(&[&m, &m, &m], &[1.0; 3]).unwrap();
        assert_eq!(ae, m);
        assert_eq!(g, m.encoder);
    }

    #[test]
    fn two_client_mean() {
        let (a, b) = (filled(1.0), filled(4.0));
        let (ae, _) = fedavg_aggregate(&[&a, &b], &[1.0, 1.0]).unwrap();
        assert!(ae.tensors().iter().all(|t| t.data().iter().all(|v| *v == 2.5)));
    }

    #[test]
    fn three_client_mean_matches_scalar_loop() {
        let ms = [model(2), model(3), model(4)];
        let (ae, _) = fedavg_aggregate(&[&ms[0], &ms[1], &ms[2]], &[1.0; 3]).unwrap();
        for (ti, t) in ae.tensors().iter().enumerate() {
            for (j, v) in t.data().iter().enumerate() {
                let mut s = 0.0;
                for m in &ms {
                    s += m.tensors()[ti].data()[j];
                }
                assert!((v - s / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_weighted_hand_example() {
        let (a, b) = (filled(2.0), filled(6.0));
        let (ae, _, gammas) =
            fedlwa_aggregate(&[&a, &b], &[1.0, 3.0], &[1.0, 1.0], LossWeighting::Proportional).unwrap();
        assert_eq!(gammas, vec![0.25, 0.75]);
        assert!(ae
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|v| (*v - 5.0).abs() < 1e-12)));

        let (ae, _, gammas) = fedlwa_aggregate(&[&a, &b], &[1.0, 3.0], &[1.0, 1.0], LossWeighting::Inverse).unwrap();
        assert_eq!(gammas, vec![0.75, 0.25]);
        assert!(ae
            .tensors()
            .iter()
            .all(|t| t.data().iter().all(|v| (*v - 3.0).abs() < 1e-12)));
    }

    #[test]
    fn single_client_passes_through() {
        let m = model(5);
        let (ae, _, g) = fedlwa_aggregate(&[&m], &[0.7], &[1.0], LossWeighting::Proportional).unwrap();
        assert_eq!(g, vec![1.0]);
        assert_eq!(ae, m);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let m = model(6);
        assert!(matches!(
            fedlwa_aggregate(&[&m, &m], &[0.0, 0.0], &[1.0, 1.0], LossWeighting::Proportional),
            Err(Error::ZeroLosses)
        ));
        assert!(fedlwa_aggregate(&[&m], &[-1.0], &[1.0], LossWeighting::Proportional).is_err());
        assert!(fedavg_aggregate::<ModelParams>(&[], &[]).is_err());
        let other = ModelParams::init(&LayerSpec::new(3, vec![5, 3]).unwrap(), &mut stream(0, Stream::Init));
        assert!(matches!(
            fedavg_aggregate(&[&m, &other], &[1.0, 1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn equal_losses_reduce_to_fedavg(seed in 0u64..1000, loss in 0.01f64..10.0) {
            let ms = [model(seed), model(seed + 1), model(seed + 2)];
            let refs = [&ms[0], &ms[1], &ms[2]];
            let (avg, _) = fedavg_aggregate(&refs, &[1.0; 3]).unwrap();
            let (lwa, _, g) = fedlwa_aggregate(&refs, &[loss; 3], &[1.0; 3], LossWeighting::Proportional).unwrap();
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (x, y) in avg.tensors().iter().zip(lwa.tensors()) {
                for (a, b) in x.data().iter().zip(y.data()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn aggregate_within_convex_hull(seed in 0u64..1000, losses in proptest::collection::vec(0.0f64..5.0, 3)) {
            prop_assume!(losses.iter().sum::<f64>() > 0.0);
            let ms = [model(seed), model(seed + 7), model(seed + 13)];
            let refs = [&ms[0], &ms[1], &ms[2]];
            let (lwa, _, _) = fedlwa_aggregate(&refs, &losses, &[1.0; 3], LossWeighting::Proportional).unwrap();
            for (ti, t) in lwa.tensors().iter().enumerate() {
                for (j, v) in t.data().iter().enumerate() {
                    let vals: Vec<f64> = ms.iter().map(|m| m.tensors()[ti].data()[j]).collect();
                    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
                }
            }
        }
    }
}
