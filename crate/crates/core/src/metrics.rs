//! Prediction error metrics and the held-out evaluation sets every method shares.

use crate::error::{Error, Result};
use crate::model::Autoencoder;
use crate::popdyn::{ContentId, PopularityVector};

/// Root mean squared per-content difference.
pub fn rmse(pred: &PopularityVector, truth: &PopularityVector) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![truth.len()],
            actual: vec![pred.len()],
        });
    }
    let s: f64 = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    Ok((s / pred.len() as f64).sqrt())
}

/// Input windows paired with the true popularity each should predict.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSet {
    pub windows: Vec<Vec<Option<ContentId>>>,
    pub truth: Vec<PopularityVector>,
}

impl EvalSet {
    pub fn new(windows: Vec<Vec<Option<ContentId>>>, truth: Vec<PopularityVector>) -> Result<Self> {
        if windows.len() != truth.len() {
            return Err(Error::Mismatch(format!(
                "{} windows but {} truth vectors",
                windows.len(),
                truth.len()
            )));
        }
        if windows.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        Ok(EvalSet { windows, truth })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Mean RMSE of `predict` over the set.
    pub fn mean_rmse<F>(&self, predict: F) -> Result<f64>
    where
        F: FnOnce(&[&[Option<ContentId>]]) -> Result<Vec<PopularityVector>>,
    {
        let refs: Vec<&[Option<ContentId>]> = self.windows.iter().map(|w| w.as_slice()).collect();
        let preds = predict(&refs)?;
        if preds.len() != self.truth.len() {
            return Err(Error::Mismatch("predictor returned the wrong number of vectors".into()));
        }
        let mut total = 0.0;
        for (p, t) in preds.iter().zip(&self.truth) {
            total += rmse(p, t)?;
        }
        Ok(total / preds.len() as f64)
    }

    /// Mean RMSE of a model's encoder over the set.
    pub fn model_rmse<M: Autoencoder>(&self, encoder: &M::Encoder) -> Result<f64> {
        self.mean_rmse(|w| M::predict(encoder, w))
    }

    /// Mean RMSE of always predicting the uniform distribution.
    pub fn uniform_rmse(&self) -> Result<f64> {
        let n = self.truth[0].len();
        let u = PopularityVector::uniform(n)?;
        self.mean_rmse(|w| Ok(vec![u.clone(); w.len()]))
    }
}

/// Held-out evaluation data for one experiment: one set per client plus
/// the global set built from the users' joint per-slot requests.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub local: Vec<EvalSet>,
    pub global: Option<EvalSet>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        let t = PopularityVector::new(vec![1.0, 0.0]).unwrap();
        let u = PopularityVector::uniform(2).unwrap();
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        assert!((rmse(&u, &t).unwrap() - 0.5).abs() < 1e-15);
        let three = PopularityVector::uniform(3).unwrap();
        assert!(rmse(&three, &t).is_err());
    }

    #[test]
    fn uniform_rmse_of_uniform_truth_is_zero() {
        let u = PopularityVector::uniform(4).unwrap();
        let set = EvalSet::new(vec![vec![None]], vec![u]).unwrap();
        assert_eq!(set.uniform_rmse().unwrap(), 0.0);
        assert!(EvalSet::new(vec![], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn rmse_is_symmetric(a in proptest::collection::vec(0.01f64..1.0, 5), b in proptest::collection::vec(0.01f64..1.0, 5)) {
            let p = PopularityVector::from_weights(a).unwrap();
            let q = PopularityVector::from_weights(b).unwrap();
            let d = rmse(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - rmse(&q, &p).unwrap()).abs() < 1e-15);
        }
    }
}
