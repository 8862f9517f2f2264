//! Weight-function evaluation over a batch of verifier scores.

use alloc::vec::Vec;

use thiserror::Error;

use crate::gapmath::{nearest_rank_quantile, GapError};
use crate::math;
use crate::types::{SpecError, WeightFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("scores must be non-empty")]
    Empty,
    #[error("score {0} is not finite")]
    NonFinite(f64),
    #[error(transparent)]
    InvalidFunction(#[from] SpecError),
    #[error(transparent)]
    Quantile(#[from] GapError),
}

/// Maps each score to a nonnegative weight.
///
/// `indicator_global` keeps scores at or above `tau`; `indicator_quantile`
/// computes the batch's nearest-rank quantile and keeps scores at or above it
/// (ties kept, `n = 0` keeps everything); `exponential` returns
/// `exp(score / beta)`; `constant` returns all ones. The output has the same
/// length and order as the input.
pub fn evaluate_weights(wf: &WeightFunction, scores: &[f64]) -> Result<Vec<f64>, WeightError> {
    wf.validate()?;
    if scores.is_empty() {
        return Err(WeightError::Empty);
    }
    for &s in scores {
        if !s.is_finite() {
            return Err(WeightError::NonFinite(s));
        }
    }
    let weights = match *wf {
        WeightFunction::IndicatorGlobal { tau } => scores
            .iter()
            .map(|&s| if s >= tau { 1.0 } else { 0.0 })
            .collect(),
        WeightFunction::IndicatorQuantile { n } => {
            let tau = nearest_rank_quantile(scores, n)?;
            scores
                .iter()
                .map(|&s| if s >= tau { 1.0 } else { 0.0 })
                .collect()
        }
        WeightFunction::Exponential { beta } => {
            scores.iter().map(|&s| math::exp(s / beta)).collect()
        }
        WeightFunction::Constant => scores.iter().map(|_| 1.0).collect(),
    };
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn constant_is_all_ones() {
        let w = evaluate_weights(&WeightFunction::Constant, &[0.1, 0.9]).unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn global_indicator_uses_at_or_above() {
        let w = evaluate_weights(
            &WeightFunction::IndicatorGlobal { tau: 0.75 },
            &[0.9, 0.8, 0.2, 0.7],
        )
        .unwrap();
        assert_eq!(w, vec![1.0, 1.0, 0.0, 0.0]);
        // Boundary score is kept.
        let w = evaluate_weights(&WeightFunction::IndicatorGlobal { tau: 0.8 }, &[0.8]).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn quantile_indicator_keeps_ties() {
        let scores: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let w = evaluate_weights(&WeightFunction::IndicatorQuantile { n: 0.7 }, &scores).unwrap();
        let kept: f64 = w.iter().sum();
        assert_eq!(kept, 4.0);
        assert_eq!(&w[..6], &[0.0; 6]);

        let w = evaluate_weights(&WeightFunction::IndicatorQuantile { n: 0.8 }, &[5.0; 4]).unwrap();
        assert_eq!(w, vec![1.0; 4]);

        let w = evaluate_weights(&WeightFunction::IndicatorQuantile { n: 0.0 }, &[9.0, 1.0])
            .unwrap();
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn exponential_matches_closed_form() {
        let w = evaluate_weights(&WeightFunction::Exponential { beta: 0.5 }, &[0.0, 0.5]).unwrap();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - core::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            evaluate_weights(&WeightFunction::Constant, &[]),
            Err(WeightError::Empty)
        ));
        assert!(matches!(
            evaluate_weights(&WeightFunction::Constant, &[f64::NAN]),
            Err(WeightError::NonFinite(_))
        ));
        assert!(matches!(
            evaluate_weights(&WeightFunction::Exponential { beta: -1.0 }, &[0.1]),
            Err(WeightError::InvalidFunction(_))
        ));
    }
}
