//! Error metrics shared across compression, completion and backtests.

use crate::data::Observation;

/// Root mean squared error between two equally long slices. Empty input
/// yields 0.
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "rmse over unequal lengths");
    if pred.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    (sum / pred.len() as f64).sqrt()
}

/// RMSE of predictions against an observation's values, in point order.
pub fn rmse_against(pred: &[f64], obs: &Observation) -> f64 {
    let truth = obs.values();
    rmse(pred, &truth)
}

/// Pooled RMSE across several (prediction, truth) pairs: all residuals
/// enter one mean, so longer days weigh more.
pub fn pooled_rmse(pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (pred, truth) in pairs {
        assert_eq!(pred.len(), truth.len());
        for (a, b) in pred.iter().zip(truth) {
            sum += (a - b) * (a - b);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}
