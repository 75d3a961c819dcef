//! Calendar derivative of total implied variance, taken analytically
//! through the decoder.
//!
//! With sigma(T, z) the decoded volatility at maturity T, the total
//! variance is w(T, z) = T sigma^2 and its calendar derivative
//! d w / d T = sigma^2 + 2 T sigma (d sigma / d T). The maturity gradient
//! comes out of the same reverse pass that trains the network, so no
//! finite differences are involved.

use serde::{Deserialize, Serialize};

use crate::data::NodeLocation;
use crate::error::{CoreError, Result};
use crate::models::FunctionalModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaReport {
    pub maturities: Vec<f64>,
    pub others: Vec<f64>,
    /// Row-major `[maturity][other]` lattice of d(T sigma^2)/dT.
    pub values: Vec<f64>,
    /// Decoded sigma on the same lattice.
    pub sigmas: Vec<f64>,
    /// Whether every lattice value is strictly positive (a negative value
    /// signals a calendar arbitrage in the decoded surface).
    pub all_positive: bool,
}

/// Evaluates d(T sigma^2)/dT on a maturity x other-coordinate lattice.
///
/// `log_maturity` says the model's first input coordinate is ln T (the
/// usual training transform); maturities here are always the raw T.
pub fn calendar_theta(
    model: &FunctionalModel,
    code: &[f64],
    maturities: &[f64],
    others: &[f64],
    log_maturity: bool,
) -> Result<ThetaReport> {
    if model.spec.dim != 2 {
        return Err(CoreError::Config(format!(
            "calendar theta needs 2 coordinates, model has {}",
            model.spec.dim
        )));
    }
    let mut values = Vec::with_capacity(maturities.len() * others.len());
    let mut sigmas = Vec::with_capacity(values.capacity());
    for &t in maturities {
        if t <= 0.0 {
            return Err(CoreError::Config(format!("non-positive maturity {t}")));
        }
        for &z in others {
            let first = if log_maturity { t.ln() } else { t };
            let loc = NodeLocation::new(vec![first, z]);
            let g = model.decode_with_gradients(&model.params, code, &loc)?;
            let sigma = g.value;
            // grad_coords[0] is d sigma / d(first input); chain through
            // ln T when that input is the log maturity.
            let dsigma_dt = if log_maturity { g.grad_coords[0] / t } else { g.grad_coords[0] };
            values.push(sigma * sigma + 2.0 * t * sigma * dsigma_dt);
            sigmas.push(sigma);
        }
    }
    let all_positive = values.iter().all(|&v| v > 0.0);
    Ok(ThetaReport {
        maturities: maturities.to_vec(),
        others: others.to_vec(),
        values,
        sigmas,
        all_positive,
    })
}
