//! Reconstruction-error outlier detection and correction.
//!
//! A day whose best low-dimensional reconstruction still misses it by a
//! lot does not live near the learned manifold; the reconstruction RMSE
//! is the anomaly score and the reconstruction itself the suggestion.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::Result;
use crate::models::Model;

use super::complete::{complete, predict, CompletionConfig};
use super::metrics::rmse;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierReport {
    /// (date, reconstruction RMSE), chronological.
    pub scores: Vec<(String, f64)>,
    pub threshold: f64,
    pub flagged: Vec<String>,
}

/// Reconstruction RMSE of one observation: calibrate a code against all
/// of its points, decode them back, and measure the residual.
pub fn reconstruction_score(
    model: &Model,
    obs: &Observation,
    cfg: &CompletionConfig,
) -> Result<f64> {
    let c = complete(model, obs, cfg, None)?;
    Ok(c.visible_rmse)
}

/// Scores every observation and flags those above the threshold.
pub fn detect_outliers(
    model: &Model,
    ds: &Dataset,
    threshold: f64,
    cfg: &CompletionConfig,
) -> Result<OutlierReport> {
    let mut scores = Vec::with_capacity(ds.len());
    let mut flagged = Vec::new();
    for obs in &ds.observations {
        let s = reconstruction_score(model, obs, cfg)?;
        if s > threshold {
            flagged.push(obs.date.clone());
        }
        scores.push((obs.date.clone(), s));
    }
    Ok(OutlierReport { scores, threshold, flagged })
}

/// Replaces an observation's values with their reconstruction, the model's
/// suggestion for what the day should have looked like.
pub fn correct_observation(
    model: &Model,
    obs: &Observation,
    cfg: &CompletionConfig,
) -> Result<Observation> {
    let c = complete(model, obs, cfg, None)?;
    let locs: Vec<_> = obs.points.iter().map(|(l, _)| l.clone()).collect();
    let values = predict(model, &c.code, &locs)?;
    Ok(Observation {
        date: obs.date.clone(),
        points: locs.into_iter().zip(values).collect(),
        grid_id: obs.grid_id.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorruptionCheck {
    pub base_score: f64,
    pub corrupted_score: f64,
    /// Indices of the points that were scaled.
    pub corrupted_indices: Vec<usize>,
}

/// Scales `count` randomly chosen points by `factor` and reports the
/// reconstruction score before and after; a working detector moves up.
pub fn corruption_check(
    model: &Model,
    obs: &Observation,
    count: usize,
    factor: f64,
    seed: u64,
    cfg: &CompletionConfig,
) -> Result<CorruptionCheck> {
    let base_score = reconstruction_score(model, obs, cfg)?;
    let mut idx: Vec<usize> = (0..obs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(count.min(obs.len()));
    idx.sort_unstable();
    let mut corrupted = obs.clone();
    for &i in &idx {
        corrupted.points[i].1 *= factor;
    }
    let corrupted_score = reconstruction_score(model, &corrupted, cfg)?;
    Ok(CorruptionCheck { base_score, corrupted_score, corrupted_indices: idx })
}

/// Convenience: RMSE between an observation and its corrected version.
pub fn correction_distance(a: &Observation, b: &Observation) -> f64 {
    rmse(&a.values(), &b.values())
}
