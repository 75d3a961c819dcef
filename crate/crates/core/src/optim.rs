//! Adam optimizer and the early-stopping training loop.
//!
//! The gradient descent is driven by the calibration loss; the validation
//! loss decides early stopping and which iterate is returned.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::ParamVector;

/// Adam moment accumulators, shaped like the parameters they track.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: ParamVector,
    v: ParamVector,
}

impl AdamState {
    pub fn new(params: &ParamVector, learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            // Kingma-Ba defaults; the reference is silent on these.
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
    if !params.same_layout(grad) || !params.same_layout(&state.m) {
        return Err(CoreError::ShapeMismatch("adam state/grad layout differs".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_flat_mut()
        .zip(grad.iter_flat())
        .zip(state.m.iter_flat_mut().zip(state.v.iter_flat_mut()))
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BatchMode {
    Full,
    Minibatch { size: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub patience: usize,
    pub max_iterations: usize,
    pub batch_mode: BatchMode,
    pub penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            patience: 100,
            max_iterations: 10_000,
            batch_mode: BatchMode::Full,
            penalty: 0.0,
            seed: 0,
        }
    }
}

/// What a trainable problem must expose. One `epoch` is one early-stopping
/// iteration: a single full-gradient step, or one pass over the minibatches.
pub trait Objective {
    /// Number of gradient steps making up the given epoch (1 for full batch).
    fn batches_per_epoch(&self) -> usize;
    /// Calibration loss and gradient for one batch of one epoch.
    fn loss_grad(&mut self, params: &ParamVector, epoch: usize, batch: usize)
        -> Result<(f64, ParamVector)>;
    /// Validation loss at the current parameters.
    fn valid_loss(&mut self, params: &ParamVector) -> Result<f64>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub calib_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
    pub best_iteration: usize,
    pub best_valid_loss: f64,
    pub max_iter_hit: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,calib_loss,valid_loss\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.iteration, r.calib_loss, r.valid_loss));
        }
        out
    }
}

/// Runs Adam with early stopping and returns the parameters that achieved
/// the minimal validation loss seen.
pub fn train(
    objective: &mut dyn Objective,
    init: ParamVector,
    cfg: &TrainConfig,
) -> Result<(ParamVector, TrainHistory)> {
    let mut params = init;
    let mut state = AdamState::new(&params, cfg.learning_rate);
    let mut history = TrainHistory {
        best_valid_loss: f64::INFINITY,
        ..TrainHistory::default()
    };
    let mut best_params = params.clone();
    let mut stale = 0usize;
    for epoch in 1..=cfg.max_iterations {
        let batches = objective.batches_per_epoch().max(1);
        let mut calib_sum = 0.0;
        for batch in 0..batches {
            let (loss, grad) = objective.loss_grad(&params, epoch, batch)?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(CoreError::NonFiniteLoss(epoch));
            }
            calib_sum += loss;
            adam_step(&mut state, &mut params, &grad)?;
        }
        let calib = calib_sum / batches as f64;
        let valid = objective.valid_loss(&params)?;
        if !valid.is_finite() {
            return Err(CoreError::NonFiniteLoss(epoch));
        }
        history.records.push(HistoryRecord { iteration: epoch, calib_loss: calib, valid_loss: valid });
        if valid < history.best_valid_loss {
            history.best_valid_loss = valid;
            history.best_iteration = epoch;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                return Ok((best_params, history));
            }
        }
    }
    history.max_iter_hit = true;
    Ok((best_params, history))
}
