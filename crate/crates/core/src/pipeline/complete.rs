//! Completion: calibrate a code to the visible points of one day, then
//! decode anywhere the model can reach.
//!
//! Decoder weights stay frozen; only the code moves. The functional and
//! autoencoder models run Adam over the code, classical PCA solves the
//! masked least squares exactly.

use serde::{Deserialize, Serialize};

use crate::data::{NodeLocation, Observation};
use crate::error::{CoreError, Result};
use crate::models::Model;
use crate::nn::{ParamBlock, ParamVector};
use crate::optim::{adam_step, AdamState};

use super::metrics::rmse;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub max_iterations: usize,
    pub learning_rate: f64,
    /// Stop once the best loss has improved by less than this over the
    /// last `tol_window` iterations.
    pub tol: f64,
    pub tol_window: usize,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            max_iterations: 1000,
            learning_rate: 0.001,
            tol: 1e-10,
            tol_window: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Completion {
    pub code: Vec<f64>,
    /// RMSE of the decoded values at the visible points.
    pub visible_rmse: f64,
    pub iterations: usize,
}

/// Calibrates a code to the visible points. `warm_start` seeds the search
/// (previous day's code in a backtest); zeros otherwise.
pub fn complete(
    model: &Model,
    visible: &Observation,
    cfg: &CompletionConfig,
    warm_start: Option<&[f64]>,
) -> Result<Completion> {
    if visible.is_empty() {
        return Err(CoreError::EmptyObservation);
    }
    let f = model.factors();
    let init = match warm_start {
        Some(c) if c.len() == f => c.to_vec(),
        Some(c) => {
            return Err(CoreError::ShapeMismatch(format!(
                "warm start length {} != {}",
                c.len(),
                f
            )))
        }
        None => vec![0.0; f],
    };
    match model {
        Model::Pca(m) => {
            let (target, mask) = grid_target(&m.grid_nodes, visible)?;
            let code = m.complete_code(&target, &mask)?;
            let full = m.decode(&code);
            let pred: Vec<f64> = mask
                .iter()
                .enumerate()
                .filter(|(_, &keep)| keep)
                .map(|(i, _)| full[i])
                .collect();
            let truth: Vec<f64> = mask
                .iter()
                .enumerate()
                .filter(|(_, &keep)| keep)
                .map(|(i, _)| target[i])
                .collect();
            Ok(Completion { code, visible_rmse: rmse(&pred, &truth), iterations: 0 })
        }
        Model::Autoencoder(m) => {
            let (target, mask) = grid_target(&m.grid_nodes, visible)?;
            let n_vis = mask.iter().filter(|&&b| b).count() as f64;
            descend(init, cfg, |code| {
                let (loss, out, grad) = m.decode_residual_grad(code, &target, &mask)?;
                let pred: Vec<f64> = mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &keep)| keep)
                    .map(|(i, _)| out[i])
                    .collect();
                Ok((loss / n_vis, grad.iter().map(|g| g / n_vis).collect(), pred))
            })
            .map(|(code, pred, iterations)| {
                let truth: Vec<f64> = mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &keep)| keep)
                    .map(|(i, _)| target[i])
                    .collect();
                Completion { code, visible_rmse: rmse(&pred, &truth), iterations }
            })
        }
        Model::Functional(m) => {
            let n = visible.len() as f64;
            descend(init, cfg, |code| {
                let mut loss = 0.0;
                let mut grad = vec![0.0; f];
                let mut pred = Vec::with_capacity(visible.len());
                for (loc, y) in &visible.points {
                    let g = m.decode_with_gradients(&m.params, code, loc)?;
                    let r = g.value - y;
                    loss += r * r / n;
                    for (gi, gc) in grad.iter_mut().zip(&g.grad_code) {
                        *gi += 2.0 * r * gc / n;
                    }
                    pred.push(g.value);
                }
                Ok((loss, grad, pred))
            })
            .map(|(code, pred, iterations)| {
                let truth = visible.values();
                Completion { code, visible_rmse: rmse(&pred, &truth), iterations }
            })
        }
    }
}

/// Decodes the calibrated code at the query locations.
pub fn predict(model: &Model, code: &[f64], queries: &[NodeLocation]) -> Result<Vec<f64>> {
    match model {
        Model::Functional(m) => m.decode_many(code, queries),
        Model::Autoencoder(m) => {
            let full = m.decode(code)?;
            pick_grid_values(&m.grid_nodes, &full, queries)
        }
        Model::Pca(m) => {
            let full = m.decode(code);
            pick_grid_values(&m.grid_nodes, &full, queries)
        }
    }
}

/// Adam over the code. `step` returns (loss, grad, predictions at the
/// visible points); the best iterate seen is returned along with the
/// number of iterations run.
fn descend<F>(
    init: Vec<f64>,
    cfg: &CompletionConfig,
    mut step: F,
) -> Result<(Vec<f64>, Vec<f64>, usize)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)>,
{
    let f = init.len();
    let mut params = ParamVector::new(vec![ParamBlock {
        name: "code".into(),
        shape: vec![f],
        data: init,
    }]);
    let mut state = AdamState::new(&params, cfg.learning_rate);
    let mut best_loss = f64::INFINITY;
    let mut best_code = params.block("code")?.data.clone();
    let mut best_pred = Vec::new();
    let mut window_ref = f64::INFINITY;
    let mut iterations = 0usize;
    for it in 1..=cfg.max_iterations {
        iterations = it;
        let code = params.block("code")?.data.clone();
        let (loss, grad, pred) = step(&code)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFiniteLoss(it));
        }
        if loss < best_loss {
            best_loss = loss;
            best_code = code;
            best_pred = pred;
        }
        if it % cfg.tol_window == 0 {
            if window_ref - best_loss < cfg.tol {
                break;
            }
            window_ref = best_loss;
        }
        let mut gvec = params.zeros_like();
        gvec.block_mut("code")?.data = grad;
        adam_step(&mut state, &mut params, &gvec)?;
    }
    if best_pred.is_empty() {
        // max_iterations == 0: evaluate once at the initial code.
        let (loss, _, pred) = step(&best_code)?;
        best_loss = loss;
        best_pred = pred;
        let _ = best_loss;
    }
    Ok((best_code, best_pred, iterations))
}

/// Maps an observation's points onto a model grid, producing a full-length
/// target vector and a visibility mask. Hidden slots carry 0.
fn grid_target(grid: &[NodeLocation], visible: &Observation) -> Result<(Vec<f64>, Vec<bool>)> {
    if grid.is_empty() {
        return Err(CoreError::GridMismatch(
            "model carries no grid nodes; completion needs them".into(),
        ));
    }
    let mut target = vec![0.0; grid.len()];
    let mut mask = vec![false; grid.len()];
    for (loc, y) in &visible.points {
        let i = grid_index(grid, loc)?;
        if mask[i] {
            return Err(CoreError::GridMismatch(format!(
                "duplicate visible point at grid node {:?}",
                loc.coords
            )));
        }
        target[i] = *y;
        mask[i] = true;
    }
    Ok((target, mask))
}

fn pick_grid_values(
    grid: &[NodeLocation],
    full: &[f64],
    queries: &[NodeLocation],
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(CoreError::GridMismatch(
            "model carries no grid nodes; prediction needs them".into(),
        ));
    }
    queries.iter().map(|q| grid_index(grid, q).map(|i| full[i])).collect()
}

fn grid_index(grid: &[NodeLocation], loc: &NodeLocation) -> Result<usize> {
    grid.iter()
        .position(|n| {
            n.coords.len() == loc.coords.len()
                && n.coords.iter().zip(&loc.coords).all(|(a, b)| (a - b).abs() <= 1e-9)
        })
        .ok_or_else(|| {
            CoreError::GridMismatch(format!("location {:?} is not a grid node", loc.coords))
        })
}
