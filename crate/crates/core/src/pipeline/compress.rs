//! Compression: fit a decoder (and codes) to a history of observations.
//!
//! The functional route trains decoder weights and one code per day
//! jointly. The grid route trains an autoencoder on stacked value rows,
//! with greedy layer-pair pretraining for the convolutional stack. The
//! classical route is a PCA fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CoreError, Result};
use crate::models::{
    pca_fit, AutoencoderModel, AutoencoderSpec, FunctionalDecoderSpec, FunctionalModel, Model,
};
use crate::nn::{
    backward, forward, init_params, ridge_penalty, InitScheme, Network, ParamBlock, ParamVector,
    Tensor,
};
use crate::optim::{train, BatchMode, Objective, TrainConfig, TrainHistory};

use super::metrics::pooled_rmse;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressConfig {
    pub train: TrainConfig,
    /// Chronological tail of the history held out for early stopping.
    pub validation_fraction: f64,
    /// Iteration budget for each greedy layer-pair stage (convolutional
    /// stack only); 0 skips pretraining.
    pub pretrain_iterations: usize,
}

impl Default for CompressConfig {
    fn default() -> Self {
        CompressConfig {
            train: TrainConfig::default(),
            validation_fraction: 0.25,
            pretrain_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayCode {
    pub date: String,
    pub code: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressionResult {
    pub model: Model,
    /// One code per observation, chronological.
    pub codes: Vec<DayCode>,
    /// Pooled reconstruction RMSE over the calibration block.
    pub calib_rmse: f64,
    /// Pooled reconstruction RMSE over the validation block.
    pub valid_rmse: f64,
    pub history: TrainHistory,
}

fn split_counts(n: usize, validation_fraction: f64) -> Result<(usize, usize)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(CoreError::InvalidFraction(format!(
            "validation_fraction {validation_fraction}"
        )));
    }
    if n < 2 {
        return Err(CoreError::EmptyDataset);
    }
    let n_valid = (((n as f64) * validation_fraction).round() as usize).clamp(1, n - 1);
    Ok((n - n_valid, n_valid))
}

fn code_name(i: usize) -> String {
    format!("code.{i}")
}

/// Deterministic batch partition for one epoch.
fn epoch_batches(n: usize, mode: BatchMode, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    match mode {
        BatchMode::Full => vec![(0..n).collect()],
        BatchMode::Minibatch { size } => {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let size = size.max(1);
            let mut idx: Vec<usize> = (0..n).collect();
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
            idx.shuffle(&mut rng);
            idx.chunks(size).map(|c| c.to_vec()).collect()
        }
    }
}

fn add_into(acc: &mut ParamVector, src: &ParamVector, scale: f64) -> Result<()> {
    for b in src.blocks() {
        let dst = acc.block_mut(&b.name)?;
        for (d, s) in dst.data.iter_mut().zip(&b.data) {
            *d += scale * s;
        }
    }
    Ok(())
}

struct FunctionalObjective<'a> {
    model: &'a FunctionalModel,
    calib: &'a [crate::data::Observation],
    valid: &'a [crate::data::Observation],
    ridge_blocks: Vec<String>,
    penalty: f64,
    batch_mode: BatchMode,
    seed: u64,
}

impl FunctionalObjective<'_> {
    /// The decoder-weight blocks of the joint parameter vector, in the
    /// network's own layout (backward shapes its output after its input).
    fn net_params(&self, params: &ParamVector) -> Result<ParamVector> {
        let mut net_params = self.model.net.zero_params();
        for b in net_params.blocks_mut() {
            b.data = params.block(&b.name)?.data.clone();
        }
        Ok(net_params)
    }

    /// (sum of squared residuals, net-weight grad of that sum, code grad).
    fn obs_grad(
        &self,
        params: &ParamVector,
        code: &[f64],
        obs: &crate::data::Observation,
    ) -> Result<(f64, ParamVector, Vec<f64>)> {
        let mut loss = 0.0;
        let mut gnet = self.model.net.zero_params();
        let mut gcode = vec![0.0; code.len()];
        for (loc, y) in &obs.points {
            let g = self.model.decode_with_gradients(params, code, loc)?;
            let r = g.value - y;
            loss += r * r;
            gnet.add_scaled(&g.grad_params, 2.0 * r)?;
            for (gi, gc) in gcode.iter_mut().zip(&g.grad_code) {
                *gi += 2.0 * r * gc;
            }
        }
        Ok((loss, gnet, gcode))
    }
}

impl Objective for FunctionalObjective<'_> {
    fn batches_per_epoch(&self) -> usize {
        epoch_batches(self.calib.len(), self.batch_mode, self.seed, 0).len()
    }

    fn loss_grad(
        &mut self,
        params: &ParamVector,
        epoch: usize,
        batch: usize,
    ) -> Result<(f64, ParamVector)> {
        let batches = epoch_batches(self.calib.len(), self.batch_mode, self.seed, epoch);
        let members = &batches[batch.min(batches.len() - 1)];
        let n_points: usize = members.iter().map(|&i| self.calib[i].len()).sum();
        let scale = 1.0 / (n_points.max(1) as f64);
        let net_params = self.net_params(params)?;
        let per_obs: Vec<Result<(usize, f64, ParamVector, Vec<f64>)>> = members
            .par_iter()
            .map(|&i| {
                let code = &params.block(&code_name(i))?.data;
                let (l, gnet, gcode) = self.obs_grad(&net_params, code, &self.calib[i])?;
                Ok((i, l, gnet, gcode))
            })
            .collect();
        let mut grad = params.zeros_like();
        let mut loss = 0.0;
        for r in per_obs {
            let (i, l, gnet, gcode) = r?;
            loss += l * scale;
            add_into(&mut grad, &gnet, scale)?;
            let gb = grad.block_mut(&code_name(i))?;
            for (d, s) in gb.data.iter_mut().zip(&gcode) {
                *d += scale * s;
            }
        }
        if self.penalty > 0.0 {
            let (v, g) = ridge_penalty(params, self.penalty, &self.ridge_blocks)?;
            loss += v;
            add_into(&mut grad, &g, 1.0)?;
        }
        // Validation-day codes are calibrated against their own data; the
        // decoder weights only ever see calibration gradients.
        if batch == 0 {
            let offset = self.calib.len();
            let valid_grads: Vec<Result<(usize, Vec<f64>)>> = (0..self.valid.len())
                .into_par_iter()
                .map(|j| {
                    let i = offset + j;
                    let code = &params.block(&code_name(i))?.data;
                    let (_, _, gcode) = self.obs_grad(&net_params, code, &self.valid[j])?;
                    let n = self.valid[j].len().max(1) as f64;
                    Ok((i, gcode.into_iter().map(|g| g / n).collect()))
                })
                .collect();
            for r in valid_grads {
                let (i, gcode) = r?;
                grad.block_mut(&code_name(i))?.data = gcode;
            }
        }
        Ok((loss, grad))
    }

    fn valid_loss(&mut self, params: &ParamVector) -> Result<f64> {
        let offset = self.calib.len();
        let net_params = self.net_params(params)?;
        let sums: Vec<Result<(f64, usize)>> = (0..self.valid.len())
            .into_par_iter()
            .map(|j| {
                let code = &params.block(&code_name(offset + j))?.data;
                let mut s = 0.0;
                for (loc, y) in &self.valid[j].points {
                    let v = self.model.decode(&net_params, code, loc)?;
                    s += (v - y) * (v - y);
                }
                Ok((s, self.valid[j].len()))
            })
            .collect();
        let mut total = 0.0;
        let mut n = 0usize;
        for r in sums {
            let (s, k) = r?;
            total += s;
            n += k;
        }
        Ok(total / n.max(1) as f64)
    }
}

/// Joint fit of the functional decoder and one code per day. Codes start
/// at zero; the decoder weights are Glorot initialized from the seed.
pub fn compress_functional(
    spec: &FunctionalDecoderSpec,
    ds: &Dataset,
    cfg: &CompressConfig,
) -> Result<CompressionResult> {
    if ds.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let (n_calib, _) = split_counts(ds.len(), cfg.validation_fraction)?;
    let calib = &ds.observations[..n_calib];
    let valid = &ds.observations[n_calib..];
    let net = spec.network();
    let transform = FunctionalModel::fit_transform(spec, ds);
    let model = FunctionalModel {
        spec: spec.clone(),
        net: net.clone(),
        params: net.zero_params(),
        transform,
    };
    let code_blocks: Vec<ParamBlock> = (0..ds.len())
        .map(|i| ParamBlock {
            name: code_name(i),
            shape: vec![spec.factors],
            data: vec![0.0; spec.factors],
        })
        .collect();
    let init = init_params(&net, InitScheme::GlorotNormal, cfg.train.seed)
        .concat(ParamVector::new(code_blocks));
    let mut objective = FunctionalObjective {
        model: &model,
        calib,
        valid,
        ridge_blocks: net.dense_weight_names(),
        penalty: cfg.train.penalty,
        batch_mode: cfg.train.batch_mode,
        seed: cfg.train.seed,
    };
    let (best, history) = train(&mut objective, init, &cfg.train)?;
    let mut net_params = net.zero_params();
    for b in net_params.blocks_mut() {
        b.data = best.block(&b.name)?.data.clone();
    }
    let fitted = FunctionalModel { spec: spec.clone(), net, params: net_params, transform: model.transform };
    let codes: Vec<DayCode> = ds
        .observations
        .iter()
        .enumerate()
        .map(|(i, o)| {
            Ok(DayCode { date: o.date.clone(), code: best.block(&code_name(i))?.data.clone() })
        })
        .collect::<Result<_>>()?;
    let recon = |range: std::ops::Range<usize>| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        range
            .map(|i| {
                let locs: Vec<_> =
                    ds.observations[i].points.iter().map(|(l, _)| l.clone()).collect();
                let pred = fitted.decode_many(&codes[i].code, &locs)?;
                Ok((pred, ds.observations[i].values()))
            })
            .collect()
    };
    let calib_rmse = pooled_rmse(&recon(0..n_calib)?);
    let valid_rmse = pooled_rmse(&recon(n_calib..ds.len())?);
    Ok(CompressionResult { model: Model::Functional(fitted), codes, calib_rmse, valid_rmse, history })
}

/// Rows-in, rows-out reconstruction objective over a fixed network shape;
/// used both for greedy layer-pair pretraining and the final fine-tune.
struct ReconObjective {
    net: Network,
    input_shape: Vec<usize>,
    calib: Vec<Vec<f64>>,
    valid: Vec<Vec<f64>>,
    ridge_blocks: Vec<String>,
    penalty: f64,
    batch_mode: BatchMode,
    seed: u64,
}

impl ReconObjective {
    fn row_grad(&self, params: &ParamVector, row: &[f64]) -> Result<(f64, ParamVector)> {
        let x = Tensor::new(self.input_shape.clone(), row.to_vec());
        let (out, tape) = forward(&self.net, params, &x)?;
        let mut loss = 0.0;
        let mut gout = vec![0.0; out.len()];
        for (g, (o, t)) in gout.iter_mut().zip(out.data.iter().zip(row)) {
            let r = o - t;
            loss += r * r;
            *g = 2.0 * r;
        }
        let (gp, _) = backward(&self.net, params, &tape, &Tensor::new(out.shape.clone(), gout))?;
        Ok((loss, gp))
    }

    fn pooled_loss(&self, params: &ParamVector, rows: &[Vec<f64>]) -> Result<f64> {
        let sums: Vec<Result<f64>> = rows
            .par_iter()
            .map(|row| {
                let x = Tensor::new(self.input_shape.clone(), row.clone());
                let (out, _) = forward(&self.net, params, &x)?;
                Ok(out.data.iter().zip(row).map(|(o, t)| (o - t) * (o - t)).sum())
            })
            .collect();
        let mut total = 0.0;
        for s in sums {
            total += s?;
        }
        let n_points: usize = rows.iter().map(|r| r.len()).sum();
        Ok(total / n_points.max(1) as f64)
    }
}

impl Objective for ReconObjective {
    fn batches_per_epoch(&self) -> usize {
        epoch_batches(self.calib.len(), self.batch_mode, self.seed, 0).len()
    }

    fn loss_grad(
        &mut self,
        params: &ParamVector,
        epoch: usize,
        batch: usize,
    ) -> Result<(f64, ParamVector)> {
        let batches = epoch_batches(self.calib.len(), self.batch_mode, self.seed, epoch);
        let members = &batches[batch.min(batches.len() - 1)];
        let n_points: usize = members.iter().map(|&i| self.calib[i].len()).sum();
        let scale = 1.0 / (n_points.max(1) as f64);
        let parts: Vec<Result<(f64, ParamVector)>> = members
            .par_iter()
            .map(|&i| self.row_grad(params, &self.calib[i]))
            .collect();
        let mut grad = params.zeros_like();
        let mut loss = 0.0;
        for p in parts {
            let (l, g) = p?;
            loss += l * scale;
            grad.add_scaled(&g, scale)?;
        }
        if self.penalty > 0.0 {
            let (v, g) = ridge_penalty(params, self.penalty, &self.ridge_blocks)?;
            loss += v;
            grad.add_scaled(&g, 1.0)?;
        }
        Ok((loss, grad))
    }

    fn valid_loss(&mut self, params: &ParamVector) -> Result<f64> {
        self.pooled_loss(params, &self.valid)
    }
}

fn pair_params(full: &ParamVector, enc: usize, dec: usize) -> Result<ParamVector> {
    let mut blocks = Vec::with_capacity(4);
    for (j, i) in [enc, dec].into_iter().enumerate() {
        for (old, new) in [
            (Network::weight_name(i), Network::weight_name(j)),
            (Network::bias_name(i), Network::bias_name(j)),
        ] {
            let b = full.block(&old)?;
            blocks.push(ParamBlock { name: new, shape: b.shape.clone(), data: b.data.clone() });
        }
    }
    Ok(ParamVector::new(blocks))
}

fn write_pair_back(full: &mut ParamVector, pair: &ParamVector, enc: usize, dec: usize) -> Result<()> {
    for (j, i) in [enc, dec].into_iter().enumerate() {
        for (src, dst) in [
            (Network::weight_name(j), Network::weight_name(i)),
            (Network::bias_name(j), Network::bias_name(i)),
        ] {
            full.block_mut(&dst)?.data = pair.block(&src)?.data.clone();
        }
    }
    Ok(())
}

/// Trains a grid autoencoder on the dataset's value rows. The
/// convolutional stack is pretrained greedily, one encoder/decoder layer
/// pair at a time from the outside in, before the joint fine-tune.
pub fn compress_autoencoder(
    spec: &AutoencoderSpec,
    ds: &Dataset,
    cfg: &CompressConfig,
) -> Result<CompressionResult> {
    let grid = ds
        .fixed_grid
        .clone()
        .ok_or_else(|| CoreError::GridMismatch("autoencoder compression needs a fixed grid".into()))?;
    if grid.len() != spec.grid_len() {
        return Err(CoreError::GridMismatch(format!(
            "grid has {} nodes, spec expects {}",
            grid.len(),
            spec.grid_len()
        )));
    }
    let rows = ds.value_matrix()?;
    let (n_calib, _) = split_counts(rows.len(), cfg.validation_fraction)?;
    let (net, split) = spec.build()?;
    let mut params = init_params(&net, InitScheme::PerLayerKind, cfg.train.seed);
    let last = net.layers.len() - 1;
    let pretrain = matches!(spec, AutoencoderSpec::Conv(_)) && cfg.pretrain_iterations > 0;
    if pretrain {
        let mut reps: Vec<Vec<f64>> = rows.clone();
        let mut rep_shape = spec.input_shape();
        for k in 0..split {
            let pair_net = Network::new(vec![net.layers[k].clone(), net.layers[last - k].clone()]);
            let ridge_blocks = pair_net.dense_weight_names();
            let mut objective = ReconObjective {
                net: pair_net,
                input_shape: rep_shape.clone(),
                calib: reps[..n_calib.min(reps.len())].to_vec(),
                valid: reps[n_calib.min(reps.len())..].to_vec(),
                ridge_blocks,
                penalty: cfg.train.penalty,
                batch_mode: cfg.train.batch_mode,
                seed: cfg.train.seed.wrapping_add(1 + k as u64),
            };
            let stage_cfg = TrainConfig {
                max_iterations: cfg.pretrain_iterations,
                ..cfg.train.clone()
            };
            let (best, _) = train(&mut objective, pair_params(&params, k, last - k)?, &stage_cfg)?;
            write_pair_back(&mut params, &best, k, last - k)?;
            // Push the representations through the trained encoder layer.
            let enc_net = Network::new(vec![net.layers[k].clone()]);
            let enc_params = {
                let mut blocks = Vec::new();
                for (old, new) in [
                    (Network::weight_name(k), Network::weight_name(0)),
                    (Network::bias_name(k), Network::bias_name(0)),
                ] {
                    let b = params.block(&old)?;
                    blocks.push(ParamBlock {
                        name: new,
                        shape: b.shape.clone(),
                        data: b.data.clone(),
                    });
                }
                ParamVector::new(blocks)
            };
            let next_shape = enc_net.output_shape(&rep_shape)?;
            reps = reps
                .iter()
                .map(|r| {
                    let x = Tensor::new(rep_shape.clone(), r.clone());
                    forward(&enc_net, &enc_params, &x).map(|(out, _)| out.data)
                })
                .collect::<Result<_>>()?;
            rep_shape = next_shape;
        }
    }
    let mut objective = ReconObjective {
        net: net.clone(),
        input_shape: spec.input_shape(),
        calib: rows[..n_calib].to_vec(),
        valid: rows[n_calib..].to_vec(),
        ridge_blocks: net.dense_weight_names(),
        penalty: cfg.train.penalty,
        batch_mode: cfg.train.batch_mode,
        seed: cfg.train.seed,
    };
    let (best, history) = train(&mut objective, params, &cfg.train)?;
    let model = AutoencoderModel::new(spec.clone(), best)?.with_grid_nodes(grid)?;
    let mut codes = Vec::with_capacity(rows.len());
    let mut calib_pairs = Vec::new();
    let mut valid_pairs = Vec::new();
    for (i, (row, obs)) in rows.iter().zip(&ds.observations).enumerate() {
        let (code, recon) = model.autoencode(row)?;
        codes.push(DayCode { date: obs.date.clone(), code });
        if i < n_calib {
            calib_pairs.push((recon, row.clone()));
        } else {
            valid_pairs.push((recon, row.clone()));
        }
    }
    let calib_rmse = pooled_rmse(&calib_pairs);
    let valid_rmse = pooled_rmse(&valid_pairs);
    Ok(CompressionResult {
        model: Model::Autoencoder(model),
        codes,
        calib_rmse,
        valid_rmse,
        history,
    })
}

/// Classical PCA compression of the value rows. The spectrum is fitted on
/// the calibration block only; validation RMSE is honest out-of-sample.
pub fn compress_pca(ds: &Dataset, factors: usize, validation_fraction: f64) -> Result<CompressionResult> {
    let grid = ds
        .fixed_grid
        .clone()
        .ok_or_else(|| CoreError::GridMismatch("PCA compression needs a fixed grid".into()))?;
    let rows = ds.value_matrix()?;
    let (n_calib, _) = split_counts(rows.len(), validation_fraction)?;
    let mut model = pca_fit(&rows[..n_calib], factors)?;
    model.grid_nodes = grid;
    let mut codes = Vec::with_capacity(rows.len());
    let mut calib_pairs = Vec::new();
    let mut valid_pairs = Vec::new();
    for (i, (row, obs)) in rows.iter().zip(&ds.observations).enumerate() {
        let code = model.encode(row);
        let recon = model.decode(&code);
        codes.push(DayCode { date: obs.date.clone(), code });
        if i < n_calib {
            calib_pairs.push((recon, row.clone()));
        } else {
            valid_pairs.push((recon, row.clone()));
        }
    }
    Ok(CompressionResult {
        model: Model::Pca(model),
        codes,
        calib_rmse: pooled_rmse(&calib_pairs),
        valid_rmse: pooled_rmse(&valid_pairs),
        history: TrainHistory::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NodeLocation, Observation};
    use crate::models::LinearProjectionSpec;

    fn rank2_dataset(n: usize, m: usize) -> Dataset {
        let grid: Vec<NodeLocation> = (0..m).map(|i| NodeLocation::new(vec![i as f64])).collect();
        let basis1: Vec<f64> = (0..m).map(|i| (i as f64 * 0.61).sin()).collect();
        let basis2: Vec<f64> = (0..m).map(|i| (i as f64 * 0.17).cos()).collect();
        let observations = (0..n)
            .map(|k| {
                let a = (k as f64 * 0.13).sin();
                let b = 0.5 * (k as f64 * 0.29).cos();
                Observation {
                    date: format!("2020-{:03}", k),
                    points: grid
                        .iter()
                        .enumerate()
                        .map(|(i, g)| (g.clone(), a * basis1[i] + b * basis2[i]))
                        .collect(),
                    grid_id: Some("g".into()),
                }
            })
            .collect();
        Dataset { observations, dim: 1, fixed_grid: Some(grid) }
    }

    #[test]
    fn pca_compression_of_rank2_data_is_exact_with_two_factors() {
        let ds = rank2_dataset(60, 8);
        let res = compress_pca(&ds, 2, 0.25).unwrap();
        assert!(res.calib_rmse < 1e-10, "calib {}", res.calib_rmse);
        assert!(res.valid_rmse < 1e-10, "valid {}", res.valid_rmse);
        assert_eq!(res.codes.len(), 60);
    }

    #[test]
    fn linear_autoencoder_learns_rank2_data() {
        let ds = rank2_dataset(50, 6);
        let spec = AutoencoderSpec::Linear(LinearProjectionSpec { m: 6, factors: 2 });
        let cfg = CompressConfig {
            train: TrainConfig {
                learning_rate: 0.01,
                max_iterations: 3000,
                patience: 300,
                ..TrainConfig::default()
            },
            ..CompressConfig::default()
        };
        let res = compress_autoencoder(&spec, &ds, &cfg).unwrap();
        assert!(res.valid_rmse < 0.02, "valid rmse {}", res.valid_rmse);
    }

    #[test]
    fn functional_compression_improves_over_start_and_is_deterministic() {
        let ds = rank2_dataset(20, 6);
        let spec =
            FunctionalDecoderSpec { dim: 1, n_exogenous: 0, factors: 2, hidden: vec![8] };
        let cfg = CompressConfig {
            train: TrainConfig { max_iterations: 300, patience: 300, ..TrainConfig::default() },
            ..CompressConfig::default()
        };
        let a = compress_functional(&spec, &ds, &cfg).unwrap();
        let b = compress_functional(&spec, &ds, &cfg).unwrap();
        assert_eq!(a.codes.len(), 20);
        // Values are centered around 0 with spread ~1; untrained output is
        // near the zero bias, so anything below the data scale is learning.
        assert!(a.calib_rmse < 0.5, "calib rmse {}", a.calib_rmse);
        for (x, y) in a.codes[3].code.iter().zip(&b.codes[3].code) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.history.records.len(), b.history.records.len());
    }

    #[test]
    fn minibatch_mode_partitions_all_calibration_days() {
        let batches = epoch_batches(10, BatchMode::Minibatch { size: 4 }, 7, 3);
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(batches.len(), 3);
    }
}
