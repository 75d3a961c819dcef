use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::{ParamBlock, ParamVector, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            // Overflow-safe softplus.
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed in terms of the pre-activation.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-x).exp()),
            Activation::Linear => 1.0,
        }
    }
}

/// Layer geometry. Conv kinds use VALID padding: output spatial size is
/// input - kernel + 1 per axis (deconv is the transpose, input + kernel - 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
        activation: Activation,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        activation: Activation,
    },
    Deconv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Dense { activation, .. }
            | LayerSpec::Conv2d { activation, .. }
            | LayerSpec::Deconv2d { activation, .. } => activation,
        }
    }

    /// (weight shape, bias shape) for this layer.
    pub fn param_shapes(&self) -> (Vec<usize>, Vec<usize>) {
        match *self {
            LayerSpec::Dense { input, output, .. } => (vec![output, input], vec![output]),
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                (vec![out_channels, in_channels, kernel.0, kernel.1], vec![out_channels])
            }
            LayerSpec::Deconv2d { in_channels, out_channels, kernel, .. } => {
                (vec![in_channels, out_channels, kernel.0, kernel.1], vec![out_channels])
            }
        }
    }

    /// Fan counts used by the Glorot rule.
    pub fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Dense { input, output, .. } => (input, output),
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                (in_channels * kernel.0 * kernel.1, out_channels * kernel.0 * kernel.1)
            }
            LayerSpec::Deconv2d { in_channels, out_channels, kernel, .. } => {
                (in_channels * kernel.0 * kernel.1, out_channels * kernel.0 * kernel.1)
            }
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { input: n_in, output, .. } => {
                let flat: usize = input.iter().product();
                if flat != n_in {
                    return Err(CoreError::ShapeMismatch(format!(
                        "dense expects {n_in} inputs, got {flat}"
                    )));
                }
                Ok(vec![output])
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                let (c, h, w) = as_chw(input)?;
                if c != in_channels {
                    return Err(CoreError::ShapeMismatch(format!(
                        "conv expects {in_channels} channels, got {c}"
                    )));
                }
                if h < kernel.0 || w < kernel.1 {
                    return Err(CoreError::ShapeMismatch(format!(
                        "input {h}x{w} smaller than kernel {}x{}",
                        kernel.0, kernel.1
                    )));
                }
                Ok(vec![out_channels, h - kernel.0 + 1, w - kernel.1 + 1])
            }
            LayerSpec::Deconv2d { in_channels, out_channels, kernel, .. } => {
                let (c, h, w) = as_chw(input)?;
                if c != in_channels {
                    return Err(CoreError::ShapeMismatch(format!(
                        "deconv expects {in_channels} channels, got {c}"
                    )));
                }
                Ok(vec![out_channels, h + kernel.0 - 1, w + kernel.1 - 1])
            }
        }
    }
}

fn as_chw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape.len() {
        3 => Ok((shape[0], shape[1], shape[2])),
        2 => Ok((1, shape[0], shape[1])),
        // A flat vector of n units reads as n channels of size (1,1), which
        // is how the dense bottleneck feeds the first deconv layer.
        1 => Ok((shape[0], 1, 1)),
        _ => Err(CoreError::ShapeMismatch(format!("expected [C,H,W] shape, got {shape:?}"))),
    }
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Network { layers }
    }

    pub fn weight_name(i: usize) -> String {
        format!("layer{i}.weight")
    }

    pub fn bias_name(i: usize) -> String {
        format!("layer{i}.bias")
    }

    /// Zeroed parameters in this network's layout.
    pub fn zero_params(&self) -> ParamVector {
        let mut blocks = Vec::with_capacity(2 * self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (wshape, bshape) = layer.param_shapes();
            blocks.push(ParamBlock {
                name: Network::weight_name(i),
                data: vec![0.0; wshape.iter().product()],
                shape: wshape,
            });
            blocks.push(ParamBlock {
                name: Network::bias_name(i),
                data: vec![0.0; bshape.iter().product()],
                shape: bshape,
            });
        }
        ParamVector::new(blocks)
    }

    /// Names of the weight blocks of dense layers (the ridge-penalized set).
    pub fn dense_weight_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Dense { .. }))
            .map(|(i, _)| Network::weight_name(i))
            .collect()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(shape)
    }
}

/// Per-layer record kept by the forward pass: the layer input and the
/// pre-activation, which is all backward needs.
#[derive(Debug, Clone)]
pub struct Tape {
    traces: Vec<(Tensor, Tensor)>,
}

impl Tape {
    /// The input that was fed to layer `i` (the activation leaving layer
    /// `i - 1`).
    pub fn input_of(&self, i: usize) -> &Tensor {
        &self.traces[i].0
    }
}

pub fn forward(net: &Network, params: &ParamVector, input: &Tensor) -> Result<(Tensor, Tape)> {
    let mut traces = Vec::with_capacity(net.layers.len());
    let mut x = input.clone();
    for (i, layer) in net.layers.iter().enumerate() {
        let w = params.block(&Network::weight_name(i))?;
        let b = params.block(&Network::bias_name(i))?;
        let pre = affine_forward(layer, &w.data, &b.data, &x)?;
        let act = layer.activation();
        let out = Tensor::new(pre.shape.clone(), pre.data.iter().map(|&z| act.apply(z)).collect());
        traces.push((x, pre));
        x = out;
    }
    Ok((x, Tape { traces }))
}

/// Reverse pass. Returns gradients for every parameter block and for the
/// network input.
pub fn backward(
    net: &Network,
    params: &ParamVector,
    tape: &Tape,
    grad_output: &Tensor,
) -> Result<(ParamVector, Tensor)> {
    assert_eq!(tape.traces.len(), net.layers.len(), "tape does not match network");
    let mut grads = params.zeros_like();
    let mut g = grad_output.clone();
    for (i, layer) in net.layers.iter().enumerate().rev() {
        let (input, pre) = &tape.traces[i];
        if g.len() != pre.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "gradient length {} does not match layer {i} output {}",
                g.len(),
                pre.len()
            )));
        }
        let act = layer.activation();
        // dL/d(pre) = dL/d(out) * act'(pre)
        let gz: Vec<f64> =
            g.data.iter().zip(&pre.data).map(|(&gy, &z)| gy * act.derivative(z)).collect();
        let w = params.block(&Network::weight_name(i))?.data.clone();
        let (gw, gb, gx) = affine_backward(layer, &w, input, &gz)?;
        grads.block_mut(&Network::weight_name(i))?.data = gw;
        grads.block_mut(&Network::bias_name(i))?.data = gb;
        g = Tensor::new(input.shape.clone(), gx);
    }
    Ok((grads, g))
}

fn affine_forward(layer: &LayerSpec, w: &[f64], b: &[f64], x: &Tensor) -> Result<Tensor> {
    let out_shape = layer.output_shape(&x.shape)?;
    match *layer {
        LayerSpec::Dense { input, output, .. } => {
            let mut out = vec![0.0; output];
            for o in 0..output {
                let mut acc = b[o];
                let row = &w[o * input..(o + 1) * input];
                for (wi, xi) in row.iter().zip(&x.data) {
                    acc += wi * xi;
                }
                out[o] = acc;
            }
            Ok(Tensor::new(out_shape, out))
        }
        LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
            let (_, h, w_in) = as_chw(&x.shape)?;
            let (kh, kw) = kernel;
            let (oh, ow) = (h - kh + 1, w_in - kw + 1);
            let mut out = vec![0.0; out_channels * oh * ow];
            for co in 0..out_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b[co];
                        for ci in 0..in_channels {
                            for p in 0..kh {
                                for q in 0..kw {
                                    let xv = x.data[ci * h * w_in + (i + p) * w_in + (j + q)];
                                    let wv = w[((co * in_channels + ci) * kh + p) * kw + q];
                                    acc += xv * wv;
                                }
                            }
                        }
                        out[co * oh * ow + i * ow + j] = acc;
                    }
                }
            }
            Ok(Tensor::new(out_shape, out))
        }
        LayerSpec::Deconv2d { in_channels, out_channels, kernel, .. } => {
            let (_, h, w_in) = as_chw(&x.shape)?;
            let (kh, kw) = kernel;
            let (oh, ow) = (h + kh - 1, w_in + kw - 1);
            let mut out = vec![0.0; out_channels * oh * ow];
            for co in 0..out_channels {
                for v in &mut out[co * oh * ow..(co + 1) * oh * ow] {
                    *v = b[co];
                }
            }
            for ci in 0..in_channels {
                for i in 0..h {
                    for j in 0..w_in {
                        let xv = x.data[ci * h * w_in + i * w_in + j];
                        for co in 0..out_channels {
                            for p in 0..kh {
                                for q in 0..kw {
                                    let wv = w[((ci * out_channels + co) * kh + p) * kw + q];
                                    out[co * oh * ow + (i + p) * ow + (j + q)] += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
            Ok(Tensor::new(out_shape, out))
        }
    }
}

/// Gradients of the affine part: (dW, db, dX) given dL/d(pre-activation).
fn affine_backward(
    layer: &LayerSpec,
    w: &[f64],
    x: &Tensor,
    gz: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    match *layer {
        LayerSpec::Dense { input, output, .. } => {
            let mut gw = vec![0.0; output * input];
            let mut gb = vec![0.0; output];
            let mut gx = vec![0.0; input];
            for o in 0..output {
                gb[o] = gz[o];
                for i in 0..input {
                    gw[o * input + i] = gz[o] * x.data[i];
                    gx[i] += w[o * input + i] * gz[o];
                }
            }
            Ok((gw, gb, gx))
        }
        LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
            let (_, h, w_in) = as_chw(&x.shape)?;
            let (kh, kw) = kernel;
            let (oh, ow) = (h - kh + 1, w_in - kw + 1);
            let mut gw = vec![0.0; out_channels * in_channels * kh * kw];
            let mut gb = vec![0.0; out_channels];
            let mut gx = vec![0.0; x.data.len()];
            for co in 0..out_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let g = gz[co * oh * ow + i * ow + j];
                        gb[co] += g;
                        for ci in 0..in_channels {
                            for p in 0..kh {
                                for q in 0..kw {
                                    let xi = ci * h * w_in + (i + p) * w_in + (j + q);
                                    let wi = ((co * in_channels + ci) * kh + p) * kw + q;
                                    gw[wi] += g * x.data[xi];
                                    gx[xi] += g * w[wi];
                                }
                            }
                        }
                    }
                }
            }
            Ok((gw, gb, gx))
        }
        LayerSpec::Deconv2d { in_channels, out_channels, kernel, .. } => {
            let (_, h, w_in) = as_chw(&x.shape)?;
            let (kh, kw) = kernel;
            let (oh, ow) = (h + kh - 1, w_in + kw - 1);
            let mut gw = vec![0.0; in_channels * out_channels * kh * kw];
            let mut gb = vec![0.0; out_channels];
            let mut gx = vec![0.0; x.data.len()];
            for co in 0..out_channels {
                for g in &gz[co * oh * ow..(co + 1) * oh * ow] {
                    gb[co] += g;
                }
            }
            for ci in 0..in_channels {
                for i in 0..h {
                    for j in 0..w_in {
                        let xi = ci * h * w_in + i * w_in + j;
                        for co in 0..out_channels {
                            for p in 0..kh {
                                for q in 0..kw {
                                    let g = gz[co * oh * ow + (i + p) * ow + (j + q)];
                                    let wi = ((ci * out_channels + co) * kh + p) * kw + q;
                                    gw[wi] += g * x.data[xi];
                                    gx[xi] += g * w[wi];
                                }
                            }
                        }
                    }
                }
            }
            Ok((gw, gb, gx))
        }
    }
}
