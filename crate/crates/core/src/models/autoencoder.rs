//! Fixed-grid autoencoders: the convolutional architecture and its linear
//! single-layer counterpart.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::{backward, forward, Activation, LayerSpec, Network, ParamBlock, ParamVector, Tensor};

/// Convolutional autoencoder geometry. The encoder stacks the conv layers
/// (VALID, softplus) and a linear dense bottleneck; the decoder mirrors it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvAutoencoderSpec {
    pub grid: (usize, usize),
    pub factors: usize,
    pub kernels: Vec<(usize, usize)>,
    pub channels: Vec<usize>,
}

impl ConvAutoencoderSpec {
    /// The swaption-style stack: kernels (5,4),(4,3),(3,3), channels 3,9,27.
    pub fn standard(grid: (usize, usize), factors: usize) -> Self {
        ConvAutoencoderSpec {
            grid,
            factors,
            kernels: vec![(5, 4), (4, 3), (3, 3)],
            channels: vec![3, 9, 27],
        }
    }

    fn layers(&self) -> Result<Vec<LayerSpec>> {
        if self.kernels.len() != self.channels.len() || self.kernels.is_empty() {
            return Err(CoreError::ShapeMismatch("kernels/channels length mismatch".into()));
        }
        let mut layers = Vec::new();
        let mut in_ch = 1;
        for (&k, &c) in self.kernels.iter().zip(&self.channels) {
            layers.push(LayerSpec::Conv2d {
                in_channels: in_ch,
                out_channels: c,
                kernel: k,
                activation: Activation::Softplus,
            });
            in_ch = c;
        }
        // Encoder spatial output must collapse to (1,1).
        let enc_net = Network::new(layers.clone());
        let out = enc_net.output_shape(&[1, self.grid.0, self.grid.1])?;
        if out[1] != 1 || out[2] != 1 {
            return Err(CoreError::ShapeMismatch(format!(
                "conv stack leaves spatial size {}x{}, expected 1x1",
                out[1], out[2]
            )));
        }
        let bottleneck = out[0];
        layers.push(LayerSpec::Dense {
            input: bottleneck,
            output: self.factors,
            activation: Activation::Linear,
        });
        // Decoder mirror: linear dense, then deconvs with softplus except a
        // linear output layer.
        layers.push(LayerSpec::Dense {
            input: self.factors,
            output: bottleneck,
            activation: Activation::Linear,
        });
        let mut ch_out: Vec<usize> = self.channels[..self.channels.len() - 1].to_vec();
        ch_out.reverse();
        ch_out.push(1);
        let mut in_ch = bottleneck;
        let mut kernels = self.kernels.clone();
        kernels.reverse();
        for (i, (&k, &c)) in kernels.iter().zip(&ch_out).enumerate() {
            let last = i + 1 == kernels.len();
            layers.push(LayerSpec::Deconv2d {
                in_channels: in_ch,
                out_channels: c,
                kernel: k,
                activation: if last { Activation::Linear } else { Activation::Softplus },
            });
            in_ch = c;
        }
        Ok(layers)
    }
}

/// Single linear dense layer each way, with biases and no nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProjectionSpec {
    pub m: usize,
    pub factors: usize,
}

impl LinearProjectionSpec {
    fn layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense { input: self.m, output: self.factors, activation: Activation::Linear },
            LayerSpec::Dense { input: self.factors, output: self.m, activation: Activation::Linear },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AutoencoderSpec {
    Conv(ConvAutoencoderSpec),
    Linear(LinearProjectionSpec),
}

impl AutoencoderSpec {
    pub fn factors(&self) -> usize {
        match self {
            AutoencoderSpec::Conv(s) => s.factors,
            AutoencoderSpec::Linear(s) => s.m.min(s.factors),
        }
    }

    pub fn grid_len(&self) -> usize {
        match self {
            AutoencoderSpec::Conv(s) => s.grid.0 * s.grid.1,
            AutoencoderSpec::Linear(s) => s.m,
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            AutoencoderSpec::Conv(s) => vec![1, s.grid.0, s.grid.1],
            AutoencoderSpec::Linear(s) => vec![s.m],
        }
    }

    /// (full network, number of encoder layers).
    pub fn build(&self) -> Result<(Network, usize)> {
        match self {
            AutoencoderSpec::Conv(s) => {
                let layers = s.layers()?;
                let split = s.kernels.len() + 1;
                Ok((Network::new(layers), split))
            }
            AutoencoderSpec::Linear(s) => Ok((Network::new(s.layers()), 1)),
        }
    }
}

/// A trained fixed-grid autoencoder: the full encoder+decoder stack with
/// its split point and weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub spec: AutoencoderSpec,
    pub net: Network,
    /// Layers `0..split` form the encoder.
    pub split: usize,
    pub params: ParamVector,
    /// Node locations in grid (row-major) order; empty when the model was
    /// built without grid metadata.
    #[serde(default)]
    pub grid_nodes: Vec<crate::data::NodeLocation>,
}

impl AutoencoderModel {
    pub fn new(spec: AutoencoderSpec, params: ParamVector) -> Result<Self> {
        let (net, split) = spec.build()?;
        Ok(AutoencoderModel { spec, net, split, params, grid_nodes: Vec::new() })
    }

    pub fn with_grid_nodes(mut self, nodes: Vec<crate::data::NodeLocation>) -> Result<Self> {
        if nodes.len() != self.spec.grid_len() {
            return Err(CoreError::GridMismatch(format!(
                "{} grid nodes for a {}-value grid",
                nodes.len(),
                self.spec.grid_len()
            )));
        }
        self.grid_nodes = nodes;
        Ok(self)
    }

    pub fn factors(&self) -> usize {
        self.spec.factors()
    }

    fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.spec.grid_len() {
            return Err(CoreError::GridMismatch(format!(
                "expected {} grid values, got {}",
                self.spec.grid_len(),
                values.len()
            )));
        }
        Ok(())
    }

    pub fn decoder(&self) -> (Network, ParamVector) {
        sub_network(&self.net, &self.params, self.split, self.net.layers.len())
    }

    pub fn encoder(&self) -> (Network, ParamVector) {
        sub_network(&self.net, &self.params, 0, self.split)
    }

    pub fn encode(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_values(values)?;
        let (enc, enc_params) = self.encoder();
        let x = Tensor::new(self.spec.input_shape(), values.to_vec());
        let (code, _) = forward(&enc, &enc_params, &x)?;
        Ok(code.data)
    }

    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        if code.len() != self.factors() {
            return Err(CoreError::ShapeMismatch(format!(
                "code length {} != {}",
                code.len(),
                self.factors()
            )));
        }
        let (dec, dec_params) = self.decoder();
        let (out, _) = forward(&dec, &dec_params, &Tensor::from_vec(code.to_vec()))?;
        Ok(out.data)
    }

    /// Decode plus gradient of 0.5 * sum_i w_i (out_i - target_i)^2 with
    /// respect to the code; used by the completion solver.
    pub fn decode_residual_grad(
        &self,
        code: &[f64],
        target: &[f64],
        point_mask: &[bool],
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (dec, dec_params) = self.decoder();
        let (out, tape) = forward(&dec, &dec_params, &Tensor::from_vec(code.to_vec()))?;
        let mut loss = 0.0;
        let mut gout = vec![0.0; out.len()];
        for i in 0..out.len() {
            if point_mask[i] {
                let r = out.data[i] - target[i];
                loss += r * r;
                gout[i] = 2.0 * r;
            }
        }
        let (_, gin) = backward(&dec, &dec_params, &tape, &Tensor::new(out.shape.clone(), gout))?;
        Ok((loss, out.data, gin.data))
    }

    pub fn autoencode(&self, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_values(values)?;
        let x = Tensor::new(self.spec.input_shape(), values.to_vec());
        let (out, tape) = forward(&self.net, &self.params, &x)?;
        let code = tape_code(&tape, self.split);
        Ok((code, out.data))
    }
}

/// Extracts layers `[start, end)` as a standalone network with its blocks
/// renumbered from zero.
pub fn sub_network(
    net: &Network,
    params: &ParamVector,
    start: usize,
    end: usize,
) -> (Network, ParamVector) {
    let layers = net.layers[start..end].to_vec();
    let mut blocks = Vec::with_capacity(2 * layers.len());
    for (j, i) in (start..end).enumerate() {
        for (old, new) in [
            (Network::weight_name(i), Network::weight_name(j)),
            (Network::bias_name(i), Network::bias_name(j)),
        ] {
            let b = params.block(&old).expect("network layout");
            blocks.push(ParamBlock { name: new, shape: b.shape.clone(), data: b.data.clone() });
        }
    }
    (Network::new(layers), ParamVector::new(blocks))
}

/// Writes the sub-network's (renumbered) blocks back into the full layout.
pub fn merge_sub_params(full: &mut ParamVector, sub: &ParamVector, start: usize, count: usize) {
    for j in 0..count {
        for (sub_name, full_name) in [
            (Network::weight_name(j), Network::weight_name(start + j)),
            (Network::bias_name(j), Network::bias_name(start + j)),
        ] {
            let src = sub.block(&sub_name).expect("sub layout").data.clone();
            full.block_mut(&full_name).expect("full layout").data = src;
        }
    }
}

fn tape_code(tape: &crate::nn::Tape, split: usize) -> Vec<f64> {
    tape.input_of(split).data.clone()
}
