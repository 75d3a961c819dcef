//! Minimal reverse-mode differentiation over dense and 2-D convolutional
//! layers, with the activations and initializers used by the models.
//!
//! Everything is f64; the problem sizes are tiny and reproducibility wins
//! over speed.

mod init;
mod layers;
mod params;

pub use init::{init_params, InitScheme};
pub use layers::{backward, forward, Activation, LayerSpec, Network, Tape};
pub use params::{ParamBlock, ParamVector};

use crate::error::Result;

/// Dense array with an explicit shape. Dense layers see it flat; conv
/// layers interpret the shape as `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Squared-weight penalty over the given blocks (biases excluded by the
/// caller simply not listing them): value = c * sum w^2, grad = 2 c w.
pub fn ridge_penalty(
    params: &ParamVector,
    coefficient: f64,
    included_blocks: &[String],
) -> Result<(f64, ParamVector)> {
    let mut grad = params.zeros_like();
    let mut value = 0.0;
    for name in included_blocks {
        let block = params.block(name)?;
        let gblock = grad.block_mut(name)?;
        for (g, &w) in gblock.data.iter_mut().zip(&block.data) {
            value += coefficient * w * w;
            *g = 2.0 * coefficient * w;
        }
    }
    Ok((value, grad))
}
