use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One named array of parameters (a layer's weights or biases).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named blocks of parameters. Block order is fixed at construction and
/// defines the flat element order used by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    blocks: Vec<ParamBlock>,
}

impl ParamVector {
    pub fn new(blocks: Vec<ParamBlock>) -> Self {
        ParamVector { blocks }
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn block(&self, name: &str) -> Result<&ParamBlock> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| CoreError::ShapeMismatch(format!("no block named {name}")))
    }

    pub fn block_mut(&mut self, name: &str) -> Result<&mut ParamBlock> {
        self.blocks
            .iter_mut()
            .find(|b| b.name == name)
            .ok_or_else(|| CoreError::ShapeMismatch(format!("no block named {name}")))
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn zeros_like(&self) -> ParamVector {
        ParamVector {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    data: vec![0.0; b.data.len()],
                })
                .collect(),
        }
    }

    /// Checks that `other` has identical block names and shapes.
    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flat_map(|b| b.data.iter().copied())
    }

    pub fn iter_flat_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.blocks.iter_mut().flat_map(|b| b.data.iter_mut())
    }

    /// self += scale * other, blockwise.
    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) -> Result<()> {
        if !self.same_layout(other) {
            return Err(CoreError::ShapeMismatch("param layout differs".into()));
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.iter_flat().all(f64::is_finite)
    }

    /// Concatenates two parameter vectors into one (distinct names assumed).
    pub fn concat(mut self, mut other: ParamVector) -> ParamVector {
        self.blocks.append(&mut other.blocks);
        self
    }
}
