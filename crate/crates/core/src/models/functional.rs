//! The functional decoder: a dense network mapping (code, location
//! [, exogenous]) to one value, so arbitrary node locations can be
//! decoded without a fixed grid.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NodeLocation};
use crate::error::{CoreError, Result};
use crate::nn::{backward, forward, Activation, LayerSpec, Network, ParamVector, Tensor};

use super::normalize::AffineMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDecoderSpec {
    /// Location coordinate dimension.
    pub dim: usize,
    pub n_exogenous: usize,
    /// Code length f.
    pub factors: usize,
    /// Hidden layer widths, tanh activated; a linear scalar output follows.
    pub hidden: Vec<usize>,
}

impl FunctionalDecoderSpec {
    pub fn input_width(&self) -> usize {
        self.factors + self.dim + self.n_exogenous
    }

    pub fn network(&self) -> Network {
        let mut layers = Vec::new();
        let mut width = self.input_width();
        for &h in &self.hidden {
            layers.push(LayerSpec::Dense { input: width, output: h, activation: Activation::Tanh });
            width = h;
        }
        layers.push(LayerSpec::Dense { input: width, output: 1, activation: Activation::Linear });
        Network::new(layers)
    }
}

/// A trained functional decoder: spec, weights and the location transform,
/// all of which travel together in the model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalModel {
    pub spec: FunctionalDecoderSpec,
    pub net: Network,
    pub params: ParamVector,
    /// Affine map over (coords, exogenous), fitted on the training set.
    pub transform: AffineMap,
}

/// Value plus the gradients a caller may need.
pub struct DecodeGradients {
    pub value: f64,
    pub grad_params: ParamVector,
    pub grad_code: Vec<f64>,
    /// Gradient with respect to the raw (untransformed) coordinates.
    pub grad_coords: Vec<f64>,
}

impl FunctionalModel {
    pub fn fit_transform(spec: &FunctionalDecoderSpec, ds: &Dataset) -> AffineMap {
        let dim = spec.dim + spec.n_exogenous;
        let rows: Vec<Vec<f64>> = ds
            .observations
            .iter()
            .flat_map(|o| o.points.iter())
            .map(|(loc, _)| {
                let mut row = loc.coords.clone();
                row.extend_from_slice(&loc.exogenous);
                row
            })
            .collect();
        AffineMap::fit_unit_interval(rows.iter().map(|r| r.as_slice()), dim)
    }

    fn input(&self, code: &[f64], loc: &NodeLocation) -> Result<Tensor> {
        if code.len() != self.spec.factors {
            return Err(CoreError::ShapeMismatch(format!(
                "code length {} != {}",
                code.len(),
                self.spec.factors
            )));
        }
        if loc.coords.len() != self.spec.dim || loc.exogenous.len() != self.spec.n_exogenous {
            return Err(CoreError::ShapeMismatch(format!(
                "location ({}, {} exo) does not match spec ({}, {} exo)",
                loc.coords.len(),
                loc.exogenous.len(),
                self.spec.dim,
                self.spec.n_exogenous
            )));
        }
        let mut data = Vec::with_capacity(self.spec.input_width());
        data.extend_from_slice(code);
        let mut raw = loc.coords.clone();
        raw.extend_from_slice(&loc.exogenous);
        self.transform.apply(&raw, &mut data);
        Ok(Tensor::from_vec(data))
    }

    pub fn decode(&self, params: &ParamVector, code: &[f64], loc: &NodeLocation) -> Result<f64> {
        let x = self.input(code, loc)?;
        let (out, _) = forward(&self.net, params, &x)?;
        Ok(out.data[0])
    }

    pub fn decode_value(&self, code: &[f64], loc: &NodeLocation) -> Result<f64> {
        self.decode(&self.params, code, loc)
    }

    /// Forward plus reverse pass seeded with unit output gradient.
    pub fn decode_with_gradients(
        &self,
        params: &ParamVector,
        code: &[f64],
        loc: &NodeLocation,
    ) -> Result<DecodeGradients> {
        let x = self.input(code, loc)?;
        let (out, tape) = forward(&self.net, params, &x)?;
        let (grad_params, gin) = backward(&self.net, params, &tape, &Tensor::from_vec(vec![1.0]))?;
        let f = self.spec.factors;
        let grad_code = gin.data[..f].to_vec();
        // Chain rule back through the affine input transform.
        let grad_coords = (0..self.spec.dim)
            .map(|j| gin.data[f + j] * self.transform.scale[j])
            .collect();
        Ok(DecodeGradients { value: out.data[0], grad_params, grad_code, grad_coords })
    }

    /// Decodes a whole set of locations from one code.
    pub fn decode_many(&self, code: &[f64], locs: &[NodeLocation]) -> Result<Vec<f64>> {
        locs.iter().map(|l| self.decode_value(code, l)).collect()
    }
}
