use serde::{Deserialize, Serialize};

/// Per-feature affine map fitted on the training range. Locations and
/// exogenous features are mapped to [-1, 1] so tanh layers do not
/// saturate; values stay in natural units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        AffineMap { scale: vec![1.0; dim], offset: vec![0.0; dim] }
    }

    /// Fits x -> 2 (x - min) / (max - min) - 1 per feature over the rows.
    pub fn fit_unit_interval<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for j in 0..dim {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        let mut scale = vec![1.0; dim];
        let mut offset = vec![0.0; dim];
        for j in 0..dim {
            let span = max[j] - min[j];
            if span > 0.0 && span.is_finite() {
                scale[j] = 2.0 / span;
                offset[j] = -1.0 - 2.0 * min[j] / span;
            }
        }
        AffineMap { scale, offset }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        for (j, &v) in x.iter().enumerate() {
            out.push(self.scale[j] * v + self.offset[j]);
        }
    }
}
