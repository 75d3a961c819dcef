//! Classical PCA via spectral decomposition of the sample covariance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Row-major f x m, rows orthonormal, descending eigenvalue order.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// All m eigenvalues of the covariance, descending; the tail beyond f
    /// is the discarded spectrum.
    pub spectrum: Vec<f64>,
    /// Set when the covariance had fewer than f nonzero eigenvalues and
    /// the basis was padded with an arbitrary orthonormal completion.
    pub rank_deficient: bool,
    /// Node locations in grid order; empty when built without metadata.
    #[serde(default)]
    pub grid_nodes: Vec<crate::data::NodeLocation>,
}

const EIG_EPS: f64 = 1e-12;

/// Fits the top-f eigenvectors of the sample covariance (1/N convention).
pub fn pca_fit(rows: &[Vec<f64>], f: usize) -> Result<PcaModel> {
    let n = rows.len();
    if n < f || n == 0 {
        return Err(CoreError::RankDeficient(n));
    }
    let m = rows[0].len();
    let mut mean = vec![0.0; m];
    for row in rows {
        for (mu, v) in mean.iter_mut().zip(row) {
            *mu += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for row in rows {
        let centered = DVector::from_iterator(m, row.iter().zip(&mean).map(|(v, mu)| v - mu));
        cov += &centered * centered.transpose() / n as f64;
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let spectrum: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let nonzero = spectrum.iter().take(f).filter(|&&l| l > EIG_EPS).count();
    let mut components: Vec<Vec<f64>> = order
        .iter()
        .take(nonzero)
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let rank_deficient = nonzero < f;
    if rank_deficient {
        // Pad with an arbitrary orthonormal completion (Gram-Schmidt over
        // the standard basis).
        let mut k = 0usize;
        while components.len() < f && k < m {
            let mut v = vec![0.0; m];
            v[k] = 1.0;
            for c in &components {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= dot * ci;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for vi in &mut v {
                    *vi /= norm;
                }
                components.push(v);
            }
            k += 1;
        }
        if components.len() < f {
            return Err(CoreError::RankDeficient(nonzero));
        }
    }
    let eigenvalues = spectrum[..f].to_vec();
    Ok(PcaModel { mean, components, eigenvalues, spectrum, rank_deficient, grid_nodes: Vec::new() })
}

impl PcaModel {
    pub fn factors(&self) -> usize {
        self.components.len()
    }

    pub fn encode(&self, values: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(values).zip(&self.mean).map(|((ci, v), mu)| ci * (v - mu)).sum())
            .collect()
    }

    pub fn decode(&self, code: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (ci, c) in code.iter().zip(&self.components) {
            for (o, comp) in out.iter_mut().zip(c) {
                *o += ci * comp;
            }
        }
        out
    }

    pub fn reconstruct(&self, values: &[f64]) -> Vec<f64> {
        self.decode(&self.encode(values))
    }

    /// Least-squares code fitting only the visible entries; used for
    /// completion from partial observations.
    pub fn complete_code(&self, target: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        let f = self.factors();
        let visible: Vec<usize> = (0..target.len()).filter(|&i| mask[i]).collect();
        if visible.is_empty() {
            return Err(CoreError::EmptyObservation);
        }
        let a = DMatrix::<f64>::from_fn(visible.len(), f, |r, c| self.components[c][visible[r]]);
        let b = DVector::from_iterator(
            visible.len(),
            visible.iter().map(|&i| target[i] - self.mean[i]),
        );
        // Minimum-norm least squares: robust when a masked subset leaves
        // some component with no support among the visible nodes.
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| CoreError::ShapeMismatch(format!("least squares failed: {e}")))?;
        Ok(sol.iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mse(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn affine_rank_one_data_is_reconstructed_exactly() {
        let dir = [1.0, 2.0, -1.0, 0.5];
        let base = [0.3, 0.1, 0.0, -0.2];
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = (i as f64 - 10.0) / 5.0;
                dir.iter().zip(&base).map(|(d, b)| b + t * d).collect()
            })
            .collect();
        let model = pca_fit(&rows, 1).unwrap();
        for row in &rows {
            assert!(mse(row, &model.reconstruct(row)) < 1e-10);
        }
    }

    #[test]
    fn full_rank_components_reconstruct_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> =
            (0..50).map(|_| (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let model = pca_fit(&rows, 10).unwrap();
        for row in &rows {
            assert!(mse(row, &model.reconstruct(row)) < 1e-8);
        }
    }

    #[test]
    fn components_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> =
            (0..100).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let model = pca_fit(&rows, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 =
                    model.components[i].iter().zip(&model.components[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10, "C C^T [{i}][{j}] = {dot}");
            }
        }
    }

    #[test]
    fn reconstruction_mse_equals_discarded_eigenvalue_sum() {
        // Anisotropic Gaussian: axis stds 3, 1, 0.3, 0.1, ...
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let stds = [3.0, 1.0, 0.3, 0.1, 0.05, 0.02];
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                stds.iter()
                    .map(|s| {
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        s * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    })
                    .collect()
            })
            .collect();
        let f = 2;
        let model = pca_fit(&rows, f).unwrap();
        let avg_sq_err: f64 = rows
            .iter()
            .map(|r| {
                let rec = model.reconstruct(r);
                r.iter().zip(&rec).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / rows.len() as f64;
        let discarded: f64 = model.spectrum[f..].iter().sum();
        assert!(
            (avg_sq_err - discarded).abs() < 1e-8,
            "avg squared error {avg_sq_err} vs discarded spectrum {discarded}"
        );
    }

    #[test]
    fn rank_deficient_data_pads_with_orthonormal_completion() {
        // One-dimensional data but f = 3.
        let rows: Vec<Vec<f64>> =
            (0..10).map(|i| vec![i as f64, 2.0 * i as f64, 0.0, 0.0]).collect();
        let model = pca_fit(&rows, 3).unwrap();
        assert!(model.rank_deficient);
        assert_eq!(model.factors(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 =
                    model.components[i].iter().zip(&model.components[j]).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn complete_code_recovers_visible_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> =
            (0..60).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let model = pca_fit(&rows, 3).unwrap();
        let target = &rows[0];
        let mask = vec![true; 8];
        let code = model.complete_code(target, &mask).unwrap();
        let direct = model.encode(target);
        for (a, b) in code.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-8, "full-information completion should match encode");
        }
    }
}
