//! Day-by-day nowcasting backtest: hide part of each test day, predict
//! the hidden points, score the prediction.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{gp_fit, gp_predict, linear_interpolate, Extrapolation};
use crate::data::{Dataset, MaskSpec, NodeLocation};
use crate::error::{CoreError, Result};
use crate::models::Model;

use super::complete::{complete, predict, CompletionConfig};
use super::metrics::rmse;

/// What fills in the hidden points.
pub enum Method<'a> {
    /// Calibrate the model's code on the visible points, decode the rest.
    Model(&'a Model),
    /// Piecewise-linear interpolation over the visible points (2-D only),
    /// nearest neighbor outside the hull.
    LinearInterpolation,
    /// Gaussian process regression on the visible points.
    GaussianProcess { extrapolation: Extrapolation },
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Model(Model::Functional(_)) => "functional",
            Method::Model(Model::Autoencoder(_)) => "autoencoder",
            Method::Model(Model::Pca(_)) => "pca",
            Method::LinearInterpolation => "linear_interpolation",
            Method::GaussianProcess { .. } => "gaussian_process",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub mask: MaskSpec,
    pub completion: CompletionConfig,
    pub seed: u64,
    /// Start each day's calibration from the previous day's
    /// full-information code instead of zeros.
    pub warm_start: bool,
    /// Also calibrate against every point of each day to extract the
    /// factor series (model methods only).
    pub track_factors: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            mask: MaskSpec::KeepFraction { fraction: 0.25 },
            completion: CompletionConfig::default(),
            seed: 0,
            warm_start: true,
            track_factors: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayResult {
    pub date: String,
    pub rmse: f64,
    pub n_visible: usize,
    pub n_hidden: usize,
    /// Hidden points outside the visible convex hull (baselines only; 0
    /// for model methods, which extrapolate natively).
    pub n_extrapolated: usize,
    /// Code-calibration iterations (model methods only).
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    pub method: String,
    pub days: Vec<DayResult>,
    /// Mean of the per-day RMSEs.
    pub average_rmse: f64,
    pub worst_date: String,
    pub worst_rmse: f64,
    /// Per-day full-information codes, one row per day.
    pub factor_series: Vec<(String, Vec<f64>)>,
    pub elapsed_seconds: f64,
}

impl BacktestReport {
    pub fn days_csv(&self) -> String {
        let mut out =
            String::from("date,rmse,n_visible,n_hidden,n_extrapolated,iterations\n");
        for d in &self.days {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                d.date, d.rmse, d.n_visible, d.n_hidden, d.n_extrapolated, d.iterations
            ));
        }
        out
    }

    pub fn factors_csv(&self) -> String {
        let f = self.factor_series.first().map(|(_, c)| c.len()).unwrap_or(0);
        let mut out = String::from("date");
        for j in 0..f {
            out.push_str(&format!(",factor{j}"));
        }
        out.push('\n');
        for (date, code) in &self.factor_series {
            out.push_str(date);
            for v in code {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the backtest over every observation of `test`, masking each with
/// a per-day seed. `history` feeds the less-correlated mask mode.
pub fn run_backtest(
    method: &Method,
    test: &Dataset,
    history: Option<&Dataset>,
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    if test.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let started = Instant::now();
    let mut days = Vec::with_capacity(test.len());
    let mut factor_series = Vec::new();
    let mut previous_code: Option<Vec<f64>> = None;
    for (i, obs) in test.observations.iter().enumerate() {
        let (visible, hidden) =
            crate::data::mask_observation(obs, &cfg.mask, cfg.seed.wrapping_add(i as u64), history)?;
        let hidden_locs: Vec<NodeLocation> =
            hidden.points.iter().map(|(l, _)| l.clone()).collect();
        let truth = hidden.values();
        let mut n_extrapolated = 0usize;
        let mut iterations = 0usize;
        let pred: Vec<f64> = match method {
            Method::Model(model) => {
                let warm = if cfg.warm_start { previous_code.as_deref() } else { None };
                let c = complete(model, &visible, &cfg.completion, warm)?;
                iterations = c.iterations;
                if hidden_locs.is_empty() {
                    Vec::new()
                } else {
                    predict(model, &c.code, &hidden_locs)?
                }
            }
            Method::LinearInterpolation => {
                if hidden_locs.is_empty() {
                    Vec::new()
                } else {
                    let r = linear_interpolate(&visible, &hidden_locs)?;
                    n_extrapolated = r.extrapolated.iter().filter(|&&e| e).count();
                    r.values
                }
            }
            Method::GaussianProcess { extrapolation } => {
                if hidden_locs.is_empty() {
                    Vec::new()
                } else {
                    let hp = gp_fit(&visible)?;
                    gp_predict(hp, &visible, &hidden_locs, *extrapolation)?
                }
            }
        };
        if let Method::Model(model) = method {
            if cfg.track_factors || cfg.warm_start {
                let full = complete(model, obs, &cfg.completion, previous_code.as_deref())?;
                if cfg.track_factors {
                    factor_series.push((obs.date.clone(), full.code.clone()));
                }
                previous_code = Some(full.code);
            }
        }
        days.push(DayResult {
            date: obs.date.clone(),
            rmse: rmse(&pred, &truth),
            n_visible: visible.len(),
            n_hidden: hidden.len(),
            n_extrapolated,
            iterations,
        });
    }
    let average_rmse = days.iter().map(|d| d.rmse).sum::<f64>() / days.len() as f64;
    // Worst day; ties resolve to the earliest date.
    let worst = days
        .iter()
        .fold(None::<&DayResult>, |acc, d| match acc {
            Some(w) if d.rmse > w.rmse => Some(d),
            None => Some(d),
            _ => acc,
        })
        .expect("non-empty days");
    Ok(BacktestReport {
        method: method.name().to_string(),
        days: days.clone(),
        average_rmse,
        worst_date: worst.date.clone(),
        worst_rmse: worst.rmse,
        factor_series,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Observation;
    use crate::models::pca_fit;

    fn plane_dataset(n: usize) -> Dataset {
        // z = a + b x + c y per day: linear interpolation is exact inside
        // the hull and a rank-3 PCA captures it exactly.
        let grid: Vec<NodeLocation> = (0..5)
            .flat_map(|i| (0..5).map(move |j| NodeLocation::new(vec![i as f64, j as f64])))
            .collect();
        let observations = (0..n)
            .map(|k| {
                let (a, b, c) =
                    (1.0 + 0.1 * k as f64, 0.2 * (k as f64 * 0.3).sin(), 0.1 * (k as f64 * 0.7).cos());
                Observation {
                    date: format!("2022-{:03}", k),
                    points: grid
                        .iter()
                        .map(|g| (g.clone(), a + b * g.coords[0] + c * g.coords[1]))
                        .collect(),
                    grid_id: Some("g".into()),
                }
            })
            .collect();
        Dataset { observations, dim: 2, fixed_grid: Some(grid) }
    }

    #[test]
    fn pca_backtest_on_planes_is_near_exact() {
        let ds = plane_dataset(30);
        let rows = ds.value_matrix().unwrap();
        let mut pca = pca_fit(&rows[..20], 3).unwrap();
        pca.grid_nodes = ds.fixed_grid.clone().unwrap();
        let model = Model::Pca(pca);
        let test = Dataset {
            observations: ds.observations[20..].to_vec(),
            dim: 2,
            fixed_grid: ds.fixed_grid.clone(),
        };
        let cfg = BacktestConfig {
            mask: MaskSpec::KeepFraction { fraction: 0.5 },
            ..BacktestConfig::default()
        };
        let report = run_backtest(&Method::Model(&model), &test, None, &cfg).unwrap();
        assert_eq!(report.days.len(), 10);
        assert!(report.average_rmse < 1e-8, "avg {}", report.average_rmse);
        assert_eq!(report.factor_series.len(), 10);
        assert!(report.worst_rmse >= report.average_rmse);
    }

    #[test]
    fn linear_interpolation_is_exact_on_planes_inside_hull() {
        let ds = plane_dataset(3);
        let test = Dataset {
            observations: ds.observations.clone(),
            dim: 2,
            fixed_grid: ds.fixed_grid.clone(),
        };
        // Keep the four corners plus interior points so nothing is outside
        // the hull.
        let corners: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![0.0, 4.0],
            vec![4.0, 0.0],
            vec![4.0, 4.0],
            vec![2.0, 2.0],
        ];
        let cfg = BacktestConfig {
            mask: MaskSpec::KeepNodes { nodes: corners },
            ..BacktestConfig::default()
        };
        let report =
            run_backtest(&Method::LinearInterpolation, &test, None, &cfg).unwrap();
        assert!(report.average_rmse < 1e-10, "avg {}", report.average_rmse);
        assert!(report.days.iter().all(|d| d.n_extrapolated == 0));
    }

    #[test]
    fn csv_emitters_have_expected_headers() {
        let ds = plane_dataset(8);
        let rows = ds.value_matrix().unwrap();
        let mut pca = pca_fit(&rows[..6], 3).unwrap();
        pca.grid_nodes = ds.fixed_grid.clone().unwrap();
        let model = Model::Pca(pca);
        let test = Dataset {
            observations: ds.observations[6..].to_vec(),
            dim: 2,
            fixed_grid: ds.fixed_grid.clone(),
        };
        let cfg = BacktestConfig::default();
        let report = run_backtest(&Method::Model(&model), &test, None, &cfg).unwrap();
        assert!(report.days_csv().starts_with("date,rmse,n_visible,n_hidden"));
        assert!(report.factors_csv().starts_with("date,factor0,factor1,factor2"));
    }

    #[test]
    fn worst_day_tie_resolves_to_earliest() {
        let days = [("a", 1.0), ("b", 1.0)];
        // Mirrors the fold in run_backtest.
        let worst = days
            .iter()
            .fold(None::<&(&str, f64)>, |acc, d| match acc {
                Some(w) if d.1 > w.1 => Some(d),
                None => Some(d),
                _ => acc,
            })
            .unwrap();
        assert_eq!(worst.0, "a");
    }
}
