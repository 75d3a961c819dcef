//! Dataset model: ingestion from long-format CSV, chronological splits,
//! and masking of visible points.
//!
//! Input CSV columns: `date, c1[, c2][, exo...], value`, one row per point.
//! Fixed grids are declared by a sidecar file with one node per line.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A point location: `d` coordinates plus optional exogenous features
/// observed at that node (e.g. a forward rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLocation {
    pub coords: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exogenous: Vec<f64>,
}

impl NodeLocation {
    pub fn new(coords: Vec<f64>) -> Self {
        NodeLocation { coords, exogenous: Vec::new() }
    }

    pub fn with_exogenous(coords: Vec<f64>, exogenous: Vec<f64>) -> Self {
        NodeLocation { coords, exogenous }
    }

    fn coords_close(&self, other: &[f64], tol: f64) -> bool {
        self.coords.len() == other.len()
            && self.coords.iter().zip(other).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// One day's worth of points. `grid_id` names the fixed grid the node set
/// coincides with, when there is one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation {
    pub date: String,
    pub points: Vec<(NodeLocation, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_id: Option<String>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|(_, y)| *y).collect()
    }
}

/// Chronologically ordered observations sharing a coordinate dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_grid: Option<Vec<NodeLocation>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Stacked value matrix, one row per observation. Requires a fixed grid.
    pub fn value_matrix(&self) -> Result<Vec<Vec<f64>>> {
        let grid = self.fixed_grid.as_ref().ok_or_else(|| {
            CoreError::GridMismatch("value matrix requires a fixed grid".into())
        })?;
        let m = grid.len();
        let mut rows = Vec::with_capacity(self.len());
        for obs in &self.observations {
            if obs.len() != m {
                return Err(CoreError::GridMismatch(format!(
                    "observation {} has {} points, grid has {}",
                    obs.date,
                    obs.len(),
                    m
                )));
            }
            rows.push(obs.values());
        }
        Ok(rows)
    }
}

/// Column mapping for [`load_dataset`]: how many coordinates and how many
/// exogenous columns sit between the date and the value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub n_coords: usize,
    pub n_exogenous: usize,
    /// Skip a header row when present.
    pub has_header: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema { n_coords: 2, n_exogenous: 0, has_header: true }
    }
}

/// Visible-point selection schemes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MaskSpec {
    /// Keep a uniformly random fraction of the points.
    KeepFraction { fraction: f64 },
    /// Keep exactly the listed node coordinates (fixed-grid node patterns).
    KeepNodes { nodes: Vec<Vec<f64>> },
    /// Keep `count` points with at least 2 per first-coordinate slice,
    /// the lowest slice absorbing the remainder.
    KeepCountUniform { count: usize },
    /// Keep the `count` historically least correlated nodes.
    KeepCountLessCorrelated { count: usize },
}

/// Reads a long-format CSV into a dataset. Rows are grouped by date and
/// dates ordered lexicographically (ISO-8601).
pub fn load_dataset(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(false)
        .from_path(path)?;
    let expected = 1 + schema.n_coords + schema.n_exogenous + 1;
    let mut by_date: BTreeMap<String, Vec<(NodeLocation, f64)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + if schema.has_header { 2 } else { 1 };
        let record = record.map_err(|e| CoreError::Parse { row, message: e.to_string() })?;
        if record.len() != expected {
            return Err(CoreError::Parse {
                row,
                message: format!("expected {} columns, got {}", expected, record.len()),
            });
        }
        let date = record[0].trim().to_string();
        let mut nums = Vec::with_capacity(expected - 1);
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| CoreError::Parse {
                row,
                message: format!("non-numeric value {:?}", field),
            })?;
            if !v.is_finite() {
                return Err(CoreError::Parse { row, message: format!("non-finite value {v}") });
            }
            nums.push(v);
        }
        let coords = nums[..schema.n_coords].to_vec();
        let exogenous = nums[schema.n_coords..schema.n_coords + schema.n_exogenous].to_vec();
        let value = nums[expected - 2];
        by_date
            .entry(date)
            .or_default()
            .push((NodeLocation { coords, exogenous }, value));
    }
    if by_date.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    let observations = by_date
        .into_iter()
        .map(|(date, points)| Observation { date, points, grid_id: None })
        .collect();
    Ok(Dataset { observations, dim: schema.n_coords, fixed_grid: None })
}

/// Reads a grid sidecar (one node per line, coordinates comma separated)
/// and stamps every observation with the grid, verifying node sets match.
pub fn attach_fixed_grid(ds: &mut Dataset, grid_path: &Path, grid_id: &str) -> Result<()> {
    let text = std::fs::read_to_string(grid_path)?;
    let mut grid = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let coords: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let coords = coords.map_err(|_| CoreError::Parse {
            row: i + 1,
            message: format!("bad grid line {:?}", line),
        })?;
        grid.push(NodeLocation::new(coords));
    }
    align_to_grid(ds, grid, grid_id)
}

/// Reorders every observation's points to match `grid`'s node order.
pub fn align_to_grid(ds: &mut Dataset, grid: Vec<NodeLocation>, grid_id: &str) -> Result<()> {
    let m = grid.len();
    for obs in &mut ds.observations {
        if obs.len() != m {
            return Err(CoreError::GridMismatch(format!(
                "observation {} has {} points, grid has {}",
                obs.date,
                obs.len(),
                m
            )));
        }
        let mut reordered = Vec::with_capacity(m);
        for node in &grid {
            let found = obs
                .points
                .iter()
                .find(|(loc, _)| loc.coords_close(&node.coords, 1e-9))
                .ok_or_else(|| {
                    CoreError::GridMismatch(format!(
                        "observation {} misses grid node {:?}",
                        obs.date, node.coords
                    ))
                })?;
            reordered.push(found.clone());
        }
        obs.points = reordered;
        obs.grid_id = Some(grid_id.to_string());
    }
    ds.fixed_grid = Some(grid);
    Ok(())
}

/// Splits into contiguous chronological blocks: calibration, then
/// validation, then test (the final block).
pub fn chronological_split(
    ds: &Dataset,
    test_fraction: f64,
    validation_fraction: f64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CoreError::InvalidFraction(format!("test_fraction {test_fraction}")));
    }
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(CoreError::InvalidFraction(format!(
            "validation_fraction {validation_fraction}"
        )));
    }
    if test_fraction + validation_fraction >= 1.0 {
        return Err(CoreError::InvalidFraction("fractions sum to >= 1".into()));
    }
    let n = ds.len();
    if n == 0 {
        return Err(CoreError::EmptyDataset);
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_valid = ((n as f64) * validation_fraction).round() as usize;
    let n_test = n_test.max(1);
    let n_valid = n_valid.max(1);
    if n_test + n_valid >= n {
        return Err(CoreError::InvalidFraction("splits leave no calibration block".into()));
    }
    let n_calib = n - n_valid - n_test;
    let slice = |range: std::ops::Range<usize>| Dataset {
        observations: ds.observations[range].to_vec(),
        dim: ds.dim,
        fixed_grid: ds.fixed_grid.clone(),
    };
    Ok((slice(0..n_calib), slice(n_calib..n_calib + n_valid), slice(n_calib + n_valid..n)))
}

/// Splits visible from hidden points. A fixed seed makes the selection
/// reproducible; `history` is only needed for the less-correlated mode.
pub fn mask_observation(
    obs: &Observation,
    spec: &MaskSpec,
    seed: u64,
    history: Option<&Dataset>,
) -> Result<(Observation, Observation)> {
    if obs.is_empty() {
        return Err(CoreError::EmptyObservation);
    }
    let m = obs.len();
    let keep: Vec<usize> = match spec {
        MaskSpec::KeepFraction { fraction } => {
            if !(*fraction > 0.0 && *fraction <= 1.0) {
                return Err(CoreError::MaskInfeasible(format!("fraction {fraction}")));
            }
            let k = ((m as f64) * fraction).round().max(1.0) as usize;
            let k = k.min(m);
            let mut idx: Vec<usize> = (0..m).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            idx.shuffle(&mut rng);
            idx.truncate(k);
            idx
        }
        MaskSpec::KeepNodes { nodes } => {
            let mut keep = Vec::new();
            for node in nodes {
                let pos = obs
                    .points
                    .iter()
                    .position(|(loc, _)| loc.coords_close(node, 1e-9))
                    .ok_or_else(|| {
                        CoreError::MaskInfeasible(format!("node {:?} not in observation", node))
                    })?;
                keep.push(pos);
            }
            keep
        }
        MaskSpec::KeepCountUniform { count } => keep_count_uniform(obs, *count, seed)?,
        MaskSpec::KeepCountLessCorrelated { count } => {
            let history = history.ok_or_else(|| {
                CoreError::MaskInfeasible("less-correlated mode requires history".into())
            })?;
            keep_less_correlated(obs, history, *count)?
        }
    };
    if keep.is_empty() || keep.len() > m {
        return Err(CoreError::MaskInfeasible(format!("kept {} of {}", keep.len(), m)));
    }
    let mut kept_flags = vec![false; m];
    for &i in &keep {
        kept_flags[i] = true;
    }
    let mut visible = Vec::new();
    let mut hidden = Vec::new();
    for (i, p) in obs.points.iter().enumerate() {
        if kept_flags[i] {
            visible.push(p.clone());
        } else {
            hidden.push(p.clone());
        }
    }
    let mk = |points: Vec<(NodeLocation, f64)>| Observation {
        date: obs.date.clone(),
        points,
        grid_id: obs.grid_id.clone(),
    };
    Ok((mk(visible), mk(hidden)))
}

/// At least 2 kept points per first-coordinate slice; any remainder goes
/// to the lowest slices (3 points there) until `count` is reached.
fn keep_count_uniform(obs: &Observation, count: usize, seed: u64) -> Result<Vec<usize>> {
    let mut slices: BTreeMap<OrderedF64, Vec<usize>> = BTreeMap::new();
    for (i, (loc, _)) in obs.points.iter().enumerate() {
        slices.entry(OrderedF64(loc.coords[0])).or_default().push(i);
    }
    let n_slices = slices.len();
    if count < 2 * n_slices {
        return Err(CoreError::MaskInfeasible(format!(
            "count {count} < 2 points x {n_slices} slices"
        )));
    }
    if count > obs.len() {
        return Err(CoreError::MaskInfeasible(format!("count {count} > {} points", obs.len())));
    }
    let mut quota: Vec<usize> = vec![2; n_slices];
    let sizes: Vec<usize> = slices.values().map(|v| v.len()).collect();
    for (q, &sz) in quota.iter_mut().zip(&sizes) {
        *q = (*q).min(sz);
    }
    let mut total: usize = quota.iter().sum();
    // Remainder assigned from the lowest slice upward.
    'outer: while total < count {
        let before = total;
        for (q, &sz) in quota.iter_mut().zip(&sizes) {
            if *q < sz {
                *q += 1;
                total += 1;
                if total == count {
                    break 'outer;
                }
            }
        }
        if total == before {
            return Err(CoreError::MaskInfeasible("slices exhausted".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(count);
    for (slice_idx, indices) in slices.values().enumerate() {
        let mut pool = indices.clone();
        pool.shuffle(&mut rng);
        keep.extend(pool.into_iter().take(quota[slice_idx]));
    }
    keep.sort_unstable();
    Ok(keep)
}

/// Greedy farthest-point selection in correlation distance 1 - |rho| over
/// historical per-node series. Needs the observation on a fixed grid.
fn keep_less_correlated(obs: &Observation, history: &Dataset, count: usize) -> Result<Vec<usize>> {
    if obs.grid_id.is_none() || history.fixed_grid.is_none() {
        return Err(CoreError::MaskInfeasible(
            "less-correlated mode requires a fixed grid and grid history".into(),
        ));
    }
    let m = obs.len();
    if count == 0 || count > m {
        return Err(CoreError::MaskInfeasible(format!("count {count} of {m}")));
    }
    let rows = history.value_matrix()?;
    if rows.len() < 2 {
        return Err(CoreError::MaskInfeasible("history too short for correlations".into()));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; m];
    for row in &rows {
        for (mu, v) in mean.iter_mut().zip(row) {
            *mu += v / n;
        }
    }
    let mut std = vec![0.0; m];
    for row in &rows {
        for j in 0..m {
            std[j] += (row[j] - mean[j]).powi(2) / n;
        }
    }
    for s in &mut std {
        *s = s.sqrt().max(1e-12);
    }
    let corr = |a: usize, b: usize| -> f64 {
        let mut c = 0.0;
        for row in &rows {
            c += (row[a] - mean[a]) * (row[b] - mean[b]) / n;
        }
        (c / (std[a] * std[b])).clamp(-1.0, 1.0)
    };
    // Seed with the node whose average |rho| to the others is smallest.
    let mut avg_abs = vec![0.0; m];
    for a in 0..m {
        for b in 0..m {
            if a != b {
                avg_abs[a] += corr(a, b).abs();
            }
        }
    }
    let first = (0..m)
        .min_by(|&a, &b| avg_abs[a].partial_cmp(&avg_abs[b]).unwrap())
        .unwrap();
    let mut selected = vec![first];
    let mut min_dist: Vec<f64> = (0..m).map(|j| 1.0 - corr(first, j).abs()).collect();
    while selected.len() < count {
        let next = (0..m)
            .filter(|j| !selected.contains(j))
            .max_by(|&a, &b| min_dist[a].partial_cmp(&min_dist[b]).unwrap())
            .unwrap();
        selected.push(next);
        for j in 0..m {
            let d = 1.0 - corr(next, j).abs();
            if d < min_dist[j] {
                min_dist[j] = d;
            }
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

#[derive(PartialEq, PartialOrd)]
struct OrderedF64(f64);
impl Eq for OrderedF64 {}
#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap()
    }
}
