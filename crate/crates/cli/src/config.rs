//! Declarative run configuration: one TOML file, overridable by flags.
//! Everything is validated up front so commands fail before any
//! computation starts.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use nowcast_core::data::{CsvSchema, MaskSpec};
use nowcast_core::optim::{BatchMode, TrainConfig};
use nowcast_core::pipeline::{CompletionConfig, CompressConfig};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub mask: Option<MaskSpec>,
    #[serde(default)]
    pub completion: CompletionSection,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default)]
    pub backtest: BacktestSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "two")]
    pub n_coords: usize,
    #[serde(default)]
    pub n_exogenous: usize,
    #[serde(default = "yes")]
    pub has_header: bool,
    /// Optional fixed-grid sidecar (one node per line).
    #[serde(default)]
    pub grid: Option<PathBuf>,
    /// Chronological tail held out as the test block.
    #[serde(default = "fifth")]
    pub test_fraction: f64,
}

fn two() -> usize {
    2
}
fn yes() -> bool {
    true
}
fn fifth() -> f64 {
    0.2
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            n_coords: self.n_coords,
            n_exogenous: self.n_exogenous,
            has_header: self.has_header,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Dense decoder over (code, location); works on moving grids.
    Functional {
        factors: usize,
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
    /// Convolutional autoencoder on a fixed grid.
    Conv {
        factors: usize,
        grid_rows: usize,
        grid_cols: usize,
    },
    /// Two-layer linear autoencoder on a fixed grid.
    Linear { factors: usize },
    /// Classical spectral PCA on a fixed grid.
    Pca { factors: usize },
}

fn default_hidden() -> Vec<usize> {
    vec![20, 20]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_iter")]
    pub max_iterations: usize,
    /// 0 means full batch; anything else is the minibatch size.
    #[serde(default)]
    pub batch: usize,
    #[serde(default)]
    pub penalty: f64,
    /// Mandatory (no wall-clock default); may be overridden by --seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_vf")]
    pub validation_fraction: f64,
    #[serde(default = "default_pretrain")]
    pub pretrain_iterations: usize,
}

fn default_lr() -> f64 {
    0.001
}
fn default_patience() -> usize {
    100
}
fn default_max_iter() -> usize {
    10_000
}
fn default_vf() -> f64 {
    0.25
}
fn default_pretrain() -> usize {
    500
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: default_lr(),
            patience: default_patience(),
            max_iterations: default_max_iter(),
            batch: 0,
            penalty: 0.0,
            seed: None,
            validation_fraction: default_vf(),
            pretrain_iterations: default_pretrain(),
        }
    }
}

impl TrainSection {
    pub fn compress_config(&self, seed: u64) -> CompressConfig {
        CompressConfig {
            train: TrainConfig {
                learning_rate: self.learning_rate,
                patience: self.patience,
                max_iterations: self.max_iterations,
                batch_mode: if self.batch == 0 {
                    BatchMode::Full
                } else {
                    BatchMode::Minibatch { size: self.batch }
                },
                penalty: self.penalty,
                seed,
            },
            validation_fraction: self.validation_fraction,
            pretrain_iterations: self.pretrain_iterations,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CompletionSection {
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

impl CompletionSection {
    pub fn config(&self) -> CompletionConfig {
        let mut cfg = CompletionConfig::default();
        if let Some(n) = self.max_iterations {
            cfg.max_iterations = n;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        cfg
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DetectSection {
    /// No silent default: detect refuses to run without it.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Optional corruption sub-mode: scale `k` points by `factor`.
    #[serde(default)]
    pub corruption: Option<CorruptionSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    pub k: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    /// Any of: functional, autoencoder, pca (need --model), plus
    /// linear_interpolation and gaussian_process.
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn default_methods() -> Vec<String> {
    vec!["model".into(), "linear_interpolation".into(), "gaussian_process".into()]
}

impl Default for BacktestSection {
    fn default() -> Self {
        BacktestSection { methods: default_methods(), warm_start: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out() }
    }
}

/// Loads and validates the config, applying flag overrides. All file
/// references must exist; the seed must come from the file or the flag.
pub fn load_config(
    path: &Path,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
    mask_override: Option<&str>,
    threshold_override: Option<f64>,
    exogenous_override: Option<usize>,
) -> Result<(RunConfig, u64), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
    if let Some(out) = out_override {
        cfg.output.dir = out.to_path_buf();
    }
    if let Some(mask) = mask_override {
        cfg.mask = Some(parse_mask_flag(mask)?);
    }
    if threshold_override.is_some() {
        cfg.detect.threshold = threshold_override;
    }
    if let Some(n) = exogenous_override {
        cfg.data.n_exogenous = n;
    }
    if !cfg.data.path.exists() {
        return Err(CliError::Config(format!(
            "dataset path does not exist: {}",
            cfg.data.path.display()
        )));
    }
    if let Some(grid) = &cfg.data.grid {
        if !grid.exists() {
            return Err(CliError::Config(format!("grid path does not exist: {}", grid.display())));
        }
    }
    if !(cfg.data.test_fraction > 0.0 && cfg.data.test_fraction < 1.0) {
        return Err(CliError::Config(format!(
            "test_fraction must be in (0, 1), got {}",
            cfg.data.test_fraction
        )));
    }
    let seed = seed_override.or(cfg.train.seed).ok_or_else(|| {
        CliError::Config("seed required: set train.seed in the config or pass --seed".into())
    })?;
    Ok((cfg, seed))
}

/// `--mask` accepts `fraction:0.25`, `uniform:40` or `nodes:path.csv`.
pub fn parse_mask_flag(s: &str) -> Result<MaskSpec, CliError> {
    let (mode, arg) = s
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("mask flag {s:?}: expected mode:value")))?;
    match mode {
        "fraction" => {
            let f: f64 = arg
                .parse()
                .map_err(|_| CliError::Config(format!("mask fraction {arg:?} is not a number")))?;
            Ok(MaskSpec::KeepFraction { fraction: f })
        }
        "uniform" => {
            let c: usize = arg
                .parse()
                .map_err(|_| CliError::Config(format!("mask count {arg:?} is not an integer")))?;
            Ok(MaskSpec::KeepCountUniform { count: c })
        }
        "less_correlated" => {
            let c: usize = arg
                .parse()
                .map_err(|_| CliError::Config(format!("mask count {arg:?} is not an integer")))?;
            Ok(MaskSpec::KeepCountLessCorrelated { count: c })
        }
        "nodes" => {
            let text = std::fs::read_to_string(arg)
                .map_err(|e| CliError::Config(format!("cannot read node list {arg}: {e}")))?;
            let mut nodes = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let coords: Result<Vec<f64>, _> =
                    line.split(',').map(|v| v.trim().parse::<f64>()).collect();
                nodes.push(coords.map_err(|_| {
                    CliError::Config(format!("bad node line {line:?} in {arg}"))
                })?);
            }
            Ok(MaskSpec::KeepNodes { nodes })
        }
        other => Err(CliError::Config(format!("unknown mask mode {other:?}"))),
    }
}
