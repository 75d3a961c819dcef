//! The five subcommands. Each validates what it needs, computes, and
//! writes tidy long-format CSVs plus a one-line summary to stdout.

use std::fmt::Write as _;
use std::path::Path;

use nowcast_core::baselines::Extrapolation;
use nowcast_core::data::{attach_fixed_grid, load_dataset, mask_observation, Dataset};
use nowcast_core::models::{
    AutoencoderSpec, ConvAutoencoderSpec, FunctionalDecoderSpec, LinearProjectionSpec, Model,
};
use nowcast_core::pipeline::{
    complete as complete_code, compress_autoencoder, compress_functional, compress_pca,
    corruption_check, detect_outliers, predict, rmse, run_backtest, BacktestConfig, Method,
};

use crate::config::{ModelConfig, RunConfig};
use crate::output::write_atomic;
use crate::CliError;

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let mut ds = load_dataset(&cfg.data.path, &cfg.data.schema())?;
    if let Some(grid) = &cfg.data.grid {
        attach_fixed_grid(&mut ds, grid, "grid")?;
    }
    Ok(ds)
}

/// (train block, test block) split at the configured test fraction.
fn split_train_test(ds: &Dataset, test_fraction: f64) -> (Dataset, Dataset) {
    let n = ds.len();
    let n_test = (((n as f64) * test_fraction).round() as usize).clamp(1, n - 1);
    let cut = n - n_test;
    let slice = |range: std::ops::Range<usize>| Dataset {
        observations: ds.observations[range].to_vec(),
        dim: ds.dim,
        fixed_grid: ds.fixed_grid.clone(),
    };
    (slice(0..cut), slice(cut..n))
}

fn require_model_file(path: Option<&Path>) -> Result<Model, CliError> {
    let path =
        path.ok_or_else(|| CliError::Config("this command needs --model <file>".into()))?;
    if !path.exists() {
        return Err(CliError::Config(format!("model file does not exist: {}", path.display())));
    }
    Ok(Model::load(path)?)
}

fn sanitize(date: &str) -> String {
    date.chars().map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Long-format surface dump: one row per point.
fn surface_csv(obs: &nowcast_core::Observation, predicted: &[f64], visible: &[bool]) -> String {
    let n_coords = obs.points.first().map(|(l, _)| l.coords.len()).unwrap_or(0);
    let mut out = String::from("date");
    for i in 0..n_coords {
        let _ = write!(out, ",c{}", i + 1);
    }
    out.push_str(",value,predicted,visible\n");
    for (i, (loc, y)) in obs.points.iter().enumerate() {
        out.push_str(&obs.date);
        for c in &loc.coords {
            let _ = write!(out, ",{c}");
        }
        let _ = writeln!(out, ",{y},{},{}", predicted[i], u8::from(visible[i]));
    }
    out
}

pub fn compress(cfg: &RunConfig, seed: u64) -> Result<(), CliError> {
    let model_cfg = cfg
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("compress needs a [model] section".into()))?;
    let ds = load_data(cfg)?;
    let (train, _) = split_train_test(&ds, cfg.data.test_fraction);
    let ccfg = cfg.train.compress_config(seed);
    let result = match model_cfg {
        ModelConfig::Functional { factors, hidden } => {
            let spec = FunctionalDecoderSpec {
                dim: cfg.data.n_coords,
                n_exogenous: cfg.data.n_exogenous,
                factors: *factors,
                hidden: hidden.clone(),
            };
            compress_functional(&spec, &train, &ccfg)?
        }
        ModelConfig::Conv { factors, grid_rows, grid_cols } => {
            let spec = AutoencoderSpec::Conv(ConvAutoencoderSpec::standard(
                (*grid_rows, *grid_cols),
                *factors,
            ));
            compress_autoencoder(&spec, &train, &ccfg)?
        }
        ModelConfig::Linear { factors } => {
            let m = train
                .fixed_grid
                .as_ref()
                .ok_or_else(|| {
                    CliError::Config("linear autoencoder needs data.grid".into())
                })?
                .len();
            let spec = AutoencoderSpec::Linear(LinearProjectionSpec { m, factors: *factors });
            compress_autoencoder(&spec, &train, &ccfg)?
        }
        ModelConfig::Pca { factors } => {
            compress_pca(&train, *factors, cfg.train.validation_fraction)?
        }
    };
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    result.model.save(&out.join("model.json"))?;
    write_atomic(&out.join("history.csv"), &result.history.to_csv())?;
    // Per-day reconstruction RMSE from the fitted codes.
    let mut recon_csv = String::from("date,rmse\n");
    let mut worst: Option<(usize, f64)> = None;
    let mut per_day = Vec::with_capacity(train.len());
    for (i, obs) in train.observations.iter().enumerate() {
        let locs: Vec<_> = obs.points.iter().map(|(l, _)| l.clone()).collect();
        let pred = predict(&result.model, &result.codes[i].code, &locs)?;
        let r = rmse(&pred, &obs.values());
        let _ = writeln!(recon_csv, "{},{r}", obs.date);
        if worst.map(|(_, w)| r > w).unwrap_or(true) {
            worst = Some((i, r));
        }
        per_day.push(pred);
    }
    write_atomic(&out.join("reconstruction.csv"), &recon_csv)?;
    if let Some((i, _)) = worst {
        let obs = &train.observations[i];
        let visible = vec![true; obs.len()];
        write_atomic(&out.join("worst_reconstruction.csv"), &surface_csv(obs, &per_day[i], &visible))?;
    }
    println!(
        "compressed {} days: calibration rmse {:.6}, validation rmse {:.6}, model at {}",
        train.len(),
        result.calib_rmse,
        result.valid_rmse,
        out.join("model.json").display()
    );
    Ok(())
}

pub fn complete(cfg: &RunConfig, seed: u64, model_path: Option<&Path>) -> Result<(), CliError> {
    let model = require_model_file(model_path)?;
    let ds = load_data(cfg)?;
    let ccfg = cfg.completion.config();
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    let mut summary = String::from("date,visible_rmse,hidden_rmse,n_visible,n_hidden,iterations\n");
    let mut long = None;
    for (i, obs) in ds.observations.iter().enumerate() {
        let (visible, hidden) = match &cfg.mask {
            Some(mask) => mask_observation(obs, mask, seed.wrapping_add(i as u64), None)?,
            None => (obs.clone(), nowcast_core::Observation {
                date: obs.date.clone(),
                points: Vec::new(),
                grid_id: obs.grid_id.clone(),
            }),
        };
        let c = complete_code(&model, &visible, &ccfg, None)?;
        let locs: Vec<_> = obs.points.iter().map(|(l, _)| l.clone()).collect();
        let pred = predict(&model, &c.code, &locs)?;
        let visible_flags: Vec<bool> = obs
            .points
            .iter()
            .map(|(l, _)| visible.points.iter().any(|(vl, _)| vl == l))
            .collect();
        let hidden_rmse = if hidden.is_empty() {
            0.0
        } else {
            let pairs: Vec<(f64, f64)> = obs
                .points
                .iter()
                .zip(&pred)
                .zip(&visible_flags)
                .filter(|(_, &v)| !v)
                .map(|(((_, y), p), _)| (*p, *y))
                .collect();
            let (ps, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            rmse(&ps, &ys)
        };
        let _ = writeln!(
            summary,
            "{},{},{hidden_rmse},{},{},{}",
            obs.date,
            c.visible_rmse,
            visible.len(),
            hidden.len(),
            c.iterations
        );
        let csv = surface_csv(obs, &pred, &visible_flags);
        match &mut long {
            None => long = Some(csv),
            Some(acc) => {
                // Skip the repeated header.
                acc.push_str(csv.split_once('\n').map(|(_, rest)| rest).unwrap_or(""));
            }
        }
    }
    write_atomic(&out.join("completion_summary.csv"), &summary)?;
    write_atomic(&out.join("completions.csv"), &long.unwrap_or_default())?;
    println!("completed {} days into {}", ds.len(), out.display());
    Ok(())
}

pub fn backtest(cfg: &RunConfig, seed: u64, model_path: Option<&Path>) -> Result<(), CliError> {
    let mask = cfg
        .mask
        .clone()
        .ok_or_else(|| CliError::Config("backtest needs a [mask] section or --mask".into()))?;
    let wants_model = cfg.backtest.methods.iter().any(|m| m == "model");
    let model = match (wants_model, model_path) {
        (true, Some(_)) => Some(require_model_file(model_path)?),
        _ => None,
    };
    if cfg
        .backtest
        .methods
        .iter()
        .all(|m| m == "model")
        && model.is_none()
    {
        return Err(CliError::Config(
            "backtest methods list only 'model' but no --model file was given".into(),
        ));
    }
    let ds = load_data(cfg)?;
    let (train, test) = split_train_test(&ds, cfg.data.test_fraction);
    let bcfg = BacktestConfig {
        mask,
        completion: cfg.completion.config(),
        seed,
        warm_start: cfg.backtest.warm_start,
        track_factors: true,
    };
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    let mut summary =
        String::from("method,average_rmse,worst_rmse,worst_date,days,elapsed_seconds\n");
    for name in &cfg.backtest.methods {
        let method = match name.as_str() {
            "model" => match &model {
                Some(m) => Method::Model(m),
                None => continue,
            },
            "linear_interpolation" => Method::LinearInterpolation,
            "gaussian_process" => {
                Method::GaussianProcess { extrapolation: Extrapolation::Flat }
            }
            other => {
                return Err(CliError::Config(format!("unknown backtest method {other:?}")))
            }
        };
        let report = run_backtest(&method, &test, Some(&train), &bcfg)?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{}",
            report.method,
            report.average_rmse,
            report.worst_rmse,
            report.worst_date,
            report.days.len(),
            report.elapsed_seconds
        );
        write_atomic(&out.join(format!("backtest_{}.csv", report.method)), &report.days_csv())?;
        if !report.factor_series.is_empty() {
            write_atomic(&out.join("factors.csv"), &report.factors_csv())?;
        }
        // Worst-completion dump with the visible points marked.
        if let Some(m) = match &method {
            Method::Model(m) => Some(*m),
            _ => None,
        } {
            let idx = test
                .observations
                .iter()
                .position(|o| o.date == report.worst_date)
                .unwrap_or(0);
            let obs = &test.observations[idx];
            let (visible, _) = mask_observation(
                obs,
                &bcfg.mask,
                seed.wrapping_add(idx as u64),
                Some(&train),
            )?;
            let c = complete_code(m, &visible, &bcfg.completion, None)?;
            let locs: Vec<_> = obs.points.iter().map(|(l, _)| l.clone()).collect();
            let pred = predict(m, &c.code, &locs)?;
            let flags: Vec<bool> = obs
                .points
                .iter()
                .map(|(l, _)| visible.points.iter().any(|(vl, _)| vl == l))
                .collect();
            write_atomic(&out.join("worst_completion.csv"), &surface_csv(obs, &pred, &flags))?;
        }
        println!(
            "{}: average rmse {:.6}, worst {:.6} on {}",
            report.method, report.average_rmse, report.worst_rmse, report.worst_date
        );
    }
    write_atomic(&out.join("summary.csv"), &summary)?;
    Ok(())
}

pub fn detect(cfg: &RunConfig, seed: u64, model_path: Option<&Path>) -> Result<(), CliError> {
    let threshold = cfg.detect.threshold.ok_or_else(|| {
        CliError::Config("detect needs detect.threshold in the config or --threshold".into())
    })?;
    let model = require_model_file(model_path)?;
    let ds = load_data(cfg)?;
    let ccfg = cfg.completion.config();
    let report = detect_outliers(&model, &ds, threshold, &ccfg)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    let mut csv = String::from("date,rmse,flagged\n");
    for (date, score) in &report.scores {
        let _ = writeln!(csv, "{date},{score},{}", u8::from(*score > threshold));
    }
    write_atomic(&out.join("outlier_scores.csv"), &csv)?;
    for date in &report.flagged {
        let obs = ds
            .observations
            .iter()
            .find(|o| &o.date == date)
            .expect("flagged date comes from the dataset");
        let corrected =
            nowcast_core::pipeline::correct_observation(&model, obs, &ccfg)?;
        let pred = corrected.values();
        let flags = vec![true; obs.len()];
        write_atomic(
            &out.join(format!("corrected_{}.csv", sanitize(date))),
            &surface_csv(obs, &pred, &flags),
        )?;
    }
    println!(
        "scored {} days at threshold {threshold}: {} flagged",
        report.scores.len(),
        report.flagged.len()
    );
    if let Some(corr) = &cfg.detect.corruption {
        let obs = ds.observations.last().ok_or_else(|| {
            CliError::Runtime("dataset has no observations for the corruption check".into())
        })?;
        let check = corruption_check(&model, obs, corr.k, corr.factor, seed, &ccfg)?;
        println!(
            "corruption check (k={}, factor={}): base rmse {:.6}, corrupted rmse {:.6}, detected={}",
            corr.k,
            corr.factor,
            check.base_score,
            check.corrupted_score,
            check.corrupted_score > check.base_score
        );
    }
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let out = &cfg.output.dir;
    if !out.exists() {
        return Err(CliError::Config(format!(
            "output directory does not exist: {}",
            out.display()
        )));
    }
    let model_path = out.join("model.json");
    if model_path.exists() {
        let model = Model::load(&model_path)?;
        let kind = match &model {
            Model::Functional(_) => "functional",
            Model::Autoencoder(_) => "autoencoder",
            Model::Pca(_) => "pca",
        };
        println!("model: {kind}, {} factors", model.factors());
    }
    for name in [
        "history.csv",
        "reconstruction.csv",
        "summary.csv",
        "outlier_scores.csv",
        "completion_summary.csv",
        "factors.csv",
    ] {
        let p = out.join(name);
        if p.exists() {
            let text = std::fs::read_to_string(&p)?;
            let rows = text.lines().count().saturating_sub(1);
            println!("{name}: {rows} rows");
            if name == "summary.csv" {
                for line in text.lines().skip(1) {
                    println!("  {line}");
                }
            }
        }
    }
    Ok(())
}
