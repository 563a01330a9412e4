//! `delight sweep`: one summary row per (axis value, cell).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use delight::stats::{mean, std_error};

use crate::config::{ExperimentConfig, NUMERIC_KEYS};
use crate::run::{cells, config_label, dataset_for, run_cell};
use crate::CliError;

/// Axes that replace the estimator list with a parameterized variant.
pub const ESTIMATOR_AXES: &[&str] = &["beta", "ucb", "entropy"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub arm: String,
    pub mean_final_error: f64,
    pub stderr: f64,
    pub seeds: usize,
}

fn check_axis(axis: &str, values: &[String]) -> Result<(), CliError> {
    if !NUMERIC_KEYS.contains(&axis) && !ESTIMATOR_AXES.contains(&axis) {
        return Err(CliError::field(
            "axis",
            format!(
                "`{axis}` is not sweepable; choose one of {} or {}",
                NUMERIC_KEYS.join(", "),
                ESTIMATOR_AXES.join(", ")
            ),
        ));
    }
    if values.is_empty() {
        return Err(CliError::field("values", "need at least one value"));
    }
    for v in values {
        v.parse::<f64>()
            .map_err(|e| CliError::field("values", format!("`{v}`: {e}")))?;
    }
    Ok(())
}

/// Config for one axis value.
pub fn at_value(base: &ExperimentConfig, axis: &str, value: &str) -> Result<ExperimentConfig, CliError> {
    let mut c = base.clone();
    if ESTIMATOR_AXES.contains(&axis) {
        c.estimators = vec![format!("{axis}:{value}")];
    } else {
        c.set(axis, value)?;
    }
    c.validate()?;
    Ok(c)
}

/// Computes every row without touching the filesystem.
pub fn sweep_rows(base: &ExperimentConfig, axis: &str, values: &[String]) -> Result<Vec<SweepRow>, CliError> {
    check_axis(axis, values)?;
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|v| at_value(base, axis, v))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (v, cfg) in values.iter().zip(&configs) {
        let ds = dataset_for(cfg)?;
        for cell in cells(cfg)? {
            let out = run_cell(&cell, ds.as_ref(), None)?;
            rows.push(SweepRow {
                axis: axis.to_string(),
                value: v.trim().to_string(),
                arm: out.name,
                mean_final_error: mean(&out.final_errors),
                stderr: std_error(&out.final_errors),
                seeds: out.final_errors.len(),
            });
        }
    }
    Ok(rows)
}

/// Writes `<outdir>/sweep/<label>/{sweep.csv, config.echo}` and returns the
/// directory.
pub fn cmd_sweep(
    base: &ExperimentConfig,
    axis: &str,
    values: &[String],
    outdir: &Path,
    label: Option<&str>,
) -> Result<(PathBuf, Vec<SweepRow>), CliError> {
    let rows = sweep_rows(base, axis, values)?;
    let label = label.map_or_else(
        || format!("{}-{axis}-{}", base.testbed, config_label(base)),
        str::to_string,
    );
    let dir = outdir.join("sweep").join(label);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let echo = format!("{}# sweep axis={axis} values={}\n", base.echo(), values.join(","));
    fs::write(dir.join("config.echo"), echo).map_err(|e| CliError::io(dir.join("config.echo"), e))?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok((dir, rows))
}
