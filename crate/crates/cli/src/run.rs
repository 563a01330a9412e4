//! `delight run`: dispatch to a testbed runner and write its outputs.
//!
//! Layout: `<outdir>/<testbed>/<label>/config.echo` for the invocation, and one
//! cell directory per arm (per arm x S x baseline for classify) holding
//! `trace.csv`, `summary.jsonl` and the cell's own `config.echo`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use delight::data::{load_idx, Dataset};
use delight::multictx::{run_multictx_descent, MultiCtxConfig};
use delight::neural::{run_classification_experiment, Arm, ClassifyConfig};
use delight::rng::hash2;
use delight::tabular::{run_symmetric_bandit, BanditRunConfig};
use delight::{GateParams, Result as LibResult};

use crate::config::{DatasetSource, ExperimentConfig, Testbed};
use crate::CliError;

/// Stable label derived from the config text.
pub fn config_label(cfg: &ExperimentConfig) -> String {
    let h = cfg
        .echo()
        .bytes()
        .fold(0x243F_6A88_85A3_08D3u64, |acc, b| hash2(acc, b as u64));
    format!("cfg-{h:016x}")
}

/// A single trainable unit: one arm with fixed scalar settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub config: ExperimentConfig,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Splits an invocation into cells. Label-free classify arms (`ce`,
/// `pg-oracle`) ignore S and the baseline, so they produce one cell.
pub fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>, CliError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for est in &cfg.estimators {
        let single = |c: &mut ExperimentConfig| c.estimators = vec![est.clone()];
        match cfg.testbed {
            Testbed::Bandit | Testbed::Multictx => {
                let mut c = cfg.clone();
                single(&mut c);
                out.push(Cell {
                    name: sanitize(est),
                    config: c,
                });
            }
            Testbed::Classify => {
                let arm: Arm = est.parse()?;
                if matches!(arm, Arm::Estimator(_)) {
                    for &s in &cfg.samples_per_input {
                        for &b in &cfg.baselines {
                            let mut c = cfg.clone();
                            single(&mut c);
                            c.samples_per_input = vec![s];
                            c.baselines = vec![b];
                            out.push(Cell {
                                name: format!("{}-s{s}-{b}", sanitize(est)),
                                config: c,
                            });
                        }
                    }
                } else {
                    let mut c = cfg.clone();
                    single(&mut c);
                    c.samples_per_input.truncate(1);
                    c.baselines.truncate(1);
                    out.push(Cell {
                        name: sanitize(est),
                        config: c,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Per-seed final errors of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub name: String,
    pub final_errors: Vec<f64>,
}

#[derive(Serialize)]
struct BanditRow {
    seed: u64,
    step: u64,
    error: f64,
    misalignment: f64,
}

#[derive(Serialize)]
struct MultiCtxRow {
    seed: u64,
    step: u64,
    mean_error: f64,
    misalignment_ce: f64,
}

#[derive(Serialize)]
struct ClassifyRow {
    seed: u64,
    step: u64,
    train_error: f64,
    val_error: Option<f64>,
    miss_pg_oracle: f64,
    miss_ce_oracle: f64,
}

fn gate_params(cfg: &ExperimentConfig) -> LibResult<GateParams> {
    GateParams::new(cfg.eta)
}

pub fn bandit_config(cfg: &ExperimentConfig) -> LibResult<BanditRunConfig> {
    Ok(BanditRunConfig {
        num_actions: cfg.k,
        correct_action: 0,
        baseline: cfg.bandit_baseline,
        gate: gate_params(cfg)?,
        batch: cfg.batch,
        step_size: cfg.alpha,
        steps: cfg.steps,
        seeds: cfg.seeds,
        base_seed: cfg.base_seed,
        init_error: cfg.init_error,
    })
}

pub fn multictx_config(cfg: &ExperimentConfig) -> MultiCtxConfig {
    MultiCtxConfig {
        contexts: cfg.contexts,
        actions: cfg.actions,
        eta: cfg.eta,
        step_size: cfg.alpha,
        steps: cfg.steps,
        seeds: cfg.seeds,
        base_seed: cfg.base_seed,
    }
}

/// Classify settings for a cell (first S and baseline).
pub fn classify_config(cfg: &ExperimentConfig) -> LibResult<ClassifyConfig> {
    Ok(ClassifyConfig {
        hidden: cfg.width,
        batch: cfg.batch,
        samples_per_input: cfg.samples_per_input[0],
        lr: cfg.lr,
        steps: cfg.steps,
        seeds: cfg.seeds,
        base_seed: cfg.base_seed,
        gate: gate_params(cfg)?,
        baseline: cfg.baselines[0],
        eval_every: cfg.eval_every,
    })
}

pub fn load_dataset(source: &DatasetSource) -> Result<Dataset, CliError> {
    Ok(match source {
        DatasetSource::Synthetic(spec) => spec.generate()?,
        DatasetSource::Idx { images, labels } => load_idx(images, labels)?.with_default_validation()?,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::field("outdir", format!("{other:?}")),
    })
}

fn write_jsonl(path: &Path, lines: &[serde_json::Value]) -> Result<(), CliError> {
    let mut s = String::new();
    for l in lines {
        s.push_str(&serde_json::to_string(l)?);
        s.push('\n');
    }
    write_file(path, &s)
}

fn config_json(cfg: &ExperimentConfig) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = cfg
        .echo()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
        .collect();
    serde_json::Value::Object(map)
}

/// Trains one cell. When `dir` is given, writes its trace, summary and echo there.
pub fn run_cell(cell: &Cell, dataset: Option<&Dataset>, dir: Option<&Path>) -> Result<CellOutcome, CliError> {
    let cfg = &cell.config;
    let echo = config_json(cfg);
    if let Some(d) = dir {
        create_dir(d)?;
        write_file(&d.join("config.echo"), &cfg.echo())?;
    }
    let arm_name = &cfg.estimators[0];
    let mut summary = Vec::new();
    let final_errors = match cfg.testbed {
        Testbed::Bandit => {
            let kind = cfg.bandit_arms()?[0];
            let traces = run_symmetric_bandit(&bandit_config(cfg)?, kind)?;
            if let Some(d) = dir {
                let mut w = csv_writer(&d.join("trace.csv"))?;
                for p in traces.iter().flatten() {
                    w.serialize(BanditRow {
                        seed: p.seed,
                        step: p.step,
                        error: p.error,
                        misalignment: p.misalignment,
                    })?;
                }
                w.flush().map_err(|e| CliError::io(d.join("trace.csv"), e))?;
            }
            traces
                .iter()
                .map(|t| {
                    let last = t.last().expect("steps >= 1");
                    summary.push(json!({
                        "testbed": "bandit", "arm": arm_name, "seed": last.seed,
                        "final_error": last.error, "final_misalignment": last.misalignment,
                        "config": echo,
                    }));
                    last.error
                })
                .collect()
        }
        Testbed::Multictx => {
            let arm = cfg.multictx_arms()?[0];
            let traces = run_multictx_descent(&multictx_config(cfg), arm)?;
            if let Some(d) = dir {
                let mut w = csv_writer(&d.join("trace.csv"))?;
                for p in traces.iter().flatten() {
                    w.serialize(MultiCtxRow {
                        seed: p.seed,
                        step: p.step,
                        mean_error: p.mean_error,
                        misalignment_ce: p.misalignment_ce,
                    })?;
                }
                w.flush().map_err(|e| CliError::io(d.join("trace.csv"), e))?;
            }
            traces
                .iter()
                .map(|t| {
                    let last = t.last().expect("steps >= 1");
                    summary.push(json!({
                        "testbed": "multictx", "arm": arm_name, "seed": last.seed,
                        "final_error": last.mean_error, "final_misalignment_ce": last.misalignment_ce,
                        "config": echo,
                    }));
                    last.mean_error
                })
                .collect()
        }
        Testbed::Classify => {
            let arm = cfg.classify_arms()?[0];
            let ds = dataset.ok_or_else(|| CliError::field("dataset", "classify needs a dataset"))?;
            let ccfg = classify_config(cfg)?;
            let traces = run_classification_experiment(&ccfg, arm, ds)?;
            if let Some(d) = dir {
                let mut w = csv_writer(&d.join("trace.csv"))?;
                for t in &traces {
                    for r in &t.records {
                        w.serialize(ClassifyRow {
                            seed: t.seed,
                            step: r.step,
                            train_error: r.train_error,
                            val_error: r.val_error,
                            miss_pg_oracle: r.miss_pg_oracle,
                            miss_ce_oracle: r.miss_ce_oracle,
                        })?;
                    }
                }
                w.flush().map_err(|e| CliError::io(d.join("trace.csv"), e))?;
            }
            let label_dependent = matches!(arm, Arm::Estimator(_)) && ccfg.baseline.uses_label();
            traces
                .iter()
                .map(|t| {
                    summary.push(json!({
                        "testbed": "classify", "arm": arm_name, "seed": t.seed,
                        "samples_per_input": ccfg.samples_per_input, "baseline": ccfg.baseline.to_string(),
                        "label_dependent_baseline": label_dependent,
                        "final_train_error": t.final_train_error, "final_val_error": t.final_val_error,
                        "config": echo,
                    }));
                    t.final_train_error
                })
                .collect()
        }
    };
    if let Some(d) = dir {
        write_jsonl(&d.join("summary.jsonl"), &summary)?;
    }
    Ok(CellOutcome {
        name: cell.name.clone(),
        final_errors,
    })
}

/// Loads the dataset once for classify invocations.
pub fn dataset_for(cfg: &ExperimentConfig) -> Result<Option<Dataset>, CliError> {
    match cfg.testbed {
        Testbed::Classify => load_dataset(&cfg.dataset).map(Some),
        _ => Ok(None),
    }
}

/// Runs every cell and writes outputs; returns the run directory.
pub fn cmd_run(cfg: &ExperimentConfig, outdir: &Path, label: Option<&str>) -> Result<PathBuf, CliError> {
    let cells = cells(cfg)?;
    let label = label.map_or_else(|| config_label(cfg), sanitize);
    let root = outdir.join(cfg.testbed.to_string()).join(label);
    create_dir(&root)?;
    write_file(&root.join("config.echo"), &cfg.echo())?;
    let ds = dataset_for(cfg)?;
    for cell in &cells {
        run_cell(cell, ds.as_ref(), Some(&root.join(&cell.name)))?;
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_cells_cover_the_grid() {
        let mut c = ExperimentConfig::defaults(Testbed::Classify);
        c.apply_text("estimators=ce,pg,dg\nsamples-per-input=1,10\nbaselines=zero,oracle")
            .unwrap();
        let names: Vec<String> = cells(&c).unwrap().into_iter().map(|c| c.name).collect();
        assert_eq!(
            names,
            [
                "ce",
                "pg-s1-zero",
                "pg-s1-oracle",
                "pg-s10-zero",
                "pg-s10-oracle",
                "dg-s1-zero",
                "dg-s1-oracle",
                "dg-s10-zero",
                "dg-s10-oracle"
            ]
        );
    }

    #[test]
    fn label_is_stable_and_config_sensitive() {
        let a = ExperimentConfig::defaults(Testbed::Bandit);
        let mut b = a.clone();
        assert_eq!(config_label(&a), config_label(&b));
        b.k = 10;
        assert_ne!(config_label(&a), config_label(&b));
        assert_eq!(sanitize("entropy:0.1"), "entropy_0.1");
    }
}
