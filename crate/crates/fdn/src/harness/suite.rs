//! Benchmark execution: one directory per (config, seed) run, an idempotent
//! cache keyed by config hash, and a suite manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::points_to_csv;
use crate::models::checkpoint;

use super::config::{run_hash, ExperimentConfig, SuiteConfig};
use super::train::{train, RunRecord};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunStatus {
    pub hash: String,
    pub model: String,
    pub task: String,
    pub seed: u64,
    pub status: String,
    pub dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub runs: Vec<RunStatus>,
}

impl Manifest {
    pub fn load(out_dir: &Path) -> Result<Manifest> {
        let path = out_dir.join("manifest.json");
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(
            out_dir.join("manifest.json"),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }
}

pub fn run_dir(out_dir: &Path, config: &ExperimentConfig, seed: u64) -> PathBuf {
    out_dir.join(run_hash(config, seed))
}

/// Train one run and persist its artifacts
/// (`config.json`, `ckpt.bin`, `points.csv`, `metrics.json`, `run.json`).
pub fn execute_run(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunRecord> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "config": config,
            "seed": seed,
        }))?,
    )?;
    let run = train(config, seed)?;
    checkpoint::save(&dir.join("ckpt.bin"), &run.model)?;
    std::fs::write(dir.join("points.csv"), points_to_csv(&run.points))?;
    std::fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(&run.record.metrics)?,
    )?;
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run.record)?)?;
    Ok(run.record)
}

/// Execute the whole grid on a worker pool. Completed runs (present
/// `metrics.json`) are skipped; failures are recorded and the suite
/// continues.
pub fn run_suite(suite: &SuiteConfig, out_dir: &Path, jobs: usize) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir)?;
    let runs = suite.expand();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let statuses: Vec<RunStatus> = pool.install(|| {
        runs.par_iter()
            .map(|(config, seed)| {
                let hash = run_hash(config, *seed);
                let dir = out_dir.join(&hash);
                let mut status = RunStatus {
                    hash,
                    model: config.model.kind.to_string(),
                    task: config.task.kind.to_string(),
                    seed: *seed,
                    status: "ok".into(),
                    dir: dir.clone(),
                    error: None,
                };
                if dir.join("metrics.json").exists() {
                    status.status = "cached".into();
                    return status;
                }
                if let Err(e) = execute_run(config, *seed, &dir) {
                    status.status = "failed".into();
                    status.error = Some(e.to_string());
                }
                status
            })
            .collect()
    });

    let manifest = Manifest { runs: statuses };
    manifest.save(out_dir)?;
    Ok(manifest)
}
