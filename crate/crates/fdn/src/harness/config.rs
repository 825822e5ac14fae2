//! Experiment configuration with embedded defaults, canonical hashing, and
//! suite (grid) expansion. An empty JSON object deserializes to the full
//! default configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::models::{Likelihood, ModelKind, ModelSpec};
use crate::prob::BetaSchedule;
use crate::tasks::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    BetaElbo,
    Iwae,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub model: ModelSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub k_train: usize,
    pub k_val: usize,
    pub k_test: usize,
    pub beta: BetaSchedule,
    pub objective: Objective,
    pub likelihood: Likelihood,
    pub sigma0: f64,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskSpec::new(TaskKind::Quadratic),
            model: ModelSpec::for_kind(ModelKind::IcFdn),
            epochs: 400,
            batch_size: 64,
            lr: 1e-3,
            k_train: 1,
            k_val: 100,
            k_test: 100,
            beta: BetaSchedule::default(),
            objective: Objective::BetaElbo,
            likelihood: Likelihood::Homoscedastic,
            sigma0: 1.0,
            seeds: vec![7, 8, 9],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Per-member epoch budget: ensembles split the epoch budget so the
    /// total number of parameter updates matches single-model runs.
    pub fn member_epochs(&self) -> usize {
        if self.model.kind == ModelKind::DeepEnsemble {
            (self.epochs / self.model.members.max(1)).max(1)
        } else {
            self.epochs
        }
    }
}

/// Canonical JSON: serde_json maps are sorted by key, so serializing a
/// `Value` is field-order independent.
fn canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable config");
    v.to_string()
}

/// Stable hex hash of (config, seed); names the run directory.
pub fn run_hash(config: &ExperimentConfig, seed: u64) -> String {
    let payload = canonical_json(&serde_json::json!({
        "config": config,
        "seed": seed,
    }));
    let digest = Sha256::digest(payload.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Benchmark grid: models x tasks x seeds around a shared base config.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SuiteConfig {
    pub base: ExperimentConfig,
    pub models: Vec<ModelSpec>,
    pub tasks: Vec<TaskSpec>,
    pub seeds: Vec<u64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            base: ExperimentConfig::default(),
            models: ModelKind::BENCHMARK
                .iter()
                .map(|&k| ModelSpec::for_kind(k))
                .collect(),
            tasks: TaskKind::ALL.iter().map(|&k| TaskSpec::new(k)).collect(),
            seeds: vec![7, 8, 9],
        }
    }
}

impl SuiteConfig {
    pub fn from_file(path: &Path) -> Result<SuiteConfig> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// All (config, seed) runs of the grid, in deterministic order.
    pub fn expand(&self) -> Vec<(ExperimentConfig, u64)> {
        let mut runs = Vec::new();
        for task in &self.tasks {
            for model in &self.models {
                for &seed in &self.seeds {
                    let config = ExperimentConfig {
                        task: *task,
                        model: model.clone(),
                        seeds: vec![seed],
                        ..self.base.clone()
                    };
                    runs.push((config, seed));
                }
            }
        }
        runs
    }
}
