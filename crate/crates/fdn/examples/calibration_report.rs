//! Risk-coverage curves and the MSE-variance scatter from stored runs:
//! trains two contrasting models briefly, then renders the report figures.
//!
//!     cargo run --release --example calibration_report

use std::path::Path;

use fdn::harness::{report, run_suite, ExperimentConfig, SuiteConfig};
use fdn::models::{ModelKind, ModelSpec};
use fdn::tasks::{TaskKind, TaskSpec};

fn main() -> fdn::Result<()> {
    let suite = SuiteConfig {
        base: ExperimentConfig {
            epochs: 120,
            ..ExperimentConfig::default()
        },
        models: vec![
            ModelSpec::for_kind(ModelKind::IcFdn),
            ModelSpec::for_kind(ModelKind::Bayes),
        ],
        tasks: vec![TaskSpec::new(TaskKind::Quadratic)],
        seeds: vec![7],
    };
    let out = Path::new("out_calibration");
    run_suite(&suite, out, 1)?;
    report(out)?;

    let report_dir = out.join("report");
    println!("wrote:");
    for entry in std::fs::read_dir(&report_dir)? {
        println!("  {}", entry?.path().display());
    }
    let table = std::fs::read_to_string(report_dir.join("quadratic.csv"))?;
    println!("\nquadratic.csv:\n{table}");
    Ok(())
}
