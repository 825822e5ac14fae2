//! A scaled-down pass over the benchmark grid: every model on every task at
//! one seed with a shortened epoch budget, cached to `out_example/`. For the
//! full matched-budget benchmark (3 seeds, 400 epochs) use the CLI:
//!
//!     cargo run --release -- suite --out out --jobs 4
//!
//! Run this example with:
//!
//!     cargo run --release --example benchmark_suite

use std::path::Path;

use fdn::harness::{run_suite, ExperimentConfig, SuiteConfig};

fn main() -> fdn::Result<()> {
    let suite = SuiteConfig {
        base: ExperimentConfig {
            epochs: 60,
            ..ExperimentConfig::default()
        },
        seeds: vec![7],
        ..SuiteConfig::default()
    };
    let out = Path::new("out_example");
    let manifest = run_suite(&suite, out, 1)?;
    for run in &manifest.runs {
        println!(
            "{:14} {:10} seed {}: {}",
            run.model, run.task, run.seed, run.status
        );
    }
    fdn::harness::report(out)?;
    println!("tables and figures in {}", out.join("report").display());
    Ok(())
}
