//! Command-line entry points: `run`, `suite`, `eval`, `report`, `gradcheck`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::models::checkpoint;
use crate::tasks::{make_dataset, TaskKind, TaskSpec};

use super::battery::gradient_battery;
use super::config::{ExperimentConfig, SuiteConfig};
use super::report::report;
use super::suite::{execute_run, run_dir, run_suite, Manifest, RunStatus};

#[derive(Parser)]
#[command(
    name = "fdn",
    version,
    about = "Functional distribution networks and matched-budget baselines on 1D shift benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the runs of one experiment config (all its seeds).
    Run {
        /// JSON experiment config; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the benchmark grid (models x tasks x seeds) and emit the report.
    Suite {
        /// JSON suite config; defaults to the full benchmark grid.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Parallel training runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-score a stored checkpoint on a task; prints the metrics JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task name: step | sine | quadratic.
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Monte Carlo draws per test point.
        #[arg(long, default_value_t = 100)]
        k: usize,
    },
    /// Rebuild tables and figures from stored runs.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        rtol: f64,
        /// Randomized instances per operation.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load_experiment(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn cmd_run(config: &Option<PathBuf>, seed: Option<u64>, out: &PathBuf) -> Result<()> {
    let config = load_experiment(config)?;
    let seeds = match seed {
        Some(s) => vec![s],
        None => config.seeds.clone(),
    };
    let mut statuses = Vec::new();
    for &seed in &seeds {
        let dir = run_dir(out, &config, seed);
        let record = execute_run(&config, seed, &dir)?;
        println!(
            "run {} (model {}, task {}, seed {seed}): best val MSE {:.6}, aurc {:.6} -> {}",
            record.config_hash,
            config.model.kind,
            config.task.kind,
            record.best_val_mse,
            record.metrics.aurc,
            dir.display()
        );
        statuses.push(RunStatus {
            hash: record.config_hash.clone(),
            model: config.model.kind.to_string(),
            task: config.task.kind.to_string(),
            seed,
            status: "ok".into(),
            dir,
            error: None,
        });
    }
    // Merge into the manifest so `report` can see standalone runs.
    let mut manifest = Manifest::load(out).unwrap_or_default();
    for status in statuses {
        manifest.runs.retain(|r| r.hash != status.hash);
        manifest.runs.push(status);
    }
    manifest.save(out)?;
    Ok(())
}

fn cmd_suite(config: &Option<PathBuf>, out: &PathBuf, jobs: usize) -> Result<()> {
    let suite = match config {
        Some(p) => SuiteConfig::from_file(p)?,
        None => SuiteConfig::default(),
    };
    let manifest = run_suite(&suite, out, jobs)?;
    let ok = manifest.runs.iter().filter(|r| r.status != "failed").count();
    println!("suite: {}/{} runs completed", ok, manifest.runs.len());
    for run in manifest.runs.iter().filter(|r| r.status == "failed") {
        eprintln!(
            "failed: {} {} seed {}: {}",
            run.model,
            run.task,
            run.seed,
            run.error.as_deref().unwrap_or("unknown")
        );
    }
    report(out)?;
    println!("report written to {}", out.join("report").display());
    if ok < manifest.runs.len() {
        return Err(Error::Config("some runs failed; see manifest".into()));
    }
    Ok(())
}

fn cmd_eval(checkpoint_path: &PathBuf, task: &str, seed: u64, k: usize) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?;
    let kind = TaskKind::parse(task)?;
    let task = TaskSpec::new(kind);
    let mut data_rng = crate::adiff::StreamRng::new(seed).derive(&format!("data/{kind}"));
    let dataset = make_dataset(&task, &mut data_rng)?;
    let mut eval_rng = crate::adiff::StreamRng::new(seed).derive("standalone-eval");
    let (metrics, _) = crate::metrics::evaluate_model(&model, &dataset, k, &mut eval_rng)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn cmd_gradcheck(eps: f64, rtol: f64, instances: usize, seed: u64) -> Result<()> {
    let results = gradient_battery(seed, eps, rtol, instances)?;
    let mut failed = 0;
    for r in &results {
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] {:<24} instances {:<3} max rel dev {:.3e}",
            r.name, r.instances, r.max_rel_dev
        );
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::InvalidArg(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

/// Parse argv and dispatch. Returns the process exit code: 0 on success,
/// 1 on runtime failure, 2 on usage errors (via clap).
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version, 2 for usage errors.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.cmd {
        Cmd::Run { config, seed, out } => cmd_run(config, *seed, out),
        Cmd::Suite { config, out, jobs } => cmd_suite(config, out, *jobs),
        Cmd::Eval {
            checkpoint,
            task,
            seed,
            k,
        } => cmd_eval(checkpoint, task, *seed, *k),
        Cmd::Report { out } => report(out),
        Cmd::Gradcheck {
            eps,
            rtol,
            instances,
            seed,
        } => cmd_gradcheck(*eps, *rtol, *instances, *seed),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
