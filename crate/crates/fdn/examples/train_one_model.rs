//! One end-to-end training run: input-conditioned model on the quadratic
//! task, minimum-validation checkpointing, and the unified metrics report.
//!
//!     cargo run --release --example train_one_model

use fdn::harness::{train, ExperimentConfig};

fn main() -> fdn::Result<()> {
    // Defaults mirror the benchmark settings (400 epochs, batch 64, Adam at
    // 1e-3, K_train 1, K_val/K_test 100, cosine KL warm-up to 0.01).
    let config = ExperimentConfig::default();
    println!(
        "training {} on {} (seed 7, {} epochs)...",
        config.model.kind, config.task.kind, config.epochs
    );
    let run = train(&config, 7)?;

    let m = &run.record.metrics;
    println!("updates          : {}", run.record.updates);
    println!("best val MSE     : {:.6}", run.record.best_val_mse);
    println!("ID   mse/var/crps: {:.4} / {:.4} / {:.4}", m.id.mse, m.id.var, m.id.crps);
    println!("OOD  mse/var/crps: {:.4} / {:.4} / {:.4}", m.ood.mse, m.ood.var, m.ood.crps);
    println!(
        "pooled rho {} | fit b {} a {} | aurc {:.4}",
        m.rho.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
        m.b.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
        m.a.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
        m.aurc
    );
    println!(
        "deltas (OOD - ID): dVar {:.4}, dMSE {:.4}, dCRPS {:.4}",
        m.d_var, m.d_mse, m.d_crps
    );
    Ok(())
}
