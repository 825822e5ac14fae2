//! How the variational families differ: input-conditioned posteriors react
//! to x, global posteriors do not, and the KL weight ramps up over training.
//!
//!     cargo run --release --example weight_posteriors

use fdn::adiff::StreamRng;
use fdn::models::{Likelihood, Model, ModelKind, ModelSpec};
use fdn::prob::{BetaSchedule, PriorSpec};

fn main() -> fdn::Result<()> {
    let prior = PriorSpec::default();
    let mut rng = StreamRng::new(9);

    for kind in [ModelKind::IcFdn, ModelKind::LpFdn, ModelKind::Bayes, ModelKind::GaussHyper] {
        let model = Model::build(
            &ModelSpec::for_kind(kind),
            Likelihood::Homoscedastic,
            prior,
            &StreamRng::new(7),
        )?;
        let kl_at = |x: f64, rng: &mut StreamRng| -> fdn::Result<f64> {
            Ok(model.predict(x, 8, rng)?.1)
        };
        let k0 = kl_at(0.0, &mut rng)?;
        let k2 = kl_at(1.9, &mut rng)?;
        println!(
            "{kind:12} KL(q||p) at x=0.0: {k0:9.3}   at x=1.9: {k2:9.3}   input-dependent: {}",
            (k0 - k2).abs() > 1e-9
        );
    }

    let sched = BetaSchedule::default();
    println!("\nKL weight schedule (cosine warm-up over {} updates):", sched.warmup_updates);
    for t in [0, 50, 100, 150, 200, 400] {
        println!("  beta_{t:<4} = {:.5}", sched.beta_at(t));
    }
    Ok(())
}
