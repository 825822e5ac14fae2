//! Predictive mixtures from weight draws: a freshly initialized
//! input-conditioned model, its variance decomposition, and CRPS scoring.
//!
//!     cargo run --release --example predictive_uncertainty

use fdn::adiff::StreamRng;
use fdn::metrics::{crps_gaussian, crps_mixture};
use fdn::models::{predictive_moments, Likelihood, Model, ModelKind, ModelSpec};
use fdn::prob::PriorSpec;

fn main() -> fdn::Result<()> {
    let spec = ModelSpec::for_kind(ModelKind::IcFdn);
    let model = Model::build(
        &spec,
        Likelihood::Homoscedastic,
        PriorSpec::default(),
        &StreamRng::new(7),
    )?;

    println!("x      mean    epistemic  total   kl       crps@y=0");
    let mut rng = StreamRng::new(42);
    for x in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let (mix, kl) = model.predict(x, 100, &mut rng)?;
        let (mean, epistemic, total) = predictive_moments(&mix);
        let crps = crps_mixture(&mix, 0.0);
        println!("{x:5.2} {mean:8.3} {epistemic:9.3} {total:7.3} {kl:8.2} {crps:9.3}");
    }

    // Mixture CRPS degenerates to the single-Gaussian closed form.
    let single = fdn::models::PredictiveMixture::new(vec![0.5], vec![1.0])?;
    let a = crps_mixture(&single, 0.2);
    let b = crps_gaussian(0.5, 1.0, 0.2)?;
    println!("single-component mixture: crps {a:.9} vs gaussian {b:.9}");
    Ok(())
}
