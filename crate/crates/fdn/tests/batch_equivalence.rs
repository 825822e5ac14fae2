// predict_batch must equal per-point predict on cloned streams, bitwise
use fdn::adiff::StreamRng;
use fdn::models::{Likelihood, Model, ModelKind, ModelSpec};
use fdn::prob::PriorSpec;

#[test]
fn batch_prediction_matches_per_point_clone_replay() {
    for kind in [
        ModelKind::IcFdn,
        ModelKind::LpFdn,
        ModelKind::Bayes,
        ModelKind::GaussHyper,
        ModelKind::MlpDropout,
        ModelKind::DetHyper,
    ] {
        let mut spec = ModelSpec::for_kind(kind);
        spec.d_hid = spec.d_hid.min(8);
        spec.target_params = None;
        let model = Model::build(
            &spec,
            Likelihood::Homoscedastic,
            PriorSpec::default(),
            &StreamRng::new(5),
        )
        .unwrap();
        let xs = [-3.0, -0.7, 0.0, 1.3, 3.9];
        let base = StreamRng::new(99);
        let batch = model.predict_batch(&xs, 7, &mut base.clone()).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let (mix, kl) = model.predict(x, 7, &mut base.clone()).unwrap();
            assert_eq!(mix.means.len(), batch[i].0.means.len(), "{kind}");
            for (a, b) in mix.means.iter().zip(&batch[i].0.means) {
                assert_eq!(a.to_bits(), b.to_bits(), "{kind} x={x}");
            }
            assert_eq!(kl.to_bits(), batch[i].1.to_bits(), "{kind} x={x}");
        }
    }
}

#[test]
fn batch_prediction_matches_for_heteroscedastic_head() {
    let mut spec = ModelSpec::for_kind(ModelKind::IcFdn);
    spec.d_hid = 6;
    spec.target_params = None;
    let model = Model::build(
        &spec,
        Likelihood::Heteroscedastic,
        PriorSpec::default(),
        &StreamRng::new(6),
    )
    .unwrap();
    let xs = [-1.0, 0.5, 2.5];
    let base = StreamRng::new(42);
    let batch = model.predict_batch(&xs, 4, &mut base.clone()).unwrap();
    for (i, &x) in xs.iter().enumerate() {
        let (mix, _) = model.predict(x, 4, &mut base.clone()).unwrap();
        for (a, b) in mix.variances.iter().zip(&batch[i].0.variances) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
