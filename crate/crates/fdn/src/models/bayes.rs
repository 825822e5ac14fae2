//! Mean-field variational network: one global diagonal-Gaussian posterior
//! per weight and bias, independent of the input.

use crate::adiff::{Backend, ParamStore, RawExec, StreamRng, Tensor};
use crate::error::Result;
use crate::prob::PriorSpec;

use super::layers::{
    base_layer_dims, draws_from_posteriors, layer_kl, sigma_from_rho, LayerDims, LayerPosterior,
};
use super::{DrawOutputs, Likelihood, ModelSpec, PredictiveMixture};

pub struct BayesModel {
    pub spec: ModelSpec,
    pub likelihood: Likelihood,
    pub prior: PriorSpec,
    pub store: ParamStore,
    dims: [LayerDims; 2],
}

impl BayesModel {
    pub fn shapes(spec: &ModelSpec, likelihood: Likelihood) -> Vec<(String, Vec<usize>)> {
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let mut out = Vec::new();
        for (i, d) in dims.iter().enumerate() {
            let p = format!("l{}", i + 1);
            out.push((format!("{p}.w.mu"), vec![d.fan_out, d.fan_in]));
            out.push((format!("{p}.w.rho"), vec![d.fan_out, d.fan_in]));
            out.push((format!("{p}.b.mu"), vec![d.fan_out]));
            out.push((format!("{p}.b.rho"), vec![d.fan_out]));
        }
        out
    }

    pub fn build(
        spec: &ModelSpec,
        likelihood: Likelihood,
        prior: PriorSpec,
        rng: &mut StreamRng,
    ) -> Result<BayesModel> {
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let mut store = ParamStore::new();
        for (i, d) in dims.iter().enumerate() {
            let p = format!("l{}", i + 1);
            let rho0 = spec.rho_init_for_layer(i, dims.len());
            let sd = (2.0 / (d.fan_in + d.fan_out) as f64).sqrt();
            store.insert(
                &format!("{p}.w.mu"),
                rng.normal_tensor_scaled(&[d.fan_out, d.fan_in], sd),
            )?;
            store.insert(
                &format!("{p}.w.rho"),
                Tensor::full(&[d.fan_out, d.fan_in], rho0),
            )?;
            store.insert(&format!("{p}.b.mu"), Tensor::zeros(&[d.fan_out]))?;
            store.insert(&format!("{p}.b.rho"), Tensor::full(&[d.fan_out], rho0))?;
        }
        Ok(BayesModel {
            spec: spec.clone(),
            likelihood,
            prior,
            store,
            dims,
        })
    }

    fn posteriors<B: Backend>(&self, ctx: &B) -> Vec<LayerPosterior<B::T>> {
        self.dims
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let p = format!("l{}", i + 1);
                LayerPosterior {
                    mu_w: ctx.param(&format!("{p}.w.mu")),
                    sigma_w: sigma_from_rho(ctx, &ctx.param(&format!("{p}.w.rho"))),
                    mu_b: ctx.param(&format!("{p}.b.mu")),
                    sigma_b: sigma_from_rho(ctx, &ctx.param(&format!("{p}.b.rho"))),
                    dims: *d,
                }
            })
            .collect()
    }

    pub fn forward_draws<B: Backend>(
        &self,
        ctx: &B,
        x: f64,
        k: usize,
        rng: &mut StreamRng,
        want_ratios: bool,
    ) -> Result<DrawOutputs<B::T>> {
        let posts = self.posteriors(ctx);
        let mut kl = layer_kl(ctx, &posts[0], self.prior.sigma0);
        for post in &posts[1..] {
            kl = ctx.add(&kl, &layer_kl(ctx, post, self.prior.sigma0));
        }
        let (means, sigmas, ratios) = draws_from_posteriors(
            ctx,
            &posts,
            self.spec.activation,
            self.likelihood,
            x,
            k,
            self.prior.sigma0,
            rng,
            want_ratios,
        )?;
        Ok(DrawOutputs {
            means,
            sigmas,
            kl: Some(kl),
            log_ratios: ratios,
        })
    }

    /// Batch prediction: the posterior is global, so weights are sampled
    /// once per draw and reused for every point.
    pub fn predict_batch(
        &self,
        xs: &[f64],
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<(PredictiveMixture, f64)>> {
        let ctx = RawExec::new(&self.store);
        let posts = self.posteriors(&ctx);
        super::layers::predict_batch_global(
            &ctx,
            &posts,
            &self.dims,
            self.spec.activation,
            self.likelihood,
            self.prior.sigma0,
            xs,
            k,
            rng,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiff::RawExec;
    use crate::models::ModelKind;

    fn small_model() -> BayesModel {
        let spec = ModelSpec {
            d_hid: 8,
            target_params: None,
            ..ModelSpec::for_kind(ModelKind::Bayes)
        };
        BayesModel::build(
            &spec,
            Likelihood::Homoscedastic,
            PriorSpec::default(),
            &mut StreamRng::new(3),
        )
        .unwrap()
    }

    #[test]
    fn kl_is_input_independent() {
        let model = small_model();
        let ctx = RawExec::new(&model.store);
        let a = model
            .forward_draws(&ctx, -1.3, 2, &mut StreamRng::new(1), false)
            .unwrap();
        let b = model
            .forward_draws(&ctx, 2.7, 2, &mut StreamRng::new(2), false)
            .unwrap();
        assert_eq!(
            a.kl.unwrap().item().to_bits(),
            b.kl.unwrap().item().to_bits()
        );
    }

    #[test]
    fn floor_sigma_makes_predictions_nearly_deterministic() {
        let mut model = small_model();
        for (i, _) in [0, 1].iter().enumerate() {
            let name = format!("l{}.w.rho", i + 1);
            let t = model.store.get_mut(&name).unwrap();
            for v in t.data_mut() {
                *v = -30.0;
            }
            let name = format!("l{}.b.rho", i + 1);
            let t = model.store.get_mut(&name).unwrap();
            for v in t.data_mut() {
                *v = -30.0;
            }
        }
        let ctx = RawExec::new(&model.store);
        let draws = model
            .forward_draws(&ctx, 0.5, 16, &mut StreamRng::new(4), false)
            .unwrap();
        let vals: Vec<f64> = draws.means.iter().map(|m| m.item()).collect();
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max)
            - vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.05, "spread {spread}");
    }

    #[test]
    fn grid_width_reaches_table_count() {
        let spec = ModelSpec::for_kind(ModelKind::Bayes);
        let shapes = BayesModel::shapes(&spec, Likelihood::Homoscedastic);
        let count: usize = shapes.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        assert_eq!(count, 998);
    }
}
