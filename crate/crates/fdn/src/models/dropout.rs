//! MLP with Monte Carlo dropout: masks are resampled per draw at both train
//! and test time, with inverted-dropout scaling.

use crate::adiff::{Backend, ParamStore, StreamRng, Tensor};
use crate::error::Result;

use super::layers::{
    affine, base_layer_dims, check_finite, init_plain_layer, split_head, LayerDims,
};
use super::{mixture_from, DrawOutputs, Likelihood, ModelSpec, PredictiveMixture};

pub struct DropoutModel {
    pub spec: ModelSpec,
    pub likelihood: Likelihood,
    pub store: ParamStore,
    dims: [LayerDims; 2],
}

impl DropoutModel {
    pub fn shapes(spec: &ModelSpec, likelihood: Likelihood) -> Vec<(String, Vec<usize>)> {
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let mut out = Vec::new();
        for (i, d) in dims.iter().enumerate() {
            out.push((format!("l{}.w", i + 1), vec![d.fan_out, d.fan_in]));
            out.push((format!("l{}.b", i + 1), vec![d.fan_out]));
        }
        out
    }

    pub fn build(
        spec: &ModelSpec,
        likelihood: Likelihood,
        rng: &mut StreamRng,
    ) -> Result<DropoutModel> {
        assert!(
            (0.0..1.0).contains(&spec.dropout_p),
            "dropout_p must be in [0,1)"
        );
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let mut store = ParamStore::new();
        for (i, d) in dims.iter().enumerate() {
            init_plain_layer(&mut store, &format!("l{}", i + 1), *d, rng)?;
        }
        Ok(DropoutModel {
            spec: spec.clone(),
            likelihood,
            store,
            dims,
        })
    }

    pub fn forward_draws<B: Backend>(
        &self,
        ctx: &B,
        x: f64,
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<DrawOutputs<B::T>> {
        let w1 = ctx.param("l1.w");
        let b1 = ctx.param("l1.b");
        let w2 = ctx.param("l2.w");
        let b2 = ctx.param("l2.b");
        let x_vec = ctx.constant(Tensor::vector(vec![x]));

        let mut means = Vec::with_capacity(k);
        let mut sigmas = Vec::with_capacity(k);
        for _ in 0..k {
            let hidden = self
                .spec
                .activation
                .apply(ctx, &affine(ctx, &w1, &b1, &x_vec));
            let mask = ctx.constant(rng.dropout_mask(self.dims[0].fan_out, self.spec.dropout_p));
            let masked = ctx.mul(&hidden, &mask);
            let out = affine(ctx, &w2, &b2, &masked);
            check_finite(ctx, &out, "layer 2")?;
            let (mean, sigma) = split_head(ctx, &out, self.likelihood);
            means.push(mean);
            if let Some(s) = sigma {
                sigmas.push(s);
            }
        }
        Ok(DrawOutputs {
            means,
            sigmas: match self.likelihood {
                Likelihood::Homoscedastic => None,
                Likelihood::Heteroscedastic => Some(sigmas),
            },
            kl: None,
            log_ratios: None,
        })
    }

    /// Batch prediction: one mask bank shared across points.
    pub fn predict_batch(
        &self,
        xs: &[f64],
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<(PredictiveMixture, f64)>> {
        let ctx = crate::adiff::RawExec::new(&self.store);
        let w1 = ctx.param("l1.w");
        let b1 = ctx.param("l1.b");
        let w2 = ctx.param("l2.w");
        let b2 = ctx.param("l2.b");
        let masks: Vec<Tensor> = (0..k)
            .map(|_| rng.dropout_mask(self.dims[0].fan_out, self.spec.dropout_p))
            .collect();
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            let x_vec = ctx.constant(Tensor::vector(vec![x]));
            let hidden = self
                .spec
                .activation
                .apply(&ctx, &affine(&ctx, &w1, &b1, &x_vec));
            let mut means = Vec::with_capacity(k);
            let mut sigmas = Vec::with_capacity(k);
            for mask in &masks {
                let masked = ctx.mul(&hidden, mask);
                let head = affine(&ctx, &w2, &b2, &masked);
                check_finite(&ctx, &head, "layer 2")?;
                let (mean, sigma) = split_head(&ctx, &head, self.likelihood);
                means.push(mean.item());
                if let Some(s) = sigma {
                    sigmas.push(s.item());
                }
            }
            let sigmas = (!sigmas.is_empty()).then_some(sigmas);
            out.push((mixture_from(means, sigmas)?, 0.0));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adiff::RawExec;
    use crate::models::ModelKind;

    fn small_spec(p: f64) -> ModelSpec {
        ModelSpec {
            d_hid: 16,
            dropout_p: p,
            target_params: None,
            ..ModelSpec::for_kind(ModelKind::MlpDropout)
        }
    }

    #[test]
    fn zero_rate_makes_all_draws_identical() {
        let mut rng = StreamRng::new(7);
        let model = DropoutModel::build(&small_spec(0.0), Likelihood::Homoscedastic, &mut rng)
            .unwrap();
        let ctx = RawExec::new(&model.store);
        let mut noise = StreamRng::new(1);
        let draws = model.forward_draws(&ctx, 0.4, 8, &mut noise).unwrap();
        let first = draws.means[0].item();
        assert!(draws.means.iter().all(|m| m.item() == first));
    }

    #[test]
    fn masked_mean_matches_deterministic_forward() {
        // The head is linear in the mask, so with inverted-dropout scaling
        // the mask expectation of the output equals the unmasked forward.
        let mut rng = StreamRng::new(9);
        let model = DropoutModel::build(&small_spec(0.5), Likelihood::Homoscedastic, &mut rng)
            .unwrap();
        let ctx = RawExec::new(&model.store);
        let x = 0.8;

        let mut det = DropoutModel::build(&small_spec(0.0), Likelihood::Homoscedastic, &mut StreamRng::new(9))
            .unwrap();
        det.store = model.store.clone();
        let base = det
            .forward_draws(&ctx, x, 1, &mut StreamRng::new(2))
            .unwrap()
            .means[0]
            .item();

        let n = 10_000;
        let mut noise = StreamRng::new(3);
        let draws = model.forward_draws(&ctx, x, n, &mut noise).unwrap();
        let vals: Vec<f64> = draws.means.iter().map(|m| m.item()).collect();
        let mean: f64 = vals.iter().sum::<f64>() / n as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - base).abs() < 3.0 * se.max(1e-12),
            "mean {mean} vs deterministic {base} (se {se})"
        );
    }
}
