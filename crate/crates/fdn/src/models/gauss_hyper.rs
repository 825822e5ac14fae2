//! Gaussian hypernetwork: each base layer's posterior parameters are emitted
//! by a small hypernetwork reading a learnable per-layer latent vector, so
//! the posterior is global (independent of the query input) but generated
//! rather than stored directly.

use crate::adiff::{Backend, ParamStore, RawExec, StreamRng};
use crate::error::{Error, Result};
use crate::prob::PriorSpec;

use super::layers::{
    base_layer_dims, draws_from_posteriors, layer_kl, posterior_from_flat, Activation, HyperNet,
    LayerDims, LayerPosterior,
};
use super::{DrawOutputs, Likelihood, ModelSpec, PredictiveMixture};

pub struct GaussHyperModel {
    pub spec: ModelSpec,
    pub likelihood: Likelihood,
    pub prior: PriorSpec,
    pub store: ParamStore,
    hypernets: Vec<HyperNet>,
    dims: [LayerDims; 2],
}

// Trunks are tanh regardless of the base activation (bounded scales).
fn hypernets(spec: &ModelSpec, dims: &[LayerDims; 2]) -> Vec<HyperNet> {
    dims.iter()
        .enumerate()
        .map(|(i, d)| {
            HyperNet::new(
                &format!("a{}", i + 1),
                spec.d_latent,
                spec.d_hyper,
                2 * d.generated_count(),
                Activation::Tanh,
            )
        })
        .collect()
}

/// Output-bias preset: zero for the mean slices, rho0 for the rho
/// slices, so posterior scales start small.
fn rho_biased_b2(dims: LayerDims, rho0: f64) -> Vec<f64> {
    let nw = dims.weight_count();
    let nb = dims.bias_count();
    let mut b2 = Vec::with_capacity(2 * (nw + nb));
    b2.extend(std::iter::repeat_n(0.0, nw));
    b2.extend(std::iter::repeat_n(rho0, nw));
    b2.extend(std::iter::repeat_n(0.0, nb));
    b2.extend(std::iter::repeat_n(rho0, nb));
    b2
}

impl GaussHyperModel {
    pub fn shapes(spec: &ModelSpec, likelihood: Likelihood) -> Result<Vec<(String, Vec<usize>)>> {
        if spec.d_hyper == 0 || spec.d_latent == 0 {
            return Err(Error::InvalidArg(
                "gauss_hyper requires d_hyper > 0 and d_latent > 0".into(),
            ));
        }
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let mut out = Vec::new();
        for (i, hn) in hypernets(spec, &dims).iter().enumerate() {
            out.push((format!("h{}", i + 1), vec![spec.d_latent]));
            out.extend(hn.param_shapes());
        }
        Ok(out)
    }

    pub fn build(
        spec: &ModelSpec,
        likelihood: Likelihood,
        prior: PriorSpec,
        rng: &mut StreamRng,
    ) -> Result<GaussHyperModel> {
        Self::shapes(spec, likelihood)?;
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let nets = hypernets(spec, &dims);
        let mut store = ParamStore::new();
        for (i, (hn, d)) in nets.iter().zip(&dims).enumerate() {
            let rho0 = spec.rho_init_for_layer(i, dims.len());
            store.insert(&format!("h{}", i + 1), rng.normal_tensor(&[spec.d_latent]))?;
            hn.init(&mut store, rng, spec.hyper_gain, Some(&rho_biased_b2(*d, rho0)))?;
        }
        Ok(GaussHyperModel {
            spec: spec.clone(),
            likelihood,
            prior,
            store,
            hypernets: nets,
            dims,
        })
    }

    fn posteriors<B: Backend>(&self, ctx: &B) -> Result<Vec<LayerPosterior<B::T>>> {
        self.hypernets
            .iter()
            .zip(&self.dims)
            .enumerate()
            .map(|(i, (hn, d))| {
                let latent = ctx.param(&format!("h{}", i + 1));
                let flat = hn.forward(ctx, &latent)?;
                Ok(posterior_from_flat(ctx, &flat, *d, self.spec.rho_clamp))
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
        let posts = self.posteriors(ctx)?;
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

    /// Batch prediction: the generated posterior is input-independent, so
    /// weights are sampled once per draw and reused for every point.
    pub fn predict_batch(
        &self,
        xs: &[f64],
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<(PredictiveMixture, f64)>> {
        let ctx = RawExec::new(&self.store);
        let posts = self.posteriors(&ctx)?;
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
