//! Functional distribution networks: per-layer weight posteriors emitted by
//! small hypernetworks, conditioned either on the raw input (IC) or on the
//! previous sampled activation (LP), sampled sequentially through depth.
//! The deterministic hypernetwork is the same architecture evaluated at the
//! posterior mean with no KL term.

use crate::adiff::{Backend, ParamStore, RawExec, StreamRng, Tensor};
use crate::error::{Error, Result};
use crate::prob::{mean_of, PriorSpec};

use super::layers::{
    affine, base_forward, base_layer_dims, check_finite, draws_from_posteriors, layer_kl,
    posterior_from_flat, sample_layer, sample_layer_from, sample_layer_with_ratio, split_head,
    Activation, HyperNet, LayerDims, NoiseBank,
};
use super::{mixture_from, DrawOutputs, Likelihood, ModelKind, ModelSpec, PredictiveMixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Every layer's posterior reads the raw input x.
    InputConditioned,
    /// Layer l's posterior reads the sampled activation a_{l-1}.
    LayerProgressive,
}

pub struct FdnModel {
    pub spec: ModelSpec,
    pub likelihood: Likelihood,
    pub prior: PriorSpec,
    pub store: ParamStore,
    variant: Conditioning,
    deterministic: bool,
    hypernets: Vec<HyperNet>,
    dims: [LayerDims; 2],
}

fn variant_of(kind: ModelKind) -> Result<(Conditioning, bool)> {
    match kind {
        ModelKind::IcFdn => Ok((Conditioning::InputConditioned, false)),
        ModelKind::LpFdn => Ok((Conditioning::LayerProgressive, false)),
        ModelKind::DetHyper => Ok((Conditioning::InputConditioned, true)),
        other => Err(Error::InvalidArg(format!(
            "`{other}` is not an FDN variant"
        ))),
    }
}

// Hypernetwork trunks are tanh regardless of the base activation: the
// emitted posterior scales must stay bounded off-support.
fn hypernets(spec: &ModelSpec, variant: Conditioning, dims: &[LayerDims; 2]) -> Vec<HyperNet> {
    dims.iter()
        .enumerate()
        .map(|(i, d)| {
            let d_in = match variant {
                Conditioning::InputConditioned => 1,
                Conditioning::LayerProgressive => d.fan_in,
            };
            HyperNet::new(
                &format!("a{}", i + 1),
                d_in,
                spec.d_hyper,
                2 * d.generated_count(),
                Activation::Tanh,
            )
        })
        .collect()
}

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

impl FdnModel {
    pub fn shapes(spec: &ModelSpec, likelihood: Likelihood) -> Result<Vec<(String, Vec<usize>)>> {
        if spec.d_hyper == 0 {
            return Err(Error::InvalidArg("FDN requires d_hyper > 0".into()));
        }
        let (variant, _) = variant_of(spec.kind)?;
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        Ok(hypernets(spec, variant, &dims)
            .iter()
            .flat_map(|hn| hn.param_shapes())
            .collect())
    }

    pub fn build(
        spec: &ModelSpec,
        likelihood: Likelihood,
        prior: PriorSpec,
        rng: &mut StreamRng,
    ) -> Result<FdnModel> {
        let (variant, deterministic) = variant_of(spec.kind)?;
        if spec.d_hyper == 0 {
            return Err(Error::InvalidArg("FDN requires d_hyper > 0".into()));
        }
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let nets = hypernets(spec, variant, &dims);
        let mut store = ParamStore::new();
        for (i, (hn, d)) in nets.iter().zip(&dims).enumerate() {
            let rho0 = spec.rho_init_for_layer(i, dims.len());
            hn.init(&mut store, rng, spec.hyper_gain, Some(&rho_biased_b2(*d, rho0)))?;
        }
        Ok(FdnModel {
            spec: spec.clone(),
            likelihood,
            prior,
            store,
            variant,
            deterministic,
            hypernets: nets,
            dims,
        })
    }

    pub fn variant(&self) -> Conditioning {
        self.variant
    }

    pub fn deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn forward_draws<B: Backend>(
        &self,
        ctx: &B,
        x: f64,
        k: usize,
        rng: &mut StreamRng,
        want_ratios: bool,
    ) -> Result<DrawOutputs<B::T>> {
        match (self.deterministic, self.variant) {
            (true, _) => self.forward_deterministic(ctx, x),
            (false, Conditioning::InputConditioned) => {
                self.forward_ic(ctx, x, k, rng, want_ratios)
            }
            (false, Conditioning::LayerProgressive) => {
                self.forward_lp(ctx, x, k, rng, want_ratios)
            }
        }
    }

    /// Degenerate posterior: weights are the emitted means, one path, no KL.
    fn forward_deterministic<B: Backend>(&self, ctx: &B, x: f64) -> Result<DrawOutputs<B::T>> {
        let x_vec = ctx.constant(Tensor::vector(vec![x]));
        let mut a = x_vec.clone();
        let last = self.hypernets.len() - 1;
        for (i, (hn, d)) in self.hypernets.iter().zip(&self.dims).enumerate() {
            let flat = hn.forward(ctx, &x_vec)?;
            let post = posterior_from_flat(ctx, &flat, *d, self.spec.rho_clamp);
            a = affine(ctx, &post.mu_w, &post.mu_b, &a);
            if i < last {
                a = self.spec.activation.apply(ctx, &a);
            }
            check_finite(ctx, &a, &format!("layer {}", i + 1))?;
        }
        let (mean, sigma) = split_head(ctx, &a, self.likelihood);
        Ok(DrawOutputs {
            means: vec![mean],
            sigmas: sigma.map(|s| vec![s]),
            kl: None,
            log_ratios: None,
        })
    }

    /// Input-conditioned: posteriors depend only on x, so they are computed
    /// once and the KL is identical across draws.
    fn forward_ic<B: Backend>(
        &self,
        ctx: &B,
        x: f64,
        k: usize,
        rng: &mut StreamRng,
        want_ratios: bool,
    ) -> Result<DrawOutputs<B::T>> {
        let x_vec = ctx.constant(Tensor::vector(vec![x]));
        let posts = self
            .hypernets
            .iter()
            .zip(&self.dims)
            .map(|(hn, d)| {
                let flat = hn.forward(ctx, &x_vec)?;
                Ok(posterior_from_flat(ctx, &flat, *d, self.spec.rho_clamp))
            })
            .collect::<Result<Vec<_>>>()?;
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

    /// Batch prediction under common random numbers: one noise bank for all
    /// points, posteriors recomputed per point. Matches per-point
    /// `forward_draws` on a cloned stream bit for bit.
    pub fn predict_batch(
        &self,
        xs: &[f64],
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<Vec<(PredictiveMixture, f64)>> {
        let ctx = RawExec::new(&self.store);
        if self.deterministic {
            return xs
                .iter()
                .map(|&x| {
                    let draws = self.forward_deterministic(&ctx, x)?;
                    let means = vec![draws.means[0].item()];
                    let sigmas = draws.sigmas.map(|s| vec![s[0].item()]);
                    Ok((mixture_from(means, sigmas)?, 0.0))
                })
                .collect();
        }
        let bank = NoiseBank::draw(&self.dims, k, rng);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            let x_vec = ctx.constant(Tensor::vector(vec![x]));
            let (means, sigmas, kl) = match self.variant {
                Conditioning::InputConditioned => {
                    let posts = self
                        .hypernets
                        .iter()
                        .zip(&self.dims)
                        .map(|(hn, d)| {
                            let flat = hn.forward(&ctx, &x_vec)?;
                            Ok(posterior_from_flat(&ctx, &flat, *d, self.spec.rho_clamp))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let kl: f64 = posts
                        .iter()
                        .map(|p| layer_kl(&ctx, p, self.prior.sigma0).item())
                        .sum();
                    let mut means = Vec::with_capacity(k);
                    let mut sigmas = Vec::with_capacity(k);
                    for draw in &bank.draws {
                        let sampled: Vec<(Tensor, Tensor)> = posts
                            .iter()
                            .zip(draw)
                            .map(|(p, z)| sample_layer_from(&ctx, p, z))
                            .collect();
                        let (mean, sigma) = base_forward(
                            &ctx,
                            &sampled,
                            self.spec.activation,
                            self.likelihood,
                            &x_vec,
                        )?;
                        means.push(mean.item());
                        if let Some(s) = sigma {
                            sigmas.push(s.item());
                        }
                    }
                    (means, sigmas, kl)
                }
                Conditioning::LayerProgressive => {
                    // The first layer conditions on x itself, so its
                    // posterior (and KL) is shared by every draw.
                    let last = self.hypernets.len() - 1;
                    let first_flat = self.hypernets[0].forward(&ctx, &x_vec)?;
                    let first_post =
                        posterior_from_flat(&ctx, &first_flat, self.dims[0], self.spec.rho_clamp);
                    let first_kl = layer_kl(&ctx, &first_post, self.prior.sigma0).item();
                    let mut means = Vec::with_capacity(k);
                    let mut sigmas = Vec::with_capacity(k);
                    let mut kl_sum = 0.0;
                    for draw in &bank.draws {
                        let mut kl_path = first_kl;
                        let (w, b) = sample_layer_from(&ctx, &first_post, &draw[0]);
                        let mut a = affine(&ctx, &w, &b, &x_vec);
                        if last > 0 {
                            a = self.spec.activation.apply(&ctx, &a);
                        }
                        check_finite(&ctx, &a, "layer 1")?;
                        for (i, ((hn, d), z)) in self
                            .hypernets
                            .iter()
                            .zip(&self.dims)
                            .zip(draw)
                            .enumerate()
                            .skip(1)
                        {
                            let flat = hn.forward(&ctx, &a)?;
                            let post =
                                posterior_from_flat(&ctx, &flat, *d, self.spec.rho_clamp);
                            kl_path += layer_kl(&ctx, &post, self.prior.sigma0).item();
                            let (w, b) = sample_layer_from(&ctx, &post, z);
                            a = affine(&ctx, &w, &b, &a);
                            if i < last {
                                a = self.spec.activation.apply(&ctx, &a);
                            }
                            check_finite(&ctx, &a, &format!("layer {}", i + 1))?;
                        }
                        kl_sum += kl_path;
                        let (mean, sigma) = split_head(&ctx, &a, self.likelihood);
                        means.push(mean.item());
                        if let Some(s) = sigma {
                            sigmas.push(s.item());
                        }
                    }
                    (means, sigmas, kl_sum * (1.0 / k as f64))
                }
            };
            let sigmas = (!sigmas.is_empty()).then_some(sigmas);
            out.push((mixture_from(means, sigmas)?, kl));
        }
        Ok(out)
    }

    /// Layer-progressive: each draw threads its own activations through the
    /// hypernetworks, so the per-layer KL is accumulated along the sampled
    /// path and averaged over draws.
    fn forward_lp<B: Backend>(
        &self,
        ctx: &B,
        x: f64,
        k: usize,
        rng: &mut StreamRng,
        want_ratios: bool,
    ) -> Result<DrawOutputs<B::T>> {
        let x_vec = ctx.constant(Tensor::vector(vec![x]));
        let last = self.hypernets.len() - 1;
        let mut means = Vec::with_capacity(k);
        let mut sigmas = Vec::with_capacity(k);
        let mut ratios = Vec::with_capacity(k);
        let mut kls = Vec::with_capacity(k);
        for _ in 0..k {
            let mut a = x_vec.clone();
            let mut kl_path: Option<B::T> = None;
            let mut ratio_path: Option<B::T> = None;
            for (i, (hn, d)) in self.hypernets.iter().zip(&self.dims).enumerate() {
                let flat = hn.forward(ctx, &a)?;
                let post = posterior_from_flat(ctx, &flat, *d, self.spec.rho_clamp);
                let kl_l = layer_kl(ctx, &post, self.prior.sigma0);
                kl_path = Some(match kl_path {
                    Some(acc) => ctx.add(&acc, &kl_l),
                    None => kl_l,
                });
                let (w, b) = if want_ratios {
                    let (w, b, r) = sample_layer_with_ratio(ctx, &post, self.prior.sigma0, rng);
                    ratio_path = Some(match ratio_path {
                        Some(acc) => ctx.add(&acc, &r),
                        None => r,
                    });
                    (w, b)
                } else {
                    sample_layer(ctx, &post, rng)
                };
                a = affine(ctx, &w, &b, &a);
                if i < last {
                    a = self.spec.activation.apply(ctx, &a);
                }
                check_finite(ctx, &a, &format!("layer {}", i + 1))?;
            }
            let (mean, sigma) = split_head(ctx, &a, self.likelihood);
            means.push(mean);
            if let Some(s) = sigma {
                sigmas.push(s);
            }
            if let Some(r) = ratio_path {
                ratios.push(r);
            }
            kls.push(kl_path.expect("at least one layer"));
        }
        Ok(DrawOutputs {
            means,
            sigmas: match self.likelihood {
                Likelihood::Homoscedastic => None,
                Likelihood::Heteroscedastic => Some(sigmas),
            },
            kl: Some(mean_of(ctx, &kls)),
            log_ratios: want_ratios.then_some(ratios),
        })
    }
}
