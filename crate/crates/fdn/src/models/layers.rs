//! Shared building blocks: base-network layers, weight-posterior containers,
//! reparameterized sampling, and the small hypernetworks that emit posterior
//! parameters.

use serde::{Deserialize, Serialize};

use crate::adiff::{Backend, ParamStore, StreamRng, Tensor};
use crate::error::{Error, Result};
use crate::prob::{kl_diag_node, SIGMA_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply<B: Backend>(&self, ctx: &B, v: &B::T) -> B::T {
        match self {
            Activation::Tanh => ctx.tanh(v),
            Activation::Relu => ctx.relu(v),
        }
    }
}

/// Weight and bias dimensions of one base-network layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDims {
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerDims {
    pub fn weight_count(&self) -> usize {
        self.fan_in * self.fan_out
    }

    pub fn bias_count(&self) -> usize {
        self.fan_out
    }

    /// Scalars needed to realize the layer (weights + biases).
    pub fn generated_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }
}

/// Single-hidden-layer base network dims: 1 -> d_hid -> out_dim.
pub fn base_layer_dims(d_hid: usize, out_dim: usize) -> [LayerDims; 2] {
    [
        LayerDims {
            fan_in: 1,
            fan_out: d_hid,
        },
        LayerDims {
            fan_in: d_hid,
            fan_out: out_dim,
        },
    ]
}

/// Diagonal-Gaussian posterior over one layer's weights and biases.
pub struct LayerPosterior<T> {
    pub mu_w: T,
    pub sigma_w: T,
    pub mu_b: T,
    pub sigma_b: T,
    pub dims: LayerDims,
}

/// Split a flat hypernetwork output `(mu_W, rho_W, mu_b, rho_b)` into a
/// posterior, applying the softplus floor. When `rho_clamp` is set, every
/// rho is overridden by that constant (the degenerate-scale switch).
pub fn posterior_from_flat<B: Backend>(
    ctx: &B,
    flat: &B::T,
    dims: LayerDims,
    rho_clamp: Option<f64>,
) -> LayerPosterior<B::T> {
    let nw = dims.weight_count();
    let nb = dims.bias_count();
    let mu_w = ctx.reshape(&ctx.slice(flat, 0, nw), &[dims.fan_out, dims.fan_in]);
    let rho_w = ctx.slice(flat, nw, nw);
    let mu_b = ctx.slice(flat, 2 * nw, nb);
    let rho_b = ctx.slice(flat, 2 * nw + nb, nb);
    let (sigma_w, sigma_b) = match rho_clamp {
        None => (
            ctx.reshape(&sigma_from_rho(ctx, &rho_w), &[dims.fan_out, dims.fan_in]),
            sigma_from_rho(ctx, &rho_b),
        ),
        Some(c) => {
            let s = SIGMA_FLOOR + crate::adiff::softplus(c);
            (
                ctx.constant(Tensor::full(&[dims.fan_out, dims.fan_in], s)),
                ctx.constant(Tensor::full(&[nb], s)),
            )
        }
    };
    LayerPosterior {
        mu_w,
        sigma_w,
        mu_b,
        sigma_b,
        dims,
    }
}

pub fn sigma_from_rho<B: Backend>(ctx: &B, rho: &B::T) -> B::T {
    ctx.add_scalar(&ctx.softplus(rho), SIGMA_FLOOR)
}

fn assert_floor(t: &Tensor) {
    for &s in t.data() {
        assert!(
            s >= SIGMA_FLOOR,
            "posterior sigma {s} fell below the {SIGMA_FLOOR} floor"
        );
    }
}

/// Reparameterized draw of (W, b) from a layer posterior.
pub fn sample_layer<B: Backend>(
    ctx: &B,
    post: &LayerPosterior<B::T>,
    rng: &mut StreamRng,
) -> (B::T, B::T) {
    assert_floor(&ctx.value(&post.sigma_w));
    assert_floor(&ctx.value(&post.sigma_b));
    let z_w = ctx.constant(rng.normal_tensor(&[post.dims.fan_out, post.dims.fan_in]));
    let z_b = ctx.constant(rng.normal_tensor(&[post.dims.bias_count()]));
    let w = ctx.add(&post.mu_w, &ctx.mul(&post.sigma_w, &z_w));
    let b = ctx.add(&post.mu_b, &ctx.mul(&post.sigma_b, &z_b));
    (w, b)
}

/// Reparameterized draw that also returns `log p0(theta) - log q(theta)` for
/// importance weighting.
pub fn sample_layer_with_ratio<B: Backend>(
    ctx: &B,
    post: &LayerPosterior<B::T>,
    sigma0: f64,
    rng: &mut StreamRng,
) -> (B::T, B::T, B::T) {
    assert_floor(&ctx.value(&post.sigma_w));
    assert_floor(&ctx.value(&post.sigma_b));
    let z_w = rng.normal_tensor(&[post.dims.fan_out, post.dims.fan_in]);
    let z_b = rng.normal_tensor(&[post.dims.bias_count()]);
    let zw_sq: f64 = z_w.data().iter().map(|z| z * z).sum();
    let zb_sq: f64 = z_b.data().iter().map(|z| z * z).sum();
    let n = (post.dims.generated_count()) as f64;

    let zw = ctx.constant(z_w);
    let zb = ctx.constant(z_b);
    let w = ctx.add(&post.mu_w, &ctx.mul(&post.sigma_w, &zw));
    let b = ctx.add(&post.mu_b, &ctx.mul(&post.sigma_b, &zb));

    // log q(theta) = -sum(log sigma) - (1/2) sum z^2 - (n/2) log 2pi
    let sum_log_sigma = ctx.add(&ctx.sum(&ctx.log(&post.sigma_w)), &ctx.sum(&ctx.log(&post.sigma_b)));
    let log_q = ctx.add_scalar(
        &ctx.neg(&sum_log_sigma),
        -0.5 * (zw_sq + zb_sq) - 0.5 * n * crate::prob::LN_2PI,
    );

    // log p0(theta) = -sum(theta^2)/(2 sigma0^2) - (n/2) log(2pi sigma0^2)
    let theta_sq = ctx.add(&ctx.sum(&ctx.square(&w)), &ctx.sum(&ctx.square(&b)));
    let log_p0 = ctx.add_scalar(
        &ctx.mul_scalar(&theta_sq, -0.5 / (sigma0 * sigma0)),
        -0.5 * n * (crate::prob::LN_2PI + (sigma0 * sigma0).ln()),
    );

    let ratio = ctx.sub(&log_p0, &log_q);
    (w, b, ratio)
}

/// Closed-form KL of a layer posterior against N(0, sigma0^2 I), weights and
/// biases summed.
pub fn layer_kl<B: Backend>(ctx: &B, post: &LayerPosterior<B::T>, sigma0: f64) -> B::T {
    let kw = kl_diag_node(ctx, &post.mu_w, &post.sigma_w, sigma0);
    let kb = kl_diag_node(ctx, &post.mu_b, &post.sigma_b, sigma0);
    ctx.add(&kw, &kb)
}

/// Affine layer application: W a + b.
pub fn affine<B: Backend>(ctx: &B, w: &B::T, b: &B::T, a: &B::T) -> B::T {
    ctx.add(&ctx.matmul(w, a), b)
}

/// Split the final layer output into the observation head: a one-element
/// mean, plus a positive scale when the likelihood learns one.
pub fn split_head<B: Backend>(
    ctx: &B,
    out: &B::T,
    likelihood: super::Likelihood,
) -> (B::T, Option<B::T>) {
    match likelihood {
        super::Likelihood::Homoscedastic => (out.clone(), None),
        super::Likelihood::Heteroscedastic => {
            let mean = ctx.slice(out, 0, 1);
            let sigma = sigma_from_rho(ctx, &ctx.slice(out, 1, 1));
            (mean, Some(sigma))
        }
    }
}

/// Run the base network over sampled per-layer weights: hidden layers get
/// the activation, the last layer is linear and feeds the head.
pub fn base_forward<B: Backend>(
    ctx: &B,
    weights: &[(B::T, B::T)],
    activation: Activation,
    likelihood: super::Likelihood,
    input: &B::T,
) -> Result<(B::T, Option<B::T>)> {
    let mut a = input.clone();
    let last = weights.len() - 1;
    for (i, (w, b)) in weights.iter().enumerate() {
        a = affine(ctx, w, b, &a);
        if i < last {
            a = activation.apply(ctx, &a);
        }
        check_finite(ctx, &a, &format!("layer {}", i + 1))?;
    }
    Ok(split_head(ctx, &a, likelihood))
}

/// Noise bank for batch prediction under common random numbers: the z
/// tensors for K reparameterized draws, drawn once and reused across test
/// points in the same order `sample_layer` would draw them per point.
pub struct NoiseBank {
    pub draws: Vec<Vec<(Tensor, Tensor)>>,
}

impl NoiseBank {
    pub fn draw(dims: &[LayerDims], k: usize, rng: &mut StreamRng) -> NoiseBank {
        let draws = (0..k)
            .map(|_| {
                dims.iter()
                    .map(|d| {
                        (
                            rng.normal_tensor(&[d.fan_out, d.fan_in]),
                            rng.normal_tensor(&[d.bias_count()]),
                        )
                    })
                    .collect()
            })
            .collect();
        NoiseBank { draws }
    }
}

/// `sample_layer` with noise supplied by a bank instead of the stream.
pub fn sample_layer_from<B: Backend>(
    ctx: &B,
    post: &LayerPosterior<B::T>,
    noise: &(Tensor, Tensor),
) -> (B::T, B::T) {
    let z_w = ctx.constant(noise.0.clone());
    let z_b = ctx.constant(noise.1.clone());
    let w = ctx.add(&post.mu_w, &ctx.mul(&post.sigma_w, &z_w));
    let b = ctx.add(&post.mu_b, &ctx.mul(&post.sigma_b, &z_b));
    (w, b)
}

/// Batch prediction for models with an input-independent posterior: sample
/// K weight sets once, evaluate every point under them.
#[allow(clippy::too_many_arguments)]
pub fn predict_batch_global(
    ctx: &crate::adiff::RawExec<'_>,
    posts: &[LayerPosterior<Tensor>],
    dims: &[LayerDims],
    activation: Activation,
    likelihood: super::Likelihood,
    sigma0: f64,
    xs: &[f64],
    k: usize,
    rng: &mut StreamRng,
) -> Result<Vec<(super::PredictiveMixture, f64)>> {
    let kl: f64 = posts
        .iter()
        .map(|p| layer_kl(ctx, p, sigma0).item())
        .sum();
    let bank = NoiseBank::draw(dims, k, rng);
    let sampled: Vec<Vec<(Tensor, Tensor)>> = bank
        .draws
        .iter()
        .map(|draw| {
            posts
                .iter()
                .zip(draw)
                .map(|(p, z)| sample_layer_from(ctx, p, z))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let x_vec = ctx.constant(Tensor::vector(vec![x]));
        let mut means = Vec::with_capacity(k);
        let mut sigmas = Vec::with_capacity(k);
        for weights in &sampled {
            let (mean, sigma) = base_forward(ctx, weights, activation, likelihood, &x_vec)?;
            means.push(mean.item());
            if let Some(s) = sigma {
                sigmas.push(s.item());
            }
        }
        let sigmas = (!sigmas.is_empty()).then_some(sigmas);
        out.push((super::mixture_from(means, sigmas)?, kl));
    }
    Ok(out)
}

/// Draws shared by every model whose layer posteriors do not depend on the
/// sampled path (input-conditioned and global posteriors): sample weights K
/// times from fixed posteriors and run the base network.
#[allow(clippy::too_many_arguments)]
pub fn draws_from_posteriors<B: Backend>(
    ctx: &B,
    posts: &[LayerPosterior<B::T>],
    activation: Activation,
    likelihood: super::Likelihood,
    x: f64,
    k: usize,
    sigma0: f64,
    rng: &mut StreamRng,
    want_ratios: bool,
) -> Result<(Vec<B::T>, Option<Vec<B::T>>, Option<Vec<B::T>>)> {
    let x_vec = ctx.constant(Tensor::vector(vec![x]));
    let mut means = Vec::with_capacity(k);
    let mut sigmas = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    for _ in 0..k {
        let mut sampled = Vec::with_capacity(posts.len());
        let mut ratio_acc: Option<B::T> = None;
        for post in posts {
            if want_ratios {
                let (w, b, r) = sample_layer_with_ratio(ctx, post, sigma0, rng);
                sampled.push((w, b));
                ratio_acc = Some(match ratio_acc {
                    Some(acc) => ctx.add(&acc, &r),
                    None => r,
                });
            } else {
                sampled.push(sample_layer(ctx, post, rng));
            }
        }
        let (mean, sigma) = base_forward(ctx, &sampled, activation, likelihood, &x_vec)?;
        means.push(mean);
        if let Some(s) = sigma {
            sigmas.push(s);
        }
        if let Some(r) = ratio_acc {
            ratios.push(r);
        }
    }
    let sigmas = match likelihood {
        super::Likelihood::Homoscedastic => None,
        super::Likelihood::Heteroscedastic => Some(sigmas),
    };
    Ok((means, sigmas, want_ratios.then_some(ratios)))
}

pub fn check_finite<B: Backend>(ctx: &B, v: &B::T, what: &str) -> Result<()> {
    if ctx.value(v).is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: what.to_string(),
        })
    }
}

/// Two-linear-layer hypernetwork `signal -> hidden -> flat output`.
#[derive(Debug, Clone)]
pub struct HyperNet {
    pub prefix: String,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub activation: Activation,
}

impl HyperNet {
    pub fn new(prefix: &str, d_in: usize, d_hidden: usize, d_out: usize, activation: Activation) -> Self {
        HyperNet {
            prefix: prefix.to_string(),
            d_in,
            d_hidden,
            d_out,
            activation,
        }
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        vec![
            (format!("{}.w1", self.prefix), vec![self.d_hidden, self.d_in]),
            (format!("{}.b1", self.prefix), vec![self.d_hidden]),
            (format!("{}.w2", self.prefix), vec![self.d_out, self.d_hidden]),
            (format!("{}.b2", self.prefix), vec![self.d_out]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// Gain-scaled Glorot-normal weights, zero biases. `b2_init` can preset
    /// the output bias (used to start posterior scales small).
    pub fn init(
        &self,
        store: &mut ParamStore,
        rng: &mut StreamRng,
        gain: f64,
        b2_init: Option<&[f64]>,
    ) -> Result<()> {
        let sd1 = gain * (2.0 / (self.d_in + self.d_hidden) as f64).sqrt();
        let sd2 = gain * (2.0 / (self.d_hidden + self.d_out) as f64).sqrt();
        store.insert(
            &format!("{}.w1", self.prefix),
            rng.normal_tensor_scaled(&[self.d_hidden, self.d_in], sd1),
        )?;
        store.insert(&format!("{}.b1", self.prefix), Tensor::zeros(&[self.d_hidden]))?;
        store.insert(
            &format!("{}.w2", self.prefix),
            rng.normal_tensor_scaled(&[self.d_out, self.d_hidden], sd2),
        )?;
        let b2 = match b2_init {
            Some(v) => {
                assert_eq!(v.len(), self.d_out);
                Tensor::vector(v.to_vec())
            }
            None => Tensor::zeros(&[self.d_out]),
        };
        store.insert(&format!("{}.b2", self.prefix), b2)?;
        Ok(())
    }

    /// Forward pass; `signal` must be a rank-1 value of length `d_in`.
    pub fn forward<B: Backend>(&self, ctx: &B, signal: &B::T) -> Result<B::T> {
        let got = ctx.value(signal).shape().to_vec();
        if got != [self.d_in] {
            return Err(Error::Shape(format!(
                "hypernet `{}` expects signal of shape [{}], got {:?}",
                self.prefix, self.d_in, got
            )));
        }
        let w1 = ctx.param(&format!("{}.w1", self.prefix));
        let b1 = ctx.param(&format!("{}.b1", self.prefix));
        let w2 = ctx.param(&format!("{}.w2", self.prefix));
        let b2 = ctx.param(&format!("{}.b2", self.prefix));
        let h = self.activation.apply(ctx, &affine(ctx, &w1, &b1, signal));
        Ok(affine(ctx, &w2, &b2, &h))
    }
}

/// Plain (deterministic) layer parameters registered directly in the store.
pub fn init_plain_layer(
    store: &mut ParamStore,
    prefix: &str,
    dims: LayerDims,
    rng: &mut StreamRng,
) -> Result<()> {
    let sd = (2.0 / (dims.fan_in + dims.fan_out) as f64).sqrt();
    store.insert(
        &format!("{prefix}.w"),
        rng.normal_tensor_scaled(&[dims.fan_out, dims.fan_in], sd),
    )?;
    store.insert(&format!("{prefix}.b"), Tensor::zeros(&[dims.fan_out]))?;
    Ok(())
}
