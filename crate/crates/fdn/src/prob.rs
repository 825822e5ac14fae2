//! Probabilistic building blocks: Gaussian log-density, diagonal-Gaussian KL
//! against an isotropic prior, the tempered ELBO and importance-weighted
//! objectives, the heteroscedastic likelihood, and the KL weight schedule.
//!
//! Each objective exists twice with one source of truth: a plain-f64 form
//! for scoring and tests, and a `Backend`-generic builder used inside the
//! training graph. The f64 forms are the generic builders evaluated without
//! a tape, so the two cannot drift apart.

use serde::{Deserialize, Serialize};

use crate::adiff::{Backend, Tensor};
use crate::error::{Error, Result};

/// Floor added to every posterior standard deviation: sigma = FLOOR + softplus(rho).
pub const SIGMA_FLOOR: f64 = 1e-3;

pub const LN_2PI: f64 = 1.837877066409345483560659472811_f64;

/// Diagonal Gaussian with strictly positive scale.
#[derive(Debug, Clone)]
pub struct DiagGaussian {
    pub mu: Tensor,
    pub sigma: Tensor,
}

impl DiagGaussian {
    pub fn new(mu: Tensor, sigma: Tensor) -> Result<Self> {
        if mu.shape() != sigma.shape() {
            return Err(Error::Shape(format!(
                "mu shape {:?} != sigma shape {:?}",
                mu.shape(),
                sigma.shape()
            )));
        }
        if sigma.data().iter().any(|&s| s < SIGMA_FLOOR) {
            return Err(Error::InvalidArg(format!(
                "sigma below the {SIGMA_FLOOR} floor"
            )));
        }
        Ok(DiagGaussian { mu, sigma })
    }
}

/// Isotropic zero-mean Gaussian prior over weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PriorSpec {
    pub sigma0: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { sigma0: 1.0 }
    }
}

impl PriorSpec {
    pub fn new(sigma0: f64) -> Result<Self> {
        if sigma0 <= 0.0 {
            return Err(Error::InvalidArg("sigma0 must be positive".into()));
        }
        Ok(PriorSpec { sigma0 })
    }
}

/// Cosine warm-up for the KL weight: beta ramps 0 -> beta_max over
/// `warmup_updates` updates and stays at beta_max afterwards.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BetaSchedule {
    pub beta_max: f64,
    pub warmup_updates: u64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            beta_max: 0.01,
            warmup_updates: 200,
        }
    }
}

impl BetaSchedule {
    pub fn beta_at(&self, t: u64) -> f64 {
        if self.warmup_updates == 0 || t >= self.warmup_updates {
            return self.beta_max;
        }
        let frac = t as f64 / self.warmup_updates as f64;
        self.beta_max * 0.5 * (1.0 - (std::f64::consts::PI * frac).cos())
    }
}

// -- plain-f64 forms ---------------------------------------------------------

/// log N(y; mu, sigma2).
pub fn gaussian_logpdf(y: f64, mu: f64, sigma2: f64) -> Result<f64> {
    if sigma2 <= 0.0 {
        return Err(Error::InvalidArg(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let d = y - mu;
    Ok(-0.5 * d * d / sigma2 - 0.5 * (LN_2PI + sigma2.ln()))
}

/// Closed-form KL( N(mu, diag sigma^2) || N(0, sigma0^2 I) ), summed over
/// dimensions.
pub fn kl_diag_gaussian(q: &DiagGaussian, prior: &PriorSpec) -> f64 {
    let s0sq = prior.sigma0 * prior.sigma0;
    q.mu
        .data()
        .iter()
        .zip(q.sigma.data())
        .map(|(&m, &s)| {
            let ssq = s * s;
            0.5 * ((ssq + m * m) / s0sq - 1.0 - (ssq / s0sq).ln())
        })
        .sum()
}

/// Negative tempered ELBO from per-draw log-likelihoods: mean-of-logs data
/// term plus beta-weighted KL.
pub fn beta_elbo_loss(logliks: &[f64], kl: f64, beta: f64) -> Result<f64> {
    if logliks.is_empty() {
        return Err(Error::InvalidArg("beta_elbo_loss: no draws".into()));
    }
    let mean: f64 = logliks.iter().sum::<f64>() / logliks.len() as f64;
    Ok(-mean + beta * kl)
}

/// Max-shifted log of the mean of exponentials.
pub fn logmeanexp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = terms.iter().map(|&t| (t - m).exp()).sum();
    m + (s / terms.len() as f64).ln()
}

/// Negative importance-weighted bound (log-of-means over K draws).
pub fn iwae_loss(logliks: &[f64], log_prior: &[f64], log_q: &[f64]) -> Result<f64> {
    if logliks.is_empty() {
        return Err(Error::InvalidArg("iwae_loss: no draws".into()));
    }
    if logliks.len() != log_prior.len() || logliks.len() != log_q.len() {
        return Err(Error::InvalidArg(format!(
            "iwae_loss: mismatched lengths {}/{}/{}",
            logliks.len(),
            log_prior.len(),
            log_q.len()
        )));
    }
    let terms: Vec<f64> = logliks
        .iter()
        .zip(log_prior)
        .zip(log_q)
        .map(|((&l, &p), &q)| p + l - q)
        .collect();
    Ok(-logmeanexp(&terms))
}

/// Per-example heteroscedastic negative log-likelihood averaged over draws:
/// weighted least squares plus a variance penalty.
pub fn hetero_nll(y: f64, mu_k: &[f64], sigma2_k: &[f64]) -> Result<f64> {
    if mu_k.is_empty() {
        return Err(Error::InvalidArg("hetero_nll: no draws".into()));
    }
    if mu_k.len() != sigma2_k.len() {
        return Err(Error::InvalidArg("hetero_nll: mismatched lengths".into()));
    }
    let mut acc = 0.0;
    for (&mu, &s2) in mu_k.iter().zip(sigma2_k) {
        if s2 <= 0.0 {
            return Err(Error::InvalidArg(format!(
                "hetero_nll: sigma2 must be positive, got {s2}"
            )));
        }
        let d = y - mu;
        acc += d * d / s2 + LN_2PI + s2.ln();
    }
    Ok(acc / (2.0 * mu_k.len() as f64))
}

// -- graph builders ----------------------------------------------------------

/// KL( N(mu, diag sigma^2) || N(0, sigma0^2 I) ) as a scalar graph node.
/// `mu` and `sigma` are same-shape values; `sigma` must be positive.
pub fn kl_diag_node<B: Backend>(ctx: &B, mu: &B::T, sigma: &B::T, sigma0: f64) -> B::T {
    let s0sq = sigma0 * sigma0;
    let ssq = ctx.square(sigma);
    let musq = ctx.square(mu);
    let ratio = ctx.mul_scalar(&ctx.add(&ssq, &musq), 1.0 / s0sq);
    let log_ratio = ctx.log(&ctx.mul_scalar(&ssq, 1.0 / s0sq));
    let inner = ctx.add_scalar(&ctx.sub(&ratio, &log_ratio), -1.0);
    ctx.mul_scalar(&ctx.sum(&inner), 0.5)
}

/// log N(y; mu, sigma2) with fixed variance; `mu` is a one-element value.
pub fn gaussian_loglik_fixed_var<B: Backend>(ctx: &B, y: f64, mu: &B::T, sigma2: f64) -> B::T {
    let d = ctx.add_scalar(&ctx.neg(mu), y);
    let quad = ctx.mul_scalar(&ctx.sum(&ctx.square(&d)), -0.5 / sigma2);
    ctx.add_scalar(&quad, -0.5 * (LN_2PI + sigma2.ln()))
}

/// log N(y; mu, sigma^2) with a learned scale node (one element each).
pub fn gaussian_loglik_learned_var<B: Backend>(ctx: &B, y: f64, mu: &B::T, sigma: &B::T) -> B::T {
    let d = ctx.add_scalar(&ctx.neg(mu), y);
    let z = ctx.div(&d, sigma);
    let quad = ctx.mul_scalar(&ctx.sum(&ctx.square(&z)), -0.5);
    let log_sigma = ctx.sum(&ctx.log(sigma));
    let norm = ctx.add_scalar(&ctx.neg(&log_sigma), -0.5 * LN_2PI);
    ctx.add(&quad, &norm)
}

/// Mean of scalar values.
pub fn mean_of<B: Backend>(ctx: &B, terms: &[B::T]) -> B::T {
    assert!(!terms.is_empty());
    let mut acc = terms[0].clone();
    for t in &terms[1..] {
        acc = ctx.add(&acc, t);
    }
    ctx.mul_scalar(&acc, 1.0 / terms.len() as f64)
}

/// Negative tempered ELBO as a graph node.
pub fn beta_elbo_node<B: Backend>(ctx: &B, logliks: &[B::T], kl: Option<&B::T>, beta: f64) -> B::T {
    let data = ctx.neg(&mean_of(ctx, logliks));
    match kl {
        Some(kl) => ctx.add(&data, &ctx.mul_scalar(kl, beta)),
        None => data,
    }
}

/// Negative importance-weighted bound as a graph node. `log_ratios` holds
/// log p0(theta_k) - log q(theta_k); the max shift is taken from the current
/// values and enters as a constant, which leaves the gradient exact.
pub fn iwae_node<B: Backend>(ctx: &B, logliks: &[B::T], log_ratios: &[B::T]) -> B::T {
    assert_eq!(logliks.len(), log_ratios.len());
    assert!(!logliks.is_empty());
    let terms: Vec<B::T> = logliks
        .iter()
        .zip(log_ratios)
        .map(|(l, r)| ctx.add(l, r))
        .collect();
    let shift = terms
        .iter()
        .map(|t| ctx.value(t).item())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut acc: Option<B::T> = None;
    for t in &terms {
        let e = ctx.exp(&ctx.add_scalar(t, -shift));
        acc = Some(match acc {
            Some(a) => ctx.add(&a, &e),
            None => e,
        });
    }
    let mean = ctx.mul_scalar(&acc.expect("nonempty"), 1.0 / terms.len() as f64);
    ctx.neg(&ctx.add_scalar(&ctx.log(&mean), shift))
}
