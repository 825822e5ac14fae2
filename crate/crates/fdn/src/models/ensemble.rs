//! Deep ensemble: independently initialized and trained MLP members whose
//! predictions form a finite mixture (one component per member, no KL).

use crate::adiff::{Backend, ParamStore, StreamRng, Tensor};
use crate::error::{Error, Result};

use super::layers::{base_layer_dims, base_forward, init_plain_layer, LayerDims};
use super::{mixture_from, DrawOutputs, Likelihood, ModelSpec, PredictiveMixture};

pub struct EnsembleModel {
    pub spec: ModelSpec,
    pub likelihood: Likelihood,
    pub store: ParamStore,
    dims: [LayerDims; 2],
    trained: bool,
}

impl EnsembleModel {
    pub fn member_prefix(i: usize) -> String {
        format!("m{i}")
    }

    pub fn shapes(spec: &ModelSpec, likelihood: Likelihood) -> Vec<(String, Vec<usize>)> {
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let mut out = Vec::new();
        for m in 0..spec.members.max(1) {
            for (i, d) in dims.iter().enumerate() {
                let p = format!("{}.l{}", Self::member_prefix(m), i + 1);
                out.push((format!("{p}.w"), vec![d.fan_out, d.fan_in]));
                out.push((format!("{p}.b"), vec![d.fan_out]));
            }
        }
        out
    }

    pub fn build(
        spec: &ModelSpec,
        likelihood: Likelihood,
        rng: &mut StreamRng,
    ) -> Result<EnsembleModel> {
        if spec.members == 0 {
            return Err(Error::InvalidArg("ensemble needs at least one member".into()));
        }
        let dims = base_layer_dims(spec.d_hid, likelihood.head_dim());
        let mut store = ParamStore::new();
        for m in 0..spec.members {
            let mut member_rng = rng.derive_indexed("member", m);
            for (i, d) in dims.iter().enumerate() {
                init_plain_layer(
                    &mut store,
                    &format!("{}.l{}", Self::member_prefix(m), i + 1),
                    *d,
                    &mut member_rng,
                )?;
            }
        }
        Ok(EnsembleModel {
            spec: spec.clone(),
            likelihood,
            store,
            dims,
            trained: false,
        })
    }

    pub fn members(&self) -> usize {
        self.spec.members
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    /// Parameter names belonging to one member (the unit of training).
    pub fn member_param_names(&self, m: usize) -> Vec<String> {
        let prefix = format!("{}.", Self::member_prefix(m));
        self.store
            .names()
            .filter(|n| n.starts_with(&prefix))
            .cloned()
            .collect()
    }

    /// Deterministic forward through a single member.
    pub fn member_forward<B: Backend>(
        &self,
        ctx: &B,
        m: usize,
        x: f64,
    ) -> Result<(B::T, Option<B::T>)> {
        let p = Self::member_prefix(m);
        let weights: Vec<(B::T, B::T)> = (1..=self.dims.len())
            .map(|i| {
                (
                    ctx.param(&format!("{p}.l{i}.w")),
                    ctx.param(&format!("{p}.l{i}.b")),
                )
            })
            .collect();
        let x_vec = ctx.constant(Tensor::vector(vec![x]));
        base_forward(ctx, &weights, self.spec.activation, self.likelihood, &x_vec)
    }

    /// Mixture over all members; errors until every member is trained.
    pub fn forward_draws<B: Backend>(
        &self,
        ctx: &B,
        x: f64,
        _rng: &mut StreamRng,
    ) -> Result<DrawOutputs<B::T>> {
        if !self.trained {
            return Err(Error::InvalidArg(
                "ensemble has untrained members; train before predicting".into(),
            ));
        }
        let mut means = Vec::with_capacity(self.spec.members);
        let mut sigmas = Vec::with_capacity(self.spec.members);
        for m in 0..self.spec.members {
            let (mean, sigma) = self.member_forward(ctx, m, x)?;
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

    /// Batch prediction; members are deterministic so no noise is shared.
    pub fn predict_batch(
        &self,
        xs: &[f64],
        _k: usize,
        _rng: &mut StreamRng,
    ) -> Result<Vec<(PredictiveMixture, f64)>> {
        if !self.trained {
            return Err(Error::InvalidArg(
                "ensemble has untrained members; train before predicting".into(),
            ));
        }
        let ctx = crate::adiff::RawExec::new(&self.store);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            let mut means = Vec::with_capacity(self.spec.members);
            let mut sigmas = Vec::with_capacity(self.spec.members);
            for m in 0..self.spec.members {
                let (mean, sigma) = self.member_forward(&ctx, m, x)?;
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
