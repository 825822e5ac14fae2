//! Adam with bias correction. Moment buffers persist across steps and are
//! keyed by parameter name, so a step may cover any subset of the store.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::params::ParamStore;
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over every parameter named in `grads`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, grad) in grads {
            if !grad.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
            let param = store.get_mut(name)?;
            assert_eq!(
                param.shape(),
                grad.shape(),
                "gradient shape mismatch for `{name}`"
            );
            let n = param.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let p = param.data_mut();
            for i in 0..n {
                let g = grad.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(v)).unwrap();
        s
    }

    fn grad(v: f64) -> BTreeMap<String, Tensor> {
        let mut g = BTreeMap::new();
        g.insert("p".to_string(), Tensor::scalar(v));
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = scalar_store(1.5);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut store, &grad(0.0)).unwrap();
        assert_eq!(store.get("p").unwrap().item(), 1.5);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // Bias correction makes m_hat = v_hat = 1 at t = 1, so the step is
        // lr / (1 + eps), i.e. ~1e-3.
        let mut store = scalar_store(0.0);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut store, &grad(1.0)).unwrap();
        let p = store.get("p").unwrap().item();
        assert!((p - (-1e-3)).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut store = scalar_store(0.0);
        let mut opt = Adam::new(1e-3);
        let mut prev = 0.0;
        for _ in 0..2 {
            opt.step(&mut store, &grad(1.0)).unwrap();
            let p = store.get("p").unwrap().item();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut store = scalar_store(0.0);
        let mut opt = Adam::new(1e-3);
        let err = opt.step(&mut store, &grad(f64::NAN)).unwrap_err();
        assert!(err.to_string().contains("p"));
    }

    #[test]
    fn moments_persist_across_calls() {
        let mut a = scalar_store(0.0);
        let mut b = scalar_store(0.0);
        let mut opt_a = Adam::new(1e-3);
        let mut opt_b = Adam::new(1e-3);
        // Two steps in one optimizer vs two fresh optimizers differ because
        // the second step sees accumulated moments and t = 2.
        opt_a.step(&mut a, &grad(1.0)).unwrap();
        opt_a.step(&mut a, &grad(0.5)).unwrap();
        opt_b.step(&mut b, &grad(1.0)).unwrap();
        let mut opt_c = Adam::new(1e-3);
        opt_c.step(&mut b, &grad(0.5)).unwrap();
        assert_ne!(
            a.get("p").unwrap().item().to_bits(),
            b.get("p").unwrap().item().to_bits()
        );
    }
}
