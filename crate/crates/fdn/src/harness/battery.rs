//! Standard gradient-check battery: every differentiable tape operation and
//! every training objective against central finite differences, on
//! randomized instances with frozen noise.

use crate::adiff::{grad_check, Backend, GradCheckReport, ParamStore, StreamRng, Tensor};
use crate::error::Result;
use crate::models::{Likelihood, Model, ModelKind, ModelSpec};
use crate::prob::{
    beta_elbo_node, gaussian_loglik_fixed_var, gaussian_loglik_learned_var, iwae_node,
    kl_diag_node, mean_of, PriorSpec, SIGMA_FLOOR,
};

#[derive(Debug)]
pub struct BatteryResult {
    pub name: String,
    pub instances: usize,
    pub max_rel_dev: f64,
    pub pass: bool,
}

fn merge(name: &str, reports: Vec<GradCheckReport>) -> BatteryResult {
    let max_rel_dev = reports.iter().map(|r| r.max_rel_dev()).fold(0.0, f64::max);
    BatteryResult {
        name: name.to_string(),
        instances: reports.len(),
        pass: reports.iter().all(|r| r.pass()),
        max_rel_dev,
    }
}

/// Random store with one vector and one matrix parameter. `positive` shifts
/// values away from zero (for log/div domains and the relu kink).
fn random_store(rng: &mut StreamRng, positive: bool) -> ParamStore {
    let mut store = ParamStore::new();
    let gen = |rng: &mut StreamRng, n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v = rng.normal();
                if positive {
                    0.3 + v.abs()
                } else {
                    // Keep away from relu/abs kinks.
                    v + 0.2 * v.signum()
                }
            })
            .collect()
    };
    let v = gen(rng, 4);
    let m = gen(rng, 12);
    store.insert("v", Tensor::vector(v)).unwrap();
    store.insert("m", Tensor::matrix(3, 4, m)).unwrap();
    store
}

type LossFn = for<'t> fn(&crate::adiff::TapeExec<'t>) -> Result<crate::adiff::Value>;

fn op_cases() -> Vec<(&'static str, bool, LossFn)> {
    vec![
        ("add", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.add(&v, &c.mul_scalar(&v, 0.5)))))
        }),
        ("sub", false, |c| {
            let v = c.param("v");
            let w = c.mul_scalar(&v, -0.3);
            Ok(c.sum(&c.square(&c.sub(&v, &w))))
        }),
        ("mul", false, |c| {
            let v = c.param("v");
            let w = c.add_scalar(&v, 1.5);
            Ok(c.sum(&c.mul(&v, &w)))
        }),
        ("div", true, |c| {
            let v = c.param("v");
            let w = c.add_scalar(&v, 2.0);
            Ok(c.sum(&c.div(&v, &w)))
        }),
        ("neg", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.neg(&v))))
        }),
        ("add_scalar", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.add_scalar(&v, 0.7))))
        }),
        ("mul_scalar", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.mul_scalar(&v, -1.3))))
        }),
        ("matmul_vec", false, |c| {
            let m = c.param("m");
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.matmul(&m, &v))))
        }),
        ("matmul_mat", false, |c| {
            let m = c.param("m");
            let mt = c.reshape(&m, &[4, 3]);
            Ok(c.sum(&c.square(&c.matmul(&m, &mt))))
        }),
        ("tanh", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.tanh(&v))))
        }),
        ("relu", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.relu(&v))))
        }),
        ("softplus", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.softplus(&v))))
        }),
        ("exp", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.exp(&c.mul_scalar(&v, 0.5))))
        }),
        ("log", true, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.log(&v))))
        }),
        ("square", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&v)))
        }),
        ("sum", false, |c| {
            let v = c.param("v");
            Ok(c.square(&c.sum(&v)))
        }),
        ("mean", false, |c| {
            let m = c.param("m");
            Ok(c.square(&c.mean(&m)))
        }),
        ("slice", false, |c| {
            let v = c.param("v");
            Ok(c.sum(&c.square(&c.slice(&v, 1, 2))))
        }),
        ("reshape", false, |c| {
            let m = c.param("m");
            let v = c.reshape(&m, &[12]);
            Ok(c.sum(&c.square(&v)))
        }),
    ]
}

/// Run the full battery. `instances` randomized stores per case.
pub fn gradient_battery(
    seed: u64,
    eps: f64,
    rtol: f64,
    instances: usize,
) -> Result<Vec<BatteryResult>> {
    let mut results = Vec::new();
    let root = StreamRng::new(seed);

    for (name, positive, loss) in op_cases() {
        let mut rng = root.derive(&format!("op.{name}"));
        let mut reports = Vec::with_capacity(instances);
        for _ in 0..instances {
            let store = random_store(&mut rng, positive);
            reports.push(grad_check(&store, eps, rtol, loss)?);
        }
        results.push(merge(&format!("op/{name}"), reports));
    }

    // beta-ELBO over a reparameterized diagonal Gaussian.
    let mut rng = root.derive("loss.beta_elbo");
    let mut reports = Vec::with_capacity(instances);
    for i in 0..instances {
        let mut store = ParamStore::new();
        store
            .insert("mu", rng.normal_tensor(&[3]))
            .and_then(|_| store.insert("rho", rng.normal_tensor(&[3])))
            .and_then(|_| store.insert("m", rng.normal_tensor(&[1])))?;
        let freeze = 1000 + i as u64;
        reports.push(grad_check(&store, eps, rtol, move |c| {
            let mut noise = StreamRng::new(freeze);
            let mu = c.param("mu");
            let rho = c.param("rho");
            let sigma = c.add_scalar(&c.softplus(&rho), SIGMA_FLOOR);
            let kl = kl_diag_node(c, &mu, &sigma, 1.0);
            // Two reparameterized draws through a quadratic likelihood.
            let lls: Vec<_> = (0..2)
                .map(|_| {
                    let z = c.constant(noise.normal_tensor(&[3]));
                    let theta = c.add(&mu, &c.mul(&sigma, &z));
                    let pred = c.add(&c.mean(&theta), &c.mean(&c.param("m")));
                    let pred = c.reshape(&pred, &[1]);
                    gaussian_loglik_fixed_var(c, 0.4, &pred, 1.0)
                })
                .collect();
            Ok(beta_elbo_node(c, &lls, Some(&kl), 0.01))
        })?);
    }
    results.push(merge("loss/beta_elbo", reports));

    // IWAE over the same family, ratios included.
    let mut rng = root.derive("loss.iwae");
    let mut reports = Vec::with_capacity(instances);
    for i in 0..instances {
        let mut store = ParamStore::new();
        store
            .insert("mu", rng.normal_tensor(&[2]))
            .and_then(|_| store.insert("rho", rng.normal_tensor(&[2])))?;
        let freeze = 2000 + i as u64;
        reports.push(grad_check(&store, eps, rtol, move |c| {
            let mut noise = StreamRng::new(freeze);
            let mu = c.param("mu");
            let rho = c.param("rho");
            let sigma = c.add_scalar(&c.softplus(&rho), SIGMA_FLOOR);
            let mut lls = Vec::new();
            let mut ratios = Vec::new();
            for _ in 0..3 {
                let z_t = noise.normal_tensor(&[2]);
                let z_sq: f64 = z_t.data().iter().map(|z| z * z).sum();
                let z = c.constant(z_t);
                let theta = c.add(&mu, &c.mul(&sigma, &z));
                let pred = c.reshape(&c.mean(&theta), &[1]);
                lls.push(gaussian_loglik_fixed_var(c, -0.2, &pred, 1.0));
                let log_q = c.add_scalar(
                    &c.neg(&c.sum(&c.log(&sigma))),
                    -0.5 * z_sq - crate::prob::LN_2PI,
                );
                let log_p0 = c.add_scalar(
                    &c.mul_scalar(&c.sum(&c.square(&theta)), -0.5),
                    -crate::prob::LN_2PI,
                );
                ratios.push(c.sub(&log_p0, &log_q));
            }
            Ok(iwae_node(c, &lls, &ratios))
        })?);
    }
    results.push(merge("loss/iwae", reports));

    // Heteroscedastic NLL with a learned scale.
    let mut rng = root.derive("loss.hetero");
    let mut reports = Vec::with_capacity(instances);
    for _ in 0..instances {
        let mut store = ParamStore::new();
        store
            .insert("m", rng.normal_tensor(&[1]))
            .and_then(|_| store.insert("r", rng.normal_tensor(&[1])))?;
        reports.push(grad_check(&store, eps, rtol, |c| {
            let m = c.param("m");
            let sigma = c.add_scalar(&c.softplus(&c.param("r")), SIGMA_FLOOR);
            let lls = [
                gaussian_loglik_learned_var(c, 0.9, &m, &sigma),
                gaussian_loglik_learned_var(c, -0.4, &m, &sigma),
            ];
            Ok(c.neg(&mean_of(c, &lls)))
        })?);
    }
    results.push(merge("loss/hetero_nll", reports));

    // End-to-end model objectives, frozen draws.
    for (name, kind) in [
        ("model/ic_fdn", ModelKind::IcFdn),
        ("model/lp_fdn", ModelKind::LpFdn),
        ("model/bayes", ModelKind::Bayes),
        ("model/gauss_hyper", ModelKind::GaussHyper),
    ] {
        let mut spec = ModelSpec::for_kind(kind);
        spec.d_hid = 2;
        spec.d_hyper = 2;
        spec.d_latent = if kind == ModelKind::GaussHyper { 2 } else { 0 };
        spec.target_params = None;
        let model = Model::build(
            &spec,
            Likelihood::Homoscedastic,
            PriorSpec::default(),
            &StreamRng::new(seed ^ 0xabc),
        )?;
        let store = model.store().clone();
        let report = grad_check(&store, eps, rtol, move |c| {
            let mut noise = StreamRng::new(4321);
            let draws = model.forward_draws(c, 0.45, 2, &mut noise, false)?;
            let lls: Vec<_> = draws
                .means
                .iter()
                .map(|m| gaussian_loglik_fixed_var(c, -0.8, m, 1.0))
                .collect();
            Ok(beta_elbo_node(c, &lls, draws.kl.as_ref(), 0.01))
        })?;
        results.push(merge(name, vec![report]));
    }

    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_at_default_tolerances() {
        let results = gradient_battery(7, 1e-5, 1e-4, 3).unwrap();
        assert!(results.len() >= 22);
        for r in &results {
            assert!(r.pass, "{} failed with max dev {}", r.name, r.max_rel_dev);
        }
    }
}
