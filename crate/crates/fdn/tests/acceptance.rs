//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Criteria 1-7 are deterministic property checks against independent
//! oracles. Criteria 8-12 score the full benchmark grid (6 models x 3 tasks
//! x seeds 7,8,9 at the default configuration) and check ordinal/band
//! claims on the seed means; the grid is trained once and shared.

use std::sync::OnceLock;

use fdn::adiff::StreamRng;
use fdn::harness::{gradient_battery, train, ExperimentConfig};
use fdn::metrics::{
    aurc, crps_gaussian, crps_mixture, mse_var_fit, normal_cdf, spearman_rho, EvalSplit,
    MetricsReport, PointEval,
};
use fdn::models::{
    count_params, predictive_moments, Likelihood, Model, ModelKind, ModelSpec, PredictiveMixture,
};
use fdn::prob::{gaussian_logpdf, kl_diag_gaussian, DiagGaussian, PriorSpec};
use fdn::tasks::{make_dataset, TaskKind, TaskSpec};

fn verdict(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "[{}] {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

// -- criterion 1 --------------------------------------------------------------

#[test]
fn criterion_1_gradient_suite() {
    let results = gradient_battery(7, 1e-5, 1e-4, 20).unwrap();
    let worst = results
        .iter()
        .max_by(|a, b| a.max_rel_dev.total_cmp(&b.max_rel_dev))
        .unwrap();
    let pass = results.iter().all(|r| r.pass);
    assert!(
        verdict(
            "criterion 1 (gradient suite, rtol 1e-4, 20 instances)",
            pass,
            &format!(
                "{} checks, worst {} at {:.2e}",
                results.len(),
                worst.name,
                worst.max_rel_dev
            ),
        ),
        "gradient checks failed"
    );
}

// -- criterion 2 --------------------------------------------------------------

fn kl_monte_carlo(mu: &[f64], sigma: &[f64], sigma0: f64, n: usize, rng: &mut StreamRng) -> f64 {
    // E_q[log q - log p0] over samples from q.
    let mut acc = 0.0;
    for _ in 0..n {
        let mut log_q = 0.0;
        let mut log_p = 0.0;
        for (&m, &s) in mu.iter().zip(sigma) {
            let theta = m + s * rng.normal();
            log_q += gaussian_logpdf(theta, m, s * s).unwrap();
            log_p += gaussian_logpdf(theta, 0.0, sigma0 * sigma0).unwrap();
        }
        acc += log_q - log_p;
    }
    acc / n as f64
}

#[test]
fn criterion_2_kl_correctness() {
    let mut rng = StreamRng::new(2024);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let dim = 1 + (rng.uniform() * 3.0) as usize;
        let mu: Vec<f64> = (0..dim).map(|_| 2.0 * rng.normal()).collect();
        let sigma: Vec<f64> = (0..dim).map(|_| 0.3 + 1.5 * rng.uniform()).collect();
        let sigma0 = 0.5 + 1.5 * rng.uniform();
        let q = DiagGaussian::new(
            fdn::adiff::Tensor::vector(mu.clone()),
            fdn::adiff::Tensor::vector(sigma.clone()),
        )
        .unwrap();
        let closed = kl_diag_gaussian(&q, &PriorSpec::new(sigma0).unwrap());
        let mc = kl_monte_carlo(&mu, &sigma, sigma0, 1_000_000, &mut rng);
        worst = worst.max((closed - mc).abs());
    }
    let exact = {
        let q = DiagGaussian::new(
            fdn::adiff::Tensor::scalar(1.0),
            fdn::adiff::Tensor::scalar(1.0),
        )
        .unwrap();
        kl_diag_gaussian(&q, &PriorSpec::default())
    };
    let pass = worst <= 1e-2 && exact == 0.5;
    assert!(
        verdict(
            "criterion 2 (KL closed form vs 1e6-sample MC, 1e-2 abs)",
            pass,
            &format!("worst |closed - MC| = {worst:.2e}, KL(N(1,1)||N(0,1)) = {exact}"),
        ),
        "KL mismatch"
    );
}

// -- criterion 3 --------------------------------------------------------------

fn crps_quadrature(mu: f64, sigma: f64, y: f64) -> f64 {
    let simpson = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let n = 40_000;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        s * h / 3.0
    };
    let lo = (mu - 14.0 * sigma).min(y - 14.0 * sigma);
    let hi = (mu + 14.0 * sigma).max(y + 14.0 * sigma);
    let cdf = |t: f64| normal_cdf((t - mu) / sigma);
    simpson(lo, y, &|t| cdf(t) * cdf(t)) + simpson(y, hi, &|t| (cdf(t) - 1.0) * (cdf(t) - 1.0))
}

#[test]
fn criterion_3_crps_correctness() {
    let mut rng = StreamRng::new(3);

    let mut worst_gauss = 0.0f64;
    for _ in 0..5 {
        let mu = 2.0 * rng.normal();
        let sigma = 0.2 + 1.5 * rng.uniform();
        let y = mu + 3.0 * rng.normal();
        let diff = (crps_gaussian(mu, sigma, y).unwrap() - crps_quadrature(mu, sigma, y)).abs();
        worst_gauss = worst_gauss.max(diff);
    }

    // K = 5 mixture against the sample-energy estimator
    // E|Y - y| - (1/2) E|Y - Y'| with 1e6 paired draws.
    let k = 5;
    let means: Vec<f64> = (0..k).map(|_| 2.0 * rng.normal()).collect();
    let vars: Vec<f64> = (0..k).map(|_| 0.2 + rng.uniform()).collect();
    let mix = PredictiveMixture::new(means.clone(), vars.clone()).unwrap();
    let y = 0.4;
    let n = 1_000_000;
    let mut e_abs = 0.0;
    let mut e_pair = 0.0;
    for _ in 0..n {
        let mut draw = |rng: &mut StreamRng| {
            let c = (rng.uniform() * k as f64) as usize;
            means[c] + vars[c].sqrt() * rng.normal()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        e_abs += (a - y).abs() + (b - y).abs();
        e_pair += (a - b).abs();
    }
    let energy = e_abs / (2.0 * n as f64) - 0.5 * e_pair / n as f64;
    let mix_diff = (crps_mixture(&mix, y) - energy).abs();

    let single = PredictiveMixture::new(vec![0.3], vec![0.49]).unwrap();
    let k1_diff = (crps_mixture(&single, -0.2) - crps_gaussian(0.3, 0.7, -0.2).unwrap()).abs();

    let pass = worst_gauss <= 1e-6 && mix_diff <= 1e-3 && k1_diff <= 1e-12;
    assert!(
        verdict(
            "criterion 3 (CRPS: quadrature 1e-6, energy 1e-3, K=1 1e-12)",
            pass,
            &format!("gauss {worst_gauss:.2e}, mixture {mix_diff:.2e}, K=1 {k1_diff:.2e}"),
        ),
        "CRPS mismatch"
    );
}

// -- criterion 4 --------------------------------------------------------------

/// Brute-force AURC: independent stable selection sort plus O(n^2)
/// prefix-mean recomputation.
fn aurc_brute_force(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable selection sort by variance.
    for i in 0..n {
        let mut best = i;
        for j in (i + 1)..n {
            if points[order[j]].0 < points[order[best]].0 {
                best = j;
            }
        }
        let idx = order.remove(best);
        order.insert(i, idx);
    }
    let mut total = 0.0;
    for m in 1..=n {
        let mut sum = 0.0;
        for &idx in order.iter().take(m) {
            sum += points[idx].1;
        }
        total += sum / m as f64;
    }
    total / n as f64
}

#[test]
fn criterion_4_aurc_and_spearman_oracles() {
    let mut rng = StreamRng::new(4);
    let mut aurc_exact = true;
    for _ in 0..100 {
        let n = 1 + (rng.uniform() * 40.0) as usize;
        let raw: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                // Occasional ties in variance exercise the stable order.
                let v = if rng.uniform() < 0.2 {
                    1.0
                } else {
                    rng.uniform() * 3.0
                };
                (v, rng.uniform() * 2.0)
            })
            .collect();
        let points: Vec<PointEval> = raw
            .iter()
            .map(|&(variance, squared_error)| PointEval {
                x: 0.0,
                squared_error,
                variance,
                crps: 0.0,
                split: EvalSplit::Id,
            })
            .collect();
        let fast = aurc(&points).unwrap().aurc;
        let brute = aurc_brute_force(&raw);
        if fast.to_bits() != brute.to_bits() {
            aurc_exact = false;
        }
    }

    // Spearman against the no-ties rank formula.
    let mut spearman_ok = true;
    for _ in 0..50 {
        let n = 4 + (rng.uniform() * 30.0) as usize;
        let a: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let rank = |v: &[f64]| -> Vec<f64> {
            let mut r = vec![0.0; v.len()];
            for (pos, x) in v.iter().enumerate() {
                r[pos] = 1.0 + v.iter().filter(|o| **o < *x).count() as f64;
            }
            r
        };
        let (ra, rb) = (rank(&a), rank(&b));
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
        let nn = n as f64;
        let formula = 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
        if (spearman_rho(&a, &b).unwrap().rho - formula).abs() > 1e-12 {
            spearman_ok = false;
        }
    }
    // Average-rank convention with ties, checked by hand:
    // a = [1,2,2,3] -> ranks [1, 2.5, 2.5, 4].
    let r = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let expected = {
        let ra = [1.0, 2.5, 2.5, 4.0];
        let rb = [1.0, 2.0, 3.0, 4.0];
        let ma = 2.5;
        let mb = 2.5;
        let num: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let da: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>().sqrt();
        let db: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>().sqrt();
        num / (da * db)
    };
    let ties_ok = (r.rho - expected).abs() < 1e-12;

    let pass = aurc_exact && spearman_ok && ties_ok;
    assert!(
        verdict(
            "criterion 4 (AURC brute-force exact; Spearman rank formula + ties)",
            pass,
            &format!("aurc exact: {aurc_exact}, formula: {spearman_ok}, ties: {ties_ok}"),
        ),
        "rank-metric oracle mismatch"
    );
}

// -- criterion 5 --------------------------------------------------------------

#[test]
fn criterion_5_variance_decomposition() {
    let mut rng = StreamRng::new(5);
    let mut worst_rel = 0.0f64;
    for _ in 0..3 {
        let k = 3 + (rng.uniform() * 60.0) as usize;
        let means: Vec<f64> = (0..k).map(|_| 2.0 * rng.normal()).collect();
        let vars: Vec<f64> = (0..k).map(|_| 0.1 + rng.uniform()).collect();
        let mix = PredictiveMixture::new(means.clone(), vars.clone()).unwrap();
        let (_, _, total) = predictive_moments(&mix);
        let n = 1_000_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let c = (rng.uniform() * k as f64) as usize;
            let y = means[c] + vars[c].sqrt() * rng.normal();
            s += y;
            s2 += y * y;
        }
        let mean = s / n as f64;
        let sampled = s2 / n as f64 - mean * mean;
        worst_rel = worst_rel.max((sampled - total).abs() / total);
    }
    let pass = worst_rel <= 0.02;
    assert!(
        verdict(
            "criterion 5 (law of total variance vs 1e6 draws, 2%)",
            pass,
            &format!("worst relative deviation {worst_rel:.4}"),
        ),
        "variance decomposition mismatch"
    );
}

// -- criterion 6 --------------------------------------------------------------

#[test]
fn criterion_6_budget_reproduction() {
    let expected = [
        (ModelKind::MlpDropout, 1000),
        (ModelKind::Bayes, 998),
        (ModelKind::IcFdn, 1004),
        (ModelKind::LpFdn, 1011),
    ];
    let mut detail = String::new();
    let mut pass = true;
    for (kind, want) in expected {
        let got = count_params(&ModelSpec::for_kind(kind), Likelihood::Homoscedastic)
            .unwrap()
            .count;
        detail.push_str(&format!("{kind}={got} "));
        pass &= got == want;
    }
    assert!(
        verdict("criterion 6 (parameter budgets 1000/998/1004/1011)", pass, detail.trim()),
        "budget mismatch"
    );
}

// -- criterion 7 --------------------------------------------------------------

#[test]
fn criterion_7_determinism() {
    let config = ExperimentConfig {
        epochs: 30,
        ..ExperimentConfig::default()
    };
    let a = train(&config, 7).unwrap();
    let b = train(&config, 7).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let traces_equal = bits(&a.record.loss_trace) == bits(&b.record.loss_trace)
        && bits(&a.record.val_trace) == bits(&b.record.val_trace);
    let metrics_equal = serde_json::to_string(&a.record.metrics).unwrap()
        == serde_json::to_string(&b.record.metrics).unwrap();
    let pass = traces_equal && metrics_equal;
    assert!(
        verdict(
            "criterion 7 (bit-identical loss traces and metrics)",
            pass,
            &format!("traces: {traces_equal}, metrics: {metrics_equal}"),
        ),
        "nondeterministic training"
    );
}

// -- criteria 8-11: the shared benchmark grid ---------------------------------

struct GridCell {
    rho: Option<f64>,
    b: Option<f64>,
    a: Option<f64>,
    d_var: f64,
    d_mse: f64,
}

struct Grid {
    cells: Vec<(TaskKind, ModelKind, GridCell)>,
}

impl Grid {
    fn cell(&self, task: TaskKind, model: ModelKind) -> &GridCell {
        &self
            .cells
            .iter()
            .find(|(t, m, _)| *t == task && *m == model)
            .expect("cell")
            .2
    }
}

fn mean_opt(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = vals.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn benchmark_grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let base = ExperimentConfig::default();
        let seeds = [7u64, 8, 9];
        let mut cells = Vec::new();
        for task in TaskKind::ALL {
            for kind in ModelKind::BENCHMARK {
                let mut reports: Vec<MetricsReport> = Vec::new();
                for &seed in &seeds {
                    let config = ExperimentConfig {
                        task: TaskSpec::new(task),
                        model: ModelSpec::for_kind(kind),
                        seeds: vec![seed],
                        ..base.clone()
                    };
                    let run = train(&config, seed)
                        .unwrap_or_else(|e| panic!("{kind} on {task} seed {seed}: {e}"));
                    reports.push(run.record.metrics);
                }
                let mean = |f: &dyn Fn(&MetricsReport) -> f64| {
                    reports.iter().map(f).sum::<f64>() / reports.len() as f64
                };
                cells.push((
                    task,
                    kind,
                    GridCell {
                        rho: mean_opt(reports.iter().map(|r| r.rho)),
                        b: mean_opt(reports.iter().map(|r| r.b)),
                        a: mean_opt(reports.iter().map(|r| r.a)),
                        d_var: mean(&|r| r.d_var),
                        d_mse: mean(&|r| r.d_mse),
                    },
                ));
            }
        }
        Grid { cells }
    })
}

fn fmt3(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

#[test]
fn criterion_8_quadratic_calibration_bands() {
    let grid = benchmark_grid();
    let mut pass = true;
    let mut detail = String::new();
    for kind in [ModelKind::IcFdn, ModelKind::LpFdn, ModelKind::GaussHyper] {
        let c = grid.cell(TaskKind::Quadratic, kind);
        let ok = c.b.is_some_and(|b| (0.7..=1.6).contains(&b))
            && c.a.is_some_and(|a| a.abs() <= 0.1)
            && c.rho.is_some_and(|r| r >= 0.95);
        detail.push_str(&format!(
            "{kind}: b={} a={} rho={} | ",
            fmt3(c.b),
            fmt3(c.a),
            fmt3(c.rho)
        ));
        pass &= ok;
    }
    for kind in [ModelKind::MlpDropout, ModelKind::DeepEnsemble, ModelKind::Bayes] {
        let c = grid.cell(TaskKind::Quadratic, kind);
        let ok = c.b.is_some_and(|b| b >= 5.0);
        detail.push_str(&format!("{kind}: b={} | ", fmt3(c.b)));
        pass &= ok;
    }
    assert!(
        verdict(
            "criterion 8 (quadratic: FDN/GH b in [0.7,1.6], |a|<=0.1, rho>=0.95; baselines b>=5)",
            pass,
            &detail,
        ),
        "quadratic calibration bands not met"
    );
}

#[test]
fn criterion_9_step_bands() {
    let grid = benchmark_grid();
    let mut pass = true;
    let mut detail = String::new();
    for kind in [ModelKind::IcFdn, ModelKind::LpFdn] {
        let c = grid.cell(TaskKind::Step, kind);
        let ok = c.rho.is_some_and(|r| r >= 0.8) && c.b.is_some_and(|b| (0.7..=2.0).contains(&b));
        detail.push_str(&format!("{kind}: rho={} b={} | ", fmt3(c.rho), fmt3(c.b)));
        pass &= ok;
    }
    let bayes = grid.cell(TaskKind::Step, ModelKind::Bayes);
    detail.push_str(&format!("bayes: b={}", fmt3(bayes.b)));
    pass &= bayes.b.is_some_and(|b| b > 20.0);
    assert!(
        verdict(
            "criterion 9 (step: FDN rho>=0.8, b in [0.7,2.0]; Bayes b>20)",
            pass,
            &detail,
        ),
        "step bands not met"
    );
}

#[test]
fn criterion_10_sine_bands() {
    let grid = benchmark_grid();
    let mut pass = true;
    let mut detail = String::new();
    for kind in [ModelKind::IcFdn, ModelKind::LpFdn] {
        let c = grid.cell(TaskKind::Sine, kind);
        // "d_mse >> d_var" pinned as a factor of 5.
        let ok = c.rho.is_some_and(|r| r >= 0.9)
            && c.b.is_some_and(|b| b > 10.0)
            && c.d_mse > 5.0 * c.d_var;
        detail.push_str(&format!(
            "{kind}: rho={} b={} dMSE={:.2} dVar={:.2} | ",
            fmt3(c.rho),
            fmt3(c.b),
            c.d_mse,
            c.d_var
        ));
        pass &= ok;
    }
    let ens = grid.cell(TaskKind::Sine, ModelKind::DeepEnsemble);
    detail.push_str(&format!("ensemble: rho={}", fmt3(ens.rho)));
    pass &= ens.rho.is_some_and(|r| r <= 0.6);
    assert!(
        verdict(
            "criterion 10 (sine: FDN rho>=0.9, b>10, dMSE>>dVar; ensemble rho<=0.6)",
            pass,
            &detail,
        ),
        "sine bands not met"
    );
}

#[test]
fn criterion_11_shift_direction() {
    let grid = benchmark_grid();
    let mut pass = true;
    let mut failures = String::new();
    for task in TaskKind::ALL {
        for kind in ModelKind::BENCHMARK {
            let c = grid.cell(task, kind);
            if !(c.d_var > 0.0 && c.d_mse > 0.0) {
                pass = false;
                failures.push_str(&format!(
                    "{kind}/{task}: dVar={:.4} dMSE={:.4} | ",
                    c.d_var, c.d_mse
                ));
            }
        }
    }
    assert!(
        verdict(
            "criterion 11 (dVar > 0 and dMSE > 0 for every model on every task)",
            pass,
            if failures.is_empty() { "all positive" } else { &failures },
        ),
        "shift direction violated"
    );
}

// -- criterion 12 --------------------------------------------------------------

#[test]
fn criterion_12_degenerate_limit() {
    // Clamping every posterior rho to -20 pins sigma at the floor; the
    // stochastic forward must then match the deterministic hypernetwork
    // (same weights, mean path) within the residual floor noise.
    let mut spec = ModelSpec::for_kind(ModelKind::IcFdn);
    spec.rho_clamp = Some(-20.0);
    let prior = PriorSpec::default();
    let stochastic = Model::build(&spec, Likelihood::Homoscedastic, prior, &StreamRng::new(7))
        .unwrap();

    let mut det_spec = ModelSpec::for_kind(ModelKind::DetHyper);
    det_spec.rho_clamp = Some(-20.0);
    let det = Model::from_parts(
        &det_spec,
        Likelihood::Homoscedastic,
        prior,
        stochastic.store().clone(),
    )
    .unwrap();

    let task = TaskSpec::new(TaskKind::Quadratic);
    let dataset = make_dataset(&task, &mut StreamRng::new(7).derive("data/quadratic")).unwrap();
    let xs: Vec<f64> = dataset.x.clone();

    let mixes = stochastic
        .predict_batch(&xs, 100, &mut StreamRng::new(11))
        .unwrap();
    let det_mixes = det.predict_batch(&xs, 1, &mut StreamRng::new(11)).unwrap();

    let mut max_var = 0.0f64;
    let mut max_mean_diff = 0.0f64;
    let mut max_sq_err_diff = 0.0f64;
    for (i, ((mix, _), (dmix, _))) in mixes.iter().zip(&det_mixes).enumerate() {
        let (mean, epi, _) = predictive_moments(mix);
        max_var = max_var.max(epi);
        max_mean_diff = max_mean_diff.max((mean - dmix.means[0]).abs());
        let y = dataset.y[i];
        let se = (y - mean) * (y - mean);
        let dse = (y - dmix.means[0]) * (y - dmix.means[0]);
        max_sq_err_diff = max_sq_err_diff.max((se - dse).abs());
    }
    let pass = max_var <= 1e-4 && max_mean_diff <= 0.05 && max_sq_err_diff <= 0.05;
    assert!(
        verdict(
            "criterion 12 (rho -> -20 collapses to the deterministic hypernetwork)",
            pass,
            &format!(
                "max epistemic var {max_var:.2e}, max |mean diff| {max_mean_diff:.2e}, max |sq err diff| {max_sq_err_diff:.2e}"
            ),
        ),
        "degenerate limit violated"
    );
}

// -- sanity on shared fixtures -------------------------------------------------

#[test]
fn mse_var_fit_recovers_the_ideal_line() {
    // Supporting check for the calibration criteria: exact MSE = Var data
    // recovers (a, b) = (0, 1) to machine precision.
    let pts: Vec<(f64, f64)> = (1..50).map(|i| (i as f64 * 0.1, i as f64 * 0.1)).collect();
    let (a, b) = mse_var_fit(&pts).unwrap();
    assert!(a.abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
}
