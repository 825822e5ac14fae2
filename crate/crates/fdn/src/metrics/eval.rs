//! Scoring a trained model on a dataset's test splits.

use serde::{Deserialize, Serialize};

use crate::adiff::StreamRng;
use crate::error::{Error, Result};
use crate::models::{predictive_moments, Model};
use crate::tasks::{Dataset, Split};

use super::crps::crps_mixture;
use super::{aurc, mse_var_fit, spearman_rho, EvalSplit, PointEval};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SplitSummary {
    pub mse: f64,
    pub var: f64,
    pub crps: f64,
    /// Within-split rank agreement; absent when undefined (constant input).
    pub rho: Option<f64>,
}

/// Headline calibration metrics. `rho`, `b`, `a` and `aurc` are computed on
/// the pooled ID+OOD test set; deltas are OOD mean minus ID mean.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub rho: Option<f64>,
    pub b: Option<f64>,
    pub a: Option<f64>,
    pub aurc: f64,
    pub d_var: f64,
    pub d_mse: f64,
    pub d_crps: f64,
    pub id: SplitSummary,
    pub ood: SplitSummary,
    pub k_test: usize,
}

fn summarize(points: &[PointEval], which: EvalSplit) -> Result<SplitSummary> {
    let subset: Vec<&PointEval> = points.iter().filter(|p| p.split == which).collect();
    if subset.is_empty() {
        return Err(Error::EmptySplit(which.to_string()));
    }
    let n = subset.len() as f64;
    let mse = subset.iter().map(|p| p.squared_error).sum::<f64>() / n;
    let var = subset.iter().map(|p| p.variance).sum::<f64>() / n;
    let crps = subset.iter().map(|p| p.crps).sum::<f64>() / n;
    let vars: Vec<f64> = subset.iter().map(|p| p.variance).collect();
    let errs: Vec<f64> = subset.iter().map(|p| p.squared_error).collect();
    let rho = spearman_rho(&vars, &errs)
        .ok()
        .and_then(|r| (!r.degenerate).then_some(r.rho));
    Ok(SplitSummary { mse, var, crps, rho })
}

/// Score every ID/OOD test point with a K-draw predictive mixture and
/// aggregate the unified calibration summary.
///
/// Every test point is scored under the same K noise streams (common random
/// numbers): per-draw means then vary smoothly in x and rank statistics are
/// not scrambled by Monte Carlo estimation noise.
pub fn evaluate_model(
    model: &Model,
    dataset: &Dataset,
    k_test: usize,
    rng: &mut StreamRng,
) -> Result<(MetricsReport, Vec<PointEval>)> {
    let mut draws = rng.derive("draws");
    let mut xs = Vec::new();
    let mut meta = Vec::new();
    for i in 0..dataset.len() {
        let which = match dataset.split[i] {
            Split::Train => continue,
            Split::TestId => EvalSplit::Id,
            Split::TestOod => EvalSplit::Ood,
        };
        xs.push(dataset.x[i]);
        meta.push((dataset.y[i], which));
    }
    let mixtures = model.predict_batch(&xs, k_test, &mut draws)?;
    let mut points = Vec::new();
    for ((x, (y, which)), (mix, _kl)) in xs.iter().zip(&meta).zip(&mixtures) {
        let (mean, epistemic, _total) = predictive_moments(mix);
        let err = y - mean;
        points.push(PointEval {
            x: *x,
            squared_error: err * err,
            variance: epistemic,
            crps: crps_mixture(mix, *y),
            split: *which,
        });
    }
    if points.is_empty() {
        return Err(Error::EmptySplit("test".into()));
    }

    let id = summarize(&points, EvalSplit::Id)?;
    let ood = summarize(&points, EvalSplit::Ood)?;

    let vars: Vec<f64> = points.iter().map(|p| p.variance).collect();
    let errs: Vec<f64> = points.iter().map(|p| p.squared_error).collect();
    let rho = spearman_rho(&vars, &errs)?;
    let fit = mse_var_fit(
        &points
            .iter()
            .map(|p| (p.variance, p.squared_error))
            .collect::<Vec<_>>(),
    )
    .ok();
    let rc = aurc(&points)?;

    let report = MetricsReport {
        rho: (!rho.degenerate).then_some(rho.rho),
        b: fit.map(|f| f.1),
        a: fit.map(|f| f.0),
        aurc: rc.aurc,
        d_var: ood.var - id.var,
        d_mse: ood.mse - id.mse,
        d_crps: ood.crps - id.crps,
        id,
        ood,
        k_test,
    };
    Ok((report, points))
}

/// Per-point table as CSV `x,split,mse,var,crps`.
pub fn points_to_csv(points: &[PointEval]) -> String {
    let mut out = String::from("x,split,mse,var,crps\n");
    for p in points {
        out.push_str(&format!(
            "{:.16e},{},{:.16e},{:.16e},{:.16e}\n",
            p.x, p.split, p.squared_error, p.variance, p.crps
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Likelihood, Model, ModelKind, ModelSpec};
    use crate::prob::PriorSpec;
    use crate::tasks::{make_dataset, TaskKind, TaskSpec};

    fn quick_eval() -> (MetricsReport, Vec<PointEval>) {
        let spec = ModelSpec {
            d_hid: 6,
            d_hyper: 3,
            target_params: None,
            ..ModelSpec::for_kind(ModelKind::IcFdn)
        };
        let model = Model::build(
            &spec,
            Likelihood::Homoscedastic,
            PriorSpec::default(),
            &StreamRng::new(3),
        )
        .unwrap();
        let task = TaskSpec {
            n_train: 8,
            n_test_id: 20,
            n_test_ood: 20,
            ..TaskSpec::new(TaskKind::Quadratic)
        };
        let ds = make_dataset(&task, &mut StreamRng::new(7).derive("data")).unwrap();
        evaluate_model(&model, &ds, 16, &mut StreamRng::new(7).derive("eval")).unwrap()
    }

    #[test]
    fn deltas_are_exact_differences_of_stored_means() {
        let (report, points) = quick_eval();
        let mean = |split: EvalSplit, f: &dyn Fn(&PointEval) -> f64| {
            let sel: Vec<f64> = points.iter().filter(|p| p.split == split).map(f).collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        let d_var = mean(EvalSplit::Ood, &|p| p.variance) - mean(EvalSplit::Id, &|p| p.variance);
        let d_mse =
            mean(EvalSplit::Ood, &|p| p.squared_error) - mean(EvalSplit::Id, &|p| p.squared_error);
        let d_crps = mean(EvalSplit::Ood, &|p| p.crps) - mean(EvalSplit::Id, &|p| p.crps);
        assert_eq!(report.d_var.to_bits(), d_var.to_bits());
        assert_eq!(report.d_mse.to_bits(), d_mse.to_bits());
        assert_eq!(report.d_crps.to_bits(), d_crps.to_bits());
    }

    #[test]
    fn point_counts_match_test_splits() {
        let (_, points) = quick_eval();
        assert_eq!(points.len(), 40);
        assert_eq!(points.iter().filter(|p| p.split == EvalSplit::Id).count(), 20);
    }

    #[test]
    fn report_serializes_with_fixed_field_names() {
        let (report, _) = quick_eval();
        let json = serde_json::to_value(&report).unwrap();
        for key in ["rho", "b", "a", "aurc", "d_var", "d_mse", "d_crps"] {
            assert!(json.get(key).is_some(), "missing `{key}`");
        }
    }

    #[test]
    fn hand_built_fixture_matches_hand_computation() {
        // Three points scored from known mixtures, recomputed by hand.
        use crate::metrics::crps_mixture as cm;
        use crate::models::PredictiveMixture;
        let mixes = [
            PredictiveMixture::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap(),
            PredictiveMixture::new(vec![2.0], vec![1.0]).unwrap(),
            PredictiveMixture::new(vec![-1.0, 3.0], vec![1.0, 1.0]).unwrap(),
        ];
        let ys = [0.5, 1.0, 0.0];
        let splits = [EvalSplit::Id, EvalSplit::Id, EvalSplit::Ood];
        let points: Vec<PointEval> = mixes
            .iter()
            .zip(&ys)
            .zip(&splits)
            .map(|((mix, &y), &split)| {
                let (mean, epi, _) = predictive_moments(mix);
                PointEval {
                    x: 0.0,
                    squared_error: (y - mean) * (y - mean),
                    variance: epi,
                    crps: cm(mix, y),
                    split,
                }
            })
            .collect();
        // mixture 1: mean 0.5, epi 0.25, se 0; mixture 2: mean 2, epi 0, se 1;
        // mixture 3: mean 1, epi 4, se 1.
        assert_eq!(points[0].squared_error, 0.0);
        assert_eq!(points[0].variance, 0.25);
        assert_eq!(points[1].variance, 0.0);
        assert_eq!(points[1].squared_error, 1.0);
        assert_eq!(points[2].variance, 4.0);
        assert_eq!(points[2].squared_error, 1.0);

        let id = summarize(&points, EvalSplit::Id).unwrap();
        assert_eq!(id.mse, 0.5);
        assert_eq!(id.var, 0.125);
        let ood = summarize(&points, EvalSplit::Ood).unwrap();
        assert_eq!(ood.mse, 1.0);
        assert_eq!(ood.var, 4.0);
    }
}
