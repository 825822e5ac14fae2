//! Aggregation of stored runs into per-task tables (seed means) and SVG
//! figures: risk-coverage curves, MSE-variance scatters (pooled and per
//! split), and ID -> OOD delta bars.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{aurc, EvalSplit, MetricsReport, PointEval};
use crate::plot::{BarChart, Figure, SeriesKind};

use super::suite::Manifest;

struct LoadedRun {
    model: String,
    task: String,
    metrics: MetricsReport,
    points: Vec<PointEval>,
}

fn parse_points_csv(text: &str) -> Result<Vec<PointEval>> {
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::InvalidArg(format!("bad points row `{line}`")));
        }
        let split = match fields[1] {
            "id" => EvalSplit::Id,
            "ood" => EvalSplit::Ood,
            other => return Err(Error::InvalidArg(format!("bad split `{other}`"))),
        };
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidArg(format!("bad float `{s}`")))
        };
        out.push(PointEval {
            x: num(fields[0])?,
            split,
            squared_error: num(fields[2])?,
            variance: num(fields[3])?,
            crps: num(fields[4])?,
        });
    }
    Ok(out)
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => String::new(),
    }
}

/// Build `report/` under `out_dir` from the suite manifest: one CSV per task
/// with the unified columns, plus the figure set.
pub fn report(out_dir: &Path) -> Result<()> {
    let manifest = Manifest::load(out_dir)?;
    let report_dir = out_dir.join("report");
    std::fs::create_dir_all(&report_dir)?;

    let mut runs = Vec::new();
    for status in &manifest.runs {
        if status.status == "failed" {
            continue;
        }
        let metrics: MetricsReport = serde_json::from_str(&std::fs::read_to_string(
            status.dir.join("metrics.json"),
        )?)?;
        let points = parse_points_csv(&std::fs::read_to_string(status.dir.join("points.csv"))?)?;
        runs.push(LoadedRun {
            model: status.model.clone(),
            task: status.task.clone(),
            metrics,
            points,
        });
    }
    if runs.is_empty() {
        return Err(Error::InvalidArg("no completed runs to report".into()));
    }

    // Group by task, keeping first-seen task and model order.
    let mut task_order: Vec<String> = Vec::new();
    for run in &runs {
        if !task_order.contains(&run.task) {
            task_order.push(run.task.clone());
        }
    }

    for task in &task_order {
        let task_runs: Vec<&LoadedRun> = runs.iter().filter(|r| &r.task == task).collect();
        let mut model_order: Vec<String> = Vec::new();
        for run in &task_runs {
            if !model_order.contains(&run.model) {
                model_order.push(run.model.clone());
            }
        }
        let by_model: BTreeMap<&String, Vec<&&LoadedRun>> = model_order
            .iter()
            .map(|m| (m, task_runs.iter().filter(|r| &r.model == m).collect()))
            .collect();

        // -- unified table -------------------------------------------------
        let mut csv = String::from("model,rho,b,a,aurc,d_var,d_mse,d_crps,rho_id,rho_ood\n");
        for model in &model_order {
            let group = &by_model[model];
            let m = |f: &dyn Fn(&MetricsReport) -> f64| mean(group.iter().map(|r| f(&r.metrics)));
            let mo = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
                mean_opt(group.iter().map(|r| f(&r.metrics)))
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                model,
                cell(mo(&|r| r.rho)),
                cell(mo(&|r| r.b)),
                cell(mo(&|r| r.a)),
                cell(Some(m(&|r| r.aurc))),
                cell(Some(m(&|r| r.d_var))),
                cell(Some(m(&|r| r.d_mse))),
                cell(Some(m(&|r| r.d_crps))),
                cell(mo(&|r| r.id.rho)),
                cell(mo(&|r| r.ood.rho)),
            ));
        }
        std::fs::write(report_dir.join(format!("{task}.csv")), csv)?;

        // -- risk-coverage curves (risk averaged across seeds) ---------------
        let mut rc_fig = Figure::new(&format!("{task}: risk-coverage"), "coverage", "risk");
        for model in &model_order {
            let group = &by_model[model];
            let curves: Vec<Vec<(f64, f64)>> = group
                .iter()
                .map(|r| aurc(&r.points).map(|rc| rc.curve))
                .collect::<Result<_>>()?;
            let n = curves.iter().map(|c| c.len()).min().unwrap_or(0);
            let mean_curve: Vec<(f64, f64)> = (0..n)
                .map(|i| {
                    let cov = curves[0][i].0;
                    let risk = mean(curves.iter().map(|c| c[i].1));
                    (cov, risk)
                })
                .collect();
            rc_fig.add(model, SeriesKind::Line, mean_curve);
        }
        std::fs::write(report_dir.join(format!("{task}_rc.svg")), rc_fig.render())?;

        // -- MSE-variance scatters ------------------------------------------
        let scatter = |name: &str, filter: Option<EvalSplit>| -> Figure {
            let title = match filter {
                None => format!("{task}: MSE vs predicted variance (pooled)"),
                Some(EvalSplit::Id) => format!("{task}: MSE vs predicted variance (ID)"),
                Some(EvalSplit::Ood) => format!("{task}: MSE vs predicted variance (OOD)"),
            };
            let _ = name;
            let mut fig = Figure::new(&title, "predicted variance", "squared error")
                .log_log()
                .with_diagonal();
            for model in &model_order {
                let pts: Vec<(f64, f64)> = by_model[model]
                    .iter()
                    .flat_map(|r| r.points.iter())
                    .filter(|p| filter.map(|f| p.split == f).unwrap_or(true))
                    .map(|p| (p.variance, p.squared_error))
                    .collect();
                fig.add(model, SeriesKind::Scatter, pts);
            }
            fig
        };
        std::fs::write(
            report_dir.join(format!("{task}_scatter.svg")),
            scatter("pooled", None).render(),
        )?;
        std::fs::write(
            report_dir.join(format!("{task}_scatter_id.svg")),
            scatter("id", Some(EvalSplit::Id)).render(),
        )?;
        std::fs::write(
            report_dir.join(format!("{task}_scatter_ood.svg")),
            scatter("ood", Some(EvalSplit::Ood)).render(),
        )?;

        // -- delta bars ------------------------------------------------------
        let bars = BarChart {
            title: format!("{task}: OOD - ID deltas"),
            groups: model_order.clone(),
            series: vec![
                (
                    "d_mse".into(),
                    model_order
                        .iter()
                        .map(|m| mean(by_model[m].iter().map(|r| r.metrics.d_mse)))
                        .collect(),
                ),
                (
                    "d_var".into(),
                    model_order
                        .iter()
                        .map(|m| mean(by_model[m].iter().map(|r| r.metrics.d_var)))
                        .collect(),
                ),
                (
                    "d_crps".into(),
                    model_order
                        .iter()
                        .map(|m| mean(by_model[m].iter().map(|r| r.metrics.d_crps)))
                        .collect(),
                ),
            ],
        };
        std::fs::write(
            report_dir.join(format!("deltas_{task}.svg")),
            bars.render(),
        )?;
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ExperimentConfig, SuiteConfig};
    use crate::harness::suite::run_suite;
    use crate::models::{ModelKind, ModelSpec};
    use crate::tasks::{TaskKind, TaskSpec};

    #[test]
    fn report_emits_tables_and_figures() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = ExperimentConfig::default();
        base.epochs = 2;
        base.k_val = 4;
        base.k_test = 4;
        let mut ic = ModelSpec::for_kind(ModelKind::IcFdn);
        ic.d_hid = 4;
        ic.d_hyper = 2;
        ic.target_params = None;
        let suite = SuiteConfig {
            base,
            models: vec![ic],
            tasks: vec![TaskSpec {
                n_train: 16,
                n_test_id: 10,
                n_test_ood: 10,
                ..TaskSpec::new(TaskKind::Step)
            }],
            seeds: vec![7, 8],
        };
        run_suite(&suite, dir.path(), 1).unwrap();
        report(dir.path()).unwrap();

        let rd = dir.path().join("report");
        let csv = std::fs::read_to_string(rd.join("step.csv")).unwrap();
        assert!(csv.starts_with("model,rho,b,a,aurc,d_var,d_mse,d_crps"));
        assert_eq!(csv.lines().count(), 2);
        for f in [
            "step_rc.svg",
            "step_scatter.svg",
            "step_scatter_id.svg",
            "step_scatter_ood.svg",
            "deltas_step.svg",
        ] {
            assert!(rd.join(f).exists(), "{f} missing");
        }
    }

    #[test]
    fn points_roundtrip_through_csv() {
        let pts = vec![
            PointEval {
                x: 0.25,
                squared_error: 1.5,
                variance: 0.75,
                crps: 0.3,
                split: EvalSplit::Id,
            },
            PointEval {
                x: -3.5,
                squared_error: 4.0,
                variance: 2.0,
                crps: 0.9,
                split: EvalSplit::Ood,
            },
        ];
        let csv = crate::metrics::points_to_csv(&pts);
        let parsed = parse_points_csv(&csv).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].x.to_bits(), pts[0].x.to_bits());
        assert_eq!(parsed[1].variance.to_bits(), pts[1].variance.to_bits());
        assert_eq!(parsed[1].split, EvalSplit::Ood);
    }
}
