use lumirec_core::eval::{run_cold_start, ColdStartParams, ColdStartReport};
use lumirec_core::seed::derive;

use super::{clusters_path, features_path, load_clusters, load_features, results_path, row_clusters, update_results, Results};
use crate::error::CliError;
use crate::workspace::Workspace;

pub fn run(ws: &Workspace, clustered: bool) -> Result<(), CliError> {
    let cfg = &ws.config;
    if clustered {
        ws.require("cluster", clusters_path(ws))?;
    }
    let (rows, data) = load_features(ws)?;
    let households: Vec<String> = rows.iter().map(|r| r.household.clone()).collect();
    let cluster_of = if clustered {
        Some(row_clusters(&rows, &load_clusters(ws)?)?)
    } else {
        None
    };
    let spec = cfg.eval.coldstart_model.with_seed(derive(cfg.seed, "coldstart-model", 0));
    let params = ColdStartParams {
        scenarios: cfg.eval.scenarios.clone(),
        iterations: cfg.eval.iterations,
        folds: cfg.eval.folds,
        seed: derive(cfg.seed, "coldstart", 0),
    };
    let report = run_cold_start(&data, &households, cluster_of.as_deref(), &spec, &params)?;
    for s in &report.scenarios {
        log::info!(
            "coldstart{}: test {:.0}% train-cv {:.4}±{:.4} test-cv {:.4}±{:.4} independent {:.4}±{:.4}",
            if clustered { " (clustered)" } else { "" },
            s.test_frac * 100.0,
            s.train_cv.mean,
            s.train_cv.std,
            s.test_cv.mean,
            s.test_cv.std,
            s.independent.mean,
            s.independent.std
        );
    }
    let mut merged = Results::default();
    update_results(ws, |r| {
        if clustered {
            r.coldstart_clustered = Some(report);
        } else {
            r.coldstart = Some(report);
        }
        merged = r.clone();
    })?;

    let t5 = cfg.paths.reports.join("table5.csv");
    let mut w = ws.csv_writer(&t5)?;
    w.write_record([
        "variant",
        "test_frac",
        "train_cv_mean",
        "train_cv_std",
        "test_cv_mean",
        "test_cv_std",
        "independent_mean",
        "independent_std",
    ])?;
    let variants: [(&str, &Option<ColdStartReport>); 2] =
        [("unclustered", &merged.coldstart), ("clustered", &merged.coldstart_clustered)];
    for (name, rep) in variants {
        for s in rep.iter().flat_map(|r| &r.scenarios) {
            w.write_record([
                name.to_string(),
                format!("{:.2}", s.test_frac),
                format!("{:.4}", s.train_cv.mean),
                format!("{:.4}", s.train_cv.std),
                format!("{:.4}", s.test_cv.mean),
                format!("{:.4}", s.test_cv.std),
                format!("{:.4}", s.independent.mean),
                format!("{:.4}", s.independent.std),
            ])?;
        }
    }
    w.flush()?;
    let stage = if clustered { "coldstart-clustered" } else { "coldstart" };
    let mut inputs = vec![features_path(ws)];
    if clustered {
        inputs.push(clusters_path(ws));
    }
    let ins: Vec<&std::path::Path> = inputs.iter().map(|p| p.as_path()).collect();
    ws.finish(stage, &ins, &[&results_path(ws), &t5])
}
