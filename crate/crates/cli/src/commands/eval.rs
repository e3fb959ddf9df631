use lumirec_core::eval::{evaluate, run_clustered_experiment, split_rows};
use lumirec_core::LabelSpace;

use super::{
    clusters_path, features_path, load_clusters, load_features, load_model, model_path, results_path, row_clusters,
    split_seed, update_results, ClassRow, ClusterRow, ClusteredSection, FamilyEval, PooledSection,
};
use crate::error::CliError;
use crate::workspace::Workspace;

pub fn pooled(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.config;
    for &f in &cfg.models.families {
        ws.require("train", model_path(ws, f))?;
    }
    let (rows, data) = load_features(ws)?;
    let (train, test) = split_rows(data.len(), cfg.models.test_frac, split_seed(ws));
    let test_set = data.subset(&test);
    let labels = LabelSpace::fit(&data.y);

    let preds_rel = cfg.paths.reports.join("predictions.csv");
    let mut preds: Vec<Vec<u8>> = Vec::new();
    let mut families = Vec::new();
    let mut inputs = vec![features_path(ws)];
    for &family in &cfg.models.families {
        let m = load_model(ws, family)?;
        let ev = evaluate(&m.model, &test_set, &labels)?;
        let r = &ev.report;
        log::info!("eval-pooled: {} accuracy {:.4}, balanced {:.4}", family.as_str(), r.accuracy, r.balanced_accuracy);
        families.push(FamilyEval {
            family,
            spec: m.params,
            cv_mean: m.cv_mean,
            accuracy: r.accuracy,
            balanced_accuracy: r.balanced_accuracy,
            per_class: ev
                .labels
                .iter()
                .zip(&r.per_class)
                .map(|(&label, c)| ClassRow {
                    label,
                    precision: c.precision,
                    recall: c.recall,
                    specificity: c.specificity,
                    f1: c.f1,
                    support: c.support,
                    undefined: c.undefined,
                })
                .collect(),
        });
        preds.push(ev.y_pred);
        inputs.push(model_path(ws, family));
    }

    let mut w = ws.csv_writer(&preds_rel)?;
    let mut header: Vec<String> = ["row", "household", "room", "month", "hour", "label"].map(String::from).to_vec();
    header.extend(cfg.models.families.iter().map(|f| f.as_str().to_string()));
    w.write_record(&header)?;
    for (j, &i) in test.iter().enumerate() {
        let r = &rows[i];
        let mut rec = vec![
            i.to_string(),
            r.household.clone(),
            r.room.to_string(),
            r.month.to_string(),
            r.hour.to_string(),
            r.label.to_string(),
        ];
        rec.extend(preds.iter().map(|p| p[j].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let t2 = cfg.paths.reports.join("table2.csv");
    let mut w = ws.csv_writer(&t2)?;
    w.write_record(["family", "class", "precision", "recall", "specificity", "f1", "support"])?;
    for f in &families {
        for c in &f.per_class {
            w.write_record([
                f.family.as_str().to_string(),
                c.label.to_string(),
                format!("{:.4}", c.precision),
                format!("{:.4}", c.recall),
                format!("{:.4}", c.specificity),
                format!("{:.4}", c.f1),
                c.support.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let t3 = cfg.paths.reports.join("table3.csv");
    let mut w = ws.csv_writer(&t3)?;
    w.write_record(["family", "cv_accuracy", "test_accuracy", "balanced_accuracy"])?;
    for f in &families {
        w.write_record([
            f.family.as_str().to_string(),
            format!("{:.4}", f.cv_mean),
            format!("{:.4}", f.accuracy),
            format!("{:.4}", f.balanced_accuracy),
        ])?;
    }
    w.flush()?;

    let section = PooledSection {
        n_train: train.len(),
        n_test: test.len(),
        families,
    };
    update_results(ws, |r| r.pooled = Some(section))?;
    let ins: Vec<&std::path::Path> = inputs.iter().map(|p| p.as_path()).collect();
    ws.finish("eval-pooled", &ins, &[&results_path(ws), &preds_rel, &t2, &t3])
}

pub fn clustered(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.config;
    let family = cfg.eval.clustered_family;
    ws.require("cluster", clusters_path(ws))?;
    ws.require("train", model_path(ws, family))?;
    let (rows, data) = load_features(ws)?;
    let clusters = load_clusters(ws)?;
    let spec = load_model(ws, family)?.params;
    let cluster_of = row_clusters(&rows, &clusters)?;
    let report = run_clustered_experiment(&data, &cluster_of, &clusters.population_map(), &spec, cfg.models.test_frac, split_seed(ws))?;
    let section = ClusteredSection {
        family,
        spec,
        clusters: report
            .clusters
            .iter()
            .map(|c| ClusterRow {
                cluster: c.cluster,
                population: c.population,
                rows: c.rows,
                n_test: c.n_test,
                metrics: c.evaluation.report.scalars(),
            })
            .collect(),
        weighted: report.weighted,
        skipped: report.skipped,
    };
    log::info!(
        "eval-clustered: weighted accuracy {:.4}, balanced {:.4}",
        section.weighted.accuracy,
        section.weighted.balanced_accuracy
    );

    let t4 = cfg.paths.reports.join("table4.csv");
    let mut w = ws.csv_writer(&t4)?;
    w.write_record(["cluster", "population", "rows", "n_test", "accuracy", "balanced_accuracy", "macro_f1"])?;
    for c in &section.clusters {
        w.write_record([
            c.cluster.to_string(),
            c.population.to_string(),
            c.rows.to_string(),
            c.n_test.to_string(),
            format!("{:.4}", c.metrics.accuracy),
            format!("{:.4}", c.metrics.balanced_accuracy),
            format!("{:.4}", c.metrics.macro_f1),
        ])?;
    }
    let s = &section.weighted;
    w.write_record([
        "weighted".to_string(),
        section.clusters.iter().map(|c| c.population).sum::<usize>().to_string(),
        section.clusters.iter().map(|c| c.rows).sum::<usize>().to_string(),
        section.clusters.iter().map(|c| c.n_test).sum::<usize>().to_string(),
        format!("{:.4}", s.accuracy),
        format!("{:.4}", s.balanced_accuracy),
        format!("{:.4}", s.macro_f1),
    ])?;
    w.flush()?;
    update_results(ws, |r| r.clustered = Some(section))?;
    ws.finish(
        "eval-clustered",
        &[&features_path(ws), &clusters_path(ws), &model_path(ws, family)],
        &[&results_path(ws), &t4],
    )
}
