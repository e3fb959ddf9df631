use std::collections::BTreeMap;
use std::path::PathBuf;

use lumirec_core::features::{compute_feature_importance, FEATURE_NAMES};
use lumirec_core::models::Family;
use lumirec_core::routine::{frequency_profile, knee_threshold};
use lumirec_core::EntityKey;

use super::{clusters_path, entity_label, load_clusters, load_model, load_states, model_path, results_path, Results};
use crate::error::CliError;
use crate::workspace::Workspace;

pub const STAGES: [&str; 10] = [
    "synth",
    "ingest",
    "routine",
    "features",
    "cluster",
    "train",
    "eval-pooled",
    "eval-clustered",
    "coldstart",
    "coldstart-clustered",
];

/// Fail unless every recorded stage ran under the current config.
pub fn check_hashes(ws: &Workspace) -> Result<(), CliError> {
    for stage in STAGES {
        if let Some(m) = ws.read_manifest(stage)? {
            if m.config_hash != ws.hash {
                return Err(CliError::HashMismatch {
                    artifact: format!("stage {stage}"),
                    expected: ws.hash.clone(),
                    found: m.config_hash,
                });
            }
        }
    }
    Ok(())
}

pub fn run(ws: &Workspace) -> Result<(), CliError> {
    check_hashes(ws)?;
    let rel = results_path(ws);
    let env = ws.read_json::<Results>("eval-pooled", &rel)?;
    if env.config_hash != ws.hash {
        return Err(CliError::HashMismatch {
            artifact: rel.display().to_string(),
            expected: ws.hash.clone(),
            found: env.config_hash,
        });
    }
    let results = env.body;
    let dir = ws.config.paths.reports.join("figures");
    let mut outputs: Vec<PathBuf> = Vec::new();
    let have_clusters = ws.path(clusters_path(ws)).exists();
    let clusters = if have_clusters { Some(load_clusters(ws)?) } else { None };

    // Sorted usage curve and cutoff of one entity per cluster.
    let loaded = load_states(ws)?;
    let mut reps: BTreeMap<usize, EntityKey> = BTreeMap::new();
    for key in loaded.states.keys() {
        let c = match &clusters {
            Some(cl) => match cl.entities.get(&entity_label(&key.household, key.room)) {
                Some(&c) => c,
                None => continue,
            },
            None => 0,
        };
        reps.entry(c).or_insert_with(|| key.clone());
    }
    let fig1 = dir.join("fig1_usage.csv");
    let mut w = ws.csv_writer(&fig1)?;
    w.write_record(["household", "room", "cluster", "rank", "value", "threshold", "high"])?;
    for (c, key) in &reps {
        let profile = frequency_profile(&loaded.states[key]);
        let mut sorted = profile.values.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let knee = knee_threshold(&profile.values).ok();
        for (rank, v) in sorted.iter().enumerate() {
            w.write_record([
                key.household.clone(),
                key.room.to_string(),
                c.to_string(),
                rank.to_string(),
                format!("{v:.6}"),
                knee.map_or(String::new(), |k| format!("{:.6}", k.threshold)),
                knee.is_some_and(|k| rank < k.knee_index).to_string(),
            ])?;
        }
    }
    w.flush()?;
    outputs.push(fig1);

    if let Some(cl) = &clusters {
        let fig3 = dir.join("fig3_inertia.csv");
        let mut w = ws.csv_writer(&fig3)?;
        w.write_record(["k", "inertia", "selected"])?;
        for p in &cl.inertia_curve {
            w.write_record([p.k.to_string(), format!("{:.6}", p.inertia), (p.k == cl.k).to_string()])?;
        }
        w.flush()?;
        outputs.push(fig3);

        let mut sums: BTreeMap<(usize, String), (f64, usize)> = BTreeMap::new();
        let mut r = ws.csv_reader("cluster", &ws.config.paths.clusters.join("cdf.csv"))?;
        for rec in r.records() {
            let rec = rec?;
            let cluster: usize = rec[2].parse().map_err(|_| CliError::Validation("cdf.csv: bad cluster id".into()))?;
            let cdf: f64 = rec[4].parse().map_err(|_| CliError::Validation("cdf.csv: bad cdf value".into()))?;
            let e = sums.entry((cluster, rec[3].to_string())).or_insert((0.0, 0));
            e.0 += cdf;
            e.1 += 1;
        }
        let fig4 = dir.join("fig4_cdf.csv");
        let mut w = ws.csv_writer(&fig4)?;
        w.write_record(["cluster", "x", "mean_cdf", "entities"])?;
        let mut keys: Vec<_> = sums.keys().cloned().collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.parse::<f64>().unwrap_or(0.0).total_cmp(&b.1.parse::<f64>().unwrap_or(0.0))));
        for k in keys {
            let (s, n) = sums[&k];
            w.write_record([k.0.to_string(), k.1.clone(), format!("{:.6}", s / n as f64), n.to_string()])?;
        }
        w.flush()?;
        outputs.push(fig4);
    }

    if ws.path(model_path(ws, Family::RandomForest)).exists() {
        let m = load_model(ws, Family::RandomForest)?;
        if let Some(forest) = m.model.as_forest() {
            let fig5 = dir.join("fig5_importance.csv");
            let mut w = ws.csv_writer(&fig5)?;
            w.write_record(["feature", "importance"])?;
            for (name, v) in compute_feature_importance(forest, &FEATURE_NAMES)? {
                w.write_record([name, format!("{v:.6}")])?;
            }
            w.flush()?;
            outputs.push(fig5);
        }
    }

    let fig6 = dir.join("fig6_coldstart.csv");
    let mut w = ws.csv_writer(&fig6)?;
    w.write_record(["variant", "test_frac", "iteration", "train_cv", "test_cv", "independent"])?;
    for (name, rep) in [("unclustered", &results.coldstart), ("clustered", &results.coldstart_clustered)] {
        for it in rep.iter().flat_map(|r| &r.iterations) {
            w.write_record([
                name.to_string(),
                format!("{:.2}", it.test_frac),
                it.iteration.to_string(),
                format!("{:.6}", it.train_cv),
                format!("{:.6}", it.test_cv),
                format!("{:.6}", it.independent),
            ])?;
        }
    }
    w.flush()?;
    outputs.push(fig6);

    println!("{}", summary(&results));
    let outs: Vec<&std::path::Path> = outputs.iter().map(|p| p.as_path()).collect();
    ws.finish("report", &[&rel], &outs)
}

/// Plain-text digest of the results.
pub fn summary(r: &Results) -> String {
    let mut s = String::new();
    if let Some(p) = &r.pooled {
        s += &format!("pooled ({} train / {} test rows)\n", p.n_train, p.n_test);
        for f in &p.families {
            s += &format!(
                "  {:<15} cv {:.4}  test {:.4}  balanced {:.4}\n",
                f.family.as_str(),
                f.cv_mean,
                f.accuracy,
                f.balanced_accuracy
            );
        }
    }
    if let Some(c) = &r.clustered {
        s += &format!("clustered ({})\n", c.family.as_str());
        for row in &c.clusters {
            s += &format!(
                "  cluster {:<7} pop {:>4}  accuracy {:.4}  balanced {:.4}\n",
                row.cluster, row.population, row.metrics.accuracy, row.metrics.balanced_accuracy
            );
        }
        s += &format!(
            "  weighted          accuracy {:.4}  balanced {:.4}\n",
            c.weighted.accuracy, c.weighted.balanced_accuracy
        );
    }
    for (name, rep) in [("cold start", &r.coldstart), ("cold start, clustered", &r.coldstart_clustered)] {
        if let Some(rep) = rep {
            s += &format!("{name}\n");
            for sc in &rep.scenarios {
                s += &format!(
                    "  test {:>3.0}%  train-cv {:.4}±{:.4}  test-cv {:.4}±{:.4}  independent {:.4}±{:.4}\n",
                    sc.test_frac * 100.0,
                    sc.train_cv.mean,
                    sc.train_cv.std,
                    sc.test_cv.mean,
                    sc.test_cv.std,
                    sc.independent.mean,
                    sc.independent.std
                );
            }
        }
    }
    s.trim_end().to_string()
}
