use lumirec_core::eval::split_rows;
use lumirec_core::models::{fit, grid_search, Family, LabelSpace};
use lumirec_core::seed::derive;

use super::{codes_path, features_path, load_codes, load_features, model_path, split_seed, ModelBody};
use crate::error::CliError;
use crate::workspace::Workspace;

fn family_index(f: Family) -> u64 {
    Family::ALL.iter().position(|&g| g == f).expect("known family") as u64
}

pub fn run(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.config;
    let (_, data) = load_features(ws)?;
    let codes = load_codes(ws)?;
    let (train, _) = split_rows(data.len(), cfg.models.test_frac, split_seed(ws));
    let train_set = data.subset(&train);
    let grid_set = if train_set.len() > cfg.models.grid_rows {
        let frac = cfg.models.grid_rows as f64 / train_set.len() as f64;
        let (_, sample) = split_rows(train_set.len(), frac, derive(cfg.seed, "grid-rows", 0));
        train_set.subset(&sample)
    } else {
        train_set.clone()
    };
    let labels = LabelSpace::fit(&train_set.y);

    let table = cfg.paths.models.join("grid.csv");
    let mut w = ws.csv_writer(&table)?;
    w.write_record(["family", "spec", "fold", "accuracy"])?;
    let mut outputs = vec![table.clone()];
    for &family in &cfg.models.families {
        let grid = cfg.models.grid.expand(family, derive(cfg.seed, "model", family_index(family)));
        let result = grid_search(&grid, &grid_set, cfg.models.folds, derive(cfg.seed, "grid-folds", 0))?;
        if !result.stratified {
            log::warn!("{}: a class has fewer rows than folds; folds are not stratified", family.as_str());
        }
        for row in &result.table {
            w.write_record([
                family.as_str().to_string(),
                serde_json::to_string(&row.spec)?,
                row.fold.to_string(),
                format!("{:.6}", row.accuracy),
            ])?;
        }
        log::info!(
            "train: {} best {} (cv {:.4}), refitting on {} rows",
            family.as_str(),
            serde_json::to_string(&result.best)?,
            result.best_mean,
            train_set.len()
        );
        let model = fit(&result.best, &train_set)?;
        let rel = model_path(ws, family);
        ws.write_json(
            &rel,
            &ModelBody {
                family,
                params: result.best.clone(),
                cv_mean: result.best_mean,
                grid_rows: grid_set.len(),
                train_rows: train_set.len(),
                feature_names: data.feature_names.clone(),
                labels: labels.labels.clone(),
                codes: codes.clone(),
                model,
            },
        )?;
        outputs.push(rel);
    }
    w.flush()?;
    let outs: Vec<&std::path::Path> = outputs.iter().map(|p| p.as_path()).collect();
    ws.finish("train", &[&features_path(ws), &codes_path(ws)], &outs)
}
