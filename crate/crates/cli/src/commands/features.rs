use lumirec_core::features::{build_feature_rows, CategoryCodes, CSV_COLUMNS};

use super::{codes_path, features_path, load_states, state_path, CodesBody};
use crate::error::CliError;
use crate::workspace::Workspace;

pub fn run(ws: &Workspace) -> Result<(), CliError> {
    let loaded = load_states(ws)?;
    let codes = CategoryCodes::fit(loaded.geo.values());
    let rows = build_feature_rows(loaded.states.values(), &loaded.geo, &codes);
    if rows.is_empty() {
        return Err(CliError::Validation("no feature rows: the log has no scene usage".into()));
    }
    let out = features_path(ws);
    let mut w = ws.csv_writer(&out)?;
    w.write_record(CSV_COLUMNS)?;
    for r in &rows {
        w.write_record(r.to_record())?;
    }
    w.flush()?;
    let codes_out = codes_path(ws);
    ws.write_json(&codes_out, &CodesBody { codes })?;
    log::info!("features: {} rows", rows.len());
    ws.finish("features", &[&state_path(ws)], &[&out, &codes_out])
}
