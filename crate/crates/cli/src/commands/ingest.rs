use lumirec_core::ingest::{household_geo, reconstruct_state, validate_log, EventParser};

use super::{state_path, EntityRuns, StateBody};
use crate::error::CliError;
use crate::workspace::Workspace;

pub fn run(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.config;
    let path = ws.require("synth", &cfg.paths.events)?;
    let text = std::fs::read_to_string(&path)?;
    let lines: Vec<&str> = text.lines().collect();
    let (events, report) = validate_log(&lines, &EventParser::new(cfg.scene_count), Some(&cfg.window));
    if report.skipped > 0 {
        log::warn!(
            "ingest: skipped {} records ({} malformed, {} unknown room)",
            report.skipped,
            report.skipped_malformed,
            report.skipped_unknown_room
        );
    }
    if report.outside_window > 0 {
        log::warn!("ingest: {} records fall outside the study window", report.outside_window);
    }
    if events.is_empty() {
        return Err(CliError::Validation(format!("{} has no valid records", path.display())));
    }
    let states = reconstruct_state(&events, &cfg.window)?;
    let geo = household_geo(&events);
    log::info!("ingest: {} records, {} households, {} rooms", report.parsed, report.households, states.len());
    let body = StateBody {
        window: cfg.window,
        report,
        geo,
        entities: states
            .values()
            .map(|s| EntityRuns {
                household: s.household.clone(),
                room: s.room,
                runs: s.runs(),
            })
            .collect(),
    };
    let out = state_path(ws);
    ws.write_json(&out, &body)?;
    ws.finish("ingest", &[&cfg.paths.events], &[&out])
}
