use rayon::prelude::*;

use lumirec_core::routine::{frequency_profile, hhmm, plan_from_profile, FrequencyProfile, PlanStatus};

use super::{entity_label, load_states, state_path};
use crate::error::CliError;
use crate::workspace::Workspace;

pub fn run(ws: &Workspace) -> Result<(), CliError> {
    let loaded = load_states(ws)?;
    let states: Vec<_> = loaded.states.values().collect();
    let profiles: Vec<FrequencyProfile> = states.par_iter().map(|s| frequency_profile(s)).collect();
    let params = ws.config.routine;
    let plans: Vec<_> = profiles.par_iter().map(|p| plan_from_profile(p, params)).collect();

    let dir = &ws.config.paths.reports;
    let routines = dir.join("routines.csv");
    let mut w = ws.csv_writer(&routines)?;
    w.write_record(["household", "room", "start_hhmm", "end_hhmm", "threshold"])?;
    for plan in &plans {
        for &(s, e) in &plan.intervals {
            w.write_record([
                plan.household.clone(),
                plan.room.to_string(),
                hhmm(s),
                hhmm(e),
                format!("{:.6}", plan.threshold),
            ])?;
        }
    }
    w.flush()?;

    let profile = dir.join("profile.csv");
    let mut w = ws.csv_writer(&profile)?;
    let mut header = vec!["minute".to_string()];
    header.extend(profiles.iter().map(|p| entity_label(&p.household, p.room)));
    w.write_record(&header)?;
    for minute in 0..lumirec_core::MINUTES_PER_DAY {
        let mut rec = vec![hhmm(minute as u32)];
        rec.extend(profiles.iter().map(|p| format!("{:.6}", p.values[minute])));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let count = |s: PlanStatus| plans.iter().filter(|p| p.status == s).count();
    log::info!(
        "routine: {} entities, {} elbow, {} mean fallback, {} without routine",
        plans.len(),
        count(PlanStatus::Elbow),
        count(PlanStatus::MeanFallback),
        count(PlanStatus::NoRoutine)
    );
    ws.finish("routine", &[&state_path(ws)], &[&routines, &profile])
}
