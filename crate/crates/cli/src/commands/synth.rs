use std::fs::File;
use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use lumirec_core::synth::{default_population, generate, GroundTruth, PersonaSpec, SynthParams};

use crate::error::CliError;
use crate::workspace::Workspace;

#[derive(Serialize, Deserialize)]
pub struct TruthBody {
    pub personas: Vec<PersonaSpec>,
    pub truth: GroundTruth,
}

pub fn run(ws: &Workspace) -> Result<(), CliError> {
    let cfg = &ws.config;
    let personas: Vec<PersonaSpec> = match &cfg.synth.personas {
        Some(rel) => {
            let p = ws.path(rel);
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Validation(format!("cannot read personas {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("personas {}: {e}", p.display())))?
        }
        None => default_population(cfg.seed),
    };
    let params = SynthParams {
        jitter_minutes: cfg.synth.jitter_minutes,
        scene_count: cfg.scene_count,
    };
    let out = generate(&personas, &cfg.window, &params, cfg.seed)?;

    let events = ws.path(&cfg.paths.events);
    if let Some(dir) = events.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(&events)?);
    for e in &out.events {
        w.write_all(e.to_ndjson().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    ws.write_json(
        &cfg.paths.truth,
        &TruthBody {
            personas: personas.clone(),
            truth: out.truth,
        },
    )?;
    log::info!(
        "synth: {} households, {} events",
        personas.iter().map(|p| p.households).sum::<usize>(),
        out.events.len()
    );
    let inputs: Vec<&std::path::Path> = cfg.synth.personas.iter().map(|p| p.as_path()).collect();
    ws.finish("synth", &inputs, &[&cfg.paths.events, &cfg.paths.truth])
}
