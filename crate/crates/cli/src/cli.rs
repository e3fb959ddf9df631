use std::path::PathBuf;
use std::time::Instant;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use lumirec_core::StudyWindow;

use crate::commands;
use crate::config::{parse_date, WorkspaceConfig, CONFIG_FILE};
use crate::error::CliError;
use crate::workspace::Workspace;

/// Smart-lighting routine detection and scene recommendation.
#[derive(Debug, Parser)]
#[command(name = "lumirec", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Workspace directory holding the config and every artifact.
    #[arg(short, long, global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// Config file [default: <workspace>/lumirec.json].
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// First day of the study window (YYYY-MM-DD).
    #[arg(long, global = true, value_parser = parse_date)]
    pub from: Option<NaiveDate>,
    /// Last day of the study window, inclusive (YYYY-MM-DD).
    #[arg(long, global = true, value_parser = parse_date)]
    pub to: Option<NaiveDate>,
    /// Number of distinct scene labels.
    #[arg(long, global = true)]
    pub scene_count: Option<u8>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic event log with ground truth.
    Synth(SynthArgs),
    /// Validate the event log and rebuild per-minute light state.
    Ingest,
    /// Detect daily routine windows for every room.
    Routine,
    /// Build the hourly feature table.
    Features,
    /// Cluster rooms by usage profile.
    Cluster,
    /// Grid-search and fit every model family.
    Train,
    /// Evaluate the pooled models on the held-out rows.
    EvalPooled,
    /// Train and evaluate one model per cluster.
    EvalClustered,
    /// Household-level cold-start experiment.
    Coldstart(ColdstartArgs),
    /// Check artifact consistency and write figure data.
    Report,
    /// Run every stage in order.
    All,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Persona list (JSON); the default population when absent.
    #[arg(long)]
    pub personas: Option<PathBuf>,
    /// Event log path, relative to the workspace.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum routine start/end jitter in minutes.
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ColdstartArgs {
    /// Held-out household fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<f64>>,
    /// Repetitions per scenario.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Train one model per cluster.
    #[arg(long)]
    pub clustered: bool,
}

/// Apply flag overrides; true when any flag changed the config.
fn apply_overrides(cfg: &mut WorkspaceConfig, g: &GlobalArgs, cmd: &Command) -> Result<bool, CliError> {
    let before = cfg.clone();
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.scene_count {
        cfg.scene_count = n;
    }
    if g.from.is_some() || g.to.is_some() {
        let first = g.from.unwrap_or(cfg.window.first);
        let last = g.to.unwrap_or(cfg.window.last);
        cfg.window = StudyWindow::new(first, last)?;
    }
    match cmd {
        Command::Synth(a) => {
            if let Some(p) = &a.personas {
                cfg.synth.personas = Some(p.clone());
            }
            if let Some(p) = &a.out {
                cfg.paths.events = p.clone();
            }
            if let Some(j) = a.jitter {
                cfg.synth.jitter_minutes = j;
            }
        }
        Command::Coldstart(a) => {
            if let Some(s) = &a.scenarios {
                cfg.eval.scenarios = s.clone();
            }
            if let Some(n) = a.iterations {
                cfg.eval.iterations = n;
            }
        }
        _ => {}
    }
    Ok(*cfg != before)
}

/// Resolve the effective config, persisting any flag overrides.
pub fn open_workspace(g: &GlobalArgs, cmd: &Command) -> Result<Workspace, CliError> {
    let config_path = g.config.clone().unwrap_or_else(|| g.workspace.join(CONFIG_FILE));
    let mut cfg = if config_path.exists() {
        WorkspaceConfig::load(&config_path)?
    } else if g.config.is_some() {
        return Err(CliError::Validation(format!("config {} does not exist", config_path.display())));
    } else {
        WorkspaceConfig::default()
    };
    if apply_overrides(&mut cfg, g, cmd)? {
        cfg.validate()?;
        cfg.save(&config_path)?;
        log::info!("saved effective config to {}", config_path.display());
    }
    cfg.validate()?;
    Ok(Workspace::new(g.workspace.clone(), cfg))
}

fn stage(name: &str, f: impl FnOnce() -> Result<(), CliError>) -> Result<(), CliError> {
    let t = Instant::now();
    f()?;
    log::info!("{name} finished in {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}

pub fn execute(ws: &Workspace, cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Synth(_) => stage("synth", || commands::synth::run(ws)),
        Command::Ingest => stage("ingest", || commands::ingest::run(ws)),
        Command::Routine => stage("routine", || commands::routine::run(ws)),
        Command::Features => stage("features", || commands::features::run(ws)),
        Command::Cluster => stage("cluster", || commands::cluster::run(ws)),
        Command::Train => stage("train", || commands::train::run(ws)),
        Command::EvalPooled => stage("eval-pooled", || commands::eval::pooled(ws)),
        Command::EvalClustered => stage("eval-clustered", || commands::eval::clustered(ws)),
        Command::Coldstart(a) => stage("coldstart", || commands::coldstart::run(ws, a.clustered)),
        Command::Report => stage("report", || commands::report::run(ws)),
        Command::All => {
            let t = Instant::now();
            stage("synth", || commands::synth::run(ws))?;
            stage("ingest", || commands::ingest::run(ws))?;
            stage("routine", || commands::routine::run(ws))?;
            stage("features", || commands::features::run(ws))?;
            stage("cluster", || commands::cluster::run(ws))?;
            stage("train", || commands::train::run(ws))?;
            stage("eval-pooled", || commands::eval::pooled(ws))?;
            stage("eval-clustered", || commands::eval::clustered(ws))?;
            stage("coldstart", || commands::coldstart::run(ws, false))?;
            stage("coldstart-clustered", || commands::coldstart::run(ws, true))?;
            stage("report", || commands::report::run(ws))?;
            log::info!("pipeline finished in {:.1}s", t.elapsed().as_secs_f64());
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    let ws = open_workspace(&cli.global, &cli.command)?;
    execute(&ws, &cli.command)
}
