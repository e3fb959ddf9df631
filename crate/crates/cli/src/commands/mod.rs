pub mod cluster;
pub mod coldstart;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod report;
pub mod routine;
pub mod synth;
pub mod train;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use lumirec_core::eval::{ColdStartReport, Scalars};
use lumirec_core::features::{encode_rows, CategoryCodes, FeatureRow, FEATURE_NAMES};
use lumirec_core::ingest::{IngestReport, StateRun};
use lumirec_core::models::Family;
use lumirec_core::seed::derive;
use lumirec_core::{Dataset, EntityKey, Geo, ModelSpec, Room, StateSeries, StudyWindow, TrainedModel};

use crate::error::CliError;
use crate::workspace::Workspace;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntityRuns {
    pub household: String,
    pub room: Room,
    pub runs: Vec<StateRun>,
}

/// The ingest artifact: minute-resolution state as on-runs per entity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateBody {
    pub window: StudyWindow,
    pub report: IngestReport,
    pub geo: BTreeMap<String, Geo>,
    pub entities: Vec<EntityRuns>,
}

pub struct Loaded {
    pub geo: BTreeMap<String, Geo>,
    pub states: BTreeMap<EntityKey, StateSeries>,
}

pub fn state_path(ws: &Workspace) -> PathBuf {
    ws.config.paths.state.join("state.json")
}

pub fn load_states(ws: &Workspace) -> Result<Loaded, CliError> {
    let body: StateBody = ws.read_json("ingest", &state_path(ws))?.body;
    let days = body.window.days();
    let states = body
        .entities
        .iter()
        .map(|e| {
            let s = StateSeries::from_runs(e.household.clone(), e.room, days.clone(), &e.runs)?;
            Ok((s.key(), s))
        })
        .collect::<Result<BTreeMap<_, _>, CliError>>()?;
    Ok(Loaded { geo: body.geo, states })
}

pub fn features_path(ws: &Workspace) -> PathBuf {
    ws.config.paths.features.join("features.csv")
}

pub fn codes_path(ws: &Workspace) -> PathBuf {
    ws.config.paths.features.join("codes.json")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodesBody {
    pub codes: CategoryCodes,
}

pub fn load_codes(ws: &Workspace) -> Result<CategoryCodes, CliError> {
    Ok(ws.read_json::<CodesBody>("features", &codes_path(ws))?.body.codes)
}

pub fn load_features(ws: &Workspace) -> Result<(Vec<FeatureRow>, Dataset), CliError> {
    let mut reader = ws.csv_reader("features", &features_path(ws))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(FeatureRow::from_record(&fields)?);
    }
    if rows.is_empty() {
        return Err(CliError::Validation("features.csv has no rows".into()));
    }
    let data = Dataset::new(
        encode_rows(&rows),
        rows.iter().map(|r| r.label).collect(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        ws.config.scene_count,
    )?;
    Ok((rows, data))
}

pub fn clusters_path(ws: &Workspace) -> PathBuf {
    ws.config.paths.clusters.join("clusters.json")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KInertia {
    pub k: usize,
    pub inertia: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClustersBody {
    pub k: usize,
    /// No clear elbow; the smallest k was used.
    pub fallback: bool,
    pub inertia: f64,
    pub iterations_run: usize,
    pub inertia_curve: Vec<KInertia>,
    pub centroids: Vec<Vec<f64>>,
    /// `household/room` → cluster id.
    pub entities: BTreeMap<String, usize>,
    /// Entities per cluster, indexed by cluster id.
    pub populations: Vec<usize>,
}

impl ClustersBody {
    pub fn population_map(&self) -> BTreeMap<usize, usize> {
        self.populations.iter().copied().enumerate().collect()
    }
}

pub fn entity_label(household: &str, room: Room) -> String {
    format!("{household}/{room}")
}

pub fn load_clusters(ws: &Workspace) -> Result<ClustersBody, CliError> {
    Ok(ws.read_json("cluster", &clusters_path(ws))?.body)
}

/// Cluster of every feature row, through its entity.
pub fn row_clusters(rows: &[FeatureRow], clusters: &ClustersBody) -> Result<Vec<usize>, CliError> {
    rows.iter()
        .map(|r| {
            let key = entity_label(&r.household, r.room);
            clusters
                .entities
                .get(&key)
                .copied()
                .ok_or_else(|| CliError::Validation(format!("entity {key} has feature rows but no cluster")))
        })
        .collect()
}

pub fn model_path(ws: &Workspace, family: Family) -> PathBuf {
    ws.config.paths.models.join(format!("{}.json", family.as_str()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelBody {
    pub family: Family,
    pub params: ModelSpec,
    pub cv_mean: f64,
    pub grid_rows: usize,
    pub train_rows: usize,
    pub feature_names: Vec<String>,
    pub labels: Vec<u8>,
    pub codes: CategoryCodes,
    pub model: TrainedModel,
}

pub fn load_model(ws: &Workspace, family: Family) -> Result<ModelBody, CliError> {
    Ok(ws.read_json("train", &model_path(ws, family))?.body)
}

/// Seed of the 90/10 row split shared by training and both evaluations.
pub fn split_seed(ws: &Workspace) -> u64 {
    derive(ws.config.seed, "pooled-split", 0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: u8,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub support: u64,
    pub undefined: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyEval {
    pub family: Family,
    pub spec: ModelSpec,
    pub cv_mean: f64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub per_class: Vec<ClassRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PooledSection {
    pub n_train: usize,
    pub n_test: usize,
    pub families: Vec<FamilyEval>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterRow {
    pub cluster: usize,
    pub population: usize,
    pub rows: usize,
    pub n_test: usize,
    pub metrics: Scalars,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusteredSection {
    pub family: Family,
    pub spec: ModelSpec,
    pub clusters: Vec<ClusterRow>,
    pub weighted: Scalars,
    pub skipped: Vec<usize>,
}

/// Everything the evaluation commands report, one section per command.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Results {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooled: Option<PooledSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clustered: Option<ClusteredSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coldstart: Option<ColdStartReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coldstart_clustered: Option<ColdStartReport>,
}

pub fn results_path(ws: &Workspace) -> PathBuf {
    ws.config.paths.reports.join("results.json")
}

/// Current results, dropping any written under another config.
pub fn load_results(ws: &Workspace) -> Result<Results, CliError> {
    let rel = results_path(ws);
    if !ws.path(&rel).exists() {
        return Ok(Results::default());
    }
    let env = ws.read_json::<Results>("eval-pooled", &rel)?;
    if env.config_hash != ws.hash {
        log::warn!("discarding results computed under a different config");
        return Ok(Results::default());
    }
    Ok(env.body)
}

pub fn update_results(ws: &Workspace, f: impl FnOnce(&mut Results)) -> Result<(), CliError> {
    let mut r = load_results(ws)?;
    f(&mut r);
    ws.write_json(&results_path(ws), &r)
}
