//! Workspace configuration: one JSON file, overridable by flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lumirec_core::models::{Family, GridSpec};
use lumirec_core::routine::RoutineParams;
use lumirec_core::{ModelSpec, StudyWindow, DEFAULT_SCENE_COUNT};

use crate::error::CliError;

/// Version stamped into every artifact this build writes.
pub const FORMAT_VERSION: u32 = 1;

/// Config file looked up in the workspace root when `--config` is absent.
pub const CONFIG_FILE: &str = "lumirec.json";

/// Artifact locations, relative to the workspace root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub events: PathBuf,
    pub truth: PathBuf,
    pub state: PathBuf,
    pub features: PathBuf,
    pub clusters: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
    pub manifests: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            events: "data/events.ndjson".into(),
            truth: "data/ground_truth.json".into(),
            state: "state".into(),
            features: "features".into(),
            clusters: "clusters".into(),
            models: "models".into(),
            reports: "reports".into(),
            manifests: "manifests".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Persona list (JSON array); the default population when absent.
    pub personas: Option<PathBuf>,
    pub jitter_minutes: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            personas: None,
            jitter_minutes: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub min_bend: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k_min: 1,
            k_max: 10,
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
            min_bend: lumirec_core::clustering::DEFAULT_MIN_BEND,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub families: Vec<Family>,
    pub grid: GridSpec,
    pub folds: usize,
    /// Training rows sampled for the grid search; the chosen spec is refit on
    /// the whole training split.
    pub grid_rows: usize,
    pub test_frac: f64,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            grid: GridSpec::default(),
            folds: 5,
            grid_rows: 4000,
            test_frac: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Family trained inside each cluster.
    pub clustered_family: Family,
    pub folds: usize,
    pub scenarios: Vec<f64>,
    pub iterations: usize,
    /// Model refit thousands of times by the cold-start protocol. Its seed is
    /// replaced by one derived from the global seed.
    pub coldstart_model: ModelSpec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            clustered_family: Family::RandomForest,
            folds: 5,
            scenarios: vec![0.10, 0.25, 0.40],
            iterations: 20,
            coldstart_model: ModelSpec::RandomForest {
                n_trees: 20,
                max_depth: Some(12),
                bootstrap: true,
                seed: 0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub paths: Paths,
    pub window: StudyWindow,
    pub scene_count: u8,
    pub seed: u64,
    pub synth: SynthConfig,
    pub routine: RoutineParams,
    pub clustering: ClusteringConfig,
    pub models: ModelsConfig,
    pub eval: EvalConfig,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            window: StudyWindow::calendar_year(2019),
            scene_count: DEFAULT_SCENE_COUNT,
            seed: 0,
            synth: SynthConfig::default(),
            routine: RoutineParams::default(),
            clustering: ClusteringConfig::default(),
            models: ModelsConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn in_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl WorkspaceConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.window.last < self.window.first {
            return bad(format!("study window ends ({}) before it starts ({})", self.window.last, self.window.first));
        }
        if self.scene_count < 2 {
            return bad(format!("scene_count must be at least 2, got {}", self.scene_count));
        }
        if !(self.synth.jitter_minutes >= 0.0 && self.synth.jitter_minutes <= 720.0) {
            return bad(format!("synth.jitter_minutes must be in [0, 720], got {}", self.synth.jitter_minutes));
        }
        if self.routine.min_len == 0 || self.routine.min_len > 1440 || self.routine.merge_gap > 1440 {
            return bad("routine.min_len must be in [1, 1440] and routine.merge_gap at most 1440".into());
        }
        let c = &self.clustering;
        if c.k_min == 0 || c.k_min > c.k_max {
            return bad(format!("clustering k range {}..={} is empty or starts at 0", c.k_min, c.k_max));
        }
        if c.n_init == 0 || c.max_iter == 0 || !(c.tol >= 0.0) || !(0.0..=1.0).contains(&c.min_bend) {
            return bad("clustering needs n_init >= 1, max_iter >= 1, tol >= 0 and min_bend in [0, 1]".into());
        }
        let m = &self.models;
        if m.families.is_empty() {
            return bad("models.families is empty".into());
        }
        if m.folds < 2 || m.grid_rows < m.folds {
            return bad(format!("models.folds must be >= 2 and models.grid_rows >= folds (got {}, {})", m.folds, m.grid_rows));
        }
        if !in_unit(m.test_frac) {
            return bad(format!("models.test_frac must be in (0, 1), got {}", m.test_frac));
        }
        for &f in &m.families {
            for spec in m.grid.expand(f, 0) {
                spec.validate().map_err(|e| CliError::Validation(format!("models.grid: {e}")))?;
            }
            if m.grid.expand(f, 0).is_empty() {
                return bad(format!("models.grid has no points for {}", f.as_str()));
            }
        }
        let e = &self.eval;
        if e.folds < 2 || e.iterations == 0 || e.scenarios.is_empty() || !e.scenarios.iter().all(|&s| in_unit(s)) {
            return bad("eval needs folds >= 2, iterations >= 1 and scenarios in (0, 1)".into());
        }
        e.coldstart_model
            .validate()
            .map_err(|err| CliError::Validation(format!("eval.coldstart_model: {err}")))?;
        Ok(())
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("{s:?} is not a YYYY-MM-DD date: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = WorkspaceConfig::default();
        c.validate().unwrap();
        let back: WorkspaceConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c: WorkspaceConfig = serde_json::from_str(r#"{"seed": 7, "eval": {"iterations": 3}}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.eval.iterations, 3);
        assert_eq!(c.eval.folds, 5);
        assert_ne!(c.hash(), WorkspaceConfig::default().hash());
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(serde_json::from_str::<WorkspaceConfig>(r#"{"sed": 7}"#).is_err());
        let mut c = WorkspaceConfig::default();
        c.clustering.k_min = 4;
        c.clustering.k_max = 3;
        assert!(c.validate().is_err());
        let mut c = WorkspaceConfig::default();
        c.eval.scenarios = vec![0.0];
        assert!(c.validate().is_err());
    }
}
