//! Routine and scene recommendation for smart-lighting households.
//!
//! The crate turns hub event logs into two kinds of recommendation:
//!
//! * **routines**: per (household, room) daily time intervals of habitual use,
//!   found by thresholding the per-minute on-frequency profile at its elbow;
//! * **scenes**: per-hour predictions of the color environment a household is
//!   likely to apply, learned by multi-class classifiers trained either on the
//!   whole population or separately inside k-means user segments.
//!
//! Module map, in pipeline order:
//!
//! | module         | role                                                        |
//! |----------------|-------------------------------------------------------------|
//! | [`synth`]      | seeded synthetic hub logs with planted ground truth         |
//! | [`ingest`]     | NDJSON parsing and minute-resolution state reconstruction   |
//! | [`routine`]    | frequency profiles, elbow threshold, routine intervals      |
//! | [`features`]   | (household, room, month, hour) feature rows and labels      |
//! | [`clustering`] | winsorized usage vectors, k-means, elbow k selection, CDFs  |
//! | [`models`]     | KNN, random forest, gradient boosting, grid search          |
//! | [`eval`]       | metrics, splits, pooled / clustered / cold-start protocols  |

pub mod clustering;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod routine;
pub mod seed;
pub mod synth;

pub use clustering::{ClusterVector, KMeansModel, KMeansParams};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, MetricReport};
pub use features::{CategoryCodes, FeatureRow, Geo, Period};
pub use ingest::{EntityKey, LightEvent, Room, StateSeries, StudyWindow};
pub use models::{Dataset, LabelSpace, Matrix, ModelSpec, TrainedModel};
pub use routine::{FrequencyProfile, RoutinePlan};

/// Minutes in one day; the length of every profile and usage vector.
pub const MINUTES_PER_DAY: usize = 1440;

/// Default number of scene classes (scene ids `0..9`).
pub const DEFAULT_SCENE_COUNT: u8 = 9;
