//! Checks against the planted structure of the default synthetic population.
//! One generated year is shared by every test in this file.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;

use lumirec_core::clustering::{
    adjusted_rand_index, build_cluster_vector, empirical_cdf, ks_distance, select_k, vectors_matrix, DEFAULT_MIN_BEND,
};
use lumirec_core::eval::{run_cold_start, run_clustered_experiment, run_pooled_experiment, ColdStartParams};
use lumirec_core::features::{build_feature_rows, compute_feature_importance, encode_rows, CategoryCodes, FeatureRow, FEATURE_NAMES};
use lumirec_core::ingest::{household_geo, reconstruct_state};
use lumirec_core::routine::{frequency_profile, recommend_routine, RoutineParams};
use lumirec_core::synth::{default_population, generate, SynthOutput, SynthParams};
use lumirec_core::{Dataset, FrequencyProfile, KMeansParams, Matrix, ModelSpec, StudyWindow, TrainedModel};

struct World {
    out: SynthOutput,
    profiles: Vec<FrequencyProfile>,
    routines: Vec<Vec<(u32, u32)>>,
    clusters: Vec<usize>,
    k: usize,
    rows: Vec<FeatureRow>,
    data: Dataset,
    row_cluster: Vec<usize>,
    populations: BTreeMap<usize, usize>,
}

fn world() -> &'static World {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD.get_or_init(|| {
        let window = StudyWindow::calendar_year(2019);
        let out = generate(&default_population(0), &window, &SynthParams::default(), 0).unwrap();
        let states = reconstruct_state(&out.events, &window).unwrap();
        let geo = household_geo(&out.events);
        let codes = CategoryCodes::fit(geo.values());
        let profiles: Vec<FrequencyProfile> = states.values().map(frequency_profile).collect();
        let routines = states.values().map(|s| recommend_routine(s, RoutineParams::default()).intervals).collect();
        let vectors: Vec<_> = profiles.iter().map(|p| build_cluster_vector(p, &geo[&p.household], &codes)).collect();
        let ks: Vec<usize> = (1..=10).collect();
        let sel = select_k(&vectors_matrix(&vectors), &ks, &KMeansParams::default(), DEFAULT_MIN_BEND).unwrap();
        let rows = build_feature_rows(states.values(), &geo, &codes);
        let data = Dataset::new(
            encode_rows(&rows),
            rows.iter().map(|r| r.label).collect(),
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            9,
        )
        .unwrap();
        let of: BTreeMap<(String, lumirec_core::Room), usize> =
            profiles.iter().zip(&sel.labels).map(|(p, &c)| ((p.household.clone(), p.room), c)).collect();
        let row_cluster = rows.iter().map(|r| of[&(r.household.clone(), r.room)]).collect();
        let mut populations = BTreeMap::new();
        for &c in &sel.labels {
            *populations.entry(c).or_insert(0) += 1;
        }
        World {
            out,
            profiles,
            routines,
            clusters: sel.labels,
            k: sel.k,
            rows,
            data,
            row_cluster,
            populations,
        }
    })
}

fn rf(n_trees: usize, max_depth: Option<usize>) -> ModelSpec {
    ModelSpec::RandomForest {
        n_trees,
        max_depth,
        bootstrap: true,
        seed: 11,
    }
}

fn persona(w: &World, household: &str) -> usize {
    w.out.truth.persona_of(household).unwrap() as usize
}

#[test]
fn routines_land_within_ten_minutes() {
    let w = world();
    let mut planted = BTreeMap::new();
    for h in &w.out.truth.households {
        for r in &h.rooms {
            planted.insert((h.household.as_str(), r.room), &r.windows);
        }
    }
    let hits = w
        .profiles
        .iter()
        .zip(&w.routines)
        .filter(|(p, got)| {
            let want = planted[&(p.household.as_str(), p.room)];
            got.len() == want.len()
                && got.iter().zip(want.iter()).all(|(a, b)| a.0.abs_diff(b.0) <= 10 && a.1.abs_diff(b.1) <= 10)
        })
        .count();
    assert!(hits as f64 >= 0.95 * w.profiles.len() as f64, "{hits}/{}", w.profiles.len());
}

#[test]
fn clusters_recover_personas() {
    let w = world();
    let truth: Vec<usize> = w.profiles.iter().map(|p| persona(w, &p.household)).collect();
    assert_eq!(w.k, 3);
    assert!(adjusted_rand_index(&truth, &w.clusters) >= 0.9);
}

#[test]
fn usage_distributions_are_closer_within_clusters() {
    let w = world();
    let cdfs: Vec<_> = w.profiles.iter().map(|p| empirical_cdf(&p.values)).collect();
    let (mut within, mut between) = ((0.0, 0usize), (0.0, 0usize));
    // Every third entity keeps the pair count manageable.
    let pick: Vec<usize> = (0..cdfs.len()).step_by(3).collect();
    for (i, &a) in pick.iter().enumerate() {
        for &b in &pick[i + 1..] {
            let d = ks_distance(&cdfs[a], &cdfs[b]);
            let slot = if w.clusters[a] == w.clusters[b] { &mut within } else { &mut between };
            slot.0 += d;
            slot.1 += 1;
        }
    }
    let (wm, bm) = (within.0 / within.1 as f64, between.0 / between.1 as f64);
    assert!(wm < bm, "within {wm:.4} between {bm:.4}");
}

#[test]
fn features_obey_count_invariants() {
    let w = world();
    let households = w.out.truth.households.len();
    assert!(w.rows.len() <= households * 2 * 12 * 24);
    for r in &w.rows {
        assert!(r.monthly_turn_on <= r.quarterly_turn_on && r.quarterly_turn_on <= r.yearly_turn_on);
        for v in [r.avg_turn_on_monthly, r.avg_turn_on_quarterly, r.yearly_avg_turn_on] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn forest_beats_the_flip_rate_and_knn() {
    let w = world();
    let specs = [rf(40, None), ModelSpec::Knn { n_neighbors: 11 }];
    let r = run_pooled_experiment(&w.data, &specs, 0.1, 3).unwrap();
    let (forest, knn) = (r.results[0].evaluation.report.accuracy, r.results[1].evaluation.report.accuracy);
    assert!(forest >= 0.95, "forest {forest:.4}");
    assert!(forest >= knn, "forest {forest:.4} knn {knn:.4}");
}

#[test]
fn per_cluster_models_beat_the_pooled_one() {
    let w = world();
    let spec = rf(20, Some(16));
    let pooled = run_pooled_experiment(&w.data, std::slice::from_ref(&spec), 0.1, 5).unwrap();
    let clustered = run_clustered_experiment(&w.data, &w.row_cluster, &w.populations, &spec, 0.1, 5).unwrap();
    let p = pooled.results[0].evaluation.report.accuracy;
    assert!(clustered.weighted.accuracy > p, "clustered {:.4} pooled {p:.4}", clustered.weighted.accuracy);
}

#[test]
fn planted_features_outrank_noise() {
    let w = world();
    let rows: Vec<usize> = (0..w.data.len()).step_by(4).collect();
    let sample = w.data.subset(&rows);
    let mut r = lumirec_core::seed::rng(21);
    let cols = sample.x.cols() + 1;
    let mut values = Vec::with_capacity(sample.len() * cols);
    for i in 0..sample.len() {
        values.extend_from_slice(sample.x.row(i));
        values.push(r.random::<f64>());
    }
    let mut names: Vec<&str> = FEATURE_NAMES.to_vec();
    names.push("noise");
    let data = Dataset::new(
        Matrix::new(sample.len(), cols, values),
        sample.y.clone(),
        names.iter().map(|s| s.to_string()).collect(),
        9,
    )
    .unwrap();
    let TrainedModel::RandomForest(forest) = lumirec_core::models::fit(&rf(30, Some(8)), &data).unwrap() else {
        panic!("forest expected");
    };
    let imp: BTreeMap<String, f64> = compute_feature_importance(&forest, &names).unwrap().into_iter().collect();
    for signal in ["hour", "room", "period"] {
        assert!(imp[signal] > imp["noise"], "{signal} {:.4} noise {:.4}", imp[signal], imp["noise"]);
    }
}

#[test]
fn cold_start_shape_on_synth() {
    let w = world();
    let households: Vec<String> = w.rows.iter().map(|r| r.household.clone()).collect();
    let params = ColdStartParams {
        scenarios: vec![0.1, 0.4],
        iterations: 12,
        folds: 3,
        seed: 9,
    };
    let spec = rf(8, Some(10));
    let plain = run_cold_start(&w.data, &households, None, &spec, &params).unwrap();
    let clustered = run_cold_start(&w.data, &households, Some(&w.row_cluster), &spec, &params).unwrap();
    let (s10, s40) = (plain.scenarios[0].independent.std, plain.scenarios[1].independent.std);
    assert!(s10 > s40, "std at 10% {s10:.4} vs 40% {s40:.4}");
    let mean = |r: &lumirec_core::eval::ColdStartReport| r.iterations.iter().map(|i| i.independent).sum::<f64>() / r.iterations.len() as f64;
    assert!(mean(&clustered) >= mean(&plain));
}
