//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stderr (uncaptured), and the test fails if any criterion fails.
//!
//! The full-pipeline checks run the real `lumirec` binary twice, so this
//! target takes tens of minutes on a single core.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use rand::Rng;

use lumirec_cli::cli::{execute, Command, SynthArgs};
use lumirec_cli::commands::{load_features, load_model, Results};
use lumirec_cli::config::WorkspaceConfig;
use lumirec_cli::workspace::{Envelope, Workspace};
use lumirec_core::clustering::{build_cluster_vector, select_k, vectors_matrix, DEFAULT_MIN_BEND};
use lumirec_core::eval::{binary_balanced_accuracy, confusion, metrics, weighted_mean, ConfusionMatrix, MeanStd};
use lumirec_core::features::CategoryCodes;
use lumirec_core::ingest::{household_geo, reconstruct_state};
use lumirec_core::models::{fit, Family, GridSpec};
use lumirec_core::routine::{frequency_profile, recommend_routine, RoutineParams};
use lumirec_core::seed::rng;
use lumirec_core::synth::{default_population, generate, SynthParams};
use lumirec_core::{KMeansParams, ModelSpec, StudyWindow, TrainedModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn announce(id: usize, name: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    writeln!(err, "[{tag}] {id:>2} {name}: {}", o.detail).unwrap();
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Brute-force tallies straight from the label pairs:
/// per class (precision, recall, specificity, f1), then accuracy and mean recall.
fn tally(y_true: &[usize], y_pred: &[usize], classes: usize) -> (Vec<[f64; 4]>, f64, f64) {
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut per = Vec::new();
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        let (pr, re) = (div(tp, tp + fp), div(tp, tp + fn_));
        let f1 = if pr + re == 0.0 { 0.0 } else { 2.0 * pr * re / (pr + re) };
        per.push([pr, re, div(tn, tn + fp), f1]);
    }
    let correct = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
    let mean_recall = per.iter().map(|m| m[1]).sum::<f64>() / classes as f64;
    (per, div(correct, y_true.len()), mean_recall)
}

fn metrics_oracle() -> Outcome {
    let t = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let classes = r.random_range(2..=9usize);
        let n = r.random_range(1..=200usize);
        let y_true: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let y_pred: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let got = metrics(&confusion(&y_true, &y_pred, classes).unwrap()).unwrap();
        let (per, acc, bal) = tally(&y_true, &y_pred, classes);
        worst = worst.max((got.accuracy - acc).abs()).max((got.balanced_accuracy - bal).abs());
        for (g, e) in got.per_class.iter().zip(&per) {
            for (a, b) in [g.precision, g.recall, g.specificity, g.f1].iter().zip(e) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 5.0,
        format!("1000 pairs, max abs error {worst:.1e} (limit 1e-12), {secs:.2}s (limit 5s)"),
    )
}

fn published_arithmetic() -> Outcome {
    let acc = weighted_mean(&[(0.987, 133.0), (0.972, 259.0), (0.965, 263.0)]).unwrap();
    let bal = weighted_mean(&[(0.98, 133.0), (0.93, 259.0), (0.94, 263.0)]).unwrap();
    let (a, b) = (format!("{acc:.3}"), format!("{bal:.3}"));
    outcome(
        a == "0.972" && b == "0.944",
        format!("weighted accuracy {acc:.5} -> {a} (want 0.972), balanced {bal:.5} -> {b} (want 0.944)"),
    )
}

fn binary_equivalence() -> Outcome {
    let mut r = rng(303);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let counts: Vec<Vec<u64>> = (0..2).map(|_| (0..2).map(|_| r.random_range(0..50)).collect()).collect();
        let n = counts.iter().flatten().sum::<u64>().max(1);
        let cm = ConfusionMatrix { counts, n };
        if binary_balanced_accuracy(&cm) != metrics(&cm).unwrap().balanced_accuracy {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 1000 binary matrices differ"))
}

struct Population {
    out: lumirec_core::synth::SynthOutput,
    states: BTreeMap<lumirec_core::EntityKey, lumirec_core::StateSeries>,
}

fn routine_recovery() -> (Outcome, Population) {
    let window = StudyWindow::calendar_year(2019);
    let t = Instant::now();
    let out = generate(&default_population(0), &window, &SynthParams::default(), 0).unwrap();
    let states = reconstruct_state(&out.events, &window).unwrap();
    let (mut ok, mut total) = (0usize, 0usize);
    for h in &out.truth.households {
        for room in &h.rooms {
            total += 1;
            let intervals = states
                .iter()
                .find(|(k, _)| k.household == h.household && k.room == room.room)
                .map(|(_, s)| recommend_routine(s, RoutineParams::default()).intervals)
                .unwrap_or_default();
            let matched = intervals.len() == room.windows.len()
                && intervals.iter().zip(&room.windows).all(|(a, b)| {
                    (i64::from(a.0) - i64::from(b.0)).abs() <= 10 && (i64::from(a.1) - i64::from(b.1)).abs() <= 10
                });
            ok += usize::from(matched);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let share = ok as f64 / total as f64;
    let o = outcome(
        share >= 0.95 && secs < 120.0,
        format!(
            "{ok}/{total} entities within 10 min ({:.1}%, need 95%), {} households x {} days in {secs:.1}s (limit 120s)",
            share * 100.0,
            out.truth.households.len(),
            window.days().len()
        ),
    );
    (o, Population { out, states })
}

/// Chance-corrected pair agreement from the contingency table.
fn ari(a: &[usize], b: &[usize]) -> f64 {
    let pairs = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut ra: BTreeMap<usize, u64> = BTreeMap::new();
    let mut rb: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sa: f64 = ra.values().map(|&n| pairs(n)).sum();
    let sb: f64 = rb.values().map(|&n| pairs(n)).sum();
    let expected = sa * sb / pairs(a.len() as u64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        1.0
    } else {
        (index - expected) / (max - expected)
    }
}

fn cluster_recovery(pop: &Population) -> Outcome {
    let geo = household_geo(&pop.out.events);
    let codes = CategoryCodes::fit(geo.values());
    let profiles: Vec<_> = pop.states.values().map(frequency_profile).collect();
    let vectors: Vec<_> = profiles.iter().map(|p| build_cluster_vector(p, &geo[&p.household], &codes)).collect();
    let points = vectors_matrix(&vectors);
    let ks: Vec<usize> = (1..=10).collect();
    let sel = select_k(&points, &ks, &KMeansParams::default(), DEFAULT_MIN_BEND).unwrap();
    let planted: Vec<usize> = profiles.iter().map(|p| pop.out.truth.persona_of(&p.household).unwrap() as usize).collect();
    let score = ari(&planted, &sel.labels);
    outcome(
        sel.k == 3 && score >= 0.9,
        format!("k = {} (want 3), ARI {score:.4} (need 0.9) over {} entities", sel.k, profiles.len()),
    )
}

fn workspace(root: &Path, cfg: WorkspaceConfig) -> Workspace {
    std::fs::create_dir_all(root).unwrap();
    Workspace::new(root.to_path_buf(), cfg)
}

fn clustered_vs_pooled(scratch: &Path) -> Outcome {
    let (mut pooled, mut clustered, mut margins) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let mut cfg = WorkspaceConfig { seed, ..Default::default() };
        cfg.models.families = vec![Family::RandomForest];
        cfg.models.grid = GridSpec {
            n_trees: vec![50],
            max_depth: vec![Some(16)],
            ..GridSpec::default()
        };
        cfg.models.grid_rows = 2000;
        let ws = workspace(&scratch.join(format!("seed{seed}")), cfg);
        let synth = Command::Synth(SynthArgs {
            personas: None,
            out: None,
            jitter: None,
        });
        for cmd in [synth, Command::Ingest, Command::Features, Command::Cluster, Command::Train, Command::EvalPooled, Command::EvalClustered] {
            execute(&ws, &cmd).unwrap();
        }
        let r = read_results(&ws.root);
        let p = r.pooled.unwrap().families[0].accuracy;
        let c = r.clustered.unwrap().weighted.accuracy;
        pooled.push(p);
        clustered.push(c);
        margins.push(c - p);
    }
    let margin = margins.iter().sum::<f64>() / 5.0;
    let spread = sample_std(&pooled).max(sample_std(&clustered)).max(sample_std(&margins));
    outcome(
        margin > spread,
        format!(
            "mean margin {margin:.4} vs largest across-seed std {spread:.4}; pooled {pooled:.4?}, clustered {clustered:.4?}"
        ),
    )
}

fn read_results(root: &Path) -> Results {
    let text = std::fs::read_to_string(root.join("reports/results.json")).unwrap();
    serde_json::from_str::<Envelope<Results>>(&text).unwrap().body
}

fn run_binary(root: &Path, threads: usize) -> Duration {
    std::fs::create_dir_all(root).unwrap();
    let t = Instant::now();
    let out = Process::new(env!("CARGO_BIN_EXE_lumirec"))
        .args(["--workspace", root.to_str().unwrap(), "--threads", &threads.to_string(), "all"])
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    let elapsed = t.elapsed();
    assert!(out.status.success(), "pipeline failed: {}", String::from_utf8_lossy(&out.stderr));
    elapsed
}

fn coldstart_shape(r: &Results) -> Outcome {
    let (Some(plain), Some(clus)) = (&r.coldstart, &r.coldstart_clustered) else {
        return outcome(false, "cold-start sections missing".into());
    };
    let complete = |rep: &lumirec_core::eval::ColdStartReport| {
        rep.scenarios.len() == 3 && rep.iterations.len() == 60
    };
    let stds: Vec<f64> = plain.scenarios.iter().map(|s| s.independent.std).collect();
    let decreasing = stds.windows(2).all(|w| w[1] < w[0]);
    let mean = |rep: &lumirec_core::eval::ColdStartReport| {
        rep.iterations.iter().map(|i| i.independent).sum::<f64>() / rep.iterations.len() as f64
    };
    let (mu, mc) = (mean(plain), mean(clus));
    let means: Vec<MeanStd> = plain.scenarios.iter().map(|s| s.independent).collect();
    outcome(
        complete(plain) && complete(clus) && decreasing && mc >= mu,
        format!(
            "3x20 complete: {}; unclustered independent std by scenario {stds:.4?} (strictly decreasing: {decreasing}); \
             means {:.4?}; clustered mean {mc:.4} vs unclustered {mu:.4}",
            complete(plain) && complete(clus),
            means.iter().map(|m| m.mean).collect::<Vec<_>>()
        ),
    )
}

fn classifier_sanity(root: &Path, r: &Results) -> Outcome {
    let floor = 1.0 - 0.1 - 0.05;
    let Some(pooled) = &r.pooled else {
        return outcome(false, "pooled section missing".into());
    };
    let accs: Vec<(Family, f64)> = pooled.families.iter().map(|f| (f.family, f.accuracy)).collect();
    let all_families = Family::ALL.iter().all(|f| accs.iter().any(|a| a.0 == *f));
    let accurate = all_families && accs.iter().all(|a| a.1 >= floor);

    let cfg = WorkspaceConfig::default();
    let ws = Workspace::new(root.to_path_buf(), cfg);
    let mut losses: Vec<Vec<f64>> = Vec::new();
    if let TrainedModel::GradientBoost(m) = load_model(&ws, Family::GradientBoost).unwrap().model {
        losses.push(m.train_loss);
    }
    let (_, data) = load_features(&ws).unwrap();
    let rows: Vec<usize> = (0..data.len()).step_by(data.len() / 3000).collect();
    let sample = data.subset(&rows);
    let mut noisy = sample.clone();
    let mut r = rng(808);
    for y in noisy.y.iter_mut() {
        if r.random::<f64>() < 0.5 {
            *y = r.random_range(0..9);
        }
    }
    for (fixture, depth, lr) in [(&sample, 2, 0.1), (&sample, 4, 0.3), (&sample, 6, 1.0), (&noisy, 4, 0.3), (&noisy, 8, 1.0)] {
        let spec = ModelSpec::GradientBoost {
            n_trees: 40,
            max_depth: Some(depth),
            learning_rate: lr,
            seed: 5,
        };
        if let TrainedModel::GradientBoost(m) = fit(&spec, fixture).unwrap() {
            losses.push(m.train_loss);
        }
    }
    let monotone = losses.len() == 6 && losses.iter().all(|l| l.windows(2).all(|w| w[1] <= w[0]));
    outcome(
        accurate && monotone,
        format!(
            "test accuracy {} (need {floor:.2} each); GBT loss non-increasing on {}/6 fixtures",
            accs.iter().map(|(f, a)| format!("{} {a:.4}", f.as_str())).collect::<Vec<_>>().join(", "),
            losses.iter().filter(|l| l.windows(2).all(|w| w[1] <= w[0])).count()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |id, name, o: Outcome| {
        announce(id, name, &o);
        results.push((id, name, o));
    };

    record(1, "metrics oracle", metrics_oracle());
    record(2, "weighted aggregation arithmetic", published_arithmetic());
    record(3, "binary balanced-accuracy equivalence", binary_equivalence());
    let (o, pop) = routine_recovery();
    record(4, "routine recovery", o);
    record(5, "cluster recovery", cluster_recovery(&pop));
    drop(pop);
    record(6, "clustered beats pooled", clustered_vs_pooled(&scratch.path().join("seeds")));

    let (a, b) = (scratch.path().join("run1"), scratch.path().join("run2"));
    let first = run_binary(&a, 1);
    let second = run_binary(&b, 4);
    let ra = read_results(&a);
    record(7, "cold-start shape and direction", coldstart_shape(&ra));
    record(8, "classifier sanity", classifier_sanity(&a, &ra));
    let same = std::fs::read(a.join("reports/results.json")).unwrap() == std::fs::read(b.join("reports/results.json")).unwrap();
    record(
        9,
        "determinism across thread counts",
        outcome(same, format!("results.json byte-identical for --threads 1 and 4: {same}")),
    );
    let mins = first.as_secs_f64() / 60.0;
    record(
        10,
        "full pipeline runtime",
        outcome(
            mins < 15.0,
            format!("default pipeline {mins:.1} min (limit 15), second run {:.1} min", second.as_secs_f64() / 60.0),
        ),
    );

    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| format!("{} {}", r.0, r.1)).collect();
    assert!(failed.is_empty(), "failed criteria: {}", failed.join("; "));
}
