use rayon::prelude::*;

use lumirec_core::clustering::{assign_cluster, build_cluster_vector, cdf_export, select_k, vectors_matrix};
use lumirec_core::routine::{frequency_profile, FrequencyProfile};
use lumirec_core::seed::derive;
use lumirec_core::{Geo, KMeansParams};

use super::{clusters_path, codes_path, entity_label, features_path, load_codes, load_states, state_path, ClustersBody, KInertia};
use crate::error::CliError;
use crate::workspace::Workspace;

pub fn run(ws: &Workspace) -> Result<(), CliError> {
    ws.require("features", features_path(ws))?;
    let codes = load_codes(ws)?;
    let loaded = load_states(ws)?;
    let active: Vec<_> = loaded.states.values().filter(|s| s.total_on_minutes() > 0).collect();
    if active.is_empty() {
        return Err(CliError::Validation("no entity has any usage to cluster".into()));
    }
    let profiles: Vec<FrequencyProfile> = active.par_iter().map(|s| frequency_profile(s)).collect();
    let unknown = Geo::default();
    let vectors: Vec<_> = profiles
        .iter()
        .map(|p| build_cluster_vector(p, loaded.geo.get(&p.household).unwrap_or(&unknown), &codes))
        .collect();
    let points = vectors_matrix(&vectors);

    let c = &ws.config.clustering;
    let k_max = c.k_max.min(points.rows());
    if c.k_min > k_max {
        return Err(CliError::Validation(format!(
            "k range starts at {} but there are only {} entities",
            c.k_min,
            points.rows()
        )));
    }
    let ks: Vec<usize> = (c.k_min..=k_max).collect();
    let params = KMeansParams {
        n_init: c.n_init,
        max_iter: c.max_iter,
        tol: c.tol,
        seed: derive(ws.config.seed, "kmeans", 0),
    };
    let sel = select_k(&points, &ks, &params, c.min_bend)?;
    let assigned = (0..points.rows())
        .map(|i| assign_cluster(&sel.model, points.row(i)))
        .collect::<Result<Vec<_>, _>>()?;
    if assigned != sel.labels {
        return Err(CliError::Internal("nearest-centroid assignment disagrees with the fit".into()));
    }

    let mut populations = vec![0; sel.k];
    for &l in &assigned {
        populations[l] += 1;
    }
    let body = ClustersBody {
        k: sel.k,
        fallback: sel.fallback,
        inertia: sel.model.inertia,
        iterations_run: sel.model.iterations_run,
        inertia_curve: sel.curve.iter().map(|&(k, inertia)| KInertia { k, inertia }).collect(),
        centroids: sel.model.centroids.clone(),
        entities: profiles
            .iter()
            .zip(&assigned)
            .map(|(p, &l)| (entity_label(&p.household, p.room), l))
            .collect(),
        populations,
    };
    let out = clusters_path(ws);
    ws.write_json(&out, &body)?;

    let cdf = ws.config.paths.clusters.join("cdf.csv");
    let mut w = ws.csv_writer(&cdf)?;
    w.write_record(["household", "room", "cluster", "x", "cdf"])?;
    for r in cdf_export(&profiles, &assigned) {
        w.write_record([r.household, r.room.to_string(), r.cluster.to_string(), format!("{:.4}", r.x), format!("{:.6}", r.cdf)])?;
    }
    w.flush()?;
    log::info!("cluster: k = {} over {} entities, populations {:?}", sel.k, points.rows(), body.populations);
    ws.finish("cluster", &[&state_path(ws), &codes_path(ws)], &[&out, &cdf])
}
