#![allow(dead_code)]
pub mod dd;

use std::path::PathBuf;

use crystalnet::elementdata::default_table;
use crystalnet::{
    build_graph, featurize, read_structure, FeaturizationConfig, FeaturizedAtoms, GraphNodeFeaturization, GraphOptions,
    WeightScheme,
};

/// Bundled data of the core crate; this module is also compiled into the
/// CLI crate's acceptance suite.
pub fn data_dir() -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    if here.join("data").is_dir() {
        here.join("data")
    } else {
        here.join("../core/data")
    }
}

pub const SYNTHETIC_IDS: [&str; 5] = ["h2", "water", "n3", "c4", "ch4"];

pub fn synthetic_options() -> GraphOptions {
    GraphOptions { cutoff: 1.2, weight_scheme: WeightScheme::Unit, normalize_weights: false, ..GraphOptions::default() }
}

/// The five synthetic molecules with target = mean node degree, counted
/// directly from pairwise distances (independent of the graph builder).
pub fn synthetic_dataset() -> Vec<(FeaturizedAtoms, f64)> {
    let dir = data_dir().join("synthetic");
    let cfg =
        FeaturizationConfig::from_json(&std::fs::read_to_string(dir.join("featurization.json")).unwrap()).unwrap();
    let scheme = GraphNodeFeaturization::from_config(&cfg, Some(default_table())).unwrap();
    SYNTHETIC_IDS
        .iter()
        .map(|id| {
            let s = read_structure(dir.join(format!("{id}.xyz"))).unwrap();
            let n = s.len();
            let mut bonds = 0usize;
            for i in 0..n {
                for j in 0..n {
                    if i != j && (s.position(i) - s.position(j)).norm() <= 1.2 {
                        bonds += 1;
                    }
                }
            }
            let target = bonds as f64 / n as f64;
            let g = build_graph(&s, &synthetic_options()).unwrap().with_source_id(*id);
            (featurize(&g, &scheme, default_table()).unwrap(), target)
        })
        .collect()
}
