//! Fixtures shared by the benchmarks.

use crystalnet::elementdata::default_table;
use crystalnet::{build_graph, featurize, AtomicStructure, FeaturizedAtoms, GraphNodeFeaturization, GraphOptions};
use nalgebra::{Matrix3, Vector3};

/// Rock-salt NaCl with `n × n × n` conventional cells (8 n³ atoms).
pub fn rock_salt(n: usize, a: f64) -> AtomicStructure {
    let basis = [
        ("Na", [0.0, 0.0, 0.0]),
        ("Na", [0.5, 0.5, 0.0]),
        ("Na", [0.5, 0.0, 0.5]),
        ("Na", [0.0, 0.5, 0.5]),
        ("Cl", [0.5, 0.0, 0.0]),
        ("Cl", [0.0, 0.5, 0.0]),
        ("Cl", [0.0, 0.0, 0.5]),
        ("Cl", [0.5, 0.5, 0.5]),
    ];
    let mut species = Vec::new();
    let mut positions = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for (sym, f) in basis {
                    species.push(sym.to_string());
                    positions.push(Vector3::new(i as f64 + f[0], j as f64 + f[1], k as f64 + f[2]) * a);
                }
            }
        }
    }
    let cell = Matrix3::identity() * (a * n as f64);
    AtomicStructure::new(species, positions, Some(cell), [true; 3]).expect("valid supercell")
}

pub fn scheme() -> GraphNodeFeaturization {
    GraphNodeFeaturization::with_defaults(&["block", "group", "row", "electronegativity"], default_table())
        .expect("bundled features")
}

/// Featurized rock-salt supercells of sizes 1 and 2 with dummy targets.
pub fn batch(cutoff: f64) -> Vec<(FeaturizedAtoms, f64)> {
    let scheme = scheme();
    (1..=2)
        .map(|n| {
            let g = build_graph(&rock_salt(n, 5.64), &GraphOptions::with_cutoff(cutoff)).expect("graph");
            (featurize(&g, &scheme, default_table()).expect("features"), n as f64)
        })
        .collect()
}
